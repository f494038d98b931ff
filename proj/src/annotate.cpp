#include <algorithm>
#include <cmath>

#include "animpref/pipeline.hpp"

namespace animpref::pipeline {

double total_variation(const codec::VideoTensor& v) {
  const int T = v.frames(), H = v.height(), W = v.width(), C = v.channels();
  double sum = 0;
  std::size_t n = 0;
  for (int t = 0; t < T; ++t)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        for (int c = 0; c < C; ++c) {
          const double here = v.at(t, y, x, c);
          if (t + 1 < T) sum += std::abs(v.at(t + 1, y, x, c) - here), ++n;
          if (y + 1 < H) sum += std::abs(v.at(t, y + 1, x, c) - here), ++n;
          if (x + 1 < W) sum += std::abs(v.at(t, y, x + 1, c) - here), ++n;
        }
  return n == 0 ? 0.0 : sum / double(n);
}

double align_score(const SynthTask& task, const codec::VideoTensor& generated, const AnnotatorConfig& cfg) {
  const auto intensity = mouth_intensity(generated, layout_for(task.height, task.width));
  const double r = pearson(intensity, task.aperture);
  const double s = prefs::kLikertMin + (prefs::kLikertMax - prefs::kLikertMin) * (r - cfg.align_floor) / (1.0 - cfg.align_floor);
  return std::clamp(s, prefs::kLikertMin, prefs::kLikertMax);
}

double fidelity_score(const codec::VideoTensor& generated, const codec::VideoTensor& reference, const AnnotatorConfig& cfg) {
  if (!generated.data.same_shape(reference.data)) throw Error(ErrorKind::kShapeMismatch, "fidelity_score: shapes differ");
  const double excess = std::max(0.0, total_variation(generated) - total_variation(reference));
  double mse = 0;
  for (std::size_t i = 0; i < generated.data.data.size(); ++i) {
    const double e = generated.data.data[i] - reference.data.data[i];
    mse += e * e;
  }
  mse /= double(std::max<std::size_t>(1, generated.data.data.size()));
  const double s = 1.0 + 2.0 * std::exp(-excess / cfg.roughness_scale) + 2.0 * std::exp(-mse / cfg.recon_scale);
  return std::clamp(s, prefs::kLikertMin, prefs::kLikertMax);
}

prefs::CandidateScore synthetic_annotator(const SynthTask& task, const codec::VideoTensor& generated,
                                          const std::string& sample_id, const codec::VideoTensor* reference,
                                          const AnnotatorConfig& cfg) {
  if (!generated.data.same_shape(task.video.data)) throw Error(ErrorKind::kShapeMismatch, "synthetic_annotator: shape");
  prefs::CandidateScore s;
  s.sample_id = sample_id;
  s.r_align = align_score(task, generated, cfg);
  s.r_fidelity = fidelity_score(generated, reference != nullptr ? *reference : task.video, cfg);
  return s;
}

}  // namespace animpref::pipeline
