#include <algorithm>
#include <cmath>
#include <numeric>

#include "animpref/pipeline.hpp"

namespace animpref::pipeline {

namespace {

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

double se_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / double(v.size() - 1) / double(v.size()));
}

}  // namespace

TaskEval evaluate_video(const SynthTask& task, const codec::VideoTensor& video, const codec::VideoTensor* reference,
                        const AnnotatorConfig& annot) {
  if (!video.data.same_shape(task.video.data)) throw Error(ErrorKind::kShapeMismatch, "evaluate: video shape differs from task");
  const FaceLayout layout = layout_for(task.height, task.width);
  TaskEval e;
  e.id = task.id;
  e.sync_corr = pearson(mouth_intensity(video, layout), task.aperture);
  e.motion_var = motion_variance(detect_hand(video, layout));
  double mse = 0;
  for (std::size_t i = 0; i < video.data.data.size(); ++i) {
    const double d = video.data.data[i] - task.video.data.data[i];
    mse += d * d;
  }
  e.recon_mse = mse / double(video.data.data.size());
  // Pixel range is [-1, 1], so the peak-to-peak signal is 2.
  e.psnr = e.recon_mse > 0 ? 10.0 * std::log10(4.0 / e.recon_mse) : 99.0;
  const auto score = synthetic_annotator(task, video, task.id, reference, annot);
  e.r_align = score.r_align;
  e.r_fidelity = score.r_fidelity;
  return e;
}

EvalReport aggregate(std::vector<TaskEval> tasks) {
  std::sort(tasks.begin(), tasks.end(), [](const TaskEval& a, const TaskEval& b) { return a.id < b.id; });
  EvalReport r;
  std::vector<double> sync, mv, mse, psnr, ra, rf;
  for (const auto& t : tasks) {
    sync.push_back(t.sync_corr);
    mv.push_back(t.motion_var);
    mse.push_back(t.recon_mse);
    psnr.push_back(t.psnr);
    ra.push_back(t.r_align);
    rf.push_back(t.r_fidelity);
  }
  r.sync_corr = mean_of(sync);
  r.motion_var = mean_of(mv);
  r.recon_mse = mean_of(mse);
  r.psnr = mean_of(psnr);
  r.r_align = mean_of(ra);
  r.r_fidelity = mean_of(rf);
  r.sync_corr_se = se_of(sync);
  r.r_align_se = se_of(ra);
  r.motion_var_se = se_of(mv);
  r.tasks = std::move(tasks);
  return r;
}

EvalReport evaluate(const models::ModelConfig& cfg, const models::DenoiserParams& params, const LatentSpace& space,
                    const std::vector<SynthTask>& tasks, const std::vector<models::Conditioning>& conditions,
                    const SampleConfig& sample, const AnnotatorConfig& annot) {
  if (tasks.empty()) throw Error(ErrorKind::kOutOfRange, "evaluate: no tasks");
  if (conditions.size() != tasks.size()) throw Error(ErrorKind::kShapeMismatch, "evaluate: one conditioning per task");
  std::vector<TaskEval> out(tasks.size());
  parallel_for(tasks.size(), [&](std::size_t i) {
    const Mat z = sample_latent(cfg, params, conditions[i], cfg.tokens(), sample.steps, mix_seed(sample.seed, tasks[i].seed));
    const codec::VideoTensor ref = space.round_trip(tasks[i].video);
    out[i] = evaluate_video(tasks[i], space.decode(z), &ref, annot);
  });
  return aggregate(std::move(out));
}

nlohmann::ordered_json to_json(const EvalReport& r, bool per_task) {
  nlohmann::ordered_json j;
  j["n_tasks"] = r.tasks.size();
  j["sync_corr"] = r.sync_corr;
  j["sync_corr_se"] = r.sync_corr_se;
  j["motion_var"] = r.motion_var;
  j["motion_var_se"] = r.motion_var_se;
  j["recon_mse"] = r.recon_mse;
  j["psnr"] = r.psnr;
  j["r_align"] = r.r_align;
  j["r_align_se"] = r.r_align_se;
  j["r_fidelity"] = r.r_fidelity;
  if (per_task) {
    j["tasks"] = nlohmann::ordered_json::array();
    for (const auto& t : r.tasks) {
      nlohmann::ordered_json e;
      e["id"] = t.id;
      e["sync_corr"] = t.sync_corr;
      e["motion_var"] = t.motion_var;
      e["recon_mse"] = t.recon_mse;
      e["psnr"] = t.psnr;
      e["r_align"] = t.r_align;
      e["r_fidelity"] = t.r_fidelity;
      j["tasks"].push_back(e);
    }
  }
  return j;
}

PairedDiff paired_difference(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw Error(ErrorKind::kShapeMismatch, "paired_difference: sizes differ");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return {mean_of(d), se_of(d)};
}

// ----------------------------------------------------------------- scoring

codec::VideoTensor shuffle_frames(const codec::VideoTensor& video, std::uint64_t seed) {
  std::vector<int> perm(std::size_t(video.frames()));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  codec::VideoTensor out = video;
  const std::size_t frame = std::size_t(video.height()) * video.width() * video.channels();
  for (int t = 0; t < video.frames(); ++t)
    std::copy_n(video.data.data.begin() + std::ptrdiff_t(std::size_t(perm[std::size_t(t)]) * frame), frame,
                out.data.data.begin() + std::ptrdiff_t(std::size_t(t) * frame));
  return out;
}

codec::VideoTensor smooth_frames(const codec::VideoTensor& video, int radius) {
  codec::VideoTensor out = video;
  const std::size_t frame = std::size_t(video.height()) * video.width() * video.channels();
  for (int t = 0; t < video.frames(); ++t) {
    const int lo = std::max(0, t - radius), hi = std::min(video.frames() - 1, t + radius);
    for (std::size_t k = 0; k < frame; ++k) {
      double s = 0;
      for (int u = lo; u <= hi; ++u) s += video.data.data[std::size_t(u) * frame + k];
      out.data.data[std::size_t(t) * frame + k] = s / double(hi - lo + 1);
    }
  }
  return out;
}

std::vector<ScoredTask> score_tasks(const models::ModelConfig& cfg, const models::DenoiserParams& params,
                                    const LatentSpace& space, const std::vector<SynthTask>& tasks,
                                    const std::vector<models::Conditioning>& conditions, const ScoreConfig& score,
                                    const AnnotatorConfig& annot) {
  if (score.candidates_per_task < 1) throw Error(ErrorKind::kOutOfRange, "score: candidates_per_task must be >= 1");
  if (conditions.size() != tasks.size()) throw Error(ErrorKind::kShapeMismatch, "score: one conditioning per task");
  std::vector<ScoredTask> out(tasks.size());
  parallel_for(tasks.size(), [&](std::size_t i) {
    const SynthTask& task = tasks[i];
    const codec::VideoTensor ref = space.round_trip(task.video);
    ScoredTask st;
    st.group.condition_id = task.id;
    const auto add = [&](const std::string& id, const codec::VideoTensor& video, Mat latent) {
      st.group.candidates.push_back(synthetic_annotator(task, video, id, &ref, annot));
      st.latents.emplace(id, std::move(latent));
    };
    codec::VideoTensor first;
    for (int k = 0; k < score.candidates_per_task; ++k) {
      const std::uint64_t seed = mix_seed(mix_seed(score.seed, task.seed), std::uint64_t(k));
      Mat z = sample_latent(cfg, params, conditions[i], cfg.tokens(), score.steps, seed);
      codec::VideoTensor video = space.decode(z);
      if (k == 0) first = video;
      add(task.id + "/s" + std::to_string(k), video, std::move(z));
    }
    if (score.degraded) {
      const codec::VideoTensor shuffled = shuffle_frames(first, mix_seed(task.seed, 0x5EEDull));
      add(task.id + "/shuffle", shuffled, space.encode(shuffled));
      const codec::VideoTensor smoothed = smooth_frames(first, 1);
      add(task.id + "/smooth", smoothed, space.encode(smoothed));
    }
    out[i] = std::move(st);
  });
  return out;
}

}  // namespace animpref::pipeline
