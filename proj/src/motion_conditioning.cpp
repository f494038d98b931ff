#include "animpref/motion_conditioning.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "animpref/tensor_io.hpp"

namespace animpref::motion {

namespace {

void require_divisible(int value, int by, ErrorKind kind, const char* what) {
  if (by <= 0 || value % by != 0) {
    std::ostringstream os;
    os << what << ": " << value << " is not divisible by " << by;
    throw Error(kind, os.str());
  }
}

// Amplitude of the component at `freq` Hz over samples [begin, end).
double band_amplitude(const std::vector<double>& x, std::size_t begin, std::size_t end, double freq, double sr) {
  const double w = 2.0 * std::numbers::pi * freq / sr;
  double re = 0, im = 0;
  for (std::size_t i = begin; i < end; ++i) {
    re += x[i] * std::cos(w * double(i));
    im -= x[i] * std::sin(w * double(i));
  }
  const double n = double(end - begin);
  return 2.0 * std::sqrt(re * re + im * im) / n;
}

void write_manifest(const std::filesystem::path& path, const std::string& modality, double frame_rate,
                    const std::vector<int>& shape) {
  nlohmann::ordered_json j;
  j["modality"] = modality;
  j["frame_rate"] = frame_rate;
  j["shape"] = shape;
  std::ofstream os(path.string() + ".json");
  if (!os) throw Error(ErrorKind::kIo, "cannot write manifest for " + path.string());
  os << j.dump(2) << '\n';
}

nlohmann::json read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path.string() + ".json");
  if (!is) throw Error(ErrorKind::kIo, "missing manifest " + path.string() + ".json");
  return nlohmann::json::parse(is);
}

}  // namespace

const char* to_string(Modality m) { return m == Modality::kAudio ? "audio" : "skeleton"; }

Modality modality_from_string(const std::string& s) {
  if (s == "audio") return Modality::kAudio;
  if (s == "skeleton") return Modality::kSkeleton;
  throw Error(ErrorKind::kInvalidConfig, "unknown modality: " + s);
}

MotionCondition encode_audio(const AudioWaveform& wave, int n_sub, int n_features, int frames) {
  if (n_sub < 1 || n_features < 2) throw Error(ErrorKind::kOutOfRange, "encode_audio: need N_a >= 1 and d_a >= 2");
  if (wave.sample_rate <= 0 || wave.frame_rate <= 0) throw Error(ErrorKind::kOutOfRange, "encode_audio: rates must be positive");
  const double spf = wave.samples_per_frame();
  const int available = int(std::floor(double(wave.samples.size()) / spf + 1e-9));
  if (frames == 0) frames = available;
  if (frames < 1 || frames > available) {
    std::ostringstream os;
    os << "encode_audio: " << wave.samples.size() << " samples cover " << available << " frames, " << frames
       << " requested";
    throw Error(ErrorKind::kWaveTooShort, os.str());
  }
  // Band centers log-spaced between sr/64 and 0.4 sr.
  const int n_bands = n_features - 2;
  std::vector<double> centers(n_bands);
  const double lo = wave.sample_rate / 64.0, hi = 0.4 * wave.sample_rate;
  for (int b = 0; b < n_bands; ++b) {
    const double f = n_bands == 1 ? 0.0 : double(b) / double(n_bands - 1);
    centers[b] = lo * std::pow(hi / lo, f);
  }

  MotionCondition out;
  out.modality = Modality::kAudio;
  out.frames = frames;
  out.tokens = n_sub;
  out.frame_rate = wave.frame_rate;
  out.data = Mat::Zero(std::size_t(frames) * n_sub, n_features);
  double previous_rms = 0.0;
  bool first = true;
  for (int t = 0; t < frames; ++t) {
    for (int u = 0; u < n_sub; ++u) {
      const auto begin = std::size_t(std::floor((t + double(u) / n_sub) * spf + 1e-9));
      auto end = std::size_t(std::floor((t + double(u + 1) / n_sub) * spf + 1e-9));
      if (end <= begin) end = begin + 1;
      double energy = 0;
      for (std::size_t i = begin; i < end; ++i) energy += wave.samples[i] * wave.samples[i];
      const double rms = std::sqrt(energy / double(end - begin));
      auto row = out.data.row(std::size_t(t) * n_sub + u);
      row(0) = rms;
      row(1) = first ? 0.0 : rms - previous_rms;
      for (int b = 0; b < n_bands; ++b) row(2 + b) = band_amplitude(wave.samples, begin, end, centers[b], wave.sample_rate);
      previous_rms = rms;
      first = false;
    }
  }
  return out;
}

Mat rasterize_skeleton(const SkeletonSequence& skel, int grid_h, int grid_w) {
  if (grid_h < 1 || grid_w < 1) throw Error(ErrorKind::kOutOfRange, "rasterize_skeleton: grid must be positive");
  const int cells = grid_h * grid_w;
  Mat maps = Mat::Zero(std::size_t(skel.frames) * cells, skel.joints);
  for (int t = 0; t < skel.frames; ++t)
    for (int j = 0; j < skel.joints; ++j) {
      const double conf = skel.at(t, j, 2);
      if (conf <= 0.0) continue;
      // Continuous cell coordinates; cell (r, c) has its center at (r, c).
      const double cy = skel.at(t, j, 1) * grid_h - 0.5;
      const double cx = skel.at(t, j, 0) * grid_w - 0.5;
      for (int r = 0; r < grid_h; ++r)
        for (int c = 0; c < grid_w; ++c) {
          const double d2 = (r - cy) * (r - cy) + (c - cx) * (c - cx);
          maps(std::size_t(t) * cells + r * grid_w + c, j) += conf * std::exp(-0.5 * d2);
        }
    }
  return maps;
}

MotionCondition encode_skeleton(const SkeletonSequence& skel, int grid_h, int grid_w, const Mat& joint_projection) {
  if (joint_projection.rows() != skel.joints) throw Error(ErrorKind::kShapeMismatch, "encode_skeleton: projection rows != J");
  MotionCondition out;
  out.modality = Modality::kSkeleton;
  out.frames = skel.frames;
  out.tokens = grid_h * grid_w;
  out.frame_rate = skel.frame_rate;
  out.data = rasterize_skeleton(skel, grid_h, grid_w) * joint_projection;
  return out;
}

ReshapedCondition reshape_temporal(const MotionCondition& cond, int rho) {
  require_divisible(cond.frames, rho, ErrorKind::kIndivisible, "reshape_temporal: T");
  ReshapedCondition out;
  out.modality = cond.modality;
  out.steps = cond.frames / rho;
  out.tokens = rho * cond.tokens;
  out.rho = rho;
  out.data.resize(cond.data.rows(), cond.data.cols());
  for (int t = 0; t < cond.frames; ++t)
    for (int u = 0; u < cond.tokens; ++u) {
      const int step = t / rho, slot = (t % rho) * cond.tokens + u;
      out.data.row(std::size_t(step) * out.tokens + slot) = cond.data.row(std::size_t(t) * cond.tokens + u);
    }
  return out;
}

MotionCondition inverse_reshape(const ReshapedCondition& cond, int rho) {
  require_divisible(cond.tokens, rho, ErrorKind::kIndivisible, "inverse_reshape: channel rows");
  MotionCondition out;
  out.modality = cond.modality;
  out.frames = cond.steps * rho;
  out.tokens = cond.tokens / rho;
  out.data.resize(cond.data.rows(), cond.data.cols());
  for (int step = 0; step < cond.steps; ++step)
    for (int slot = 0; slot < cond.tokens; ++slot) {
      const int t = step * rho + slot / out.tokens, u = slot % out.tokens;
      out.data.row(std::size_t(t) * out.tokens + u) = cond.data.row(std::size_t(step) * cond.tokens + slot);
    }
  return out;
}

MotionEmbedding project(const ReshapedCondition& cond, const Projection& proj) {
  if (proj.weight.rows() != cond.channels() || proj.bias.rows() != 1 || proj.bias.cols() != proj.weight.cols()) {
    throw Error(ErrorKind::kShapeMismatch, "project: W_m must be (d_m, d) and b_m (1, d)");
  }
  MotionEmbedding out;
  out.steps = cond.steps;
  out.tokens = cond.tokens;
  out.data = (cond.data * proj.weight).rowwise() + proj.bias.row(0);
  return out;
}

FuseResult fuse_detailed(const codec::LatentVideo& z, const std::vector<MotionEmbedding>& embeddings,
                         const FusionParams& params) {
  const int d = z.d;
  if (params.w_q.rows() != d || params.w_q.cols() != d || params.w_k.rows() != d || params.w_k.cols() != d ||
      params.w_v.rows() != d || params.w_v.cols() != d) {
    throw Error(ErrorKind::kShapeMismatch, "fuse: W_Q, W_K, W_V must be (d, d)");
  }
  int keys = 0;
  for (const auto& e : embeddings) {
    if (e.steps != z.t) {
      std::ostringstream os;
      os << "fuse: embedding has " << e.steps << " steps, latent has " << z.t;
      throw Error(ErrorKind::kTemporalMismatch, os.str());
    }
    if (e.width() != d) throw Error(ErrorKind::kShapeMismatch, "fuse: embedding width differs from latent channels");
    keys += e.tokens;
  }
  FuseResult out{z, {}};
  if (keys == 0) return out;
  const int per_step = z.tokens_per_step();
  const double scale = 1.0 / std::sqrt(double(d));
  for (int step = 0; step < z.t; ++step) {
    Mat h(keys, d);
    int r = 0;
    for (const auto& e : embeddings) {
      h.middleRows(r, e.tokens) = e.data.middleRows(std::size_t(step) * e.tokens, e.tokens);
      r += e.tokens;
    }
    const Mat q = z.tokens.middleRows(std::size_t(step) * per_step, per_step) * params.w_q;
    const Mat k = h * params.w_k;
    const Mat v = h * params.w_v;
    Mat a = (q * k.transpose()) * scale;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      a.row(i).array() = (a.row(i).array() - a.row(i).maxCoeff()).exp();
      a.row(i) /= a.row(i).sum();
    }
    out.fused.tokens.middleRows(std::size_t(step) * per_step, per_step) += a * v;
    out.attention.push_back(std::move(a));
  }
  return out;
}

codec::LatentVideo fuse(const codec::LatentVideo& z, const std::vector<MotionEmbedding>& embeddings,
                        const FusionParams& params) {
  return fuse_detailed(z, embeddings, params).fused;
}

MotionCondition subsample_baseline(const MotionCondition& cond, int rho) {
  require_divisible(cond.frames, rho, ErrorKind::kIndivisible, "subsample_baseline: T");
  MotionCondition out;
  out.modality = cond.modality;
  out.frames = cond.frames / rho;
  out.tokens = cond.tokens;
  out.frame_rate = cond.frame_rate / rho;
  out.data = Mat::Zero(std::size_t(out.frames) * out.tokens, cond.channels());
  for (int t = 0; t < cond.frames; ++t)
    out.data.middleRows(std::size_t(t / rho) * out.tokens, out.tokens) +=
        cond.data.middleRows(std::size_t(t) * cond.tokens, cond.tokens);
  out.data /= double(rho);
  return out;
}

ReshapedCondition partial_expand(const MotionCondition& cond, int rho, int k) {
  require_divisible(cond.frames, rho, ErrorKind::kIndivisible, "partial_expand: T");
  require_divisible(rho, k, ErrorKind::kIndivisible, "partial_expand: rho");
  ReshapedCondition out = reshape_temporal(subsample_baseline(cond, rho / k), k);
  return out;
}

const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::kFull: return "full";
    case Strategy::kPartialK2: return "partial_k2";
    case Strategy::kSubsample: return "subsample";
  }
  return "unknown";
}

Strategy strategy_from_string(const std::string& s) {
  if (s == "full") return Strategy::kFull;
  if (s == "partial_k2") return Strategy::kPartialK2;
  if (s == "subsample") return Strategy::kSubsample;
  throw Error(ErrorKind::kInvalidConfig, "unknown conditioning strategy: " + s);
}

int tokens_per_step(Strategy s, int rho, int d_m_tokens) {
  switch (s) {
    case Strategy::kFull: return rho * d_m_tokens;
    case Strategy::kPartialK2: return 2 * d_m_tokens;
    case Strategy::kSubsample: return d_m_tokens;
  }
  return 0;
}

ReshapedCondition apply_strategy(const MotionCondition& cond, int rho, Strategy s) {
  switch (s) {
    case Strategy::kFull: return reshape_temporal(cond, rho);
    case Strategy::kPartialK2: return partial_expand(cond, rho, 2);
    case Strategy::kSubsample: return reshape_temporal(subsample_baseline(cond, rho), 1);
  }
  throw Error(ErrorKind::kInvalidConfig, "apply_strategy: unknown strategy");
}

void save_condition(const std::filesystem::path& path, const MotionCondition& cond) {
  const std::vector<int> shape{cond.frames, cond.tokens, cond.channels()};
  write_ten(path, shape, std::vector<double>(cond.data.data(), cond.data.data() + cond.data.size()));
  write_manifest(path, to_string(cond.modality), cond.frame_rate, shape);
}

MotionCondition load_condition(const std::filesystem::path& path) {
  const auto manifest = read_manifest(path);
  TenData t = read_ten(path);
  if (t.shape.size() != 3) throw Error(ErrorKind::kShapeMismatch, path.string() + ": condition must be rank 3");
  MotionCondition c;
  c.modality = modality_from_string(manifest.at("modality").get<std::string>());
  c.frame_rate = manifest.at("frame_rate").get<double>();
  c.frames = t.shape[0];
  c.tokens = t.shape[1];
  c.data.resize(std::size_t(t.shape[0]) * t.shape[1], t.shape[2]);
  std::copy(t.values.begin(), t.values.end(), c.data.data());
  return c;
}

void save_skeleton(const std::filesystem::path& path, const SkeletonSequence& skel) {
  const std::vector<int> shape{skel.frames, skel.joints, 3};
  write_ten(path, shape, skel.keypoints);
  write_manifest(path, "skeleton", skel.frame_rate, shape);
}

SkeletonSequence load_skeleton(const std::filesystem::path& path) {
  const auto manifest = read_manifest(path);
  TenData t = read_ten(path);
  if (t.shape.size() != 3 || t.shape[2] != 3) throw Error(ErrorKind::kShapeMismatch, path.string() + ": skeleton must be (T, J, 3)");
  SkeletonSequence s;
  s.frames = t.shape[0];
  s.joints = t.shape[1];
  s.frame_rate = manifest.at("frame_rate").get<double>();
  s.keypoints = std::move(t.values);
  return s;
}

}  // namespace animpref::motion
