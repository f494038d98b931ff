#include "animpref/toy_models.hpp"

#include <cmath>
#include <sstream>

namespace animpref::models {

namespace {

using ad::Var;

std::string block_name(int i, const char* leaf) { return "blocks." + std::to_string(i) + "." + leaf; }

Mat fan_in(Eigen::Index rows, Eigen::Index cols, Rng& rng) { return randn(rows, cols, rng) / std::sqrt(double(rows)); }

Var multi_head(Var q, Var k, Var v, int heads) {
  const Eigen::Index width = q.cols();
  const Eigen::Index dh = width / heads;
  const double scale = 1.0 / std::sqrt(double(dh));
  if (heads == 1) return ad::matmul(ad::softmax_rows(scale * ad::matmul_nt(q, k)), v);
  std::vector<Var> outs;
  outs.reserve(std::size_t(heads));
  for (int h = 0; h < heads; ++h) {
    Var qh = ad::slice_cols(q, h * dh, dh), kh = ad::slice_cols(k, h * dh, dh), vh = ad::slice_cols(v, h * dh, dh);
    outs.push_back(ad::matmul(ad::softmax_rows(scale * ad::matmul_nt(qh, kh)), vh));
  }
  return ad::hcat(outs);
}

Var transformer_forward(const ModelConfig& cfg, const Bound& p, Var x, double tau, const Conditioning& cond) {
  ad::Graph& g = *x.graph;
  const int n = cfg.tokens();
  if (x.rows() != n || x.cols() != cfg.d) {
    std::ostringstream os;
    os << "forward: expected latent tokens (" << n << ", " << cfg.d << "), got (" << x.rows() << ", " << x.cols() << ")";
    throw Error(ErrorKind::kShapeMismatch, os.str());
  }
  Var h = ad::add_row(ad::matmul(x, p["embed.w"]), p["embed.b"]);
  if (cfg.positional) h = h + p["pos"];
  Var temb = ad::add_row(ad::matmul(g.constant(time_features(tau, cfg.time_features)), p["time.w"]), p["time.b"]);
  h = ad::add_row(h, temb);

  // Motion memory: per latent step, audio rows then skeleton rows.
  const bool has_audio = cfg.use_audio && cond.audio.size() != 0;
  const bool has_skel = cfg.use_skeleton && cond.skeleton.size() != 0;
  const int na = has_audio ? cfg.audio_tokens_per_step() : 0;
  const int ns = has_skel ? cfg.skeleton_tokens_per_step() : 0;
  Var memory{};
  if (has_audio || has_skel) {
    Var ha{}, hs{};
    if (has_audio) {
      if (cond.audio.rows() != cfg.steps * na || cond.audio.cols() != cfg.audio_features)
        throw Error(ErrorKind::kShapeMismatch, "forward: audio conditioning shape");
      ha = ad::add_tiled(ad::add_row(ad::matmul(g.constant(cond.audio), p["motion.audio.w"]), p["motion.audio.b"]),
                         p["motion.audio.pos"]);
    }
    if (has_skel) {
      if (cond.skeleton.rows() != cfg.steps * ns || cond.skeleton.cols() != cfg.joints)
        throw Error(ErrorKind::kShapeMismatch, "forward: skeleton conditioning shape");
      Var feats = ad::matmul(g.constant(cond.skeleton), p["motion.skeleton.enc"]);
      hs = ad::add_tiled(ad::add_row(ad::matmul(feats, p["motion.skeleton.w"]), p["motion.skeleton.b"]),
                         p["motion.skeleton.pos"]);
    }
    if (has_audio && has_skel) {
      std::vector<Var> rows;
      for (int s = 0; s < cfg.steps; ++s) {
        rows.push_back(ad::slice_rows(ha, s * na, na));
        rows.push_back(ad::slice_rows(hs, s * ns, ns));
      }
      memory = ad::vcat(rows);
    } else {
      memory = has_audio ? ha : hs;
    }
  }

  for (int b = 0; b < cfg.n_blocks; ++b) {
    Var a = ad::rms_norm(h, p[block_name(b, "attn_norm")]);
    Var q = ad::matmul(a, p[block_name(b, "attn.q")]);
    Var k = ad::matmul(a, p[block_name(b, "attn.k")]);
    Var v = ad::matmul(a, p[block_name(b, "attn.v")]);
    h = h + ad::matmul(multi_head(q, k, v, cfg.n_heads), p[block_name(b, "attn.o")]);

    if (memory.graph != nullptr) {
      Var c = ad::rms_norm(h, p[block_name(b, "xattn_norm")]);
      h = cross_attend(c, h, memory, p[block_name(b, "xattn.q")], p[block_name(b, "xattn.k")],
                       p[block_name(b, "xattn.v")], cfg.steps, na + ns, cfg.n_heads);
    }

    Var f = ad::rms_norm(h, p[block_name(b, "ff_norm")]);
    f = ad::silu(ad::add_row(ad::matmul(f, p[block_name(b, "ff.w1")]), p[block_name(b, "ff.b1")]));
    h = h + ad::add_row(ad::matmul(f, p[block_name(b, "ff.w2")]), p[block_name(b, "ff.b2")]);
  }
  return ad::add_row(ad::matmul(h, p["unembed.w"]), p["unembed.b"]);
}

Var mlp_forward(const ModelConfig& cfg, const Bound& p, Var x, double tau) {
  ad::Graph& g = *x.graph;
  if (x.cols() != cfg.d) throw Error(ErrorKind::kShapeMismatch, "forward: MLP input width differs from config d");
  const Mat tf = time_features(tau, cfg.time_features);
  Mat tiled = tf.replicate(x.rows(), 1);
  Var h = ad::hcat({x, g.constant(std::move(tiled))});
  h = ad::silu(ad::add_row(ad::matmul(h, p["mlp.in.w"]), p["mlp.in.b"]));
  for (int i = 1; i < cfg.hidden_layers; ++i) {
    const std::string base = "mlp.h" + std::to_string(i);
    h = ad::silu(ad::add_row(ad::matmul(h, p[base + ".w"]), p[base + ".b"]));
  }
  return ad::add_row(ad::matmul(h, p["unembed.w"]), p["unembed.b"]);
}

}  // namespace

const char* to_string(Architecture a) { return a == Architecture::kTransformer ? "transformer" : "mlp"; }

Architecture architecture_from_string(const std::string& s) {
  if (s == "transformer") return Architecture::kTransformer;
  if (s == "mlp") return Architecture::kMlp;
  throw Error(ErrorKind::kInvalidConfig, "unknown architecture: " + s);
}

void ModelConfig::validate() const {
  const auto positive = [](int v, const char* what) {
    if (v <= 0) throw Error(ErrorKind::kInvalidConfig, std::string("model.") + what + " must be positive");
  };
  positive(d, "d");
  positive(time_features, "time_features");
  if (time_features % 2 != 0) throw Error(ErrorKind::kInvalidConfig, "model.time_features must be even");
  if (architecture == Architecture::kMlp) {
    positive(hidden, "hidden");
    positive(hidden_layers, "hidden_layers");
    return;
  }
  positive(n_blocks, "n_blocks");
  positive(n_heads, "n_heads");
  positive(d_ff, "d_ff");
  positive(steps, "steps");
  positive(grid_h, "grid_h");
  positive(grid_w, "grid_w");
  positive(rho, "rho");
  if (d % n_heads != 0) throw Error(ErrorKind::kInvalidConfig, "model.d must be divisible by model.n_heads");
  if (conditioning == motion::Strategy::kPartialK2 && rho % 2 != 0)
    throw Error(ErrorKind::kInvalidConfig, "partial_k2 conditioning needs an even rho");
  if (use_audio) {
    positive(audio_tokens, "audio_tokens");
    if (audio_features < 2) throw Error(ErrorKind::kInvalidConfig, "model.audio_features must be >= 2");
  }
  if (use_skeleton) {
    positive(joints, "joints");
    positive(skeleton_features, "skeleton_features");
  }
}

std::size_t DenoiserParams::count() const {
  std::size_t n = 0;
  for (const auto& [name, m] : tensors) n += std::size_t(m.size());
  return n;
}

const Mat& DenoiserParams::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw Error(ErrorKind::kInvalidConfig, "unknown parameter: " + name);
  return it->second;
}

DenoiserParams init_params(const ModelConfig& cfg, std::uint64_t seed, bool zero_unembed) {
  cfg.validate();
  Rng rng(seed);
  DenoiserParams out;
  out.seed = seed;
  auto& t = out.tensors;
  const int d = cfg.d;
  if (cfg.architecture == Architecture::kMlp) {
    t["mlp.in.w"] = fan_in(d + cfg.time_features, cfg.hidden, rng);
    t["mlp.in.b"] = Mat::Zero(1, cfg.hidden);
    for (int i = 1; i < cfg.hidden_layers; ++i) {
      const std::string base = "mlp.h" + std::to_string(i);
      t[base + ".w"] = fan_in(cfg.hidden, cfg.hidden, rng);
      t[base + ".b"] = Mat::Zero(1, cfg.hidden);
    }
    t["unembed.w"] = zero_unembed ? Mat::Zero(cfg.hidden, d) : fan_in(cfg.hidden, d, rng);
    t["unembed.b"] = Mat::Zero(1, d);
    return out;
  }
  t["embed.w"] = fan_in(d, d, rng);
  t["embed.b"] = Mat::Zero(1, d);
  if (cfg.positional) t["pos"] = 0.1 * randn(cfg.tokens(), d, rng);
  t["time.w"] = fan_in(cfg.time_features, d, rng);
  t["time.b"] = Mat::Zero(1, d);
  const bool motion = cfg.use_audio || cfg.use_skeleton;
  for (int b = 0; b < cfg.n_blocks; ++b) {
    t[block_name(b, "attn_norm")] = Mat::Ones(1, d);
    for (const char* w : {"attn.q", "attn.k", "attn.v", "attn.o"}) t[block_name(b, w)] = fan_in(d, d, rng);
    if (motion) {
      t[block_name(b, "xattn_norm")] = Mat::Ones(1, d);
      for (const char* w : {"xattn.q", "xattn.k", "xattn.v"}) t[block_name(b, w)] = fan_in(d, d, rng);
    }
    t[block_name(b, "ff_norm")] = Mat::Ones(1, d);
    t[block_name(b, "ff.w1")] = fan_in(d, cfg.d_ff, rng);
    t[block_name(b, "ff.b1")] = Mat::Zero(1, cfg.d_ff);
    t[block_name(b, "ff.w2")] = fan_in(cfg.d_ff, d, rng);
    t[block_name(b, "ff.b2")] = Mat::Zero(1, d);
  }
  t["unembed.w"] = zero_unembed ? Mat::Zero(d, d) : fan_in(d, d, rng);
  t["unembed.b"] = Mat::Zero(1, d);
  if (cfg.use_audio) {
    t["motion.audio.w"] = fan_in(cfg.audio_features, d, rng);
    t["motion.audio.b"] = Mat::Zero(1, d);
    t["motion.audio.pos"] = randn(cfg.audio_tokens_per_step(), d, rng);
  }
  if (cfg.use_skeleton) {
    t["motion.skeleton.enc"] = fan_in(cfg.joints, cfg.skeleton_features, rng);
    t["motion.skeleton.w"] = fan_in(cfg.skeleton_features, d, rng);
    t["motion.skeleton.b"] = Mat::Zero(1, d);
    t["motion.skeleton.pos"] = randn(cfg.skeleton_tokens_per_step(), d, rng);
  }
  return out;
}

Conditioning prepare_conditioning(const ModelConfig& cfg, const motion::MotionCondition* audio,
                                  const motion::SkeletonSequence* skeleton) {
  Conditioning c;
  if (audio != nullptr && cfg.use_audio) {
    if (audio->tokens != cfg.audio_tokens || audio->channels() != cfg.audio_features)
      throw Error(ErrorKind::kShapeMismatch, "prepare_conditioning: audio features do not match model config");
    c.audio = motion::apply_strategy(*audio, cfg.rho, cfg.conditioning).data;
  }
  if (skeleton != nullptr && cfg.use_skeleton) {
    if (skeleton->joints != cfg.joints) throw Error(ErrorKind::kShapeMismatch, "prepare_conditioning: joint count");
    motion::MotionCondition maps;
    maps.modality = motion::Modality::kSkeleton;
    maps.frames = skeleton->frames;
    maps.tokens = cfg.grid_h * cfg.grid_w;
    maps.data = motion::rasterize_skeleton(*skeleton, cfg.grid_h, cfg.grid_w);
    c.skeleton = motion::apply_strategy(maps, cfg.rho, cfg.conditioning).data;
  }
  return c;
}

Bound::Bound(ad::Graph& g, const DenoiserParams& params, const TrainableFn& trainable) {
  for (const auto& [name, m] : params.tensors) {
    const bool train = trainable ? trainable(name) : true;
    vars_.emplace(name, train ? g.leaf(m, name) : g.constant(m));
  }
}

ad::Var Bound::operator[](const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw Error(ErrorKind::kInvalidConfig, "parameter not bound: " + name);
  return it->second;
}

Mat time_features(double tau, int n) {
  const int half = n / 2;
  Mat out(1, n);
  for (int k = 0; k < half; ++k) {
    // Angular frequencies log-spaced from 1 to 100.
    const double w = half == 1 ? 1.0 : std::exp(std::log(100.0) * double(k) / double(half - 1));
    out(0, k) = std::sin(w * tau);
    out(0, half + k) = std::cos(w * tau);
  }
  return out;
}

ad::Var cross_attend(ad::Var queries_src, ad::Var residual, ad::Var memory, ad::Var w_q, ad::Var w_k, ad::Var w_v,
                     int steps, int keys_per_step, int heads) {
  const Eigen::Index rows = queries_src.rows();
  if (steps <= 0 || rows % steps != 0) throw Error(ErrorKind::kTemporalMismatch, "cross_attend: rows not divisible by steps");
  if (memory.rows() != Eigen::Index(steps) * keys_per_step)
    throw Error(ErrorKind::kTemporalMismatch, "cross_attend: memory rows do not match steps");
  const Eigen::Index per_step = rows / steps;
  Var q = ad::matmul(queries_src, w_q);
  Var k = ad::matmul(memory, w_k);
  Var v = ad::matmul(memory, w_v);
  std::vector<Var> outs;
  outs.reserve(std::size_t(steps));
  for (int s = 0; s < steps; ++s) {
    outs.push_back(multi_head(ad::slice_rows(q, s * per_step, per_step), ad::slice_rows(k, s * keys_per_step, keys_per_step),
                              ad::slice_rows(v, s * keys_per_step, keys_per_step), heads));
  }
  return residual + ad::vcat(outs);
}

ad::Var forward(const ModelConfig& cfg, const Bound& params, ad::Var x, double tau, const Conditioning& cond) {
  return cfg.architecture == Architecture::kMlp ? mlp_forward(cfg, params, x, tau)
                                                : transformer_forward(cfg, params, x, tau, cond);
}

Mat predict(const ModelConfig& cfg, const DenoiserParams& params, const Mat& x, double tau, const Conditioning& cond) {
  ad::Graph g;
  const auto frozen = [](const std::string&) { return false; };
  Bound b(g, params, frozen);
  return forward(cfg, b, g.constant(x), tau, cond).value();
}

Gradients grad(const DenoiserParams& params, const LossFn& loss_fn, const TrainableFn& trainable) {
  ad::Graph g;
  Bound b(g, params, trainable);
  ad::Var loss = loss_fn(g, b);
  if (loss.value().size() != 1) throw Error(ErrorKind::kShapeMismatch, "grad: loss must be scalar");
  Gradients out;
  out.loss = loss.scalar();
  if (!std::isfinite(out.loss)) {
    // Name the parameter most likely responsible.
    std::string culprit;
    double largest = -1.0;
    for (const auto& [name, m] : params.tensors) {
      if (!m.allFinite()) {
        culprit = name + " (non-finite entries)";
        break;
      }
      const double a = m.cwiseAbs().maxCoeff();
      if (a > largest) {
        largest = a;
        std::ostringstream os;
        os << name << " (max |value| " << a << ")";
        culprit = os.str();
      }
    }
    throw Error(ErrorKind::kNonFinite, "grad: loss is not finite; suspect parameter " + culprit);
  }
  g.backward(loss);
  for (const auto& [name, v] : b.vars()) {
    const Mat& gv = g.grad(v);
    Mat gm = gv.size() == 0 ? Mat::Zero(params.at(name).rows(), params.at(name).cols()) : gv;
    if (!gm.allFinite()) throw Error(ErrorKind::kNonFinite, "grad: non-finite gradient for parameter " + name);
    out.tensors.emplace(name, std::move(gm));
  }
  return out;
}

}  // namespace animpref::models
