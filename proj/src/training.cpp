#include <algorithm>
#include <atomic>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include "animpref/diffusion_core.hpp"
#include "animpref/pipeline.hpp"

namespace animpref::pipeline {

// ------------------------------------------------------------- latent space

Mat LatentSpace::encode(const codec::VideoTensor& video) const { return scale * codec::encode(video, basis).tokens; }

codec::VideoTensor LatentSpace::decode(const Mat& tokens) const {
  codec::LatentVideo z(frames / codec::kTemporalStride, height / codec::kSpatialStride, width / codec::kSpatialStride,
                       basis.latent_dim());
  if (tokens.rows() != z.tokens.rows() || tokens.cols() != z.tokens.cols())
    throw Error(ErrorKind::kShapeMismatch, "LatentSpace::decode: token shape");
  z.tokens = tokens / scale;
  return codec::decode(z, basis);
}

LatentSpace make_latent_space(int d, std::uint64_t codec_seed, double scale, int frames, int height, int width) {
  if (!(scale > 0.0)) throw Error(ErrorKind::kInvalidConfig, "codec.scale must be > 0");
  if (frames % codec::kTemporalStride != 0 || height % codec::kSpatialStride != 0 || width % codec::kSpatialStride != 0)
    throw Error(ErrorKind::kIndivisible, "benchmark T must be a multiple of 4 and H, W multiples of 8");
  LatentSpace s;
  s.basis = codec::make_codec(d, kChannels, codec_seed);
  s.scale = scale;
  s.frames = frames;
  s.height = height;
  s.width = width;
  return s;
}

models::ModelConfig bind_geometry(models::ModelConfig cfg, const LatentSpace& space) {
  cfg.steps = space.frames / codec::kTemporalStride;
  cfg.grid_h = space.height / codec::kSpatialStride;
  cfg.grid_w = space.width / codec::kSpatialStride;
  cfg.rho = codec::kTemporalStride;
  cfg.joints = kJoints;
  if (cfg.architecture == models::Architecture::kTransformer && cfg.d != space.basis.latent_dim())
    throw Error(ErrorKind::kInvalidConfig, "model.d must equal codec.d");
  return cfg;
}

models::Conditioning task_conditioning(const models::ModelConfig& cfg, const SynthTask& task, bool with_skeleton) {
  const motion::MotionCondition audio = motion::encode_audio(task.audio, cfg.audio_tokens, cfg.audio_features, task.frames);
  return models::prepare_conditioning(cfg, &audio, with_skeleton ? &task.skeleton : nullptr);
}

std::vector<models::Conditioning> task_conditionings(const models::ModelConfig& cfg, const std::vector<SynthTask>& tasks,
                                                     bool with_skeleton) {
  std::vector<models::Conditioning> out(tasks.size());
  parallel_for(tasks.size(), [&](std::size_t i) { out[i] = task_conditioning(cfg, tasks[i], with_skeleton); });
  return out;
}

// ------------------------------------------------------------------ phases

const char* to_string(Phase p) {
  switch (p) {
    case Phase::kAudio: return "audio";
    case Phase::kSkeleton: return "skeleton";
    case Phase::kDpo: return "dpo";
    case Phase::kSft: return "sft";
  }
  return "?";
}

Phase phase_from_string(const std::string& s) {
  for (Phase p : {Phase::kAudio, Phase::kSkeleton, Phase::kDpo, Phase::kSft})
    if (s == to_string(p)) return p;
  throw Error(ErrorKind::kInvalidConfig, "unknown phase: " + s);
}

PhasePlan default_plan(Phase phase) {
  PhasePlan p;
  p.phase = phase;
  const std::vector<std::string> backbone{"embed.*", "pos", "time.*", "blocks.*", "unembed.*", "mlp.*", "motion.audio.*"};
  switch (phase) {
    case Phase::kAudio:
      p.trainable = backbone;
      p.frozen = {"motion.skeleton.*"};
      break;
    case Phase::kSkeleton:
      p.trainable = {"motion.skeleton.*"};
      p.frozen = backbone;
      break;
    case Phase::kDpo:
    case Phase::kSft:
      p.trainable = {"*"};
      break;
  }
  return p;
}

bool glob_match(const std::string& pattern, const std::string& name) {
  // Iterative wildcard match with single-star backtracking.
  std::size_t p = 0, n = 0, star = std::string::npos, mark = 0;
  while (n < name.size()) {
    if (p < pattern.size() && pattern[p] == '*') {
      star = p++;
      mark = n;
    } else if (p < pattern.size() && pattern[p] == name[n]) {
      ++p;
      ++n;
    } else if (star != std::string::npos) {
      p = star + 1;
      n = ++mark;
    } else {
      return false;
    }
  }
  while (p < pattern.size() && pattern[p] == '*') ++p;
  return p == pattern.size();
}

models::TrainableFn resolve_plan(const PhasePlan& plan, const models::DenoiserParams& params) {
  const auto any = [](const std::vector<std::string>& pats, const std::string& name) {
    return std::any_of(pats.begin(), pats.end(), [&](const std::string& p) { return glob_match(p, name); });
  };
  std::vector<std::string> unmatched, doubled;
  std::map<std::string, bool> trainable;
  for (const auto& [name, m] : params.tensors) {
    const bool t = any(plan.trainable, name), f = any(plan.frozen, name);
    if (t && f) doubled.push_back(name);
    else if (!t && !f) unmatched.push_back(name);
    trainable[name] = t;
  }
  const auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : ", ") + x;
    return s;
  };
  if (!unmatched.empty())
    throw Error(ErrorKind::kInvalidConfig, std::string("phase ") + to_string(plan.phase) + ": parameters matched by no pattern: " + join(unmatched));
  if (!doubled.empty())
    throw Error(ErrorKind::kInvalidConfig, std::string("phase ") + to_string(plan.phase) + ": parameters both trainable and frozen: " + join(doubled));
  return [trainable](const std::string& name) {
    auto it = trainable.find(name);
    return it != trainable.end() && it->second;
  };
}

namespace {

optim::Optimizer make_optimizer(const PhasePlan& plan) {
  optim::OptimizerConfig oc;
  oc.kind = plan.optimizer;
  oc.learning_rate = plan.learning_rate;
  oc.warmup_steps = plan.warmup_steps;
  return optim::Optimizer(oc);
}

void check_plan(const PhasePlan& plan) {
  if (plan.steps < 0 || plan.batch_size < 1 || plan.warmup_steps < 0 || plan.learning_rate < 0.0)
    throw Error(ErrorKind::kInvalidConfig, std::string("phase ") + to_string(plan.phase) + ": invalid step counts or learning rate");
}

}  // namespace

PhaseResult train_fm(const PhasePlan& plan, const models::ModelConfig& cfg, models::DenoiserParams params,
                     const std::vector<Mat>& latents, const std::vector<models::Conditioning>& conditions,
                     const StepCallback& on_step) {
  check_plan(plan);
  if (latents.empty() || latents.size() != conditions.size())
    throw Error(ErrorKind::kShapeMismatch, "train_fm: need one conditioning per latent");
  const models::TrainableFn trainable = resolve_plan(plan, params);
  optim::Optimizer opt = make_optimizer(plan);
  Rng rng(plan.seed);
  std::uniform_int_distribution<std::size_t> pick(0, latents.size() - 1);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  PhaseResult result;
  result.losses.reserve(std::size_t(plan.steps));
  for (int step = 0; step < plan.steps; ++step) {
    std::vector<diffusion::FlowSample> batch;
    std::vector<std::size_t> which;
    for (int b = 0; b < plan.batch_size; ++b) {
      const std::size_t i = pick(rng);
      const double tau = u01(rng);
      batch.push_back(diffusion::fm_interpolate(latents[i], randn(latents[i].rows(), latents[i].cols(), rng), tau));
      which.push_back(i);
    }
    const auto loss_fn = [&](ad::Graph& g, const models::Bound& bound) {
      const diffusion::GraphModel model = [&](ad::Graph&, ad::Var x, double tau, std::size_t item) {
        return models::forward(cfg, bound, x, tau, conditions[which[item]]);
      };
      return diffusion::fm_loss(g, model, batch);
    };
    const models::Gradients grads = models::grad(params, loss_fn, trainable);
    opt.step(params, grads, trainable);
    result.losses.push_back(grads.loss);
    if (on_step) on_step(step, grads.loss);
  }
  result.params = std::move(params);
  return result;
}

DpoData make_dpo_data(const std::vector<prefs::PreferencePair>& pairs, const std::vector<SynthTask>& tasks,
                      std::map<std::string, Mat> latents) {
  std::map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < tasks.size(); ++i) by_id[tasks[i].id] = i;
  DpoData data;
  for (const auto& p : pairs) {
    auto it = by_id.find(p.condition_id);
    if (it == by_id.end()) throw Error(ErrorKind::kInvalidConfig, "pair refers to unknown task " + p.condition_id);
    if (!latents.count(p.winner_id) || !latents.count(p.loser_id))
      throw Error(ErrorKind::kIo, "no cached latent for pair " + p.winner_id + " / " + p.loser_id);
    data.pairs.push_back(p);
    data.condition.push_back(it->second);
  }
  data.latents = std::move(latents);
  return data;
}

PhasePlan dpo_plan(const dpo::DpoConfig& dpo_cfg, std::uint64_t seed) {
  PhasePlan p = default_plan(Phase::kDpo);
  p.steps = dpo_cfg.steps;
  p.learning_rate = dpo_cfg.learning_rate;
  p.warmup_steps = dpo_cfg.warmup_steps;
  p.batch_size = dpo_cfg.batch_size;
  p.seed = seed;
  return p;
}

PhaseResult train_dpo(const PhasePlan& plan, const dpo::DpoConfig& dpo_cfg, const models::ModelConfig& cfg,
                      models::DenoiserParams params, const DpoData& data,
                      const std::vector<models::Conditioning>& conditions, const StepCallback& on_step) {
  check_plan(plan);
  dpo_cfg.validate();
  if (data.pairs.empty()) throw Error(ErrorKind::kInvalidConfig, "train_dpo: no preference pairs");
  const models::TrainableFn trainable = resolve_plan(plan, params);
  const models::DenoiserParams reference = params;
  optim::Optimizer opt = make_optimizer(plan);
  Rng rng(plan.seed);
  std::uniform_int_distribution<std::size_t> pick(0, data.pairs.size() - 1);
  PhaseResult result;
  for (int step = 0; step < plan.steps; ++step) {
    std::vector<dpo::DpoBatchItem> batch;
    for (int b = 0; b < plan.batch_size; ++b) {
      const std::size_t k = pick(rng);
      const auto& pair = data.pairs[k];
      batch.push_back(dpo::make_item(pair, data.condition[k], data.latents.at(pair.winner_id),
                                     data.latents.at(pair.loser_id), dpo_cfg, rng));
    }
    const double loss = dpo::dpo_step(params, reference, cfg, batch, conditions, dpo_cfg, opt, trainable);
    result.losses.push_back(loss);
    if (on_step) on_step(step, loss);
  }
  result.params = std::move(params);
  return result;
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<double>& losses) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  os << "step,loss\n" << std::setprecision(17);
  for (std::size_t i = 0; i < losses.size(); ++i) os << i << ',' << losses[i] << '\n';
}

// ---------------------------------------------------------------- sampling

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over a combined word.
  std::uint64_t z = a * 0x9E3779B97F4A7C15ull + b + 0x632BE59BD9B4E019ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

Mat sample_latent(const models::ModelConfig& cfg, const models::DenoiserParams& params,
                  const models::Conditioning& cond, int rows, int steps, std::uint64_t seed) {
  const diffusion::ValueModel model = [&](const Mat& x, double tau) { return models::predict(cfg, params, x, tau, cond); };
  return diffusion::sample_ode(model, rows, cfg.d, steps, seed);
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, std::max(1u, std::thread::hardware_concurrency()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  // Failures are rethrown by lowest index so the reported error does not
  // depend on scheduling.
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> failures(n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          failures[i] = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  for (const auto& f : failures)
    if (f) std::rethrow_exception(f);
}

}  // namespace animpref::pipeline
