#include "animpref/config.hpp"

#include <fstream>
#include <set>

namespace animpref::config {

namespace {

using nlohmann::json;

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

// Reads one object, remembering which keys were consumed so that leftovers
// can be reported as unknown.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  template <class T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    const std::string p = join(path_, key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) throw ConfigError(p, "expected a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_integer()) throw ConfigError(p, "expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (it->is_number_unsigned() == false && it->template get<long long>() < 0) throw ConfigError(p, "expected a non-negative integer");
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!it->is_number()) throw ConfigError(p, "expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!it->is_string()) throw ConfigError(p, "expected a string");
    } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
      if (!it->is_array()) throw ConfigError(p, "expected an array of strings");
      for (const auto& e : *it)
        if (!e.is_string()) throw ConfigError(p, "expected an array of strings");
    }
    out = it->template get<T>();
  }

  const json* child(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string path(const std::string& key) const { return join(path_, key); }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(join(path_, it.key()), "unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_phase(const json& j, const std::string& path, PhaseSection& p) {
  Section s(j, path);
  s.get("steps", p.steps);
  s.get("learning_rate", p.learning_rate);
  s.get("warmup_steps", p.warmup_steps);
  s.get("batch_size", p.batch_size);
  s.get("optimizer", p.optimizer);
  s.get("trainable", p.trainable);
  s.get("frozen", p.frozen);
  s.get("seed", p.seed);
  s.finish();
}

nlohmann::ordered_json phase_json(const PhaseSection& p) {
  nlohmann::ordered_json j;
  j["steps"] = p.steps;
  j["learning_rate"] = p.learning_rate;
  j["warmup_steps"] = p.warmup_steps;
  j["batch_size"] = p.batch_size;
  j["optimizer"] = p.optimizer;
  j["trainable"] = p.trainable;
  j["frozen"] = p.frozen;
  j["seed"] = p.seed;
  return j;
}

void require(bool ok, const std::string& path, const std::string& message) {
  if (!ok) throw ConfigError(path, message);
}

}  // namespace

RunConfig::RunConfig() {
  const auto a = pipeline::default_plan(pipeline::Phase::kAudio);
  train.audio.trainable = a.trainable;
  train.audio.frozen = a.frozen;
  const auto s = pipeline::default_plan(pipeline::Phase::kSkeleton);
  train.skeleton.trainable = s.trainable;
  train.skeleton.frozen = s.frozen;
  train.skeleton.seed = 1;
}

RunConfig parse(const json& j) {
  RunConfig c;
  Section root(j, "");
  if (const json* x = root.child("codec")) {
    Section s(*x, "codec");
    s.get("d", c.codec.d);
    s.get("seed", c.codec.seed);
    s.get("scale", c.codec.scale);
    s.finish();
  }
  if (const json* x = root.child("model")) {
    Section s(*x, "model");
    s.get("architecture", c.model.architecture);
    s.get("n_blocks", c.model.n_blocks);
    s.get("d", c.model.d);
    s.get("n_heads", c.model.n_heads);
    s.get("d_ff", c.model.d_ff);
    s.get("time_features", c.model.time_features);
    s.get("positional", c.model.positional);
    s.get("hidden", c.model.hidden);
    s.get("hidden_layers", c.model.hidden_layers);
    s.get("seed", c.model.seed);
    s.finish();
  }
  if (const json* x = root.child("motion")) {
    Section s(*x, "motion");
    s.get("conditioning", c.motion.conditioning);
    s.get("use_audio", c.motion.use_audio);
    s.get("audio_tokens", c.motion.audio_tokens);
    s.get("audio_features", c.motion.audio_features);
    s.get("use_skeleton", c.motion.use_skeleton);
    s.get("skeleton_features", c.motion.skeleton_features);
    s.finish();
  }
  if (const json* x = root.child("train")) {
    Section s(*x, "train");
    if (const json* p = s.child("audio")) read_phase(*p, "train.audio", c.train.audio);
    if (const json* p = s.child("skeleton")) read_phase(*p, "train.skeleton", c.train.skeleton);
    s.finish();
  }
  if (const json* x = root.child("dpo")) {
    Section s(*x, "dpo");
    s.get("beta", c.dpo.core.beta);
    s.get("omega", c.dpo.core.omega);
    s.get("shared_noise", c.dpo.core.shared_noise);
    s.get("learning_rate", c.dpo.core.learning_rate);
    s.get("warmup_steps", c.dpo.core.warmup_steps);
    s.get("steps", c.dpo.core.steps);
    s.get("batch_size", c.dpo.core.batch_size);
    s.get("min_margin", c.dpo.core.min_margin);
    s.get("strategy", c.dpo.strategy);
    s.get("seed", c.dpo.seed);
    s.finish();
  }
  if (const json* x = root.child("bench")) {
    Section s(*x, "bench");
    s.get("T", c.bench.T);
    s.get("H", c.bench.H);
    s.get("W", c.bench.W);
    s.get("n_tasks", c.bench.n_tasks);
    s.get("seed", c.bench.seed);
    s.get("sample_rate", c.bench.sample_rate);
    s.get("frame_rate", c.bench.frame_rate);
    s.get("eval_tasks", c.bench.eval_tasks);
    s.get("eval_seed", c.bench.eval_seed);
    s.finish();
  }
  if (const json* x = root.child("sample")) {
    Section s(*x, "sample");
    s.get("steps", c.sample.steps);
    s.get("seed", c.sample.seed);
    s.finish();
  }
  if (const json* x = root.child("score")) {
    Section s(*x, "score");
    s.get("candidates_per_task", c.score.candidates_per_task);
    s.get("degraded", c.score.degraded);
    s.get("seed", c.score.seed);
    s.finish();
  }
  if (const json* x = root.child("annotator")) {
    Section s(*x, "annotator");
    s.get("align_floor", c.annotator.align_floor);
    s.get("roughness_scale", c.annotator.roughness_scale);
    s.get("recon_scale", c.annotator.recon_scale);
    s.finish();
  }
  root.finish();
  validate(c);
  return c;
}

RunConfig load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::kIo, "cannot open config " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", std::string("malformed JSON: ") + e.what());
  }
  return parse(j);
}

nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["codec"] = {{"d", c.codec.d}, {"seed", c.codec.seed}, {"scale", c.codec.scale}};
  nlohmann::ordered_json m;
  m["architecture"] = c.model.architecture;
  m["n_blocks"] = c.model.n_blocks;
  m["d"] = c.model.d;
  m["n_heads"] = c.model.n_heads;
  m["d_ff"] = c.model.d_ff;
  m["time_features"] = c.model.time_features;
  m["positional"] = c.model.positional;
  m["hidden"] = c.model.hidden;
  m["hidden_layers"] = c.model.hidden_layers;
  m["seed"] = c.model.seed;
  j["model"] = m;
  nlohmann::ordered_json mo;
  mo["conditioning"] = c.motion.conditioning;
  mo["use_audio"] = c.motion.use_audio;
  mo["audio_tokens"] = c.motion.audio_tokens;
  mo["audio_features"] = c.motion.audio_features;
  mo["use_skeleton"] = c.motion.use_skeleton;
  mo["skeleton_features"] = c.motion.skeleton_features;
  j["motion"] = mo;
  j["train"] = {{"audio", phase_json(c.train.audio)}, {"skeleton", phase_json(c.train.skeleton)}};
  nlohmann::ordered_json d;
  d["beta"] = c.dpo.core.beta;
  d["omega"] = c.dpo.core.omega;
  d["shared_noise"] = c.dpo.core.shared_noise;
  d["learning_rate"] = c.dpo.core.learning_rate;
  d["warmup_steps"] = c.dpo.core.warmup_steps;
  d["steps"] = c.dpo.core.steps;
  d["batch_size"] = c.dpo.core.batch_size;
  d["min_margin"] = c.dpo.core.min_margin;
  d["strategy"] = c.dpo.strategy;
  d["seed"] = c.dpo.seed;
  j["dpo"] = d;
  nlohmann::ordered_json b;
  b["T"] = c.bench.T;
  b["H"] = c.bench.H;
  b["W"] = c.bench.W;
  b["n_tasks"] = c.bench.n_tasks;
  b["seed"] = c.bench.seed;
  b["sample_rate"] = c.bench.sample_rate;
  b["frame_rate"] = c.bench.frame_rate;
  b["eval_tasks"] = c.bench.eval_tasks;
  b["eval_seed"] = c.bench.eval_seed;
  j["bench"] = b;
  j["sample"] = {{"steps", c.sample.steps}, {"seed", c.sample.seed}};
  j["score"] = {{"candidates_per_task", c.score.candidates_per_task}, {"degraded", c.score.degraded}, {"seed", c.score.seed}};
  j["annotator"] = {{"align_floor", c.annotator.align_floor},
                    {"roughness_scale", c.annotator.roughness_scale},
                    {"recon_scale", c.annotator.recon_scale}};
  return j;
}

void validate(const RunConfig& c) {
  require(c.codec.d >= 1 && c.codec.d <= codec::block_size(pipeline::kChannels), "codec.d", "must be in [1, 768]");
  require(c.codec.scale > 0.0, "codec.scale", "must be > 0");
  try {
    models::architecture_from_string(c.model.architecture);
  } catch (const Error&) {
    throw ConfigError("model.architecture", "expected transformer or mlp");
  }
  require(c.model.architecture != "transformer" || c.model.d == c.codec.d, "model.d", "must equal codec.d");
  require(c.model.n_blocks >= 0, "model.n_blocks", "must be >= 0");
  require(c.model.n_heads >= 1 && c.model.d % c.model.n_heads == 0, "model.n_heads", "must divide model.d");
  require(c.model.d_ff >= 1, "model.d_ff", "must be >= 1");
  require(c.model.time_features >= 2 && c.model.time_features % 2 == 0, "model.time_features", "must be even and >= 2");
  require(c.model.hidden >= 1 && c.model.hidden_layers >= 1, "model.hidden", "MLP widths must be >= 1");
  try {
    motion::strategy_from_string(c.motion.conditioning);
  } catch (const Error&) {
    throw ConfigError("motion.conditioning", "expected full, partial_k2 or subsample");
  }
  require(c.motion.audio_tokens >= 1, "motion.audio_tokens", "must be >= 1");
  require(c.motion.audio_features >= 3, "motion.audio_features", "must be >= 3");
  require(c.motion.skeleton_features >= 1, "motion.skeleton_features", "must be >= 1");
  for (const auto& [name, p] : {std::pair{"train.audio", &c.train.audio}, std::pair{"train.skeleton", &c.train.skeleton}}) {
    const std::string n = name;
    require(p->steps >= 0, n + ".steps", "must be >= 0");
    require(p->learning_rate >= 0.0, n + ".learning_rate", "must be >= 0");
    require(p->warmup_steps >= 0, n + ".warmup_steps", "must be >= 0");
    require(p->batch_size >= 1, n + ".batch_size", "must be >= 1");
    require(p->optimizer == "adamw" || p->optimizer == "sgd", n + ".optimizer", "expected adamw or sgd");
  }
  try {
    c.dpo.core.validate();
  } catch (const Error& e) {
    throw ConfigError("dpo", e.what());
  }
  try {
    prefs::pair_strategy_from_string(c.dpo.strategy);
  } catch (const Error&) {
    throw ConfigError("dpo.strategy", "unknown pairing strategy");
  }
  require(c.bench.T >= 4 && c.bench.T % codec::kTemporalStride == 0, "bench.T", "must be a positive multiple of 4");
  require(c.bench.H >= 8 && c.bench.H % codec::kSpatialStride == 0, "bench.H", "must be a positive multiple of 8");
  require(c.bench.W >= 8 && c.bench.W % codec::kSpatialStride == 0, "bench.W", "must be a positive multiple of 8");
  require(c.bench.n_tasks >= 1, "bench.n_tasks", "must be >= 1");
  require(c.bench.eval_tasks >= 1, "bench.eval_tasks", "must be >= 1");
  require(c.bench.frame_rate > 0.0, "bench.frame_rate", "must be > 0");
  {
    // Carrier tones need a whole number of samples per quarter frame.
    const double spf = c.bench.sample_rate / c.bench.frame_rate;
    require(c.bench.sample_rate > 0.0 && spf >= 4.0 * c.motion.audio_tokens, "bench.sample_rate",
            "too low for the audio sub-frame count");
  }
  require(c.sample.steps >= 1, "sample.steps", "must be >= 1");
  require(c.score.candidates_per_task >= 1, "score.candidates_per_task", "must be >= 1");
  require(c.annotator.align_floor < 1.0, "annotator.align_floor", "must be < 1");
  require(c.annotator.roughness_scale > 0.0 && c.annotator.recon_scale > 0.0, "annotator", "scales must be > 0");
}

pipeline::LatentSpace latent_space(const RunConfig& c) {
  return pipeline::make_latent_space(c.codec.d, c.codec.seed, c.codec.scale, c.bench.T, c.bench.H, c.bench.W);
}

models::ModelConfig model_config(const RunConfig& c) {
  models::ModelConfig m;
  m.architecture = models::architecture_from_string(c.model.architecture);
  m.n_blocks = c.model.n_blocks;
  m.d = c.model.d;
  m.n_heads = c.model.n_heads;
  m.d_ff = c.model.d_ff;
  m.time_features = c.model.time_features;
  m.positional = c.model.positional;
  m.hidden = c.model.hidden;
  m.hidden_layers = c.model.hidden_layers;
  m.conditioning = motion::strategy_from_string(c.motion.conditioning);
  m.use_audio = c.motion.use_audio;
  m.audio_tokens = c.motion.audio_tokens;
  m.audio_features = c.motion.audio_features;
  m.use_skeleton = c.motion.use_skeleton;
  m.skeleton_features = c.motion.skeleton_features;
  m = pipeline::bind_geometry(m, latent_space(c));
  m.validate();
  return m;
}

pipeline::PhasePlan phase_plan(const RunConfig& c, pipeline::Phase phase) {
  if (phase == pipeline::Phase::kDpo) return pipeline::dpo_plan(c.dpo.core, c.dpo.seed);
  const PhaseSection& s = phase == pipeline::Phase::kSkeleton ? c.train.skeleton : c.train.audio;
  pipeline::PhasePlan p;
  p.phase = phase;
  p.trainable = s.trainable;
  p.frozen = s.frozen;
  p.steps = s.steps;
  p.learning_rate = s.learning_rate;
  p.warmup_steps = s.warmup_steps;
  p.batch_size = s.batch_size;
  p.optimizer = optim::kind_from_string(s.optimizer);
  p.seed = s.seed;
  return p;
}

pipeline::SynthOptions synth_options(const RunConfig& c) {
  pipeline::SynthOptions o;
  o.sample_rate = c.bench.sample_rate;
  o.frame_rate = c.bench.frame_rate;
  return o;
}

void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  os << j.dump(2) << '\n';
}

void echo_resolved(const std::filesystem::path& dir, const RunConfig& c) { write_json(dir / "config.resolved.json", to_json(c)); }

}  // namespace animpref::config
