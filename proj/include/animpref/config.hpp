#pragma once

// Run configuration: one strict JSON document. Every field is optional and
// defaults to the value below; unknown keys and wrong types are rejected
// with the offending key path.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "animpref/dpo_optimizer.hpp"
#include "animpref/pipeline.hpp"
#include "animpref/toy_models.hpp"

namespace animpref::config {

class ConfigError : public Error {
 public:
  ConfigError(std::string key_path, const std::string& message)
      : Error(ErrorKind::kInvalidConfig, key_path + ": " + message), key_path_(std::move(key_path)) {}
  const std::string& key_path() const { return key_path_; }

 private:
  std::string key_path_;
};

struct CodecSection {
  int d = 16;
  std::uint64_t seed = 1;
  double scale = 4.0;  // gain applied to codec latents before the model
};

struct ModelSection {
  std::string architecture = "transformer";
  int n_blocks = 2;
  int d = 16;
  int n_heads = 4;
  int d_ff = 32;
  int time_features = 16;
  bool positional = true;
  int hidden = 64;          // MLP only
  int hidden_layers = 2;    // MLP only
  std::uint64_t seed = 0;   // parameter initialization
};

struct MotionSection {
  std::string conditioning = "full";  // full | partial_k2 | subsample
  bool use_audio = true;
  int audio_tokens = 4;
  int audio_features = 6;
  bool use_skeleton = true;
  int skeleton_features = 4;
};

struct PhaseSection {
  int steps = 10000;
  double learning_rate = 1e-5;
  int warmup_steps = 2000;
  int batch_size = 8;
  std::string optimizer = "adamw";  // adamw | sgd
  std::vector<std::string> trainable;
  std::vector<std::string> frozen;
  std::uint64_t seed = 0;
};

struct TrainSection {
  PhaseSection audio;
  PhaseSection skeleton;
};

struct DpoSection {
  dpo::DpoConfig core;
  std::string strategy = "best_vs_worst";
  std::uint64_t seed = 0;
};

struct BenchSection {
  int T = 16, H = 32, W = 32;
  int n_tasks = 200;
  std::uint64_t seed = 0;
  double sample_rate = 3200.0;
  double frame_rate = 25.0;
  int eval_tasks = 50;                // held-out tasks generated for ablations
  std::uint64_t eval_seed = 100000;   // first seed of the held-out range
};

struct SampleSection {
  int steps = 16;
  std::uint64_t seed = 0;
};

struct ScoreSection {
  int candidates_per_task = 4;
  bool degraded = true;
  std::uint64_t seed = 0;
};

struct RunConfig {
  CodecSection codec;
  ModelSection model;
  MotionSection motion;
  TrainSection train;
  DpoSection dpo;
  BenchSection bench;
  SampleSection sample;
  ScoreSection score;
  pipeline::AnnotatorConfig annotator;

  RunConfig();  // fills the phase pattern defaults
};

RunConfig parse(const nlohmann::json& j);
RunConfig load(const std::filesystem::path& path);
nlohmann::ordered_json to_json(const RunConfig& c);
/// Cross-field checks (widths, divisibility, enum strings).
void validate(const RunConfig& c);

pipeline::LatentSpace latent_space(const RunConfig& c);
models::ModelConfig model_config(const RunConfig& c);
pipeline::PhasePlan phase_plan(const RunConfig& c, pipeline::Phase phase);
pipeline::SynthOptions synth_options(const RunConfig& c);

void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j);
/// Writes `config.resolved.json` into `dir`.
void echo_resolved(const std::filesystem::path& dir, const RunConfig& c);

}  // namespace animpref::config
