#pragma once

// Benchmark plumbing around the synthetic tasks: oracle annotation, phased
// training, candidate scoring, evaluation and the comparative experiments.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "animpref/dpo_optimizer.hpp"
#include "animpref/latent_codec.hpp"
#include "animpref/optimizer.hpp"
#include "animpref/preference_data.hpp"
#include "animpref/synth.hpp"
#include "animpref/toy_models.hpp"

namespace animpref::pipeline {

// ---------------------------------------------------------------- annotator

struct AnnotatorConfig {
  double align_floor = 0.4;        // correlation mapped to the bottom of the scale
  double roughness_scale = 0.1;    // excess total variation giving 1/e fidelity
  double recon_scale = 0.05;       // mean squared error giving 1/e fidelity
};

/// Mean absolute difference between temporal and horizontal/vertical neighbours.
double total_variation(const codec::VideoTensor& video);

double align_score(const SynthTask& task, const codec::VideoTensor& generated, const AnnotatorConfig& cfg = {});

/// Against `reference`: 1 + 2 exp(-excess_tv / s_r) + 2 exp(-mse / s_m).
double fidelity_score(const codec::VideoTensor& generated, const codec::VideoTensor& reference,
                      const AnnotatorConfig& cfg = {});

/// Oracle scores in [1, 5]. Fidelity is judged against `reference` when
/// given (normally the codec round trip of the ground truth), else against
/// the task video.
prefs::CandidateScore synthetic_annotator(const SynthTask& task, const codec::VideoTensor& generated,
                                          const std::string& sample_id = "", const codec::VideoTensor* reference = nullptr,
                                          const AnnotatorConfig& cfg = {});

// ------------------------------------------------------------- latent space

/// Codec plus a fixed gain so model-space latents have roughly unit scale.
struct LatentSpace {
  codec::CodecBasis basis;
  double scale = 1.0;
  int frames = 16, height = 32, width = 32;

  Mat encode(const codec::VideoTensor& video) const;
  codec::VideoTensor decode(const Mat& tokens) const;
  codec::VideoTensor round_trip(const codec::VideoTensor& video) const { return decode(encode(video)); }
};

LatentSpace make_latent_space(int d, std::uint64_t codec_seed, double scale, int frames, int height, int width);

/// Model geometry implied by the benchmark and latent shapes.
models::ModelConfig bind_geometry(models::ModelConfig cfg, const LatentSpace& space);

models::Conditioning task_conditioning(const models::ModelConfig& cfg, const SynthTask& task, bool with_skeleton);
std::vector<models::Conditioning> task_conditionings(const models::ModelConfig& cfg, const std::vector<SynthTask>& tasks,
                                                     bool with_skeleton);

// ---------------------------------------------------------------- training

enum class Phase { kAudio, kSkeleton, kDpo, kSft };
const char* to_string(Phase p);
Phase phase_from_string(const std::string& s);

struct PhasePlan {
  Phase phase = Phase::kAudio;
  std::vector<std::string> trainable;
  std::vector<std::string> frozen;
  int steps = 10000;
  double learning_rate = 1e-5;
  int warmup_steps = 2000;
  int batch_size = 8;
  optim::Kind optimizer = optim::Kind::kAdamW;
  std::uint64_t seed = 0;
};

PhasePlan default_plan(Phase phase);

/// '*' matches any run of characters, everything else is literal.
bool glob_match(const std::string& pattern, const std::string& name);

/// Checks that every parameter is matched by exactly one of the trainable and
/// frozen pattern lists, and returns the trainable predicate.
models::TrainableFn resolve_plan(const PhasePlan& plan, const models::DenoiserParams& params);

struct PhaseResult {
  models::DenoiserParams params;
  std::vector<double> losses;  // one per optimizer step
};

using StepCallback = std::function<void(int step, double loss)>;

/// Flow-matching training on (latent, conditioning) examples.
PhaseResult train_fm(const PhasePlan& plan, const models::ModelConfig& cfg, models::DenoiserParams params,
                     const std::vector<Mat>& latents, const std::vector<models::Conditioning>& conditions,
                     const StepCallback& on_step = {});

struct DpoData {
  std::vector<prefs::PreferencePair> pairs;
  std::vector<std::size_t> condition;      // per pair, index into the conditioning table
  std::map<std::string, Mat> latents;      // by sample id
};

/// Pairs whose condition_id names one of `tasks` and whose samples have cached latents.
DpoData make_dpo_data(const std::vector<prefs::PreferencePair>& pairs, const std::vector<SynthTask>& tasks,
                      std::map<std::string, Mat> latents);

/// Preference phase. The reference is a copy of `params` taken at entry.
PhaseResult train_dpo(const PhasePlan& plan, const dpo::DpoConfig& dpo_cfg, const models::ModelConfig& cfg,
                      models::DenoiserParams params, const DpoData& data,
                      const std::vector<models::Conditioning>& conditions, const StepCallback& on_step = {});

/// Plan for the preference phase from the DPO section (all parameters trainable).
PhasePlan dpo_plan(const dpo::DpoConfig& dpo_cfg, std::uint64_t seed);

void write_loss_csv(const std::filesystem::path& path, const std::vector<double>& losses);

// ---------------------------------------------------------------- sampling

struct SampleConfig {
  int steps = 16;
  std::uint64_t seed = 0;
};

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

Mat sample_latent(const models::ModelConfig& cfg, const models::DenoiserParams& params,
                  const models::Conditioning& cond, int rows, int steps, std::uint64_t seed);

/// Runs fn(i) for i in [0, n) on worker threads; callers write results by index.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

// -------------------------------------------------------------- evaluation

struct TaskEval {
  std::string id;
  double sync_corr = 0, motion_var = 0, recon_mse = 0, psnr = 0, r_align = 0, r_fidelity = 0;
};

struct EvalReport {
  double sync_corr = 0, motion_var = 0, recon_mse = 0, psnr = 0, r_align = 0, r_fidelity = 0;
  double sync_corr_se = 0, r_align_se = 0, motion_var_se = 0;
  std::vector<TaskEval> tasks;
};

TaskEval evaluate_video(const SynthTask& task, const codec::VideoTensor& video, const codec::VideoTensor* reference,
                        const AnnotatorConfig& annot = {});
EvalReport aggregate(std::vector<TaskEval> tasks);

/// Samples one video per task and scores it.
EvalReport evaluate(const models::ModelConfig& cfg, const models::DenoiserParams& params, const LatentSpace& space,
                    const std::vector<SynthTask>& tasks, const std::vector<models::Conditioning>& conditions,
                    const SampleConfig& sample, const AnnotatorConfig& annot = {});

nlohmann::ordered_json to_json(const EvalReport& r, bool per_task = true);

/// Mean and standard error of a - b over paired entries.
struct PairedDiff {
  double mean = 0, se = 0;
};
PairedDiff paired_difference(const std::vector<double>& a, const std::vector<double>& b);

// ----------------------------------------------------------------- scoring

struct ScoreConfig {
  int candidates_per_task = 4;
  int steps = 16;
  std::uint64_t seed = 0;
  bool degraded = true;  // add temporal-shuffle and temporal-smooth variants of the first sample
};

struct ScoredTask {
  prefs::PreferenceGroup group;
  std::map<std::string, Mat> latents;  // model-space latent per candidate
};

codec::VideoTensor shuffle_frames(const codec::VideoTensor& video, std::uint64_t seed);
codec::VideoTensor smooth_frames(const codec::VideoTensor& video, int radius);

std::vector<ScoredTask> score_tasks(const models::ModelConfig& cfg, const models::DenoiserParams& params,
                                    const LatentSpace& space, const std::vector<SynthTask>& tasks,
                                    const std::vector<models::Conditioning>& conditions, const ScoreConfig& score,
                                    const AnnotatorConfig& annot = {});

}  // namespace animpref::pipeline
