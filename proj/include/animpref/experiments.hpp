#pragma once

// Comparative runs on the synthetic benchmark: conditioning granularity,
// pairing strategy, and preference tuning against winners-only fine-tuning.

#include <string>
#include <vector>

#include <json.hpp>

#include "animpref/config.hpp"
#include "animpref/pipeline.hpp"

namespace animpref::pipeline {

std::vector<SynthTask> generate_tasks(const config::RunConfig& cfg, std::uint64_t first_seed, int n,
                                      Envelope envelope = Envelope::kRandom);
std::vector<Mat> encode_tasks(const LatentSpace& space, const std::vector<SynthTask>& tasks);

/// Audio phase followed by the skeleton phase (skipped when skeleton
/// conditioning is disabled or has zero steps).
struct BaseModel {
  models::DenoiserParams params;
  std::vector<std::string> phases;
  std::vector<double> audio_losses, skeleton_losses;
};
BaseModel train_base(const config::RunConfig& cfg, const std::vector<SynthTask>& tasks, bool skeleton_phase = true);

struct ConditioningArm {
  motion::Strategy strategy;
  EvalReport report;
  double initial_loss = 0, final_loss = 0;
};

/// One model per strategy, identical seeds and audio-phase budgets, evaluated
/// with audio conditioning on `eval`.
std::vector<ConditioningArm> ablate_conditioning(const config::RunConfig& cfg, const std::vector<SynthTask>& train,
                                                 const std::vector<SynthTask>& eval,
                                                 const std::vector<motion::Strategy>& strategies);

struct PreferenceArm {
  std::string name;        // pairing strategy, or "sft_winners"
  std::size_t pairs = 0;
  EvalReport report;
  PairedDiff lift;         // held-out r_align versus the base model, paired by task
};

struct PreferenceStudy {
  EvalReport base;
  std::vector<PreferenceArm> arms;

  const PreferenceArm& arm(const std::string& name) const;
};

/// Scores `train` with the base model, builds pairs per strategy and runs the
/// preference phase with identical budgets. With `sft_arm`, also fine-tunes
/// on the winners of cfg.dpo.strategy pairs with plain flow matching under
/// the same step budget.
PreferenceStudy preference_study(const config::RunConfig& cfg, const BaseModel& base, const std::vector<SynthTask>& train,
                                 const std::vector<SynthTask>& eval, const std::vector<prefs::PairStrategy>& strategies,
                                 bool sft_arm);

nlohmann::ordered_json to_json(const std::vector<ConditioningArm>& arms);
nlohmann::ordered_json to_json(const PreferenceStudy& study);

}  // namespace animpref::pipeline
