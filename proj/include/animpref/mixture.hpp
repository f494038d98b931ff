#pragma once

// Two-component Gaussian mixture in the plane: flow-matching fit with the
// MLP denoiser, then preference tuning toward one component.

#include <array>
#include <cstdint>
#include <vector>

#include "animpref/dpo_optimizer.hpp"
#include "animpref/toy_models.hpp"

namespace animpref::pipeline {

struct MixtureConfig {
  double weight_a = 0.3;
  std::array<double, 2> mean_a{-2.0, 0.0};
  std::array<double, 2> mean_b{2.0, 0.0};
  double sd = 0.5;

  int hidden = 64;
  int hidden_layers = 2;
  int time_features = 16;

  int train_steps = 3000;
  int batch_items = 8;   // flow samples per step, each with its own tau
  int rows_per_item = 32;
  double learning_rate = 3e-3;

  int dpo_steps = 500;
  double dpo_learning_rate = 3e-3;
  double dpo_beta = 3.0;

  int n_samples = 2000;
  int ode_steps = 50;
  std::uint64_t seed = 0;
};

/// Rows drawn from the mixture; `from_a` (optional) receives component labels.
Mat sample_mixture(int n, const MixtureConfig& cfg, Rng& rng, std::vector<bool>* from_a = nullptr);
/// Rows drawn from one component only.
Mat sample_component(int n, const MixtureConfig& cfg, bool a, Rng& rng);
/// Fraction of rows nearer mean_a than mean_b.
double mode_a_mass(const Mat& x, const MixtureConfig& cfg);

struct MixtureResult {
  double true_mass_a = 0.0;
  double mass_a_before = 0.0;  // after flow-matching training
  double mass_a_after = 0.0;   // after preference tuning
  std::vector<double> fm_losses, dpo_losses;
};

MixtureResult run_mixture_experiment(const MixtureConfig& cfg);

}  // namespace animpref::pipeline
