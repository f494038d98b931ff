#pragma once

// Preference optimization of a velocity model against a frozen reference.
//
// Per item, with x_tau = (1 - tau) y + tau eps and v = eps - y on each branch:
//   delta_w = |v_w - v_theta(x_w)|^2 - |v_w - v_ref(x_w)|^2
//   delta_l = |v_l - v_theta(x_l)|^2 - |v_l - v_ref(x_l)|^2
//   loss    = -log sigmoid(-beta * omega(tau) * (delta_w - delta_l))
// Squared norms are per-element means, matching the flow-matching loss.

#include <cstdint>
#include <string>
#include <vector>

#include "animpref/diffusion_core.hpp"
#include "animpref/optimizer.hpp"
#include "animpref/preference_data.hpp"
#include "animpref/toy_models.hpp"

namespace animpref::dpo {

struct DpoConfig {
  double beta = 2500.0;
  std::string omega = "constant";  // or "linear": 1 - tau
  bool shared_noise = true;
  double learning_rate = 1e-8;
  int warmup_steps = 2500;
  int steps = 12000;
  int batch_size = 8;
  double min_margin = prefs::kDefaultMinMargin;

  void validate() const;
};

double omega_weight(const std::string& omega, double tau);

struct DpoBatchItem {
  prefs::PreferencePair pair;
  std::size_t condition = 0;  // index into the caller's conditioning table
  Mat x0_w, x0_l;
  double tau = 0.5;
  Mat eps_w, eps_l;
};

/// Draws tau ~ U(0, 1) and the branch noise; with shared noise eps_l == eps_w.
DpoBatchItem make_item(const prefs::PreferencePair& pair, std::size_t condition, Mat x0_w, Mat x0_l,
                       const DpoConfig& cfg, Rng& rng);

ad::Var dpo_fm_loss(ad::Graph& g, const diffusion::GraphModel& theta, const diffusion::GraphModel& ref,
                    const DpoBatchItem& item, const DpoConfig& cfg, std::size_t index = 0);

/// Model + parameters evaluated as a diffusion::GraphModel with per-item conditioning.
diffusion::GraphModel bind_model(const models::ModelConfig& cfg, const models::Bound& params,
                                 const std::vector<models::Conditioning>& conditions,
                                 const std::vector<DpoBatchItem>* items = nullptr);

/// One optimizer update on the mean loss over `batch`. `reference` is never
/// written. Returns the pre-update mean loss.
double dpo_step(models::DenoiserParams& theta, const models::DenoiserParams& reference, const models::ModelConfig& model_cfg,
                const std::vector<DpoBatchItem>& batch, const std::vector<models::Conditioning>& conditions,
                const DpoConfig& cfg, optim::Optimizer& optimizer, const models::TrainableFn& trainable = {});

struct RewardProxy {
  double value = 0.0;
  double standard_error = 0.0;
};

/// Monte-Carlo surrogate for beta log(pi_theta(y) / pi_ref(y)):
///   -beta * mean_draws(|v - v_theta|^2 - |v - v_ref|^2), v = eps - y.
/// Not the exact likelihood ratio, which flow models do not expose.
RewardProxy implicit_reward_proxy(const models::ModelConfig& model_cfg, const models::DenoiserParams& theta,
                                  const models::DenoiserParams& reference, const Mat& y,
                                  const models::Conditioning& cond, const DpoConfig& cfg, int n_draws,
                                  std::uint64_t seed);

}  // namespace animpref::dpo
