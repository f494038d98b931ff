#include "animpref/dpo_optimizer.hpp"

#include <cmath>

namespace animpref::dpo {

void DpoConfig::validate() const {
  if (!(beta > 0.0)) throw Error(ErrorKind::kInvalidConfig, "dpo.beta must be > 0");
  omega_weight(omega, 0.5);
  if (learning_rate < 0.0) throw Error(ErrorKind::kInvalidConfig, "dpo.learning_rate must be >= 0");
  if (warmup_steps < 0 || steps < 0 || batch_size < 1) throw Error(ErrorKind::kInvalidConfig, "dpo step counts invalid");
  if (min_margin < 0.0) throw Error(ErrorKind::kInvalidConfig, "dpo.min_margin must be >= 0");
}

double omega_weight(const std::string& omega, double tau) {
  if (omega == "constant") return 1.0;
  if (omega == "linear") return 1.0 - tau;
  throw Error(ErrorKind::kInvalidConfig, "unknown omega weighting: " + omega);
}

DpoBatchItem make_item(const prefs::PreferencePair& pair, std::size_t condition, Mat x0_w, Mat x0_l,
                       const DpoConfig& cfg, Rng& rng) {
  if (x0_w.rows() != x0_l.rows() || x0_w.cols() != x0_l.cols()) throw Error(ErrorKind::kShapeMismatch, "make_item: winner/loser shape");
  DpoBatchItem item;
  item.pair = pair;
  item.condition = condition;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  item.tau = u01(rng);
  item.eps_w = randn(x0_w.rows(), x0_w.cols(), rng);
  item.eps_l = cfg.shared_noise ? item.eps_w : randn(x0_l.rows(), x0_l.cols(), rng);
  item.x0_w = std::move(x0_w);
  item.x0_l = std::move(x0_l);
  return item;
}

ad::Var dpo_fm_loss(ad::Graph& g, const diffusion::GraphModel& theta, const diffusion::GraphModel& ref,
                    const DpoBatchItem& item, const DpoConfig& cfg, std::size_t index) {
  const auto w = diffusion::fm_interpolate(item.x0_w, item.eps_w, item.tau);
  const auto l = diffusion::fm_interpolate(item.x0_l, item.eps_l, item.tau);
  const auto branch = [&](const diffusion::FlowSample& s) {
    ad::Var target = g.constant(s.v_target);
    ad::Var x = g.constant(s.x_tau);
    ad::Var pt = theta(g, x, s.tau, index);
    ad::Var pr = ref(g, x, s.tau, index);
    if (!pt.value().allFinite() || !pr.value().allFinite()) throw Error(ErrorKind::kNonFinite, "dpo_fm_loss: non-finite model output");
    return ad::mean_sq_diff(pt, target) - g.constant(Mat::Constant(1, 1, ad::mean_sq_diff(pr, target).scalar()));
  };
  ad::Var delta_w = branch(w);
  ad::Var delta_l = branch(l);
  const double k = -cfg.beta * omega_weight(cfg.omega, item.tau);
  return -1.0 * ad::log_sigmoid(k * (delta_w - delta_l));
}

diffusion::GraphModel bind_model(const models::ModelConfig& cfg, const models::Bound& params,
                                 const std::vector<models::Conditioning>& conditions,
                                 const std::vector<DpoBatchItem>* items) {
  return [&cfg, &params, &conditions, items](ad::Graph&, ad::Var x, double tau, std::size_t index) {
    const std::size_t c = items != nullptr ? (*items)[index].condition : index;
    static const models::Conditioning kNone;
    const models::Conditioning& cond = c < conditions.size() ? conditions[c] : kNone;
    return models::forward(cfg, params, x, tau, cond);
  };
}

double dpo_step(models::DenoiserParams& theta, const models::DenoiserParams& reference, const models::ModelConfig& model_cfg,
                const std::vector<DpoBatchItem>& batch, const std::vector<models::Conditioning>& conditions,
                const DpoConfig& cfg, optim::Optimizer& optimizer, const models::TrainableFn& trainable) {
  if (batch.empty()) throw Error(ErrorKind::kShapeMismatch, "dpo_step: empty batch");
  const auto loss_fn = [&](ad::Graph& g, const models::Bound& bound) {
    const auto frozen = [](const std::string&) { return false; };
    const models::Bound ref_bound(g, reference, frozen);
    const auto theta_model = bind_model(model_cfg, bound, conditions, &batch);
    const auto ref_model = bind_model(model_cfg, ref_bound, conditions, &batch);
    std::vector<ad::Var> losses;
    for (std::size_t i = 0; i < batch.size(); ++i) losses.push_back(dpo_fm_loss(g, theta_model, ref_model, batch[i], cfg, i));
    return losses.size() == 1 ? losses.front() : ad::mean(ad::vcat(losses));
  };
  const models::Gradients grads = models::grad(theta, loss_fn, trainable);
  optimizer.step(theta, grads, trainable);
  return grads.loss;
}

RewardProxy implicit_reward_proxy(const models::ModelConfig& model_cfg, const models::DenoiserParams& theta,
                                  const models::DenoiserParams& reference, const Mat& y,
                                  const models::Conditioning& cond, const DpoConfig& cfg, int n_draws,
                                  std::uint64_t seed) {
  if (n_draws < 1) throw Error(ErrorKind::kOutOfRange, "implicit_reward_proxy: n_draws must be >= 1");
  Rng rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<double> deltas;
  deltas.reserve(std::size_t(n_draws));
  for (int i = 0; i < n_draws; ++i) {
    const double tau = u01(rng);
    const auto s = diffusion::fm_interpolate(y, randn(y.rows(), y.cols(), rng), tau);
    const Mat pt = models::predict(model_cfg, theta, s.x_tau, tau, cond);
    const Mat pr = models::predict(model_cfg, reference, s.x_tau, tau, cond);
    const double n = double(y.size());
    deltas.push_back((s.v_target - pt).squaredNorm() / n - (s.v_target - pr).squaredNorm() / n);
  }
  double m = 0;
  for (double d : deltas) m += d;
  m /= double(n_draws);
  double var = 0;
  for (double d : deltas) var += (d - m) * (d - m);
  var = n_draws > 1 ? var / double(n_draws - 1) : 0.0;
  return {-cfg.beta * m, cfg.beta * std::sqrt(var / double(n_draws))};
}

}  // namespace animpref::dpo
