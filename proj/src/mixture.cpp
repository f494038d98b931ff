#include "animpref/mixture.hpp"

#include "animpref/pipeline.hpp"

namespace animpref::pipeline {

namespace {

Mat component_rows(int n, const std::array<double, 2>& mean, double sd, Rng& rng) {
  Mat x = sd * randn(n, 2, rng);
  x.col(0).array() += mean[0];
  x.col(1).array() += mean[1];
  return x;
}

}  // namespace

Mat sample_mixture(int n, const MixtureConfig& cfg, Rng& rng, std::vector<bool>* from_a) {
  std::bernoulli_distribution pick_a(cfg.weight_a);
  Mat x(n, 2);
  if (from_a != nullptr) from_a->assign(std::size_t(n), false);
  for (int i = 0; i < n; ++i) {
    const bool a = pick_a(rng);
    x.row(i) = component_rows(1, a ? cfg.mean_a : cfg.mean_b, cfg.sd, rng);
    if (from_a != nullptr) (*from_a)[std::size_t(i)] = a;
  }
  return x;
}

Mat sample_component(int n, const MixtureConfig& cfg, bool a, Rng& rng) {
  return component_rows(n, a ? cfg.mean_a : cfg.mean_b, cfg.sd, rng);
}

double mode_a_mass(const Mat& x, const MixtureConfig& cfg) {
  if (x.rows() == 0) return 0.0;
  int count = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double da = (x(i, 0) - cfg.mean_a[0]) * (x(i, 0) - cfg.mean_a[0]) + (x(i, 1) - cfg.mean_a[1]) * (x(i, 1) - cfg.mean_a[1]);
    const double db = (x(i, 0) - cfg.mean_b[0]) * (x(i, 0) - cfg.mean_b[0]) + (x(i, 1) - cfg.mean_b[1]) * (x(i, 1) - cfg.mean_b[1]);
    if (da < db) ++count;
  }
  return double(count) / double(x.rows());
}

MixtureResult run_mixture_experiment(const MixtureConfig& cfg) {
  models::ModelConfig mc;
  mc.architecture = models::Architecture::kMlp;
  mc.d = 2;
  mc.hidden = cfg.hidden;
  mc.hidden_layers = cfg.hidden_layers;
  mc.time_features = cfg.time_features;
  mc.use_audio = mc.use_skeleton = false;

  MixtureResult result;
  result.true_mass_a = cfg.weight_a;
  Rng rng(cfg.seed);

  // A fixed training pool keeps the run reproducible and cheap.
  std::vector<Mat> pool;
  for (int i = 0; i < 256; ++i) pool.push_back(sample_mixture(cfg.rows_per_item, cfg, rng));
  const std::vector<models::Conditioning> none(pool.size());
  PhasePlan plan = default_plan(Phase::kSft);
  plan.steps = cfg.train_steps;
  plan.learning_rate = cfg.learning_rate;
  plan.warmup_steps = cfg.train_steps / 20;
  plan.batch_size = cfg.batch_items;
  plan.seed = mix_seed(cfg.seed, 1);
  PhaseResult base = train_fm(plan, mc, models::init_params(mc, mix_seed(cfg.seed, 2)), pool, none);
  result.fm_losses = base.losses;

  const auto mass = [&](const models::DenoiserParams& p) {
    return mode_a_mass(sample_latent(mc, p, models::Conditioning{}, cfg.n_samples, cfg.ode_steps, mix_seed(cfg.seed, 3)), cfg);
  };
  result.mass_a_before = mass(base.params);

  // Every pair prefers a draw from component A over a draw from component B.
  DpoData data;
  const int n_pairs = 64;
  for (int k = 0; k < n_pairs; ++k) {
    const std::string w = "a" + std::to_string(k), l = "b" + std::to_string(k);
    data.pairs.push_back({"mixture", w, l, 1.0});
    data.condition.push_back(0);
    data.latents.emplace(w, sample_component(cfg.rows_per_item, cfg, true, rng));
    data.latents.emplace(l, sample_component(cfg.rows_per_item, cfg, false, rng));
  }
  dpo::DpoConfig dc;
  dc.beta = cfg.dpo_beta;
  dc.learning_rate = cfg.dpo_learning_rate;
  dc.steps = cfg.dpo_steps;
  dc.warmup_steps = cfg.dpo_steps / 10;
  dc.batch_size = cfg.batch_items;
  PhaseResult tuned = train_dpo(dpo_plan(dc, mix_seed(cfg.seed, 4)), dc, mc, base.params, data,
                                std::vector<models::Conditioning>(1));
  result.dpo_losses = tuned.losses;
  result.mass_a_after = mass(tuned.params);
  return result;
}

}  // namespace animpref::pipeline
