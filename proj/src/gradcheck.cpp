#include "animpref/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "animpref/diffusion_core.hpp"
#include "animpref/dpo_optimizer.hpp"

namespace animpref::gradcheck {

double relative_error(double analytic, double numeric, double abs_floor) {
  const double diff = std::abs(analytic - numeric);
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  if (scale < abs_floor) return diff < abs_floor ? 0.0 : diff / abs_floor;
  return diff / scale;
}

Result check(const std::string& name, const models::DenoiserParams& params, const models::LossFn& loss_fn,
             const Options& opt, const models::TrainableFn& trainable) {
  const models::Gradients analytic = models::grad(params, loss_fn, trainable);
  const auto eval = [&](const models::DenoiserParams& p) {
    ad::Graph g;
    const auto frozen = [](const std::string&) { return false; };
    models::Bound b(g, p, frozen);
    return loss_fn(g, b).scalar();
  };
  Result r;
  r.name = name;
  models::DenoiserParams work = params;
  for (auto& [pname, m] : work.tensors) {
    if (trainable && !trainable(pname)) continue;
    const Mat& ga = analytic.tensors.at(pname);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        const double saved = m(i, j);
        m(i, j) = saved + opt.step;
        const double up = eval(work);
        m(i, j) = saved - opt.step;
        const double down = eval(work);
        m(i, j) = saved;
        const double numeric = (up - down) / (2.0 * opt.step);
        const double e = relative_error(ga(i, j), numeric, opt.abs_floor);
        ++r.coordinates;
        if (e < opt.rel_tol) ++r.within_tol;
        if (e > r.max_rel_error) {
          r.max_rel_error = e;
          r.worst_coordinate = pname + "[" + std::to_string(i) + "," + std::to_string(j) + "]";
        }
      }
  }
  return r;
}

namespace {

models::ModelConfig mlp_config() {
  models::ModelConfig c;
  c.architecture = models::Architecture::kMlp;
  c.d = 2;
  c.time_features = 8;
  c.hidden = 16;
  c.hidden_layers = 2;
  return c;
}

models::ModelConfig transformer_config() {
  models::ModelConfig c;
  c.n_blocks = 1;
  c.d = 8;
  c.n_heads = 2;
  c.d_ff = 16;
  c.time_features = 8;
  c.steps = 2;
  c.grid_h = 2;
  c.grid_w = 2;
  c.audio_tokens = 2;
  c.audio_features = 3;
  c.joints = 2;
  c.skeleton_features = 3;
  return c;
}

models::Conditioning random_conditioning(const models::ModelConfig& c, Rng& rng) {
  models::Conditioning cond;
  if (c.architecture != models::Architecture::kTransformer) return cond;
  cond.audio = randn(c.steps * c.audio_tokens_per_step(), c.audio_features, rng);
  cond.skeleton = randn(c.steps * c.skeleton_tokens_per_step(), c.joints, rng).cwiseAbs();
  return cond;
}

// Perturbs every parameter slightly so the policy differs from the reference
// and no coordinate sits exactly on a symmetric point.
models::DenoiserParams jitter(models::DenoiserParams p, Rng& rng, double scale) {
  for (auto& [name, m] : p.tensors) m += scale * randn(m.rows(), m.cols(), rng);
  return p;
}

}  // namespace

std::vector<Result> run_standard_suites(std::uint64_t seed, const Options& opt) {
  std::vector<Result> out;
  Rng rng(seed);
  for (const models::ModelConfig& cfg : {mlp_config(), transformer_config()}) {
    const std::string arch = models::to_string(cfg.architecture);
    const int rows = cfg.architecture == models::Architecture::kMlp ? 6 : cfg.tokens();
    const models::DenoiserParams params = models::init_params(cfg, seed + 1, false);
    const models::Conditioning cond = random_conditioning(cfg, rng);

    std::vector<diffusion::FlowSample> batch;
    for (int i = 0; i < 2; ++i)
      batch.push_back(diffusion::fm_interpolate(randn(rows, cfg.d, rng), randn(rows, cfg.d, rng), 0.2 + 0.5 * i));
    const models::LossFn fm = [&](ad::Graph& g, const models::Bound& b) {
      const diffusion::GraphModel model = [&](ad::Graph&, ad::Var x, double tau, std::size_t) {
        return models::forward(cfg, b, x, tau, cond);
      };
      return diffusion::fm_loss(g, model, batch);
    };
    out.push_back(check(arch + " fm_loss", params, fm, opt));

    // The preference loss at beta = 2500 saturates for all but tiny policy
    // differences, so the policy sits just off the reference.
    dpo::DpoConfig dc;
    const models::DenoiserParams reference = params;
    const models::DenoiserParams theta = jitter(params, rng, 1e-4);
    const std::vector<models::Conditioning> conds{cond};
    prefs::PreferencePair pair{"c", "w", "l", 1.0};
    dpo::DpoBatchItem item = dpo::make_item(pair, 0, randn(rows, cfg.d, rng), randn(rows, cfg.d, rng), dc, rng);
    const std::vector<dpo::DpoBatchItem> items{item};
    const models::LossFn dl = [&](ad::Graph& g, const models::Bound& b) {
      const auto frozen = [](const std::string&) { return false; };
      const models::Bound rb(g, reference, frozen);
      return dpo::dpo_fm_loss(g, dpo::bind_model(cfg, b, conds, &items), dpo::bind_model(cfg, rb, conds, &items), item, dc);
    };
    out.push_back(check(arch + " dpo_fm_loss", theta, dl, opt));
  }
  return out;
}

}  // namespace animpref::gradcheck
