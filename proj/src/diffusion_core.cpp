#include "animpref/diffusion_core.hpp"

#include <cmath>
#include <sstream>

namespace animpref::diffusion {

NoiseSchedule make_schedule(std::vector<double> betas) {
  if (betas.empty()) throw Error(ErrorKind::kOutOfRange, "noise schedule needs at least one step");
  NoiseSchedule s;
  double acc = 1.0;
  for (double b : betas) {
    if (!(b > 0.0 && b < 1.0)) throw Error(ErrorKind::kOutOfRange, "noise schedule betas must lie in (0, 1)");
    acc *= 1.0 - b;
    s.alphabars.push_back(acc);
  }
  s.betas = std::move(betas);
  return s;
}

NoiseSchedule linear_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw Error(ErrorKind::kOutOfRange, "linear_schedule: steps must be >= 1");
  std::vector<double> betas(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    const double f = steps == 1 ? 0.0 : double(i) / double(steps - 1);
    betas[std::size_t(i)] = beta_start + f * (beta_end - beta_start);
  }
  return make_schedule(std::move(betas));
}

Mat forward_marginal(const Mat& x0, int t, const Mat& eps, const NoiseSchedule& sched) {
  if (t < 1 || t > sched.steps()) {
    std::ostringstream os;
    os << "forward_marginal: step " << t << " outside [1, " << sched.steps() << "]";
    throw Error(ErrorKind::kOutOfRange, os.str());
  }
  if (x0.rows() != eps.rows() || x0.cols() != eps.cols()) throw Error(ErrorKind::kShapeMismatch, "forward_marginal: x0/eps shape");
  const double ab = sched.alphabar(t);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

FlowSample fm_interpolate(const Mat& x0, const Mat& eps, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw Error(ErrorKind::kOutOfRange, "fm_interpolate: tau outside [0, 1]");
  if (x0.rows() != eps.rows() || x0.cols() != eps.cols()) throw Error(ErrorKind::kShapeMismatch, "fm_interpolate: x0/eps shape");
  FlowSample s;
  s.x0 = x0;
  s.eps = eps;
  s.tau = tau;
  s.x_tau = (1.0 - tau) * x0 + tau * eps;
  s.v_target = eps - x0;
  return s;
}

ad::Var ddpm_loss(ad::Graph& g, const GraphNoiseModel& model, const Mat& x0, int t, const Mat& eps,
                  const NoiseSchedule& sched) {
  ad::Var pred = model(g, g.constant(forward_marginal(x0, t, eps, sched)), t);
  if (pred.rows() != eps.rows() || pred.cols() != eps.cols()) throw Error(ErrorKind::kShapeMismatch, "ddpm_loss: prediction shape");
  return ad::mean_sq_diff(pred, g.constant(eps));
}

ad::Var fm_loss(ad::Graph& g, const GraphModel& model, const std::vector<FlowSample>& batch) {
  if (batch.empty()) throw Error(ErrorKind::kShapeMismatch, "fm_loss: empty batch");
  std::vector<ad::Var> terms;
  terms.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    ad::Var pred = model(g, g.constant(batch[i].x_tau), batch[i].tau, i);
    if (pred.rows() != batch[i].v_target.rows() || pred.cols() != batch[i].v_target.cols())
      throw Error(ErrorKind::kShapeMismatch, "fm_loss: prediction shape");
    terms.push_back(ad::mean_sq_diff(pred, g.constant(batch[i].v_target)));
  }
  if (terms.size() == 1) return terms.front();
  return ad::mean(ad::vcat(terms));
}

Mat integrate_ode(const ValueModel& model, Mat x, int steps) {
  if (steps < 1) throw Error(ErrorKind::kOutOfRange, "sample_ode: steps must be >= 1");
  const double h = 1.0 / double(steps);
  for (int i = steps; i >= 1; --i) {
    const double tau = double(i) * h;
    x -= h * model(x, tau);
  }
  return x;
}

Mat sample_ode(const ValueModel& model, Eigen::Index rows, Eigen::Index cols, int steps, std::uint64_t seed) {
  Rng rng(seed);
  return integrate_ode(model, randn(rows, cols, rng), steps);
}

Mat sample_ddpm(const NoiseModel& model, Eigen::Index rows, Eigen::Index cols, const NoiseSchedule& sched,
                std::uint64_t seed) {
  Rng rng(seed);
  Mat x = randn(rows, cols, rng);
  for (int t = sched.steps(); t >= 1; --t) {
    const double beta = sched.beta(t), ab = sched.alphabar(t), ab_prev = sched.alphabar(t - 1);
    const Mat eps = model(x, t);
    Mat mean = (x - (beta / std::sqrt(1.0 - ab)) * eps) / std::sqrt(1.0 - beta);
    if (t > 1) {
      const double var = beta * (1.0 - ab_prev) / (1.0 - ab);
      mean += std::sqrt(var) * randn(rows, cols, rng);
    }
    x = std::move(mean);
  }
  return x;
}

}  // namespace animpref::diffusion
