#pragma once

// Forward noising and noise-prediction loss for the DDPM path, plus the
// linear-path flow-matching interpolant, velocity loss and Euler sampler.
//
// Conventions: diffusion steps are integers t in [1, T_steps]; flow time is
// tau in [0, 1] with data at tau = 0 and noise at tau = 1.

#include <cstdint>
#include <functional>
#include <vector>

#include "animpref/autodiff.hpp"

namespace animpref::diffusion {

struct NoiseSchedule {
  std::vector<double> betas;      // beta_1 .. beta_T
  std::vector<double> alphabars;  // prod_{s<=t} (1 - beta_s)

  int steps() const { return int(betas.size()); }
  double beta(int t) const { return betas.at(std::size_t(t - 1)); }
  double alphabar(int t) const { return t == 0 ? 1.0 : alphabars.at(std::size_t(t - 1)); }
};

NoiseSchedule make_schedule(std::vector<double> betas);
NoiseSchedule linear_schedule(int steps = 1000, double beta_start = 1e-4, double beta_end = 2e-2);

/// sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
Mat forward_marginal(const Mat& x0, int t, const Mat& eps, const NoiseSchedule& sched);

struct FlowSample {
  Mat x0;
  Mat eps;
  double tau = 0.0;
  Mat x_tau;     // (1 - tau) x0 + tau eps
  Mat v_target;  // eps - x0
};

FlowSample fm_interpolate(const Mat& x0, const Mat& eps, double tau);

/// Model evaluated inside a graph. `item` is the index of the sample within
/// the batch so callers can attach per-sample conditioning.
using GraphModel = std::function<ad::Var(ad::Graph&, ad::Var x, double tau, std::size_t item)>;
using ValueModel = std::function<Mat(const Mat& x, double tau)>;
using GraphNoiseModel = std::function<ad::Var(ad::Graph&, ad::Var x, int t)>;
using NoiseModel = std::function<Mat(const Mat& x, int t)>;

/// Mean squared error between eps and the noise prediction at x_t.
ad::Var ddpm_loss(ad::Graph& g, const GraphNoiseModel& model, const Mat& x0, int t, const Mat& eps,
                  const NoiseSchedule& sched);

/// Mean over the batch of the per-element mean squared velocity error.
ad::Var fm_loss(ad::Graph& g, const GraphModel& model, const std::vector<FlowSample>& batch);

/// Euler integration from tau = 1 down to tau = 0 with uniform step 1/steps,
/// starting at `x1`.
Mat integrate_ode(const ValueModel& model, Mat x1, int steps);
/// integrate_ode from seeded standard normal noise of the given shape.
Mat sample_ode(const ValueModel& model, Eigen::Index rows, Eigen::Index cols, int steps, std::uint64_t seed);

/// Ancestral sampling with the posterior mean from the predicted noise and
/// posterior variance beta_t (1 - abar_{t-1}) / (1 - abar_t).
Mat sample_ddpm(const NoiseModel& model, Eigen::Index rows, Eigen::Index cols, const NoiseSchedule& sched,
                std::uint64_t seed);

}  // namespace animpref::diffusion
