#pragma once

// Central finite-difference checks of reverse-mode gradients.

#include <cstdint>
#include <string>
#include <vector>

#include "animpref/toy_models.hpp"

namespace animpref::gradcheck {

struct Options {
  double step = 1e-5;
  double rel_tol = 1e-4;
  // Coordinates where both gradients are below this are counted as agreeing
  // when their absolute difference is too.
  double abs_floor = 1e-8;
};

struct Result {
  std::string name;
  std::size_t coordinates = 0;
  std::size_t within_tol = 0;
  double max_rel_error = 0.0;
  std::string worst_coordinate;  // "param[i,j]"

  double fraction_within() const { return coordinates == 0 ? 1.0 : double(within_tol) / double(coordinates); }
  /// At least 99% of coordinates within tolerance and none above 10x tolerance.
  bool passed(const Options& opt = {}) const { return fraction_within() >= 0.99 && max_rel_error < 10.0 * opt.rel_tol; }
};

double relative_error(double analytic, double numeric, double abs_floor);

/// Compares models::grad against central differences of `loss_fn` over every
/// trainable coordinate.
Result check(const std::string& name, const models::DenoiserParams& params, const models::LossFn& loss_fn,
             const Options& opt = {}, const models::TrainableFn& trainable = {});

/// The fixed suites: flow-matching and preference losses on the MLP and on a
/// one-block transformer with audio and skeleton conditioning.
std::vector<Result> run_standard_suites(std::uint64_t seed = 0, const Options& opt = {});

}  // namespace animpref::gradcheck
