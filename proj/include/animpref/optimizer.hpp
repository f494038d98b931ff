#pragma once

#include <map>
#include <string>

#include "animpref/toy_models.hpp"

namespace animpref::optim {

enum class Kind { kSgd, kAdamW };
const char* to_string(Kind k);
Kind kind_from_string(const std::string& s);

struct OptimizerConfig {
  Kind kind = Kind::kAdamW;
  double learning_rate = 1e-5;
  int warmup_steps = 0;  // linear ramp from lr / warmup to lr
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// First-order optimizer state. Only parameters accepted by `trainable` move.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}

  double current_lr() const;
  void step(models::DenoiserParams& params, const models::Gradients& grads, const models::TrainableFn& trainable = {});
  int steps_taken() const { return step_; }
  const OptimizerConfig& config() const { return cfg_; }

 private:
  void adam_update(const std::string& name, Mat& p, const Mat& g, double lr);

  OptimizerConfig cfg_;
  int step_ = 0;
  std::map<std::string, Mat> m_, v_;
};

}  // namespace animpref::optim
