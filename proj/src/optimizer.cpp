#include "animpref/optimizer.hpp"

#include <algorithm>
#include <cmath>

namespace animpref::optim {

const char* to_string(Kind k) { return k == Kind::kSgd ? "sgd" : "adamw"; }

Kind kind_from_string(const std::string& s) {
  if (s == "sgd") return Kind::kSgd;
  if (s == "adamw") return Kind::kAdamW;
  throw Error(ErrorKind::kInvalidConfig, "unknown optimizer: " + s);
}

double Optimizer::current_lr() const {
  if (cfg_.warmup_steps <= 0) return cfg_.learning_rate;
  return cfg_.learning_rate * std::min(1.0, double(step_ + 1) / double(cfg_.warmup_steps));
}

void Optimizer::step(models::DenoiserParams& params, const models::Gradients& grads, const models::TrainableFn& trainable) {
  for (const auto& [name, g] : grads.tensors) {
    if (!g.allFinite()) throw Error(ErrorKind::kNonFinite, "optimizer: non-finite gradient for " + name);
  }
  const double lr = current_lr();
  ++step_;
  for (auto& [name, p] : params.tensors) {
    if (trainable && !trainable(name)) continue;
    auto it = grads.tensors.find(name);
    if (it == grads.tensors.end()) continue;
    const Mat& g = it->second;
    if (cfg_.kind == Kind::kSgd) {
      p -= lr * g;
    } else {
      adam_update(name, p, g, lr);
    }
    if (!p.allFinite()) throw Error(ErrorKind::kNonFinite, "optimizer: parameter " + name + " became non-finite at step " + std::to_string(step_));
  }
}

void Optimizer::adam_update(const std::string& name, Mat& p, const Mat& g, double lr) {
  Mat& m = m_.try_emplace(name, Mat::Zero(p.rows(), p.cols())).first->second;
  Mat& v = v_.try_emplace(name, Mat::Zero(p.rows(), p.cols())).first->second;
  m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
  v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
  const double c1 = 1.0 - std::pow(cfg_.beta1, step_);
  const double c2 = 1.0 - std::pow(cfg_.beta2, step_);
  const Mat update = (m / c1).array() / ((v / c2).array().sqrt() + cfg_.eps);
  p -= lr * (update + cfg_.weight_decay * p);
}

}  // namespace animpref::optim
