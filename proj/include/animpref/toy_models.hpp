#pragma once

// Desk-scale denoisers: a small transformer over latent tokens with
// self-attention, per-step motion cross-attention and an added time
// embedding; and a plain MLP for low-dimensional distributions.

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "animpref/autodiff.hpp"
#include "animpref/motion_conditioning.hpp"

namespace animpref::models {

enum class Architecture { kTransformer, kMlp };
const char* to_string(Architecture a);
Architecture architecture_from_string(const std::string& s);

struct ModelConfig {
  Architecture architecture = Architecture::kTransformer;
  int n_blocks = 2;
  int d = 16;  // model width == latent channels (or data dimension for the MLP)
  int n_heads = 4;
  int d_ff = 32;
  int time_features = 16;

  // Transformer latent grid.
  int steps = 4;
  int grid_h = 4;
  int grid_w = 4;
  bool positional = true;

  // Motion branch. rho is the latent temporal compression ratio.
  motion::Strategy conditioning = motion::Strategy::kFull;
  int rho = 4;
  bool use_audio = true;
  int audio_tokens = 4;    // N_a
  int audio_features = 6;  // d_a
  bool use_skeleton = true;
  int joints = 3;             // J
  int skeleton_features = 4;  // d_k

  // MLP.
  int hidden = 64;
  int hidden_layers = 2;

  int tokens() const { return steps * grid_h * grid_w; }
  int audio_tokens_per_step() const { return motion::tokens_per_step(conditioning, rho, audio_tokens); }
  int skeleton_tokens_per_step() const { return motion::tokens_per_step(conditioning, rho, grid_h * grid_w); }
  void validate() const;
};

/// Named parameter tensors, ordered by name.
struct DenoiserParams {
  std::map<std::string, Mat> tensors;
  std::uint64_t seed = 0;

  std::size_t count() const;
  const Mat& at(const std::string& name) const;
  bool contains(const std::string& name) const { return tensors.count(name) != 0; }
};

/// Fan-in scaled normal initialization; the output map (unembedding) is
/// zero unless `zero_unembed` is false.
DenoiserParams init_params(const ModelConfig& cfg, std::uint64_t seed, bool zero_unembed = true);

/// Frame-rate conditions brought to latent rate by the configured strategy.
/// An empty matrix means the modality is absent.
struct Conditioning {
  Mat audio;     // (T' * audio_tokens_per_step, d_a)
  Mat skeleton;  // (T' * skeleton_tokens_per_step, J) raster maps

  bool empty() const { return audio.size() == 0 && skeleton.size() == 0; }
};

Conditioning prepare_conditioning(const ModelConfig& cfg, const motion::MotionCondition* audio,
                                  const motion::SkeletonSequence* skeleton);

using TrainableFn = std::function<bool(const std::string&)>;

/// Parameters placed in a graph. Trainable ones are leaves, the rest constants.
class Bound {
 public:
  Bound(ad::Graph& g, const DenoiserParams& params, const TrainableFn& trainable = {});
  ad::Var operator[](const std::string& name) const;
  const std::map<std::string, ad::Var>& vars() const { return vars_; }

 private:
  std::map<std::string, ad::Var> vars_;
};

/// Sinusoidal features of flow time tau: (1, n) = [sin(w_k tau), cos(w_k tau)].
Mat time_features(double tau, int n);

/// Velocity (or noise) prediction with the same shape as `x`. Transformer
/// input is one latent as (T'*H'*W', d) tokens; MLP input is any number of
/// independent rows of width d.
ad::Var forward(const ModelConfig& cfg, const Bound& params, ad::Var x, double tau, const Conditioning& cond);

/// Value-only convenience wrapper around forward().
Mat predict(const ModelConfig& cfg, const DenoiserParams& params, const Mat& x, double tau, const Conditioning& cond);

/// Multi-head cross-attention of `queries` (steps * per_step rows) against
/// per-step key/value rows of `memory` (steps * keys_per_step rows), with
/// a residual connection. With one head this is the motion fusion operator.
ad::Var cross_attend(ad::Var queries_src, ad::Var residual, ad::Var memory, ad::Var w_q, ad::Var w_k, ad::Var w_v,
                     int steps, int keys_per_step, int heads);

struct Gradients {
  double loss = 0.0;
  std::map<std::string, Mat> tensors;  // zero for frozen parameters
};

using LossFn = std::function<ad::Var(ad::Graph&, const Bound&)>;

/// Reverse-mode gradient of `loss_fn` with respect to trainable parameters.
/// Throws Error(kNonFinite) naming the parameter when a gradient is not finite.
Gradients grad(const DenoiserParams& params, const LossFn& loss_fn, const TrainableFn& trainable = {});

}  // namespace animpref::models
