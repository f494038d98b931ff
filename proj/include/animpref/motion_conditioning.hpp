#pragma once

// Motion conditions at frame rate, their redistribution to latent rate, the
// latent-space projection and the per-step cross-attention fusion.

#include <filesystem>
#include <string>
#include <vector>

#include "animpref/latent_codec.hpp"
#include "animpref/tensor.hpp"

namespace animpref::motion {

enum class Modality { kAudio, kSkeleton };
const char* to_string(Modality m);
Modality modality_from_string(const std::string& s);

struct AudioWaveform {
  std::vector<double> samples;
  double sample_rate = 0.0;
  double frame_rate = 0.0;

  double samples_per_frame() const { return sample_rate / frame_rate; }
};

/// Keypoints (T, J, 3): x, y normalized to [0, 1] and a confidence in [0, 1].
struct SkeletonSequence {
  int frames = 0;
  int joints = 0;
  std::vector<double> keypoints;
  double frame_rate = 25.0;

  double& at(int t, int j, int k) { return keypoints[(std::size_t(t) * joints + j) * 3 + k]; }
  double at(int t, int j, int k) const { return keypoints[(std::size_t(t) * joints + j) * 3 + k]; }
};

/// C_m of shape (T, D_m, d_m). Row t * D_m + u of `data` holds feature vector (t, u).
struct MotionCondition {
  Modality modality = Modality::kAudio;
  int frames = 0;
  int tokens = 0;  // D_m
  Mat data;        // (T * D_m, d_m)
  double frame_rate = 25.0;

  int channels() const { return int(data.cols()); }
  auto row(int t, int u) const { return data.row(std::size_t(t) * tokens + u); }
};

/// Condition at latent temporal resolution: (T', rho * D_m, d_m), row t' * tokens + j.
struct ReshapedCondition {
  Modality modality = Modality::kAudio;
  int steps = 0;
  int tokens = 0;
  int rho = 1;
  Mat data;

  int channels() const { return int(data.cols()); }
};

/// Projected condition H_m of shape (T', tokens, d).
struct MotionEmbedding {
  int steps = 0;
  int tokens = 0;
  Mat data;

  int width() const { return int(data.cols()); }
};

struct Projection {
  Mat weight;  // (d_m, d)
  Mat bias;    // (1, d)
};

struct FusionParams {
  Mat w_q, w_k, w_v;  // (d, d)
};

MotionCondition encode_audio(const AudioWaveform& wave, int n_sub, int n_features, int frames = 0);

/// Splats each joint as an isotropic Gaussian (sigma = 1 cell) on an
/// (H', W') grid. Returns (T * H' * W', J) with one column per joint group.
Mat rasterize_skeleton(const SkeletonSequence& skel, int grid_h, int grid_w);

/// Rasterized maps projected to d_k channels with `joint_projection` (J, d_k).
MotionCondition encode_skeleton(const SkeletonSequence& skel, int grid_h, int grid_w, const Mat& joint_projection);

ReshapedCondition reshape_temporal(const MotionCondition& cond, int rho);
MotionCondition inverse_reshape(const ReshapedCondition& cond, int rho);
MotionEmbedding project(const ReshapedCondition& cond, const Projection& proj);

struct FuseResult {
  codec::LatentVideo fused;
  std::vector<Mat> attention;  // one (H'W', keys) matrix per latent step
};

FuseResult fuse_detailed(const codec::LatentVideo& z, const std::vector<MotionEmbedding>& embeddings,
                         const FusionParams& params);
codec::LatentVideo fuse(const codec::LatentVideo& z, const std::vector<MotionEmbedding>& embeddings,
                        const FusionParams& params);

MotionCondition subsample_baseline(const MotionCondition& cond, int rho);
ReshapedCondition partial_expand(const MotionCondition& cond, int rho, int k);

/// How frame-rate conditions reach latent rate.
enum class Strategy { kFull, kPartialK2, kSubsample };
const char* to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);
/// Token rows per latent step produced by `s` for a condition with D_m tokens.
int tokens_per_step(Strategy s, int rho, int d_m_tokens);
ReshapedCondition apply_strategy(const MotionCondition& cond, int rho, Strategy s);

// .ten payload (T, D_m, d_m) plus `<path>.json` manifest {modality, frame_rate, shape}.
void save_condition(const std::filesystem::path& path, const MotionCondition& cond);
MotionCondition load_condition(const std::filesystem::path& path);
// .ten payload (T, J, 3) plus manifest.
void save_skeleton(const std::filesystem::path& path, const SkeletonSequence& skel);
SkeletonSequence load_skeleton(const std::filesystem::path& path);

}  // namespace animpref::motion
