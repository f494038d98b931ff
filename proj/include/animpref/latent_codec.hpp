#pragma once

// Fixed linear patch codec standing in for a pretrained causal video VAE.
// A video (T, H, W, C) is cut into non-overlapping (4, 8, 8, C) blocks; each
// block is flattened frame-major (then row, column, channel) and multiplied
// by a seeded matrix with orthonormal rows, giving a latent (T/4, H/8, W/8, d).

#include <array>
#include <cstdint>

#include "animpref/tensor.hpp"

namespace animpref::codec {

inline constexpr int kTemporalStride = 4;
inline constexpr int kSpatialStride = 8;

inline constexpr int block_size(int channels) { return kTemporalStride * kSpatialStride * kSpatialStride * channels; }

struct VideoTensor {
  Array4 data;  // (T, H, W, C), values in [-1, 1]
  /// (T, H, W) before pad_to_contract; equals the current shape otherwise.
  std::array<int, 3> original{0, 0, 0};

  VideoTensor() = default;
  VideoTensor(int t, int h, int w, int c) : data(t, h, w, c), original{t, h, w} {}
  explicit VideoTensor(Array4 a) : data(std::move(a)), original{data.shape[0], data.shape[1], data.shape[2]} {}

  int frames() const { return data.shape[0]; }
  int height() const { return data.shape[1]; }
  int width() const { return data.shape[2]; }
  int channels() const { return data.shape[3]; }
  double& at(int t, int y, int x, int c) { return data.at(t, y, x, c); }
  double at(int t, int y, int x, int c) const { return data.at(t, y, x, c); }
};

/// Latent Z of shape (T', H', W', d), stored as one token per row in
/// (t', h', w') row-major order: row = (t' * H' + h') * W' + w'.
struct LatentVideo {
  int t = 0, h = 0, w = 0, d = 0;
  Mat tokens;

  LatentVideo() = default;
  LatentVideo(int t_, int h_, int w_, int d_) : t(t_), h(h_), w(w_), d(d_), tokens(Mat::Zero(t_ * h_ * w_, d_)) {}

  int tokens_per_step() const { return h * w; }
  Array4 to_array() const;
  static LatentVideo from_array(const Array4& a);
};

struct CodecBasis {
  Mat projection;  // (d, 4*8*8*C), orthonormal rows
  int channels = 3;
  std::uint64_t seed = 0;

  int latent_dim() const { return int(projection.rows()); }
};

CodecBasis make_codec(int d, int channels, std::uint64_t seed);

/// Repeats the last frame until T is a positive multiple of 4 and
/// reflect-pads the bottom/right edges until H and W are multiples of 8.
VideoTensor pad_to_contract(const VideoTensor& video);

bool conforms(const VideoTensor& video);

LatentVideo encode(const VideoTensor& video, const CodecBasis& basis, bool pad = false);

/// `clamp` limits values to [-1, 1]; round-trip checks disable it.
VideoTensor decode(const LatentVideo& latent, const CodecBasis& basis, bool clamp = true);

}  // namespace animpref::codec
