#pragma once

// Synthetic talking-head benchmark. Each task renders a face-like layout:
// a static head ellipse (red), a mouth rectangle (blue) whose intensity is
// an affine function of an aperture trajectory, and a hand Gaussian blob
// (green) that follows the wrist joint of the skeleton. The audio is an
// amplitude-modulated two-tone carrier whose per-frame envelope equals the
// aperture.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "animpref/latent_codec.hpp"
#include "animpref/motion_conditioning.hpp"

namespace animpref::pipeline {

inline constexpr int kChannels = 3;
inline constexpr int kRed = 0, kGreen = 1, kBlue = 2;
inline constexpr int kJoints = 3;  // head, mouth, wrist
inline constexpr int kWristJoint = 2;

struct FaceLayout {
  int mouth_top = 0, mouth_bottom = 0, mouth_left = 0, mouth_right = 0;  // half-open pixel box
  double head_cy = 0, head_cx = 0, head_ry = 0, head_rx = 0;
  double hand_sigma = 2.0;
  double hand_y_min = 0, hand_y_max = 0, hand_x_min = 0, hand_x_max = 0;
  int hand_top = 0;  // rows >= hand_top form the hand search band
};

FaceLayout layout_for(int height, int width);

enum class Envelope { kRandom, kConstant, kZero };

struct SynthOptions {
  double sample_rate = 3200.0;
  double frame_rate = 25.0;
  Envelope envelope = Envelope::kRandom;
};

struct SynthTask {
  std::string id;
  std::uint64_t seed = 0;
  int frames = 0, height = 0, width = 0;
  motion::AudioWaveform audio;
  motion::SkeletonSequence skeleton;
  codec::VideoTensor video;
  std::vector<double> aperture;              // per frame, in [0, 1]
  std::vector<std::array<double, 2>> hand;   // per frame (x, y) in pixels
};

/// Fully determined by (seed, T, H, W, options).
SynthTask gen_task(std::uint64_t seed, int frames, int height, int width, const SynthOptions& opts = {});

/// Blue-channel mean over the mouth box, per frame.
std::vector<double> mouth_intensity(const codec::VideoTensor& video, const FaceLayout& layout);

/// Brightest-blob detector: centroid of the positive green excess around the
/// brightest green pixel in the hand band, per frame, as (x, y).
std::vector<std::array<double, 2>> detect_hand(const codec::VideoTensor& video, const FaceLayout& layout);

/// Sum of the temporal variances of the x and y centroid.
double motion_variance(const std::vector<std::array<double, 2>>& track);

void save_task(const std::filesystem::path& dir, const SynthTask& task);
SynthTask load_task(const std::filesystem::path& dir);
std::vector<SynthTask> load_tasks(const std::filesystem::path& data_dir);

}  // namespace animpref::pipeline
