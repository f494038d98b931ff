#include "animpref/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "animpref/tensor_io.hpp"

namespace animpref::pipeline {

namespace {

constexpr double kHeadLevel = 0.6;
constexpr double kHandLevel = 0.9;
constexpr double kMouthLow = -0.8, kMouthSpan = 1.6;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

std::vector<double> random_envelope(Rng& rng, int frames) {
  // Sum of three sinusoids between 1 cycle per clip and just under the
  // frame-rate Nyquist limit.
  const double nyquist = 0.5 * frames;
  std::array<double, 3> amp{}, freq{}, phase{};
  for (int k = 0; k < 3; ++k) {
    amp[k] = uniform(rng, 0.1, 0.25);
    freq[k] = uniform(rng, 1.0, std::max(1.0, nyquist - 0.5));
    phase[k] = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  }
  std::vector<double> e(static_cast<std::size_t>(frames));
  for (int t = 0; t < frames; ++t) {
    double v = 0.5;
    for (int k = 0; k < 3; ++k) v += amp[k] * std::sin(2.0 * std::numbers::pi * freq[k] * t / frames + phase[k]);
    e[std::size_t(t)] = std::clamp(v, 0.02, 0.98);
  }
  return e;
}

nlohmann::json read_json(const std::filesystem::path& p) {
  std::ifstream is(p);
  if (!is) throw Error(ErrorKind::kIo, "cannot open " + p.string());
  return nlohmann::json::parse(is);
}

}  // namespace

FaceLayout layout_for(int height, int width) {
  FaceLayout l;
  l.mouth_top = height / 2;
  l.mouth_bottom = height * 3 / 4;
  l.mouth_left = width / 4;
  l.mouth_right = width * 3 / 4;
  l.head_cy = 0.375 * height;
  l.head_cx = 0.5 * width;
  l.head_ry = 0.34 * height;
  l.head_rx = 0.28 * width;
  l.hand_sigma = std::max(1.0, width / 16.0);
  l.hand_top = height * 3 / 4;
  l.hand_y_min = l.hand_top + 1.0;
  l.hand_y_max = height - 3.0;
  l.hand_x_min = 0.125 * width;
  l.hand_x_max = 0.875 * width;
  return l;
}

SynthTask gen_task(std::uint64_t seed, int frames, int height, int width, const SynthOptions& opts) {
  if (frames < 1 || height < 8 || width < 8) throw Error(ErrorKind::kOutOfRange, "gen_task: video too small");
  Rng rng(seed);
  const FaceLayout l = layout_for(height, width);
  SynthTask task;
  std::string digits = std::to_string(seed);
  if (digits.size() < 6) digits.insert(0, 6 - digits.size(), '0');
  task.id = "task_" + digits;
  task.seed = seed;
  task.frames = frames;
  task.height = height;
  task.width = width;

  // Draw everything up front so the envelope mode does not shift the hand.
  std::vector<double> envelope = random_envelope(rng, frames);
  const double constant_level = uniform(rng, 0.3, 0.7);
  if (opts.envelope == Envelope::kConstant) std::fill(envelope.begin(), envelope.end(), constant_level);
  if (opts.envelope == Envelope::kZero) std::fill(envelope.begin(), envelope.end(), 0.0);
  task.aperture = envelope;

  // Audio: the carrier tones complete whole periods in every sub-frame window
  // of 1/4 frame, so the windowed RMS recovers the envelope exactly.
  const double spf = opts.sample_rate / opts.frame_rate;
  const double base = opts.sample_rate / (spf / 4.0);
  const int m1 = std::uniform_int_distribution<int>(2, 5)(rng);
  const int m2 = std::uniform_int_distribution<int>(6, 10)(rng);
  const double w1 = uniform(rng, 0.5, 0.8);
  task.audio.sample_rate = opts.sample_rate;
  task.audio.frame_rate = opts.frame_rate;
  const auto n_samples = std::size_t(std::llround(frames * spf));
  task.audio.samples.resize(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    const int t = std::min(frames - 1, int(double(i) / spf));
    const double ph = 2.0 * std::numbers::pi * double(i) / opts.sample_rate;
    task.audio.samples[i] = envelope[std::size_t(t)] * (w1 * std::sin(m1 * base * ph) + (1.0 - w1) * std::sin(m2 * base * ph));
  }

  // Hand: smooth Lissajous-like path inside the hand band.
  const double fx = uniform(rng, 0.5, 2.0), fy = uniform(rng, 0.5, 2.0);
  const double px = uniform(rng, 0.0, 2.0 * std::numbers::pi), py = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double cx = 0.5 * (l.hand_x_min + l.hand_x_max), ax = 0.5 * (l.hand_x_max - l.hand_x_min);
  const double cy = 0.5 * (l.hand_y_min + l.hand_y_max), ay = 0.5 * (l.hand_y_max - l.hand_y_min);
  task.hand.resize(std::size_t(frames));
  for (int t = 0; t < frames; ++t) {
    task.hand[std::size_t(t)] = {cx + ax * std::sin(2.0 * std::numbers::pi * fx * t / frames + px),
                                 cy + ay * std::sin(2.0 * std::numbers::pi * fy * t / frames + py)};
  }

  task.skeleton.frames = frames;
  task.skeleton.joints = kJoints;
  task.skeleton.frame_rate = opts.frame_rate;
  task.skeleton.keypoints.assign(std::size_t(frames) * kJoints * 3, 0.0);
  const double mouth_cy = 0.5 * (l.mouth_top + l.mouth_bottom), mouth_cx = 0.5 * (l.mouth_left + l.mouth_right);
  for (int t = 0; t < frames; ++t) {
    const std::array<std::array<double, 2>, kJoints> joints{
        {{l.head_cx, l.head_cy}, {mouth_cx, mouth_cy}, task.hand[std::size_t(t)]}};
    for (int j = 0; j < kJoints; ++j) {
      // Pixel centers map to (p + 0.5) / size in normalized coordinates.
      task.skeleton.at(t, j, 0) = std::clamp((joints[std::size_t(j)][0] + 0.5) / width, 0.0, 1.0);
      task.skeleton.at(t, j, 1) = std::clamp((joints[std::size_t(j)][1] + 0.5) / height, 0.0, 1.0);
      task.skeleton.at(t, j, 2) = 1.0;
    }
  }

  task.video = codec::VideoTensor(frames, height, width, kChannels);
  for (int t = 0; t < frames; ++t) {
    const auto [hx, hy] = task.hand[std::size_t(t)];
    const double mouth = kMouthLow + kMouthSpan * envelope[std::size_t(t)];
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const double ey = (y - l.head_cy) / l.head_ry, ex = (x - l.head_cx) / l.head_rx;
        task.video.at(t, y, x, kRed) = ey * ey + ex * ex <= 1.0 ? kHeadLevel : 0.0;
        const double d2 = (y - hy) * (y - hy) + (x - hx) * (x - hx);
        task.video.at(t, y, x, kGreen) = kHandLevel * std::exp(-0.5 * d2 / (l.hand_sigma * l.hand_sigma));
        const bool in_mouth = y >= l.mouth_top && y < l.mouth_bottom && x >= l.mouth_left && x < l.mouth_right;
        task.video.at(t, y, x, kBlue) = in_mouth ? mouth : 0.0;
      }
  }
  return task;
}

std::vector<double> mouth_intensity(const codec::VideoTensor& video, const FaceLayout& l) {
  std::vector<double> out(static_cast<std::size_t>(video.frames()), 0.0);
  const double n = double((l.mouth_bottom - l.mouth_top) * (l.mouth_right - l.mouth_left));
  for (int t = 0; t < video.frames(); ++t) {
    double s = 0;
    for (int y = l.mouth_top; y < l.mouth_bottom; ++y)
      for (int x = l.mouth_left; x < l.mouth_right; ++x) s += video.at(t, y, x, kBlue);
    out[std::size_t(t)] = s / n;
  }
  return out;
}

std::vector<std::array<double, 2>> detect_hand(const codec::VideoTensor& video, const FaceLayout& l) {
  std::vector<std::array<double, 2>> out;
  const int radius = int(std::ceil(2.0 * l.hand_sigma));
  for (int t = 0; t < video.frames(); ++t) {
    int by = l.hand_top, bx = 0;
    double best = -1e300;
    for (int y = l.hand_top; y < video.height(); ++y)
      for (int x = 0; x < video.width(); ++x)
        if (video.at(t, y, x, kGreen) > best) {
          best = video.at(t, y, x, kGreen);
          by = y;
          bx = x;
        }
    // Centroid of the excess over the band median around the peak.
    std::vector<double> band;
    for (int y = l.hand_top; y < video.height(); ++y)
      for (int x = 0; x < video.width(); ++x) band.push_back(video.at(t, y, x, kGreen));
    std::nth_element(band.begin(), band.begin() + std::ptrdiff_t(band.size() / 2), band.end());
    const double floor = band[band.size() / 2];
    double sw = 0, sx = 0, sy = 0;
    for (int y = std::max(l.hand_top, by - radius); y <= std::min(video.height() - 1, by + radius); ++y)
      for (int x = std::max(0, bx - radius); x <= std::min(video.width() - 1, bx + radius); ++x) {
        const double w = std::max(0.0, video.at(t, y, x, kGreen) - floor);
        sw += w;
        sx += w * x;
        sy += w * y;
      }
    out.push_back(sw > 0 ? std::array<double, 2>{sx / sw, sy / sw} : std::array<double, 2>{double(bx), double(by)});
  }
  return out;
}

double motion_variance(const std::vector<std::array<double, 2>>& track) {
  if (track.size() < 2) return 0.0;
  double total = 0;
  for (int k = 0; k < 2; ++k) {
    double m = 0;
    for (const auto& p : track) m += p[std::size_t(k)];
    m /= double(track.size());
    double v = 0;
    for (const auto& p : track) v += (p[std::size_t(k)] - m) * (p[std::size_t(k)] - m);
    total += v / double(track.size());
  }
  return total;
}

void save_task(const std::filesystem::path& dir, const SynthTask& task) {
  std::filesystem::create_directories(dir);
  write_ten(dir / "video.ten", task.video.data);
  write_ten(dir / "audio.ten", {int(task.audio.samples.size())}, task.audio.samples);
  motion::save_skeleton(dir / "skeleton.ten", task.skeleton);
  nlohmann::ordered_json meta;
  meta["id"] = task.id;
  meta["seed"] = task.seed;
  meta["T"] = task.frames;
  meta["H"] = task.height;
  meta["W"] = task.width;
  meta["sample_rate"] = task.audio.sample_rate;
  meta["frame_rate"] = task.audio.frame_rate;
  meta["aperture"] = task.aperture;
  meta["hand"] = task.hand;
  std::ofstream os(dir / "meta.json");
  if (!os) throw Error(ErrorKind::kIo, "cannot write " + (dir / "meta.json").string());
  os << meta.dump(2) << '\n';
}

SynthTask load_task(const std::filesystem::path& dir) {
  const auto meta = read_json(dir / "meta.json");
  SynthTask task;
  task.id = meta.at("id").get<std::string>();
  task.seed = meta.at("seed").get<std::uint64_t>();
  task.frames = meta.at("T").get<int>();
  task.height = meta.at("H").get<int>();
  task.width = meta.at("W").get<int>();
  task.aperture = meta.at("aperture").get<std::vector<double>>();
  task.hand = meta.at("hand").get<std::vector<std::array<double, 2>>>();
  task.video = codec::VideoTensor(read_ten4(dir / "video.ten"));
  TenData audio = read_ten(dir / "audio.ten");
  task.audio.samples = std::move(audio.values);
  task.audio.sample_rate = meta.at("sample_rate").get<double>();
  task.audio.frame_rate = meta.at("frame_rate").get<double>();
  task.skeleton = motion::load_skeleton(dir / "skeleton.ten");
  return task;
}

std::vector<SynthTask> load_tasks(const std::filesystem::path& data_dir) {
  const auto root = data_dir / "tasks";
  if (!std::filesystem::is_directory(root)) throw Error(ErrorKind::kIo, "no tasks/ directory under " + data_dir.string());
  std::vector<std::filesystem::path> dirs;
  for (const auto& e : std::filesystem::directory_iterator(root))
    if (e.is_directory()) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  std::vector<SynthTask> out;
  for (const auto& d : dirs) out.push_back(load_task(d));
  return out;
}

}  // namespace animpref::pipeline
