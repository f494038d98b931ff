#include "animpref/latent_codec.hpp"

#include <algorithm>
#include <sstream>

namespace animpref::codec {

namespace {

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace

Array4 LatentVideo::to_array() const {
  Array4 a(t, h, w, d);
  std::copy(tokens.data(), tokens.data() + tokens.size(), a.data.begin());
  return a;
}

LatentVideo LatentVideo::from_array(const Array4& a) {
  LatentVideo z(a.shape[0], a.shape[1], a.shape[2], a.shape[3]);
  std::copy(a.data.begin(), a.data.end(), z.tokens.data());
  return z;
}

CodecBasis make_codec(int d, int channels, std::uint64_t seed) {
  if (channels <= 0 || d <= 0) throw Error(ErrorKind::kOutOfRange, "make_codec: d and C must be positive");
  const int patch = block_size(channels);
  if (d > patch) {
    std::ostringstream os;
    os << "make_codec: d=" << d << " exceeds patch size " << patch;
    throw Error(ErrorKind::kDimensionTooLarge, os.str());
  }
  Rng rng(seed);
  const Mat gauss = randn(patch, d, rng);
  Eigen::HouseholderQR<Mat> qr(gauss);
  const Mat q = qr.householderQ() * Mat::Identity(patch, d);
  CodecBasis basis;
  basis.projection = q.transpose();
  basis.channels = channels;
  basis.seed = seed;
  return basis;
}

bool conforms(const VideoTensor& v) {
  return v.frames() >= kTemporalStride && v.frames() % kTemporalStride == 0 && v.height() % kSpatialStride == 0 &&
         v.width() % kSpatialStride == 0 && v.height() > 0 && v.width() > 0;
}

VideoTensor pad_to_contract(const VideoTensor& video) {
  if (conforms(video)) return video;
  const int t0 = video.frames(), h0 = video.height(), w0 = video.width(), c = video.channels();
  const auto round_up = [](int v, int m) { return std::max(m, (v + m - 1) / m * m); };
  const int t1 = round_up(t0, kTemporalStride), h1 = round_up(h0, kSpatialStride), w1 = round_up(w0, kSpatialStride);
  VideoTensor out(t1, h1, w1, c);
  out.original = video.original;
  for (int t = 0; t < t1; ++t) {
    const int st = std::min(t, t0 - 1);
    for (int y = 0; y < h1; ++y) {
      const int sy = reflect_index(y, h0);
      for (int x = 0; x < w1; ++x) {
        const int sx = reflect_index(x, w0);
        for (int ch = 0; ch < c; ++ch) out.at(t, y, x, ch) = video.at(st, sy, sx, ch);
      }
    }
  }
  return out;
}

LatentVideo encode(const VideoTensor& input, const CodecBasis& basis, bool pad) {
  const VideoTensor* vp = &input;
  VideoTensor padded;
  if (!conforms(input)) {
    if (!pad) {
      std::ostringstream os;
      os << "encode: video (" << input.frames() << ", " << input.height() << ", " << input.width()
         << ") violates the (4, 8, 8) divisibility contract";
      throw Error(ErrorKind::kShapeMismatch, os.str());
    }
    padded = pad_to_contract(input);
    vp = &padded;
  }
  const VideoTensor& v = *vp;
  if (v.channels() != basis.channels) throw Error(ErrorKind::kShapeMismatch, "encode: channel count differs from codec basis");
  const int tt = v.frames() / kTemporalStride, hh = v.height() / kSpatialStride, ww = v.width() / kSpatialStride;
  const int c = v.channels();
  LatentVideo z(tt, hh, ww, basis.latent_dim());
  Eigen::VectorXd block(block_size(c));
  for (int bt = 0; bt < tt; ++bt)
    for (int by = 0; by < hh; ++by)
      for (int bx = 0; bx < ww; ++bx) {
        int k = 0;
        for (int dt = 0; dt < kTemporalStride; ++dt)
          for (int dy = 0; dy < kSpatialStride; ++dy)
            for (int dx = 0; dx < kSpatialStride; ++dx)
              for (int ch = 0; ch < c; ++ch)
                block(k++) = v.at(bt * kTemporalStride + dt, by * kSpatialStride + dy, bx * kSpatialStride + dx, ch);
        z.tokens.row((bt * hh + by) * ww + bx) = (basis.projection * block).transpose();
      }
  return z;
}

VideoTensor decode(const LatentVideo& z, const CodecBasis& basis, bool clamp) {
  if (z.d != basis.latent_dim() || z.tokens.rows() != z.t * z.h * z.w || z.tokens.cols() != z.d) {
    throw Error(ErrorKind::kShapeMismatch, "decode: latent channel count differs from codec rank");
  }
  const int c = basis.channels;
  VideoTensor v(z.t * kTemporalStride, z.h * kSpatialStride, z.w * kSpatialStride, c);
  for (int bt = 0; bt < z.t; ++bt)
    for (int by = 0; by < z.h; ++by)
      for (int bx = 0; bx < z.w; ++bx) {
        const Eigen::VectorXd block = basis.projection.transpose() * z.tokens.row((bt * z.h + by) * z.w + bx).transpose();
        int k = 0;
        for (int dt = 0; dt < kTemporalStride; ++dt)
          for (int dy = 0; dy < kSpatialStride; ++dy)
            for (int dx = 0; dx < kSpatialStride; ++dx)
              for (int ch = 0; ch < c; ++ch) {
                double val = block(k++);
                if (clamp) val = std::clamp(val, -1.0, 1.0);
                v.at(bt * kTemporalStride + dt, by * kSpatialStride + dy, bx * kSpatialStride + dx, ch) = val;
              }
      }
  return v;
}

}  // namespace animpref::codec
