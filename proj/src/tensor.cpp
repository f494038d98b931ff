#include "animpref/tensor.hpp"

#include <cmath>

namespace animpref {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kShapeMismatch: return "shape-mismatch";
    case ErrorKind::kDimensionTooLarge: return "dimension-too-large";
    case ErrorKind::kIndivisible: return "indivisible";
    case ErrorKind::kOutOfRange: return "out-of-range";
    case ErrorKind::kWaveTooShort: return "wave-too-short";
    case ErrorKind::kNonFinite: return "non-finite";
    case ErrorKind::kTemporalMismatch: return "temporal-mismatch";
    case ErrorKind::kInvalidConfig: return "invalid-config";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

Mat randn(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n01(rng);
  return m;
}

bool all_finite(const Mat& m) { return m.allFinite(); }

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) return 0.0;
  const double n = double(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  // Variances below this are rounding noise on a constant signal.
  constexpr double kFloor = 1e-18;
  if (saa <= kFloor * n || sbb <= kFloor * n) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace animpref
