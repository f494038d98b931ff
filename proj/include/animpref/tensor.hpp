#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace animpref {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using Rng = std::mt19937_64;

enum class ErrorKind {
  kShapeMismatch,
  kDimensionTooLarge,
  kIndivisible,
  kOutOfRange,
  kWaveTooShort,
  kNonFinite,
  kTemporalMismatch,
  kInvalidConfig,
  kIo,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

/// Dense 4-D array in row-major order. Used for videos (T, H, W, C),
/// latents (T', H', W', d) and motion conditions (T, D, d_m, 1).
struct Array4 {
  std::array<int, 4> shape{0, 0, 0, 0};
  std::vector<double> data;

  Array4() = default;
  Array4(int a, int b, int c, int d) : shape{a, b, c, d}, data(std::size_t(a) * b * c * d, 0.0) {}

  std::size_t size() const { return data.size(); }
  std::size_t index(int i, int j, int k, int l) const {
    return ((std::size_t(i) * shape[1] + j) * shape[2] + k) * shape[3] + l;
  }
  double& at(int i, int j, int k, int l) { return data[index(i, j, k, l)]; }
  double at(int i, int j, int k, int l) const { return data[index(i, j, k, l)]; }
  bool same_shape(const Array4& o) const { return shape == o.shape; }
};

/// Matrix with i.i.d. standard normal entries drawn from `rng`.
Mat randn(Eigen::Index rows, Eigen::Index cols, Rng& rng);

bool all_finite(const Mat& m);

/// Pearson correlation; 0 when either side has zero variance.
double pearson(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace animpref
