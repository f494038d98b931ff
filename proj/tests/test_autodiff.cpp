#include <doctest.h>

#include <cmath>
#include <functional>

#include "animpref/autodiff.hpp"

using namespace animpref;
using ad::Var;

namespace {

// f maps leaf values to a scalar node; checks every coordinate of every input
// against central differences.
void check_op(const std::vector<Mat>& inputs, const std::function<Var(ad::Graph&, const std::vector<Var>&)>& f,
              double tol = 1e-6) {
  ad::Graph g;
  std::vector<Var> leaves;
  for (std::size_t i = 0; i < inputs.size(); ++i) leaves.push_back(g.leaf(inputs[i], "x" + std::to_string(i)));
  Var out = f(g, leaves);
  REQUIRE(out.value().size() == 1);
  g.backward(out);
  const double h = 1e-6;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
      auto eval = [&](double delta) {
        std::vector<Mat> xs = inputs;
        xs[k].data()[i] += delta;
        ad::Graph g2;
        std::vector<Var> l2;
        for (const auto& x : xs) l2.push_back(g2.constant(x));
        return f(g2, l2).scalar();
      };
      const double numeric = (eval(h) - eval(-h)) / (2 * h);
      const double analytic = leaves[k].grad().data()[i];
      CHECK(analytic == doctest::Approx(numeric).epsilon(tol).scale(1.0));
    }
  }
}

// Random projection to a scalar so every output coordinate matters.
Var project(ad::Graph& g, Var y, std::uint64_t seed) {
  Rng rng(seed);
  return ad::sum(ad::hadamard(y, g.constant(randn(y.rows(), y.cols(), rng))));
}

Mat rnd(int r, int c, std::uint64_t seed) {
  Rng rng(seed);
  return randn(r, c, rng);
}

}  // namespace

TEST_CASE("elementwise and linear ops match finite differences") {
  const Mat a = rnd(3, 4, 1), b = rnd(3, 4, 2), c = rnd(4, 5, 3), row = rnd(1, 4, 4), tile = rnd(1, 4, 5);
  check_op({a, b}, [](ad::Graph& g, const std::vector<Var>& x) { return project(g, x[0] + x[1], 9); });
  check_op({a, b}, [](ad::Graph& g, const std::vector<Var>& x) { return project(g, x[0] - 2.5 * x[1], 9); });
  check_op({a, b}, [](ad::Graph& g, const std::vector<Var>& x) { return project(g, ad::hadamard(x[0], x[1]), 9); });
  check_op({a, c}, [](ad::Graph& g, const std::vector<Var>& x) { return project(g, ad::matmul(x[0], x[1]), 9); });
  check_op({a, b}, [](ad::Graph& g, const std::vector<Var>& x) { return project(g, ad::matmul_nt(x[0], x[1]), 9); });
  check_op({a, row}, [](ad::Graph& g, const std::vector<Var>& x) { return project(g, ad::add_row(x[0], x[1]), 9); });
  check_op({a, tile}, [](ad::Graph& g, const std::vector<Var>& x) { return project(g, ad::add_tiled(x[0], x[1]), 9); });
}

TEST_CASE("structural ops match finite differences") {
  const Mat a = rnd(5, 4, 11), b = rnd(2, 4, 12), c = rnd(5, 3, 13);
  check_op({a}, [](ad::Graph& g, const std::vector<Var>& x) { return project(g, ad::slice_rows(x[0], 1, 3), 9); });
  check_op({a}, [](ad::Graph& g, const std::vector<Var>& x) { return project(g, ad::slice_cols(x[0], 2, 2), 9); });
  check_op({a, b}, [](ad::Graph& g, const std::vector<Var>& x) { return project(g, ad::vcat({x[0], x[1], x[0]}), 9); });
  check_op({a, c}, [](ad::Graph& g, const std::vector<Var>& x) { return project(g, ad::hcat({x[0], x[1]}), 9); });
}

TEST_CASE("nonlinear ops match finite differences") {
  const Mat a = rnd(4, 6, 21), gain = rnd(1, 6, 22), b = rnd(4, 6, 23);
  check_op({a}, [](ad::Graph& g, const std::vector<Var>& x) { return project(g, ad::softmax_rows(x[0]), 9); });
  check_op({a, gain}, [](ad::Graph& g, const std::vector<Var>& x) { return project(g, ad::rms_norm(x[0], x[1]), 9); });
  check_op({a}, [](ad::Graph& g, const std::vector<Var>& x) { return project(g, ad::silu(x[0]), 9); });
  check_op({a}, [](ad::Graph&, const std::vector<Var>& x) { return ad::mean(x[0]); });
  check_op({a, b}, [](ad::Graph&, const std::vector<Var>& x) { return ad::mean_sq_diff(x[0], x[1]); });
  check_op({Mat::Constant(1, 1, 0.7)}, [](ad::Graph&, const std::vector<Var>& x) { return ad::log_sigmoid(x[0]); });
  check_op({Mat::Constant(1, 1, -3.0)}, [](ad::Graph&, const std::vector<Var>& x) { return ad::log_sigmoid(x[0]); });
}

TEST_CASE("log_sigmoid is stable far into both tails") {
  ad::Graph g;
  Var hi = g.leaf(Mat::Constant(1, 1, 800.0), "hi");
  Var lo = g.leaf(Mat::Constant(1, 1, -800.0), "lo");
  CHECK(ad::log_sigmoid(hi).scalar() == doctest::Approx(0.0));
  CHECK(ad::log_sigmoid(lo).scalar() == doctest::Approx(-800.0));
  Var s = ad::log_sigmoid(lo);
  g.backward(s);
  CHECK(lo.grad()(0, 0) == doctest::Approx(1.0));
  CHECK(std::isfinite(ad::log_sigmoid(hi).scalar()));
}

TEST_CASE("softmax rows sum to one and survive large logits") {
  ad::Graph g;
  Mat x(2, 3);
  x << 1000, 1001, 999, -5, 0, 5;
  Var s = ad::softmax_rows(g.constant(x));
  CHECK(s.value().allFinite());
  CHECK(s.value().row(0).sum() == doctest::Approx(1.0));
  CHECK(s.value().row(1).sum() == doctest::Approx(1.0));
}

TEST_CASE("gradients accumulate over shared subexpressions") {
  ad::Graph g;
  Var x = g.leaf(Mat::Constant(1, 1, 3.0), "x");
  Var y = ad::hadamard(x, x) + x;  // x^2 + x
  g.backward(y);
  CHECK(x.grad()(0, 0) == doctest::Approx(7.0));
  // A second backward resets instead of accumulating across calls.
  g.backward(y);
  CHECK(x.grad()(0, 0) == doctest::Approx(7.0));
}

TEST_CASE("constants receive no gradient") {
  ad::Graph g;
  Var c = g.constant(Mat::Constant(2, 2, 1.0));
  Var x = g.leaf(Mat::Constant(2, 2, 2.0), "x");
  Var y = ad::sum(ad::hadamard(c, x));
  g.backward(y);
  CHECK_FALSE(g.requires_grad(c));
  CHECK(g.grad(c).size() == 0);
  CHECK(x.grad().isApprox(Mat::Constant(2, 2, 1.0)));
}

TEST_CASE("shape errors are reported") {
  ad::Graph g;
  Var a = g.constant(Mat::Zero(2, 3));
  Var b = g.constant(Mat::Zero(2, 2));
  CHECK_THROWS_AS(ad::matmul(a, b), Error);
  CHECK_THROWS_AS(a + b, Error);
}
