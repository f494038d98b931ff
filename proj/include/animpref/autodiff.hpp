#pragma once

// Minimal tape-based reverse-mode differentiation over dense row-major
// matrices. Every node lives in a Graph arena; creation order is a valid
// topological order, so backward is a single reverse sweep.

#include <functional>
#include <string>
#include <vector>

#include "animpref/tensor.hpp"

namespace animpref::ad {

class Graph;

struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Mat& value() const;
  const Mat& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Mat value);
  /// Leaf that receives a gradient. `name` is used in non-finite reports.
  Var leaf(Mat value, std::string name);

  const Mat& value(Var v) const { return nodes_[v.id].value; }
  /// Gradient of the last backward() target; zero-shaped if never reached.
  const Mat& grad(Var v) const;
  const std::string& name(Var v) const { return nodes_[v.id].name; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  /// Seeds d(out)/d(out) = 1 for a 1x1 node and sweeps backward.
  void backward(Var out);

  std::size_t size() const { return nodes_.size(); }

  // Used by op implementations.
  using BackFn = std::function<void(Graph&, std::size_t self)>;
  Var push(Mat value, std::vector<std::size_t> parents, BackFn back);
  Mat& grad_mut(std::size_t id);
  const Mat& grad_of(std::size_t id) const { return nodes_[id].grad; }
  const Mat& value_of(std::size_t id) const { return nodes_[id].value; }
  bool needs(std::size_t id) const { return nodes_[id].requires_grad; }

 private:
  struct Node {
    Mat value;
    Mat grad;
    BackFn back;
    std::string name;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
  Mat empty_;
};

// Elementwise / broadcasting ops. Shapes must match exactly unless noted.
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(double s, Var a);
Var hadamard(Var a, Var b);
/// a (n x m) + row (1 x m) broadcast over rows.
Var add_row(Var a, Var row);
/// a (n x m) + tile(b, n / b.rows()) stacked vertically.
Var add_tiled(Var a, Var b);

Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
Var vcat(const std::vector<Var>& parts);
Var hcat(const std::vector<Var>& parts);

Var softmax_rows(Var a);
/// Row-wise RMS normalization followed by a (1 x m) gain.
Var rms_norm(Var a, Var gain, double eps = 1e-6);
Var silu(Var a);

// Reductions to a 1x1 node.
Var sum(Var a);
Var mean(Var a);
/// mean over all elements of (a - b)^2
Var mean_sq_diff(Var a, Var b);
/// log(sigmoid(x)) on a 1x1 node, numerically stable.
Var log_sigmoid(Var x);

}  // namespace animpref::ad
