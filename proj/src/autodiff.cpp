#include "animpref/autodiff.hpp"

#include <cmath>
#include <sstream>

namespace animpref::ad {

namespace {

void require_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    std::ostringstream os;
    os << op << ": shape (" << a.rows() << "x" << a.cols() << ") vs (" << b.rows() << "x" << b.cols() << ")";
    throw Error(ErrorKind::kShapeMismatch, os.str());
  }
}

Graph& graph_of(Var a, Var b) {
  if (a.graph != b.graph || a.graph == nullptr) {
    throw std::logic_error("autodiff: operands belong to different graphs");
  }
  return *a.graph;
}

}  // namespace

const Mat& Var::value() const { return graph->value(*this); }
const Mat& Var::grad() const { return graph->grad(*this); }

Var Graph::constant(Mat value) { return push(std::move(value), {}, nullptr); }

Var Graph::leaf(Mat value, std::string name) {
  Var v = push(std::move(value), {}, nullptr);
  nodes_[v.id].requires_grad = true;
  nodes_[v.id].name = std::move(name);
  return v;
}

const Mat& Graph::grad(Var v) const {
  const Node& n = nodes_[v.id];
  return n.grad.size() == 0 ? empty_ : n.grad;
}

Var Graph::push(Mat value, std::vector<std::size_t> parents, BackFn back) {
  Node n;
  n.value = std::move(value);
  for (std::size_t p : parents) {
    if (nodes_[p].requires_grad) {
      n.requires_grad = true;
      break;
    }
  }
  if (n.requires_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Mat& Graph::grad_mut(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Graph::backward(Var out) {
  if (value(out).size() != 1) throw Error(ErrorKind::kShapeMismatch, "backward: target must be 1x1");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  if (!nodes_[out.id].requires_grad) return;
  grad_mut(out.id)(0, 0) = 1.0;
  for (std::size_t i = out.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.back && n.grad.size() != 0) n.back(*this, i);
  }
}

Var operator+(Var a, Var b) {
  Graph& g = graph_of(a, b);
  require_same_shape(a.value(), b.value(), "add");
  const std::size_t ia = a.id, ib = b.id;
  return g.push(a.value() + b.value(), {ia, ib}, [ia, ib](Graph& g, std::size_t s) {
    if (g.needs(ia)) g.grad_mut(ia) += g.grad_of(s);
    if (g.needs(ib)) g.grad_mut(ib) += g.grad_of(s);
  });
}

Var operator-(Var a, Var b) {
  Graph& g = graph_of(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  const std::size_t ia = a.id, ib = b.id;
  return g.push(a.value() - b.value(), {ia, ib}, [ia, ib](Graph& g, std::size_t s) {
    if (g.needs(ia)) g.grad_mut(ia) += g.grad_of(s);
    if (g.needs(ib)) g.grad_mut(ib) -= g.grad_of(s);
  });
}

Var operator*(double k, Var a) {
  const std::size_t ia = a.id;
  return a.graph->push(k * a.value(), {ia}, [ia, k](Graph& g, std::size_t s) { g.grad_mut(ia) += k * g.grad_of(s); });
}

Var hadamard(Var a, Var b) {
  Graph& g = graph_of(a, b);
  require_same_shape(a.value(), b.value(), "hadamard");
  const std::size_t ia = a.id, ib = b.id;
  return g.push(a.value().cwiseProduct(b.value()), {ia, ib}, [ia, ib](Graph& g, std::size_t s) {
    if (g.needs(ia)) g.grad_mut(ia) += g.grad_of(s).cwiseProduct(g.value_of(ib));
    if (g.needs(ib)) g.grad_mut(ib) += g.grad_of(s).cwiseProduct(g.value_of(ia));
  });
}

Var add_row(Var a, Var row) {
  Graph& g = graph_of(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) throw Error(ErrorKind::kShapeMismatch, "add_row: bias shape");
  const std::size_t ia = a.id, ib = row.id;
  Mat out = a.value().rowwise() + row.value().row(0);
  return g.push(std::move(out), {ia, ib}, [ia, ib](Graph& g, std::size_t s) {
    if (g.needs(ia)) g.grad_mut(ia) += g.grad_of(s);
    if (g.needs(ib)) g.grad_mut(ib) += g.grad_of(s).colwise().sum();
  });
}

Var add_tiled(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Eigen::Index n = b.rows();
  if (b.cols() != a.cols() || n == 0 || a.rows() % n != 0) throw Error(ErrorKind::kShapeMismatch, "add_tiled: shape");
  const Eigen::Index reps = a.rows() / n;
  Mat out = a.value();
  for (Eigen::Index r = 0; r < reps; ++r) out.middleRows(r * n, n) += b.value();
  const std::size_t ia = a.id, ib = b.id;
  return g.push(std::move(out), {ia, ib}, [ia, ib, n, reps](Graph& g, std::size_t s) {
    if (g.needs(ia)) g.grad_mut(ia) += g.grad_of(s);
    if (g.needs(ib)) {
      Mat& gb = g.grad_mut(ib);
      for (Eigen::Index r = 0; r < reps; ++r) gb += g.grad_of(s).middleRows(r * n, n);
    }
  });
}

Var matmul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  if (a.cols() != b.rows()) throw Error(ErrorKind::kShapeMismatch, "matmul: inner dimension");
  const std::size_t ia = a.id, ib = b.id;
  return g.push(a.value() * b.value(), {ia, ib}, [ia, ib](Graph& g, std::size_t s) {
    const Mat& go = g.grad_of(s);
    if (g.needs(ia)) g.grad_mut(ia).noalias() += go * g.value_of(ib).transpose();
    if (g.needs(ib)) g.grad_mut(ib).noalias() += g.value_of(ia).transpose() * go;
  });
}

Var matmul_nt(Var a, Var b) {
  Graph& g = graph_of(a, b);
  if (a.cols() != b.cols()) throw Error(ErrorKind::kShapeMismatch, "matmul_nt: inner dimension");
  const std::size_t ia = a.id, ib = b.id;
  return g.push(a.value() * b.value().transpose(), {ia, ib}, [ia, ib](Graph& g, std::size_t s) {
    const Mat& go = g.grad_of(s);
    if (g.needs(ia)) g.grad_mut(ia).noalias() += go * g.value_of(ib);
    if (g.needs(ib)) g.grad_mut(ib).noalias() += go.transpose() * g.value_of(ia);
  });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw Error(ErrorKind::kOutOfRange, "slice_rows");
  const std::size_t ia = a.id;
  return a.graph->push(a.value().middleRows(start, count), {ia}, [ia, start, count](Graph& g, std::size_t s) {
    g.grad_mut(ia).middleRows(start, count) += g.grad_of(s);
  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw Error(ErrorKind::kOutOfRange, "slice_cols");
  const std::size_t ia = a.id;
  return a.graph->push(a.value().middleCols(start, count), {ia}, [ia, start, count](Graph& g, std::size_t s) {
    g.grad_mut(ia).middleCols(start, count) += g.grad_of(s);
  });
}

Var vcat(const std::vector<Var>& parts) {
  if (parts.empty()) throw Error(ErrorKind::kShapeMismatch, "vcat: no parts");
  Graph& g = *parts.front().graph;
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts.front().cols();
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw Error(ErrorKind::kShapeMismatch, "vcat: column count");
    rows += p.rows();
    ids.push_back(p.id);
  }
  Mat out(rows, cols);
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return g.push(std::move(out), ids, [ids](Graph& g, std::size_t s) {
    Eigen::Index r = 0;
    for (std::size_t id : ids) {
      const Eigen::Index n = g.value_of(id).rows();
      if (g.needs(id)) g.grad_mut(id) += g.grad_of(s).middleRows(r, n);
      r += n;
    }
  });
}

Var hcat(const std::vector<Var>& parts) {
  if (parts.empty()) throw Error(ErrorKind::kShapeMismatch, "hcat: no parts");
  Graph& g = *parts.front().graph;
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw Error(ErrorKind::kShapeMismatch, "hcat: row count");
    cols += p.cols();
    ids.push_back(p.id);
  }
  Mat out(rows, cols);
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return g.push(std::move(out), ids, [ids](Graph& g, std::size_t s) {
    Eigen::Index c = 0;
    for (std::size_t id : ids) {
      const Eigen::Index n = g.value_of(id).cols();
      if (g.needs(id)) g.grad_mut(id) += g.grad_of(s).middleCols(c, n);
      c += n;
    }
  });
}

Var softmax_rows(Var a) {
  Mat out = a.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double m = out.row(r).maxCoeff();
    out.row(r) = (out.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  const std::size_t ia = a.id;
  return a.graph->push(std::move(out), {ia}, [ia](Graph& g, std::size_t s) {
    const Mat& y = g.value_of(s);
    const Mat& go = g.grad_of(s);
    Mat& ga = g.grad_mut(ia);
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double dot = y.row(r).dot(go.row(r));
      ga.row(r).array() += y.row(r).array() * (go.row(r).array() - dot);
    }
  });
}

Var rms_norm(Var a, Var gain, double eps) {
  Graph& g = graph_of(a, gain);
  if (gain.rows() != 1 || gain.cols() != a.cols()) throw Error(ErrorKind::kShapeMismatch, "rms_norm: gain shape");
  const Eigen::Index n = a.rows(), m = a.cols();
  Vec inv(n);
  Mat normed(n, m);
  for (Eigen::Index r = 0; r < n; ++r) {
    inv(r) = 1.0 / std::sqrt(a.value().row(r).squaredNorm() / double(m) + eps);
    normed.row(r) = a.value().row(r) * inv(r);
  }
  Mat out = normed.array().rowwise() * gain.value().row(0).array();
  const std::size_t ia = a.id, ig = gain.id;
  return g.push(std::move(out), {ia, ig}, [ia, ig, inv, normed, m](Graph& g, std::size_t s) {
    const Mat& go = g.grad_of(s);
    const auto gv = g.value_of(ig).row(0).array();
    if (g.needs(ig)) g.grad_mut(ig) += go.cwiseProduct(normed).colwise().sum();
    if (g.needs(ia)) {
      Mat& ga = g.grad_mut(ia);
      for (Eigen::Index r = 0; r < go.rows(); ++r) {
        // d(normed)/dx = inv * (I - normed normed^T / m)
        Eigen::RowVectorXd gn = (go.row(r).array() * gv).matrix();
        const double proj = gn.dot(normed.row(r)) / double(m);
        ga.row(r) += inv(r) * (gn - proj * normed.row(r));
      }
    }
  });
}

Var silu(Var a) {
  const Mat sig = (1.0 + (-a.value().array()).exp()).inverse().matrix();
  Mat out = a.value().cwiseProduct(sig);
  const std::size_t ia = a.id;
  return a.graph->push(std::move(out), {ia}, [ia, sig](Graph& g, std::size_t s) {
    const auto x = g.value_of(ia).array();
    const auto sg = sig.array();
    g.grad_mut(ia).array() += g.grad_of(s).array() * (sg * (1.0 + x * (1.0 - sg)));
  });
}

Var sum(Var a) {
  Mat out(1, 1);
  out(0, 0) = a.value().sum();
  const std::size_t ia = a.id;
  return a.graph->push(std::move(out), {ia}, [ia](Graph& g, std::size_t s) {
    g.grad_mut(ia).array() += g.grad_of(s)(0, 0);
  });
}

Var mean(Var a) {
  const double n = double(a.value().size());
  Mat out(1, 1);
  out(0, 0) = a.value().sum() / n;
  const std::size_t ia = a.id;
  return a.graph->push(std::move(out), {ia}, [ia, n](Graph& g, std::size_t s) {
    g.grad_mut(ia).array() += g.grad_of(s)(0, 0) / n;
  });
}

Var mean_sq_diff(Var a, Var b) {
  Graph& g = graph_of(a, b);
  require_same_shape(a.value(), b.value(), "mean_sq_diff");
  const double n = double(a.value().size());
  Mat diff = a.value() - b.value();
  Mat out(1, 1);
  out(0, 0) = diff.squaredNorm() / n;
  const std::size_t ia = a.id, ib = b.id;
  return g.push(std::move(out), {ia, ib}, [ia, ib, n, diff](Graph& g, std::size_t s) {
    const double k = 2.0 * g.grad_of(s)(0, 0) / n;
    if (g.needs(ia)) g.grad_mut(ia) += k * diff;
    if (g.needs(ib)) g.grad_mut(ib) -= k * diff;
  });
}

Var log_sigmoid(Var x) {
  if (x.value().size() != 1) throw Error(ErrorKind::kShapeMismatch, "log_sigmoid: expects 1x1");
  const double v = x.scalar();
  // log sigma(v) = -softplus(-v)
  const double out = v >= 0 ? -std::log1p(std::exp(-v)) : v - std::log1p(std::exp(v));
  Mat m(1, 1);
  m(0, 0) = out;
  const std::size_t ix = x.id;
  // d/dv log sigma(v) = sigma(-v)
  const double d = v >= 0 ? std::exp(-v) / (1.0 + std::exp(-v)) : 1.0 / (1.0 + std::exp(v));
  return x.graph->push(std::move(m), {ix}, [ix, d](Graph& g, std::size_t s) { g.grad_mut(ix)(0, 0) += d * g.grad_of(s)(0, 0); });
}

}  // namespace animpref::ad
