#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices. A Var is a handle to a node in a dynamically built graph; every
// op records a closure that pushes its output gradient into its inputs.
// Leaves created with parameter() keep their gradient across backward()
// calls until zero_grad() is called, which is how minibatches accumulate.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "bpnet/error.hpp"

namespace bpnet {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

namespace ad {

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  template <typename Expr>
  void accumulate(const Expr& g) {
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  bool requires_grad() const { return node_->requires_grad; }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  double item() const { return node_->value(0, 0); }

  /// Gradient of the last backward() root with respect to this node. Zero
  /// when nothing has flowed here yet.
  Matrix grad() const {
    if (node_->grad.size() == 0) return Matrix::Zero(rows(), cols());
    return node_->grad;
  }
  void zero_grad() { node_->grad.resize(0, 0); }

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

inline Var constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

inline Var parameter(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

inline Var scalar(double v) { return constant(Matrix::Constant(1, 1, v)); }

namespace detail {

template <typename Backward>
Var make(Matrix value, std::initializer_list<Var> inputs, Backward&& backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  for (const Var& in : inputs) node->requires_grad = node->requires_grad || in.requires_grad();
  if (node->requires_grad) {
    for (const Var& in : inputs) node->parents.push_back(in.shared());
    node->backward = std::forward<Backward>(backward);
  }
  return Var(std::move(node));
}

inline Var make_n(Matrix value, const std::vector<Var>& inputs,
                  std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  for (const Var& in : inputs) node->requires_grad = node->requires_grad || in.requires_grad();
  if (node->requires_grad) {
    for (const Var& in : inputs) node->parents.push_back(in.shared());
    node->backward = std::move(backward);
  }
  return Var(std::move(node));
}

inline void check_same_shape(const Var& a, const Var& b, const char* op) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorCode::kShape,
          std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
              std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
              std::to_string(b.cols()));
}

}  // namespace detail

/// Runs reverse accumulation from a 1x1 root.
inline void backward(const Var& root) {
  require(root.rows() == 1 && root.cols() == 1, ErrorCode::kShape,
          "backward: root must be a scalar");
  if (!root.requires_grad()) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node(), 0}};
  visited.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && node->grad.size() != 0) node->backward(*node);
  }
}

// ---------------------------------------------------------------------------
// Linear algebra

inline Var matmul(const Var& a, const Var& b) {
  require(a.cols() == b.rows(), ErrorCode::kShape,
          "matmul: inner dimensions " + std::to_string(a.cols()) + " vs " +
              std::to_string(b.rows()));
  Matrix out = a.value() * b.value();
  return detail::make(std::move(out), {a, b}, [a, b](Node& self) {
    if (a.requires_grad()) a.node()->accumulate(self.grad * b.value().transpose());
    if (b.requires_grad()) b.node()->accumulate(a.value().transpose() * self.grad);
  });
}

inline Var transpose(const Var& a) {
  Matrix out = a.value().transpose();
  return detail::make(std::move(out), {a}, [a](Node& self) {
    a.node()->accumulate(self.grad.transpose());
  });
}

inline Var add(const Var& a, const Var& b) {
  detail::check_same_shape(a, b, "add");
  Matrix out = a.value() + b.value();
  return detail::make(std::move(out), {a, b}, [a, b](Node& self) {
    if (a.requires_grad()) a.node()->accumulate(self.grad);
    if (b.requires_grad()) b.node()->accumulate(self.grad);
  });
}

inline Var sub(const Var& a, const Var& b) {
  detail::check_same_shape(a, b, "sub");
  Matrix out = a.value() - b.value();
  return detail::make(std::move(out), {a, b}, [a, b](Node& self) {
    if (a.requires_grad()) a.node()->accumulate(self.grad);
    if (b.requires_grad()) b.node()->accumulate(-self.grad);
  });
}

inline Var hadamard(const Var& a, const Var& b) {
  detail::check_same_shape(a, b, "hadamard");
  Matrix out = a.value().cwiseProduct(b.value());
  return detail::make(std::move(out), {a, b}, [a, b](Node& self) {
    if (a.requires_grad()) a.node()->accumulate(self.grad.cwiseProduct(b.value()));
    if (b.requires_grad()) b.node()->accumulate(self.grad.cwiseProduct(a.value()));
  });
}

inline Var scale(const Var& a, double s) {
  Matrix out = a.value() * s;
  return detail::make(std::move(out), {a}, [a, s](Node& self) {
    a.node()->accumulate(self.grad * s);
  });
}

/// a + 1 * row, broadcasting a 1xC row over every row of a.
inline Var add_row(const Var& a, const Var& row) {
  require(row.rows() == 1 && row.cols() == a.cols(), ErrorCode::kShape,
          "add_row: row must be 1x" + std::to_string(a.cols()));
  Matrix out = a.value().rowwise() + row.value().row(0);
  return detail::make(std::move(out), {a, row}, [a, row](Node& self) {
    if (a.requires_grad()) a.node()->accumulate(self.grad);
    if (row.requires_grad()) row.node()->accumulate(self.grad.colwise().sum());
  });
}

/// Multiplies every row of a elementwise by a 1xC row.
inline Var mul_row(const Var& a, const Var& row) {
  require(row.rows() == 1 && row.cols() == a.cols(), ErrorCode::kShape,
          "mul_row: row must be 1x" + std::to_string(a.cols()));
  Matrix out = a.value().array().rowwise() * row.value().row(0).array();
  return detail::make(std::move(out), {a, row}, [a, row](Node& self) {
    if (a.requires_grad()) {
      a.node()->accumulate(
          Matrix(self.grad.array().rowwise() * row.value().row(0).array()));
    }
    if (row.requires_grad()) {
      row.node()->accumulate(self.grad.cwiseProduct(a.value()).colwise().sum());
    }
  });
}

/// x W + b for x: NxIn, W: InxOut, b: 1xOut.
inline Var linear(const Var& x, const Var& weight, const Var& bias) {
  return add_row(matmul(x, weight), bias);
}

inline Var concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), ErrorCode::kShape, "concat_cols: no inputs");
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const Var& p : parts) {
    require(p.rows() == rows, ErrorCode::kShape, "concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Index offset = 0;
  for (const Var& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
  }
  return detail::make_n(std::move(out), parts, [parts](Node& self) {
    Index off = 0;
    for (const Var& p : parts) {
      if (p.requires_grad()) p.node()->accumulate(self.grad.middleCols(off, p.cols()));
      off += p.cols();
    }
  });
}

inline Var concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), ErrorCode::kShape, "concat_rows: no inputs");
  const Index cols = parts.front().cols();
  Index rows = 0;
  for (const Var& p : parts) {
    require(p.cols() == cols, ErrorCode::kShape, "concat_rows: column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Index offset = 0;
  for (const Var& p : parts) {
    out.middleRows(offset, p.rows()) = p.value();
    offset += p.rows();
  }
  return detail::make_n(std::move(out), parts, [parts](Node& self) {
    Index off = 0;
    for (const Var& p : parts) {
      if (p.requires_grad()) p.node()->accumulate(self.grad.middleRows(off, p.rows()));
      off += p.rows();
    }
  });
}

inline Var slice_cols(const Var& a, Index start, Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.cols(), ErrorCode::kShape,
          "slice_cols: out of range");
  Matrix out = a.value().middleCols(start, count);
  return detail::make(std::move(out), {a}, [a, start, count](Node& self) {
    Matrix g = Matrix::Zero(a.rows(), a.cols());
    g.middleCols(start, count) = self.grad;
    a.node()->accumulate(g);
  });
}

inline Var slice_rows(const Var& a, Index start, Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.rows(), ErrorCode::kShape,
          "slice_rows: out of range");
  Matrix out = a.value().middleRows(start, count);
  return detail::make(std::move(out), {a}, [a, start, count](Node& self) {
    Matrix g = Matrix::Zero(a.rows(), a.cols());
    g.middleRows(start, count) = self.grad;
    a.node()->accumulate(g);
  });
}

// ---------------------------------------------------------------------------
// Pointwise nonlinearities

inline Var relu(const Var& a) {
  Matrix out = a.value().cwiseMax(0.0);
  return detail::make(std::move(out), {a}, [a](Node& self) {
    a.node()->accumulate(
        Matrix((a.value().array() > 0.0).select(self.grad.array(), 0.0)));
  });
}

inline Var sigmoid(const Var& a) {
  Matrix out = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return detail::make(std::move(out), {a}, [a](Node& self) {
    const auto y = self.value.array();
    a.node()->accumulate(Matrix(self.grad.array() * y * (1.0 - y)));
  });
}

inline Var tanh(const Var& a) {
  Matrix out = a.value().array().tanh().matrix();
  return detail::make(std::move(out), {a}, [a](Node& self) {
    const auto y = self.value.array();
    a.node()->accumulate(Matrix(self.grad.array() * (1.0 - y * y)));
  });
}

// ---------------------------------------------------------------------------
// Normalization

inline Matrix softmax_rows_value(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    out.row(r) = (x.row(r).array() - m).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

inline Var softmax_rows(const Var& a) {
  Matrix out = softmax_rows_value(a.value());
  return detail::make(std::move(out), {a}, [a](Node& self) {
    const Matrix& y = self.value;
    Eigen::VectorXd dots = self.grad.cwiseProduct(y).rowwise().sum();
    Matrix g = y.cwiseProduct(Matrix(self.grad.colwise() - dots));
    a.node()->accumulate(g);
  });
}

inline Var softmax_cols(const Var& a) { return transpose(softmax_rows(transpose(a))); }

/// Row-wise layer normalization with per-column gain and bias (both 1xC).
inline Var layer_norm_rows(const Var& x, const Var& gain, const Var& bias, double eps = 1e-6) {
  const Index n = x.rows();
  const Index c = x.cols();
  require(gain.rows() == 1 && gain.cols() == c && bias.rows() == 1 && bias.cols() == c,
          ErrorCode::kShape, "layer_norm_rows: gain/bias must be 1xC");
  Matrix xhat(n, c);
  Eigen::VectorXd inv_std(n);
  for (Index r = 0; r < n; ++r) {
    const double mean = x.value().row(r).mean();
    const double var = (x.value().row(r).array() - mean).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (x.value().row(r).array() - mean) * inv_std(r);
  }
  Matrix out = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
  out.rowwise() += bias.value().row(0);
  return detail::make(std::move(out), {x, gain, bias},
                      [x, gain, bias, xhat = std::move(xhat), inv_std](Node& self) {
    const Matrix& g = self.grad;
    if (gain.requires_grad()) gain.node()->accumulate(g.cwiseProduct(xhat).colwise().sum());
    if (bias.requires_grad()) bias.node()->accumulate(g.colwise().sum());
    if (x.requires_grad()) {
      Matrix dxhat = g.array().rowwise() * gain.value().row(0).array();
      Matrix dx(g.rows(), g.cols());
      for (Index r = 0; r < g.rows(); ++r) {
        const double mean_d = dxhat.row(r).mean();
        const double mean_dx = dxhat.row(r).dot(xhat.row(r)) / static_cast<double>(g.cols());
        dx.row(r) = inv_std(r) * (dxhat.row(r).array() - mean_d - xhat.row(r).array() * mean_dx);
      }
      x.node()->accumulate(dx);
    }
  });
}

// ---------------------------------------------------------------------------
// Convolution

/// Depthwise 1-D convolution along rows with same padding. x: TxC,
/// kernel: KxC with K odd; output row t mixes rows t-K/2 .. t+K/2 of x.
inline Var depthwise_conv1d(const Var& x, const Var& kernel) {
  const Index t_len = x.rows();
  const Index k = kernel.rows();
  require(kernel.cols() == x.cols(), ErrorCode::kShape, "depthwise_conv1d: channel mismatch");
  require(k % 2 == 1, ErrorCode::kShape, "depthwise_conv1d: kernel width must be odd");
  const Index pad = k / 2;
  Matrix out = Matrix::Zero(t_len, x.cols());
  for (Index t = 0; t < t_len; ++t) {
    for (Index o = 0; o < k; ++o) {
      const Index src = t + o - pad;
      if (src < 0 || src >= t_len) continue;
      out.row(t) += kernel.value().row(o).cwiseProduct(x.value().row(src));
    }
  }
  return detail::make(std::move(out), {x, kernel}, [x, kernel, t_len, k, pad](Node& self) {
    Matrix gx = Matrix::Zero(t_len, x.cols());
    Matrix gk = Matrix::Zero(k, x.cols());
    for (Index t = 0; t < t_len; ++t) {
      for (Index o = 0; o < k; ++o) {
        const Index src = t + o - pad;
        if (src < 0 || src >= t_len) continue;
        gx.row(src) += kernel.value().row(o).cwiseProduct(self.grad.row(t));
        gk.row(o) += x.value().row(src).cwiseProduct(self.grad.row(t));
      }
    }
    if (x.requires_grad()) x.node()->accumulate(gx);
    if (kernel.requires_grad()) kernel.node()->accumulate(gk);
  });
}

// ---------------------------------------------------------------------------
// Reductions and losses

inline Var sum_all(const Var& a) {
  Matrix out = Matrix::Constant(1, 1, a.value().sum());
  return detail::make(std::move(out), {a}, [a](Node& self) {
    a.node()->accumulate(Matrix::Constant(a.rows(), a.cols(), self.grad(0, 0)));
  });
}

inline Var mean_all(const Var& a) {
  return scale(sum_all(a), 1.0 / static_cast<double>(a.value().size()));
}

/// Mean squared error between a and a constant target of the same shape.
inline Var mse(const Var& a, const Matrix& target) {
  require(a.rows() == target.rows() && a.cols() == target.cols(), ErrorCode::kShape,
          "mse: shape mismatch");
  const double n = static_cast<double>(a.value().size());
  Matrix diff = a.value() - target;
  Matrix out = Matrix::Constant(1, 1, diff.squaredNorm() / n);
  return detail::make(std::move(out), {a}, [a, diff = std::move(diff), n](Node& self) {
    a.node()->accumulate(diff * (2.0 * self.grad(0, 0) / n));
  });
}

/// -log(max(p(0, index), eps)) for a 1xT probability row.
inline Var neg_log_at(const Var& p, Index index, double eps = 1e-12) {
  require(p.rows() == 1 && index >= 0 && index < p.cols(), ErrorCode::kShape,
          "neg_log_at: index out of range");
  const double v = p.value()(0, index);
  Matrix out = Matrix::Constant(1, 1, -std::log(std::max(v, eps)));
  return detail::make(std::move(out), {p}, [p, index, v, eps](Node& self) {
    Matrix g = Matrix::Zero(1, p.cols());
    if (v > eps) g(0, index) = -self.grad(0, 0) / v;
    p.node()->accumulate(g);
  });
}

}  // namespace ad
}  // namespace bpnet
