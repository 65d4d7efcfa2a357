#pragma once

// Reverse-mode differentiation over dense Eigen matrices.
//
// Every operation records a node whose backward rule is written in terms of
// the same differentiable operations, so the gradient graph can itself be
// differentiated (pass `create_graph = true` to grad()). This is what lets the
// meta-learning objective see through the test-time update of the adaptation
// parameters.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace ttp::ad {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

namespace detail {
inline thread_local bool grad_enabled = true;
}

inline bool is_grad_enabled() { return detail::grad_enabled; }

/// Scoped switch for graph recording on the current thread.
class GradMode {
 public:
  explicit GradMode(bool enabled) : previous_(detail::grad_enabled) {
    detail::grad_enabled = enabled;
  }
  ~GradMode() { detail::grad_enabled = previous_; }
  GradMode(const GradMode&) = delete;
  GradMode& operator=(const GradMode&) = delete;

 private:
  bool previous_;
};

struct NoGrad : GradMode {
  NoGrad() : GradMode(false) {}
};

template <typename Scalar>
class Var;

template <typename Scalar>
struct Node {
  using Backward = std::function<std::vector<Var<Scalar>>(const Var<Scalar>&)>;

  Matrix<Scalar> value;
  std::vector<Var<Scalar>> parents;
  Backward backward;
  const char* op = "leaf";
  bool requires_grad = false;
};

template <typename Scalar>
class Var {
 public:
  using MatrixType = Matrix<Scalar>;

  Var() = default;

  /// Leaf that never receives a gradient.
  static Var constant(MatrixType value) { return leaf(std::move(value), false); }

  /// Leaf that gradients are taken with respect to.
  static Var param(MatrixType value) { return leaf(std::move(value), true); }

  static Var scalar(Scalar value) {
    MatrixType m(1, 1);
    m(0, 0) = value;
    return constant(std::move(m));
  }

  bool defined() const { return static_cast<bool>(node_); }
  const MatrixType& value() const { return node_->value; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  Scalar item() const {
    if (rows() != 1 || cols() != 1) throw std::invalid_argument("item() on non-scalar Var");
    return node_->value(0, 0);
  }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const char* op() const { return node_->op; }
  const Node<Scalar>* node() const { return node_.get(); }

  Var detach() const { return constant(value()); }

  static Var make(MatrixType value, std::vector<Var> parents,
                  typename Node<Scalar>::Backward backward, const char* op) {
    auto node = std::make_shared<Node<Scalar>>();
    node->value = std::move(value);
    node->op = op;
    bool record = false;
    if (detail::grad_enabled) {
      for (const auto& p : parents) record = record || p.requires_grad();
    }
    if (record) {
      node->parents = std::move(parents);
      node->backward = std::move(backward);
      node->requires_grad = true;
    }
    Var v;
    v.node_ = std::move(node);
    return v;
  }

 private:
  static Var leaf(MatrixType value, bool requires_grad) {
    if (!value.allFinite()) throw std::domain_error("non-finite entry in tensor input");
    auto node = std::make_shared<Node<Scalar>>();
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    Var v;
    v.node_ = std::move(node);
    return v;
  }

  std::shared_ptr<Node<Scalar>> node_;
};

namespace detail {

template <typename Scalar>
void require_same_shape(const Var<Scalar>& a, const Var<Scalar>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch (" +
                                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
  }
}

// Standard normal CDF and its derivatives. Order m >= 1 uses
// d^m/dx^m Phi(x) = (-1)^(m-1) He_{m-1}(x) phi(x), He the probabilists' Hermite
// polynomials.
template <typename Scalar>
Scalar normal_cdf_derivative(Scalar x, int order) {
  if (order == 0) return Scalar(0.5) * std::erfc(-x / std::numbers::sqrt2_v<Scalar>);
  const Scalar pdf = std::exp(Scalar(-0.5) * x * x) / std::sqrt(Scalar(2) * std::numbers::pi_v<Scalar>);
  Scalar he_prev = 1;  // He_0
  Scalar he = x;       // He_1
  const int n = order - 1;
  Scalar poly = 1;
  if (n == 1) poly = x;
  for (int k = 2; k <= n; ++k) {
    const Scalar next = x * he - Scalar(k - 1) * he_prev;
    he_prev = he;
    he = next;
    poly = he;
  }
  return (n % 2 == 0 ? poly : -poly) * pdf;
}

}  // namespace detail

/// n-th derivative of x * Phi(x); order 0 is the exact GELU.
template <typename Scalar>
Scalar gelu_derivative(Scalar x, int order) {
  if (order == 0) return x * detail::normal_cdf_derivative(x, 0);
  return Scalar(order) * detail::normal_cdf_derivative(x, order - 1) +
         x * detail::normal_cdf_derivative(x, order);
}

template <typename Scalar>
Scalar gelu(Scalar x) {
  return gelu_derivative(x, 0);
}

template <typename Scalar>
Scalar logistic(Scalar x) {
  return Scalar(1) / (Scalar(1) + std::exp(-x));
}

// ---------------------------------------------------------------------------
// Operations

template <typename Scalar>
Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape(a, b, "add");
  return Var<Scalar>::make(a.value() + b.value(), {a, b},
                           [](const Var<Scalar>& g) { return std::vector{g, g}; }, "add");
}

template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a) {
  return Var<Scalar>::make(-a.value(), {a},
                           [](const Var<Scalar>& g) { return std::vector{-g}; }, "neg");
}

template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape(a, b, "sub");
  return Var<Scalar>::make(a.value() - b.value(), {a, b},
                           [](const Var<Scalar>& g) { return std::vector{g, -g}; }, "sub");
}

template <typename Scalar>
Var<Scalar> operator*(const Var<Scalar>& a, Scalar c) {
  return Var<Scalar>::make(a.value() * c, {a},
                           [c](const Var<Scalar>& g) { return std::vector{g * c}; }, "scale");
}

template <typename Scalar>
Var<Scalar> operator*(Scalar c, const Var<Scalar>& a) {
  return a * c;
}

template <typename Scalar>
Var<Scalar> add_scalar(const Var<Scalar>& a, Scalar c) {
  return Var<Scalar>::make((a.value().array() + c).matrix(), {a},
                           [](const Var<Scalar>& g) { return std::vector{g}; }, "add_scalar");
}

template <typename Scalar>
Var<Scalar> transpose(const Var<Scalar>& a) {
  return Var<Scalar>::make(a.value().transpose(), {a},
                           [](const Var<Scalar>& g) { return std::vector{transpose(g)}; },
                           "transpose");
}

/// Matrix product.
template <typename Scalar>
Var<Scalar> operator*(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dimensions differ (" + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.rows()) + ")");
  }
  return Var<Scalar>::make(a.value() * b.value(), {a, b},
                           [a, b](const Var<Scalar>& g) {
                             return std::vector{g * transpose(b), transpose(a) * g};
                           },
                           "matmul");
}

template <typename Scalar>
Var<Scalar> cwise_product(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape(a, b, "cwise_product");
  return Var<Scalar>::make(a.value().cwiseProduct(b.value()), {a, b},
                           [a, b](const Var<Scalar>& g) {
                             return std::vector{cwise_product(g, b), cwise_product(g, a)};
                           },
                           "cwise_product");
}

template <typename Scalar>
Var<Scalar> rowwise_sum(const Var<Scalar>& a);

/// Repeats a column vector `cols` times.
template <typename Scalar>
Var<Scalar> replicate_cols(const Var<Scalar>& v, Eigen::Index cols) {
  if (v.cols() != 1) throw std::invalid_argument("replicate_cols: expected a column vector");
  return Var<Scalar>::make(v.value().replicate(1, cols), {v},
                           [](const Var<Scalar>& g) { return std::vector{rowwise_sum(g)}; },
                           "replicate_cols");
}

template <typename Scalar>
Var<Scalar> rowwise_sum(const Var<Scalar>& a) {
  const Eigen::Index cols = a.cols();
  return Var<Scalar>::make(a.value().rowwise().sum(), {a},
                           [cols](const Var<Scalar>& g) {
                             return std::vector{replicate_cols(g, cols)};
                           },
                           "rowwise_sum");
}

/// Adds column vector `v` to every column of `m`.
template <typename Scalar>
Var<Scalar> add_colwise(const Var<Scalar>& m, const Var<Scalar>& v) {
  if (v.cols() != 1 || v.rows() != m.rows()) {
    throw std::invalid_argument("add_colwise: bias must be a column of matching height");
  }
  Matrix<Scalar> out = m.value();
  out.colwise() += v.value().col(0);
  return Var<Scalar>::make(std::move(out), {m, v},
                           [](const Var<Scalar>& g) { return std::vector{g, rowwise_sum(g)}; },
                           "add_colwise");
}

template <typename Scalar>
Var<Scalar> fill(const Var<Scalar>& s, Eigen::Index rows, Eigen::Index cols);

/// Sum of all entries, as a 1x1 Var.
template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& a) {
  Matrix<Scalar> out(1, 1);
  out(0, 0) = a.value().sum();
  const Eigen::Index rows = a.rows();
  const Eigen::Index cols = a.cols();
  return Var<Scalar>::make(std::move(out), {a},
                           [rows, cols](const Var<Scalar>& g) {
                             return std::vector{fill(g, rows, cols)};
                           },
                           "sum");
}

/// Broadcasts a 1x1 Var to a rows x cols matrix.
template <typename Scalar>
Var<Scalar> fill(const Var<Scalar>& s, Eigen::Index rows, Eigen::Index cols) {
  if (s.rows() != 1 || s.cols() != 1) throw std::invalid_argument("fill: expected a 1x1 Var");
  return Var<Scalar>::make(Matrix<Scalar>::Constant(rows, cols, s.value()(0, 0)), {s},
                           [](const Var<Scalar>& g) { return std::vector{sum(g)}; }, "fill");
}

/// Element-wise `order`-th derivative of the exact GELU (order 0 is GELU itself).
template <typename Scalar>
Var<Scalar> gelu_derivative(const Var<Scalar>& a, int order) {
  Matrix<Scalar> out = a.value().unaryExpr([order](Scalar x) { return gelu_derivative(x, order); });
  return Var<Scalar>::make(std::move(out), {a},
                           [a, order](const Var<Scalar>& g) {
                             return std::vector{cwise_product(g, gelu_derivative(a, order + 1))};
                           },
                           "gelu");
}

template <typename Scalar>
Var<Scalar> gelu(const Var<Scalar>& a) {
  return gelu_derivative(a, 0);
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& a) {
  Matrix<Scalar> out = a.value().unaryExpr([](Scalar x) { return logistic(x); });
  return Var<Scalar>::make(std::move(out), {a},
                           [a](const Var<Scalar>& g) {
                             // Recomputed rather than captured: capturing the output would
                             // make the node own itself.
                             const Var<Scalar> s = sigmoid(a);
                             return std::vector{cwise_product(g, cwise_product(s, add_scalar(-s, Scalar(1))))};
                           },
                           "sigmoid");
}

template <typename Scalar>
Var<Scalar> squared_norm(const Var<Scalar>& a) {
  return sum(cwise_product(a, a));
}

// ---------------------------------------------------------------------------
// Differentiation

struct GradOptions {
  /// Record the backward pass so the returned gradients are differentiable.
  bool create_graph = false;
};

/// Gradients of a scalar `loss` with respect to each of `params`. Parameters
/// the loss does not depend on get a zero gradient.
template <typename Scalar>
std::vector<Var<Scalar>> grad(const Var<Scalar>& loss, const std::vector<Var<Scalar>>& params,
                              GradOptions options = {}) {
  if (!loss.defined() || loss.rows() != 1 || loss.cols() != 1) {
    throw std::invalid_argument("grad: loss must be a 1x1 Var");
  }
  using NodeT = Node<Scalar>;

  // Post-order DFS; reversed it is a topological order from the loss.
  std::vector<const NodeT*> order;
  if (loss.requires_grad()) {
    std::unordered_set<const NodeT*> visited;
    std::vector<std::pair<const NodeT*, std::size_t>> stack;
    stack.emplace_back(loss.node(), 0);
    visited.insert(loss.node());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        const NodeT* parent = node->parents[next++].node();
        if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
  }

  std::unordered_set<const NodeT*> wanted;
  for (const auto& p : params) {
    if (p.defined()) wanted.insert(p.node());
  }
  // Only nodes with a path to a requested parameter need their adjoint.
  std::unordered_set<const NodeT*> relevant;
  for (const NodeT* node : order) {
    bool reaches = wanted.contains(node);
    for (const auto& parent : node->parents) {
      reaches = reaches || relevant.contains(parent.node());
    }
    if (reaches) relevant.insert(node);
  }

  GradMode mode(options.create_graph);
  std::unordered_map<const NodeT*, Var<Scalar>> adjoint;
  if (loss.requires_grad()) adjoint.emplace(loss.node(), Var<Scalar>::scalar(Scalar(1)));

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const NodeT* node = *it;
    if (!node->backward || !relevant.contains(node)) continue;
    auto found = adjoint.find(node);
    if (found == adjoint.end()) continue;
    const Var<Scalar> upstream = found->second;
    if (!wanted.contains(node)) adjoint.erase(found);
    const std::vector<Var<Scalar>> local = node->backward(upstream);
    for (std::size_t i = 0; i < node->parents.size(); ++i) {
      const Var<Scalar>& parent = node->parents[i];
      if (!relevant.contains(parent.node()) || !local[i].defined()) continue;
      auto slot = adjoint.find(parent.node());
      if (slot == adjoint.end()) {
        adjoint.emplace(parent.node(), local[i]);
      } else {
        slot->second = slot->second + local[i];
      }
    }
  }

  std::vector<Var<Scalar>> result;
  result.reserve(params.size());
  for (const auto& p : params) {
    auto found = p.defined() ? adjoint.find(p.node()) : adjoint.end();
    if (found != adjoint.end()) {
      result.push_back(found->second);
    } else {
      result.push_back(Var<Scalar>::constant(Matrix<Scalar>::Zero(p.rows(), p.cols())));
    }
  }
  return result;
}

/// Central finite differences of `loss_fn` at `params`, one coordinate at a time.
template <typename Scalar, typename LossFn>
std::vector<Matrix<Scalar>> finite_diff_grad(LossFn&& loss_fn, std::vector<Matrix<Scalar>> params,
                                             Scalar step) {
  std::vector<Matrix<Scalar>> result;
  result.reserve(params.size());
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix<Scalar> g(params[k].rows(), params[k].cols());
    for (Eigen::Index i = 0; i < params[k].size(); ++i) {
      const Scalar saved = params[k].data()[i];
      params[k].data()[i] = saved + step;
      const Scalar plus = loss_fn(std::as_const(params));
      params[k].data()[i] = saved - step;
      const Scalar minus = loss_fn(std::as_const(params));
      params[k].data()[i] = saved;
      g.data()[i] = (plus - minus) / (Scalar(2) * step);
    }
    result.push_back(std::move(g));
  }
  return result;
}

/// ||a - b|| / max(||a||, ||b||), with an absolute floor for near-zero gradients.
template <typename Scalar>
Scalar relative_error(const Matrix<Scalar>& a, const Matrix<Scalar>& b, Scalar floor = Scalar(1e-8)) {
  const Scalar scale = std::max({a.norm(), b.norm(), floor});
  return (a - b).norm() / scale;
}

using VarD = Var<double>;

}  // namespace ttp::ad
