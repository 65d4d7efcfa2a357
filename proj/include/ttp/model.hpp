#pragma once

// Progress-estimation network: fused visual/goal input, learned projections,
// residual adaptation MLP and the progression head.
//
//   z          = P_Q x
//   f_adapt(z) = z + W2 gelu(W1 z + b1) + b2
//   V(x)       = logistic(w2 gelu(W1h f_adapt(z) + b1h) + b2h)
//   l_self(x)  = || f_adapt(P_K x) - P_V x ||^2
//
// Parameter containers are templated on the tensor holder so the same layout
// serves plain Eigen storage (checkpoints, optimizer) and graph variables.

#include "ttp/autodiff.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <utility>
#include <vector>

namespace ttp {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using ad::VarD;

struct ModelDims {
  Eigen::Index encoder_dim = 0;  // d
  Eigen::Index fused_dim = 0;    // D = 2d
  Eigen::Index proj_dim = 0;     // d'
  Eigen::Index head_dim = 0;     // hidden width of the head

  static ModelDims make(Eigen::Index encoder_dim, Eigen::Index proj_dim, Eigen::Index head_dim) {
    return {encoder_dim, 2 * encoder_dim, proj_dim, head_dim};
  }
  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

template <typename T>
struct AdaptParamsT {
  T w1, b1, w2, b2;
};

template <typename T>
struct ProjectionsT {
  T query, key, value;
};

template <typename T>
struct HeadParamsT {
  T w1, b1, w2, b2;
};

template <typename T>
struct MetaParamsT {
  AdaptParamsT<T> adapt;  // theta_0, the per-trajectory initialization
  ProjectionsT<T> proj;
  HeadParamsT<T> head;
};

using AdaptParams = AdaptParamsT<Mat>;
using Projections = ProjectionsT<Mat>;
using HeadParams = HeadParamsT<Mat>;
using MetaParams = MetaParamsT<Mat>;

// Fixed tensor order: theta_0 (w1, b1, w2, b2), P_Q, P_K, P_V, head (w1, b1, w2, b2).
// Checkpoints and optimizer state follow it.
inline constexpr std::size_t kMetaTensorCount = 11;

template <typename T>
std::vector<T*> tensors(AdaptParamsT<T>& p) {
  return {&p.w1, &p.b1, &p.w2, &p.b2};
}
template <typename T>
std::vector<const T*> tensors(const AdaptParamsT<T>& p) {
  return {&p.w1, &p.b1, &p.w2, &p.b2};
}
template <typename T>
std::vector<T*> tensors(MetaParamsT<T>& p) {
  return {&p.adapt.w1, &p.adapt.b1, &p.adapt.w2, &p.adapt.b2, &p.proj.query, &p.proj.key,
          &p.proj.value, &p.head.w1,   &p.head.b1,  &p.head.w2,  &p.head.b2};
}
template <typename T>
std::vector<const T*> tensors(const MetaParamsT<T>& p) {
  return {&p.adapt.w1, &p.adapt.b1, &p.adapt.w2, &p.adapt.b2, &p.proj.query, &p.proj.key,
          &p.proj.value, &p.head.w1,   &p.head.b1,  &p.head.w2,  &p.head.b2};
}

/// Applies `f` to every tensor of `p`, preserving layout.
template <typename T, typename F>
auto transform(const AdaptParamsT<T>& p, F&& f) {
  using U = decltype(f(p.w1));
  return AdaptParamsT<U>{f(p.w1), f(p.b1), f(p.w2), f(p.b2)};
}
template <typename T, typename F>
auto transform(const ProjectionsT<T>& p, F&& f) {
  using U = decltype(f(p.query));
  return ProjectionsT<U>{f(p.query), f(p.key), f(p.value)};
}
template <typename T, typename F>
auto transform(const HeadParamsT<T>& p, F&& f) {
  using U = decltype(f(p.w1));
  return HeadParamsT<U>{f(p.w1), f(p.b1), f(p.w2), f(p.b2)};
}
template <typename T, typename F>
auto transform(const MetaParamsT<T>& p, F&& f) {
  using U = decltype(f(p.head.w1));
  return MetaParamsT<U>{transform(p.adapt, f), transform(p.proj, f), transform(p.head, f)};
}

template <typename P>
auto as_params(const P& p) {
  return transform(p, [](const Mat& m) { return VarD::param(m); });
}
template <typename P>
auto as_constants(const P& p) {
  return transform(p, [](const Mat& m) { return VarD::constant(m); });
}
template <typename P>
auto values_of(const P& p) {
  return transform(p, [](const VarD& v) -> Mat { return v.value(); });
}

/// False for the frozen-feature regressor, whose adaptation tensors and
/// P_K/P_V are empty.
bool has_adaptation(const MetaParams& meta);
ModelDims dims_of(const MetaParams& meta);

/// Throws std::invalid_argument when the tensor shapes are inconsistent.
void validate(const MetaParams& meta);

/// Projections and weights uniform in +-1/sqrt(fan_in); f_adapt biases and W2
/// start at zero so f_adapt begins as the identity. Head biases start at zero.
MetaParams init_meta_params(const ModelDims& dims, std::uint64_t seed);

/// Same as init_meta_params but without the adaptation module or P_K/P_V.
MetaParams init_regressor_params(const ModelDims& dims, std::uint64_t seed);

/// FNV-1a over the raw bytes of every tensor, in layout order.
std::uint64_t checksum(const MetaParams& meta);

// ---------------------------------------------------------------------------
// Input fusion

/// [visual; goal]. Throws std::invalid_argument on dimension mismatch.
Vec fuse(const Vec& visual, const Vec& goal);
std::pair<Vec, Vec> split_fused(const Vec& fused);

/// Fused frames as columns: D x T from T x d visual rows and one goal.
Mat fuse_frames(const Mat& visual_rows, const Vec& goal);

// ---------------------------------------------------------------------------
// Differentiable forward pieces. Inputs are column-stacked: x is D x n.

template <typename Scalar>
ad::Var<Scalar> adapt_forward(const ad::Var<Scalar>& z, const AdaptParamsT<ad::Var<Scalar>>& theta) {
  const auto hidden = ad::gelu(ad::add_colwise(theta.w1 * z, theta.b1));
  return ad::add_colwise(z + theta.w2 * hidden, theta.b2);
}

/// Reconstruction loss summed over the columns of x.
template <typename Scalar>
ad::Var<Scalar> self_loss(const ad::Var<Scalar>& x, const AdaptParamsT<ad::Var<Scalar>>& theta,
                          const ProjectionsT<ad::Var<Scalar>>& proj) {
  const auto corrupted = proj.key * x;
  const auto target = proj.value * x;
  return ad::squared_norm(adapt_forward(corrupted, theta) - target);
}

template <typename Scalar>
ad::Var<Scalar> head_forward(const ad::Var<Scalar>& z, const HeadParamsT<ad::Var<Scalar>>& head) {
  const auto hidden = ad::gelu(ad::add_colwise(head.w1 * z, head.b1));
  return ad::sigmoid(ad::add_colwise(head.w2 * hidden, head.b2));
}

/// Progress estimates (1 x n). Pass an undefined `theta` (default-constructed
/// Vars) to skip the adaptation module.
template <typename Scalar>
ad::Var<Scalar> predict(const ad::Var<Scalar>& x, const AdaptParamsT<ad::Var<Scalar>>& theta,
                        const ProjectionsT<ad::Var<Scalar>>& proj,
                        const HeadParamsT<ad::Var<Scalar>>& head) {
  auto z = proj.query * x;
  if (theta.w1.defined()) z = adapt_forward(z, theta);
  return head_forward(z, head);
}

// ---------------------------------------------------------------------------
// Value-level helpers (no graph recorded).

Vec adapt_forward(const Vec& z, const AdaptParams& theta);
double self_loss(const Vec& x, const AdaptParams& theta, const Projections& proj);

/// Single-frame estimate using `theta` in place of theta_0.
double predict(const Vec& x, const AdaptParams& theta, const MetaParams& meta);

/// Single-frame estimate with no adaptation module (or theta_0 when present).
double predict_frozen(const Vec& x, const MetaParams& meta);

/// (prediction - label)^2; throws std::invalid_argument unless label is in [0, 1].
double pred_loss(double prediction, double label);

}  // namespace ttp
