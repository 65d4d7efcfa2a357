#include "ttp/model.hpp"

#include "ttp/rng.hpp"

#include <cmath>
#include <cstring>
#include <random>
#include <stdexcept>
#include <string>

namespace ttp {
namespace {

Mat uniform_fan_in(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Mat m(rows, cols);
  // Row-major fill order keeps the draw sequence independent of storage order.
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
  }
  return m;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("inconsistent model parameters: " + what);
}

void require_shape(const Mat& m, Eigen::Index rows, Eigen::Index cols, const char* name) {
  require(m.rows() == rows && m.cols() == cols,
          std::string(name) + " is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
              ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
}

HeadParams init_head(const ModelDims& dims, std::mt19937_64& rng) {
  HeadParams head;
  head.w1 = uniform_fan_in(dims.head_dim, dims.proj_dim, rng);
  head.b1 = Mat::Zero(dims.head_dim, 1);
  head.w2 = uniform_fan_in(1, dims.head_dim, rng);
  head.b2 = Mat::Zero(1, 1);
  return head;
}

void check_dims(const ModelDims& dims) {
  if (dims.encoder_dim <= 0 || dims.fused_dim != 2 * dims.encoder_dim || dims.proj_dim <= 0 ||
      dims.head_dim <= 0) {
    throw std::invalid_argument("model dimensions must be positive with D = 2d");
  }
}

}  // namespace

bool has_adaptation(const MetaParams& meta) { return meta.adapt.w1.size() > 0; }

ModelDims dims_of(const MetaParams& meta) {
  ModelDims dims;
  dims.fused_dim = meta.proj.query.cols();
  dims.encoder_dim = dims.fused_dim / 2;
  dims.proj_dim = meta.proj.query.rows();
  dims.head_dim = meta.head.w1.rows();
  return dims;
}

void validate(const MetaParams& meta) {
  const ModelDims dims = dims_of(meta);
  require(dims.proj_dim > 0 && dims.fused_dim > 0 && dims.fused_dim % 2 == 0,
          "P_Q must be d' x 2d with d, d' > 0");
  require(dims.head_dim > 0, "head hidden width must be positive");
  const auto dp = dims.proj_dim;
  if (has_adaptation(meta)) {
    require_shape(meta.adapt.w1, dp, dp, "W1");
    require_shape(meta.adapt.b1, dp, 1, "b1");
    require_shape(meta.adapt.w2, dp, dp, "W2");
    require_shape(meta.adapt.b2, dp, 1, "b2");
    require_shape(meta.proj.key, dp, dims.fused_dim, "P_K");
    require_shape(meta.proj.value, dp, dims.fused_dim, "P_V");
  } else {
    for (const Mat* m : {&meta.adapt.b1, &meta.adapt.w2, &meta.adapt.b2, &meta.proj.key,
                         &meta.proj.value}) {
      require(m->size() == 0, "regressor parameters must not carry adaptation tensors");
    }
  }
  require_shape(meta.head.w1, dims.head_dim, dp, "head W1");
  require_shape(meta.head.b1, dims.head_dim, 1, "head b1");
  require_shape(meta.head.w2, 1, dims.head_dim, "head w2");
  require_shape(meta.head.b2, 1, 1, "head b2");
  for (const Mat* m : tensors(meta)) require(m->allFinite(), "non-finite entry");
}

MetaParams init_meta_params(const ModelDims& dims, std::uint64_t seed) {
  check_dims(dims);
  auto rng = rng_stream(seed, "init");
  MetaParams meta;
  meta.proj.query = uniform_fan_in(dims.proj_dim, dims.fused_dim, rng);
  meta.proj.key = uniform_fan_in(dims.proj_dim, dims.fused_dim, rng);
  meta.proj.value = uniform_fan_in(dims.proj_dim, dims.fused_dim, rng);
  meta.adapt.w1 = uniform_fan_in(dims.proj_dim, dims.proj_dim, rng);
  meta.adapt.b1 = Mat::Zero(dims.proj_dim, 1);
  meta.adapt.w2 = Mat::Zero(dims.proj_dim, dims.proj_dim);
  meta.adapt.b2 = Mat::Zero(dims.proj_dim, 1);
  meta.head = init_head(dims, rng);
  return meta;
}

MetaParams init_regressor_params(const ModelDims& dims, std::uint64_t seed) {
  check_dims(dims);
  auto rng = rng_stream(seed, "init");
  MetaParams meta;
  meta.proj.query = uniform_fan_in(dims.proj_dim, dims.fused_dim, rng);
  meta.head = init_head(dims, rng);
  return meta;
}

std::uint64_t checksum(const MetaParams& meta) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ull;
    }
  };
  for (const Mat* m : tensors(meta)) {
    const std::int64_t shape[2] = {m->rows(), m->cols()};
    mix(shape, sizeof shape);
    mix(m->data(), sizeof(double) * static_cast<std::size_t>(m->size()));
  }
  return h;
}

Vec fuse(const Vec& visual, const Vec& goal) {
  if (visual.size() != goal.size()) {
    throw std::invalid_argument("fuse: visual dimension " + std::to_string(visual.size()) +
                                " != goal dimension " + std::to_string(goal.size()));
  }
  Vec x(visual.size() + goal.size());
  x << visual, goal;
  return x;
}

std::pair<Vec, Vec> split_fused(const Vec& fused) {
  if (fused.size() % 2 != 0) throw std::invalid_argument("split_fused: odd length");
  const auto d = fused.size() / 2;
  return {fused.head(d), fused.tail(d)};
}

Mat fuse_frames(const Mat& visual_rows, const Vec& goal) {
  if (visual_rows.cols() != goal.size()) {
    throw std::invalid_argument("fuse_frames: visual dimension " +
                                std::to_string(visual_rows.cols()) + " != goal dimension " +
                                std::to_string(goal.size()));
  }
  const auto d = goal.size();
  Mat x(2 * d, visual_rows.rows());
  x.topRows(d) = visual_rows.transpose();
  x.bottomRows(d) = goal.replicate(1, visual_rows.rows());
  return x;
}

Vec adapt_forward(const Vec& z, const AdaptParams& theta) {
  ad::NoGrad no_grad;
  return adapt_forward(VarD::constant(z), as_constants(theta)).value();
}

double self_loss(const Vec& x, const AdaptParams& theta, const Projections& proj) {
  ad::NoGrad no_grad;
  return self_loss(VarD::constant(x), as_constants(theta), as_constants(proj)).item();
}

double predict(const Vec& x, const AdaptParams& theta, const MetaParams& meta) {
  ad::NoGrad no_grad;
  return predict(VarD::constant(x), as_constants(theta), as_constants(meta.proj),
                 as_constants(meta.head))
      .item();
}

double predict_frozen(const Vec& x, const MetaParams& meta) {
  if (has_adaptation(meta)) return predict(x, meta.adapt, meta);
  ad::NoGrad no_grad;
  return predict(VarD::constant(x), AdaptParamsT<VarD>{}, as_constants(meta.proj),
                 as_constants(meta.head))
      .item();
}

double pred_loss(double prediction, double label) {
  if (!(label >= 0.0 && label <= 1.0)) {
    throw std::invalid_argument("pred_loss: label " + std::to_string(label) + " outside [0, 1]");
  }
  const double diff = prediction - label;
  return diff * diff;
}

}  // namespace ttp
