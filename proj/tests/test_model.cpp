#include "doctest.h"
#include "oracles.hpp"

#include "ttp/checkpoint.hpp"
#include "ttp/errors.hpp"
#include "ttp/model.hpp"

#include <random>

using namespace ttp;

TEST_CASE("initialization starts f_adapt at the identity") {
  const auto meta = init_meta_params(ModelDims::make(5, 4, 6), 11);
  validate(meta);
  const Vec z = Vec::LinSpaced(4, -1.0, 2.0);
  CHECK(adapt_forward(z, meta.adapt) == z);
  CHECK(meta.proj.query.rows() == 4);
  CHECK(meta.proj.query.cols() == 10);
  CHECK(meta.proj.query.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(10.0));
  CHECK(meta.adapt.w1.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(4.0));
}

TEST_CASE("initialization is a pure function of the seed") {
  const auto dims = ModelDims::make(3, 2, 2);
  CHECK(checksum(init_meta_params(dims, 9)) == checksum(init_meta_params(dims, 9)));
  CHECK(checksum(init_meta_params(dims, 9)) != checksum(init_meta_params(dims, 10)));
}

TEST_CASE("fusion concatenates visual then goal") {
  const Vec v = (Vec(2) << 1, 2).finished(), g = (Vec(2) << 3, 4).finished();
  CHECK(fuse(v, g) == (Vec(4) << 1, 2, 3, 4).finished());
  const auto [v2, g2] = split_fused(fuse(v, g));
  CHECK(v2 == v);
  CHECK(g2 == g);
  CHECK_THROWS_AS(fuse(v, Vec::Zero(3)), std::invalid_argument);

  Mat rows(3, 2);
  rows << 1, 2, 3, 4, 5, 6;
  const Mat x = fuse_frames(rows, g);
  CHECK(x.col(1) == (Vec(4) << 3, 4, 3, 4).finished());
}

TEST_CASE("self loss is zero at the identity map with matching projections") {
  auto meta = init_meta_params(ModelDims::make(3, 2, 2), 1);
  meta.proj.value = meta.proj.key;
  const Vec x = Vec::Ones(6);
  CHECK(self_loss(x, meta.adapt, meta.proj) == 0.0);
}

TEST_CASE("prediction follows the written-out forward pass") {
  const auto meta = init_meta_params(ModelDims::make(2, 3, 4), 21);
  auto perturbed = meta;
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 0.4);
  for (Mat* m : tensors(perturbed)) {
    for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] += n(rng);
  }
  const Vec x = (Vec(4) << 0.3, -0.7, 1.1, 0.2).finished();

  // Loop-based reference using the quadrature GELU.
  const auto& a = perturbed.adapt;
  const auto& h = perturbed.head;
  const Vec z = perturbed.proj.query * x;
  Vec hidden = a.w1 * z + a.b1;
  for (Eigen::Index i = 0; i < hidden.size(); ++i) hidden(i) = oracle::gelu(hidden(i));
  const Vec adapted = z + a.w2 * hidden + a.b2;
  Vec head_hidden = h.w1 * adapted + h.b1;
  for (Eigen::Index i = 0; i < head_hidden.size(); ++i) head_hidden(i) = oracle::gelu(head_hidden(i));
  const double logit = (h.w2 * head_hidden)(0) + h.b2(0, 0);
  const double expected = 1.0 / (1.0 + std::exp(-logit));

  CHECK(predict(x, a, perturbed) == doctest::Approx(expected).epsilon(1e-10));
  CHECK(predict_frozen(x, perturbed) == predict(x, a, perturbed));
}

TEST_CASE("pred_loss rejects labels outside [0, 1]") {
  CHECK(pred_loss(0.25, 0.75) == 0.25);
  CHECK_THROWS_AS(pred_loss(0.5, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(pred_loss(0.5, -0.1), std::invalid_argument);
}

TEST_CASE("validate catches inconsistent shapes") {
  auto meta = init_meta_params(ModelDims::make(3, 2, 2), 1);
  meta.adapt.b2 = Mat::Zero(3, 1);
  CHECK_THROWS_AS(validate(meta), std::invalid_argument);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  const auto meta = init_meta_params(ModelDims::make(3, 4, 5), 77);
  const auto back = decode_checkpoint(encode_checkpoint(meta));
  CHECK(checksum(back) == checksum(meta));

  const auto reg = init_regressor_params(ModelDims::make(3, 8, 5), 77);
  CHECK_FALSE(has_adaptation(reg));
  CHECK(checksum(decode_checkpoint(encode_checkpoint(reg))) == checksum(reg));
}

TEST_CASE("corrupt checkpoints raise typed errors") {
  const auto bytes = encode_checkpoint(init_meta_params(ModelDims::make(2, 2, 2), 1));
  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad), DataError);
  for (std::size_t cut = 0; cut < bytes.size(); cut += 7) {
    const std::vector<std::uint8_t> head(bytes.begin(), bytes.begin() + static_cast<long>(cut));
    CHECK_THROWS_AS(decode_checkpoint(head), DataError);
  }
  auto extra = bytes;
  extra.push_back(0);
  CHECK_THROWS_AS(decode_checkpoint(extra), DataError);
}
