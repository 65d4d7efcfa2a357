#include "doctest.h"
#include "oracles.hpp"

#include "ttp/autodiff.hpp"

#include <random>

using ttp::ad::VarD;
using Mat = Eigen::MatrixXd;
namespace ad = ttp::ad;

namespace {

Mat random_mat(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

template <typename Fn>
double max_error(Fn&& fn, std::vector<Mat> at) {
  std::vector<VarD> params;
  for (const auto& m : at) params.push_back(VarD::param(m));
  const auto analytic = ad::grad(fn(params), params);
  const auto numeric = ad::finite_diff_grad(
      [&](const std::vector<Mat>& ms) {
        std::vector<VarD> ps;
        for (const auto& m : ms) ps.push_back(VarD::constant(m));
        return fn(ps).item();
      },
      at, 1e-5);
  double worst = 0.0;
  for (std::size_t k = 0; k < at.size(); ++k) {
    worst = std::max(worst, ad::relative_error<double>(analytic[k].value(), numeric[k]));
  }
  return worst;
}

}  // namespace

TEST_CASE("gelu matches the quadrature definition") {
  for (double x : {-4.0, -1.3, -0.2, 0.0, 0.4, 1.0, 2.7}) {
    CHECK(ad::gelu(x) == doctest::Approx(oracle::gelu(x)).epsilon(1e-10));
    CHECK(ad::gelu_derivative(x, 1) == doctest::Approx(oracle::gelu_prime(x)).epsilon(1e-10));
  }
}

TEST_CASE("higher gelu derivatives agree with differences of lower ones") {
  const double h = 1e-5;
  for (double x : {-2.0, -0.5, 0.3, 1.7}) {
    for (int order = 1; order <= 3; ++order) {
      const double fd = (ad::gelu_derivative(x + h, order - 1) - ad::gelu_derivative(x - h, order - 1)) / (2 * h);
      CHECK(ad::gelu_derivative(x, order) == doctest::Approx(fd).epsilon(1e-7));
    }
  }
}

TEST_CASE("elementary op gradients match finite differences") {
  std::mt19937_64 rng(3);
  const Mat a = random_mat(3, 4, rng), b = random_mat(4, 2, rng), c = random_mat(3, 4, rng);
  const Mat v = random_mat(3, 1, rng);

  CHECK(max_error([](const std::vector<VarD>& p) { return ad::squared_norm(p[0] * p[1]); }, {a, b}) < 1e-8);
  CHECK(max_error([](const std::vector<VarD>& p) { return ad::sum(ad::cwise_product(p[0], p[1])); }, {a, c}) <
        1e-8);
  CHECK(max_error([](const std::vector<VarD>& p) { return ad::sum(ad::gelu(p[0] - p[1])); }, {a, c}) < 1e-8);
  CHECK(max_error([](const std::vector<VarD>& p) { return ad::sum(ad::sigmoid(ad::add_colwise(p[0], p[1]))); },
                  {a, v}) < 1e-8);
  CHECK(max_error([](const std::vector<VarD>& p) { return ad::squared_norm(ad::transpose(p[0]) * p[1]); },
                  {a, c}) < 1e-8);
  CHECK(max_error([](const std::vector<VarD>& p) { return ad::squared_norm(ad::rowwise_sum(p[0]) * 2.0); }, {a}) <
        1e-8);
}

TEST_CASE("second derivatives through create_graph") {
  // f(x) = sum(gelu(x)^2); d/dx of (df/dx . u) checked against differences of the first gradient.
  std::mt19937_64 rng(5);
  const Mat x0 = random_mat(4, 1, rng), u = random_mat(4, 1, rng);
  auto directional = [&](const Mat& x) {
    const VarD x_var = VarD::param(x);
    const VarD f = ad::squared_norm(ad::gelu(x_var));
    const auto g = ad::grad(f, {x_var}, {.create_graph = true});
    return std::make_pair(x_var, ad::sum(ad::cwise_product(g[0], VarD::constant(u))));
  };
  const auto [x_var, gu] = directional(x0);
  const Mat hvp = ad::grad(gu, {x_var})[0].value();
  const Mat fd = ad::finite_diff_grad([&](const std::vector<Mat>& p) { return directional(p[0]).second.item(); },
                                      {x0}, 1e-5)[0];
  CHECK(ad::relative_error<double>(hvp, fd) < 1e-7);
}

TEST_CASE("grad rejects non-scalar losses and zero-fills disconnected parameters") {
  const VarD a = VarD::param(Mat::Ones(2, 2));
  const VarD b = VarD::param(Mat::Ones(3, 1));
  CHECK_THROWS_AS(ad::grad(a, {a}), std::invalid_argument);
  const auto g = ad::grad(ad::squared_norm(a), {a, b});
  CHECK(g[0].value().isApprox(2 * Mat::Ones(2, 2)));
  CHECK(g[1].value().isZero(0.0));
  CHECK(g[1].rows() == 3);
}

TEST_CASE("leaves reject non-finite values") {
  Mat m = Mat::Zero(2, 2);
  m(1, 0) = std::nan("");
  CHECK_THROWS_AS(VarD::param(m), std::domain_error);
}

TEST_CASE("no graph is recorded under NoGrad") {
  const VarD a = VarD::param(Mat::Ones(2, 1));
  ad::NoGrad guard;
  const VarD y = ad::squared_norm(a);
  CHECK_FALSE(y.requires_grad());
}
