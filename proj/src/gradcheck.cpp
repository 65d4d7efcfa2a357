#include "ttp/gradcheck.hpp"

#include "ttp/adaptation.hpp"
#include "ttp/model.hpp"
#include "ttp/rng.hpp"
#include "ttp/train.hpp"

#include <algorithm>
#include <random>

namespace ttp {
namespace {

constexpr Eigen::Index kDim = 4;
constexpr Eigen::Index kProj = 3;
constexpr Eigen::Index kHead = 5;

Mat random_matrix(Eigen::Index rows, Eigen::Index cols, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, scale);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

// Every tensor non-zero, so no gradient path is trivially dead.
MetaParams toy_params(std::mt19937_64& rng) {
  MetaParams p = init_meta_params(ModelDims::make(kDim, kProj, kHead), rng());
  for (Mat* m : tensors(p)) *m += random_matrix(m->rows(), m->cols(), 0.3, rng);
  return p;
}

using Group = std::pair<const char*, std::vector<std::size_t>>;

// Indices into tensors(MetaParams).
const std::vector<Group> kGroups = {
    {"adapt", {0, 1, 2, 3}}, {"query", {4}}, {"key", {5}}, {"value", {6}}, {"head", {7, 8, 9, 10}}};

std::vector<Mat> flat(const MetaParams& p) {
  std::vector<Mat> out;
  for (const Mat* m : tensors(p)) out.push_back(*m);
  return out;
}

MetaParams unflat(const std::vector<Mat>& mats) {
  MetaParams p;
  auto dst = tensors(p);
  for (std::size_t k = 0; k < dst.size(); ++k) *dst[k] = mats[k];
  return p;
}

template <typename LossFn>
void compare(const std::string& loss_name, LossFn&& loss, const MetaParams& at, double step,
             double tolerance, std::vector<GradCheckResult>& out) {
  const auto vars = as_params(at);
  std::vector<VarD> params;
  for (const VarD* v : tensors(vars)) params.push_back(*v);
  const auto analytic = ad::grad(loss(vars), params);
  const auto numeric = ad::finite_diff_grad(
      [&](const std::vector<Mat>& mats) { return loss(as_params(unflat(mats))).item(); }, flat(at), step);
  for (const auto& [group, indices] : kGroups) {
    double worst = 0.0;
    bool touched = false;
    for (std::size_t k : indices) {
      if (analytic[k].value().isZero(0.0) && numeric[k].isZero(1e-12)) continue;
      touched = true;
      worst = std::max(worst, ad::relative_error<double>(analytic[k].value(), numeric[k]));
    }
    if (touched) out.push_back({loss_name + "/" + group, worst, tolerance});
  }
}

}  // namespace

std::vector<GradCheckResult> check_first_order(const GradCheckOptions& options) {
  auto rng = rng_stream(options.seed, "gradcheck/first-order");
  const MetaParams at = toy_params(rng);
  const Mat x = random_matrix(2 * kDim, 3, 1.0, rng);
  const Mat frame = x.col(0);
  const double label = 0.37;

  std::vector<GradCheckResult> out;
  compare(
      "self_loss", [&](const MetaParamsT<VarD>& p) { return self_loss(VarD::constant(x), p.adapt, p.proj); },
      at, options.step, options.first_order_tolerance, out);
  compare(
      "pred_loss",
      [&](const MetaParamsT<VarD>& p) {
        const auto r = ad::add_scalar(predict(VarD::constant(frame), p.adapt, p.proj, p.head), -label);
        return ad::cwise_product(r, r);
      },
      at, options.step, options.first_order_tolerance, out);
  return out;
}

std::vector<GradCheckResult> check_second_order(const GradCheckOptions& options) {
  auto rng = rng_stream(options.seed, "gradcheck/second-order");
  const MetaParams at = toy_params(rng);
  const Mat frames = random_matrix(2 * kDim, 2, 1.0, rng);
  const double eta = 0.1;

  std::vector<GradCheckResult> out;
  compare(
      "one_step",
      [&](const MetaParamsT<VarD>& p) {
        const VarD x = VarD::constant(frames.col(0));
        const auto theta = inner_update(p.adapt, x, eta, 1, p.proj, true);
        const auto r = ad::add_scalar(predict(x, theta, p.proj, p.head), -0.5);
        return ad::cwise_product(r, r);
      },
      at, options.step, options.second_order_tolerance, out);

  TrainConfig cfg;
  cfg.inner_lr = eta;
  cfg.meta_grad_mode = MetaGradMode::Exact;
  const TrainingExample example{"gradcheck", frames, (Vec(2) << 0.5, 1.0).finished(), 2};
  const Window window{0, 2, {}};
  compare(
      "window_loss", [&](const MetaParamsT<VarD>& p) { return window_loss(example, window, p, cfg).total; }, at,
      options.step, options.second_order_tolerance, out);
  return out;
}

}  // namespace ttp
