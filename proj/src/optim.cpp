#include "ttp/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ttp {

void adamw_step(std::span<Mat* const> params, std::span<const Mat> grads, AdamWState& state,
                double lr, double weight_decay, const AdamWOptions& options) {
  if (params.size() != grads.size()) throw std::invalid_argument("adamw_step: parameter/gradient count");
  if (state.first_moment.empty()) {
    for (const Mat* p : params) {
      state.first_moment.push_back(Mat::Zero(p->rows(), p->cols()));
      state.second_moment.push_back(Mat::Zero(p->rows(), p->cols()));
    }
  }
  if (state.first_moment.size() != params.size()) throw std::invalid_argument("adamw_step: state mismatch");
  ++state.step;
  const double c1 = 1.0 - std::pow(options.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(options.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Mat& p = *params[i];
    const Mat& g = grads[i];
    if (g.rows() != p.rows() || g.cols() != p.cols()) {
      throw std::invalid_argument("adamw_step: gradient shape differs from parameter");
    }
    Mat& m = state.first_moment[i];
    Mat& v = state.second_moment[i];
    m = options.beta1 * m + (1.0 - options.beta1) * g;
    v = options.beta2 * v + (1.0 - options.beta2) * g.cwiseAbs2();
    p *= 1.0 - lr * weight_decay;
    p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + options.eps);
  }
}

double cosine_lr(long long step, long long total_steps, double warmup_frac, double peak) {
  if (total_steps <= 0 || step < 0 || step > total_steps) {
    throw std::invalid_argument("cosine_lr: step outside [0, total_steps]");
  }
  const double warmup = warmup_frac * static_cast<double>(total_steps);
  const double s = static_cast<double>(step);
  if (s < warmup) return peak * s / warmup;
  const double span = static_cast<double>(total_steps) - warmup;
  if (span <= 0.0) return peak;
  const double progress = (s - warmup) / span;
  return 0.5 * peak * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace ttp
