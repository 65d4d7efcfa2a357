#pragma once

#include "ttp/model.hpp"

#include <span>
#include <vector>

namespace ttp {

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamWState {
  std::vector<Mat> first_moment;
  std::vector<Mat> second_moment;
  long long step = 0;
};

/// One AdamW update with bias correction and decoupled weight decay:
///   p <- p (1 - lr wd) - lr m_hat / (sqrt(v_hat) + eps)
/// Moments are created on the first call.
void adamw_step(std::span<Mat* const> params, std::span<const Mat> grads, AdamWState& state,
                double lr, double weight_decay, const AdamWOptions& options = {});

/// Linear warmup from 0 to `peak` over warmup_frac * total_steps steps, then
/// cosine decay to 0 at total_steps.
double cosine_lr(long long step, long long total_steps, double warmup_frac, double peak);

}  // namespace ttp
