#pragma once

// Finite-difference checks of the analytic gradients on small random models.

#include <cstdint>
#include <string>
#include <vector>

namespace ttp {

struct GradCheckResult {
  std::string name;  // "<loss>/<parameter group>"
  double max_relative_error = 0.0;
  double tolerance = 0.0;

  bool passed() const { return max_relative_error <= tolerance; }
};

struct GradCheckOptions {
  std::uint64_t seed = 7;
  double step = 1e-5;
  double first_order_tolerance = 1e-6;
  double second_order_tolerance = 1e-4;
};

/// Gradients of l_self and the prediction loss with respect to every
/// parameter group (d = 4, d' = 3).
std::vector<GradCheckResult> check_first_order(const GradCheckOptions& options = {});

/// Outer gradients through the unrolled inner update: one inner step on a
/// single frame, and a two-frame training window (d = 4, d' = 3, w_tr = 2).
std::vector<GradCheckResult> check_second_order(const GradCheckOptions& options = {});

}  // namespace ttp
