#pragma once

// Online test-time adaptation of f_adapt.
//
// One update (repeated `epochs` times, gradient recomputed each time):
//   theta <- theta - eta * sum_{x in window} grad_theta l_self(x; theta)
//
// Variants, per frame t (update first, then predict with the updated theta):
//   Implicit   (IM): theta_t = update(theta_{t-1}, {x_t}); state carries over.
//   Explicit   (EX): theta_t = update(theta_0, {x_{t-k} .. x_t}); discarded.
//   Reset      (RS): theta_t = update(theta_0, {x_t}); discarded.
//   Trajectory (TR): theta* = update(theta_0, {x_1 .. x_T}) once for all frames.
// Projections and head are never modified.

#include "ttp/dataset.hpp"
#include "ttp/model.hpp"

#include <optional>
#include <string_view>
#include <vector>

namespace ttp {

enum class Variant { Implicit, Explicit, Reset, Trajectory };

std::string_view to_string(Variant v);  // "ttt-im", ...
/// Accepts "ttt-im" / "im" style names; throws std::invalid_argument otherwise.
Variant parse_variant(std::string_view text);

struct AdaptConfig {
  Variant variant = Variant::Implicit;
  Eigen::Index window = 0;  // k: frames of context before t (EX only)
  double eta = 0.1;
  int epochs = 1;
  /// Keep IM state across trajectories instead of resetting to theta_0.
  bool carry_across_episodes = false;

  /// IM eta 0.1, EX eta 1.0 with k = 7, RS/TR eta 0.1; one epoch.
  static AdaptConfig defaults(Variant variant);

  /// Throws std::invalid_argument on an inconsistent combination.
  void validate() const;
};

struct AdaptState {
  AdaptParams theta;
  Eigen::Index step = 0;
};

AdaptState initial_state(const MetaParams& meta);

/// Differentiable update; with `create_graph` the result depends on the
/// incoming theta and projections through the gradient itself. `first_loss`
/// receives l_self at the incoming theta.
AdaptParamsT<VarD> inner_update(const AdaptParamsT<VarD>& theta, const VarD& window, double eta,
                                int epochs, const ProjectionsT<VarD>& proj, bool create_graph,
                                VarD* first_loss = nullptr);

/// Value-level update. `window` holds one fused frame per column.
AdaptParams inner_update(const AdaptParams& theta, const Mat& window, double eta, int epochs,
                         const Projections& proj);

/// Per-frame progress estimates for D x T fused frames. For IM, `state`
/// (when given) supplies the starting theta and receives the final one.
std::vector<double> run_ttt(const Mat& frames, const MetaParams& meta, const AdaptConfig& cfg,
                            AdaptState* state = nullptr);
std::vector<double> run_ttt(const TrajectoryRecord& traj, const MetaParams& meta,
                            const AdaptConfig& cfg, AdaptState* state = nullptr);

/// Estimates with theta_0 and no update (or no adaptation module at all for
/// the regressor), frame by frame.
std::vector<double> frozen_forward(const Mat& frames, const MetaParams& meta);

}  // namespace ttp
