#include "ttp/adaptation.hpp"

#include "ttp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ttp {

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::Implicit: return "ttt-im";
    case Variant::Explicit: return "ttt-ex";
    case Variant::Reset: return "ttt-rs";
    case Variant::Trajectory: return "ttt-tr";
  }
  return "?";
}

Variant parse_variant(std::string_view text) {
  if (text == "ttt-im" || text == "im" || text == "TTT-IM") return Variant::Implicit;
  if (text == "ttt-ex" || text == "ex" || text == "TTT-EX") return Variant::Explicit;
  if (text == "ttt-rs" || text == "rs" || text == "TTT-RS") return Variant::Reset;
  if (text == "ttt-tr" || text == "tr" || text == "TTT-TR") return Variant::Trajectory;
  throw std::invalid_argument("unknown adaptation variant '" + std::string(text) + "'");
}

AdaptConfig AdaptConfig::defaults(Variant variant) {
  AdaptConfig cfg;
  cfg.variant = variant;
  if (variant == Variant::Explicit) {
    cfg.window = 7;
    cfg.eta = 1.0;
  }
  return cfg;
}

void AdaptConfig::validate() const {
  if (window < 0) throw std::invalid_argument("window k must be >= 0");
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw std::invalid_argument("eta must be finite and >= 0");
  if (epochs < 1) throw std::invalid_argument("adaptation epochs must be >= 1");
  if (variant != Variant::Explicit && window != 0) {
    throw std::invalid_argument(std::string(to_string(variant)) +
                                " adapts on the current frame only; k must be 0");
  }
  if (carry_across_episodes && variant != Variant::Implicit) {
    throw std::invalid_argument("carrying state across episodes requires ttt-im");
  }
}

AdaptState initial_state(const MetaParams& meta) { return {meta.adapt, 0}; }

AdaptParamsT<VarD> inner_update(const AdaptParamsT<VarD>& theta, const VarD& window, double eta,
                                int epochs, const ProjectionsT<VarD>& proj, bool create_graph,
                                VarD* first_loss) {
  if (window.cols() < 1) throw std::invalid_argument("inner_update: empty window");
  if (epochs < 1) throw std::invalid_argument("inner_update: epochs must be >= 1");
  ad::GradMode recording(true);
  AdaptParamsT<VarD> current = theta;
  for (int e = 0; e < epochs; ++e) {
    const VarD loss = self_loss(window, current, proj);
    if (e == 0 && first_loss) *first_loss = loss;
    const auto g = ad::grad(loss, {current.w1, current.b1, current.w2, current.b2},
                            {.create_graph = create_graph});
    current = {current.w1 - g[0] * eta, current.b1 - g[1] * eta, current.w2 - g[2] * eta,
               current.b2 - g[3] * eta};
  }
  return current;
}

AdaptParams inner_update(const AdaptParams& theta, const Mat& window, double eta, int epochs,
                         const Projections& proj) {
  const auto updated = inner_update(as_params(theta), VarD::constant(window), eta, epochs,
                                    as_constants(proj), false);
  AdaptParams out = values_of(updated);
  for (const Mat* m : tensors(out)) {
    if (!m->allFinite()) throw NumericalError("test-time update diverged (non-finite adaptation parameters)");
  }
  return out;
}

std::vector<double> frozen_forward(const Mat& frames, const MetaParams& meta) {
  std::vector<double> out(static_cast<std::size_t>(frames.cols()));
  for (Eigen::Index t = 0; t < frames.cols(); ++t) out[t] = predict_frozen(frames.col(t), meta);
  return out;
}

std::vector<double> run_ttt(const Mat& frames, const MetaParams& meta, const AdaptConfig& cfg,
                            AdaptState* state) {
  cfg.validate();
  if (!has_adaptation(meta)) throw std::invalid_argument("run_ttt: model has no adaptation module");
  const Eigen::Index length = frames.cols();
  if (length < 1) throw std::invalid_argument("run_ttt: empty trajectory");
  if (frames.rows() != dims_of(meta).fused_dim) {
    throw std::invalid_argument("run_ttt: frame dimension does not match the model");
  }

  std::vector<double> out(static_cast<std::size_t>(length));
  const auto& proj = meta.proj;
  switch (cfg.variant) {
    case Variant::Implicit: {
      AdaptParams theta = state ? state->theta : meta.adapt;
      for (Eigen::Index t = 0; t < length; ++t) {
        theta = inner_update(theta, frames.middleCols(t, 1), cfg.eta, cfg.epochs, proj);
        out[t] = predict(frames.col(t), theta, meta);
      }
      if (state) {
        state->theta = std::move(theta);
        state->step += length;
      }
      break;
    }
    case Variant::Explicit:
    case Variant::Reset: {
      const Eigen::Index k = cfg.variant == Variant::Explicit ? cfg.window : 0;
      for (Eigen::Index t = 0; t < length; ++t) {
        const Eigen::Index first = std::max<Eigen::Index>(0, t - k);
        const AdaptParams theta =
            inner_update(meta.adapt, frames.middleCols(first, t - first + 1), cfg.eta, cfg.epochs, proj);
        out[t] = predict(frames.col(t), theta, meta);
      }
      break;
    }
    case Variant::Trajectory: {
      const AdaptParams theta = inner_update(meta.adapt, frames, cfg.eta, cfg.epochs, proj);
      for (Eigen::Index t = 0; t < length; ++t) out[t] = predict(frames.col(t), theta, meta);
      break;
    }
  }
  return out;
}

std::vector<double> run_ttt(const TrajectoryRecord& traj, const MetaParams& meta,
                            const AdaptConfig& cfg, AdaptState* state) {
  return run_ttt(fused_frames(traj), meta, cfg, state);
}

}  // namespace ttp
