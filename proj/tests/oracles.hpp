#pragma once

// Reference implementations used only by the tests. They share no code with
// the library: plain loops, no graph, no Eigen expression tricks.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

namespace oracle {

// Standard normal CDF by composite Simpson quadrature of the density on [0, |x|].
inline double normal_cdf(double x) {
  const int n = 2000;
  const double a = 0.0, b = std::abs(x), h = (b - a) / n;
  auto pdf = [](double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * M_PI); };
  double s = pdf(a) + pdf(b);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * pdf(a + i * h);
  const double half = s * h / 3.0;
  return x >= 0 ? 0.5 + half : 0.5 - half;
}

inline double gelu(double x) { return x * normal_cdf(x); }

// Ranks with ties replaced by the mean of the positions they occupy (1-based),
// computed by counting rather than sorting.
inline std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0, equal = 0;
    for (double w : v) {
      if (w < v[i]) ++less;
      if (w == v[i]) ++equal;
    }
    r[i] = less + (equal + 1.0) / 2.0;
  }
  return r;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

// Spearman against 1..T: rank both, then Pearson.
inline double spearman_time(const std::vector<double>& preds) {
  std::vector<double> time(preds.size());
  std::iota(time.begin(), time.end(), 1.0);
  return pearson(average_ranks(preds), average_ranks(time));
}

// Every size-b subset of 0..n-1 via bitmasks; best summed pairwise squared
// distance, ties to the lexicographically smallest index list.
struct Subset {
  std::vector<std::size_t> indices;
  double objective = -1.0;
};

inline Subset best_subset(const std::vector<Eigen::VectorXd>& features, std::size_t b) {
  const std::size_t n = features.size();
  Subset best;
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcount(mask)) != b) continue;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (1u << i)) idx.push_back(i);
    }
    double obj = 0.0;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::size_t j = i + 1; j < idx.size(); ++j) {
        double s = 0.0;
        for (Eigen::Index k = 0; k < features[idx[i]].size(); ++k) {
          const double diff = features[idx[i]](k) - features[idx[j]](k);
          s += diff * diff;
        }
        obj += s;
      }
    }
    if (obj > best.objective || (obj == best.objective && idx < best.indices)) best = {idx, obj};
  }
  return best;
}

// Scalar AdamW recurrence with decoupled weight decay and bias correction.
inline double adamw_scalar(double p, const std::vector<double>& grads, double lr, double wd,
                           double b1 = 0.9, double b2 = 0.999, double eps = 1e-8) {
  double m = 0, v = 0;
  for (std::size_t t = 1; t <= grads.size(); ++t) {
    const double g = grads[t - 1];
    p = p - lr * wd * p;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mhat = m / (1 - std::pow(b1, static_cast<double>(t)));
    const double vhat = v / (1 - std::pow(b2, static_cast<double>(t)));
    p = p - lr * mhat / (std::sqrt(vhat) + eps);
  }
  return p;
}

// d' = 1 reconstruction step worked by hand:
//   z = k.x, target = v.x, h = w1 z + b1
//   f = z + w2 gelu(h) + b2, r = f - target, loss = r^2
//   dloss/dw1 = 2 r w2 gelu'(h) z,  dloss/db1 = 2 r w2 gelu'(h)
//   dloss/dw2 = 2 r gelu(h),        dloss/db2 = 2 r
struct ScalarTheta {
  double w1, b1, w2, b2;
};

inline double gelu_prime(double x) {
  return normal_cdf(x) + x * std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
}

inline ScalarTheta scalar_step(ScalarTheta th, double z, double target, double eta) {
  const double h = th.w1 * z + th.b1;
  const double r = z + th.w2 * gelu(h) + th.b2 - target;
  const double gp = gelu_prime(h);
  return {th.w1 - eta * 2 * r * th.w2 * gp * z, th.b1 - eta * 2 * r * th.w2 * gp, th.w2 - eta * 2 * r * gelu(h),
          th.b2 - eta * 2 * r};
}

}  // namespace oracle
