#pragma once

// Shared generators and independent reference implementations for the tests.
// Nothing here calls into the agreement code it is used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include "sar/agreement.hpp"
#include "sar/crf.hpp"
#include "sar/maxent.hpp"
#include "sar/prob.hpp"

namespace sartest {
using namespace sar;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : e_(seed) {}
  double uniform(double lo = 0.0, double hi = 1.0) { return lo + (hi - lo) * u01(); }
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(e_() % n); }
  std::size_t between(std::size_t lo, std::size_t hi) { return lo + below(hi - lo + 1); }
  double normal() {
    const double u = std::max(u01(), 1e-300), v = u01();
    return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * M_PI * v);
  }
  std::mt19937_64& engine() { return e_; }

 private:
  double u01() { return static_cast<double>(e_() >> 11) * 0x1.0p-53; }
  std::mt19937_64 e_;
};

/// Probabilities bounded below by `floor` before normalization.
inline std::vector<double> random_probs(Rng& rng, std::size_t k, double floor = 1e-3) {
  std::vector<double> p(k);
  double s = 0.0;
  for (auto& x : p) s += (x = floor + rng.uniform() * rng.uniform() * 4.0);
  for (auto& x : p) x /= s;
  return p;
}

inline Categorical from_probs(const LabelSet& labels, const std::vector<double>& p) {
  std::vector<double> lp(p.size());
  double s = 0.0;
  for (double x : p) s += x;
  for (std::size_t i = 0; i < p.size(); ++i) lp[i] = std::log(p[i] / s);
  return Categorical(labels, std::move(lp));
}

inline Categorical random_categorical(Rng& rng, const LabelSet& labels, double floor = 1e-3) {
  return from_probs(labels, random_probs(rng, labels.size(), floor));
}

inline double direct_kl(const std::vector<double>& q, const std::vector<double>& p) {
  double kl = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i)
    if (q[i] > 0.0) kl += q[i] * std::log(q[i] / p[i]);
  return kl;
}

/// Euclidean projection onto {w : sum w = 1, w >= floor} (sort-based).
inline std::vector<double> project_simplex(const std::vector<double>& v, double floor = 0.0) {
  const double mass = 1.0 - floor * static_cast<double>(v.size());
  std::vector<double> u(v);
  for (auto& x : u) x -= floor;
  std::vector<double> sorted(u);
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double css = 0.0, theta = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    css += sorted[i];
    const double t = (css - mass) / static_cast<double>(i + 1);
    if (sorted[i] - t > 0.0) theta = t;
  }
  for (auto& x : u) x = floor + std::max(x - theta, 0.0);
  return u;
}

/// Minimizes a smooth convex f over the simplex (entries >= floor) by
/// projected gradient with Armijo backtracking. Stops when the projected
/// gradient step at unit length moves less than `tol` in L-inf.
inline std::vector<double> minimize_on_simplex(
    const std::function<double(const std::vector<double>&)>& f,
    const std::function<std::vector<double>(const std::vector<double>&)>& grad, std::vector<double> x,
    double floor = 1e-12, double tol = 1e-11, int max_iter = 200000) {
  double fx = f(x);
  double step = 1.0;
  for (int it = 0; it < max_iter; ++it) {
    const auto g = grad(x);
    std::vector<double> probe(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) probe[i] = x[i] - g[i];
    const auto unit = project_simplex(probe, floor);
    double stationarity = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) stationarity = std::max(stationarity, std::abs(unit[i] - x[i]));
    if (stationarity < tol) break;

    step = std::min(1.0, step * 4.0);
    bool accepted = false;
    for (int ls = 0; ls < 100 && !accepted; ++ls) {
      std::vector<double> y(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] - step * g[i];
      auto next = project_simplex(y, floor);
      double decrease = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) decrease += g[i] * (x[i] - next[i]);
      const double fn = f(next);
      if (std::isfinite(fn) && fn <= fx - 1e-4 * decrease) {
        x = std::move(next);
        fx = fn;
        accepted = true;
      } else {
        step *= 0.5;
      }
    }
    if (!accepted) break;
  }
  return x;
}

struct OracleProjection {
  std::vector<double> q1, q2;
  double kl = 0.0;
};

/// Numeric solution of min KL(q1||p1) + KL(q2||p2) subject to q2 being q1
/// pushed through `coarse_of` (identity when p1 and p2 share labels).
inline OracleProjection oracle_projection(const std::vector<double>& p1, const std::vector<double>& p2,
                                          const std::vector<std::size_t>& coarse_of) {
  const std::size_t K1 = p1.size(), K2 = p2.size();
  auto push = [&](const std::vector<double>& q1) {
    std::vector<double> q2(K2, 0.0);
    for (std::size_t y = 0; y < K1; ++y) q2[coarse_of[y]] += q1[y];
    return q2;
  };
  auto f = [&](const std::vector<double>& q1) {
    const auto q2 = push(q1);
    return direct_kl(q1, p1) + direct_kl(q2, p2);
  };
  auto grad = [&](const std::vector<double>& q1) {
    const auto q2 = push(q1);
    std::vector<double> g(K1);
    for (std::size_t y = 0; y < K1; ++y) {
      const double a = std::max(q1[y], 1e-300), b = std::max(q2[coarse_of[y]], 1e-300);
      g[y] = std::log(a / p1[y]) + 1.0 + std::log(b / p2[coarse_of[y]]) + 1.0;
    }
    return g;
  };
  std::vector<double> start(K1, 1.0 / static_cast<double>(K1));
  OracleProjection out;
  out.q1 = minimize_on_simplex(f, grad, start);
  out.q2 = push(out.q1);
  out.kl = f(out.q1);
  return out;
}

inline std::vector<double> probs_of(const Categorical& c) { return c.probs(); }

/// Independent enumeration of a chain: unnormalized log scores of every path,
/// position 0 most significant.
inline std::vector<double> enumerate_scores(const ChainPotentials& pot) {
  const std::size_t T = pot.length, K = pot.num_labels();
  std::size_t n = 1;
  for (std::size_t t = 0; t < T; ++t) n *= K;
  std::vector<double> out(n);
  std::vector<std::size_t> y(T);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t r = i;
    for (std::size_t t = T; t-- > 0;) {
      y[t] = r % K;
      r /= K;
    }
    double s = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      s += pot.at(t, y[t]);
      if (t > 0) s += pot.at(t - 1, y[t - 1], y[t]);
    }
    out[i] = s;
  }
  return out;
}

inline ChainPotentials random_potentials(Rng& rng, const LabelSet& labels, std::size_t T, double scale = 1.5) {
  ChainPotentials p(labels, T);
  for (auto& v : p.node) v = scale * rng.normal();
  for (auto& v : p.edge) v = scale * rng.normal();
  return p;
}

/// Random surjection from k1 fine labels onto k2 <= k1 coarse labels.
inline std::vector<std::size_t> random_surjection(Rng& rng, std::size_t k1, std::size_t k2) {
  std::vector<std::size_t> m(k1);
  for (std::size_t z = 0; z < k2; ++z) m[z] = z;
  for (std::size_t y = k2; y < k1; ++y) m[y] = rng.below(k2);
  std::shuffle(m.begin(), m.end(), rng.engine());
  return m;
}

inline LabelSet prefixed_labels(const std::string& prefix, std::size_t k) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < k; ++i) names.push_back(prefix + std::to_string(i));
  return LabelSet(std::move(names));
}

inline FeatureVector random_features(Rng& rng, std::size_t num_features, std::size_t active) {
  std::vector<std::pair<FeatureId, double>> e;
  std::vector<FeatureId> ids(num_features);
  std::iota(ids.begin(), ids.end(), FeatureId{0});
  std::shuffle(ids.begin(), ids.end(), rng.engine());
  for (std::size_t i = 0; i < std::min(active, num_features); ++i) e.emplace_back(ids[i], rng.uniform(0.2, 1.5));
  std::sort(e.begin(), e.end());
  return FeatureVector(std::move(e));
}

/// Central-difference check of every listed coordinate; returns the worst
/// relative error with denominator max(|analytic|, |numeric|, floor).
template <class F>
double worst_fd_error(F&& f, std::vector<double> x, const std::vector<double>& analytic,
                      const std::vector<std::size_t>& coords, double h = 1e-5, double floor = 1e-3) {
  double worst = 0.0;
  for (std::size_t i : coords) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double fp = f(x);
    x[i] = x0 - h;
    const double fm = f(x);
    x[i] = x0;
    const double numeric = (fp - fm) / (2.0 * h);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
    worst = std::max(worst, std::abs(numeric - analytic[i]) / denom);
  }
  return worst;
}

}  // namespace sartest
