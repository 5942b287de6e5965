#pragma once

// Deterministic limited-memory BFGS with backtracking (Armijo) line search.
// Every accepted step strictly decreases the objective.

#include <cmath>
#include <cstddef>
#include <deque>
#include <numeric>
#include <span>
#include <vector>

#include "sar/error.hpp"

namespace sar {

struct OptimizerConfig {
  double grad_tolerance = 1e-5;  // on the Euclidean gradient norm
  int max_iterations = 500;
  int history = 10;
};

enum class OptStatus { kConverged, kMaxIterations, kLineSearchStalled };

struct OptimizeReport {
  OptStatus status = OptStatus::kConverged;
  int iterations = 0;
  double objective = 0.0;
  double grad_norm = 0.0;
  std::vector<double> objective_trace;  // value at the start and after each accepted step

  bool converged() const { return status == OptStatus::kConverged; }
};

namespace detail {
inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}
inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }
}  // namespace detail

/// Minimizes `f` starting from `x` (updated in place). `f(x, grad)` must
/// return the objective and write the gradient into `grad`.
template <class Objective>
OptimizeReport minimize_lbfgs(Objective&& f, std::vector<double>& x, const OptimizerConfig& cfg) {
  using detail::dot;
  const std::size_t n = x.size();
  std::vector<double> g(n), g_new(n), x_new(n), d(n);
  OptimizeReport rep;

  double fx = f(std::span<const double>(x), std::span<double>(g));
  if (!std::isfinite(fx)) throw NumericalError("divergence; check feature scaling");
  rep.objective_trace.push_back(fx);

  struct Pair {
    std::vector<double> s, y;
    double rho;
  };
  std::deque<Pair> mem;
  std::vector<double> alpha(static_cast<std::size_t>(cfg.history));

  for (int iter = 0;; ++iter) {
    const double gnorm = detail::norm2(g);
    rep.iterations = iter;
    rep.objective = fx;
    rep.grad_norm = gnorm;
    if (gnorm <= cfg.grad_tolerance) {
      rep.status = OptStatus::kConverged;
      return rep;
    }
    if (iter >= cfg.max_iterations) {
      rep.status = OptStatus::kMaxIterations;
      return rep;
    }

    // Two-loop recursion: d = -H g.
    for (std::size_t i = 0; i < n; ++i) d[i] = -g[i];
    for (std::size_t k = mem.size(); k-- > 0;) {
      alpha[k] = mem[k].rho * dot(mem[k].s, d);
      for (std::size_t i = 0; i < n; ++i) d[i] -= alpha[k] * mem[k].y[i];
    }
    double step = 1.0;
    if (!mem.empty()) {
      const auto& last = mem.back();
      const double gamma = dot(last.s, last.y) / dot(last.y, last.y);
      for (double& di : d) di *= gamma;
    } else {
      step = 1.0 / std::max(1.0, gnorm);
    }
    for (std::size_t k = 0; k < mem.size(); ++k) {
      const double beta = mem[k].rho * dot(mem[k].y, d);
      for (std::size_t i = 0; i < n; ++i) d[i] += (alpha[k] - beta) * mem[k].s[i];
    }

    double slope = dot(g, d);
    if (!(slope < 0.0)) {
      mem.clear();
      for (std::size_t i = 0; i < n; ++i) d[i] = -g[i];
      slope = -gnorm * gnorm;
      step = 1.0 / std::max(1.0, gnorm);
    }

    constexpr double kArmijo = 1e-4;
    bool accepted = false;
    double f_new = fx;
    for (int ls = 0; ls < 60; ++ls) {
      for (std::size_t i = 0; i < n; ++i) x_new[i] = x[i] + step * d[i];
      f_new = f(std::span<const double>(x_new), std::span<double>(g_new));
      if (std::isfinite(f_new) && f_new <= fx + kArmijo * step * slope && f_new < fx) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (mem.empty()) {
        rep.status = OptStatus::kLineSearchStalled;
        return rep;
      }
      mem.clear();  // retry from steepest descent
      continue;
    }

    Pair p{std::vector<double>(n), std::vector<double>(n), 0.0};
    for (std::size_t i = 0; i < n; ++i) {
      p.s[i] = x_new[i] - x[i];
      p.y[i] = g_new[i] - g[i];
    }
    const double sy = dot(p.s, p.y);
    if (sy > 1e-12 * detail::norm2(p.s) * detail::norm2(p.y) && sy > 0.0) {
      p.rho = 1.0 / sy;
      mem.push_back(std::move(p));
      if (mem.size() > static_cast<std::size_t>(cfg.history)) mem.pop_front();
    }
    x.swap(x_new);
    g.swap(g_new);
    fx = f_new;
    rep.objective_trace.push_back(fx);
  }
}

}  // namespace sar
