#pragma once

// The agreement projection: the product distribution q1 x q2 closest in KL to
// p1 x p2 subject to the two views agreeing on (possibly coarsened) labels.
//
//  * identical label sets, flat:   q1 = q2 ∝ sqrt(p1 p2)
//  * identical label sets, chain:  q potentials are the mean of the two log potentials
//  * mapped label sets, flat:      coarse mass m(z) ∝ sqrt(P1(z) p2(z)), q1 rescales p1 within each block
//  * mapped label sets, chain:     dual gradient ascent on per-clique, per-coarse-label multipliers
//
// For the mapped chain case the constraints match coarse clique marginals:
//   E_q1[1{M(y1_t) = z}] = E_q2[1{y2_t = z}]                          every t, z
//   E_q1[1{M(y1_t) = a, M(y1_t+1) = b}] = E_q2[1{y2_t = a, y2_t+1 = b}] every t, a, b
// Both q1 and q2 stay chain structured, and with an identity mapping the
// solution is the closed form above.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sar/crf.hpp"
#include "sar/error.hpp"
#include "sar/prob.hpp"

namespace sar {

/// Surjection from a fine label set onto a coarse one.
class LabelMapping {
 public:
  LabelMapping() = default;

  LabelMapping(LabelSet fine, LabelSet coarse, std::vector<std::size_t> map)
      : fine_(std::move(fine)), coarse_(std::move(coarse)), map_(std::move(map)) {
    if (map_.size() != fine_.size()) throw std::invalid_argument("mapping must cover every fine label");
    std::vector<bool> hit(coarse_.size(), false);
    for (std::size_t c : map_) {
      if (c >= coarse_.size()) throw std::invalid_argument("mapping target out of range");
      hit[c] = true;
    }
    if (std::find(hit.begin(), hit.end(), false) != hit.end())
      throw std::invalid_argument("mapping is not surjective onto the coarse label set");
  }

  static LabelMapping identity(const LabelSet& labels) {
    std::vector<std::size_t> m(labels.size());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = i;
    return LabelMapping(labels, labels, std::move(m));
  }

  const LabelSet& fine() const { return fine_; }
  const LabelSet& coarse() const { return coarse_; }
  std::size_t operator()(std::size_t fine_index) const { return map_.at(fine_index); }
  const std::vector<std::size_t>& table() const { return map_; }

  bool is_identity() const {
    if (!(fine_ == coarse_)) return false;
    for (std::size_t i = 0; i < map_.size(); ++i)
      if (map_[i] != i) return false;
    return true;
  }

  /// A non-injective mapping loses information; collapsed labels cannot be restored.
  bool is_injective() const { return fine_.size() == coarse_.size(); }

  /// Log of the coarse marginal: P(z) = sum of p(y) over y mapping to z.
  std::vector<double> collapse_log(std::span<const double> fine_log_probs) const {
    std::vector<double> out(coarse_.size(), kNegInf);
    for (std::size_t y = 0; y < map_.size(); ++y) out[map_[y]] = log_add(out[map_[y]], fine_log_probs[y]);
    return out;
  }

  Categorical collapse(const Categorical& p) const {
    if (!(p.labels() == fine_)) throw std::invalid_argument("distribution is not over the fine label set");
    return Categorical(coarse_, collapse_log(p.log_probs()));
  }

 private:
  LabelSet fine_, coarse_;
  std::vector<std::size_t> map_;
};

struct AgreementOutcome {
  Categorical q1;                  // over the view-1 label set
  Categorical q2;                  // over the view-2 label set
  double kl_value = 0.0;           // KL(q1 x q2 || p1 x p2) = KL(q1||p1) + KL(q2||p2)
  double bhattacharyya_value = 0.0;
  std::optional<std::vector<double>> dual_vars;
  bool converged = true;
  int iterations = 0;
};

/// Closed-form projection for identical label sets: q1 = q2 ∝ sqrt(p1 p2).
inline AgreementOutcome agree_flat(const Categorical& p1, const Categorical& p2) {
  if (!(p1.labels() == p2.labels())) throw std::invalid_argument("agree_flat needs identical label sets");
  std::vector<double> half(p1.size());
  for (std::size_t y = 0; y < half.size(); ++y) half[y] = 0.5 * (p1.log_prob(y) + p2.log_prob(y));
  if (logsumexp(half) == kNegInf) throw NumericalError("agreement undefined: disjoint supports");
  Categorical q = log_normalize(p1.labels(), half);
  AgreementOutcome out;
  out.kl_value = kl_divergence(q, p1) + kl_divergence(q, p2);
  out.bhattacharyya_value = bhattacharyya(p1, p2);
  out.q1 = q;
  out.q2 = std::move(q);
  return out;
}

/// Closed-form projection when view 1 predicts fine labels and view 2 the
/// coarse labels of `m`. bhattacharyya_value is B(P1, p2) for the collapsed P1.
inline AgreementOutcome agree_flat_partial(const Categorical& p1, const Categorical& p2,
                                           const LabelMapping& m) {
  if (!(p1.labels() == m.fine()) || !(p2.labels() == m.coarse()))
    throw std::invalid_argument("distributions do not match the label mapping");
  const std::vector<double> collapsed = m.collapse_log(p1.log_probs());
  std::vector<double> half(collapsed.size());
  for (std::size_t z = 0; z < half.size(); ++z) half[z] = 0.5 * (collapsed[z] + p2.log_prob(z));
  const double log_overlap = logsumexp(half);
  if (log_overlap == kNegInf) throw NumericalError("agreement undefined: no coarse label with joint support");

  std::vector<double> coarse(half.size());
  for (std::size_t z = 0; z < half.size(); ++z) coarse[z] = half[z] - log_overlap;
  std::vector<double> fine(p1.size());
  for (std::size_t y = 0; y < fine.size(); ++y) {
    const std::size_t z = m(y);
    fine[y] = coarse[z] == kNegInf ? kNegInf : coarse[z] + p1.log_prob(y) - collapsed[z];
  }
  AgreementOutcome out;
  out.q1 = Categorical(m.fine(), std::move(fine));
  out.q2 = Categorical(m.coarse(), std::move(coarse));
  out.kl_value = kl_divergence(out.q1, p1) + kl_divergence(out.q2, p2);
  out.bhattacharyya_value = -log_overlap;
  return out;
}

struct ChainAgreementOutcome {
  ChainPotentials q1_potentials, q2_potentials;
  ChainMarginals q1_marginals, q2_marginals;
  double kl_value = 0.0;
  double bhattacharyya_value = 0.0;
  std::optional<std::vector<double>> dual_vars;  // node block T*K2, then edge block (T-1)*K2*K2
  bool converged = true;
  int iterations = 0;
  double residual = 0.0;            // max |collapsed q1 clique marginal - q2 clique marginal|
  std::vector<double> dual_trace;   // dual objective after each accepted step
};

/// KL(q || p) between two chains over the same labels, given q's marginals
/// and p's log partition.
inline double chain_kl(const ChainPotentials& q, const ChainMarginals& q_marg, const ChainPotentials& p,
                       double p_log_partition) {
  double kl = q_marg.log_partition == kNegInf ? kInf : p_log_partition - q_marg.log_partition;
  auto accumulate = [&](std::span<const double> qm, std::span<const double> qp, std::span<const double> pp) {
    for (std::size_t i = 0; i < qm.size(); ++i) {
      if (qm[i] <= 0.0) continue;
      if (pp[i] == kNegInf) return false;
      kl += qm[i] * (qp[i] - pp[i]);
    }
    return true;
  };
  if (!accumulate(q_marg.node, q.node, p.node) || !accumulate(q_marg.edge, q.edge, p.edge)) return kInf;
  return kl < 0.0 ? 0.0 : kl;
}

namespace agreement_detail {
inline void require_same_shape(const ChainPotentials& a, const ChainPotentials& b) {
  if (a.length != b.length) throw std::invalid_argument("chains have different lengths");
}
}  // namespace agreement_detail

/// Closed-form projection for chains over identical label sets. The q chain's
/// log potentials are the elementwise mean of the two inputs; both views share it.
inline ChainAgreementOutcome agree_chain(const ChainPotentials& pot1, const ChainPotentials& pot2) {
  agreement_detail::require_same_shape(pot1, pot2);
  if (!(pot1.labels == pot2.labels)) throw std::invalid_argument("agree_chain needs identical label sets");
  ChainPotentials q(pot1.labels, pot1.length);
  for (std::size_t i = 0; i < q.node.size(); ++i) q.node[i] = 0.5 * (pot1.node[i] + pot2.node[i]);
  for (std::size_t i = 0; i < q.edge.size(); ++i) q.edge[i] = 0.5 * (pot1.edge[i] + pot2.edge[i]);

  const ChainMarginals m1 = forward_backward(pot1);
  const ChainMarginals m2 = forward_backward(pot2);
  ChainMarginals mq;
  try {
    mq = forward_backward(q);
  } catch (const NumericalError&) {
    throw NumericalError("agreement undefined: disjoint supports");
  }
  ChainAgreementOutcome out;
  out.bhattacharyya_value =
      std::max(0.0, 0.5 * m1.log_partition + 0.5 * m2.log_partition - mq.log_partition);
  out.kl_value = chain_kl(q, mq, pot1, m1.log_partition) + chain_kl(q, mq, pot2, m2.log_partition);
  out.q1_potentials = q;
  out.q2_potentials = std::move(q);
  out.q1_marginals = mq;
  out.q2_marginals = std::move(mq);
  return out;
}

enum class StepRule {
  kBacktracking,       // previous accepted step doubled, halved until sufficient ascent
  kBarzilaiBorwein,    // BB step as the initial trial, then the same backtracking
  kQuasiNewton,        // limited-memory BFGS scaled by the clique marginals, same backtracking
};

struct DualSolverConfig {
  int max_iterations = 200;
  double tolerance = 1e-6;  // L-infinity bound on the constraint residual
  StepRule step_rule = StepRule::kQuasiNewton;
  double initial_step = 1.0;
  int history = 10;         // kQuasiNewton memory
};

namespace agreement_detail {

struct Adjusted {
  ChainPotentials q1, q2;
};

inline std::size_t dual_size(std::size_t T, std::size_t K2) { return T * K2 + (T - 1) * K2 * K2; }

inline Adjusted adjust(std::span<const double> lambda, const ChainPotentials& pot1,
                       const ChainPotentials& pot2, const LabelMapping& m) {
  const std::size_t T = pot1.length, K1 = pot1.num_labels(), K2 = pot2.num_labels();
  if (lambda.size() != dual_size(T, K2)) throw std::invalid_argument("dual vector has wrong size");
  const auto edge_lambda = lambda.subspan(T * K2);
  Adjusted a{pot1, pot2};
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t y = 0; y < K1; ++y) a.q1.at(t, y) += lambda[t * K2 + m(y)];
    for (std::size_t z = 0; z < K2; ++z) a.q2.at(t, z) -= lambda[t * K2 + z];
  }
  for (std::size_t t = 0; t + 1 < T; ++t) {
    for (std::size_t u = 0; u < K1; ++u)
      for (std::size_t v = 0; v < K1; ++v) a.q1.at(t, u, v) += edge_lambda[(t * K2 + m(u)) * K2 + m(v)];
    for (std::size_t u = 0; u < K2; ++u)
      for (std::size_t v = 0; v < K2; ++v) a.q2.at(t, u, v) -= edge_lambda[(t * K2 + u) * K2 + v];
  }
  return a;
}

inline void require_mapped(const ChainPotentials& pot1, const ChainPotentials& pot2, const LabelMapping& m) {
  require_same_shape(pot1, pot2);
  if (!(pot1.labels == m.fine()) || !(pot2.labels == m.coarse()))
    throw std::invalid_argument("chains do not match the label mapping");
}

}  // namespace agreement_detail

/// Dual of the mapped chain projection:
///   D(lambda) = -(log Z1(lambda) + log Z2(-lambda) - log Z1 - log Z2),
/// so D(0) = 0. Concave; its maximum equals the minimal KL.
inline double dual_objective(std::span<const double> lambda, const ChainPotentials& pot1,
                             const ChainPotentials& pot2, const LabelMapping& m) {
  agreement_detail::require_mapped(pot1, pot2, m);
  const auto adj = agreement_detail::adjust(lambda, pot1, pot2, m);
  return -(forward_backward(adj.q1).log_partition + forward_backward(adj.q2).log_partition -
           forward_backward(pot1).log_partition - forward_backward(pot2).log_partition);
}

/// Projection for chains whose label sets are related by `m` (view 1 fine,
/// view 2 coarse). Solved by ascent on the dual with backtracking;
/// `warm_start` may supply initial multipliers.
inline ChainAgreementOutcome agree_chain_partial(const ChainPotentials& pot1, const ChainPotentials& pot2,
                                                 const LabelMapping& m, const DualSolverConfig& cfg = {},
                                                 std::span<const double> warm_start = {}) {
  using agreement_detail::adjust;
  agreement_detail::require_mapped(pot1, pot2, m);
  const std::size_t T = pot1.length, K1 = pot1.num_labels(), K2 = pot2.num_labels();
  const std::size_t n = agreement_detail::dual_size(T, K2);

  const double log_z1 = forward_backward(pot1).log_partition;
  const double log_z2 = forward_backward(pot2).log_partition;

  struct Point {
    std::vector<double> lambda;
    ChainPotentials q1, q2;
    ChainMarginals m1, m2;
    double dual = 0.0;
    std::vector<double> residual;  // collapsed q1 marginal - q2 marginal
    std::vector<double> mass;      // collapsed q1 marginal + q2 marginal
    double max_residual = 0.0;
  };
  auto evaluate = [&](std::vector<double> lambda) -> std::optional<Point> {
    auto adj = adjust(lambda, pot1, pot2, m);
    Point p{std::move(lambda), std::move(adj.q1), std::move(adj.q2), {}, {}, 0.0, {}, {}, 0.0};
    try {
      p.m1 = forward_backward(p.q1);
      p.m2 = forward_backward(p.q2);
    } catch (const NumericalError&) {
      return std::nullopt;
    }
    p.dual = -(p.m1.log_partition + p.m2.log_partition - log_z1 - log_z2);
    if (!std::isfinite(p.dual)) return std::nullopt;
    std::vector<double> a(n, 0.0), b(n, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t y = 0; y < K1; ++y) a[t * K2 + m(y)] += p.m1.at(t, y);
      for (std::size_t z = 0; z < K2; ++z) b[t * K2 + z] = p.m2.at(t, z);
    }
    const std::size_t e0 = T * K2;
    for (std::size_t t = 0; t + 1 < T; ++t) {
      for (std::size_t u = 0; u < K1; ++u)
        for (std::size_t v = 0; v < K1; ++v) a[e0 + (t * K2 + m(u)) * K2 + m(v)] += p.m1.at(t, u, v);
      for (std::size_t u = 0; u < K2; ++u)
        for (std::size_t v = 0; v < K2; ++v) b[e0 + (t * K2 + u) * K2 + v] = p.m2.at(t, u, v);
    }
    p.residual.resize(n);
    p.mass.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      p.residual[i] = a[i] - b[i];
      p.mass[i] = a[i] + b[i];
      p.max_residual = std::max(p.max_residual, std::abs(p.residual[i]));
    }
    return p;
  };

  std::vector<double> lambda0(n, 0.0);
  if (!warm_start.empty()) {
    if (warm_start.size() != n) throw std::invalid_argument("warm start has wrong size");
    lambda0.assign(warm_start.begin(), warm_start.end());
  }
  std::optional<Point> cur = evaluate(lambda0);
  if (!cur && !warm_start.empty()) cur = evaluate(std::vector<double>(n, 0.0));
  if (!cur) throw NumericalError("dual divergence");

  ChainAgreementOutcome out;
  out.dual_trace.push_back(cur->dual);
  double step = cfg.initial_step;
  std::vector<double> prev_lambda, prev_grad;
  struct Pair {
    std::vector<double> s, y;
    double rho;
  };
  std::deque<Pair> memory;
  auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d += a[i] * b[i];
    return d;
  };
  int iter = 0;
  for (; iter < cfg.max_iterations && cur->max_residual > cfg.tolerance; ++iter) {
    // Ascent direction: dD/dlambda = -(collapsed q1 - q2).
    std::vector<double> grad(n);
    for (std::size_t i = 0; i < n; ++i) grad[i] = -cur->residual[i];
    std::vector<double> dir = grad;
    if (cfg.step_rule == StepRule::kBarzilaiBorwein && !prev_grad.empty()) {
      double ss = 0.0, sy = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double s = cur->lambda[i] - prev_lambda[i], y = grad[i] - prev_grad[i];
        ss += s * s;
        sy += s * y;
      }
      if (sy < 0.0) step = ss / -sy;
    } else if (cfg.step_rule == StepRule::kQuasiNewton) {
      // Two-loop recursion on the convex function -D.
      std::vector<double> alpha(memory.size());
      for (std::size_t k = memory.size(); k-- > 0;) {
        alpha[k] = memory[k].rho * dot(memory[k].s, dir);
        for (std::size_t i = 0; i < n; ++i) dir[i] -= alpha[k] * memory[k].y[i];
      }
      // Initial inverse Hessian: diagonal of the clique marginals.
      for (std::size_t i = 0; i < n; ++i) dir[i] /= std::max(cur->mass[i], 1e-12);
      for (std::size_t k = 0; k < memory.size(); ++k) {
        const double beta = memory[k].rho * dot(memory[k].y, dir);
        for (std::size_t i = 0; i < n; ++i) dir[i] += (alpha[k] - beta) * memory[k].s[i];
      }
      if (dot(dir, grad) <= 0.0) {
        memory.clear();
        dir = grad;
      }
      step = memory.empty() ? cfg.initial_step : 1.0;
    }
    const double slope = dot(dir, grad);
    std::optional<Point> next;
    for (int ls = 0; ls < 60; ++ls) {
      std::vector<double> trial(n);
      for (std::size_t i = 0; i < n; ++i) trial[i] = cur->lambda[i] + step * dir[i];
      next = evaluate(std::move(trial));
      // Near the optimum the ascent is of the order of rounding noise in the
      // log partitions, so a non-decreasing dual with a smaller residual is
      // also accepted.
      if (next && (next->dual >= cur->dual + 1e-4 * step * slope ||
                   (next->dual >= cur->dual && next->max_residual < cur->max_residual)))
        break;
      next.reset();
      step *= 0.5;
    }
    if (!next) {
      if (cfg.step_rule == StepRule::kQuasiNewton && !memory.empty()) {
        memory.clear();
        continue;
      }
      break;
    }
    if (cfg.step_rule == StepRule::kQuasiNewton) {
      // Pairs for -D: s = step taken, y = change in -grad.
      Pair pr{std::vector<double>(n), std::vector<double>(n), 0.0};
      for (std::size_t i = 0; i < n; ++i) {
        pr.s[i] = next->lambda[i] - cur->lambda[i];
        pr.y[i] = next->residual[i] - cur->residual[i];
      }
      const double sy = dot(pr.s, pr.y);
      if (sy > 1e-12 * std::sqrt(dot(pr.s, pr.s) * dot(pr.y, pr.y)) && sy > 0.0) {
        pr.rho = 1.0 / sy;
        memory.push_back(std::move(pr));
        if (memory.size() > static_cast<std::size_t>(std::max(cfg.history, 1))) memory.pop_front();
      }
    }
    prev_lambda = cur->lambda;
    prev_grad = std::move(grad);
    cur = std::move(next);
    out.dual_trace.push_back(cur->dual);
    if (cfg.step_rule == StepRule::kBacktracking) step *= 2.0;
  }

  if (!std::isfinite(cur->dual)) throw NumericalError("dual divergence");
  out.iterations = iter;
  out.residual = cur->max_residual;
  out.converged = cur->max_residual <= cfg.tolerance;
  out.kl_value = chain_kl(cur->q1, cur->m1, pot1, log_z1) + chain_kl(cur->q2, cur->m2, pot2, log_z2);
  out.bhattacharyya_value = 0.5 * out.kl_value;
  out.dual_vars = std::move(cur->lambda);
  out.q1_potentials = std::move(cur->q1);
  out.q2_potentials = std::move(cur->q2);
  out.q1_marginals = std::move(cur->m1);
  out.q2_marginals = std::move(cur->m2);
  return out;
}

}  // namespace sar
