#pragma once

// Linear-chain CRF: log-linear clique potentials, exact log-domain
// forward-backward, Viterbi decoding and soft-target training.
//
// Emission weights use the same K x F layout and implicit bias feature (id
// F-1) as the maxent model. Transition weights are a K x K table tied across
// positions. There are no start/stop states.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "sar/error.hpp"
#include "sar/features.hpp"
#include "sar/maxent.hpp"
#include "sar/optimize.hpp"
#include "sar/prob.hpp"

namespace sar {

/// One sequence as seen by one view: a feature vector per position, plus
/// gold label indices when labeled.
struct ChainExample {
  std::vector<FeatureVector> positions;
  std::optional<std::vector<std::size_t>> gold;

  std::size_t length() const { return positions.size(); }
};

struct CrfParams {
  LabelSet labels;
  std::size_t num_features = 1;     // F, including the bias
  std::vector<double> emission;     // K * F
  std::vector<double> transition;   // K * K, [from * K + to]
  double prior_variance = 10.0;

  static CrfParams zeros(LabelSet labels, std::size_t input_features, double prior_variance) {
    CrfParams p;
    const std::size_t K = labels.size();
    p.num_features = input_features + 1;
    p.emission.assign(K * p.num_features, 0.0);
    p.transition.assign(K * K, 0.0);
    p.labels = std::move(labels);
    p.prior_variance = prior_variance;
    return p;
  }

  std::size_t num_labels() const { return labels.size(); }
  std::size_t num_params() const { return emission.size() + transition.size(); }
};

/// Per-position node scores and per-edge transition scores, all in log space.
struct ChainPotentials {
  LabelSet labels;
  std::size_t length = 0;
  std::vector<double> node;  // T * K
  std::vector<double> edge;  // (T-1) * K * K, [t][from][to]

  ChainPotentials() = default;
  ChainPotentials(LabelSet l, std::size_t T)
      : labels(std::move(l)), length(T), node(T * labels.size(), 0.0),
        edge(T > 0 ? (T - 1) * labels.size() * labels.size() : 0, 0.0) {}

  std::size_t num_labels() const { return labels.size(); }
  double& at(std::size_t t, std::size_t y) { return node[t * num_labels() + y]; }
  double at(std::size_t t, std::size_t y) const { return node[t * num_labels() + y]; }
  double& at(std::size_t t, std::size_t from, std::size_t to) {
    const std::size_t K = num_labels();
    return edge[(t * K + from) * K + to];
  }
  double at(std::size_t t, std::size_t from, std::size_t to) const {
    const std::size_t K = num_labels();
    return edge[(t * K + from) * K + to];
  }
};

struct ChainMarginals {
  std::size_t length = 0;
  std::size_t num_labels = 0;
  std::vector<double> node;  // T * K, probabilities
  std::vector<double> edge;  // (T-1) * K * K, probabilities
  double log_partition = 0.0;

  double at(std::size_t t, std::size_t y) const { return node[t * num_labels + y]; }
  double at(std::size_t t, std::size_t from, std::size_t to) const {
    return edge[(t * num_labels + from) * num_labels + to];
  }

  static ChainMarginals from_labels(std::span<const std::size_t> labels, std::size_t K) {
    ChainMarginals m;
    m.length = labels.size();
    m.num_labels = K;
    m.node.assign(m.length * K, 0.0);
    m.edge.assign(m.length > 0 ? (m.length - 1) * K * K : 0, 0.0);
    for (std::size_t t = 0; t < labels.size(); ++t) {
      if (labels[t] >= K) throw std::invalid_argument("label index out of range");
      m.node[t * K + labels[t]] = 1.0;
      if (t + 1 < labels.size()) m.edge[(t * K + labels[t]) * K + labels[t + 1]] = 1.0;
    }
    return m;
  }
};

namespace crf_detail {

inline void validate(const ChainPotentials& pot) {
  if (pot.length == 0) throw std::invalid_argument("empty chain");
  const std::size_t K = pot.num_labels();
  if (pot.node.size() != pot.length * K || pot.edge.size() != (pot.length - 1) * K * K)
    throw std::invalid_argument("potential tables have inconsistent dimensions");
  for (double v : pot.node)
    if (std::isnan(v) || v == kInf) throw std::invalid_argument("potential is NaN or +inf");
  for (double v : pot.edge)
    if (std::isnan(v) || v == kInf) throw std::invalid_argument("potential is NaN or +inf");
}

inline double emission_score(std::span<const double> emission, std::size_t F, std::size_t y,
                             const FeatureVector& x) {
  const std::size_t bias = F - 1;
  double s = emission[y * F + bias];
  for (const auto& [f, v] : x) {
    if (f >= bias) throw DataError("unknown feature " + std::to_string(f));
    s += emission[y * F + f] * v;
  }
  return s;
}

inline ChainPotentials build(std::span<const double> emission, std::span<const double> transition,
                             const LabelSet& labels, std::size_t F, const ChainExample& x) {
  const std::size_t K = labels.size(), T = x.length();
  ChainPotentials pot(labels, T);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t y = 0; y < K; ++y) pot.at(t, y) = emission_score(emission, F, y, x.positions[t]);
  for (std::size_t t = 0; t + 1 < T; ++t)
    for (std::size_t a = 0; a < K; ++a)
      for (std::size_t b = 0; b < K; ++b) pot.at(t, a, b) = transition[a * K + b];
  return pot;
}

}  // namespace crf_detail

/// node(t,y) = emission[y] . feat(t) + bias; edge(t,y,y') = transition[y][y'].
inline ChainPotentials build_potentials(const CrfParams& params, const ChainExample& x) {
  auto pot = crf_detail::build(params.emission, params.transition, params.labels, params.num_features, x);
  for (double v : pot.node)
    if (!std::isfinite(v)) throw NumericalError("score overflow");
  return pot;
}

/// Exact node/edge marginals and log partition, computed in log space.
/// Throws NumericalError("impossible chain") when no path has finite score.
inline ChainMarginals forward_backward(const ChainPotentials& pot) {
  crf_detail::validate(pot);
  const std::size_t T = pot.length, K = pot.num_labels();
  std::vector<double> alpha(T * K), beta(T * K, 0.0), buf(K);

  for (std::size_t y = 0; y < K; ++y) alpha[y] = pot.at(0, y);
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t y = 0; y < K; ++y) {
      for (std::size_t a = 0; a < K; ++a) buf[a] = alpha[(t - 1) * K + a] + pot.at(t - 1, a, y);
      alpha[t * K + y] = pot.at(t, y) + logsumexp(buf);
    }
  }
  for (std::size_t t = T - 1; t-- > 0;) {
    for (std::size_t y = 0; y < K; ++y) {
      for (std::size_t b = 0; b < K; ++b)
        buf[b] = pot.at(t, y, b) + pot.at(t + 1, b) + beta[(t + 1) * K + b];
      beta[t * K + y] = logsumexp(buf);
    }
  }

  ChainMarginals m;
  m.length = T;
  m.num_labels = K;
  m.log_partition = logsumexp(std::span<const double>(alpha).subspan((T - 1) * K, K));
  if (m.log_partition == kNegInf) throw NumericalError("impossible chain");

  m.node.resize(T * K);
  for (std::size_t i = 0; i < T * K; ++i) {
    const double s = alpha[i] + beta[i];
    m.node[i] = s == kNegInf ? 0.0 : std::exp(s - m.log_partition);
  }
  m.edge.resize((T - 1) * K * K);
  for (std::size_t t = 0; t + 1 < T; ++t)
    for (std::size_t a = 0; a < K; ++a)
      for (std::size_t b = 0; b < K; ++b) {
        const double s = alpha[t * K + a] + pot.at(t, a, b) + pot.at(t + 1, b) + beta[(t + 1) * K + b];
        m.edge[(t * K + a) * K + b] = s == kNegInf ? 0.0 : std::exp(s - m.log_partition);
      }
  return m;
}

/// Total log score of one labeling.
inline double sequence_score(const ChainPotentials& pot, std::span<const std::size_t> labels) {
  if (labels.size() != pot.length) throw std::invalid_argument("label sequence length mismatch");
  double s = 0.0;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    s += pot.at(t, labels[t]);
    if (t + 1 < labels.size()) s += pot.at(t, labels[t], labels[t + 1]);
  }
  return s;
}

/// Highest-scoring labeling. Among equally scoring paths the lexicographically
/// smallest one (lowest label index first) is returned.
inline std::vector<std::size_t> viterbi(const ChainPotentials& pot) {
  crf_detail::validate(pot);
  const std::size_t T = pot.length, K = pot.num_labels();
  // best[t][y]: max score of the suffix t..T-1 that starts with label y.
  std::vector<double> best(T * K);
  for (std::size_t y = 0; y < K; ++y) best[(T - 1) * K + y] = pot.at(T - 1, y);
  auto continuation = [&](std::size_t t, std::size_t y, std::size_t next) {
    return pot.at(t, y, next) + best[(t + 1) * K + next];
  };
  for (std::size_t t = T - 1; t-- > 0;) {
    for (std::size_t y = 0; y < K; ++y) {
      double m = kNegInf;
      for (std::size_t b = 0; b < K; ++b) m = std::max(m, continuation(t, y, b));
      best[t * K + y] = pot.at(t, y) + m;
    }
  }
  std::vector<std::size_t> path(T);
  auto first_argmax = [K](auto&& score) {
    std::size_t arg = 0;
    double m = score(0);
    for (std::size_t y = 1; y < K; ++y) {
      const double s = score(y);
      if (s > m) {
        m = s;
        arg = y;
      }
    }
    return std::pair{arg, m};
  };
  auto [y0, top] = first_argmax([&](std::size_t y) { return best[y]; });
  if (top == kNegInf) throw NumericalError("impossible chain");
  path[0] = y0;
  for (std::size_t t = 0; t + 1 < T; ++t)
    path[t + 1] = first_argmax([&](std::size_t b) { return continuation(t, path[t], b); }).first;
  return path;
}

/// A training item: an example, its target (gold labels or soft marginals)
/// and a weight.
struct CrfItem {
  ChainExample example;
  std::variant<std::vector<std::size_t>, ChainMarginals> target;
  double weight = 1.0;
};

namespace crf_detail {

inline double objective_gradient(std::span<const double> theta, const CrfParams& shape,
                                 std::span<const CrfItem> items, std::span<double> grad) {
  const std::size_t K = shape.num_labels(), F = shape.num_features;
  const std::size_t n_emit = K * F;
  auto emission = theta.subspan(0, n_emit);
  auto transition = theta.subspan(n_emit, K * K);
  const bool want_grad = !grad.empty();
  if (want_grad) std::fill(grad.begin(), grad.end(), 0.0);

  double total = 0.0;
  for (const auto& item : items) {
    if (item.weight == 0.0) continue;
    const ChainExample& x = item.example;
    const std::size_t T = x.length();
    ChainMarginals gold_target;
    const ChainMarginals* target = std::get_if<ChainMarginals>(&item.target);
    if (!target) {
      gold_target = ChainMarginals::from_labels(std::get<std::vector<std::size_t>>(item.target), K);
      target = &gold_target;
    }
    if (target->length != T || target->num_labels != K)
      throw std::invalid_argument("target dimensions do not match example");

    const ChainPotentials pot = build(emission, transition, shape.labels, F, x);
    for (const auto* table : {&pot.node, &pot.edge})
      for (double v : *table)
        if (!std::isfinite(v)) return kInf;
    const ChainMarginals model = forward_backward(pot);
    double expected_score = 0.0;
    for (std::size_t i = 0; i < pot.node.size(); ++i)
      if (target->node[i] > 0.0) expected_score += target->node[i] * pot.node[i];
    for (std::size_t i = 0; i < pot.edge.size(); ++i)
      if (target->edge[i] > 0.0) expected_score += target->edge[i] * pot.edge[i];
    total += item.weight * (model.log_partition - expected_score);

    if (want_grad) {
      const std::size_t bias = F - 1;
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t y = 0; y < K; ++y) {
          const double d = item.weight * (model.at(t, y) - target->at(t, y));
          if (d == 0.0) continue;
          grad[y * F + bias] += d;
          for (const auto& [f, v] : x.positions[t]) grad[y * F + f] += d * v;
        }
      }
      for (std::size_t i = 0; i < model.edge.size(); ++i) {
        const std::size_t ab = i % (K * K);
        grad[n_emit + ab] += item.weight * (model.edge[i] - target->edge[i]);
      }
    }
  }
  const double prior = prior_coefficient(shape.prior_variance);
  if (prior > 0.0) {
    double sq = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      sq += theta[i] * theta[i];
      if (want_grad) grad[i] += 2.0 * prior * theta[i];
    }
    total += prior * sq;
  }
  return total;
}

inline std::vector<double> pack(const CrfParams& p) {
  std::vector<double> theta(p.emission);
  theta.insert(theta.end(), p.transition.begin(), p.transition.end());
  return theta;
}

inline void unpack(std::span<const double> theta, CrfParams& p) {
  std::copy_n(theta.begin(), p.emission.size(), p.emission.begin());
  std::copy_n(theta.begin() + static_cast<std::ptrdiff_t>(p.emission.size()), p.transition.size(),
              p.transition.begin());
}

}  // namespace crf_detail

struct CrfObjectiveGradient {
  double value = 0.0;
  std::vector<double> emission;    // K * F
  std::vector<double> transition;  // K * K
};

/// sum_i w_i (log Z_i - E_target[score_i]) + (1/sigma^2)||theta||^2 and its
/// gradient (model expected counts - target counts + prior term).
inline CrfObjectiveGradient crf_objective_gradient(const CrfParams& params,
                                                   std::span<const CrfItem> items) {
  const std::vector<double> theta = crf_detail::pack(params);
  std::vector<double> g(theta.size());
  CrfObjectiveGradient out;
  out.value = crf_detail::objective_gradient(theta, params, items, g);
  out.emission.assign(g.begin(), g.begin() + static_cast<std::ptrdiff_t>(params.emission.size()));
  out.transition.assign(g.begin() + static_cast<std::ptrdiff_t>(params.emission.size()), g.end());
  return out;
}

inline double crf_objective(const CrfParams& params, std::span<const CrfItem> items) {
  return crf_detail::objective_gradient(crf_detail::pack(params), params, items, {});
}

inline TrainOutcome<CrfParams> train_crf(std::span<const CrfItem> items, CrfParams init,
                                         const OptimizerConfig& cfg = {}) {
  std::vector<double> theta = crf_detail::pack(init);
  auto fn = [&](std::span<const double> x, std::span<double> g) {
    return crf_detail::objective_gradient(x, init, items, g);
  };
  OptimizeReport rep = minimize_lbfgs(fn, theta, cfg);
  crf_detail::unpack(theta, init);
  return {std::move(init), std::move(rep)};
}

inline std::vector<std::size_t> predict_sequence(const CrfParams& params, const ChainExample& x) {
  return viterbi(build_potentials(params, x));
}

/// Index of a labeling in the enumeration order used by brute_force_dist:
/// base-K digits with position 0 most significant.
inline std::size_t sequence_index(std::span<const std::size_t> labels, std::size_t K) {
  std::size_t idx = 0;
  for (std::size_t y : labels) idx = idx * K + y;
  return idx;
}

inline std::vector<std::size_t> sequence_from_index(std::size_t idx, std::size_t T, std::size_t K) {
  std::vector<std::size_t> labels(T);
  for (std::size_t t = T; t-- > 0;) {
    labels[t] = idx % K;
    idx /= K;
  }
  return labels;
}

inline constexpr std::size_t kBruteForceBudget = 4096;

/// Exact distribution over all K^T labelings (test oracle). Labels of the
/// result are the label names joined by '|'.
inline Categorical brute_force_dist(const ChainPotentials& pot) {
  crf_detail::validate(pot);
  const std::size_t T = pot.length, K = pot.num_labels();
  std::size_t n = 1;
  for (std::size_t t = 0; t < T; ++t) {
    n *= K;
    if (n > kBruteForceBudget) throw std::invalid_argument("enumeration budget exceeded");
  }
  std::vector<double> scores(n);
  std::vector<std::string> names(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto seq = sequence_from_index(i, T, K);
    scores[i] = sequence_score(pot, seq);
    for (std::size_t t = 0; t < T; ++t) {
      if (t) names[i] += '|';
      names[i] += pot.labels.name(seq[t]);
    }
  }
  return log_normalize(LabelSet(std::move(names)), scores);
}

}  // namespace sar
