#pragma once

// Multiclass maximum-entropy (logistic regression) classifier with a Gaussian
// prior, trained on weighted soft targets.
//
// Parameter layout: weights are a dense K x F row-major matrix. The last
// feature id (F-1) is a bias that is implicitly 1.0 for every input, so
// inputs may only use ids 0..F-2. The prior penalty is (1/sigma^2)||theta||^2
// and covers the bias row too; sigma^2 = inf disables it.

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sar/error.hpp"
#include "sar/features.hpp"
#include "sar/optimize.hpp"
#include "sar/prob.hpp"

namespace sar {

struct MaxentParams {
  LabelSet labels;
  std::size_t num_features = 1;  // F, including the bias
  std::vector<double> weights;   // K * F, row = label
  double prior_variance = 1.0;

  static MaxentParams zeros(LabelSet labels, std::size_t input_features, double prior_variance) {
    MaxentParams p;
    p.num_features = input_features + 1;
    p.weights.assign(labels.size() * p.num_features, 0.0);
    p.labels = std::move(labels);
    p.prior_variance = prior_variance;
    return p;
  }

  std::size_t num_labels() const { return labels.size(); }
  FeatureId bias_id() const { return static_cast<FeatureId>(num_features - 1); }
  double& weight(std::size_t label, std::size_t feature) { return weights[label * num_features + feature]; }
  double weight(std::size_t label, std::size_t feature) const {
    return weights[label * num_features + feature];
  }
};

/// One training item: features, a target distribution and a nonnegative weight.
/// Hard labels are one-hot targets.
struct SoftExample {
  FeatureVector features;
  Categorical target;
  double weight = 1.0;
};

inline Categorical one_hot(const LabelSet& labels, std::size_t index) {
  std::vector<double> lp(labels.size(), kNegInf);
  lp.at(index) = 0.0;
  return Categorical(labels, std::move(lp));
}

/// Inverse of the Gaussian prior coefficient: 1/sigma^2 (0 when sigma^2 = inf).
inline double prior_coefficient(double prior_variance) {
  if (!(prior_variance > 0.0)) throw std::invalid_argument("prior variance must be positive");
  return std::isinf(prior_variance) ? 0.0 : 1.0 / prior_variance;
}

namespace maxent_detail {

inline void label_scores(std::span<const double> w, std::size_t K, std::size_t F,
                         const FeatureVector& x, std::span<double> out) {
  const std::size_t bias = F - 1;
  for (std::size_t y = 0; y < K; ++y) out[y] = w[y * F + bias];
  for (const auto& [f, v] : x) {
    if (f >= bias) throw DataError("unknown feature " + std::to_string(f));
    for (std::size_t y = 0; y < K; ++y) out[y] += w[y * F + f] * v;
  }
}

// Objective with optional gradient, over a raw weight vector.
inline double objective_gradient(std::span<const double> w, const MaxentParams& shape,
                                 std::span<const SoftExample> data, std::span<double> grad) {
  const std::size_t K = shape.num_labels(), F = shape.num_features;
  const double prior = prior_coefficient(shape.prior_variance);
  const bool want_grad = !grad.empty();
  if (want_grad) std::fill(grad.begin(), grad.end(), 0.0);

  std::vector<double> scores(K), delta(K);
  double total = 0.0;
  for (const auto& ex : data) {
    if (ex.target.size() != K) throw std::invalid_argument("target over wrong label set");
    if (ex.weight == 0.0) continue;
    label_scores(w, K, F, ex.features, scores);
    const double log_z = logsumexp(scores);
    double loss = 0.0;
    for (std::size_t y = 0; y < K; ++y) {
      const double lq = ex.target.log_prob(y);
      const double q = lq == kNegInf ? 0.0 : std::exp(lq);
      if (q > 0.0) loss += q * (log_z - scores[y]);
      delta[y] = std::exp(scores[y] - log_z) - q;
    }
    total += ex.weight * loss;
    if (want_grad) {
      const std::size_t bias = F - 1;
      for (std::size_t y = 0; y < K; ++y) grad[y * F + bias] += ex.weight * delta[y];
      for (const auto& [f, v] : ex.features)
        for (std::size_t y = 0; y < K; ++y) grad[y * F + f] += ex.weight * delta[y] * v;
    }
  }
  if (prior > 0.0) {
    double sq = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      sq += w[i] * w[i];
      if (want_grad) grad[i] += 2.0 * prior * w[i];
    }
    total += prior * sq;
  }
  return total;
}

}  // namespace maxent_detail

/// p(y|x) = exp(theta_y . x) / sum_y' exp(theta_y' . x).
inline Categorical predict_dist(const MaxentParams& params, const FeatureVector& x) {
  std::vector<double> scores(params.num_labels());
  maxent_detail::label_scores(params.weights, params.num_labels(), params.num_features, x, scores);
  for (double v : scores)
    if (!std::isfinite(v)) throw NumericalError("score overflow");
  return log_normalize(params.labels, scores);
}

inline std::size_t predict_label(const MaxentParams& params, const FeatureVector& x) {
  return predict_dist(params, x).argmax();
}

/// sum_i w_i * E_{target_i}[-log p(y|x_i)] + (1/sigma^2)||theta||^2.
inline double objective(const MaxentParams& params, std::span<const SoftExample> data) {
  return maxent_detail::objective_gradient(params.weights, params, data, {});
}

/// Gradient of `objective` with the same K x F layout as the weights.
inline std::vector<double> gradient(const MaxentParams& params, std::span<const SoftExample> data) {
  std::vector<double> g(params.weights.size());
  maxent_detail::objective_gradient(params.weights, params, data, g);
  return g;
}

template <class Params>
struct TrainOutcome {
  Params params;
  OptimizeReport report;
};

/// Minimizes `objective` from `init` (warm start).
inline TrainOutcome<MaxentParams> train(std::span<const SoftExample> data, MaxentParams init,
                                        const OptimizerConfig& cfg = {}) {
  std::vector<double> w = init.weights;
  auto fn = [&](std::span<const double> x, std::span<double> g) {
    return maxent_detail::objective_gradient(x, init, data, g);
  };
  OptimizeReport rep = minimize_lbfgs(fn, w, cfg);
  init.weights = std::move(w);
  return {std::move(init), std::move(rep)};
}

/// Hard-labeled examples weighted 1/n each, so the loss term is a mean.
inline std::vector<SoftExample> mean_weighted_examples(const LabelSet& labels,
                                                       std::span<const FeatureVector> xs,
                                                       std::span<const std::size_t> ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("features/labels size mismatch");
  std::vector<SoftExample> out;
  out.reserve(xs.size());
  const double w = xs.empty() ? 0.0 : 1.0 / static_cast<double>(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out.push_back({xs[i], one_hot(labels, ys[i]), w});
  return out;
}

}  // namespace sar
