#include <gtest/gtest.h>

#include <cmath>

#include "sar/maxent.hpp"
#include "support.hpp"

using namespace sar;
using sartest::Rng;

namespace {

MaxentParams random_params(Rng& rng, std::size_t K, std::size_t F, double var) {
  auto p = MaxentParams::zeros(LabelSet::numbered(K), F, var);
  for (auto& w : p.weights) w = rng.normal();
  return p;
}

std::vector<SoftExample> random_examples(Rng& rng, const LabelSet& labels, std::size_t F, std::size_t n) {
  std::vector<SoftExample> data;
  for (std::size_t i = 0; i < n; ++i) {
    Categorical target = rng.uniform() < 0.5 ? one_hot(labels, rng.below(labels.size()))
                                             : sartest::random_categorical(rng, labels);
    data.push_back({sartest::random_features(rng, F, 3), std::move(target), rng.uniform(0.1, 1.0)});
  }
  return data;
}

// Per-example re-summation straight from the definition.
double direct_objective(const MaxentParams& p, const std::vector<SoftExample>& data) {
  const std::size_t K = p.num_labels();
  double total = 0.0;
  for (const auto& ex : data) {
    std::vector<double> s(K);
    for (std::size_t y = 0; y < K; ++y) {
      s[y] = p.weight(y, p.bias_id());
      for (const auto& [f, v] : ex.features) s[y] += p.weight(y, f) * v;
    }
    double z = 0.0;
    for (double v : s) z += std::exp(v);
    for (std::size_t y = 0; y < K; ++y) {
      const double q = ex.target.prob(y);
      if (q > 0.0) total += ex.weight * q * -(s[y] - std::log(z));
    }
  }
  double sq = 0.0;
  for (double w : p.weights) sq += w * w;
  return total + sq / p.prior_variance;
}

}  // namespace

TEST(MaxentPredict, ZeroWeightsAreUniform) {
  const auto p = MaxentParams::zeros(LabelSet::numbered(4), 5, 1.0);
  const auto d = predict_dist(p, FeatureVector{{0, 1.0}, {3, 2.0}});
  for (std::size_t y = 0; y < 4; ++y) EXPECT_NEAR(d.prob(y), 0.25, 1e-15);
}

TEST(MaxentPredict, LogisticArithmetic) {
  auto p = MaxentParams::zeros(LabelSet::numbered(2), 1, 1.0);
  p.weight(0, 0) = std::log(9.0);
  const auto d = predict_dist(p, FeatureVector{{0, 1.0}});
  EXPECT_NEAR(d.prob(0), 0.9, 1e-14);
  EXPECT_NEAR(d.prob(1), 0.1, 1e-14);
}

TEST(MaxentPredict, ScalingKeepsUniqueArgmax) {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    auto p = random_params(rng, 3, 6, 1.0);
    const auto x = sartest::random_features(rng, 6, 3);
    const auto before = predict_dist(p, x);
    const double c = rng.uniform(0.1, 5.0);
    for (auto& w : p.weights) w *= c;
    EXPECT_EQ(predict_label(p, x), before.argmax());
  }
}

TEST(MaxentPredict, UnknownFeatureIsAnError) {
  const auto p = MaxentParams::zeros(LabelSet::numbered(2), 3, 1.0);
  EXPECT_THROW(predict_dist(p, FeatureVector{{3, 1.0}}), DataError);
}

TEST(MaxentPredict, ScoreOverflowIsNumerical) {
  auto p = MaxentParams::zeros(LabelSet::numbered(2), 2, 1.0);
  p.weight(0, 0) = 1e308;
  p.weight(1, 0) = -1e308;
  EXPECT_THROW(predict_dist(p, FeatureVector{{0, 1e308}}), NumericalError);
}

TEST(MaxentObjective, Examples) {
  const LabelSet labels = LabelSet::numbered(5);
  auto p = MaxentParams::zeros(labels, 4, 1.0);
  const std::vector<SoftExample> hard{{FeatureVector{{1, 1.0}}, one_hot(labels, 2), 1.0}};
  EXPECT_NEAR(objective(p, hard), std::log(5.0), 1e-14);
  const std::vector<SoftExample> soft{
      {FeatureVector{{1, 1.0}}, log_normalize(labels, std::vector<double>(5, 0.0)), 1.0}};
  EXPECT_NEAR(objective(p, soft), std::log(5.0), 1e-14);
}

TEST(MaxentObjective, MatchesDirectSummation) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_params(rng, 3, 7, rng.uniform(0.5, 10.0));
    const auto data = random_examples(rng, p.labels, 7, 5);
    EXPECT_GE(objective(p, data), 0.0);
    EXPECT_NEAR(objective(p, data), direct_objective(p, data), 1e-10);
  }
}

TEST(MaxentObjective, Convex) {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    auto a = random_params(rng, 3, 5, 2.0), b = random_params(rng, 3, 5, 2.0);
    const auto data = random_examples(rng, a.labels, 5, 6);
    const double t = rng.uniform(0.01, 0.99);
    auto mid = a;
    for (std::size_t i = 0; i < mid.weights.size(); ++i) mid.weights[i] = t * a.weights[i] + (1 - t) * b.weights[i];
    EXPECT_LE(objective(mid, data), t * objective(a, data) + (1 - t) * objective(b, data) + 1e-9);
  }
}

TEST(MaxentGradient, MatchesFiniteDifferences) {
  Rng rng(7);
  std::size_t checked = 0;
  for (int trial = 0; trial < 10; ++trial) {
    auto p = random_params(rng, rng.between(2, 4), rng.between(3, 8), rng.uniform(0.5, 5.0));
    const auto data = random_examples(rng, p.labels, p.num_features - 1, 6);
    const auto g = gradient(p, data);
    std::vector<std::size_t> coords(g.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    auto f = [&](const std::vector<double>& w) {
      auto q = p;
      q.weights = w;
      return objective(q, data);
    };
    EXPECT_LE(sartest::worst_fd_error(f, p.weights, g, coords), 1e-4);
    checked += coords.size();
  }
  EXPECT_GE(checked, 100u);
}

TEST(MaxentGradient, VanishesWhenTargetIsPrediction) {
  const LabelSet labels = LabelSet::numbered(3);
  const auto p = MaxentParams::zeros(labels, 4, kInf);
  std::vector<SoftExample> data{{FeatureVector{{0, 1.0}, {2, 0.5}}, predict_dist(p, FeatureVector{{0, 1.0}}), 1.0}};
  for (double g : gradient(p, data)) EXPECT_EQ(g, 0.0);
}

TEST(MaxentTrain, SeparableToy) {
  const LabelSet labels = LabelSet::numbered(2);
  std::vector<FeatureVector> xs{{{0, 1.0}}, {{1, 1.0}}, {{2, 1.0}}, {{3, 1.0}}};
  std::vector<std::size_t> ys{0, 0, 1, 1};
  const auto data = mean_weighted_examples(labels, xs, ys);
  const auto out = train(data, MaxentParams::zeros(labels, 4, 10.0));
  EXPECT_TRUE(out.report.converged());
  for (std::size_t i = 0; i < xs.size(); ++i) EXPECT_EQ(predict_label(out.params, xs[i]), ys[i]);
  const auto g = gradient(out.params, data);
  double norm = 0.0;
  for (double v : g) norm += v * v;
  EXPECT_LE(std::sqrt(norm), OptimizerConfig{}.grad_tolerance);
}

TEST(MaxentTrain, UniformTargetStaysUniform) {
  const LabelSet labels = LabelSet::numbered(3);
  const FeatureVector x{{0, 1.0}, {1, 1.0}};
  std::vector<SoftExample> data{{x, log_normalize(labels, std::vector<double>(3, 0.0)), 1.0}};
  const auto out = train(data, MaxentParams::zeros(labels, 2, 1.0));
  const auto d = predict_dist(out.params, x);
  for (std::size_t y = 0; y < 3; ++y) EXPECT_NEAR(d.prob(y), 1.0 / 3.0, 1e-3);
}

TEST(MaxentTrain, DeterministicAndMonotone) {
  Rng rng(9);
  auto init = MaxentParams::zeros(LabelSet::numbered(3), 10, 1.0);
  const auto data = random_examples(rng, init.labels, 10, 30);
  const auto a = train(data, init), b = train(data, init);
  EXPECT_EQ(a.params.weights, b.params.weights);
  EXPECT_LE(objective(a.params, data), objective(init, data));
  for (std::size_t i = 1; i < a.report.objective_trace.size(); ++i)
    EXPECT_LE(a.report.objective_trace[i], a.report.objective_trace[i - 1]);
}

TEST(MaxentTrain, RejectsNonPositiveVariance) {
  auto init = MaxentParams::zeros(LabelSet::numbered(2), 1, 0.0);
  std::vector<SoftExample> data;
  EXPECT_THROW(train(data, init), std::invalid_argument);
}

TEST(Optimizer, QuadraticConverges) {
  std::vector<double> x{3.0, -4.0, 1.0};
  auto f = [](std::span<const double> v, std::span<double> g) {
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double c = static_cast<double>(i + 1);
      s += c * (v[i] - 1.0) * (v[i] - 1.0);
      g[i] = 2.0 * c * (v[i] - 1.0);
    }
    return s;
  };
  const auto rep = minimize_lbfgs(f, x, {});
  EXPECT_TRUE(rep.converged());
  for (double v : x) EXPECT_NEAR(v, 1.0, 1e-5);
}

TEST(Optimizer, NonFiniteStartIsDivergence) {
  std::vector<double> x{0.0};
  auto f = [](std::span<const double>, std::span<double>) { return std::nan(""); };
  EXPECT_THROW(minimize_lbfgs(f, x, {}), NumericalError);
}
