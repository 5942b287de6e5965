#include <gtest/gtest.h>

#include <cmath>

#include "sar/agreement.hpp"
#include "support.hpp"

using namespace sar;
using sartest::Rng;

namespace {

const LabelSet kTwo = LabelSet::numbered(2);

Categorical dist(const LabelSet& labels, std::vector<double> p) { return sartest::from_probs(labels, p); }

LabelMapping random_mapping(Rng& rng, std::size_t k1, std::size_t k2) {
  return LabelMapping(sartest::prefixed_labels("f", k1), sartest::prefixed_labels("c", k2),
                      sartest::random_surjection(rng, k1, k2));
}

// Sequence distribution of a chain, by enumeration.
std::vector<double> sequence_probs(const ChainPotentials& pot) {
  const auto s = sartest::enumerate_scores(pot);
  const double z = logsumexp(s);
  std::vector<double> p(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) p[i] = std::exp(s[i] - z);
  return p;
}

// A chain over the coarse labels whose node and pair marginals are those of
// q1 collapsed through m.
ChainPotentials collapsed_markov(const ChainPotentials& q1, const LabelMapping& m) {
  const std::size_t T = q1.length, K1 = q1.num_labels(), K2 = m.coarse().size();
  const auto probs = sequence_probs(q1);
  std::vector<double> node(T * K2, 0.0), pair(T > 1 ? (T - 1) * K2 * K2 : 0, 0.0);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const auto y = sequence_from_index(i, T, K1);
    for (std::size_t t = 0; t < T; ++t) {
      node[t * K2 + m(y[t])] += probs[i];
      if (t + 1 < T) pair[(t * K2 + m(y[t])) * K2 + m(y[t + 1])] += probs[i];
    }
  }
  ChainPotentials q2(m.coarse(), T);
  for (std::size_t z = 0; z < K2; ++z) q2.at(0, z) = std::log(node[z]);
  for (std::size_t t = 0; t + 1 < T; ++t)
    for (std::size_t a = 0; a < K2; ++a)
      for (std::size_t b = 0; b < K2; ++b)
        q2.at(t, a, b) = std::log(pair[(t * K2 + a) * K2 + b]) - std::log(node[t * K2 + a]);
  return q2;
}

double enumerated_kl(const ChainPotentials& q, const ChainPotentials& p) {
  return sartest::direct_kl(sequence_probs(q), sequence_probs(p));
}

}  // namespace

TEST(LabelMapping, Validation) {
  const LabelSet fine({"a", "b", "c"}), coarse({"X", "Z"});
  EXPECT_NO_THROW(LabelMapping(fine, coarse, {0, 0, 1}));
  EXPECT_THROW(LabelMapping(fine, coarse, {0, 0, 0}), std::invalid_argument);
  EXPECT_THROW(LabelMapping(fine, coarse, {0, 1}), std::invalid_argument);
  EXPECT_THROW(LabelMapping(fine, coarse, {0, 2, 1}), std::invalid_argument);
  EXPECT_TRUE(LabelMapping::identity(fine).is_identity());
  EXPECT_FALSE(LabelMapping(fine, coarse, {0, 0, 1}).is_injective());
}

TEST(AgreeFlat, Examples) {
  const auto p = dist(kTwo, {0.3, 0.7});
  const auto same = agree_flat(p, p);
  EXPECT_NEAR(same.q1.prob(0), 0.3, 1e-15);
  EXPECT_NEAR(same.kl_value, 0.0, 1e-15);

  const auto sym = agree_flat(dist(kTwo, {0.9, 0.1}), dist(kTwo, {0.1, 0.9}));
  EXPECT_NEAR(sym.q1.prob(0), 0.5, 1e-15);

  const auto r = agree_flat(dist(kTwo, {0.8, 0.2}), dist(kTwo, {0.5, 0.5}));
  EXPECT_NEAR(r.q1.prob(0), std::sqrt(0.4) / (std::sqrt(0.4) + std::sqrt(0.1)), 1e-14);
  EXPECT_NEAR(r.q1.prob(0), 2.0 / 3.0, 1e-12);
  const auto oracle = sartest::oracle_projection({0.8, 0.2}, {0.5, 0.5}, {0, 1});
  EXPECT_NEAR(oracle.q1[0], 2.0 / 3.0, 1e-6);
}

TEST(AgreeFlat, DisjointSupports) {
  EXPECT_THROW(agree_flat(Categorical(kTwo, {0.0, kNegInf}), Categorical(kTwo, {kNegInf, 0.0})), NumericalError);
}

TEST(AgreeFlat, ZeroProbabilityLabelsStayZero) {
  const LabelSet three = LabelSet::numbered(3);
  const auto a = Categorical(three, {std::log(0.5), std::log(0.5), kNegInf});
  const auto o = agree_flat(a, dist(three, {0.2, 0.3, 0.5}));
  EXPECT_EQ(o.q1.log_prob(2), kNegInf);
  EXPECT_TRUE(std::isfinite(o.kl_value));
}

TEST(AgreeFlat, KlIsTwiceBhattacharyya) {
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto labels = LabelSet::numbered(rng.between(2, 10));
    const auto p1 = sartest::random_categorical(rng, labels), p2 = sartest::random_categorical(rng, labels);
    const auto o = agree_flat(p1, p2);
    EXPECT_NEAR(o.kl_value, 2.0 * bhattacharyya(p1, p2), 1e-8);
    EXPECT_NEAR(o.kl_value, 2.0 * o.bhattacharyya_value, 1e-8);
  }
}

TEST(AgreeFlat, ProductDecompositionAndSymmetry) {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const auto labels = LabelSet::numbered(rng.between(2, 6));
    const auto p1 = sartest::random_categorical(rng, labels), p2 = sartest::random_categorical(rng, labels);
    const auto o = agree_flat(p1, p2), swapped = agree_flat(p2, p1);
    const auto q = o.q1.probs(), a = p1.probs(), b = p2.probs();
    double joint = 0.0;
    for (std::size_t y = 0; y < q.size(); ++y)
      for (std::size_t z = 0; z < q.size(); ++z)
        if (q[y] * q[z] > 0.0) joint += q[y] * q[z] * std::log(q[y] * q[z] / (a[y] * b[z]));
    EXPECT_NEAR(joint, o.kl_value, 1e-10);
    for (std::size_t y = 0; y < q.size(); ++y) {
      EXPECT_NEAR(o.q1.log_prob(y), swapped.q1.log_prob(y), 1e-15);
      EXPECT_EQ(o.q1.log_prob(y), o.q2.log_prob(y));
    }
    EXPECT_NEAR(o.kl_value, swapped.kl_value, 1e-15);
  }
}

TEST(AgreeFlat, BeatsRandomFeasibleAlternatives) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto labels = LabelSet::numbered(rng.between(2, 5));
    const auto p1 = sartest::random_categorical(rng, labels), p2 = sartest::random_categorical(rng, labels);
    const auto o = agree_flat(p1, p2);
    for (int alt = 0; alt < 1000; ++alt) {
      const auto q = sartest::random_probs(rng, labels.size(), 1e-6);
      const double kl = sartest::direct_kl(q, p1.probs()) + sartest::direct_kl(q, p2.probs());
      EXPECT_LT(o.kl_value, kl);
    }
  }
}

TEST(AgreeFlat, MatchesProjectedGradientOracle) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t K = rng.between(2, 4);
    const auto labels = LabelSet::numbered(K);
    const auto p1 = sartest::random_categorical(rng, labels), p2 = sartest::random_categorical(rng, labels);
    std::vector<std::size_t> id(K);
    for (std::size_t i = 0; i < K; ++i) id[i] = i;
    const auto oracle = sartest::oracle_projection(p1.probs(), p2.probs(), id);
    const auto o = agree_flat(p1, p2);
    EXPECT_LE(o.kl_value, oracle.kl + 1e-6);
    EXPECT_NEAR(o.kl_value, oracle.kl, 1e-6);
    for (std::size_t y = 0; y < K; ++y) EXPECT_NEAR(o.q1.prob(y), oracle.q1[y], 1e-6);
  }
}

TEST(AgreeFlatPartial, WorkedExample) {
  const LabelSet fine({"a", "b", "c"}), coarse({"X", "Z"});
  const LabelMapping m(fine, coarse, {0, 0, 1});
  const auto o = agree_flat_partial(dist(fine, {0.5, 0.3, 0.2}), dist(coarse, {0.4, 0.6}), m);
  const double x = std::sqrt(0.8 * 0.4), z = std::sqrt(0.2 * 0.6);
  EXPECT_NEAR(o.q2.prob(0), x / (x + z), 1e-14);
  EXPECT_NEAR(o.q2.prob(0), 0.6202, 5e-5);
  EXPECT_NEAR(o.q2.prob(1), 0.3798, 5e-5);
  EXPECT_NEAR(o.q1.prob(0), 0.3876, 5e-5);
  EXPECT_NEAR(o.q1.prob(1), 0.2326, 5e-5);
  EXPECT_NEAR(o.q1.prob(2), 0.3798, 5e-5);
  const auto oracle = sartest::oracle_projection({0.5, 0.3, 0.2}, {0.4, 0.6}, {0, 0, 1});
  for (std::size_t y = 0; y < 3; ++y) EXPECT_NEAR(o.q1.prob(y), oracle.q1[y], 1e-6);
  for (std::size_t zz = 0; zz < 2; ++zz) EXPECT_NEAR(o.q2.prob(zz), oracle.q2[zz], 1e-6);
  EXPECT_NEAR(o.bhattacharyya_value, -std::log(x + z), 1e-14);
}

TEST(AgreeFlatPartial, AlreadyAgreeing) {
  const LabelSet fine = sartest::prefixed_labels("f", 4), coarse = sartest::prefixed_labels("c", 2);
  const LabelMapping m(fine, coarse, {0, 1, 0, 1});
  const auto o = agree_flat_partial(dist(fine, {1, 1, 1, 1}), dist(coarse, {1, 1}), m);
  for (std::size_t y = 0; y < 4; ++y) EXPECT_NEAR(o.q1.prob(y), 0.25, 1e-15);
  EXPECT_NEAR(o.kl_value, 0.0, 1e-15);
}

TEST(AgreeFlatPartial, IdentityEqualsFullAgreement) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto labels = LabelSet::numbered(rng.between(2, 8));
    const auto p1 = sartest::random_categorical(rng, labels), p2 = sartest::random_categorical(rng, labels);
    const auto a = agree_flat(p1, p2), b = agree_flat_partial(p1, p2, LabelMapping::identity(labels));
    for (std::size_t y = 0; y < labels.size(); ++y) {
      EXPECT_NEAR(a.q1.log_prob(y), b.q1.log_prob(y), 1e-12);
      EXPECT_NEAR(a.q2.log_prob(y), b.q2.log_prob(y), 1e-12);
    }
    EXPECT_NEAR(a.kl_value, b.kl_value, 1e-12);
  }
}

TEST(AgreeFlatPartial, MatchesProjectedGradientOracle) {
  Rng rng(6);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t k2 = rng.between(1, 3), k1 = rng.between(std::max<std::size_t>(k2, 2), 4);
    const auto m = random_mapping(rng, k1, k2);
    const auto p1 = sartest::random_categorical(rng, m.fine()), p2 = sartest::random_categorical(rng, m.coarse());
    const auto o = agree_flat_partial(p1, p2, m);
    const auto oracle = sartest::oracle_projection(p1.probs(), p2.probs(), m.table());
    for (std::size_t y = 0; y < k1; ++y) EXPECT_NEAR(o.q1.prob(y), oracle.q1[y], 1e-6);
    for (std::size_t z = 0; z < k2; ++z) EXPECT_NEAR(o.q2.prob(z), oracle.q2[z], 1e-6);
    EXPECT_LE(o.kl_value, oracle.kl + 1e-9);
    // Feasibility: q2 is exactly q1 collapsed.
    const auto collapsed = m.collapse(o.q1);
    for (std::size_t z = 0; z < k2; ++z) EXPECT_NEAR(collapsed.prob(z), o.q2.prob(z), 1e-12);
  }
}

TEST(AgreeFlatPartial, NoJointSupport) {
  const LabelSet fine({"a", "b", "c"}), coarse({"X", "Z"});
  const LabelMapping m(fine, coarse, {0, 0, 1});
  EXPECT_THROW(agree_flat_partial(Categorical(fine, {std::log(0.5), std::log(0.5), kNegInf}),
                                  Categorical(coarse, {kNegInf, 0.0}), m),
               NumericalError);
  EXPECT_THROW(agree_flat_partial(dist(coarse, {1, 1}), dist(coarse, {1, 1}), m), std::invalid_argument);
}

TEST(AgreeChain, IdenticalInputs) {
  Rng rng(7);
  const auto pot = sartest::random_potentials(rng, LabelSet::numbered(3), 4);
  const auto o = agree_chain(pot, pot);
  EXPECT_EQ(o.q1_potentials.node, pot.node);
  EXPECT_EQ(o.q1_potentials.edge, pot.edge);
  EXPECT_NEAR(o.bhattacharyya_value, 0.0, 1e-12);
  EXPECT_NEAR(o.kl_value, 0.0, 1e-12);
}

TEST(AgreeChain, LengthOneIsFlat) {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const auto labels = LabelSet::numbered(rng.between(2, 5));
    const auto a = sartest::random_potentials(rng, labels, 1), b = sartest::random_potentials(rng, labels, 1);
    const auto o = agree_chain(a, b);
    const auto f = agree_flat(log_normalize(labels, a.node), log_normalize(labels, b.node));
    for (std::size_t y = 0; y < labels.size(); ++y) EXPECT_NEAR(o.q1_marginals.at(0, y), f.q1.prob(y), 1e-12);
    EXPECT_NEAR(o.kl_value, f.kl_value, 1e-10);
    EXPECT_NEAR(o.bhattacharyya_value, f.bhattacharyya_value, 1e-10);
  }
}

TEST(AgreeChain, MatchesSequenceLevelAgreement) {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t T = rng.between(1, 5), K = rng.between(2, 3);
    const auto labels = LabelSet::numbered(K);
    const auto a = sartest::random_potentials(rng, labels, T), b = sartest::random_potentials(rng, labels, T);
    const auto o = agree_chain(a, b);
    const auto flat = agree_flat(brute_force_dist(a), brute_force_dist(b));
    const auto q = sequence_probs(o.q1_potentials);
    for (std::size_t i = 0; i < q.size(); ++i) EXPECT_NEAR(q[i], flat.q1.prob(i), 1e-8);
    EXPECT_NEAR(o.kl_value, flat.kl_value, 1e-8);
    EXPECT_NEAR(o.kl_value, 2.0 * o.bhattacharyya_value, 1e-8);
  }
}

TEST(AgreeChainPartial, IdentityRecoversClosedForm) {
  Rng rng(10);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t T = rng.between(1, 4), K = rng.between(2, 3);
    const auto labels = LabelSet::numbered(K);
    const auto a = sartest::random_potentials(rng, labels, T), b = sartest::random_potentials(rng, labels, T);
    const auto closed = agree_chain(a, b);
    const auto o = agree_chain_partial(a, b, LabelMapping::identity(labels));
    ASSERT_TRUE(o.converged);
    for (std::size_t i = 0; i < closed.q1_marginals.node.size(); ++i) {
      EXPECT_NEAR(o.q1_marginals.node[i], closed.q1_marginals.node[i], 1e-6);
      EXPECT_NEAR(o.q2_marginals.node[i], closed.q1_marginals.node[i], 1e-6);
    }
    for (std::size_t i = 0; i < closed.q1_marginals.edge.size(); ++i)
      EXPECT_NEAR(o.q1_marginals.edge[i], closed.q1_marginals.edge[i], 1e-6);
    EXPECT_NEAR(o.kl_value, closed.kl_value, 1e-5);
    EXPECT_NEAR(dual_objective(*o.dual_vars, a, b, LabelMapping::identity(labels)),
                2.0 * closed.bhattacharyya_value, 1e-6);
  }
}

TEST(AgreeChainPartial, LengthOneMatchesFlatPartial) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t k2 = rng.between(1, 2), k1 = rng.between(2, 3);
    const auto m = random_mapping(rng, k1, k2);
    const auto a = sartest::random_potentials(rng, m.fine(), 1), b = sartest::random_potentials(rng, m.coarse(), 1);
    const auto o = agree_chain_partial(a, b, m);
    const auto f = agree_flat_partial(log_normalize(m.fine(), a.node), log_normalize(m.coarse(), b.node), m);
    for (std::size_t y = 0; y < k1; ++y) EXPECT_NEAR(o.q1_marginals.at(0, y), f.q1.prob(y), 1e-6);
    for (std::size_t z = 0; z < k2; ++z) EXPECT_NEAR(o.q2_marginals.at(0, z), f.q2.prob(z), 1e-6);
  }
}

TEST(AgreeChainPartial, FeasibleAndOptimalAgainstSampledPairs) {
  Rng rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t T = rng.between(1, 4), k2 = rng.between(1, 2), k1 = rng.between(2, 3);
    const auto m = random_mapping(rng, k1, k2);
    const auto a = sartest::random_potentials(rng, m.fine(), T), b = sartest::random_potentials(rng, m.coarse(), T);
    const auto o = agree_chain_partial(a, b, m);
    ASSERT_TRUE(o.converged) << "residual " << o.residual;
    EXPECT_LE(o.iterations, 200);
    for (std::size_t t = 0; t < T; ++t) {
      std::vector<double> collapsed(k2, 0.0);
      for (std::size_t y = 0; y < k1; ++y) collapsed[m(y)] += o.q1_marginals.at(t, y);
      for (std::size_t z = 0; z < k2; ++z) EXPECT_NEAR(collapsed[z], o.q2_marginals.at(t, z), 1e-6);
    }
    const double achieved = enumerated_kl(o.q1_potentials, a) + enumerated_kl(o.q2_potentials, b);
    EXPECT_NEAR(achieved, o.kl_value, 1e-8);
    for (int s = 0; s < 100; ++s) {
      const auto q1 = sartest::random_potentials(rng, m.fine(), T, 2.0);
      const auto q2 = collapsed_markov(q1, m);
      EXPECT_LE(o.kl_value, enumerated_kl(q1, a) + enumerated_kl(q2, b) + 1e-6);
    }
  }
}

TEST(DualObjective, ZeroAtOriginAndConcave) {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t T = rng.between(1, 4), k2 = rng.between(1, 2), k1 = rng.between(2, 3);
    const auto m = random_mapping(rng, k1, k2);
    const auto a = sartest::random_potentials(rng, m.fine(), T), b = sartest::random_potentials(rng, m.coarse(), T);
    const std::size_t n = T * k2 + (T - 1) * k2 * k2;
    EXPECT_NEAR(dual_objective(std::vector<double>(n, 0.0), a, b, m), 0.0, 1e-12);
    std::vector<double> la(n), lb(n), mid(n);
    for (std::size_t i = 0; i < n; ++i) {
      la[i] = 2.0 * rng.normal();
      lb[i] = 2.0 * rng.normal();
      mid[i] = 0.5 * (la[i] + lb[i]);
    }
    EXPECT_GE(dual_objective(mid, a, b, m),
              0.5 * (dual_objective(la, a, b, m) + dual_objective(lb, a, b, m)) - 1e-9);
    EXPECT_THROW(dual_objective(std::vector<double>(n + 1, 0.0), a, b, m), std::invalid_argument);
  }
}

TEST(AgreeChainPartial, WarmStartConvergesFaster) {
  Rng rng(14);
  const auto m = random_mapping(rng, 3, 2);
  const auto a = sartest::random_potentials(rng, m.fine(), 4), b = sartest::random_potentials(rng, m.coarse(), 4);
  const auto cold = agree_chain_partial(a, b, m);
  const auto warm = agree_chain_partial(a, b, m, {}, *cold.dual_vars);
  EXPECT_EQ(warm.iterations, 0);
  EXPECT_NEAR(warm.kl_value, cold.kl_value, 1e-12);
}

TEST(AgreeChainPartial, StepRulesAgree) {
  Rng rng(15);
  DualSolverConfig bt;
  bt.step_rule = StepRule::kBacktracking;
  bt.max_iterations = 2000;
  for (int trial = 0; trial < 10; ++trial) {
    const auto m = random_mapping(rng, 3, 2);
    const auto a = sartest::random_potentials(rng, m.fine(), 3), b = sartest::random_potentials(rng, m.coarse(), 3);
    const auto x = agree_chain_partial(a, b, m), y = agree_chain_partial(a, b, m, bt);
    ASSERT_TRUE(x.converged);
    ASSERT_TRUE(y.converged);
    EXPECT_NEAR(x.kl_value, y.kl_value, 1e-5);
    for (std::size_t i = 1; i < x.dual_trace.size(); ++i) EXPECT_GE(x.dual_trace[i], x.dual_trace[i - 1]);
  }
}
