#pragma once

// Stochastic agreement regularization: alternating constrained EM over two
// view models.
//
// Objective:  L1(theta1) + L2(theta2) + c * mean_{x in U} min_q KL(q || p1(.|x) p2(.|x))
// where L_i is the mean log-loss over view i's labeled data plus the
// (1/sigma_i^2)||theta_i||^2 prior.
//
// The E-step computes the agreement projection q for every unlabeled
// instance; the M-step refits each view on its labeled data plus the
// unlabeled data soft-labeled with that view's q marginal, each unlabeled
// instance weighted c/|U|. In balance mode the unlabeled data as a whole gets
// the same total weight as the labeled data (c = 1 under mean weighting).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sar/agreement.hpp"
#include "sar/crf.hpp"
#include "sar/error.hpp"
#include "sar/maxent.hpp"
#include "sar/parallel.hpp"

namespace sar {

struct SarConfig {
  double c = 1.0;
  bool balance = false;
  int iterations = 10;
  double prior_variance1 = 1.0;
  double prior_variance2 = 1.0;
  OptimizerConfig optimizer1{};
  OptimizerConfig optimizer2{};
  DualSolverConfig dual{};
  std::uint64_t seed = 0;
  bool early_stop = false;
  double early_stop_tolerance = 1e-6;
  double monotonicity_tolerance = 1e-4;
  unsigned threads = 1;

  double unlabeled_weight() const {
    if (c < 0.0 || !std::isfinite(c)) throw std::invalid_argument("c must be a finite nonnegative number");
    return balance ? 1.0 : c;
  }
};

struct TraceRow {
  int iteration = 0;
  double l1 = 0.0, l2 = 0.0, kl_term = 0.0, total = 0.0;
};

struct EStepStats {
  int iteration = 0;
  std::size_t instances = 0;
  double mean_dual_iterations = 0.0;
  int max_dual_iterations = 0;
  double max_residual = 0.0;
  std::size_t unconverged = 0;
};

template <class Params>
struct SarState {
  Params params1, params2;
  std::vector<TraceRow> trace;
  std::vector<EStepStats> estep;
};

template <class Input>
struct TwoView {
  Input view1, view2;
};

struct LabeledFlat {
  FeatureVector features;
  std::size_t label = 0;
};

/// Flat instances, maxent view models.
struct FlatKind {
  using Params = MaxentParams;
  using Input = FeatureVector;
  using Labeled = LabeledFlat;
  using Item = SoftExample;
  using Outcome = AgreementOutcome;
  using Prediction = std::size_t;

  static Item labeled_item(const Labeled& ex, const Params& p, double w) {
    return {ex.features, one_hot(p.labels, ex.label), w};
  }
  static double loss(const Params& p, std::span<const Item> items) { return objective(p, items); }
  static TrainOutcome<Params> fit(std::span<const Item> items, Params init, const OptimizerConfig& cfg) {
    return train(items, std::move(init), cfg);
  }
  static Outcome agree(const Params& a, const Params& b, const TwoView<Input>& x, const LabelMapping* m,
                       const DualSolverConfig&, std::span<const double>) {
    const Categorical p1 = predict_dist(a, x.view1), p2 = predict_dist(b, x.view2);
    return m ? agree_flat_partial(p1, p2, *m) : agree_flat(p1, p2);
  }
  static Item soft_item1(const TwoView<Input>& x, const Outcome& o, double w) { return {x.view1, o.q1, w}; }
  static Item soft_item2(const TwoView<Input>& x, const Outcome& o, double w) { return {x.view2, o.q2, w}; }
  static Prediction decode(const Outcome& o) { return o.q1.argmax(); }
  static Prediction predict1(const Params& p, const Input& x) { return predict_label(p, x); }
};

/// Sequence instances, linear-chain CRF view models.
struct ChainKind {
  using Params = CrfParams;
  using Input = ChainExample;
  using Labeled = ChainExample;  // gold must be set
  using Item = CrfItem;
  using Outcome = ChainAgreementOutcome;
  using Prediction = std::vector<std::size_t>;

  static Item labeled_item(const Labeled& ex, const Params&, double w) {
    if (!ex.gold) throw std::invalid_argument("labeled chain example has no gold labels");
    return {ex, *ex.gold, w};
  }
  static double loss(const Params& p, std::span<const Item> items) { return crf_objective(p, items); }
  static TrainOutcome<Params> fit(std::span<const Item> items, Params init, const OptimizerConfig& cfg) {
    return train_crf(items, std::move(init), cfg);
  }
  static Outcome agree(const Params& a, const Params& b, const TwoView<Input>& x, const LabelMapping* m,
                       const DualSolverConfig& cfg, std::span<const double> warm) {
    const ChainPotentials p1 = build_potentials(a, x.view1), p2 = build_potentials(b, x.view2);
    return m ? agree_chain_partial(p1, p2, *m, cfg, warm) : agree_chain(p1, p2);
  }
  static Item soft_item1(const TwoView<Input>& x, const Outcome& o, double w) {
    return {strip_gold(x.view1), o.q1_marginals, w};
  }
  static Item soft_item2(const TwoView<Input>& x, const Outcome& o, double w) {
    return {strip_gold(x.view2), o.q2_marginals, w};
  }
  static Prediction decode(const Outcome& o) { return viterbi(o.q1_potentials); }
  static Prediction predict1(const Params& p, const Input& x) { return predict_sequence(p, x); }

 private:
  static ChainExample strip_gold(const ChainExample& x) { return {x.positions, std::nullopt}; }
};

/// The data of one semi-supervised problem. View 1's labels live in
/// params1's label set, view 2's in params2's. Without a mapping the two sets
/// must be identical; with one, view 1 holds the fine labels.
template <class Kind>
struct SarProblem {
  std::vector<typename Kind::Labeled> labeled1;
  std::vector<typename Kind::Labeled> labeled2;
  std::vector<TwoView<typename Kind::Input>> unlabeled;
  std::optional<LabelMapping> mapping;
};

struct ObjectiveBreakdown {
  double l1 = 0.0, l2 = 0.0, kl_term = 0.0, total = 0.0;
};

namespace trainer_detail {

template <class Kind>
const LabelMapping* effective_mapping(const SarProblem<Kind>& prob, const typename Kind::Params& p1,
                                      const typename Kind::Params& p2) {
  if (!prob.mapping) {
    if (!(p1.labels == p2.labels))
      throw std::invalid_argument("views have different label sets but no label mapping was given");
    return nullptr;
  }
  if (!(prob.mapping->fine() == p1.labels) || !(prob.mapping->coarse() == p2.labels))
    throw std::invalid_argument("label mapping does not match the view label sets");
  // Identity mappings take the closed-form route.
  return prob.mapping->is_identity() ? nullptr : &*prob.mapping;
}

template <class Kind>
std::vector<typename Kind::Item> labeled_items(std::span<const typename Kind::Labeled> data,
                                               const typename Kind::Params& p) {
  std::vector<typename Kind::Item> items;
  items.reserve(data.size());
  const double w = data.empty() ? 0.0 : 1.0 / static_cast<double>(data.size());
  for (const auto& ex : data) items.push_back(Kind::labeled_item(ex, p, w));
  return items;
}

inline const std::vector<double>* dual_of(const AgreementOutcome&) { return nullptr; }
inline const std::vector<double>* dual_of(const ChainAgreementOutcome& o) {
  return o.dual_vars ? &*o.dual_vars : nullptr;
}
inline int iterations_of(const AgreementOutcome& o) { return o.iterations; }
inline int iterations_of(const ChainAgreementOutcome& o) { return o.iterations; }
inline double residual_of(const AgreementOutcome&) { return 0.0; }
inline double residual_of(const ChainAgreementOutcome& o) { return o.residual; }
inline bool converged_of(const AgreementOutcome& o) { return o.converged; }
inline bool converged_of(const ChainAgreementOutcome& o) { return o.converged; }

template <class Kind>
struct EStep {
  std::vector<typename Kind::Outcome> outcomes;
  double mean_kl = 0.0;
  EStepStats stats;
};

template <class Kind>
EStep<Kind> e_step(const SarProblem<Kind>& prob, const typename Kind::Params& p1, const typename Kind::Params& p2,
                   const SarConfig& cfg, std::vector<std::vector<double>>* warm_duals) {
  const LabelMapping* m = effective_mapping(prob, p1, p2);
  const std::size_t n = prob.unlabeled.size();
  EStep<Kind> e;
  e.outcomes.resize(n);
  parallel_for(n, cfg.threads, [&](std::size_t i) {
    std::span<const double> warm;
    if (warm_duals && i < warm_duals->size()) warm = (*warm_duals)[i];
    try {
      e.outcomes[i] = Kind::agree(p1, p2, prob.unlabeled[i], m, cfg.dual, warm);
    } catch (const NumericalError& err) {
      throw NumericalError("unlabeled instance " + std::to_string(i) + ": " + err.what());
    }
  });
  double kl_sum = 0.0;
  long total_iters = 0;
  e.stats.instances = n;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& o = e.outcomes[i];
    kl_sum += o.kl_value;
    const int it = iterations_of(o);
    total_iters += it;
    e.stats.max_dual_iterations = std::max(e.stats.max_dual_iterations, it);
    e.stats.max_residual = std::max(e.stats.max_residual, residual_of(o));
    if (!converged_of(o)) ++e.stats.unconverged;
  }
  if (warm_duals && m) {
    warm_duals->resize(n);
    for (std::size_t i = 0; i < n; ++i)
      if (const auto* d = dual_of(e.outcomes[i])) (*warm_duals)[i] = *d;
  }
  e.mean_kl = n ? kl_sum / static_cast<double>(n) : 0.0;
  e.stats.mean_dual_iterations = n ? static_cast<double>(total_iters) / static_cast<double>(n) : 0.0;
  return e;
}

template <class Kind>
ObjectiveBreakdown breakdown(const SarProblem<Kind>& prob, const typename Kind::Params& p1,
                             const typename Kind::Params& p2, double c, double mean_kl) {
  ObjectiveBreakdown b;
  const auto items1 = labeled_items<Kind>(prob.labeled1, p1);
  const auto items2 = labeled_items<Kind>(prob.labeled2, p2);
  b.l1 = Kind::loss(p1, items1);
  b.l2 = Kind::loss(p2, items2);
  b.kl_term = mean_kl;
  b.total = b.l1 + b.l2 + c * b.kl_term;
  return b;
}

}  // namespace trainer_detail

/// L1 + L2 + c * (mean over U of the achieved agreement KL), with components.
template <class Kind>
ObjectiveBreakdown objective_value(const SarProblem<Kind>& prob, const typename Kind::Params& p1,
                                   const typename Kind::Params& p2, const SarConfig& cfg) {
  const auto e = trainer_detail::e_step(prob, p1, p2, cfg, nullptr);
  return trainer_detail::breakdown(prob, p1, p2, cfg.unlabeled_weight(), e.mean_kl);
}

/// Runs `rounds` E/M rounds starting from `state` (whose trace should end
/// with the objective at its current parameters), appending to the trace.
template <class Kind>
void run_em(const SarProblem<Kind>& prob, const SarConfig& cfg, SarState<typename Kind::Params>& state,
            int rounds) {
  const double c = cfg.unlabeled_weight();
  std::vector<std::vector<double>> duals;
  auto e = trainer_detail::e_step(prob, state.params1, state.params2, cfg, &duals);
  if (state.trace.empty()) {
    const auto b = trainer_detail::breakdown(prob, state.params1, state.params2, c, e.mean_kl);
    state.trace.push_back({0, b.l1, b.l2, b.kl_term, b.total});
    e.stats.iteration = 0;
    state.estep.push_back(e.stats);
  }
  if (prob.unlabeled.empty() || c == 0.0) return;
  const double w_unlabeled = c / static_cast<double>(prob.unlabeled.size());
  const int start = state.trace.back().iteration;
  for (int r = 1; r <= rounds; ++r) {
    auto items1 = trainer_detail::labeled_items<Kind>(prob.labeled1, state.params1);
    auto items2 = trainer_detail::labeled_items<Kind>(prob.labeled2, state.params2);
    for (std::size_t i = 0; i < prob.unlabeled.size(); ++i) {
      items1.push_back(Kind::soft_item1(prob.unlabeled[i], e.outcomes[i], w_unlabeled));
      items2.push_back(Kind::soft_item2(prob.unlabeled[i], e.outcomes[i], w_unlabeled));
    }
    state.params1 = Kind::fit(items1, std::move(state.params1), cfg.optimizer1).params;
    state.params2 = Kind::fit(items2, std::move(state.params2), cfg.optimizer2).params;

    e = trainer_detail::e_step(prob, state.params1, state.params2, cfg, &duals);
    const auto b = trainer_detail::breakdown(prob, state.params1, state.params2, c, e.mean_kl);
    const double previous = state.trace.back().total;
    state.trace.push_back({start + r, b.l1, b.l2, b.kl_term, b.total});
    e.stats.iteration = start + r;
    state.estep.push_back(e.stats);
    if (b.total > previous + cfg.monotonicity_tolerance)
      throw NumericalError("EM monotonicity violated at iteration " + std::to_string(start + r));
    if (cfg.early_stop && previous - b.total < cfg.early_stop_tolerance) break;
  }
}

/// Supervised fits of both views, then `cfg.iterations` rounds of EM.
template <class Kind>
SarState<typename Kind::Params> train_sar(const SarProblem<Kind>& prob, const SarConfig& cfg,
                                          typename Kind::Params init1, typename Kind::Params init2) {
  if (cfg.iterations < 1) throw std::invalid_argument("iterations must be at least 1");
  init1.prior_variance = cfg.prior_variance1;
  init2.prior_variance = cfg.prior_variance2;
  SarState<typename Kind::Params> state;
  const auto items1 = trainer_detail::labeled_items<Kind>(prob.labeled1, init1);
  const auto items2 = trainer_detail::labeled_items<Kind>(prob.labeled2, init2);
  state.params1 = Kind::fit(items1, std::move(init1), cfg.optimizer1).params;
  state.params2 = Kind::fit(items2, std::move(init2), cfg.optimizer2).params;
  trainer_detail::effective_mapping(prob, state.params1, state.params2);
  run_em(prob, cfg, state, cfg.iterations);
  return state;
}

/// Opinion-pool prediction: agreement projection of the two views, decoded
/// from q1 (argmax for flat, Viterbi for chains; ties to the lowest index).
template <class Kind>
typename Kind::Prediction agree0_predict(const typename Kind::Params& p1, const typename Kind::Params& p2,
                                         const TwoView<typename Kind::Input>& x,
                                         const std::optional<LabelMapping>& mapping,
                                         const DualSolverConfig& dual = {}) {
  const LabelMapping* m = mapping && !mapping->is_identity() ? &*mapping : nullptr;
  if (!m && !(p1.labels == p2.labels)) throw std::invalid_argument("views have different label sets");
  return Kind::decode(Kind::agree(p1, p2, x, m, dual, {}));
}

}  // namespace sar
