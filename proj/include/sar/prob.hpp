#pragma once

// Log-domain categorical distributions and the divergences built on them.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sar/error.hpp"

namespace sar {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Numerically stable log(sum(exp(v))). Returns -inf for an empty or all -inf input.
inline double logsumexp(std::span<const double> v) {
  double mx = kNegInf;
  for (double x : v) mx = std::max(mx, x);
  if (mx == kNegInf) return kNegInf;
  if (mx == kInf) return kInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

inline double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

/// An ordered set of distinct label names. Copies share one immutable table.
class LabelSet {
 public:
  LabelSet() : impl_(std::make_shared<Impl>()) {}

  explicit LabelSet(std::vector<std::string> names) {
    auto impl = std::make_shared<Impl>();
    impl->names = std::move(names);
    for (std::size_t i = 0; i < impl->names.size(); ++i) {
      auto [it, inserted] = impl->index.emplace(impl->names[i], i);
      if (!inserted) throw std::invalid_argument("duplicate label '" + impl->names[i] + "'");
    }
    impl_ = std::move(impl);
  }

  /// Labels named "0", "1", ..., "k-1".
  static LabelSet numbered(std::size_t k) {
    std::vector<std::string> names;
    names.reserve(k);
    for (std::size_t i = 0; i < k; ++i) names.push_back(std::to_string(i));
    return LabelSet(std::move(names));
  }

  std::size_t size() const { return impl_->names.size(); }
  const std::string& name(std::size_t i) const { return impl_->names.at(i); }
  const std::vector<std::string>& names() const { return impl_->names; }

  std::size_t index(const std::string& name) const {
    auto it = impl_->index.find(name);
    if (it == impl_->index.end()) throw DataError("unknown label '" + name + "'");
    return it->second;
  }
  bool contains(const std::string& name) const { return impl_->index.count(name) != 0; }

  friend bool operator==(const LabelSet& a, const LabelSet& b) {
    return a.impl_ == b.impl_ || a.impl_->names == b.impl_->names;
  }

 private:
  struct Impl {
    std::vector<std::string> names;
    std::unordered_map<std::string, std::size_t> index;
  };
  std::shared_ptr<const Impl> impl_;
};

/// A normalized distribution over a LabelSet, stored as natural-log
/// probabilities. -inf entries are legal and denote zero probability.
class Categorical {
 public:
  Categorical() = default;

  /// Wraps already-normalized log probabilities; throws if they do not sum
  /// to one within 1e-9 or contain positive/NaN entries.
  Categorical(LabelSet labels, std::vector<double> log_probs)
      : labels_(std::move(labels)), log_probs_(std::move(log_probs)) {
    if (log_probs_.size() != labels_.size())
      throw std::invalid_argument("log_probs size does not match label set");
    for (double lp : log_probs_)
      if (std::isnan(lp) || lp > 1e-12)
        throw std::invalid_argument("log probability must be <= 0");
    if (std::abs(logsumexp(log_probs_)) > 1e-9)
      throw std::invalid_argument("log probabilities are not normalized");
  }

  const LabelSet& labels() const { return labels_; }
  std::span<const double> log_probs() const { return log_probs_; }
  double log_prob(std::size_t i) const { return log_probs_.at(i); }
  double prob(std::size_t i) const { return std::exp(log_probs_.at(i)); }
  std::size_t size() const { return log_probs_.size(); }

  std::vector<double> probs() const {
    std::vector<double> p(log_probs_.size());
    std::transform(log_probs_.begin(), log_probs_.end(), p.begin(),
                   [](double lp) { return std::exp(lp); });
    return p;
  }

  /// Most probable label; ties go to the lowest index.
  std::size_t argmax() const {
    return static_cast<std::size_t>(
        std::max_element(log_probs_.begin(), log_probs_.end()) - log_probs_.begin());
  }

 private:
  LabelSet labels_;
  std::vector<double> log_probs_;
};

/// log_weights - logsumexp(log_weights), as a plain vector.
inline std::vector<double> log_normalized(std::span<const double> log_weights) {
  for (double w : log_weights)
    if (std::isnan(w) || w == kInf) throw std::invalid_argument("weight vector contains NaN or +inf");
  const double z = logsumexp(log_weights);
  if (z == kNegInf) throw NumericalError("degenerate weight vector");
  std::vector<double> out(log_weights.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = log_weights[i] - z;
  return out;
}

inline Categorical log_normalize(const LabelSet& labels, std::span<const double> log_weights) {
  return Categorical(labels, log_normalized(log_weights));
}

/// Normalizes over an anonymous label set "0".."K-1".
inline Categorical log_normalize(std::span<const double> log_weights) {
  return log_normalize(LabelSet::numbered(log_weights.size()), log_weights);
}

namespace detail {
inline void require_same_labels(const Categorical& a, const Categorical& b) {
  if (!(a.labels() == b.labels()))
    throw std::invalid_argument("distributions are over different label sets");
}
}  // namespace detail

/// -log sum_y sqrt(p1(y) p2(y)). +inf when the supports are disjoint.
inline double bhattacharyya(const Categorical& p1, const Categorical& p2) {
  detail::require_same_labels(p1, p2);
  std::vector<double> half(p1.size());
  for (std::size_t y = 0; y < half.size(); ++y)
    half[y] = 0.5 * (p1.log_prob(y) + p2.log_prob(y));
  const double b = -logsumexp(half);
  // Rounding can leave a value of order -1e-16 for identical inputs.
  return b <= 0.0 ? 0.0 : b;
}

/// KL(q || p) with 0 log 0 = 0; +inf when q puts mass where p has none.
inline double kl_divergence(const Categorical& q, const Categorical& p) {
  detail::require_same_labels(q, p);
  double kl = 0.0;
  for (std::size_t y = 0; y < q.size(); ++y) {
    const double lq = q.log_prob(y);
    if (lq == kNegInf) continue;
    const double lp = p.log_prob(y);
    if (lp == kNegInf) return kInf;
    kl += std::exp(lq) * (lq - lp);
  }
  return kl < 0.0 ? 0.0 : kl;
}

}  // namespace sar
