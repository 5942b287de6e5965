#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sar/error.hpp"

namespace sar {

using FeatureId = std::uint32_t;

/// Sparse real-valued feature vector, entries sorted by id.
class FeatureVector {
 public:
  using Entry = std::pair<FeatureId, double>;

  FeatureVector() = default;

  /// Throws on duplicate ids or non-finite values.
  explicit FeatureVector(std::vector<Entry> entries) : entries_(std::move(entries)) {
    std::sort(entries_.begin(), entries_.end(),
              [](const Entry& a, const Entry& b) { return a.first < b.first; });
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (!std::isfinite(entries_[i].second))
        throw std::invalid_argument("feature value is not finite");
      if (i > 0 && entries_[i].first == entries_[i - 1].first)
        throw std::invalid_argument("duplicate feature id " + std::to_string(entries_[i].first));
    }
  }

  FeatureVector(std::initializer_list<Entry> entries)
      : FeatureVector(std::vector<Entry>(entries)) {}

  explicit FeatureVector(const std::map<FeatureId, double>& m)
      : entries_(m.begin(), m.end()) {
    for (const auto& [id, v] : entries_)
      if (!std::isfinite(v)) throw std::invalid_argument("feature value is not finite");
  }

  const std::vector<Entry>& entries() const { return entries_; }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  /// One past the largest id, or 0 when empty.
  FeatureId span() const { return entries_.empty() ? 0 : entries_.back().first + 1; }

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;

 private:
  std::vector<Entry> entries_;
};

/// Named features as they appear in corpora, before interning.
using NamedFeatures = std::vector<std::pair<std::string, double>>;

/// Interns feature strings to dense ids in first-seen order.
class FeatureDictionary {
 public:
  FeatureDictionary() = default;
  explicit FeatureDictionary(std::vector<std::string> names) : names_(std::move(names)) {
    for (std::size_t i = 0; i < names_.size(); ++i) {
      if (!ids_.emplace(names_[i], static_cast<FeatureId>(i)).second)
        throw DataError("duplicate feature name '" + names_[i] + "' in dictionary");
    }
  }

  FeatureId intern(const std::string& name) {
    auto [it, inserted] = ids_.emplace(name, static_cast<FeatureId>(names_.size()));
    if (inserted) names_.push_back(name);
    return it->second;
  }

  std::optional<FeatureId> find(const std::string& name) const {
    auto it = ids_.find(name);
    if (it == ids_.end()) return std::nullopt;
    return it->second;
  }

  /// Interns every name (growing the dictionary).
  FeatureVector encode(const NamedFeatures& feats) {
    std::vector<FeatureVector::Entry> out;
    out.reserve(feats.size());
    for (const auto& [name, v] : feats) out.emplace_back(intern(name), v);
    return FeatureVector(std::move(out));
  }

  /// Looks names up without growing; unknown features are dropped.
  FeatureVector encode_known(const NamedFeatures& feats) const {
    std::vector<FeatureVector::Entry> out;
    out.reserve(feats.size());
    for (const auto& [name, v] : feats)
      if (auto id = find(name)) out.emplace_back(*id, v);
    return FeatureVector(std::move(out));
  }

  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, FeatureId> ids_;
};

}  // namespace sar
