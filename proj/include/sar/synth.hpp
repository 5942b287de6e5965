#pragma once

// Synthetic two-view corpora. Each view is conditionally independent of the
// other given the class: for every example and view, a "source" class is the
// true class with probability 1 - noise and a uniformly chosen wrong class
// otherwise; the view then emits a bag of features, each drawn from the
// source class's block of indicative features with probability `signal` and
// uniformly from the whole view vocabulary otherwise.

#include <cstdint>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "sar/corpus.hpp"

namespace sar {

struct SynthConfig {
  std::size_t num_labels = 4;
  std::size_t features_per_view = 200;
  std::size_t active_features = 8;  // draws per view per example
  double signal = 0.5;
  double noise1 = 0.2;
  double noise2 = 0.2;
  std::size_t labeled = 20;
  std::size_t unlabeled = 500;
  std::size_t test = 1000;
};

struct SynthCorpus {
  FlatCorpus train;                            // labeled rows, then unlabeled rows
  FlatCorpus test;                             // all labeled
  std::vector<std::string> unlabeled_truth;    // hidden labels of the unlabeled rows
};

/// Portable draws from mt19937_64 (the standard distributions are not
/// reproducible across library implementations).
class SynthRng {
 public:
  explicit SynthRng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  std::size_t below(std::size_t n) {
    // Lemire-style rejection keeps the draw unbiased.
    const std::uint64_t bound = n;
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
    std::uint64_t x;
    do x = engine_();
    while (x >= limit);
    return static_cast<std::size_t>(x % bound);
  }

 private:
  std::mt19937_64 engine_;
};

inline std::string synth_label_name(std::size_t k) { return "c" + std::to_string(k); }

namespace synth_detail {

inline NamedFeatures emit_view(SynthRng& rng, const SynthConfig& cfg, std::size_t source, const char* prefix) {
  const std::size_t block = cfg.features_per_view / cfg.num_labels;
  std::set<std::size_t> ids;
  for (std::size_t d = 0; d < cfg.active_features; ++d) {
    if (rng.uniform() < cfg.signal)
      ids.insert(source * block + rng.below(block));
    else
      ids.insert(rng.below(cfg.features_per_view));
  }
  NamedFeatures out;
  for (std::size_t id : ids) out.emplace_back(prefix + std::to_string(id), 1.0);
  return out;
}

inline std::size_t source_class(SynthRng& rng, const SynthConfig& cfg, std::size_t y, double noise) {
  if (rng.uniform() >= noise) return y;
  const std::size_t other = rng.below(cfg.num_labels - 1);
  return other >= y ? other + 1 : other;
}

inline FlatExample draw(SynthRng& rng, const SynthConfig& cfg, std::size_t& y) {
  y = rng.below(cfg.num_labels);
  FlatExample ex;
  ex.label = synth_label_name(y);
  ex.view1 = emit_view(rng, cfg, source_class(rng, cfg, y, cfg.noise1), "a");
  ex.view2 = emit_view(rng, cfg, source_class(rng, cfg, y, cfg.noise2), "b");
  return ex;
}

}  // namespace synth_detail

inline SynthCorpus synth_two_view(const SynthConfig& cfg, std::uint64_t seed) {
  if (cfg.num_labels < 2) throw std::invalid_argument("need at least two labels");
  if (cfg.features_per_view < cfg.num_labels) throw std::invalid_argument("need at least one feature per class");
  for (double r : {cfg.noise1, cfg.noise2, cfg.signal})
    if (r < 0.0 || r > 1.0) throw std::invalid_argument("rates must lie in [0, 1]");
  SynthRng rng(seed);
  SynthCorpus out;
  std::size_t y = 0;
  for (std::size_t i = 0; i < cfg.labeled; ++i) out.train.examples.push_back(synth_detail::draw(rng, cfg, y));
  for (std::size_t i = 0; i < cfg.unlabeled; ++i) {
    FlatExample ex = synth_detail::draw(rng, cfg, y);
    out.unlabeled_truth.push_back(*ex.label);
    ex.label.reset();
    out.train.examples.push_back(std::move(ex));
  }
  for (std::size_t i = 0; i < cfg.test; ++i) out.test.examples.push_back(synth_detail::draw(rng, cfg, y));
  return out;
}

}  // namespace sar
