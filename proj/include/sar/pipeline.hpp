#pragma once

// Turns parsed corpora into encoded two-view training problems and test sets.
//
// Label sets are sorted label names (or the mapping's fine/coarse sets when a
// mapping is given). Feature dictionaries are built per view from the training
// rows in file order; test-time features missing from a dictionary are dropped.

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sar/corpus.hpp"
#include "sar/eval.hpp"
#include "sar/trainer.hpp"

namespace sar {

struct FlatData {
  LabelSet labels1, labels2;
  FeatureDictionary dict1, dict2;
  SarProblem<FlatKind> problem;
};

struct FlatDataOptions {
  std::optional<LabelMapping> mapping;
  std::optional<std::vector<std::string>> labels;  // overrides the label set of view 1 (no mapping)
};

/// `train` supplies view-1 labels and unlabeled rows. View 2 trains on
/// `train2` (labels in the coarse set) when given, else on `train`'s labeled
/// rows with labels collapsed through the mapping.
inline FlatData prepare_flat(const FlatCorpus& train, const FlatCorpus* train2, const FlatDataOptions& opt = {}) {
  FlatData d;
  if (opt.mapping) {
    d.labels1 = opt.mapping->fine();
    d.labels2 = opt.mapping->coarse();
  } else {
    std::set<std::string> names;
    if (opt.labels) {
      names.insert(opt.labels->begin(), opt.labels->end());
    } else {
      for (const auto& n : train.label_names()) names.insert(n);
      if (train2)
        for (const auto& n : train2->label_names()) names.insert(n);
    }
    d.labels1 = LabelSet(std::vector<std::string>(names.begin(), names.end()));
    d.labels2 = d.labels1;
  }
  d.problem.mapping = opt.mapping;

  auto add_unlabeled = [&](const FlatExample& ex) {
    d.problem.unlabeled.push_back({d.dict1.encode(ex.view1), d.dict2.encode(ex.view2)});
  };
  for (const auto& ex : train.examples) {
    FeatureVector v1 = d.dict1.encode(ex.view1);
    FeatureVector v2 = d.dict2.encode(ex.view2);
    if (!ex.label) {
      d.problem.unlabeled.push_back({std::move(v1), std::move(v2)});
      continue;
    }
    d.problem.labeled1.push_back({std::move(v1), d.labels1.index(*ex.label)});
    if (!train2) {
      const std::string coarse = opt.mapping ? map_label(*opt.mapping, *ex.label) : *ex.label;
      d.problem.labeled2.push_back({std::move(v2), d.labels2.index(coarse)});
    }
  }
  if (train2) {
    for (const auto& ex : train2->examples) {
      if (!ex.label) {
        add_unlabeled(ex);
        continue;
      }
      d.dict1.encode(ex.view1);
      d.problem.labeled2.push_back({d.dict2.encode(ex.view2), d.labels2.index(*ex.label)});
    }
  }
  return d;
}

struct FlatTestSet {
  std::vector<TwoView<FeatureVector>> inputs;
  std::vector<std::size_t> gold;  // indices into the view-1 label set
};

inline FlatTestSet encode_flat_test(const FeatureDictionary& dict1, const FeatureDictionary& dict2,
                                    const LabelSet& labels, const FlatCorpus& test) {
  FlatTestSet t;
  for (const auto& ex : test.examples) {
    if (!ex.label) continue;
    t.inputs.push_back({dict1.encode_known(ex.view1), dict2.encode_known(ex.view2)});
    t.gold.push_back(labels.index(*ex.label));
  }
  return t;
}

struct ChainData {
  LabelSet labels1, labels2;
  FeatureDictionary dict1, dict2;
  ViewTemplate view_template;
  SarProblem<ChainKind> problem;
};

namespace pipeline_detail {

template <class Encode1, class Encode2>
TwoView<ChainExample> encode_sentence(const Sentence& s, const ViewTemplate& tmpl, Encode1&& encode1,
                                      Encode2&& encode2) {
  TwoView<ChainExample> out;
  for (const auto& [content, context] : content_context_views(s, tmpl)) {
    out.view1.positions.push_back(encode1(content));
    out.view2.positions.push_back(encode2(context));
  }
  return out;
}

inline std::vector<std::size_t> tag_indices(const Sentence& s, const LabelSet& labels,
                                            const std::optional<LabelMapping>& collapse) {
  std::vector<std::size_t> out;
  for (const auto& t : s.tokens) out.push_back(labels.index(collapse ? map_label(*collapse, t.tag) : t.tag));
  return out;
}

}  // namespace pipeline_detail

/// Content view (view 1) and context view (view 2) sequence problem. With a
/// mapping, view 1 predicts fine tags and view 2 coarse tags; view 2 trains on
/// `labeled2` when given, else on `labeled` with collapsed tags.
inline ChainData prepare_chain(const SeqCorpus& labeled, const SeqCorpus* labeled2, const SeqCorpus& unlabeled,
                               const ViewTemplate& tmpl, const std::optional<LabelMapping>& mapping = {}) {
  if (!labeled.has_tags) throw DataError("labeled corpus has no tag column");
  ChainData d;
  d.view_template = tmpl;
  if (mapping) {
    d.labels1 = mapping->fine();
    d.labels2 = mapping->coarse();
  } else {
    std::set<std::string> tags;
    for (const SeqCorpus* c : {&labeled, labeled2})
      if (c)
        for (const auto& s : c->sentences)
          for (const auto& t : s.tokens) tags.insert(t.tag);
    d.labels1 = LabelSet(std::vector<std::string>(tags.begin(), tags.end()));
    d.labels2 = d.labels1;
  }
  d.problem.mapping = mapping;
  auto enc1 = [&](const NamedFeatures& f) { return d.dict1.encode(f); };
  auto enc2 = [&](const NamedFeatures& f) { return d.dict2.encode(f); };
  for (const auto& s : labeled.sentences) {
    auto tv = pipeline_detail::encode_sentence(s, tmpl, enc1, enc2);
    tv.view1.gold = pipeline_detail::tag_indices(s, d.labels1, std::nullopt);
    if (!labeled2) {
      tv.view2.gold = pipeline_detail::tag_indices(s, d.labels2, mapping);
      d.problem.labeled2.push_back(std::move(tv.view2));
    }
    d.problem.labeled1.push_back(std::move(tv.view1));
  }
  if (labeled2) {
    if (!labeled2->has_tags) throw DataError("second labeled corpus has no tag column");
    for (const auto& s : labeled2->sentences) {
      auto tv = pipeline_detail::encode_sentence(s, tmpl, enc1, enc2);
      tv.view2.gold = pipeline_detail::tag_indices(s, d.labels2, std::nullopt);
      d.problem.labeled2.push_back(std::move(tv.view2));
    }
  }
  for (const auto& s : unlabeled.sentences)
    d.problem.unlabeled.push_back(pipeline_detail::encode_sentence(s, tmpl, enc1, enc2));
  return d;
}

struct ChainTestSet {
  std::vector<TwoView<ChainExample>> inputs;
  std::vector<std::vector<std::string>> gold_tags;
};

inline ChainTestSet encode_chain_test(const FeatureDictionary& dict1, const FeatureDictionary& dict2,
                                      const ViewTemplate& tmpl, const SeqCorpus& test) {
  ChainTestSet t;
  auto enc1 = [&](const NamedFeatures& f) { return dict1.encode_known(f); };
  auto enc2 = [&](const NamedFeatures& f) { return dict2.encode_known(f); };
  for (const auto& s : test.sentences) {
    t.inputs.push_back(pipeline_detail::encode_sentence(s, tmpl, enc1, enc2));
    std::vector<std::string> tags;
    for (const auto& tok : s.tokens) tags.push_back(tok.tag);
    t.gold_tags.push_back(std::move(tags));
  }
  return t;
}

struct FlatExperiment {
  double view1 = 0.0, view2 = 0.0;  // supervised single-view test accuracy
  double agree0 = 0.0;              // opinion pool of the supervised fits
  double sar = 0.0;                 // agreement decoding of the SAR fits
  SarState<MaxentParams> state;
};

/// Supervised fits, agree0 and SAR on one train/test pair, all scored as
/// view-1 label accuracy on `test`. The views share one label set.
inline FlatExperiment run_flat_experiment(const FlatCorpus& train, const FlatCorpus& test, const SarConfig& cfg) {
  FlatDataOptions opt;
  std::set<std::string> names;
  for (const auto* c : {&train, &test})
    for (const auto& n : c->label_names()) names.insert(n);
  opt.labels = std::vector<std::string>(names.begin(), names.end());
  const FlatData d = prepare_flat(train, nullptr, opt);
  const FlatTestSet t = encode_flat_test(d.dict1, d.dict2, d.labels1, test);
  auto init1 = MaxentParams::zeros(d.labels1, d.dict1.size(), cfg.prior_variance1);
  auto init2 = MaxentParams::zeros(d.labels2, d.dict2.size(), cfg.prior_variance2);

  SarConfig sup = cfg;
  sup.c = 0.0;
  sup.balance = false;
  sup.iterations = 1;
  const auto base = train_sar(d.problem, sup, init1, init2);
  FlatExperiment e;
  e.state = train_sar(d.problem, cfg, init1, init2);

  std::vector<std::size_t> v1, v2, a0, sar;
  for (const auto& x : t.inputs) {
    v1.push_back(predict_label(base.params1, x.view1));
    v2.push_back(predict_label(base.params2, x.view2));
    a0.push_back(agree0_predict<FlatKind>(base.params1, base.params2, x, std::nullopt, cfg.dual));
    sar.push_back(agree0_predict<FlatKind>(e.state.params1, e.state.params2, x, std::nullopt, cfg.dual));
  }
  e.view1 = accuracy(v1, t.gold);
  e.view2 = accuracy(v2, t.gold);
  e.agree0 = accuracy(a0, t.gold);
  e.sar = accuracy(sar, t.gold);
  return e;
}

}  // namespace sar
