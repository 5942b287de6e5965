#pragma once

// Evaluation metrics, report formatting and loss-surface export.

#include <cmath>
#include <cstddef>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "sar/error.hpp"
#include "sar/prob.hpp"
#include "sar/text.hpp"

namespace sar {

/// 100 * correct / total.
template <class T>
double accuracy(std::span<const T> preds, std::span<const T> golds) {
  if (preds.size() != golds.size()) throw std::invalid_argument("prediction/gold length mismatch");
  if (golds.empty()) throw std::invalid_argument("accuracy of an empty set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < golds.size(); ++i) correct += preds[i] == golds[i];
  return 100.0 * static_cast<double>(correct) / static_cast<double>(golds.size());
}

template <class T>
double accuracy(const std::vector<T>& preds, const std::vector<T>& golds) {
  return accuracy(std::span<const T>(preds), std::span<const T>(golds));
}

/// Relative reduction in error, in percent of the baseline error.
inline double rre(double baseline_acc, double new_acc) {
  if (baseline_acc >= 100.0) throw std::invalid_argument("zero baseline error");
  return 100.0 * (new_acc - baseline_acc) / (100.0 - baseline_acc);
}

/// Fixed-point rendering used in reports, e.g. format_percent(9.23, 1) == "9.2".
inline std::string format_percent(double v, int decimals) { return text::format_fixed(v, decimals); }

struct Span {
  std::string type;
  std::size_t begin = 0, end = 0;  // inclusive token range
  friend auto operator<=>(const Span&, const Span&) = default;
};

/// Chunks of a BIO sequence. `I-X` that does not continue an `X` chunk opens
/// a new one. Tags other than O, B-type, I-type are rejected.
inline std::vector<Span> bio_spans(std::span<const std::string> tags) {
  std::vector<Span> spans;
  std::optional<Span> open;
  auto close = [&] {
    if (open) spans.push_back(*open);
    open.reset();
  };
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const std::string& tag = tags[i];
    if (tag == "O") {
      close();
      continue;
    }
    if (tag.size() < 3 || tag[1] != '-' || (tag[0] != 'B' && tag[0] != 'I'))
      throw DataError("malformed BIO tag '" + tag + "'");
    const std::string type = tag.substr(2);
    if (tag[0] == 'I' && open && open->type == type) {
      open->end = i;
      continue;
    }
    close();
    open = Span{type, i, i};
  }
  close();
  return spans;
}

struct ChunkScore {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  std::size_t gold_spans = 0, predicted_spans = 0, matched = 0;
};

/// Exact-match chunk precision/recall/F1 over a set of sentences (percent).
/// Two empty span sets score 100.
inline ChunkScore chunk_f1(const std::vector<std::vector<std::string>>& pred,
                           const std::vector<std::vector<std::string>>& gold) {
  if (pred.size() != gold.size()) throw std::invalid_argument("sentence count mismatch");
  ChunkScore s;
  for (std::size_t k = 0; k < gold.size(); ++k) {
    if (pred[k].size() != gold[k].size()) throw std::invalid_argument("sentence length mismatch");
    const auto ps = bio_spans(pred[k]), gs = bio_spans(gold[k]);
    s.predicted_spans += ps.size();
    s.gold_spans += gs.size();
    for (const auto& p : ps)
      for (const auto& g : gs)
        if (p == g) ++s.matched;
  }
  if (s.gold_spans == 0 && s.predicted_spans == 0) {
    s.precision = s.recall = s.f1 = 100.0;
    return s;
  }
  s.precision = s.predicted_spans ? 100.0 * s.matched / s.predicted_spans : 0.0;
  s.recall = s.gold_spans ? 100.0 * s.matched / s.gold_spans : 0.0;
  s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

inline ChunkScore chunk_f1(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
  return chunk_f1(std::vector<std::vector<std::string>>{pred}, std::vector<std::vector<std::string>>{gold});
}

/// Rows = gold label, columns = predicted label, cells = percent of the row's
/// gold total. Rows for labels that never occur as gold are nullopt.
struct ConfusionMatrix {
  std::vector<std::optional<std::vector<double>>> rows;
  std::vector<std::size_t> gold_counts;
};

inline ConfusionMatrix confusion(std::span<const std::size_t> preds, std::span<const std::size_t> golds,
                                 std::size_t num_labels) {
  if (preds.size() != golds.size()) throw std::invalid_argument("prediction/gold length mismatch");
  if (golds.empty()) throw std::invalid_argument("confusion of an empty set");
  std::vector<std::vector<std::size_t>> counts(num_labels, std::vector<std::size_t>(num_labels, 0));
  ConfusionMatrix cm;
  cm.gold_counts.assign(num_labels, 0);
  for (std::size_t i = 0; i < golds.size(); ++i) {
    if (golds[i] >= num_labels || preds[i] >= num_labels) throw std::invalid_argument("label index out of range");
    ++counts[golds[i]][preds[i]];
    ++cm.gold_counts[golds[i]];
  }
  cm.rows.resize(num_labels);
  for (std::size_t r = 0; r < num_labels; ++r) {
    if (cm.gold_counts[r] == 0) continue;
    std::vector<double> row(num_labels);
    for (std::size_t c = 0; c < num_labels; ++c)
      row[c] = 100.0 * static_cast<double>(counts[r][c]) / static_cast<double>(cm.gold_counts[r]);
    cm.rows[r] = std::move(row);
  }
  return cm;
}

struct ClassScore {
  std::string label;
  std::optional<double> precision, recall;  // nullopt when undefined (no predictions / no gold)
};

struct EvalReport {
  std::vector<std::string> labels;
  double accuracy = 0.0;
  std::vector<ClassScore> per_class;
  ConfusionMatrix confusion;
  std::optional<ChunkScore> chunks;
  std::optional<std::pair<std::string, double>> rre_vs;  // baseline name, RRE
};

inline EvalReport evaluate(std::span<const std::size_t> preds, std::span<const std::size_t> golds,
                           const LabelSet& labels) {
  EvalReport r;
  r.labels = labels.names();
  r.accuracy = accuracy(preds, golds);
  r.confusion = confusion(preds, golds, labels.size());
  for (std::size_t k = 0; k < labels.size(); ++k) {
    std::size_t tp = 0, predicted = 0;
    for (std::size_t i = 0; i < golds.size(); ++i) {
      predicted += preds[i] == k;
      tp += preds[i] == k && golds[i] == k;
    }
    ClassScore cs{labels.name(k), std::nullopt, std::nullopt};
    if (predicted) cs.precision = 100.0 * static_cast<double>(tp) / static_cast<double>(predicted);
    if (r.confusion.gold_counts[k])
      cs.recall = 100.0 * static_cast<double>(tp) / static_cast<double>(r.confusion.gold_counts[k]);
    r.per_class.push_back(std::move(cs));
  }
  return r;
}

/// CSV with sections: `metric,value` rows, then per-class rows
/// `class,<label>,<precision>,<recall>`, then confusion rows
/// `confusion,<gold label>,<pct for each predicted label>`. Undefined values are `n/a`.
inline void write_report_csv(std::ostream& out, const EvalReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? text::format_fixed(*v, 2) : std::string("n/a"); };
  out << "metric,value\n";
  out << "accuracy," << text::format_fixed(r.accuracy, 2) << '\n';
  if (r.chunks) {
    out << "chunk_precision," << text::format_fixed(r.chunks->precision, 2) << '\n';
    out << "chunk_recall," << text::format_fixed(r.chunks->recall, 2) << '\n';
    out << "chunk_f1," << text::format_fixed(r.chunks->f1, 2) << '\n';
  }
  if (r.rre_vs) out << "rre_vs_" << r.rre_vs->first << ',' << text::format_fixed(r.rre_vs->second, 1) << '\n';
  for (const auto& c : r.per_class) out << "class," << c.label << ',' << opt(c.precision) << ',' << opt(c.recall) << '\n';
  out << "confusion,gold\\pred";
  for (const auto& l : r.labels) out << ',' << l;
  out << '\n';
  for (std::size_t k = 0; k < r.labels.size(); ++k) {
    out << "confusion," << r.labels[k];
    for (std::size_t c = 0; c < r.labels.size(); ++c)
      out << ',' << (r.confusion.rows[k] ? text::format_fixed((*r.confusion.rows[k])[c], 1) : std::string("n/a"));
    out << '\n';
  }
}

/// Binary logistic distribution (p(+), p(-)) from a linear score.
inline Categorical binary_logistic(double score) {
  static const LabelSet kBinary(std::vector<std::string>{"+1", "-1"});
  const double lp_pos = -std::log1p(std::exp(-score));
  const double lp_neg = -std::log1p(std::exp(score));
  return log_normalize(kBinary, std::vector<double>{lp_pos, lp_neg});
}

struct SurfacePoint {
  double s1, s2, penalty;
};

/// Bhattacharyya co-regularization penalty between two binary logistic
/// classifiers over the grid s1, s2 in [-range, range] with spacing `step`.
inline std::vector<SurfacePoint> loss_surface(double range, double step) {
  if (!(range > 0.0) || !(step > 0.0)) throw std::invalid_argument("range and step must be positive");
  const auto n = static_cast<long>(std::floor(2.0 * range / step + 1e-9));
  std::vector<SurfacePoint> pts;
  for (long i = 0; i <= n; ++i)
    for (long j = 0; j <= n; ++j) {
      const double s1 = -range + static_cast<double>(i) * step;
      const double s2 = -range + static_cast<double>(j) * step;
      pts.push_back({s1, s2, bhattacharyya(binary_logistic(s1), binary_logistic(s2))});
    }
  return pts;
}

inline void write_loss_surface_csv(std::ostream& out, const std::vector<SurfacePoint>& pts) {
  out << "s1,s2,penalty\n";
  for (const auto& p : pts)
    out << text::format_double(p.s1) << ',' << text::format_double(p.s2) << ',' << text::format_double(p.penalty)
        << '\n';
}

}  // namespace sar
