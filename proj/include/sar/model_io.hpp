#pragma once

// Text serialization of view models, feature dictionaries and objective traces.
//
// Maxent model (version 1):
//   sar-maxent<TAB>1<TAB>K<TAB>F<TAB>sigma2
//   labels<TAB>name_0<TAB>...<TAB>name_{K-1}
//   label<TAB>feature_id<TAB>weight            one line per nonzero weight
// CRF model (version 1): the same with a `sar-crf` header, followed by
//   transitions
//   from_label<TAB>to_label<TAB>weight         one line per nonzero weight
// Weights use the shortest decimal form that round-trips exactly.

#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "sar/crf.hpp"
#include "sar/error.hpp"
#include "sar/features.hpp"
#include "sar/maxent.hpp"
#include "sar/text.hpp"
#include "sar/trainer.hpp"

namespace sar {

namespace model_io_detail {

inline void write_header(std::ostream& out, const char* kind, const LabelSet& labels, std::size_t F, double var) {
  out << kind << "\t1\t" << labels.size() << '\t' << F << '\t' << text::format_double(var) << '\n';
  out << "labels";
  for (const auto& n : labels.names()) out << '\t' << n;
  out << '\n';
}

inline void write_matrix(std::ostream& out, const LabelSet& labels, std::span<const double> m, std::size_t cols,
                         bool col_is_label) {
  for (std::size_t r = 0; r < labels.size(); ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const double w = m[r * cols + c];
      if (w == 0.0 && !std::signbit(w)) continue;
      out << labels.name(r) << '\t' << (col_is_label ? labels.name(c) : std::to_string(c)) << '\t'
          << text::format_double(w) << '\n';
    }
}

struct Reader {
  explicit Reader(std::istream& s) : in(s) {}
  std::istream& in;
  std::size_t lineno = 0;
  std::string line;

  bool next() {
    if (!std::getline(in, line)) return false;
    ++lineno;
    return true;
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw DataError("model line " + std::to_string(lineno) + ": " + what);
  }
  std::vector<std::string_view> fields() const { return text::split(line, '\t'); }
};

struct Header {
  LabelSet labels;
  std::size_t num_features = 0;
  double prior_variance = 1.0;
};

inline Header read_header(Reader& r, const char* kind) {
  if (!r.next()) r.fail("empty model file");
  auto f = r.fields();
  if (f.size() != 5 || f[0] != kind) r.fail(std::string("expected '") + kind + "' header");
  if (f[1] != "1") r.fail("unsupported model version " + std::string(f[1]));
  auto k = text::parse_int<std::size_t>(f[2]);
  auto F = text::parse_int<std::size_t>(f[3]);
  auto var = text::parse_double(f[4]);
  if (!k || !F || !var || *F < 1 || !(*var > 0.0)) r.fail("bad header values");
  if (!r.next()) r.fail("missing labels line");
  f = r.fields();
  if (f.empty() || f[0] != "labels" || f.size() != *k + 1) r.fail("bad labels line");
  std::vector<std::string> names;
  for (std::size_t i = 1; i < f.size(); ++i) names.emplace_back(f[i]);
  return {LabelSet(std::move(names)), *F, *var};
}

inline double parse_weight(Reader& r, std::string_view s) {
  auto w = text::parse_double(s);
  if (!w || !std::isfinite(*w)) r.fail("bad weight");
  return *w;
}

// Reads `label<TAB>feature<TAB>weight` lines until EOF or `stop`.
inline void read_emissions(Reader& r, const Header& h, std::vector<double>& emission, const char* stop) {
  while (r.next()) {
    if (r.line.empty()) continue;
    if (stop && r.line == stop) return;
    auto f = r.fields();
    if (f.size() != 3) r.fail("expected label<TAB>feature_id<TAB>weight");
    if (!h.labels.contains(std::string(f[0]))) r.fail("unknown label");
    auto fid = text::parse_int<std::size_t>(f[1]);
    if (!fid || *fid >= h.num_features) r.fail("feature id out of range");
    emission[h.labels.index(std::string(f[0])) * h.num_features + *fid] = parse_weight(r, f[2]);
  }
  if (stop) r.fail(std::string("missing '") + stop + "' section");
}

}  // namespace model_io_detail

inline void write_maxent(std::ostream& out, const MaxentParams& p) {
  model_io_detail::write_header(out, "sar-maxent", p.labels, p.num_features, p.prior_variance);
  model_io_detail::write_matrix(out, p.labels, p.weights, p.num_features, false);
}

inline MaxentParams read_maxent(std::istream& in) {
  model_io_detail::Reader r(in);
  const auto h = model_io_detail::read_header(r, "sar-maxent");
  MaxentParams p = MaxentParams::zeros(h.labels, h.num_features - 1, h.prior_variance);
  model_io_detail::read_emissions(r, h, p.weights, nullptr);
  return p;
}

inline void write_crf(std::ostream& out, const CrfParams& p) {
  model_io_detail::write_header(out, "sar-crf", p.labels, p.num_features, p.prior_variance);
  model_io_detail::write_matrix(out, p.labels, p.emission, p.num_features, false);
  out << "transitions\n";
  model_io_detail::write_matrix(out, p.labels, p.transition, p.num_labels(), true);
}

inline CrfParams read_crf(std::istream& in) {
  model_io_detail::Reader r(in);
  const auto h = model_io_detail::read_header(r, "sar-crf");
  CrfParams p = CrfParams::zeros(h.labels, h.num_features - 1, h.prior_variance);
  model_io_detail::read_emissions(r, h, p.emission, "transitions");
  const std::size_t K = p.num_labels();
  while (r.next()) {
    if (r.line.empty()) continue;
    auto f = r.fields();
    if (f.size() != 3) r.fail("expected from<TAB>to<TAB>weight");
    const std::string from(f[0]), to(f[1]);
    if (!h.labels.contains(from) || !h.labels.contains(to)) r.fail("unknown label");
    p.transition[h.labels.index(from) * K + h.labels.index(to)] = model_io_detail::parse_weight(r, f[2]);
  }
  return p;
}

/// One feature name per line, in id order.
inline void write_dictionary(std::ostream& out, const FeatureDictionary& d) {
  for (const auto& n : d.names()) out << n << '\n';
}

inline FeatureDictionary read_dictionary(std::istream& in) {
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) names.push_back(line);
  return FeatureDictionary(std::move(names));
}

/// iteration,L1,L2,klterm,total
inline void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& trace) {
  out << "iteration,L1,L2,klterm,total\n";
  for (const auto& row : trace)
    out << row.iteration << ',' << text::format_double(row.l1) << ',' << text::format_double(row.l2) << ','
        << text::format_double(row.kl_term) << ',' << text::format_double(row.total) << '\n';
}

inline std::vector<TraceRow> read_trace_csv(std::istream& in) {
  std::vector<TraceRow> rows;
  std::string line;
  if (!std::getline(in, line) || line != "iteration,L1,L2,klterm,total") throw DataError("bad trace header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = text::split(line, ',');
    if (f.size() != 5) throw DataError("bad trace row '" + line + "'");
    auto it = text::parse_int<int>(f[0]);
    auto a = text::parse_double(f[1]), b = text::parse_double(f[2]), c = text::parse_double(f[3]),
         d = text::parse_double(f[4]);
    if (!it || !a || !b || !c || !d) throw DataError("bad trace row '" + line + "'");
    rows.push_back({*it, *a, *b, *c, *d});
  }
  return rows;
}

template <class Writer, class T>
void save_file(const std::string& path, Writer&& write, const T& value) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  write(out, value);
  if (!out) throw DataError("write to '" + path + "' failed");
}

template <class Reader>
auto load_file(const std::string& path, Reader&& read) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  return read(in);
}

}  // namespace sar
