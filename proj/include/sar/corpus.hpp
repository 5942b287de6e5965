#pragma once

// Corpus formats and view construction.
//
// Flat format, one example per line:
//   label<TAB>view1 features<TAB>view2 features
// Features are space separated `name:value`; a bare `name` means value 1.
// The label `?` marks an unlabeled example. The value is whatever follows the
// last ':' in the token, so names may themselves contain ':'.
//
// CoNLL format: whitespace separated columns, one token per line, blank
// lines between sentences.
//
// Label mapping files: lines `fine<TAB>coarse`.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iosfwd>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "sar/agreement.hpp"
#include "sar/error.hpp"
#include "sar/features.hpp"
#include "sar/text.hpp"

namespace sar {

struct FlatExample {
  std::optional<std::string> label;  // nullopt = unlabeled
  NamedFeatures view1, view2;

  friend bool operator==(const FlatExample&, const FlatExample&) = default;
};

struct FlatCorpus {
  std::vector<FlatExample> examples;

  std::size_t num_labeled() const {
    return static_cast<std::size_t>(std::count_if(examples.begin(), examples.end(),
                                                  [](const FlatExample& e) { return e.label.has_value(); }));
  }
  std::size_t num_unlabeled() const { return examples.size() - num_labeled(); }

  /// Distinct labels of the labeled examples, sorted.
  std::vector<std::string> label_names() const {
    std::set<std::string> s;
    for (const auto& e : examples)
      if (e.label) s.insert(*e.label);
    return {s.begin(), s.end()};
  }
};

namespace corpus_detail {

inline DataError line_error(std::size_t line, const std::string& what) {
  return DataError("line " + std::to_string(line) + ": " + what);
}

inline NamedFeatures parse_features(std::string_view field, std::size_t line) {
  NamedFeatures out;
  std::unordered_set<std::string_view> seen;
  for (std::string_view tok : text::split(field, ' ')) {
    if (tok.empty()) continue;
    std::string_view name = tok;
    double value = 1.0;
    if (auto colon = tok.rfind(':'); colon != std::string_view::npos) {
      name = tok.substr(0, colon);
      auto v = text::parse_double(tok.substr(colon + 1));
      if (!v || !std::isfinite(*v))
        throw line_error(line, "bad feature value in '" + std::string(tok) + "'");
      value = *v;
    }
    if (name.empty()) throw line_error(line, "empty feature name in '" + std::string(tok) + "'");
    if (!seen.insert(name).second) throw line_error(line, "duplicate feature '" + std::string(name) + "'");
    out.emplace_back(std::string(name), value);
  }
  return out;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  return in;
}

}  // namespace corpus_detail

inline FlatCorpus parse_flat(std::istream& in) {
  FlatCorpus corpus;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = text::split(line, '\t');
    if (fields.size() != 3)
      throw corpus_detail::line_error(lineno, "expected 3 tab-separated fields, found " +
                                                  std::to_string(fields.size()));
    if (fields[0].empty()) throw corpus_detail::line_error(lineno, "empty label");
    FlatExample ex;
    if (fields[0] != "?") ex.label = std::string(fields[0]);
    ex.view1 = corpus_detail::parse_features(fields[1], lineno);
    ex.view2 = corpus_detail::parse_features(fields[2], lineno);
    corpus.examples.push_back(std::move(ex));
  }
  return corpus;
}

inline FlatCorpus parse_flat(const std::string& path) {
  auto in = corpus_detail::open_input(path);
  return parse_flat(in);
}

inline void write_features(std::ostream& out, const NamedFeatures& feats) {
  for (std::size_t i = 0; i < feats.size(); ++i) {
    if (i) out << ' ';
    out << feats[i].first;
    if (feats[i].second != 1.0 || feats[i].first.find(':') != std::string::npos)
      out << ':' << text::format_double(feats[i].second);
  }
}

/// Canonical writer: parse_flat(write_flat(c)) == c.
inline void write_flat(std::ostream& out, const FlatCorpus& corpus) {
  for (const auto& ex : corpus.examples) {
    out << (ex.label ? *ex.label : "?") << '\t';
    write_features(out, ex.view1);
    out << '\t';
    write_features(out, ex.view2);
    out << '\n';
  }
}

struct Token {
  std::string word, pos, tag;
};

struct Sentence {
  std::vector<Token> tokens;
};

struct SeqCorpus {
  std::vector<Sentence> sentences;
  bool has_tags = false;
};

/// Zero-based column indices. A missing tag column (file narrower than
/// `tag + 1`) yields an untagged corpus.
struct ColumnSpec {
  std::size_t word = 0;
  std::size_t pos = 1;
  std::optional<std::size_t> tag = 2;
};

inline SeqCorpus parse_conll(std::istream& in, const ColumnSpec& spec = {}) {
  SeqCorpus corpus;
  std::string line;
  std::size_t lineno = 0;
  std::optional<std::size_t> ncols;
  Sentence current;
  auto flush = [&] {
    if (!current.tokens.empty()) corpus.sentences.push_back(std::move(current));
    current = Sentence{};
  };
  while (std::getline(in, line)) {
    ++lineno;
    const auto cols = text::split_ws(text::trim(line));
    if (cols.empty()) {
      flush();
      continue;
    }
    if (!ncols) {
      ncols = cols.size();
      if (std::max(spec.word, spec.pos) >= *ncols)
        throw corpus_detail::line_error(lineno, "too few columns for word/POS");
      corpus.has_tags = spec.tag && *spec.tag < *ncols;
    } else if (cols.size() != *ncols) {
      throw corpus_detail::line_error(lineno, "ragged columns: expected " + std::to_string(*ncols) + ", found " +
                                                  std::to_string(cols.size()));
    }
    Token tok{std::string(cols[spec.word]), std::string(cols[spec.pos]), {}};
    if (corpus.has_tags) tok.tag = std::string(cols[*spec.tag]);
    current.tokens.push_back(std::move(tok));
  }
  flush();
  return corpus;
}

inline SeqCorpus parse_conll(const std::string& path, const ColumnSpec& spec = {}) {
  auto in = corpus_detail::open_input(path);
  return parse_conll(in, spec);
}

inline void write_conll(std::ostream& out, const SeqCorpus& corpus) {
  for (const auto& s : corpus.sentences) {
    for (const auto& t : s.tokens) {
      out << t.word << ' ' << t.pos;
      if (corpus.has_tags) out << ' ' << t.tag;
      out << '\n';
    }
    out << '\n';
  }
}

struct ViewTemplate {
  std::size_t window = 1;
  bool char_ngrams = false;  // character 3-grams of the current word in the content view
};

/// Content view (current word and POS, optionally character 3-grams) and
/// context view (words and POS at offsets +-1..window) for every token.
/// Positions outside the sentence emit a single `BOS-k` / `EOS+k` feature.
inline std::vector<std::pair<NamedFeatures, NamedFeatures>> content_context_views(const Sentence& s,
                                                                                  const ViewTemplate& tmpl) {
  if (tmpl.window < 1) throw std::invalid_argument("context window must be at least 1");
  const auto n = static_cast<long>(s.tokens.size());
  std::vector<std::pair<NamedFeatures, NamedFeatures>> out(s.tokens.size());
  for (long t = 0; t < n; ++t) {
    const Token& tok = s.tokens[static_cast<std::size_t>(t)];
    auto& [content, context] = out[static_cast<std::size_t>(t)];
    content.emplace_back("w=" + tok.word, 1.0);
    content.emplace_back("p=" + tok.pos, 1.0);
    if (tmpl.char_ngrams) {
      const std::string padded = "^" + tok.word + "$";
      std::set<std::string> grams;
      for (std::size_t i = 0; i + 3 <= padded.size(); ++i) grams.insert(padded.substr(i, 3));
      for (const auto& g : grams) content.emplace_back("c3=" + g, 1.0);
    }
    for (long k = 1; k <= static_cast<long>(tmpl.window); ++k) {
      for (long sign : {-1L, 1L}) {
        const long u = t + sign * k;
        const std::string off = (sign < 0 ? "-" : "+") + std::to_string(k);
        if (u < 0) {
          context.emplace_back("BOS" + off, 1.0);
        } else if (u >= n) {
          context.emplace_back("EOS" + off, 1.0);
        } else {
          const Token& other = s.tokens[static_cast<std::size_t>(u)];
          context.emplace_back("w" + off + "=" + other.word, 1.0);
          context.emplace_back("p" + off + "=" + other.pos, 1.0);
        }
      }
    }
  }
  return out;
}

namespace corpus_detail {
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace corpus_detail

/// Which view a feature goes to under a random split: a seeded fair coin
/// that depends only on (seed, feature name).
inline int split_view_of(std::string_view feature, std::uint64_t seed) {
  return (corpus_detail::splitmix64(corpus_detail::fnv1a(feature) ^ corpus_detail::splitmix64(seed)) >> 63) ? 2 : 1;
}

/// Pools each example's features (view1 then view2) and redistributes them
/// between the two views by `split_view_of`.
inline FlatCorpus random_feature_split(const FlatCorpus& corpus, std::uint64_t seed) {
  FlatCorpus out;
  out.examples.reserve(corpus.examples.size());
  for (const auto& ex : corpus.examples) {
    FlatExample split{ex.label, {}, {}};
    std::unordered_set<std::string> seen;
    for (const NamedFeatures* src : {&ex.view1, &ex.view2}) {
      for (const auto& f : *src) {
        if (!seen.insert(f.first).second) throw DataError("feature '" + f.first + "' appears in both views");
        (split_view_of(f.first, seed) == 1 ? split.view1 : split.view2).push_back(f);
      }
    }
    out.examples.push_back(std::move(split));
  }
  return out;
}

inline LabelMapping parse_label_mapping(std::istream& in) {
  std::map<std::string, std::string> pairs;
  std::set<std::string> coarse;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    const auto f = text::split(std::string_view(line), '\t');
    if (f.size() != 2 || f[0].empty() || f[1].empty())
      throw corpus_detail::line_error(lineno, "expected 'fine<TAB>coarse'");
    const std::string fine(text::trim(f[0])), c(text::trim(f[1]));
    if (!pairs.emplace(fine, c).second) throw corpus_detail::line_error(lineno, "fine label '" + fine + "' mapped twice");
    coarse.insert(c);
  }
  if (pairs.empty()) throw DataError("label mapping is empty");
  std::vector<std::string> fine_names;
  for (const auto& [f, c] : pairs) fine_names.push_back(f);
  LabelSet fine(fine_names), coarse_set(std::vector<std::string>(coarse.begin(), coarse.end()));
  std::vector<std::size_t> table;
  for (const auto& [f, c] : pairs) table.push_back(coarse_set.index(c));
  return LabelMapping(std::move(fine), std::move(coarse_set), std::move(table));
}

inline LabelMapping parse_label_mapping(const std::string& path) {
  auto in = corpus_detail::open_input(path);
  return parse_label_mapping(in);
}

inline void write_label_mapping(std::ostream& out, const LabelMapping& m) {
  for (std::size_t y = 0; y < m.fine().size(); ++y) out << m.fine().name(y) << '\t' << m.coarse().name(m(y)) << '\n';
}

inline std::string map_label(const LabelMapping& m, const std::string& label) {
  if (!m.fine().contains(label)) throw DataError("label '" + label + "' is not covered by the mapping");
  return m.coarse().name(m(m.fine().index(label)));
}

/// Rewrites labels through the mapping; features are untouched. Not invertible
/// unless the mapping is injective.
inline FlatCorpus collapse_labels(FlatCorpus corpus, const LabelMapping& m) {
  for (auto& ex : corpus.examples)
    if (ex.label) ex.label = map_label(m, *ex.label);
  return corpus;
}

inline SeqCorpus collapse_labels(SeqCorpus corpus, const LabelMapping& m) {
  if (!corpus.has_tags) return corpus;
  for (auto& s : corpus.sentences)
    for (auto& t : s.tokens) t.tag = map_label(m, t.tag);
  return corpus;
}

}  // namespace sar
