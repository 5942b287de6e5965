// sar: train and evaluate two-view agreement-regularized models.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "sar/sar.hpp"

using namespace sar;
namespace fs = std::filesystem;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

const char* kSchemas = R"(File formats and CSV schemas:
  flat corpus     label<TAB>view-1 features<TAB>view-2 features; features are
                  space separated name:value (bare name = 1); label ? = unlabeled
  CoNLL corpus    word POS [tag] per line, blank line between sentences
  label mapping   fine<TAB>coarse per line
  model dir       view1.model view2.model view1.features view2.features
                  trace.csv meta.txt [mapping.tsv]
  trace.csv       iteration,L1,L2,klterm,total
  report CSV      metric,value rows (accuracy; chunk_precision, chunk_recall,
                  chunk_f1 for sequences; rre_vs_<name> when a baseline is
                  given), then class,<label>,<precision>,<recall> rows, then
                  confusion,gold\pred,<labels...> and one
                  confusion,<gold label>,<row percentages...> row per label
                  (n/a where undefined)
  loss surface    s1,s2,penalty
Exit status: 0 success, 1 usage error, 2 data error, 3 numerical failure.
SAR_THREADS sets the worker count for the agreement step (default 1).
)";

struct TrainOptions {
  std::string task = "flat";
  std::string train, train2, unlabeled, mapping, out;
  std::size_t window = 1;
  bool char_ngrams = false;
  double prior_variance1 = 1.0, prior_variance2 = 1.0;
  double c = 1.0;
  bool balance = false;
  int iterations = 10;
  bool early_stop = false;
  int dual_max_iterations = 200;
  double dual_tolerance = 1e-6;
  double grad_tolerance = 1e-5;
  int max_lbfgs_iterations = 500;
  std::uint64_t seed = 0;
};

struct EvalOptions {
  std::string model, test, report, view = "agree", baseline;
  std::optional<double> baseline_score;
};

unsigned env_threads() {
  const char* s = std::getenv("SAR_THREADS");
  if (!s || !*s) return 1;
  const auto v = text::parse_int<int>(s);
  if (!v || *v < 1) throw UsageError("SAR_THREADS must be a positive integer");
  return static_cast<unsigned>(*v);
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  return out;
}

// Runs `write` against the named file, or stdout when the name is empty.
template <class Fn>
void with_output(const std::string& path, Fn&& write) {
  if (path.empty()) {
    write(std::cout);
    return;
  }
  auto out = open_output(path);
  write(out);
}

SarConfig sar_config(const TrainOptions& o) {
  SarConfig cfg;
  cfg.c = o.c;
  cfg.balance = o.balance;
  cfg.iterations = o.iterations;
  cfg.prior_variance1 = o.prior_variance1;
  cfg.prior_variance2 = o.prior_variance2;
  cfg.optimizer1.grad_tolerance = cfg.optimizer2.grad_tolerance = o.grad_tolerance;
  cfg.optimizer1.max_iterations = cfg.optimizer2.max_iterations = o.max_lbfgs_iterations;
  cfg.dual.max_iterations = o.dual_max_iterations;
  cfg.dual.tolerance = o.dual_tolerance;
  cfg.seed = o.seed;
  cfg.early_stop = o.early_stop;
  cfg.threads = env_threads();
  return cfg;
}

// ---- model directories ----

struct Meta {
  std::string task = "flat";
  std::size_t window = 1;
  bool char_ngrams = false;
};

template <class Params>
struct Model {
  Meta meta;
  Params params1, params2;
  FeatureDictionary dict1, dict2;
  std::optional<LabelMapping> mapping;
};

Meta read_meta(const fs::path& dir) {
  std::ifstream in(dir / "meta.txt");
  if (!in) throw DataError("cannot open '" + (dir / "meta.txt").string() + "'");
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  Meta m;
  m.task = kv["task"];
  if (m.task != "flat" && m.task != "chain") throw DataError("meta.txt: unknown task '" + m.task + "'");
  const auto w = text::parse_int<std::size_t>(kv["window"]);
  if (!w || *w < 1) throw DataError("meta.txt: bad window");
  m.window = *w;
  m.char_ngrams = kv["char_ngrams"] == "1";
  return m;
}

template <class Params, class Write>
void save_model(const fs::path& dir, const Meta& meta, const SarState<Params>& state, const FeatureDictionary& d1,
                const FeatureDictionary& d2, const std::optional<LabelMapping>& mapping, const SarConfig& cfg,
                Write write) {
  fs::create_directories(dir);
  auto put = [&](const char* name, auto&& fn) {
    auto out = open_output((dir / name).string());
    fn(out);
    if (!out) throw DataError("write to '" + (dir / name).string() + "' failed");
  };
  put("view1.model", [&](std::ostream& o) { write(o, state.params1); });
  put("view2.model", [&](std::ostream& o) { write(o, state.params2); });
  put("view1.features", [&](std::ostream& o) { write_dictionary(o, d1); });
  put("view2.features", [&](std::ostream& o) { write_dictionary(o, d2); });
  put("trace.csv", [&](std::ostream& o) { write_trace_csv(o, state.trace); });
  put("meta.txt", [&](std::ostream& o) {
    o << "task=" << meta.task << "\nwindow=" << meta.window << "\nchar_ngrams=" << (meta.char_ngrams ? 1 : 0)
      << "\nc=" << text::format_double(cfg.unlabeled_weight()) << "\niterations=" << cfg.iterations
      << "\nprior_variance1=" << text::format_double(cfg.prior_variance1)
      << "\nprior_variance2=" << text::format_double(cfg.prior_variance2) << "\nseed=" << cfg.seed << '\n';
  });
  if (mapping) put("mapping.tsv", [&](std::ostream& o) { write_label_mapping(o, *mapping); });
  else fs::remove(dir / "mapping.tsv");
}

template <class Params, class Read>
Model<Params> load_model(const fs::path& dir, Read read) {
  Model<Params> m;
  m.meta = read_meta(dir);
  m.params1 = load_file((dir / "view1.model").string(), read);
  m.params2 = load_file((dir / "view2.model").string(), read);
  m.dict1 = load_file((dir / "view1.features").string(), [](std::istream& i) { return read_dictionary(i); });
  m.dict2 = load_file((dir / "view2.features").string(), [](std::istream& i) { return read_dictionary(i); });
  if (fs::exists(dir / "mapping.tsv")) m.mapping = parse_label_mapping((dir / "mapping.tsv").string());
  return m;
}

// ---- training ----

void print_summary(const std::vector<TraceRow>& trace, const std::vector<EStepStats>& estep) {
  std::size_t unconverged = 0;
  for (const auto& e : estep) unconverged += e.unconverged;
  const auto& last = trace.back();
  std::cerr << "iterations " << last.iteration << ", objective " << text::format_double(trace.front().total)
            << " -> " << text::format_double(last.total) << '\n';
  if (unconverged) std::cerr << "warning: " << unconverged << " agreement projections did not converge\n";
}

void train(const TrainOptions& o, bool supervised) {
  SarConfig cfg = sar_config(o);
  if (supervised) {
    cfg.c = 0.0;
    cfg.balance = false;
    cfg.iterations = 1;
  }
  std::optional<LabelMapping> mapping;
  if (!o.mapping.empty()) mapping = parse_label_mapping(o.mapping);

  if (o.task == "flat") {
    FlatCorpus corpus = parse_flat(o.train);
    if (!o.unlabeled.empty())
      for (auto ex : parse_flat(o.unlabeled).examples) {
        ex.label.reset();
        corpus.examples.push_back(std::move(ex));
      }
    std::optional<FlatCorpus> second;
    if (!o.train2.empty()) second = parse_flat(o.train2);
    FlatDataOptions opt;
    opt.mapping = mapping;
    const FlatData d = prepare_flat(corpus, second ? &*second : nullptr, opt);
    const auto state = train_sar(d.problem, cfg, MaxentParams::zeros(d.labels1, d.dict1.size(), 1.0),
                                 MaxentParams::zeros(d.labels2, d.dict2.size(), 1.0));
    save_model(o.out, Meta{"flat", o.window, o.char_ngrams}, state, d.dict1, d.dict2, mapping, cfg,
               [](std::ostream& out, const MaxentParams& p) { write_maxent(out, p); });
    print_summary(state.trace, state.estep);
  } else {
    const SeqCorpus labeled = parse_conll(o.train);
    SeqCorpus unlabeled;
    if (!o.unlabeled.empty()) unlabeled = parse_conll(o.unlabeled);
    std::optional<SeqCorpus> second;
    if (!o.train2.empty()) second = parse_conll(o.train2);
    const ViewTemplate tmpl{o.window, o.char_ngrams};
    const ChainData d = prepare_chain(labeled, second ? &*second : nullptr, unlabeled, tmpl, mapping);
    const auto state = train_sar(d.problem, cfg, CrfParams::zeros(d.labels1, d.dict1.size(), 1.0),
                                 CrfParams::zeros(d.labels2, d.dict2.size(), 1.0));
    save_model(o.out, Meta{"chain", o.window, o.char_ngrams}, state, d.dict1, d.dict2, mapping, cfg,
               [](std::ostream& out, const CrfParams& p) { write_crf(out, p); });
    print_summary(state.trace, state.estep);
  }
}

// ---- evaluation ----

std::string gold_for_view(const std::optional<LabelMapping>& m, const std::string& label, int view) {
  return view == 2 && m ? map_label(*m, label) : label;
}

int view_number(const std::string& v) {
  if (v == "1") return 1;
  if (v == "2") return 2;
  if (v == "agree") return 0;
  throw UsageError("--view must be 1, 2 or agree");
}

EvalReport eval_flat(const fs::path& dir, const std::string& test_path, int view) {
  const auto m = load_model<MaxentParams>(dir, [](std::istream& i) { return read_maxent(i); });
  const FlatCorpus test = parse_flat(test_path);
  const LabelSet& labels = view == 2 ? m.params2.labels : m.params1.labels;
  std::vector<std::size_t> pred, gold;
  for (const auto& ex : test.examples) {
    if (!ex.label) continue;
    const TwoView<FeatureVector> x{m.dict1.encode_known(ex.view1), m.dict2.encode_known(ex.view2)};
    gold.push_back(labels.index(gold_for_view(m.mapping, *ex.label, view)));
    if (view == 1) pred.push_back(predict_label(m.params1, x.view1));
    else if (view == 2) pred.push_back(predict_label(m.params2, x.view2));
    else pred.push_back(agree0_predict<FlatKind>(m.params1, m.params2, x, m.mapping));
  }
  if (gold.empty()) throw DataError("test file has no labeled examples");
  return evaluate(pred, gold, labels);
}

EvalReport eval_chain(const fs::path& dir, const std::string& test_path, int view) {
  const auto m = load_model<CrfParams>(dir, [](std::istream& i) { return read_crf(i); });
  const SeqCorpus test = parse_conll(test_path);
  if (!test.has_tags) throw DataError("test file has no tag column");
  const LabelSet& labels = view == 2 ? m.params2.labels : m.params1.labels;
  const auto t = encode_chain_test(m.dict1, m.dict2, ViewTemplate{m.meta.window, m.meta.char_ngrams}, test);
  std::vector<std::size_t> pred, gold;
  std::vector<std::vector<std::string>> pred_tags, gold_tags;
  for (std::size_t s = 0; s < t.inputs.size(); ++s) {
    const auto& x = t.inputs[s];
    const auto y = view == 1   ? predict_sequence(m.params1, x.view1)
                   : view == 2 ? predict_sequence(m.params2, x.view2)
                               : agree0_predict<ChainKind>(m.params1, m.params2, x, m.mapping);
    std::vector<std::string> ps, gs;
    for (std::size_t i = 0; i < y.size(); ++i) {
      gs.push_back(gold_for_view(m.mapping, t.gold_tags[s][i], view));
      ps.push_back(labels.name(y[i]));
      gold.push_back(labels.index(gs.back()));
      pred.push_back(y[i]);
    }
    pred_tags.push_back(std::move(ps));
    gold_tags.push_back(std::move(gs));
  }
  if (gold.empty()) throw DataError("test file has no tokens");
  auto r = evaluate(pred, gold, labels);
  r.chunks = chunk_f1(pred_tags, gold_tags);
  return r;
}

EvalReport eval_model(const std::string& dir, const std::string& test, int view) {
  return read_meta(dir).task == "flat" ? eval_flat(dir, test, view) : eval_chain(dir, test, view);
}

double headline(const EvalReport& r) { return r.chunks ? r.chunks->f1 : r.accuracy; }

void write_report(const std::string& path, const EvalReport& r) {
  with_output(path, [&](std::ostream& out) { write_report_csv(out, r); });
}

void run_eval(const EvalOptions& o) {
  auto r = eval_model(o.model, o.test, view_number(o.view));
  if (o.baseline_score) r.rre_vs = {{o.baseline.empty() ? "baseline" : o.baseline, rre(*o.baseline_score, headline(r))}};
  write_report(o.report, r);
}

void run_agree0_eval(const EvalOptions& o) {
  auto r = eval_model(o.model, o.test, 0);
  const int base = o.baseline == "view2" ? 2 : 1;
  if (!o.baseline.empty() && o.baseline != "view1" && o.baseline != "view2")
    throw UsageError("--baseline must be view1 or view2");
  const double b = headline(eval_model(o.model, o.test, base));
  r.rre_vs = {{base == 1 ? "view1" : "view2", rre(b, headline(r))}};
  write_report(o.report, r);
}

// ---- data commands ----

struct SynthOptions {
  SynthConfig gen;
  std::uint64_t seed = 0;
  std::string out_train, out_test;
};

void run_synth(const SynthOptions& o) {
  const auto c = synth_two_view(o.gen, o.seed);
  with_output(o.out_train, [&](std::ostream& out) { write_flat(out, c.train); });
  if (!o.out_test.empty()) with_output(o.out_test, [&](std::ostream& out) { write_flat(out, c.test); });
}

void run_split(const std::string& in, const std::string& out, std::uint64_t seed) {
  const auto split = random_feature_split(parse_flat(in), seed);
  with_output(out, [&](std::ostream& o) { write_flat(o, split); });
}

void run_collapse(const std::string& in, const std::string& mapping_path, const std::string& out, bool conll) {
  const auto m = parse_label_mapping(mapping_path);
  if (!m.is_injective()) std::cerr << "note: the mapping merges labels; the original labels cannot be recovered\n";
  if (conll) {
    const auto c = collapse_labels(parse_conll(in), m);
    with_output(out, [&](std::ostream& o) { write_conll(o, c); });
  } else {
    const auto c = collapse_labels(parse_flat(in), m);
    with_output(out, [&](std::ostream& o) { write_flat(o, c); });
  }
}

void add_train_options(CLI::App* cmd, TrainOptions& o, bool semi) {
  cmd->add_option("--task", o.task, "flat or chain")->check(CLI::IsMember({"flat", "chain"}))->capture_default_str();
  cmd->add_option("--train", o.train, "labeled corpus (flat rows labeled ? are unlabeled)")->required();
  cmd->add_option("--train2", o.train2, "separate view-2 labeled corpus, labels in the coarse set");
  cmd->add_option("--mapping", o.mapping, "fine<TAB>coarse label mapping: view 2 predicts coarse labels");
  cmd->add_option("--out", o.out, "model directory")->required();
  cmd->add_option("--window", o.window, "context window (chain)")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_flag("--char-ngrams", o.char_ngrams, "character 3-grams in the content view (chain)");
  cmd->add_option("--prior-variance1", o.prior_variance1, "Gaussian prior variance, view 1")->capture_default_str();
  cmd->add_option("--prior-variance2", o.prior_variance2, "Gaussian prior variance, view 2")->capture_default_str();
  cmd->add_option("--grad-tolerance", o.grad_tolerance, "L-BFGS gradient norm tolerance")->capture_default_str();
  cmd->add_option("--max-lbfgs-iterations", o.max_lbfgs_iterations)->capture_default_str();
  cmd->add_option("--seed", o.seed, "recorded in meta.txt; training is deterministic");
  if (!semi) return;
  cmd->add_option("--unlabeled", o.unlabeled, "unlabeled corpus (labels, if any, are ignored)");
  cmd->add_option("--c", o.c, "weight of the agreement term")->capture_default_str();
  cmd->add_flag("--balance", o.balance, "give the unlabeled data the same total weight as the labeled data");
  cmd->add_option("--iterations", o.iterations, "EM iterations")->capture_default_str();
  cmd->add_flag("--early-stop", o.early_stop, "stop when the objective improves by less than 1e-6");
  cmd->add_option("--dual-max-iterations", o.dual_max_iterations, "partial-agreement solver budget")
      ->capture_default_str();
  cmd->add_option("--dual-tolerance", o.dual_tolerance, "partial-agreement constraint residual")
      ->capture_default_str();
}

// Splices `key = value` lines from the subcommand's --config file into the
// argument list. Keys name long flags (with or without the dashes; '_' may
// stand for '-'). A key that also appears on the command line is ignored.
std::vector<std::string> with_config(std::vector<std::string> args, const CLI::App& app) {
  auto sub = std::find_if(args.begin(), args.end(), [&](const std::string& a) {
    for (const auto* c : app.get_subcommands({}))
      if (c->get_name() == a) return true;
    return false;
  });
  if (sub == args.end()) return args;
  const CLI::App* cmd = app.get_subcommand(*sub);
  std::string path;
  for (auto it = sub + 1; it != args.end(); ++it) {
    if (*it == "--config" && it + 1 != args.end()) {
      path = *(it + 1);
      args.erase(it, it + 2);
      break;
    }
    if (it->rfind("--config=", 0) == 0) {
      path = it->substr(9);
      args.erase(it);
      break;
    }
  }
  if (path.empty()) return args;
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file '" + path + "'");
  auto given = [&](const std::string& flag) {
    return std::any_of(args.begin(), args.end(),
                       [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
  };
  std::vector<std::string> extra;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = text::trim(line);
    if (body.empty() || body[0] == '#') continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) throw UsageError(path + ":" + std::to_string(lineno) + ": expected key = value");
    std::string key(text::trim(body.substr(0, eq)));
    std::string value(text::trim(body.substr(eq + 1)));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    while (!key.empty() && key[0] == '-') key.erase(0, 1);
    std::replace(key.begin(), key.end(), '_', '-');
    const std::string flag = "--" + key;
    const CLI::Option* opt = cmd->get_option_no_throw(flag);
    if (!opt || key == "config" || key == "help")
      throw UsageError(path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    if (given(flag)) continue;
    if (opt->get_expected_max() == 0) {
      if (value == "true" || value == "1" || value == "yes") extra.push_back(flag);
      else if (value != "false" && value != "0" && value != "no")
        throw UsageError(path + ":" + std::to_string(lineno) + ": '" + key + "' takes true or false");
    } else {
      extra.push_back(flag);
      extra.push_back(value);
    }
  }
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

void add_eval_options(CLI::App* cmd, EvalOptions& o) {
  cmd->add_option("--model", o.model, "model directory")->required();
  cmd->add_option("--test", o.test, "labeled test corpus (format from the model's task)")->required();
  cmd->add_option("--report", o.report, "report CSV path (default stdout)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-view agreement-regularized maxent and CRF models."};
  app.footer(kSchemas);
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");

  TrainOptions sup, semi;
  auto* c_sup = app.add_subcommand("train-supervised", "fit each view on its labeled data alone");
  add_train_options(c_sup, sup, false);
  auto* c_sar = app.add_subcommand("train-sar", "supervised fits followed by agreement-regularized EM");
  add_train_options(c_sar, semi, true);

  EvalOptions agree0, eval;
  auto* c_agree = app.add_subcommand("agree0-eval", "evaluate the opinion pool of a model's two views");
  add_eval_options(c_agree, agree0);
  c_agree->add_option("--baseline", agree0.baseline, "view1 or view2: RRE reference (default view1)");
  auto* c_eval = app.add_subcommand("eval", "evaluate one view, or the pool, of a model");
  add_eval_options(c_eval, eval);
  c_eval->add_option("--view", eval.view, "1, 2 or agree")->capture_default_str();
  c_eval->add_option("--baseline-name", eval.baseline, "name for the RRE row");
  c_eval->add_option("--baseline-score", eval.baseline_score, "baseline accuracy or F1 for the RRE row");

  SynthOptions synth;
  auto* c_synth = app.add_subcommand("synth-gen", "generate a synthetic two-view corpus");
  c_synth->add_option("--seed", synth.seed)->required();
  c_synth->add_option("--out", synth.out_train, "training corpus path (default stdout)");
  c_synth->add_option("--test-out", synth.out_test, "test corpus path");
  c_synth->add_option("--labels", synth.gen.num_labels)->check(CLI::Range(2, 1 << 20))->capture_default_str();
  c_synth->add_option("--features-per-view", synth.gen.features_per_view)->capture_default_str();
  c_synth->add_option("--active", synth.gen.active_features, "feature draws per view")->capture_default_str();
  c_synth->add_option("--signal", synth.gen.signal, "share of draws from the source class")->capture_default_str();
  c_synth->add_option("--noise1", synth.gen.noise1, "view-1 wrong-source rate")->capture_default_str();
  c_synth->add_option("--noise2", synth.gen.noise2, "view-2 wrong-source rate")->capture_default_str();
  c_synth->add_option("--labeled", synth.gen.labeled)->capture_default_str();
  c_synth->add_option("--unlabeled", synth.gen.unlabeled)->capture_default_str();
  c_synth->add_option("--test", synth.gen.test)->capture_default_str();

  std::string split_in, split_out;
  std::uint64_t split_seed = 0;
  auto* c_split = app.add_subcommand("split-views", "redistribute each row's features between two views at random");
  c_split->add_option("--input", split_in, "flat corpus")->required();
  c_split->add_option("--out", split_out, "output path (default stdout)");
  c_split->add_option("--seed", split_seed)->required();

  std::string col_in, col_map, col_out;
  bool col_conll = false;
  auto* c_col = app.add_subcommand("collapse-labels", "rewrite labels through a mapping");
  c_col->add_option("--input", col_in)->required();
  c_col->add_option("--mapping", col_map)->required();
  c_col->add_option("--out", col_out, "output path (default stdout)");
  c_col->add_flag("--conll", col_conll, "input is CoNLL rather than flat");

  double ls_range = 3.0, ls_step = 0.25;
  std::string ls_out;
  auto* c_ls = app.add_subcommand("loss-surface", "Bhattacharyya penalty between two binary logistic models");
  c_ls->add_option("--range", ls_range, "scores span [-range, range]")->capture_default_str();
  c_ls->add_option("--step", ls_step)->capture_default_str();
  c_ls->add_option("--out", ls_out, "output path (default stdout)");

  std::string config_path;  // consumed by with_config; declared for --help
  for (auto* cmd : app.get_subcommands({}))
    cmd->add_option("--config", config_path, "key = value file of long flags; flags on the command line win");

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = with_config(std::move(args), app);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*c_sup) train(sup, true);
    else if (*c_sar) train(semi, false);
    else if (*c_agree) run_agree0_eval(agree0);
    else if (*c_eval) run_eval(eval);
    else if (*c_synth) run_synth(synth);
    else if (*c_split) run_split(split_in, split_out, split_seed);
    else if (*c_col) run_collapse(col_in, col_map, col_out, col_conll);
    else if (*c_ls) with_output(ls_out, [&](std::ostream& o) { write_loss_surface_csv(o, loss_surface(ls_range, ls_step)); });
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
