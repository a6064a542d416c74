// SPDX-License-Identifier: Apache-2.0
#include "softtopic_cli/commands.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "softtopic/artifacts.hpp"
#include "softtopic/corpus.hpp"
#include "softtopic/dtm.hpp"
#include "softtopic/error.hpp"
#include "softtopic/evalsuite.hpp"
#include "softtopic/experiment.hpp"
#include "softtopic/synth.hpp"
#include "softtopic/topicmodel.hpp"
#include "softtopic_cli/run_config.hpp"

namespace softtopic::cli {
namespace {

struct CommonFlags {
  std::string config;
  std::string out;
  std::string data;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "Run configuration file");
  cmd->add_option("--out", f.out, "Output directory (overrides config `out`)");
  cmd->add_option("--data", f.data, "Artifact directory (overrides config `data`)");
  cmd->add_option("--seed", f.seed, "Global seed (overrides config `seed`)");
}

RunConfig resolve(const CommonFlags& f) {
  RunConfig c = f.config.empty() ? RunConfig{} : load_run_config(f.config);
  if (!f.out.empty()) c.out = f.out;
  if (!f.data.empty()) c.data = f.data;
  if (f.seed) c.apply_seed(*f.seed);
  return c;
}

std::filesystem::path require_out(const RunConfig& c) {
  if (!c.out) throw ConfigError("no output directory: pass --out or set `out` in the config");
  std::filesystem::create_directories(*c.out);
  return *c.out;
}

std::filesystem::path require_data(const RunConfig& c) {
  if (!c.data) throw ConfigError("no data directory: pass --data or set `data` in the config");
  return *c.data;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open for writing: " + path.string());
  out << text;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::filesystem::path checkpoint_path(const std::string& flag, const RunConfig& c) {
  if (!flag.empty()) return flag;
  if (c.out) return ArtifactLayout(*c.out).checkpoint();
  throw ConfigError("no checkpoint: pass --checkpoint or set `out` in the config");
}

std::string category(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  if (dynamic_cast<const EmptyCorpusError*>(&e)) return "empty_corpus";
  if (dynamic_cast<const DegenerateDocumentError*>(&e)) return "degenerate_document";
  if (dynamic_cast<const FormatError*>(&e)) return "format";
  if (dynamic_cast<const UndefinedMetricError*>(&e)) return "undefined_metric";
  if (dynamic_cast<const NumericalError*>(&e)) return "numerical";
  if (dynamic_cast<const DomainError*>(&e)) return "domain";
  if (dynamic_cast<const InputError*>(&e)) return "input";
  if (dynamic_cast<const std::filesystem::filesystem_error*>(&e)) return "io";
  return "internal";
}

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

int cmd_preprocess(const CommonFlags& f, const std::string& corpus, std::size_t vocab_size,
                   std::ostream& out) {
  const RunConfig c = resolve(f);
  const ArtifactLayout layout(require_out(c));
  const auto docs = read_corpus_jsonl(corpus);
  const TokenizerOptions options;
  std::vector<std::vector<std::string>> tokens;
  tokens.reserve(docs.size());
  for (const auto& d : docs) tokens.push_back(tokenize(d.text, options));
  const Vocabulary vocab = build_vocabulary(tokens, vocab_size);
  std::vector<BowVector> bows;
  std::vector<std::string> ids;
  std::vector<std::optional<std::string>> labels;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    bows.push_back(bow_vector(tokens[i], vocab));
    ids.push_back(docs[i].id);
    labels.push_back(docs[i].label);
  }
  write_vocabulary(layout.vocab(), vocab);
  write_dtm1(layout.bow(), bow_matrix(bows, vocab.size()));
  write_ids(layout.ids(), ids);
  write_labels_csv(layout.labels(), ids, labels);
  out << "preprocessed " << docs.size() << " documents, vocabulary " << vocab.size() << " words -> "
      << layout.dir().string() << '\n';
  return 0;
}

int cmd_synth(const CommonFlags& f, std::optional<double> temperature, std::ostream& out) {
  const RunConfig c = resolve(f);
  const auto dir = require_out(c);
  write_synth_artifacts(dir, c.synth, temperature.value_or(c.synth_temperature));
  out << "wrote synthetic corpus (" << c.synth.num_docs() << " documents, " << c.synth.num_topics
      << " topics) -> " << dir.string() << '\n';
  return 0;
}

RunSpec run_spec(const RunConfig& c) { return {c.model, c.train, c.eval}; }

int cmd_train(const CommonFlags& f, std::ostream& out) {
  const RunConfig c = resolve(f);
  const Dataset data = load_dataset(require_data(c));
  const ArtifactLayout layout(require_out(c));
  ModelConfig model = c.model;
  const PreparedData prepared = prepare_data(data, model);
  const TrainResult r =
      train(model, c.train, prepared.inputs, prepared.targets, {layout.checkpoint(), layout.train_log()});
  const auto& last = r.report.epochs.empty() ? EpochStats{} : r.report.epochs.back();
  out << "trained " << r.report.epochs.size() << " epochs on " << prepared.kept.size() << " documents ("
      << data.num_docs() - prepared.kept.size() << " excluded) in " << std::fixed << std::setprecision(1)
      << r.report.wall_seconds << "s; final loss " << std::setprecision(6) << last.total
      << "; checkpoint " << layout.checkpoint().string() << '\n';
  return 0;
}

int cmd_eval(const CommonFlags& f, const std::string& checkpoint, const std::string& metrics,
             std::optional<std::size_t> topn, const std::string& retrieval_n, std::ostream& out) {
  RunConfig c = resolve(f);
  if (!metrics.empty()) c.eval.metrics = split(metrics, ',');
  for (const auto& n : split(retrieval_n, ',')) c.eval.metrics.push_back("precision@" + n);
  if (topn) c.eval.top_n = *topn;
  const Dataset data = load_dataset(require_data(c));
  const Checkpoint ckpt = load_checkpoint(checkpoint_path(checkpoint, c));
  const EvalReport report = evaluate_checkpoint(data, ckpt, c.eval, c.seed);
  const std::string json = report.to_json();
  if (c.out) {
    std::filesystem::create_directories(*c.out);
    write_text(ArtifactLayout(*c.out).eval(), json);
  }
  out << json;
  return 0;
}

int cmd_topics(const CommonFlags& f, const std::string& checkpoint, std::size_t topn, std::ostream& out) {
  const RunConfig c = resolve(f);
  const Vocabulary vocab = read_vocabulary(ArtifactLayout(require_data(c)).vocab());
  const Checkpoint ckpt = load_checkpoint(checkpoint_path(checkpoint, c));
  if (vocab.size() != ckpt.config.vocab_size) throw InputError("vocabulary size does not match the checkpoint");
  if (topn == 0) throw ConfigError("--topn must be >= 1");
  std::ostringstream text;
  const auto topics = top_words(ckpt.params.weights.beta, vocab, std::min(topn, vocab.size()));
  for (std::size_t k = 0; k < topics.size(); ++k) {
    text << "topic " << k << ':';
    for (const auto& w : topics[k]) text << ' ' << w;
    text << '\n';
  }
  if (c.out) {
    std::filesystem::create_directories(*c.out);
    write_text(ArtifactLayout(*c.out).topics(), text.str());
  }
  out << text.str();
  return 0;
}

int cmd_retrieve(const CommonFlags& f, const std::string& checkpoint, const std::string& query,
                 std::size_t n, bool symmetric, std::ostream& out) {
  const RunConfig c = resolve(f);
  const Dataset data = load_dataset(require_data(c));
  const Checkpoint ckpt = load_checkpoint(checkpoint_path(checkpoint, c));
  const auto it = std::find(data.ids.begin(), data.ids.end(), query);
  if (it == data.ids.end()) throw InputError("unknown document id: " + query);
  const auto& inputs = ckpt.config.input_mode == InputMode::hidden ? data.embeddings
                                                                     : data.external_embeddings;
  if (!inputs) throw InputError("dataset has no " + to_string(ckpt.config.input_mode) + " embeddings");
  Rng rng(derive_seed(c.seed, "inference"));
  const Matrix theta = infer_theta_matrix(*inputs, ckpt.params, ckpt.config, rng);
  const auto hits = retrieve(theta, static_cast<std::size_t>(it - data.ids.begin()), n,
                             symmetric ? RetrievalDivergence::symmetric : RetrievalDivergence::query_first);
  out << std::setprecision(9);
  for (const auto& h : hits) out << data.ids[h.index] << '\t' << h.divergence << '\n';
  return 0;
}

int cmd_ablate(const CommonFlags& f, const std::vector<std::string>& axes_flag, std::ostream& out) {
  const RunConfig c = resolve(f);
  const auto axes = axes_flag.empty() ? c.sweep_axes : axes_flag;
  if (axes.empty()) throw ConfigError("no sweep axes: pass --axes axis=v1,v2 or set sweep.axes");
  const Dataset data = load_dataset(require_data(c));
  const auto root = require_out(c);

  std::string csv;
  std::vector<SweepRow> all_rows;
  for (const auto& spec : axes) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) throw ConfigError("--axes expects axis=v1,v2,..., got '" + spec + "'");
    const SweepAxis axis = parse_sweep_axis(spec.substr(0, eq));
    const auto values = split(spec.substr(eq + 1), ',');
    SweepOptions options;
    options.seeds = c.sweep_seeds;
    options.threads = c.sweep_threads;
    options.output_root = root / "sweep" / to_string(axis);
    auto rows = sweep(data, run_spec(c), axis, values, options);
    if (axes.size() > 1)
      for (auto& r : rows) r.axis_value = to_string(axis) + "=" + r.axis_value;
    all_rows.insert(all_rows.end(), rows.begin(), rows.end());
    const std::string part = sweep_csv(rows);
    csv += csv.empty() ? part : part.substr(part.find('\n') + 1);
  }
  write_text(ArtifactLayout(root).sweep(), csv);
  write_text(ArtifactLayout(root).eval(), summarize_sweep(all_rows).to_json());
  out << csv;
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Soft-label neural topic modeling"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  CommonFlags common;
  std::string corpus, checkpoint, metrics, retrieval_n, query;
  std::size_t vocab_size = kDefaultVocabularySize;
  std::optional<std::size_t> eval_topn;
  std::size_t topn = kDefaultTopWords, n = 10;
  std::optional<double> temperature;
  std::vector<std::string> axes;
  bool symmetric = false;

  auto* pre = app.add_subcommand("preprocess", "Build vocabulary and bag-of-words artifacts");
  add_common(pre, common);
  pre->add_option("--corpus", corpus, "JSON-lines corpus")->required();
  pre->add_option("--vocab-size", vocab_size, "Vocabulary size")->capture_default_str();

  auto* syn = app.add_subcommand("synth", "Write a synthetic artifact set");
  add_common(syn, common);
  syn->add_option("--temperature", temperature, "Temperature for the oracle targets");

  auto* tr = app.add_subcommand("train", "Train a topic model");
  add_common(tr, common);

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  add_common(ev, common);
  ev->add_option("--checkpoint", checkpoint, "Checkpoint (default: <out>/checkpoint.bin)");
  ev->add_option("--metrics", metrics, "Comma-separated metrics: npmi,i_rbo,purity,precision@N");
  ev->add_option("--topn", eval_topn, "Top words per topic for npmi and i_rbo");
  ev->add_option("--retrieval-n", retrieval_n, "Comma-separated N values, adds precision@N");

  auto* top = app.add_subcommand("topics", "Print the top words of each topic");
  add_common(top, common);
  top->add_option("--checkpoint", checkpoint, "Checkpoint (default: <out>/checkpoint.bin)");
  top->add_option("--topn", topn, "Words per topic")->capture_default_str();

  auto* ret = app.add_subcommand("retrieve", "Rank documents by topic divergence from a query");
  add_common(ret, common);
  ret->add_option("--checkpoint", checkpoint, "Checkpoint (default: <out>/checkpoint.bin)");
  ret->add_option("--query", query, "Query document id")->required();
  ret->add_option("-n,--top", n, "Number of documents")->capture_default_str();
  ret->add_flag("--symmetric", symmetric, "Symmetric KL instead of KL(query || doc)");

  auto* abl = app.add_subcommand("ablate", "Sweep one or more axes over seeds");
  add_common(abl, common);
  abl->add_option("--axes", axes,
                  "axis=v1,v2,... with axis in temperature, loss_mode, target_mode, input_mode, ablation");

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << one_line(e.what()) << '\n';
    return 2;
  }

  try {
    if (pre->parsed()) return cmd_preprocess(common, corpus, vocab_size, out);
    if (syn->parsed()) return cmd_synth(common, temperature, out);
    if (tr->parsed()) return cmd_train(common, out);
    if (ev->parsed()) return cmd_eval(common, checkpoint, metrics, eval_topn, retrieval_n, out);
    if (top->parsed()) return cmd_topics(common, checkpoint, topn, out);
    if (ret->parsed()) return cmd_retrieve(common, checkpoint, query, n, symmetric, out);
    if (abl->parsed()) return cmd_ablate(common, axes, out);
  } catch (const std::exception& e) {
    err << "error: " << category(e) << ": " << one_line(e.what()) << '\n';
    return 1;
  }
  return 2;
}

}  // namespace softtopic::cli
