// SPDX-License-Identifier: Apache-2.0
#include "softtopic/experiment.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "softtopic/dtm.hpp"
#include "softtopic/error.hpp"
#include "softtopic/targets.hpp"

namespace softtopic {
namespace {

const Matrix& select_inputs(const Dataset& data, InputMode mode) {
  const auto& m = mode == InputMode::hidden ? data.embeddings : data.external_embeddings;
  if (!m)
    throw InputError(std::string("input_mode=") + to_string(mode) + " needs " +
                     (mode == InputMode::hidden ? "embeddings.dtm" : "external_embeddings.dtm"));
  return *m;
}

double mean_normalised_entropy(const Matrix& targets) {
  Matrix p = targets;
  for (std::size_t r = 0; r < p.rows(); ++r) {
    auto row = p.row(r);
    double s = 0.0;
    for (double x : row) s += x;
    if (s > 0.0)
      for (double& x : row) x /= s;
  }
  return mean_row_entropy(p);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open for writing: " + path.string());
  out << text;
}

}  // namespace

PreparedData prepare_data(const Dataset& data, ModelConfig& model) {
  const Matrix& inputs = select_inputs(data, model.input_mode);
  model.input_dim = inputs.cols();
  model.vocab_size = data.vocab.size();

  PreparedData out;
  std::string hashed = dtm1_bytes(inputs);
  std::optional<Matrix> soft;
  if (model.target_mode == TargetMode::soft) {
    if (data.logits) {
      soft = soft_targets(*data.logits, model.temperature);
    } else if (data.targets) {
      soft = *data.targets;
    } else {
      throw InputError("target_mode=soft needs logits.dtm or targets.dtm");
    }
    hashed += dtm1_bytes(*soft);
  } else {
    hashed += dtm1_bytes(data.bow);
  }
  out.targets = reconstruction_targets(model, soft ? &*soft : nullptr, &data.bow, out.kept);
  out.inputs = inputs.gather_rows(out.kept);
  out.all_inputs = inputs;
  out.target_entropy = mean_normalised_entropy(out.targets);
  out.data_hash = sha256_hex(hashed);
  return out;
}

EvalReport evaluate_checkpoint(const Dataset& data, const Checkpoint& checkpoint,
                               const EvalOptions& options, std::uint64_t seed) {
  const Matrix& inputs = select_inputs(data, checkpoint.config.input_mode);
  if (inputs.cols() != checkpoint.config.input_dim || data.vocab.size() != checkpoint.config.vocab_size)
    throw InputError("checkpoint dimensions do not match the dataset");
  Rng rng(derive_seed(seed, "inference"));
  const Matrix theta = infer_theta_matrix(inputs, checkpoint.params, checkpoint.config, rng);
  const DocWordIncidence incidence(data.bow);
  EvalInputs in;
  in.theta = &theta;
  in.beta = &checkpoint.params.weights.beta;
  in.vocab = &data.vocab;
  in.incidence = &incidence;
  in.labels = data.labels;
  return evaluate(in, options);
}

RunResult run_experiment(const Dataset& data, RunSpec spec, const RunOutputs& outputs) {
  const PreparedData prepared = prepare_data(data, spec.model);
  TrainOutputs train_out{outputs.checkpoint, outputs.progress_log};
  TrainResult trained = train(spec.model, spec.train, prepared.inputs, prepared.targets, train_out);
  trained.report.excluded_documents = data.num_docs() - prepared.kept.size();

  RunResult result;
  result.checkpoint = {spec.model, std::move(trained.params)};
  result.train_report = std::move(trained.report);
  result.eval = evaluate_checkpoint(data, result.checkpoint, spec.eval, spec.train.seed);
  result.eval.metrics["target_entropy"] = prepared.target_entropy;
  result.data_hash = prepared.data_hash;
  if (outputs.eval_json) write_text(*outputs.eval_json, result.eval.to_json());
  return result;
}

std::string to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::temperature: return "temperature";
    case SweepAxis::loss_mode: return "loss_mode";
    case SweepAxis::target_mode: return "target_mode";
    case SweepAxis::input_mode: return "input_mode";
    case SweepAxis::ablation: return "ablation";
  }
  return "?";
}

SweepAxis parse_sweep_axis(std::string_view s) {
  for (auto a : {SweepAxis::temperature, SweepAxis::loss_mode, SweepAxis::target_mode,
                 SweepAxis::input_mode, SweepAxis::ablation})
    if (to_string(a) == s) return a;
  throw ConfigError("unknown sweep axis: " + std::string(s));
}

const std::vector<std::string>& ablation_names() {
  static const std::vector<std::string> names = {"original", "nll", "nll_bow", "embeddings",
                                                 "nll_bow_embeddings"};
  return names;
}

void apply_axis_value(RunSpec& spec, SweepAxis axis, const std::string& value) {
  ModelConfig& m = spec.model;
  switch (axis) {
    case SweepAxis::temperature: {
      std::size_t used = 0;
      double t = 0.0;
      try {
        t = std::stod(value, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != value.size() || !(t > 0.0))
        throw ConfigError("temperature value must be a positive number: " + value);
      m.temperature = t;
      return;
    }
    case SweepAxis::loss_mode:
      try {
        m.loss_mode = parse_loss_mode(value);
      } catch (const std::exception& e) {
        throw ConfigError(e.what());
      }
      return;
    case SweepAxis::target_mode:
      try {
        m.target_mode = parse_target_mode(value);
      } catch (const std::exception& e) {
        throw ConfigError(e.what());
      }
      return;
    case SweepAxis::input_mode:
      try {
        m.input_mode = parse_input_mode(value);
      } catch (const std::exception& e) {
        throw ConfigError(e.what());
      }
      return;
    case SweepAxis::ablation: {
      const bool nll = value.starts_with("nll");
      const bool bow = value.starts_with("nll_bow");
      const bool ext = value.ends_with("embeddings");
      const auto& names = ablation_names();
      if (std::find(names.begin(), names.end(), value) == names.end())
        throw ConfigError("unknown ablation: " + value);
      m.loss_mode = nll ? LossMode::nll : LossMode::kl;
      m.target_mode = bow ? TargetMode::bow : TargetMode::soft;
      m.input_mode = ext ? InputMode::external : InputMode::hidden;
      return;
    }
  }
}

std::size_t worker_threads_from_env() {
  std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SOFTTOPIC_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return hw;
}

std::vector<SweepRow> sweep(const Dataset& data, const RunSpec& base, SweepAxis axis,
                            const std::vector<std::string>& values, const SweepOptions& options) {
  if (values.empty()) throw ConfigError("sweep needs at least one axis value");
  if (options.seeds.empty()) throw ConfigError("sweep needs at least one seed");

  struct Cell {
    RunSpec spec;
    std::string value;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (const auto& value : values) {
    for (auto seed : options.seeds) {
      Cell c{base, value, seed};
      apply_axis_value(c.spec, axis, value);
      c.spec.train.seed = seed;
      // Fail before any cell trains; dimensions are filled per cell later.
      ModelConfig check = c.spec.model;
      check.input_dim = std::max<std::size_t>(check.input_dim, 1);
      check.vocab_size = data.vocab.size();
      check.validate();
      cells.push_back(std::move(c));
    }
  }

  std::vector<SweepRow> rows(cells.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        const Cell& c = cells[i];
        RunOutputs out;
        if (options.output_root) {
          const auto dir = *options.output_root / c.value / ("seed" + std::to_string(c.seed));
          std::filesystem::create_directories(dir);
          const ArtifactLayout layout(dir);
          out = {layout.checkpoint(), layout.train_log(), layout.eval()};
        }
        RunResult r = run_experiment(data, c.spec, out);
        rows[i] = {c.value, c.seed, std::move(r.eval), std::move(r.data_hash)};
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = cells.size();
      }
    }
  };
  const std::size_t threads =
      std::min(cells.size(), options.threads ? options.threads : worker_threads_from_env());
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);
  return rows;
}

EvalReport summarize_sweep(const std::vector<SweepRow>& rows) {
  std::vector<std::string> values;
  EvalReport out;
  for (const auto& r : rows) {
    if (std::find(values.begin(), values.end(), r.axis_value) == values.end())
      values.push_back(r.axis_value);
    for (const auto& [name, v] : r.report.metrics) out.per_seed[r.axis_value + "/" + name].push_back(v);
  }
  for (const auto& [key, xs] : out.per_seed) {
    double s = 0.0;
    for (double x : xs) s += x;
    out.metrics[key] = s / static_cast<double>(xs.size());
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    for (std::size_t j = i + 1; j < values.size(); ++j) {
      const std::string prefix = values[i] + "/";
      for (const auto& [key, a] : out.per_seed) {
        if (!key.starts_with(prefix)) continue;
        const std::string metric = key.substr(prefix.size());
        const auto other = out.per_seed.find(values[j] + "/" + metric);
        if (other == out.per_seed.end() || a.size() < 2 || other->second.size() < 2) continue;
        out.welch_p_values[values[i] + "|" + values[j] + "/" + metric] = welch_t(a, other->second).p_value;
      }
    }
  }
  return out;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out.precision(17);
  out << "axis_value,seed,metric_name,value\n";
  for (const auto& r : rows)
    for (const auto& [name, v] : r.report.metrics)
      out << r.axis_value << ',' << r.seed << ',' << name << ',' << v << '\n';
  return out.str();
}

}  // namespace softtopic
