// SPDX-License-Identifier: Apache-2.0
#include "softtopic_cli/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "softtopic/error.hpp"

namespace softtopic::cli {
namespace {

using Setter = std::function<void(RunConfig&, const std::string&)>;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::uint64_t to_u64(const std::string& v) {
  std::uint64_t x = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError("expected a non-negative integer, got '" + v + "'");
  return x;
}

double to_double(const std::string& v) {
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError("expected a number, got '" + v + "'");
  return x;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("expected a boolean, got '" + v + "'");
}

template <typename T>
T parsed(T (*parse)(std::string_view), const std::string& v) {
  try {
    return parse(v);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

const std::map<std::string, Setter>& schema() {
  static const std::map<std::string, Setter> table = {
      {"seed", [](RunConfig& c, const std::string& v) { c.seed = to_u64(v); }},
      {"data", [](RunConfig& c, const std::string& v) { c.data = v; }},
      {"out", [](RunConfig& c, const std::string& v) { c.out = v; }},

      {"model.num_topics", [](RunConfig& c, const std::string& v) { c.model.num_topics = to_u64(v); }},
      {"model.hidden_dim", [](RunConfig& c, const std::string& v) { c.model.hidden_dim = to_u64(v); }},
      {"model.hidden_layers", [](RunConfig& c, const std::string& v) { c.model.hidden_layers = to_u64(v); }},
      {"model.dropout_rate", [](RunConfig& c, const std::string& v) { c.model.dropout_rate = to_double(v); }},
      {"model.temperature", [](RunConfig& c, const std::string& v) { c.model.temperature = to_double(v); }},
      {"model.loss_weight", [](RunConfig& c, const std::string& v) { c.model.loss_weight = to_double(v); }},
      {"model.loss_mode", [](RunConfig& c, const std::string& v) { c.model.loss_mode = parsed(parse_loss_mode, v); }},
      {"model.target_mode", [](RunConfig& c, const std::string& v) { c.model.target_mode = parsed(parse_target_mode, v); }},
      {"model.input_mode", [](RunConfig& c, const std::string& v) { c.model.input_mode = parsed(parse_input_mode, v); }},
      {"model.inference_samples", [](RunConfig& c, const std::string& v) { c.model.inference_samples = to_u64(v); }},
      {"model.decoder_batchnorm", [](RunConfig& c, const std::string& v) { c.model.decoder_batchnorm = to_bool(v); }},
      {"model.prior_alpha", [](RunConfig& c, const std::string& v) { c.model.prior_alpha = to_double(v); }},
      {"model.prior_weight", [](RunConfig& c, const std::string& v) { c.model.prior_weight = to_double(v); }},
      {"model.bn_momentum", [](RunConfig& c, const std::string& v) { c.model.bn_momentum = to_double(v); }},
      {"model.bn_epsilon", [](RunConfig& c, const std::string& v) { c.model.bn_epsilon = to_double(v); }},

      {"train.learning_rate", [](RunConfig& c, const std::string& v) { c.train.learning_rate = to_double(v); }},
      {"train.epochs", [](RunConfig& c, const std::string& v) { c.train.epochs = to_u64(v); }},
      {"train.batch_size", [](RunConfig& c, const std::string& v) { c.train.batch_size = to_u64(v); }},
      {"train.adam_beta1", [](RunConfig& c, const std::string& v) { c.train.adam_beta1 = to_double(v); }},
      {"train.adam_beta2", [](RunConfig& c, const std::string& v) { c.train.adam_beta2 = to_double(v); }},
      {"train.adam_epsilon", [](RunConfig& c, const std::string& v) { c.train.adam_epsilon = to_double(v); }},
      {"train.lr_schedule",
       [](RunConfig& c, const std::string& v) {
         if (v == "cosine") c.train.lr_schedule = LrSchedule::cosine;
         else if (v == "constant") c.train.lr_schedule = LrSchedule::constant;
         else throw ConfigError("lr_schedule must be cosine or constant, got '" + v + "'");
       }},
      {"train.checkpoint_every", [](RunConfig& c, const std::string& v) { c.train.checkpoint_every = to_u64(v); }},

      {"eval.metrics", [](RunConfig& c, const std::string& v) { c.eval.metrics = split_list(v); }},
      {"eval.top_n", [](RunConfig& c, const std::string& v) { c.eval.top_n = to_u64(v); }},
      {"eval.rbo_p", [](RunConfig& c, const std::string& v) { c.eval.rbo_p = to_double(v); }},
      {"eval.divergence",
       [](RunConfig& c, const std::string& v) {
         if (v == "query_first") c.eval.divergence = RetrievalDivergence::query_first;
         else if (v == "symmetric") c.eval.divergence = RetrievalDivergence::symmetric;
         else throw ConfigError("divergence must be query_first or symmetric, got '" + v + "'");
       }},

      {"synth.num_topics", [](RunConfig& c, const std::string& v) { c.synth.num_topics = to_u64(v); }},
      {"synth.vocab_size", [](RunConfig& c, const std::string& v) { c.synth.vocab_size = to_u64(v); }},
      {"synth.docs_per_topic", [](RunConfig& c, const std::string& v) { c.synth.docs_per_topic = to_u64(v); }},
      {"synth.doc_length", [](RunConfig& c, const std::string& v) { c.synth.doc_length = to_double(v); }},
      {"synth.topic_concentration", [](RunConfig& c, const std::string& v) { c.synth.topic_concentration = to_double(v); }},
      {"synth.doc_topic_mode",
       [](RunConfig& c, const std::string& v) {
         if (v == "single") c.synth.doc_topic_mode = DocTopicMode::single;
         else if (v == "mixed") c.synth.doc_topic_mode = DocTopicMode::mixed;
         else throw ConfigError("doc_topic_mode must be single or mixed, got '" + v + "'");
       }},
      {"synth.mixed_alpha", [](RunConfig& c, const std::string& v) { c.synth.mixed_alpha = to_double(v); }},
      {"synth.beta_mode",
       [](RunConfig& c, const std::string& v) {
         if (v == "block") c.synth.beta_mode = BetaMode::block;
         else if (v == "dirichlet") c.synth.beta_mode = BetaMode::dirichlet;
         else throw ConfigError("beta_mode must be block or dirichlet, got '" + v + "'");
       }},
      {"synth.off_block_ratio", [](RunConfig& c, const std::string& v) { c.synth.off_block_ratio = to_double(v); }},
      {"synth.embed_dim", [](RunConfig& c, const std::string& v) { c.synth.embed_dim = to_u64(v); }},
      {"synth.embed_noise_sigma", [](RunConfig& c, const std::string& v) { c.synth.embed_noise_sigma = to_double(v); }},
      {"synth.temperature", [](RunConfig& c, const std::string& v) { c.synth_temperature = to_double(v); }},

      {"sweep.seeds",
       [](RunConfig& c, const std::string& v) {
         c.sweep_seeds.clear();
         for (const auto& s : split_list(v)) c.sweep_seeds.push_back(to_u64(s));
       }},
      {"sweep.threads", [](RunConfig& c, const std::string& v) { c.sweep_threads = to_u64(v); }},
      {"sweep.axes",
       [](RunConfig& c, const std::string& v) {
         std::istringstream in(v);
         std::string item;
         c.sweep_axes.clear();
         while (std::getline(in, item, ';'))
           if (!trim(item).empty()) c.sweep_axes.push_back(trim(item));
       }},
  };
  return table;
}

}  // namespace

void RunConfig::apply_seed(std::uint64_t s) {
  seed = s;
  train.seed = s;
  synth.seed = s;
}

RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir) {
  RunConfig config;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  std::map<std::string, std::size_t> seen;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto where = [&] { return "config line " + std::to_string(line_no) + ": "; };
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where() + "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where() + "expected key = value");
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!section.empty()) key = section + "." + key;
    const auto it = schema().find(key);
    if (it == schema().end()) throw ConfigError(where() + "unknown key '" + key + "'");
    if (seen.count(key))
      throw ConfigError(where() + "duplicate key '" + key + "' (first set on line " +
                        std::to_string(seen[key]) + ")");
    seen[key] = line_no;
    try {
      it->second(config, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where() + key + ": " + e.what());
    }
  }
  config.apply_seed(config.seed);
  if (config.data && config.data->is_relative() && !base_dir.empty()) config.data = base_dir / *config.data;
  if (config.out && config.out->is_relative() && !base_dir.empty()) config.out = base_dir / *config.out;
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open config: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), path.parent_path());
}

std::vector<std::string> run_config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : schema()) keys.push_back(k);
  return keys;
}

}  // namespace softtopic::cli
