// SPDX-License-Identifier: Apache-2.0
#include "softtopic/topicmodel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "softtopic/dtm.hpp"
#include "softtopic/error.hpp"

namespace softtopic {
namespace {

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// out = in * W^T + b, in: B x I, W: O x I, b: 1 x O.
Matrix affine(const Matrix& in, const Matrix& w, const Matrix& b) {
  Matrix out(in.rows(), w.rows());
  for (std::size_t r = 0; r < in.rows(); ++r) {
    const auto x = in.row(r);
    auto y = out.row(r);
    for (std::size_t o = 0; o < w.rows(); ++o) {
      const auto wr = w.row(o);
      double s = b(0, o);
      for (std::size_t i = 0; i < x.size(); ++i) s += wr[i] * x[i];
      y[o] = s;
    }
  }
  return out;
}

// Accumulates the gradients of an affine map: dW += d^T in, db += sum_rows d.
// Returns d * W (gradient wrt the input) when `need_input` is set.
Matrix affine_backward(const Matrix& in, const Matrix& w, const Matrix& d, Matrix& dw, Matrix& db,
                       bool need_input) {
  for (std::size_t r = 0; r < d.rows(); ++r) {
    const auto x = in.row(r);
    const auto g = d.row(r);
    for (std::size_t o = 0; o < w.rows(); ++o) {
      if (g[o] == 0.0) continue;
      auto dwr = dw.row(o);
      for (std::size_t i = 0; i < x.size(); ++i) dwr[i] += g[o] * x[i];
      db(0, o) += g[o];
    }
  }
  if (!need_input) return {};
  Matrix din(d.rows(), w.cols());
  for (std::size_t r = 0; r < d.rows(); ++r) {
    const auto g = d.row(r);
    auto out = din.row(r);
    for (std::size_t o = 0; o < w.rows(); ++o) {
      if (g[o] == 0.0) continue;
      const auto wr = w.row(o);
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += g[o] * wr[i];
    }
  }
  return din;
}

Matrix glorot(std::size_t out, std::size_t in, Rng& rng) {
  Matrix w(out, in);
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  for (double& v : w.values()) v = (2.0 * rng.uniform() - 1.0) * limit;
  return w;
}

std::vector<double> to_vector(std::span<const double> s) { return {s.begin(), s.end()}; }

Matrix row_matrix(std::span<const double> x) {
  Matrix m(1, x.size());
  std::copy(x.begin(), x.end(), m.row(0).begin());
  return m;
}

// Everything the backward pass needs from one training/inference forward.
struct Forward {
  std::vector<Matrix> pre;  // per hidden layer, before softplus
  std::vector<Matrix> act;  // per hidden layer, after softplus
  Matrix hidden;            // encoder output after dropout
  Matrix mu, logvar, sigma, theta;
  Matrix logits;      // theta * beta
  Matrix normalized;  // batch-normalised logits (== logits without batchnorm)
  Matrix inv_std;     // 1 x V
  Matrix bn_mean, bn_var;
  Matrix log_pred;  // log-softmax of normalized
};

void check_input(const Matrix& inputs, const ModelConfig& config) {
  if (inputs.cols() != config.input_dim)
    throw InputError("input dimension " + std::to_string(inputs.cols()) + " != configured " +
                     std::to_string(config.input_dim));
  if (!all_finite(inputs.values())) throw InputError("non-finite input embedding");
}

void encode_forward(const Matrix& inputs, const ModelParams& params, const Noise& noise,
                    Forward& f) {
  const auto& w = params.weights;
  const Matrix* cur = &inputs;
  for (std::size_t l = 0; l < w.hidden_weight.size(); ++l) {
    f.pre.push_back(affine(*cur, w.hidden_weight[l], w.hidden_bias[l]));
    Matrix a = f.pre.back();
    for (double& v : a.values()) v = softplus(v);
    f.act.push_back(std::move(a));
    cur = &f.act.back();
  }
  f.hidden = *cur;
  if (!noise.dropout_scale.empty()) {
    auto h = f.hidden.values();
    const auto s = noise.dropout_scale.values();
    for (std::size_t i = 0; i < h.size(); ++i) h[i] *= s[i];
  }
  f.mu = affine(f.hidden, w.mu_weight, w.mu_bias);
  f.logvar = affine(f.hidden, w.logvar_weight, w.logvar_bias);
}

void sample_forward(const Noise& noise, Forward& f) {
  f.sigma = f.logvar;
  for (double& v : f.sigma.values()) v = std::exp(0.5 * v);
  f.theta = Matrix(f.mu.rows(), f.mu.cols());
  for (std::size_t r = 0; r < f.mu.rows(); ++r) {
    auto t = f.theta.row(r);
    for (std::size_t k = 0; k < t.size(); ++k)
      t[k] = f.mu(r, k) + f.sigma(r, k) * noise.eps(r, k);
    softmax_inplace(t);
  }
}

void decode_forward(const ModelParams& params, const ModelConfig& config, bool training,
                    Forward& f) {
  const Matrix& beta = params.weights.beta;
  const std::size_t n = f.theta.rows();
  const std::size_t V = beta.cols();
  f.logits = Matrix(n, V);
  for (std::size_t r = 0; r < n; ++r) {
    auto out = f.logits.row(r);
    for (std::size_t k = 0; k < beta.rows(); ++k) {
      const double t = f.theta(r, k);
      const auto br = beta.row(k);
      for (std::size_t v = 0; v < V; ++v) out[v] += t * br[v];
    }
  }
  f.normalized = f.logits;
  if (config.decoder_batchnorm) {
    f.inv_std = Matrix(1, V);
    if (training) {
      f.bn_mean = Matrix(1, V);
      f.bn_var = Matrix(1, V);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t v = 0; v < V; ++v) f.bn_mean(0, v) += f.logits(r, v);
      for (std::size_t v = 0; v < V; ++v) f.bn_mean(0, v) /= static_cast<double>(n);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t v = 0; v < V; ++v) {
          const double d = f.logits(r, v) - f.bn_mean(0, v);
          f.bn_var(0, v) += d * d;
        }
      for (std::size_t v = 0; v < V; ++v) f.bn_var(0, v) /= static_cast<double>(n);
    }
    const Matrix& mean = training ? f.bn_mean : params.bn.running_mean;
    const Matrix& var = training ? f.bn_var : params.bn.running_var;
    for (std::size_t v = 0; v < V; ++v) f.inv_std(0, v) = 1.0 / std::sqrt(var(0, v) + config.bn_epsilon);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t v = 0; v < V; ++v)
        f.normalized(r, v) = (f.logits(r, v) - mean(0, v)) * f.inv_std(0, v);
  }
  f.log_pred = f.normalized;
  for (std::size_t r = 0; r < n; ++r) {
    auto row = f.log_pred.row(r);
    const double lse = log_sum_exp(row);
    for (double& v : row) v -= lse;
  }
}

Forward forward(const Matrix& inputs, const ModelParams& params, const ModelConfig& config,
                const Noise& noise, bool training) {
  check_input(inputs, config);
  if (noise.eps.rows() != inputs.rows() || noise.eps.cols() != config.num_topics)
    throw InputError("noise shape does not match batch");
  Forward f;
  encode_forward(inputs, params, noise, f);
  sample_forward(noise, f);
  decode_forward(params, config, training, f);
  return f;
}

double prior_kl_row(std::span<const double> mu, std::span<const double> logvar,
                    std::span<const double> prior_mu, std::span<const double> prior_logvar) {
  double s = 0.0;
  for (std::size_t k = 0; k < mu.size(); ++k) {
    const double prior_var = std::exp(prior_logvar[k]);
    const double d = mu[k] - prior_mu[k];
    s += (std::exp(logvar[k]) + d * d) / prior_var - 1.0 + prior_logvar[k] - logvar[k];
  }
  return 0.5 * s;
}

double recon_weight(const ModelConfig& config) {
  return config.loss_mode == LossMode::kl ? config.loss_weight : 1.0;
}

// Per-document reconstruction loss from log-probabilities.
double recon_from_log(std::span<const double> log_pred, std::span<const double> target,
                      LossMode mode) {
  double s = 0.0;
  const double log_floor = std::log(kProbabilityFloor);
  for (std::size_t v = 0; v < log_pred.size(); ++v) {
    if (mode == LossMode::kl) {
      const double p = std::exp(log_pred[v]);
      if (p > 0.0) s += p * (log_pred[v] - std::log(std::max(target[v], kProbabilityFloor)));
    } else if (target[v] != 0.0) {
      s -= target[v] * std::max(log_pred[v], log_floor);
    }
  }
  return s;
}

LossBreakdown loss_from_forward(const Forward& f, const Batch& batch, const ModelParams& params,
                                const ModelConfig& config) {
  const std::size_t n = batch.inputs.rows();
  LossBreakdown out;
  for (std::size_t r = 0; r < n; ++r) {
    out.recon += recon_from_log(f.log_pred.row(r), batch.targets.row(r), config.loss_mode);
    out.prior += prior_kl_row(f.mu.row(r), f.logvar.row(r), params.weights.prior_mu.row(0),
                              params.weights.prior_logvar.row(0));
  }
  out.recon /= static_cast<double>(n);
  out.prior /= static_cast<double>(n);
  out.total = recon_weight(config) * out.recon + config.prior_weight * out.prior;
  return out;
}

void check_batch(const Batch& batch, const ModelConfig& config) {
  if (batch.inputs.rows() == 0) throw InputError("empty batch");
  if (batch.targets.rows() != batch.inputs.rows())
    throw InputError("batch targets and inputs disagree on row count");
  if (batch.targets.cols() != config.vocab_size)
    throw InputError("target width " + std::to_string(batch.targets.cols()) +
                     " != vocabulary size " + std::to_string(config.vocab_size));
}

void require_finite(const Matrix& m, const std::string& name) {
  if (!all_finite(m.values())) throw NumericalError("non-finite gradient in " + name);
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

}  // namespace

std::string to_string(LossMode m) { return m == LossMode::kl ? "kl" : "nll"; }
std::string to_string(TargetMode m) { return m == TargetMode::soft ? "soft" : "bow"; }
std::string to_string(InputMode m) { return m == InputMode::hidden ? "hidden" : "external"; }

LossMode parse_loss_mode(std::string_view s) {
  if (s == "kl") return LossMode::kl;
  if (s == "nll") return LossMode::nll;
  throw ConfigError("unknown loss_mode: " + std::string(s) + " (expected kl|nll)");
}
TargetMode parse_target_mode(std::string_view s) {
  if (s == "soft") return TargetMode::soft;
  if (s == "bow") return TargetMode::bow;
  throw ConfigError("unknown target_mode: " + std::string(s) + " (expected soft|bow)");
}
InputMode parse_input_mode(std::string_view s) {
  if (s == "hidden") return InputMode::hidden;
  if (s == "external") return InputMode::external;
  throw ConfigError("unknown input_mode: " + std::string(s) + " (expected hidden|external)");
}

double ModelConfig::alpha() const {
  return prior_alpha ? *prior_alpha : 1.0 / static_cast<double>(num_topics);
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
  if (num_topics == 0) fail("num_topics must be >= 1");
  if (input_dim == 0) fail("input_dim must be >= 1");
  if (vocab_size == 0) fail("vocab_size must be >= 1");
  if (hidden_dim == 0) fail("hidden_dim must be >= 1");
  if (hidden_layers == 0) fail("hidden_layers must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout_rate must be in [0, 1)");
  if (!(temperature > 0.0)) fail("temperature must be > 0");
  if (!(loss_weight >= 0.0)) fail("loss_weight must be >= 0");
  if (inference_samples == 0) fail("inference_samples must be >= 1");
  if (!(alpha() > 0.0)) fail("prior_alpha must be > 0");
  if (!(prior_weight >= 0.0)) fail("prior_weight must be >= 0");
  if (!(bn_momentum >= 0.0 && bn_momentum < 1.0)) fail("bn_momentum must be in [0, 1)");
  if (!(bn_epsilon > 0.0)) fail("bn_epsilon must be > 0");
}

std::string ModelConfig::to_text() const {
  std::map<std::string, std::string> kv;
  kv["num_topics"] = std::to_string(num_topics);
  kv["input_dim"] = std::to_string(input_dim);
  kv["vocab_size"] = std::to_string(vocab_size);
  kv["hidden_dim"] = std::to_string(hidden_dim);
  kv["hidden_layers"] = std::to_string(hidden_layers);
  kv["dropout_rate"] = format_double(dropout_rate);
  kv["temperature"] = format_double(temperature);
  kv["loss_weight"] = format_double(loss_weight);
  kv["loss_mode"] = to_string(loss_mode);
  kv["target_mode"] = to_string(target_mode);
  kv["input_mode"] = to_string(input_mode);
  kv["inference_samples"] = std::to_string(inference_samples);
  kv["decoder_batchnorm"] = decoder_batchnorm ? "true" : "false";
  if (prior_alpha) kv["prior_alpha"] = format_double(*prior_alpha);
  kv["prior_weight"] = format_double(prior_weight);
  kv["bn_momentum"] = format_double(bn_momentum);
  kv["bn_epsilon"] = format_double(bn_epsilon);
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

ModelConfig ModelConfig::from_text(std::string_view text) {
  ModelConfig c;
  std::istringstream in{std::string(text)};
  std::string line;
  auto to_size = [](const std::string& k, const std::string& v) {
    std::size_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
      throw ConfigError("bad integer for " + k + ": " + v);
    return out;
  };
  auto to_double = [](const std::string& k, const std::string& v) {
    try {
      std::size_t pos = 0;
      const double d = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      throw ConfigError("bad number for " + k + ": " + v);
    }
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("malformed config line: " + line);
    const std::string k = line.substr(0, eq), v = line.substr(eq + 1);
    if (k == "num_topics") c.num_topics = to_size(k, v);
    else if (k == "input_dim") c.input_dim = to_size(k, v);
    else if (k == "vocab_size") c.vocab_size = to_size(k, v);
    else if (k == "hidden_dim") c.hidden_dim = to_size(k, v);
    else if (k == "hidden_layers") c.hidden_layers = to_size(k, v);
    else if (k == "dropout_rate") c.dropout_rate = to_double(k, v);
    else if (k == "temperature") c.temperature = to_double(k, v);
    else if (k == "loss_weight") c.loss_weight = to_double(k, v);
    else if (k == "loss_mode") c.loss_mode = parse_loss_mode(v);
    else if (k == "target_mode") c.target_mode = parse_target_mode(v);
    else if (k == "input_mode") c.input_mode = parse_input_mode(v);
    else if (k == "inference_samples") c.inference_samples = to_size(k, v);
    else if (k == "decoder_batchnorm") {
      if (v != "true" && v != "false") throw ConfigError("bad boolean for " + k + ": " + v);
      c.decoder_batchnorm = v == "true";
    } else if (k == "prior_alpha") c.prior_alpha = to_double(k, v);
    else if (k == "prior_weight") c.prior_weight = to_double(k, v);
    else if (k == "bn_momentum") c.bn_momentum = to_double(k, v);
    else if (k == "bn_epsilon") c.bn_epsilon = to_double(k, v);
    else throw ConfigError("unknown model config key: " + k);
  }
  return c;
}

void ParamSet::for_each(const std::function<void(const std::string&, Matrix&)>& fn) {
  for (std::size_t l = 0; l < hidden_weight.size(); ++l) {
    fn("hidden." + std::to_string(l) + ".weight", hidden_weight[l]);
    fn("hidden." + std::to_string(l) + ".bias", hidden_bias[l]);
  }
  fn("mu.weight", mu_weight);
  fn("mu.bias", mu_bias);
  fn("logvar.weight", logvar_weight);
  fn("logvar.bias", logvar_bias);
  fn("beta", beta);
  fn("prior.mu", prior_mu);
  fn("prior.logvar", prior_logvar);
}

void ParamSet::for_each(const std::function<void(const std::string&, const Matrix&)>& fn) const {
  const_cast<ParamSet*>(this)->for_each(
      [&](const std::string& name, Matrix& m) { fn(name, static_cast<const Matrix&>(m)); });
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out = *this;
  out.for_each([](const std::string&, Matrix& m) { m.fill(0.0); });
  return out;
}

void laplace_prior(std::size_t num_topics, double alpha, Matrix& mu, Matrix& logvar) {
  // Symmetric alpha: mu_k = log a - mean(log a) = 0 and
  // var_k = (1/a)(1 - 2/K) + (1/K^2) sum_j 1/a = (K - 1) / (a K).
  const double K = static_cast<double>(num_topics);
  double var = (K - 1.0) / (alpha * K);
  // K = 1 has a degenerate (zero-variance) approximation; theta is constant
  // there anyway, so a unit prior keeps the KL finite.
  if (!(var > 0.0)) var = 1.0;
  mu = Matrix(1, num_topics, 0.0);
  logvar = Matrix(1, num_topics, std::log(var));
}

ModelParams init_params(const ModelConfig& config, Rng& rng) {
  config.validate();
  ModelParams p;
  auto& w = p.weights;
  std::size_t in = config.input_dim;
  for (std::size_t l = 0; l < config.hidden_layers; ++l) {
    w.hidden_weight.push_back(glorot(config.hidden_dim, in, rng));
    w.hidden_bias.emplace_back(1, config.hidden_dim, 0.0);
    in = config.hidden_dim;
  }
  w.mu_weight = glorot(config.num_topics, config.hidden_dim, rng);
  w.mu_bias = Matrix(1, config.num_topics, 0.0);
  w.logvar_weight = glorot(config.num_topics, config.hidden_dim, rng);
  w.logvar_bias = Matrix(1, config.num_topics, 0.0);
  w.beta = glorot(config.num_topics, config.vocab_size, rng);
  laplace_prior(config.num_topics, config.alpha(), w.prior_mu, w.prior_logvar);
  p.bn.running_mean = Matrix(1, config.vocab_size, 0.0);
  p.bn.running_var = Matrix(1, config.vocab_size, 1.0);
  return p;
}

Noise draw_noise(std::size_t batch, const ModelConfig& config, bool training, Rng& rng) {
  Noise n;
  if (training && config.dropout_rate > 0.0) {
    n.dropout_scale = Matrix(batch, config.hidden_dim);
    const double keep = 1.0 - config.dropout_rate;
    for (double& v : n.dropout_scale.values()) v = rng.uniform() < keep ? 1.0 / keep : 0.0;
  }
  n.eps = Matrix(batch, config.num_topics);
  for (double& v : n.eps.values()) v = rng.normal();
  return n;
}

Posterior encode(std::span<const double> x, const ModelParams& params, const ModelConfig& config,
                 bool training, Rng& rng) {
  const Matrix in = row_matrix(x);
  check_input(in, config);
  Noise noise;
  if (training && config.dropout_rate > 0.0) {
    noise.dropout_scale = Matrix(1, config.hidden_dim);
    const double keep = 1.0 - config.dropout_rate;
    for (double& v : noise.dropout_scale.values()) v = rng.uniform() < keep ? 1.0 / keep : 0.0;
  }
  Forward f;
  encode_forward(in, params, noise, f);
  return {to_vector(f.mu.row(0)), to_vector(f.logvar.row(0))};
}

std::vector<double> sample_theta(const Posterior& post, Rng& rng) {
  std::vector<double> theta(post.mu.size());
  for (std::size_t k = 0; k < theta.size(); ++k)
    theta[k] = post.mu[k] + std::exp(0.5 * post.logvar[k]) * rng.normal();
  softmax_inplace(theta);
  return theta;
}

Matrix decode_batch(const Matrix& theta, const ModelParams& params, const ModelConfig& config,
                    bool training) {
  if (theta.cols() != params.weights.beta.rows())
    throw InputError("theta width does not match the number of topics");
  Forward f;
  f.theta = theta;
  decode_forward(params, config, training, f);
  Matrix out = f.log_pred;
  for (double& v : out.values()) v = std::exp(v);
  return out;
}

std::vector<double> decode(std::span<const double> theta, const ModelParams& params,
                           const ModelConfig& config, bool training) {
  return to_vector(decode_batch(row_matrix(theta), params, config, training).row(0));
}

double prior_kl(const Posterior& post, std::span<const double> prior_mu,
                std::span<const double> prior_logvar) {
  return prior_kl_row(post.mu, post.logvar, prior_mu, prior_logvar);
}

double recon_loss_kl(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) throw InputError("pred/target size mismatch");
  double s = 0.0;
  for (std::size_t v = 0; v < pred.size(); ++v)
    if (pred[v] > 0.0) s += pred[v] * std::log(pred[v] / std::max(target[v], kProbabilityFloor));
  return s;
}

double recon_loss_nll(std::span<const double> pred, std::span<const double> weights) {
  if (pred.size() != weights.size()) throw InputError("pred/weights size mismatch");
  double s = 0.0;
  for (std::size_t v = 0; v < pred.size(); ++v)
    if (weights[v] != 0.0) s -= weights[v] * std::log(std::max(pred[v], kProbabilityFloor));
  return s;
}

double recon_loss_nll(std::span<const double> pred, const BowVector& bow) {
  double s = 0.0;
  for (const auto& [idx, count] : bow.entries) {
    if (idx >= pred.size()) throw InputError("bow index out of range");
    s -= count * std::log(std::max(pred[idx], kProbabilityFloor));
  }
  return s;
}

LossBreakdown total_loss(const Batch& batch, const ModelParams& params, const ModelConfig& config,
                         const Noise& noise) {
  check_batch(batch, config);
  const Forward f = forward(batch.inputs, params, config, noise, true);
  return loss_from_forward(f, batch, params, config);
}

LossBreakdown total_loss(const Batch& batch, const ModelParams& params, const ModelConfig& config,
                         Rng& rng) {
  return total_loss(batch, params, config, draw_noise(batch.inputs.rows(), config, true, rng));
}

GradientResult gradients(const Batch& batch, const ModelParams& params, const ModelConfig& config,
                         Rng& rng) {
  return gradients(batch, params, config, draw_noise(batch.inputs.rows(), config, true, rng));
}

GradientResult gradients(const Batch& batch, const ModelParams& params, const ModelConfig& config,
                         const Noise& noise) {
  check_batch(batch, config);
  const Forward f = forward(batch.inputs, params, config, noise, true);
  const auto& w = params.weights;
  const std::size_t n = batch.inputs.rows();
  const std::size_t K = config.num_topics;
  const std::size_t V = config.vocab_size;
  const double inv_n = 1.0 / static_cast<double>(n);

  GradientResult out;
  out.loss = loss_from_forward(f, batch, params, config);
  if (!std::isfinite(out.loss.total)) throw NumericalError("non-finite loss");
  out.grads = w.zeros_like();
  auto& g = out.grads;

  // d loss / d normalized logits.
  const double rw = recon_weight(config) * inv_n;
  Matrix d_norm(n, V);
  for (std::size_t r = 0; r < n; ++r) {
    const auto lp = f.log_pred.row(r);
    const auto t = batch.targets.row(r);
    auto d = d_norm.row(r);
    if (config.loss_mode == LossMode::kl) {
      // d/du_j sum_v p_v (log p_v - log t_v) = p_j (log p_j - log t_j - KL)
      double kl = 0.0;
      for (std::size_t v = 0; v < V; ++v) {
        const double p = std::exp(lp[v]);
        d[v] = p > 0.0 ? lp[v] - std::log(std::max(t[v], kProbabilityFloor)) : 0.0;
        kl += p * d[v];
      }
      for (std::size_t v = 0; v < V; ++v) d[v] = rw * std::exp(lp[v]) * (d[v] - kl);
    } else {
      // Floored entries contribute a constant, so they carry no gradient.
      const double log_floor = std::log(kProbabilityFloor);
      double active = 0.0;
      for (std::size_t v = 0; v < V; ++v)
        if (lp[v] > log_floor) active += t[v];
      for (std::size_t v = 0; v < V; ++v)
        d[v] = rw * (std::exp(lp[v]) * active - (lp[v] > log_floor ? t[v] : 0.0));
    }
  }

  // Batchnorm backward (batch statistics, no affine).
  Matrix d_logits = d_norm;
  if (config.decoder_batchnorm) {
    for (std::size_t v = 0; v < V; ++v) {
      double mean_d = 0.0, mean_dx = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        mean_d += d_norm(r, v);
        mean_dx += d_norm(r, v) * f.normalized(r, v);
      }
      mean_d *= inv_n;
      mean_dx *= inv_n;
      for (std::size_t r = 0; r < n; ++r)
        d_logits(r, v) = f.inv_std(0, v) * (d_norm(r, v) - mean_d - f.normalized(r, v) * mean_dx);
    }
    out.bn_batch_mean = f.bn_mean;
    out.bn_batch_var = f.bn_var;
  }

  // logits = theta * beta
  Matrix d_theta(n, K);
  for (std::size_t r = 0; r < n; ++r) {
    const auto dl = d_logits.row(r);
    for (std::size_t k = 0; k < K; ++k) {
      const auto br = w.beta.row(k);
      auto gb = g.beta.row(k);
      const double t = f.theta(r, k);
      double s = 0.0;
      for (std::size_t v = 0; v < V; ++v) {
        gb[v] += t * dl[v];
        s += br[v] * dl[v];
      }
      d_theta(r, k) = s;
    }
  }

  // theta = softmax(z), z = mu + sigma * eps, plus the prior KL term.
  const double pw = config.prior_weight * inv_n;
  Matrix d_mu(n, K), d_logvar(n, K);
  for (std::size_t r = 0; r < n; ++r) {
    double dot = 0.0;
    for (std::size_t k = 0; k < K; ++k) dot += f.theta(r, k) * d_theta(r, k);
    for (std::size_t k = 0; k < K; ++k) {
      const double dz = f.theta(r, k) * (d_theta(r, k) - dot);
      const double prior_var = std::exp(w.prior_logvar(0, k));
      const double diff = f.mu(r, k) - w.prior_mu(0, k);
      const double var = f.sigma(r, k) * f.sigma(r, k);
      d_mu(r, k) = dz + pw * diff / prior_var;
      d_logvar(r, k) = dz * noise.eps(r, k) * 0.5 * f.sigma(r, k) + pw * 0.5 * (var / prior_var - 1.0);
      g.prior_mu(0, k) -= pw * diff / prior_var;
      g.prior_logvar(0, k) += pw * 0.5 * (1.0 - (var + diff * diff) / prior_var);
    }
  }

  // Posterior heads.
  Matrix d_hidden = affine_backward(f.hidden, w.mu_weight, d_mu, g.mu_weight, g.mu_bias, true);
  const Matrix d_hidden_lv =
      affine_backward(f.hidden, w.logvar_weight, d_logvar, g.logvar_weight, g.logvar_bias, true);
  for (std::size_t i = 0; i < d_hidden.size(); ++i) d_hidden.data()[i] += d_hidden_lv.data()[i];
  if (!noise.dropout_scale.empty())
    for (std::size_t i = 0; i < d_hidden.size(); ++i) d_hidden.data()[i] *= noise.dropout_scale.data()[i];

  // Hidden stack.
  for (std::size_t l = w.hidden_weight.size(); l-- > 0;) {
    Matrix d_pre = d_hidden;
    const auto pre = f.pre[l].values();
    for (std::size_t i = 0; i < pre.size(); ++i) d_pre.data()[i] *= sigmoid(pre[i]);
    const Matrix& in = l == 0 ? batch.inputs : f.act[l - 1];
    d_hidden = affine_backward(in, w.hidden_weight[l], d_pre, g.hidden_weight[l], g.hidden_bias[l], l > 0);
  }

  g.for_each([](const std::string& name, const Matrix& m) { require_finite(m, name); });
  return out;
}

void update_batchnorm(BatchNormState& bn, const GradientResult& g, std::size_t batch_size,
                      double momentum) {
  if (g.bn_batch_mean.empty()) return;
  // Running variance tracks the unbiased batch estimate.
  const double unbias =
      batch_size > 1 ? static_cast<double>(batch_size) / static_cast<double>(batch_size - 1) : 1.0;
  for (std::size_t v = 0; v < bn.running_mean.cols(); ++v) {
    bn.running_mean(0, v) = momentum * bn.running_mean(0, v) + (1.0 - momentum) * g.bn_batch_mean(0, v);
    bn.running_var(0, v) =
        momentum * bn.running_var(0, v) + (1.0 - momentum) * g.bn_batch_var(0, v) * unbias;
  }
}

std::vector<double> infer_theta(std::span<const double> x, const ModelParams& params,
                                const ModelConfig& config, Rng& rng) {
  const Posterior post = encode(x, params, config, false, rng);
  std::vector<double> mean(config.num_topics, 0.0);
  for (std::size_t s = 0; s < config.inference_samples; ++s) {
    const auto theta = sample_theta(post, rng);
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += theta[k];
  }
  double total = 0.0;
  for (double& v : mean) {
    v /= static_cast<double>(config.inference_samples);
    total += v;
  }
  for (double& v : mean) v /= total;
  return mean;
}

Matrix infer_theta_matrix(const Matrix& inputs, const ModelParams& params,
                          const ModelConfig& config, Rng& rng) {
  Matrix out(inputs.rows(), config.num_topics);
  for (std::size_t r = 0; r < inputs.rows(); ++r) {
    const auto theta = infer_theta(inputs.row(r), params, config, rng);
    std::copy(theta.begin(), theta.end(), out.row(r).begin());
  }
  return out;
}

std::vector<std::vector<std::size_t>> top_word_indices(const Matrix& beta, std::size_t n) {
  if (n > beta.cols()) throw InputError("top-n exceeds vocabulary size");
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t k = 0; k < beta.rows(); ++k) {
    std::vector<std::size_t> idx(beta.cols());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const auto row = beta.row(k);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
    idx.resize(n);
    out.push_back(std::move(idx));
  }
  return out;
}

std::vector<std::vector<std::string>> top_words(const Matrix& beta, const Vocabulary& vocab,
                                                std::size_t n) {
  if (beta.cols() != vocab.size()) throw InputError("beta width does not match vocabulary");
  std::vector<std::vector<std::string>> out;
  for (const auto& idx : top_word_indices(beta, n)) {
    std::vector<std::string> words;
    for (std::size_t i : idx) words.push_back(vocab.word(i));
    out.push_back(std::move(words));
  }
  return out;
}

std::string checkpoint_bytes(const ModelConfig& config, const ModelParams& params) {
  std::string out = "STCK";
  put_u32(out, kCheckpointVersion);
  const std::string text = config.to_text();
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  std::vector<std::pair<std::string, const Matrix*>> tensors;
  params.weights.for_each(
      [&](const std::string& name, const Matrix& m) { tensors.emplace_back(name, &m); });
  tensors.emplace_back("bn.running_mean", &params.bn.running_mean);
  tensors.emplace_back("bn.running_var", &params.bn.running_var);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, m] : tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    out += dtm1_bytes(*m);
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const ModelParams& params) {
  const std::string bytes = checkpoint_bytes(config, params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("write failed: " + path.string());
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  std::istringstream in{std::string(bytes), std::ios::binary};
  auto read_u32 = [&](const char* what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
      throw FormatError(std::string("checkpoint truncated reading ") + what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  };
  auto read_str = [&](std::uint32_t n, const char* what) {
    std::string s(n, '\0');
    if (n > 0 && !in.read(s.data(), n))
      throw FormatError(std::string("checkpoint truncated reading ") + what);
    return s;
  };
  if (read_str(4, "magic") != "STCK") throw FormatError("checkpoint magic mismatch");
  if (const auto v = read_u32("version"); v != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(v));
  Checkpoint ck;
  ck.config = ModelConfig::from_text(read_str(read_u32("config length"), "config"));
  ck.config.validate();

  // Shapes come from a freshly initialised model so the file is checked
  // against the configuration it carries.
  Rng shape_rng(0);
  ck.params = init_params(ck.config, shape_rng);
  std::vector<std::pair<std::string, Matrix*>> expected;
  ck.params.weights.for_each(
      [&](const std::string& name, Matrix& m) { expected.emplace_back(name, &m); });
  expected.emplace_back("bn.running_mean", &ck.params.bn.running_mean);
  expected.emplace_back("bn.running_var", &ck.params.bn.running_var);

  const std::uint32_t count = read_u32("tensor count");
  if (count != expected.size())
    throw FormatError("checkpoint holds " + std::to_string(count) + " tensors, expected " +
                      std::to_string(expected.size()));
  for (auto& [name, target] : expected) {
    const std::string got = read_str(read_u32("tensor name length"), "tensor name");
    if (got != name) throw FormatError("checkpoint tensor order: expected " + name + ", got " + got);
    Matrix m = read_dtm1(in);
    if (m.rows() != target->rows() || m.cols() != target->cols())
      throw FormatError("checkpoint tensor " + name + " has wrong shape");
    *target = std::move(m);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("checkpoint has trailing bytes");
  return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_checkpoint(buf.str());
}

void round_to_storage_precision(ModelParams& params) {
  params.weights.for_each([](const std::string&, Matrix& m) { round_to_float32(m); });
  round_to_float32(params.bn.running_mean);
  round_to_float32(params.bn.running_var);
}

}  // namespace softtopic
