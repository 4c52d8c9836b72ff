// Copyright 2026 The tinyma Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "tinyma/dense_net.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "tinyma/errors.h"

namespace tinyma {

namespace {

double activate(Activation a, double x) {
  switch (a) {
    case Activation::kTanh:
      return std::tanh(x);
    case Activation::kRelu:
      return x > 0 ? x : 0.0;
    case Activation::kIdentity:
      return x;
  }
  return x;
}

// Derivative expressed through the pre-activation and output.
double activate_grad(Activation a, double pre, double out) {
  switch (a) {
    case Activation::kTanh:
      return 1.0 - out * out;
    case Activation::kRelu:
      return pre > 0 ? 1.0 : 0.0;
    case Activation::kIdentity:
      return 1.0;
  }
  return 1.0;
}

std::string hex(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

double parse_hex(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str()) throw ConfigError("bad number in checkpoint: " + s);
  return v;
}

void expect_token(std::istream& in, const std::string& want) {
  std::string tok;
  if (!(in >> tok) || tok != want) {
    throw ConfigError("checkpoint: expected '" + want + "', got '" + tok +
                      "'");
  }
}

}  // namespace

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::kTanh:
      return "tanh";
    case Activation::kRelu:
      return "relu";
    case Activation::kIdentity:
      return "identity";
  }
  return "identity";
}

Activation activation_from_name(const std::string& name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "relu") return Activation::kRelu;
  if (name == "identity") return Activation::kIdentity;
  throw ConfigError("unknown activation '" + name + "'");
}

std::vector<double> orthogonal_init(std::size_t rows, std::size_t cols,
                                    double gain, std::mt19937_64& rng) {
  // Orthonormalise the columns of a tall n x k Gaussian matrix, then
  // transpose if the requested shape is wide.
  const bool wide = cols > rows;
  const std::size_t n = wide ? cols : rows;
  const std::size_t k = wide ? rows : cols;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> q(n * k);  // column-major: column c at q[c * n]
  for (double& v : q) v = normal(rng);
  for (std::size_t c = 0; c < k; ++c) {
    double* col = &q[c * n];
    for (std::size_t p = 0; p < c; ++p) {
      const double* prev = &q[p * n];
      double dot = 0.0;
      for (std::size_t r = 0; r < n; ++r) dot += col[r] * prev[r];
      for (std::size_t r = 0; r < n; ++r) col[r] -= dot * prev[r];
    }
    double norm = 0.0;
    for (std::size_t r = 0; r < n; ++r) norm += col[r] * col[r];
    norm = std::sqrt(norm);
    for (std::size_t r = 0; r < n; ++r) col[r] /= norm;
  }
  std::vector<double> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = wide ? q[r * n + c] : q[c * n + r];
      out[r * cols + c] = gain * v;
    }
  }
  return out;
}

MaskedDenseNetwork::MaskedDenseNetwork(std::vector<std::size_t> sizes,
                                       Activation hidden,
                                       std::mt19937_64& rng,
                                       double output_gain, Activation output)
    : sizes_(std::move(sizes)), hidden_(hidden), output_(output) {
  if (sizes_.size() < 2) {
    throw ConfigError("network needs at least input and output sizes");
  }
  for (std::size_t s : sizes_) {
    if (s == 0) throw ConfigError("network layer size must be > 0");
  }
  layout();
  for (std::size_t l = 0; l < num_layers(); ++l) {
    const double gain = (l + 1 == num_layers()) ? output_gain : 1.0;
    const auto w = orthogonal_init(sizes_[l + 1], sizes_[l], gain, rng);
    std::copy(w.begin(), w.end(), params_.begin() + weight_offset_[l]);
  }
}

void MaskedDenseNetwork::layout() {
  std::size_t offset = 0;
  weight_offset_.clear();
  bias_offset_.clear();
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    weight_offset_.push_back(offset);
    offset += sizes_[l] * sizes_[l + 1];
    bias_offset_.push_back(offset);
    offset += sizes_[l + 1];
  }
  params_.assign(offset, 0.0);
  masks_.clear();
  for (std::size_t h = 1; h + 1 < sizes_.size(); ++h) {
    masks_.emplace_back(sizes_[h], 1);
  }
  act_.assign(sizes_.size(), {});
  pre_.assign(sizes_.size(), {});
  for (std::size_t l = 0; l < sizes_.size(); ++l) {
    act_[l].assign(sizes_[l], 0.0);
    pre_[l].assign(sizes_[l], 0.0);
  }
  cached_ = false;
}

void MaskedDenseNetwork::set_mask(std::size_t h, std::size_t neuron,
                                  bool alive) {
  masks_.at(h).at(neuron) = alive ? 1 : 0;
  cached_ = false;
}

std::span<const double> MaskedDenseNetwork::forward(
    std::span<const double> input) {
  if (input.size() != input_size()) {
    throw DimensionError("network forward: input length " +
                         std::to_string(input.size()) + " != " +
                         std::to_string(input_size()));
  }
  std::copy(input.begin(), input.end(), act_[0].begin());
  for (std::size_t l = 0; l < num_layers(); ++l) {
    const std::size_t in = sizes_[l];
    const std::size_t out = sizes_[l + 1];
    const bool is_output = l + 1 == num_layers();
    const Activation a = is_output ? output_ : hidden_;
    const double* w = &params_[weight_offset_[l]];
    const double* b = &params_[bias_offset_[l]];
    const std::vector<double>& x = act_[l];
    for (std::size_t r = 0; r < out; ++r) {
      double z = b[r];
      const double* wr = w + r * in;
      for (std::size_t c = 0; c < in; ++c) z += wr[c] * x[c];
      pre_[l + 1][r] = z;
      double h = activate(a, z);
      if (!is_output && !masks_[l][r]) h = 0.0;
      act_[l + 1][r] = h;
    }
  }
  cached_ = true;
  return act_.back();
}

std::vector<double> MaskedDenseNetwork::predict(
    std::span<const double> input) const {
  if (input.size() != input_size()) {
    throw DimensionError("network predict: input length mismatch");
  }
  std::vector<double> x(input.begin(), input.end());
  std::vector<double> y;
  for (std::size_t l = 0; l < num_layers(); ++l) {
    const std::size_t in = sizes_[l];
    const std::size_t out = sizes_[l + 1];
    const bool is_output = l + 1 == num_layers();
    const Activation a = is_output ? output_ : hidden_;
    const double* w = &params_[weight_offset_[l]];
    const double* b = &params_[bias_offset_[l]];
    y.assign(out, 0.0);
    for (std::size_t r = 0; r < out; ++r) {
      double z = b[r];
      const double* wr = w + r * in;
      for (std::size_t c = 0; c < in; ++c) z += wr[c] * x[c];
      double h = activate(a, z);
      if (!is_output && !masks_[l][r]) h = 0.0;
      y[r] = h;
    }
    x.swap(y);
  }
  return x;
}

std::vector<double> MaskedDenseNetwork::backward(
    std::span<const double> grad_output, std::span<double> grad) {
  if (!cached_) {
    throw std::logic_error("network backward: no cached forward pass");
  }
  if (grad_output.size() != output_size() || grad.size() != num_params()) {
    throw DimensionError("network backward: gradient size mismatch");
  }
  std::vector<double> delta(grad_output.begin(), grad_output.end());
  std::vector<double> below;
  for (std::size_t l = num_layers(); l-- > 0;) {
    const std::size_t in = sizes_[l];
    const std::size_t out = sizes_[l + 1];
    const bool is_output = l + 1 == num_layers();
    const Activation a = is_output ? output_ : hidden_;
    // delta holds dL/d(layer output); convert to dL/d(pre-activation).
    for (std::size_t r = 0; r < out; ++r) {
      if (!is_output && !masks_[l][r]) {
        delta[r] = 0.0;
      } else {
        delta[r] *= activate_grad(a, pre_[l + 1][r], act_[l + 1][r]);
      }
    }
    const double* w = &params_[weight_offset_[l]];
    double* gw = &grad[weight_offset_[l]];
    double* gb = &grad[bias_offset_[l]];
    const std::vector<double>& x = act_[l];
    below.assign(in, 0.0);
    for (std::size_t r = 0; r < out; ++r) {
      const double d = delta[r];
      if (d == 0.0) continue;
      gb[r] += d;
      const double* wr = w + r * in;
      double* gwr = gw + r * in;
      for (std::size_t c = 0; c < in; ++c) {
        gwr[c] += d * x[c];
        below[c] += d * wr[c];
      }
    }
    delta.swap(below);
  }
  return delta;
}

std::size_t MaskedDenseNetwork::hidden_neuron_count() const {
  std::size_t n = 0;
  for (const auto& m : masks_) n += m.size();
  return n;
}

std::size_t MaskedDenseNetwork::live_hidden_neuron_count() const {
  std::size_t n = 0;
  for (const auto& m : masks_) {
    n += static_cast<std::size_t>(std::count(m.begin(), m.end(), 1));
  }
  return n;
}

double MaskedDenseNetwork::sparsity() const {
  const std::size_t total = hidden_neuron_count();
  if (total == 0) return 0.0;
  return 1.0 - static_cast<double>(live_hidden_neuron_count()) /
                   static_cast<double>(total);
}

std::size_t MaskedDenseNetwork::parameter_count(bool effective) const {
  if (!effective) return params_.size();
  auto live = [&](std::size_t layer_index) -> std::size_t {
    // Live units of activation layer `layer_index` (input/output all live).
    if (layer_index == 0 || layer_index + 1 == sizes_.size()) {
      return sizes_[layer_index];
    }
    const auto& m = masks_[layer_index - 1];
    return static_cast<std::size_t>(std::count(m.begin(), m.end(), 1));
  };
  std::size_t n = 0;
  for (std::size_t l = 0; l < num_layers(); ++l) {
    n += live(l) * live(l + 1) + live(l + 1);
  }
  return n;
}

void MaskedDenseNetwork::save(std::ostream& out) const {
  out << "tinyma-dense-net 1\n";
  out << "sizes " << sizes_.size();
  for (std::size_t s : sizes_) out << ' ' << s;
  out << "\nactivations " << activation_name(hidden_) << ' '
      << activation_name(output_) << "\nparams " << params_.size() << '\n';
  for (double p : params_) out << hex(p) << '\n';
  out << "masks " << masks_.size() << '\n';
  for (const auto& m : masks_) {
    for (std::uint8_t bit : m) out << (bit ? '1' : '0');
    out << '\n';
  }
}

MaskedDenseNetwork MaskedDenseNetwork::load(std::istream& in) {
  expect_token(in, "tinyma-dense-net");
  int version = 0;
  in >> version;
  if (version != 1) throw ConfigError("checkpoint: unsupported net version");
  MaskedDenseNetwork net;
  expect_token(in, "sizes");
  std::size_t n = 0;
  in >> n;
  net.sizes_.resize(n);
  for (auto& s : net.sizes_) in >> s;
  expect_token(in, "activations");
  std::string h, o;
  in >> h >> o;
  net.hidden_ = activation_from_name(h);
  net.output_ = activation_from_name(o);
  net.layout();
  expect_token(in, "params");
  std::size_t count = 0;
  in >> count;
  if (count != net.params_.size()) {
    throw ConfigError("checkpoint: parameter count does not match sizes");
  }
  for (auto& p : net.params_) {
    std::string tok;
    in >> tok;
    p = parse_hex(tok);
  }
  expect_token(in, "masks");
  std::size_t num_masks = 0;
  in >> num_masks;
  if (num_masks != net.masks_.size()) {
    throw ConfigError("checkpoint: mask count does not match sizes");
  }
  for (auto& m : net.masks_) {
    std::string bits;
    in >> bits;
    if (bits.size() != m.size()) throw ConfigError("checkpoint: bad mask");
    for (std::size_t k = 0; k < m.size(); ++k) m[k] = bits[k] == '1';
  }
  if (!in) throw ConfigError("checkpoint: truncated network");
  return net;
}

void Adam::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw DimensionError("adam: size mismatch");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < m_.size(); ++k) {
    m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * grad[k];
    v_[k] = beta2_ * v_[k] + (1.0 - beta2_) * grad[k] * grad[k];
    params[k] -= lr_ * (m_[k] / c1) / (std::sqrt(v_[k] / c2) + eps_);
  }
}

void Adam::save(std::ostream& out) const {
  out << "adam " << hex(lr_) << ' ' << hex(beta1_) << ' ' << hex(beta2_)
      << ' ' << hex(eps_) << ' ' << t_ << ' ' << m_.size() << '\n';
  for (std::size_t k = 0; k < m_.size(); ++k) {
    out << hex(m_[k]) << ' ' << hex(v_[k]) << '\n';
  }
}

Adam Adam::load(std::istream& in) {
  expect_token(in, "adam");
  Adam a;
  std::string lr, b1, b2, eps;
  std::size_t n = 0;
  in >> lr >> b1 >> b2 >> eps >> a.t_ >> n;
  a.lr_ = parse_hex(lr);
  a.beta1_ = parse_hex(b1);
  a.beta2_ = parse_hex(b2);
  a.eps_ = parse_hex(eps);
  a.m_.resize(n);
  a.v_.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::string m, v;
    in >> m >> v;
    a.m_[k] = parse_hex(m);
    a.v_[k] = parse_hex(v);
  }
  if (!in) throw ConfigError("checkpoint: truncated optimizer state");
  return a;
}

double clip_global_norm(std::span<double> grad, double max_norm) {
  double sq = 0.0;
  for (double g : grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (double& g : grad) g *= scale;
  }
  return norm;
}

double gaussian_log_prob(std::span<const double> mean,
                         std::span<const double> log_std,
                         std::span<const double> action) {
  if (mean.size() != log_std.size() || mean.size() != action.size()) {
    throw DimensionError("gaussian_log_prob: size mismatch");
  }
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  double lp = 0.0;
  for (std::size_t d = 0; d < mean.size(); ++d) {
    const double z = (action[d] - mean[d]) / std::exp(log_std[d]);
    lp += -0.5 * z * z - log_std[d] - half_log_2pi;
  }
  return lp;
}

std::vector<double> gaussian_sample(std::span<const double> mean,
                                    std::span<const double> log_std,
                                    std::mt19937_64& rng) {
  if (mean.size() != log_std.size()) {
    throw DimensionError("gaussian_sample: size mismatch");
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> out(mean.size());
  for (std::size_t d = 0; d < mean.size(); ++d) {
    out[d] = mean[d] + std::exp(log_std[d]) * normal(rng);
  }
  return out;
}

double gaussian_entropy(std::span<const double> log_std) {
  const double c = 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e);
  double h = 0.0;
  for (double s : log_std) h += c + s;
  return h;
}

}  // namespace tinyma
