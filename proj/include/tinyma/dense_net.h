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

#ifndef TINYMA_DENSE_NET_H_
#define TINYMA_DENSE_NET_H_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace tinyma {

enum class Activation { kTanh, kRelu, kIdentity };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

// Fully connected network with a binary mask on every hidden neuron. All
// parameters live in one flat vector so optimizers and checkpoints can treat
// them uniformly. Layer l maps layer l-1 (size n_{l-1}) to size n_l with a
// row-major n_l x n_{l-1} weight block followed by n_l biases.
class MaskedDenseNetwork {
 public:
  MaskedDenseNetwork() = default;
  // sizes = {input, hidden..., output}. Weights are orthogonally initialised
  // with gain 1 (output layer: output_gain), biases are zero.
  MaskedDenseNetwork(std::vector<std::size_t> sizes, Activation hidden,
                     std::mt19937_64& rng, double output_gain = 1.0,
                     Activation output = Activation::kIdentity);

  std::size_t input_size() const { return sizes_.front(); }
  std::size_t output_size() const { return sizes_.back(); }
  // Number of weight layers (hidden layers + output layer).
  std::size_t num_layers() const { return sizes_.size() - 1; }
  std::size_t num_hidden_layers() const { return sizes_.size() - 2; }
  const std::vector<std::size_t>& sizes() const { return sizes_; }
  Activation hidden_activation() const { return hidden_; }
  Activation output_activation() const { return output_; }

  // Weight (row, col) of weight layer l (0-based; layer l feeds sizes_[l+1]).
  double weight(std::size_t l, std::size_t row, std::size_t col) const {
    return params_[weight_offset_[l] + row * sizes_[l] + col];
  }
  double& weight(std::size_t l, std::size_t row, std::size_t col) {
    return params_[weight_offset_[l] + row * sizes_[l] + col];
  }
  double bias(std::size_t l, std::size_t row) const {
    return params_[bias_offset_[l] + row];
  }
  double& bias(std::size_t l, std::size_t row) {
    return params_[bias_offset_[l] + row];
  }
  std::size_t weight_index(std::size_t l, std::size_t row,
                           std::size_t col) const {
    return weight_offset_[l] + row * sizes_[l] + col;
  }
  std::size_t bias_index(std::size_t l, std::size_t row) const {
    return bias_offset_[l] + row;
  }

  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  std::size_t num_params() const { return params_.size(); }

  // Mask of hidden layer h (0-based, output of weight layer h).
  const std::vector<std::uint8_t>& mask(std::size_t h) const {
    return masks_[h];
  }
  void set_mask(std::size_t h, std::size_t neuron, bool alive);
  bool alive(std::size_t h, std::size_t neuron) const {
    return masks_[h][neuron] != 0;
  }

  // Forward pass that caches activations for backward().
  std::span<const double> forward(std::span<const double> input);
  // Forward pass without touching the cache.
  std::vector<double> predict(std::span<const double> input) const;

  // Accumulates dLoss/dparams into `grad` (size num_params()) for the cached
  // forward pass and returns dLoss/dinput. Throws std::logic_error when no
  // forward pass is cached.
  std::vector<double> backward(std::span<const double> grad_output,
                               std::span<double> grad);

  // Fraction of hidden neurons masked out.
  double sparsity() const;
  std::size_t hidden_neuron_count() const;
  std::size_t live_hidden_neuron_count() const;
  // Weights and biases; effective=true drops every weight incident to a
  // masked neuron and the biases of masked neurons.
  std::size_t parameter_count(bool effective) const;

  // Text format: header line, sizes, activations, hexfloat parameters, mask
  // bitmaps. Round trip is exact.
  void save(std::ostream& out) const;
  static MaskedDenseNetwork load(std::istream& in);

  bool operator==(const MaskedDenseNetwork&) const = default;

 private:
  void layout();

  std::vector<std::size_t> sizes_;
  Activation hidden_ = Activation::kTanh;
  Activation output_ = Activation::kIdentity;
  std::vector<double> params_;
  std::vector<std::size_t> weight_offset_;
  std::vector<std::size_t> bias_offset_;
  std::vector<std::vector<std::uint8_t>> masks_;

  // Cache: post-mask outputs per layer (index 0 = input) and pre-activations.
  std::vector<std::vector<double>> act_;
  std::vector<std::vector<double>> pre_;
  bool cached_ = false;
};

// Orthogonal matrix (rows x cols) scaled by gain, via Gram-Schmidt on a
// Gaussian draw.
std::vector<double> orthogonal_init(std::size_t rows, std::size_t cols,
                                    double gain, std::mt19937_64& rng);

// Adam over a flat parameter vector.
class Adam {
 public:
  Adam() = default;
  Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0),
        v_(n, 0.0) {}

  // params -= lr * adam(grad). Gradients are for a loss to minimise.
  void step(std::span<double> params, std::span<const double> grad);

  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }
  long steps() const { return t_; }

  void save(std::ostream& out) const;
  static Adam load(std::istream& in);

  bool operator==(const Adam&) const = default;

 private:
  double lr_ = 1e-3;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  long t_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

// Scales grad in place so its L2 norm is at most max_norm; returns the norm
// before scaling.
double clip_global_norm(std::span<double> grad, double max_norm);

// Diagonal Gaussian policy head with state-independent log std.
double gaussian_log_prob(std::span<const double> mean,
                         std::span<const double> log_std,
                         std::span<const double> action);
std::vector<double> gaussian_sample(std::span<const double> mean,
                                    std::span<const double> log_std,
                                    std::mt19937_64& rng);
double gaussian_entropy(std::span<const double> log_std);

}  // namespace tinyma

#endif  // TINYMA_DENSE_NET_H_
