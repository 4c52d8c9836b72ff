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

#include "tinyma/exploration_incentive.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "tinyma/errors.h"

namespace tinyma {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

struct Encoded {
  std::vector<double> mean;
  std::vector<double> log_std;  // clamped
  std::vector<double> std;
  std::vector<std::uint8_t> in_range;
};

Encoded encode(std::span<const double> out, std::size_t d, double lo,
               double hi) {
  Encoded e;
  e.mean.assign(out.begin(), out.begin() + d);
  e.log_std.resize(d);
  e.std.resize(d);
  e.in_range.resize(d);
  for (std::size_t k = 0; k < d; ++k) {
    const double raw = out[d + k];
    e.log_std[k] = std::clamp(raw, lo, hi);
    e.in_range[k] = raw >= lo && raw <= hi;
    e.std[k] = std::exp(e.log_std[k]);
  }
  return e;
}

// KL(q || p) and its partial derivatives, scaled by `w`, accumulated into
// the output-layer gradients of both encoders.
double kl_with_grad(const Encoded& q, const Encoded& p, double w,
                    std::vector<double>& gq, std::vector<double>& gp) {
  const std::size_t d = q.mean.size();
  double kl = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    const double vq = q.std[k] * q.std[k];
    const double vp = p.std[k] * p.std[k];
    const double diff = q.mean[k] - p.mean[k];
    kl += p.log_std[k] - q.log_std[k] + (vq + diff * diff) / (2.0 * vp) - 0.5;
    gq[k] += w * diff / vp;
    gp[k] -= w * diff / vp;
    if (q.in_range[k]) gq[d + k] += w * (-1.0 + vq / vp);
    if (p.in_range[k]) gp[d + k] += w * (1.0 - (vq + diff * diff) / vp);
  }
  return kl;
}

}  // namespace

double DiagonalGaussian::log_density(std::span<const double> x) const {
  double lp = 0.0;
  for (std::size_t k = 0; k < mean.size(); ++k) {
    const double z = (x[k] - mean[k]) / std[k];
    lp += -0.5 * z * z - std::log(std[k]) - kHalfLog2Pi;
  }
  return lp;
}

double kl_diag_gaussian(const DiagonalGaussian& p, const DiagonalGaussian& q) {
  if (p.mean.size() != q.mean.size() || p.std.size() != p.mean.size() ||
      q.std.size() != q.mean.size()) {
    throw DimensionError("kl_diag_gaussian: dimension mismatch");
  }
  double kl = 0.0;
  for (std::size_t k = 0; k < p.mean.size(); ++k) {
    const double diff = p.mean[k] - q.mean[k];
    kl += std::log(q.std[k] / p.std[k]) +
          (p.std[k] * p.std[k] + diff * diff) / (2.0 * q.std[k] * q.std[k]) -
          0.5;
  }
  return std::max(kl, 0.0);
}

std::vector<double> reparameterize(const DiagonalGaussian& g,
                                   std::span<const double> eps) {
  std::vector<double> z(g.mean.size());
  for (std::size_t k = 0; k < z.size(); ++k) {
    z[k] = g.std[k] == 0.0 ? g.mean[k] : g.mean[k] + g.std[k] * eps[k];
  }
  return z;
}

double js_divergence(const DiagonalGaussian& p, const DiagonalGaussian& q,
                     int n_samples, std::mt19937_64& rng) {
  if (p.dim() != q.dim()) {
    throw DimensionError("js_divergence: dimension mismatch");
  }
  if (n_samples < 1) throw ConfigError("js_divergence: n_samples must be >= 1");
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t d = p.dim();
  std::vector<double> eps(d), x(d);
  // log(p / m) with m = (p + q) / 2, written to be exactly 0 when p == q.
  auto log_ratio = [](double lp, double lq) {
    return -std::log1p(std::exp(lq - lp)) + std::numbers::ln2;
  };
  double total = 0.0;
  for (int n = 0; n < n_samples; ++n) {
    for (double& e : eps) e = normal(rng);
    for (std::size_t k = 0; k < d; ++k) x[k] = p.mean[k] + p.std[k] * eps[k];
    total += log_ratio(p.log_density(x), q.log_density(x));
    for (std::size_t k = 0; k < d; ++k) x[k] = q.mean[k] + q.std[k] * eps[k];
    total += log_ratio(q.log_density(x), p.log_density(x));
  }
  const double js = total / (2.0 * n_samples) / std::numbers::ln2;
  return std::clamp(js, 0.0, 1.0);
}

CvaeModule::CvaeModule(std::size_t state_dim, ActionSlots slots,
                       CvaeConfig config, std::mt19937_64& rng)
    : state_dim_(state_dim), slots_(std::move(slots)), config_(config) {
  for (const auto& [offset, len] : slots_) {
    action_dim_ = std::max(action_dim_, offset + len);
  }
  const std::size_t zd = config_.latent_dim;
  auto sizes = [&](std::size_t in, std::size_t out) {
    std::vector<std::size_t> s{in};
    s.insert(s.end(), config_.hidden.begin(), config_.hidden.end());
    s.push_back(out);
    return s;
  };
  const std::size_t sa = state_dim_ + action_dim_;
  const std::size_t sas = sa + state_dim_;
  prior_ = MaskedDenseNetwork(sizes(sa, 2 * zd), Activation::kRelu, rng);
  posterior_ = MaskedDenseNetwork(sizes(sas, 2 * zd), Activation::kRelu, rng);
  for (std::size_t k = 0; k < slots_.size(); ++k) {
    cf_prior_.emplace_back(sizes(sa, 2 * zd), Activation::kRelu, rng);
    cf_posterior_.emplace_back(sizes(sas, 2 * zd), Activation::kRelu, rng);
  }
  decoder_ = MaskedDenseNetwork(sizes(zd, state_dim_), Activation::kRelu, rng);
  decoder_log_std_.assign(state_dim_, 0.0);
  for (const MaskedDenseNetwork* net : networks()) {
    adam_.emplace_back(net->num_params(), config_.learning_rate);
  }
  adam_.emplace_back(decoder_log_std_.size(), config_.learning_rate);
}

std::vector<MaskedDenseNetwork*> CvaeModule::networks() {
  std::vector<MaskedDenseNetwork*> out{&prior_, &posterior_};
  for (auto& n : cf_prior_) out.push_back(&n);
  for (auto& n : cf_posterior_) out.push_back(&n);
  out.push_back(&decoder_);
  return out;
}

std::vector<const MaskedDenseNetwork*> CvaeModule::networks() const {
  std::vector<const MaskedDenseNetwork*> out{&prior_, &posterior_};
  for (const auto& n : cf_prior_) out.push_back(&n);
  for (const auto& n : cf_posterior_) out.push_back(&n);
  out.push_back(&decoder_);
  return out;
}

std::vector<double> CvaeModule::concat(std::span<const double> a,
                                       std::span<const double> b) const {
  std::vector<double> out(a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

std::vector<double> CvaeModule::counterfactual_action(
    std::span<const double> action, std::size_t k) const {
  std::vector<double> out(action.begin(), action.end());
  const auto [offset, len] = slots_.at(k);
  std::fill(out.begin() + offset, out.begin() + offset + len, 0.0);
  return out;
}

DiagonalGaussian CvaeModule::split(std::span<const double> out) const {
  const std::size_t d = config_.latent_dim;
  Encoded e = encode(out, d, config_.min_log_std, config_.max_log_std);
  return DiagonalGaussian{std::move(e.mean), std::move(e.std)};
}

DiagonalGaussian CvaeModule::prior(std::span<const double> s,
                                   std::span<const double> a) const {
  return split(prior_.predict(concat(s, a)));
}

DiagonalGaussian CvaeModule::counterfactual_prior(std::span<const double> s,
                                                  std::span<const double> a,
                                                  std::size_t k) const {
  return split(cf_prior_.at(k).predict(concat(s, counterfactual_action(a, k))));
}

DiagonalGaussian CvaeModule::posterior(std::span<const double> s,
                                       std::span<const double> a,
                                       std::span<const double> s_next) const {
  return split(posterior_.predict(concat(concat(s, a), s_next)));
}

DiagonalGaussian CvaeModule::counterfactual_posterior(
    std::span<const double> s, std::span<const double> a,
    std::span<const double> s_next, std::size_t k) const {
  const MaskedDenseNetwork& net =
      config_.tie_posteriors ? posterior_ : cf_posterior_.at(k);
  return split(
      net.predict(concat(concat(s, counterfactual_action(a, k)), s_next)));
}

DiagonalGaussian CvaeModule::decode(std::span<const double> z) const {
  DiagonalGaussian g;
  g.mean = decoder_.predict(z);
  g.std.resize(state_dim_);
  for (std::size_t k = 0; k < state_dim_; ++k) {
    g.std[k] = std::exp(std::clamp(decoder_log_std_[k], config_.min_log_std,
                                   config_.max_log_std));
  }
  return g;
}

double CvaeModule::intrinsic_incentive(std::span<const double> s,
                                       std::span<const double> a,
                                       std::size_t k) const {
  return kl_diag_gaussian(prior(s, a), counterfactual_prior(s, a, k));
}

double CvaeModule::js_incentive(std::span<const double> s,
                                std::span<const double> a, std::size_t k,
                                int n_samples, std::mt19937_64& rng) const {
  return js_divergence(prior(s, a), counterfactual_prior(s, a, k), n_samples,
                       rng);
}

std::vector<CvaeIncentive> CvaeModule::incentives(std::span<const double> s,
                                                  std::span<const double> a,
                                                  std::mt19937_64& rng) const {
  const DiagonalGaussian full = prior(s, a);
  std::vector<CvaeIncentive> out(num_agents());
  for (std::size_t k = 0; k < num_agents(); ++k) {
    const DiagonalGaussian cf = counterfactual_prior(s, a, k);
    out[k].kl = kl_diag_gaussian(full, cf);
    out[k].js = js_divergence(full, cf, config_.js_samples, rng);
  }
  return out;
}

std::vector<CvaeNoise> CvaeModule::draw_noise(std::size_t n,
                                              std::mt19937_64& rng) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<CvaeNoise> noise(n);
  for (auto& e : noise) {
    e.full.resize(config_.latent_dim);
    e.counterfactual.resize(config_.latent_dim);
    for (double& x : e.full) x = normal(rng);
    for (double& x : e.counterfactual) x = normal(rng);
  }
  return noise;
}

double CvaeModule::loss(const std::vector<CvaeSample>& batch, std::size_t k,
                        std::mt19937_64& rng) {
  return loss(batch, k, draw_noise(batch.size(), rng), nullptr);
}

double CvaeModule::loss(const std::vector<CvaeSample>& batch, std::size_t k,
                        const std::vector<CvaeNoise>& noise,
                        std::vector<double>* grad) {
  if (batch.empty()) throw ConfigError("cvae loss: empty batch");
  if (noise.size() != batch.size()) {
    throw DimensionError("cvae loss: one noise entry per sample required");
  }
  const std::size_t zd = config_.latent_dim;
  const double lo = config_.min_log_std;
  const double hi = config_.max_log_std;
  const double w = 1.0 / static_cast<double>(batch.size());

  // Offsets of each network inside the flat gradient.
  const auto nets = networks();
  std::vector<std::size_t> offset;
  std::size_t total = 0;
  for (const MaskedDenseNetwork* n : nets) {
    offset.push_back(total);
    total += n->num_params();
  }
  const std::size_t log_std_offset = total;
  total += decoder_log_std_.size();
  if (grad) grad->assign(total, 0.0);
  auto slice = [&](std::size_t idx) {
    return std::span<double>(grad->data() + offset[idx],
                             nets[idx]->num_params());
  };
  const std::size_t i_prior = 0;
  const std::size_t i_post = 1;
  const std::size_t i_cf_prior = 2 + k;
  const bool tied = config_.tie_posteriors;
  const std::size_t i_cf_post = tied ? i_post : 2 + num_agents() + k;
  const std::size_t i_dec = nets.size() - 1;
  MaskedDenseNetwork& cf_prior = cf_prior_.at(k);
  MaskedDenseNetwork& cf_post = tied ? posterior_ : cf_posterior_.at(k);

  std::vector<double> dec_std(state_dim_);
  std::vector<std::uint8_t> dec_in_range(state_dim_);
  for (std::size_t d = 0; d < state_dim_; ++d) {
    const double raw = decoder_log_std_[d];
    dec_in_range[d] = raw >= lo && raw <= hi;
    dec_std[d] = std::exp(std::clamp(raw, lo, hi));
  }

  double loss = 0.0;
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const CvaeSample& x = batch[n];
    const std::vector<double> sa = concat(x.state, x.action);
    const std::vector<double> sas = concat(sa, x.next_state);
    const std::vector<double> a_cf = counterfactual_action(x.action, k);
    const std::vector<double> sa_cf = concat(x.state, a_cf);
    const std::vector<double> sas_cf = concat(sa_cf, x.next_state);

    const Encoded p1 = encode(prior_.forward(sa), zd, lo, hi);
    const Encoded q1 = encode(posterior_.forward(sas), zd, lo, hi);
    const Encoded p2 = encode(cf_prior.forward(sa_cf), zd, lo, hi);
    const Encoded q2 = encode(cf_post.forward(sas_cf), zd, lo, hi);

    std::vector<double> gp1(2 * zd, 0.0), gq1(2 * zd, 0.0);
    std::vector<double> gp2(2 * zd, 0.0), gq2(2 * zd, 0.0);
    double sample_loss = kl_with_grad(q1, p1, w, gq1, gp1) +
                         kl_with_grad(q2, p2, w, gq2, gp2);

    // Reconstruction through the shared decoder, once per posterior.
    auto reconstruct = [&](const Encoded& q, std::span<const double> eps,
                           std::vector<double>& gq) {
      std::vector<double> z(zd);
      for (std::size_t d = 0; d < zd; ++d) z[d] = q.mean[d] + q.std[d] * eps[d];
      const auto mu = decoder_.forward(z);
      double nll = 0.0;
      std::vector<double> gmu(state_dim_);
      for (std::size_t d = 0; d < state_dim_; ++d) {
        const double r = (x.next_state[d] - mu[d]) / dec_std[d];
        nll += std::log(dec_std[d]) + kHalfLog2Pi + 0.5 * r * r;
        gmu[d] = -w * r / dec_std[d];
        if (grad && dec_in_range[d]) {
          (*grad)[log_std_offset + d] += w * (1.0 - r * r);
        }
      }
      if (grad) {
        const std::vector<double> gz = decoder_.backward(gmu, slice(i_dec));
        for (std::size_t d = 0; d < zd; ++d) {
          gq[d] += gz[d];
          if (q.in_range[d]) gq[zd + d] += gz[d] * q.std[d] * eps[d];
        }
      }
      return nll;
    };
    sample_loss += reconstruct(q1, noise[n].full, gq1);
    sample_loss += reconstruct(q2, noise[n].counterfactual, gq2);
    loss += w * sample_loss;

    if (grad) {
      prior_.backward(gp1, slice(i_prior));
      if (tied) posterior_.forward(sas);  // cache was overwritten by q2
      posterior_.backward(gq1, slice(i_post));
      cf_prior.backward(gp2, slice(i_cf_prior));
      if (tied) cf_post.forward(sas_cf);
      cf_post.backward(gq2, slice(i_cf_post));
    }
  }
  return loss;
}

double CvaeModule::train_step(const std::vector<CvaeSample>& batch,
                              std::size_t k, double learning_rate,
                              std::mt19937_64& rng) {
  std::vector<double> grad;
  const double value = loss(batch, k, draw_noise(batch.size(), rng), &grad);
  if (!std::isfinite(value)) {
    throw DivergenceError("cvae train_step: non-finite loss");
  }
  clip_global_norm(grad, config_.max_grad_norm);
  const auto nets = networks();
  std::size_t offset = 0;
  std::vector<std::size_t> touched{0, 1, 2 + k, nets.size() - 1};
  if (!config_.tie_posteriors) touched.push_back(2 + num_agents() + k);
  std::vector<std::size_t> offsets;
  for (const MaskedDenseNetwork* n : nets) {
    offsets.push_back(offset);
    offset += n->num_params();
  }
  for (std::size_t idx : touched) {
    adam_[idx].set_learning_rate(learning_rate);
    adam_[idx].step(nets[idx]->params(),
                    std::span<const double>(grad.data() + offsets[idx],
                                            nets[idx]->num_params()));
  }
  adam_.back().set_learning_rate(learning_rate);
  adam_.back().step(decoder_log_std_,
                    std::span<const double>(grad.data() + offset,
                                            decoder_log_std_.size()));
  return value;
}

std::vector<double> CvaeModule::params() const {
  std::vector<double> flat;
  for (const MaskedDenseNetwork* n : networks()) {
    flat.insert(flat.end(), n->params().begin(), n->params().end());
  }
  flat.insert(flat.end(), decoder_log_std_.begin(), decoder_log_std_.end());
  return flat;
}

void CvaeModule::set_params(std::span<const double> flat) {
  if (flat.size() != num_params()) {
    throw DimensionError("cvae set_params: size mismatch");
  }
  std::size_t offset = 0;
  for (MaskedDenseNetwork* n : networks()) {
    std::copy(flat.begin() + offset, flat.begin() + offset + n->num_params(),
              n->params().begin());
    offset += n->num_params();
  }
  std::copy(flat.begin() + offset, flat.end(), decoder_log_std_.begin());
}

std::size_t CvaeModule::num_params() const {
  std::size_t n = decoder_log_std_.size();
  for (const MaskedDenseNetwork* net : networks()) n += net->num_params();
  return n;
}

}  // namespace tinyma
