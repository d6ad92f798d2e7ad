// Copyright 2026 The shotnet Authors.
// SPDX-License-Identifier: Apache-2.0

#include "shotnet/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "shotnet/error.hpp"

namespace shotnet {

void LossConfig::validate() const {
  if (!(loc_weight_alpha > 0.0)) throw ConfigError("loss.loc_weight_alpha must be > 0");
  if (!(focal_alpha >= 0.0 && focal_alpha <= 1.0)) throw ConfigError("loss.focal_alpha must lie in [0,1]");
  if (!(focal_gamma >= 0.0)) throw ConfigError("loss.focal_gamma must be >= 0");
  if (hard_negative_ratio < 0) throw ConfigError("loss.hard_negative_ratio must be >= 0");
}

double smooth_l1(double z) {
  const double a = std::abs(z);
  return a < 1.0 ? 0.5 * z * z : a - 0.5;
}

double smooth_l1_derivative(double z) {
  if (std::abs(z) < 1.0) return z;
  return z > 0.0 ? 1.0 : -1.0;
}

namespace {

template <typename T>
void check_logits(const Tensor<T>& logits, const MatchAssignment& a, const char* op) {
  require_rank(logits.shape(), 2, op);
  if (static_cast<std::size_t>(logits.dim(0)) != a.size()) {
    throw ShapeError(std::string(op) + ": " + std::to_string(logits.dim(0)) +
                     " boxes but assignment has " + std::to_string(a.size()));
  }
  if (logits.dim(1) < 2) throw ShapeError(std::string(op) + ": need at least 2 classes");
}

/// Stable log-softmax of one row.
template <typename T>
void log_softmax_row(const T* z, int k, std::vector<double>& out) {
  out.resize(k);
  double m = z[0];
  for (int c = 1; c < k; ++c) m = std::max(m, static_cast<double>(z[c]));
  double s = 0.0;
  for (int c = 0; c < k; ++c) s += std::exp(z[c] - m);
  const double lse = m + std::log(s);
  for (int c = 0; c < k; ++c) out[c] = z[c] - lse;
}

int target_class(const MatchAssignment& a, std::size_t i) {
  return a.is_positive(i) ? MatchAssignment::kNoise : MatchAssignment::kBackground;
}

}  // namespace

template <typename T>
double confidence_loss(const Tensor<T>& logits, const MatchAssignment& a, Tensor<T>* grad,
                       const std::vector<char>* negative_mask) {
  check_logits(logits, a, "confidence_loss");
  const int k = logits.dim(1);
  if (grad) *grad = Tensor<T>(logits.shape());
  std::vector<double> lp;
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a.is_positive(i) && negative_mask && !(*negative_mask)[i]) continue;
    const T* z = logits.ptr() + i * k;
    log_softmax_row(z, k, lp);
    const int t = target_class(a, i);
    total -= lp[t];
    if (grad) {
      T* g = grad->ptr() + i * k;
      for (int c = 0; c < k; ++c) g[c] = static_cast<T>(std::exp(lp[c]) - (c == t ? 1.0 : 0.0));
    }
  }
  return total;
}

template <typename T>
double localization_loss(const Tensor<T>& offsets, const MatchAssignment& a, Tensor<T>* grad) {
  require_rank(offsets.shape(), 2, "localization_loss");
  if (static_cast<std::size_t>(offsets.dim(0)) != a.size() || offsets.dim(1) != 4) {
    throw ShapeError("localization_loss: offsets " + shape_string(offsets.shape()) +
                     " incompatible with " + std::to_string(a.size()) + " boxes");
  }
  if (grad) *grad = Tensor<T>(offsets.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a.is_positive(i)) continue;
    const OffsetVector& t = a.targets[i].value();
    for (int m = 0; m < 4; ++m) {
      const double z = static_cast<double>(offsets[i * 4 + m]) - t[m];
      total += smooth_l1(z);
      if (grad) (*grad)[i * 4 + m] = static_cast<T>(smooth_l1_derivative(z));
    }
  }
  return total;
}

template <typename T>
double focal_loss(const Tensor<T>& logits, const MatchAssignment& a, double alpha, double gamma,
                  Tensor<T>* grad) {
  check_logits(logits, a, "focal_loss");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("focal_loss: alpha must lie in [0,1]");
  if (!(gamma >= 0.0)) throw ConfigError("focal_loss: gamma must be >= 0");
  const int k = logits.dim(1);
  if (grad) *grad = Tensor<T>(logits.shape());
  std::vector<double> lp;
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const T* z = logits.ptr() + i * k;
    log_softmax_row(z, k, lp);
    const int t = target_class(a, i);
    const double alpha_t = t == MatchAssignment::kNoise ? alpha : 1.0 - alpha;
    const double log_pt = lp[t];
    const double pt = std::exp(log_pt);
    // 1 - p_t summed from the other classes keeps precision when p_t -> 1.
    double rest = 0.0;
    for (int c = 0; c < k; ++c) {
      if (c != t) rest += std::exp(lp[c]);
    }
    const double modulator = std::pow(rest, gamma);
    total += -alpha_t * modulator * log_pt;
    if (grad) {
      double dmod = 0.0;
      if (gamma != 0.0 && rest > 0.0) dmod = gamma * std::pow(rest, gamma - 1.0) * pt * log_pt;
      const double common = -alpha_t * (modulator - dmod);
      T* g = grad->ptr() + i * k;
      for (int c = 0; c < k; ++c) {
        const double delta = (c == t ? 1.0 : 0.0) - std::exp(lp[c]);
        g[c] = static_cast<T>(common * delta);
      }
    }
  }
  return total;
}

template <typename T>
std::vector<char> hard_negative_mask(const Tensor<T>& logits, const MatchAssignment& a, int ratio) {
  check_logits(logits, a, "hard_negative_mask");
  const int k = logits.dim(1);
  std::vector<std::size_t> negatives;
  std::vector<double> loss(a.size(), 0.0);
  std::vector<double> lp;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.is_positive(i)) continue;
    log_softmax_row(logits.ptr() + i * k, k, lp);
    loss[i] = -lp[MatchAssignment::kBackground];
    negatives.push_back(i);
  }
  std::stable_sort(negatives.begin(), negatives.end(),
                   [&](std::size_t x, std::size_t y) { return loss[x] > loss[y]; });
  const std::size_t keep =
      std::min(negatives.size(), static_cast<std::size_t>(ratio) *
                                     static_cast<std::size_t>(std::max(a.num_positive, 1)));
  std::vector<char> mask(a.size(), 0);
  for (std::size_t j = 0; j < keep; ++j) mask[negatives[j]] = 1;
  return mask;
}

template <typename T>
LossResult<T> multitask_loss(const Tensor<T>& logits, const Tensor<T>& offsets,
                             const MatchAssignment& a, const LossConfig& config) {
  config.validate();
  LossResult<T> r;
  r.num_positive = a.num_positive;
  if (config.focal_enabled) {
    r.confidence = focal_loss(logits, a, config.focal_alpha, config.focal_gamma, &r.grad_logits);
  } else {
    const auto mask = hard_negative_mask(logits, a, config.hard_negative_ratio);
    r.confidence = confidence_loss(logits, a, &r.grad_logits, &mask);
  }
  r.localization = localization_loss(offsets, a, &r.grad_offsets);
  const double norm = 1.0 / std::max(a.num_positive, 1);
  r.value = (r.confidence + config.loc_weight_alpha * r.localization) * norm;
  for (T& g : r.grad_logits.data()) g = static_cast<T>(g * norm);
  const double loc_scale = config.loc_weight_alpha * norm;
  for (T& g : r.grad_offsets.data()) g = static_cast<T>(g * loc_scale);
  return r;
}

template <typename T>
LossResult<T> batch_multitask_loss(const Tensor<T>& logits, const Tensor<T>& offsets,
                                   const std::vector<MatchAssignment>& assignments,
                                   const LossConfig& config) {
  require_rank(logits.shape(), 3, "batch_multitask_loss logits");
  require_rank(offsets.shape(), 3, "batch_multitask_loss offsets");
  const int n = logits.dim(0), b = logits.dim(1), k = logits.dim(2);
  if (offsets.dim(0) != n || offsets.dim(1) != b || offsets.dim(2) != 4 ||
      assignments.size() != static_cast<std::size_t>(n)) {
    throw ShapeError("batch_multitask_loss: logits " + shape_string(logits.shape()) + ", offsets " +
                     shape_string(offsets.shape()) + ", " + std::to_string(assignments.size()) +
                     " assignments");
  }
  LossResult<T> total;
  total.grad_logits = Tensor<T>(logits.shape());
  total.grad_offsets = Tensor<T>(offsets.shape());
  const double inv_n = 1.0 / n;
  const std::size_t lstride = static_cast<std::size_t>(b) * k;
  const std::size_t ostride = static_cast<std::size_t>(b) * 4;
  for (int i = 0; i < n; ++i) {
    Tensor<T> li({b, k}, std::vector<T>(logits.ptr() + i * lstride, logits.ptr() + (i + 1) * lstride));
    Tensor<T> oi({b, 4}, std::vector<T>(offsets.ptr() + i * ostride, offsets.ptr() + (i + 1) * ostride));
    LossResult<T> r = multitask_loss(li, oi, assignments[i], config);
    total.value += r.value * inv_n;
    total.confidence += r.confidence * inv_n;
    total.localization += r.localization * inv_n;
    total.num_positive += r.num_positive;
    for (std::size_t j = 0; j < lstride; ++j) total.grad_logits[i * lstride + j] = static_cast<T>(r.grad_logits[j] * inv_n);
    for (std::size_t j = 0; j < ostride; ++j) total.grad_offsets[i * ostride + j] = static_cast<T>(r.grad_offsets[j] * inv_n);
  }
  return total;
}

#define SHOTNET_INSTANTIATE_LOSSES(T)                                                          \
  template double confidence_loss(const Tensor<T>&, const MatchAssignment&, Tensor<T>*,       \
                                  const std::vector<char>*);                                  \
  template double localization_loss(const Tensor<T>&, const MatchAssignment&, Tensor<T>*);    \
  template double focal_loss(const Tensor<T>&, const MatchAssignment&, double, double,        \
                             Tensor<T>*);                                                     \
  template std::vector<char> hard_negative_mask(const Tensor<T>&, const MatchAssignment&, int); \
  template LossResult<T> multitask_loss(const Tensor<T>&, const Tensor<T>&,                   \
                                        const MatchAssignment&, const LossConfig&);           \
  template LossResult<T> batch_multitask_loss(const Tensor<T>&, const Tensor<T>&,             \
                                              const std::vector<MatchAssignment>&,            \
                                              const LossConfig&);

SHOTNET_INSTANTIATE_LOSSES(float)
SHOTNET_INSTANTIATE_LOSSES(double)

#undef SHOTNET_INSTANTIATE_LOSSES

}  // namespace shotnet
