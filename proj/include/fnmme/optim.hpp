#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "fnmme/config.hpp"
#include "fnmme/errors.hpp"
#include "fnmme/mmspace.hpp"

namespace fnmme::optim {

using mmspace::ModelParams;
using mmspace::ParamGroup;

/// Global L2 norm over the GRU gradient tensors only.
template <typename T>
double gru_gradient_norm(const ModelParams<T>& grads) {
  double sq = 0;
  for (const auto& t : mmspace::tensors(grads)) {
    if (t.group != ParamGroup::gru) continue;
    for (T v : t.data) sq += static_cast<double>(v) * static_cast<double>(v);
  }
  return std::sqrt(sq);
}

/// Rescales the GRU gradients to norm `threshold` when their global norm
/// exceeds it. Word-embedding and affine gradients are left untouched.
/// Returns the pre-clip norm.
template <typename T>
double clip_gru_gradients(ModelParams<T>& grads, double threshold) {
  if (!(threshold > 0)) throw ValidationError("clip threshold must be positive");
  const double norm = gru_gradient_norm(grads);
  if (norm > threshold) {
    const T scale = static_cast<T>(threshold / norm);
    for (auto& t : mmspace::tensors(grads)) {
      if (t.group != ParamGroup::gru) continue;
      for (T& v : t.data) v *= scale;
    }
  }
  return norm;
}

template <typename T>
struct AdamState {
  ModelParams<T> m;
  ModelParams<T> v;
  std::uint64_t step = 0;

  static AdamState for_params(const ModelParams<T>& p) {
    return {ModelParams<T>::zeros_like(p), ModelParams<T>::zeros_like(p), 0};
  }
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

inline AdamConfig adam_config(const TrainConfig& cfg) {
  return {cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon};
}

/// One bias-corrected ADAM update, elementwise:
///   m = b1 m + (1 - b1) g;  v = b2 v + (1 - b2) g^2
///   p -= lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
/// Throws NumericError, leaving everything untouched, if any gradient is not finite.
template <typename T>
void adam_step(ModelParams<T>& params, const ModelParams<T>& grads, AdamState<T>& state,
               double learning_rate, const AdamConfig& cfg = {}) {
  auto p = mmspace::tensors(params);
  const auto g = mmspace::tensors(grads);
  auto m = mmspace::tensors(state.m);
  auto v = mmspace::tensors(state.v);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (g[i].data.size() != p[i].data.size() || m[i].data.size() != p[i].data.size() ||
        v[i].data.size() != p[i].data.size()) {
      throw DimensionError("ADAM shapes disagree for tensor " + std::string(p[i].name));
    }
    for (T x : g[i].data) {
      if (!std::isfinite(static_cast<double>(x))) {
        throw NumericError("non-finite gradient in tensor " + std::string(p[i].name) +
                           " at step " + std::to_string(state.step + 1));
      }
    }
  }

  state.step += 1;
  const auto t = static_cast<double>(state.step);
  const T b1 = static_cast<T>(cfg.beta1);
  const T b2 = static_cast<T>(cfg.beta2);
  const T bc1 = static_cast<T>(1.0 - std::pow(cfg.beta1, t));
  const T bc2 = static_cast<T>(1.0 - std::pow(cfg.beta2, t));
  const T lr = static_cast<T>(learning_rate);
  const T eps = static_cast<T>(cfg.epsilon);

  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = 0; j < p[i].data.size(); ++j) {
      const T grad = g[i].data[j];
      T& mj = m[i].data[j];
      T& vj = v[i].data[j];
      mj = b1 * mj + (T(1) - b1) * grad;
      vj = b2 * vj + (T(1) - b2) * grad * grad;
      const T m_hat = mj / bc1;
      const T v_hat = vj / bc2;
      p[i].data[j] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

}  // namespace fnmme::optim
