#pragma once

#include <span>
#include <string>
#include <vector>

#include "fnmme/errors.hpp"
#include "fnmme/linalg.hpp"
#include "fnmme/textenc.hpp"

namespace fnmme::textenc {

/// Gate weights of a single-layer GRU.
///
/// Update rule (h_0 = 0):
///   z_t  = sigmoid(W_z x_t + U_z h_{t-1} + b_z)
///   r_t  = sigmoid(W_r x_t + U_r h_{t-1} + b_r)
///   h~_t = tanh(W_h x_t + U_h (r_t * h_{t-1}) + b_h)
///   h_t  = (1 - z_t) * h_{t-1} + z_t * h~_t
template <typename T>
struct GruParams {
  Mat<T> W_z, W_r, W_h;  // d_h x d_w
  Mat<T> U_z, U_r, U_h;  // d_h x d_h
  Vec<T> b_z, b_r, b_h;  // d_h

  static GruParams zeros(Eigen::Index input_width, Eigen::Index hidden_width) {
    GruParams p;
    for (Mat<T>* w : {&p.W_z, &p.W_r, &p.W_h}) w->setZero(hidden_width, input_width);
    for (Mat<T>* u : {&p.U_z, &p.U_r, &p.U_h}) u->setZero(hidden_width, hidden_width);
    for (Vec<T>* b : {&p.b_z, &p.b_r, &p.b_h}) b->setZero(hidden_width);
    return p;
  }

  Eigen::Index input_width() const { return W_z.cols(); }
  Eigen::Index hidden_width() const { return W_z.rows(); }

  template <typename U>
  GruParams<U> cast() const {
    return {W_z.template cast<U>(), W_r.template cast<U>(), W_h.template cast<U>(),
            U_z.template cast<U>(), U_r.template cast<U>(), U_h.template cast<U>(),
            b_z.template cast<U>(), b_r.template cast<U>(), b_h.template cast<U>()};
  }

  bool operator==(const GruParams& o) const {
    return identical(W_z, o.W_z) && identical(W_r, o.W_r) && identical(W_h, o.W_h) &&
           identical(U_z, o.U_z) && identical(U_r, o.U_r) && identical(U_h, o.U_h) &&
           identical(b_z, o.b_z) && identical(b_r, o.b_r) && identical(b_h, o.b_h);
  }
};

/// Throws DimensionError unless every tensor agrees with (d_w, d_h).
template <typename T>
void check_shapes(const GruParams<T>& p) {
  const auto dw = p.input_width();
  const auto dh = p.hidden_width();
  bool ok = dh > 0 && dw > 0;
  for (const Mat<T>* w : {&p.W_z, &p.W_r, &p.W_h}) ok = ok && w->rows() == dh && w->cols() == dw;
  for (const Mat<T>* u : {&p.U_z, &p.U_r, &p.U_h}) ok = ok && u->rows() == dh && u->cols() == dh;
  for (const Vec<T>* b : {&p.b_z, &p.b_r, &p.b_h}) ok = ok && b->size() == dh;
  if (!ok) throw DimensionError("GRU parameter shapes are inconsistent");
}

/// Everything the backward pass needs; column t holds step t+1.
template <typename T>
struct GruCache {
  std::vector<TokenIndex> indices;
  Mat<T> inputs;     // d_w x T
  Mat<T> hidden;     // d_h x (T + 1), column 0 is h_0
  Mat<T> update;     // z, d_h x T
  Mat<T> reset;      // r
  Mat<T> candidate;  // h~

  Vec<T> output() const { return hidden.col(hidden.cols() - 1); }
};

namespace detail {

template <typename T>
Vec<T> sigmoid(const Vec<T>& a) {
  return (T(1) / (T(1) + (-a.array()).exp())).matrix();
}

}  // namespace detail

/// Runs the recurrence over `indices`; `embedding` is V x d_w, one row per word.
template <typename T>
GruCache<T> gru_forward(std::span<const TokenIndex> indices, const Mat<T>& embedding,
                        const GruParams<T>& gru) {
  if (indices.empty()) throw EmptyCaptionError("cannot encode an empty caption");
  if (embedding.cols() != gru.input_width()) {
    throw DimensionError("word embedding width " + std::to_string(embedding.cols()) +
                         " does not match GRU input width " +
                         std::to_string(gru.input_width()));
  }
  const auto steps = static_cast<Eigen::Index>(indices.size());
  const auto dh = gru.hidden_width();

  GruCache<T> cache;
  cache.indices.assign(indices.begin(), indices.end());
  cache.inputs.resize(gru.input_width(), steps);
  cache.hidden.resize(dh, steps + 1);
  cache.update.resize(dh, steps);
  cache.reset.resize(dh, steps);
  cache.candidate.resize(dh, steps);
  cache.hidden.col(0).setZero();

  for (Eigen::Index t = 0; t < steps; ++t) {
    const auto index = static_cast<Eigen::Index>(indices[t]);
    if (index >= embedding.rows()) {
      throw DimensionError("token index " + std::to_string(index) + " outside vocabulary of " +
                           std::to_string(embedding.rows()));
    }
    cache.inputs.col(t) = embedding.row(index).transpose();
    const Vec<T> x = cache.inputs.col(t);
    const Vec<T> h = cache.hidden.col(t);

    const Vec<T> z = detail::sigmoid<T>(gru.W_z * x + gru.U_z * h + gru.b_z);
    const Vec<T> r = detail::sigmoid<T>(gru.W_r * x + gru.U_r * h + gru.b_r);
    const Vec<T> rh = r.cwiseProduct(h);
    const Vec<T> cand = (gru.W_h * x + gru.U_h * rh + gru.b_h).array().tanh().matrix();

    cache.update.col(t) = z;
    cache.reset.col(t) = r;
    cache.candidate.col(t) = cand;
    cache.hidden.col(t + 1) = (T(1) - z.array()) * h.array() + z.array() * cand.array();
  }
  return cache;
}

/// Accumulates reverse-mode gradients of one sequence into `grad` and
/// `embedding_grad` (V x d_w). `upstream` is dL/dh_T.
template <typename T>
void gru_backward_accumulate(const GruCache<T>& cache, const Vec<T>& upstream,
                             const GruParams<T>& gru, GruParams<T>& grad, Mat<T>& embedding_grad) {
  const auto dh = gru.hidden_width();
  const auto steps = cache.inputs.cols();
  if (upstream.size() != dh || cache.hidden.rows() != dh || cache.inputs.rows() != gru.input_width() ||
      cache.hidden.cols() != steps + 1 || static_cast<Eigen::Index>(cache.indices.size()) != steps ||
      grad.hidden_width() != dh || grad.input_width() != gru.input_width() ||
      embedding_grad.cols() != gru.input_width()) {
    throw DimensionError("GRU cache, gradient buffers and parameters disagree in shape");
  }

  Vec<T> dh_next = upstream;
  for (Eigen::Index t = steps - 1; t >= 0; --t) {
    const auto x = cache.inputs.col(t);
    const Vec<T> h = cache.hidden.col(t);
    const auto z = cache.update.col(t);
    const auto r = cache.reset.col(t);
    const auto cand = cache.candidate.col(t);

    const Vec<T> dz = dh_next.cwiseProduct(cand - h);
    const Vec<T> dcand = dh_next.cwiseProduct(z);
    Vec<T> dh_prev = dh_next.cwiseProduct((Vec<T>::Ones(dh) - z).eval());

    const Vec<T> da_h = dcand.array() * (T(1) - cand.array().square());
    const Vec<T> rh = r.cwiseProduct(h);
    grad.W_h.noalias() += da_h * x.transpose();
    grad.U_h.noalias() += da_h * rh.transpose();
    grad.b_h += da_h;

    const Vec<T> drh = gru.U_h.transpose() * da_h;
    const Vec<T> dr = drh.cwiseProduct(h);
    dh_prev += drh.cwiseProduct(r);

    const Vec<T> da_z = dz.array() * z.array() * (T(1) - z.array());
    const Vec<T> da_r = dr.array() * r.array() * (T(1) - r.array());
    grad.W_z.noalias() += da_z * x.transpose();
    grad.U_z.noalias() += da_z * h.transpose();
    grad.b_z += da_z;
    grad.W_r.noalias() += da_r * x.transpose();
    grad.U_r.noalias() += da_r * h.transpose();
    grad.b_r += da_r;

    dh_prev.noalias() += gru.U_z.transpose() * da_z;
    dh_prev.noalias() += gru.U_r.transpose() * da_r;

    const auto index = static_cast<Eigen::Index>(cache.indices[t]);
    if (index >= embedding_grad.rows()) {
      throw DimensionError("token index outside the embedding gradient buffer");
    }
    Vec<T> dx = gru.W_z.transpose() * da_z;
    dx.noalias() += gru.W_r.transpose() * da_r;
    dx.noalias() += gru.W_h.transpose() * da_h;
    embedding_grad.row(index) += dx.transpose();

    dh_next = std::move(dh_prev);
  }
}

template <typename T>
struct GruGradients {
  GruParams<T> gru;
  Mat<T> embedding;  // V x d_w; rows of tokens absent from the sequence stay zero
};

template <typename T>
GruGradients<T> gru_backward(const GruCache<T>& cache, const Vec<T>& upstream,
                             const Mat<T>& embedding, const GruParams<T>& gru) {
  GruGradients<T> out{GruParams<T>::zeros(gru.input_width(), gru.hidden_width()),
                      Mat<T>::Zero(embedding.rows(), embedding.cols())};
  gru_backward_accumulate(cache, upstream, gru, out.gru, out.embedding);
  return out;
}

}  // namespace fnmme::textenc
