#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fnmme/errors.hpp"
#include "fnmme/fne.hpp"
#include "fnmme/gru.hpp"
#include "fnmme/linalg.hpp"
#include "fnmme/parallel.hpp"

/// The joint image-caption space: affine image projection, cosine
/// similarity, the bidirectional hinge ranking loss and its gradients.
namespace fnmme::mmspace {

using textenc::GruParams;
using textenc::TokenIndex;

template <typename T>
struct AffineParams {
  Mat<T> W;  // d_h x D
  Vec<T> b;  // d_h

  template <typename U>
  AffineParams<U> cast() const {
    return {W.template cast<U>(), b.template cast<U>()};
  }
  bool operator==(const AffineParams& o) const { return identical(W, o.W) && identical(b, o.b); }
};

/// All trainable tensors. The same type carries gradients and optimizer moments.
template <typename T>
struct ModelParams {
  Mat<T> word_embedding;  // V x d_w
  GruParams<T> gru;
  AffineParams<T> affine;

  Eigen::Index vocab_size() const { return word_embedding.rows(); }
  Eigen::Index word_dim() const { return word_embedding.cols(); }
  Eigen::Index hidden_dim() const { return gru.hidden_width(); }
  Eigen::Index image_dim() const { return affine.W.cols(); }

  static ModelParams zeros(Eigen::Index vocab, Eigen::Index word_dim, Eigen::Index hidden,
                           Eigen::Index image_dim) {
    return {Mat<T>::Zero(vocab, word_dim), GruParams<T>::zeros(word_dim, hidden),
            {Mat<T>::Zero(hidden, image_dim), Vec<T>::Zero(hidden)}};
  }

  static ModelParams zeros_like(const ModelParams& p) {
    return zeros(p.vocab_size(), p.word_dim(), p.hidden_dim(), p.image_dim());
  }

  template <typename U>
  ModelParams<U> cast() const {
    return {word_embedding.template cast<U>(), gru.template cast<U>(), affine.template cast<U>()};
  }

  bool operator==(const ModelParams& o) const {
    return identical(word_embedding, o.word_embedding) && gru == o.gru && affine == o.affine;
  }
};

enum class ParamGroup { word_embedding, gru, affine };

/// Flat view of one parameter tensor; data is the tensor's contiguous storage.
template <typename T>
struct TensorRef {
  std::string_view name;
  ParamGroup group;
  Eigen::Index rows;
  Eigen::Index cols;
  std::span<T> data;
};

namespace detail {

template <typename T, typename Params>
std::vector<TensorRef<T>> collect(Params& p) {
  std::vector<TensorRef<T>> out;
  auto add = [&](std::string_view name, ParamGroup group, auto& m) {
    out.push_back({name, group, m.rows(), m.cols(),
                   std::span<T>(m.data(), static_cast<std::size_t>(m.size()))});
  };
  add("word_embedding", ParamGroup::word_embedding, p.word_embedding);
  add("gru.W_z", ParamGroup::gru, p.gru.W_z);
  add("gru.W_r", ParamGroup::gru, p.gru.W_r);
  add("gru.W_h", ParamGroup::gru, p.gru.W_h);
  add("gru.U_z", ParamGroup::gru, p.gru.U_z);
  add("gru.U_r", ParamGroup::gru, p.gru.U_r);
  add("gru.U_h", ParamGroup::gru, p.gru.U_h);
  add("gru.b_z", ParamGroup::gru, p.gru.b_z);
  add("gru.b_r", ParamGroup::gru, p.gru.b_r);
  add("gru.b_h", ParamGroup::gru, p.gru.b_h);
  add("affine.W", ParamGroup::affine, p.affine.W);
  add("affine.b", ParamGroup::affine, p.affine.b);
  return out;
}

}  // namespace detail

/// Every trainable tensor in a fixed order.
template <typename T>
std::vector<TensorRef<T>> tensors(ModelParams<T>& p) {
  return detail::collect<T>(p);
}

template <typename T>
std::vector<TensorRef<const T>> tensors(const ModelParams<T>& p) {
  return detail::collect<const T>(p);
}

/// Throws DimensionError unless all component shapes agree.
template <typename T>
void check_shapes(const ModelParams<T>& p) {
  textenc::check_shapes(p.gru);
  if (p.word_embedding.rows() < 1 || p.word_embedding.cols() != p.gru.input_width()) {
    throw DimensionError("word embedding shape does not match the GRU input width");
  }
  if (p.affine.W.rows() != p.hidden_dim() || p.affine.b.size() != p.hidden_dim() ||
      p.affine.W.cols() < 1) {
    throw DimensionError("affine projection shape does not match the GRU hidden width");
  }
}

/// Seeded initialization: word embeddings uniform(-0.1, 0.1), weight matrices
/// Glorot-uniform, biases zero.
template <typename T>
ModelParams<T> init_params(Eigen::Index vocab, Eigen::Index word_dim, Eigen::Index hidden,
                           Eigen::Index image_dim, std::uint64_t seed) {
  auto p = ModelParams<T>::zeros(vocab, word_dim, hidden, image_dim);
  std::mt19937_64 rng(seed);
  auto fill = [&rng](Mat<T>& m, double limit) {
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = static_cast<T>(dist(rng));
    }
  };
  auto glorot = [](const Mat<T>& m) {
    return std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  };
  fill(p.word_embedding, 0.1);
  for (Mat<T>* m : {&p.gru.W_z, &p.gru.W_r, &p.gru.W_h, &p.gru.U_z, &p.gru.U_r, &p.gru.U_h,
                    &p.affine.W}) {
    fill(*m, glorot(*m));
  }
  return p;
}

/// Ternary FNE values as reals.
template <typename T>
Vec<T> to_real(const fne::FneVector& v) {
  Vec<T> out(static_cast<Eigen::Index>(v.values.size()));
  for (std::size_t j = 0; j < v.values.size(); ++j) out[static_cast<Eigen::Index>(j)] = T(v.values[j]);
  return out;
}

template <typename T>
Vec<T> project_image(const Vec<T>& fne, const AffineParams<T>& affine) {
  if (fne.size() != affine.W.cols()) {
    throw DimensionError("FNE of dimension " + std::to_string(fne.size()) +
                         " does not match projection input " + std::to_string(affine.W.cols()));
  }
  return affine.W * fne + affine.b;
}

template <typename T>
Vec<T> project_image(const fne::FneVector& fne, const AffineParams<T>& affine) {
  return project_image<T>(to_real<T>(fne), affine);
}

/// Norms at or below this make a vector degenerate for cosine similarity.
inline constexpr double kDegenerateNorm = 1e-12;

template <typename T>
struct CosineResult {
  T value;
  bool degenerate;
};

template <typename T>
CosineResult<T> cosine_checked(const Vec<T>& a, const Vec<T>& b) {
  if (a.size() != b.size()) throw DimensionError("cosine of vectors with different lengths");
  const T na = a.norm();
  const T nb = b.norm();
  if (!(na > T(kDegenerateNorm)) || !(nb > T(kDegenerateNorm))) return {T(0), true};
  const T s = a.dot(b) / (na * nb);
  return {std::clamp(s, T(-1), T(1)), false};
}

template <typename T>
T cosine(const Vec<T>& a, const Vec<T>& b) {
  return cosine_checked(a, b).value;
}

template <typename T>
struct PairBatch {
  std::vector<Vec<T>> images;
  std::vector<Vec<T>> captions;
};

enum class LossReduction { sum, mean };

namespace detail {

inline void check_square(Eigen::Index rows, Eigen::Index cols, Eigen::Index other_rows,
                         Eigen::Index other_cols) {
  if (rows != cols || rows != other_rows || cols != other_cols || rows < 1) {
    throw DimensionError("ranking loss needs two matching square score matrices");
  }
}

}  // namespace detail

/// Hinge ranking loss from raw similarity scores.
///
/// image_scores(k, j) = s(i_k, c_j) and caption_scores(k, j) = s(c_k, i_j).
/// L = sum_k sum_{j != k} max(0, alpha - s(i_k, c_k) + s(i_k, c_j))
///   + sum_k sum_{j != k} max(0, alpha - s(c_k, i_k) + s(c_k, i_j))
template <typename T>
T ranking_loss_from_scores(const Mat<T>& image_scores, const Mat<T>& caption_scores, T alpha,
                           LossReduction reduction = LossReduction::sum) {
  detail::check_square(image_scores.rows(), image_scores.cols(), caption_scores.rows(),
                       caption_scores.cols());
  const auto n = image_scores.rows();
  T loss = 0;
  for (Eigen::Index k = 0; k < n; ++k) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == k) continue;
      loss += std::max(T(0), alpha - image_scores(k, k) + image_scores(k, j));
    }
  }
  for (Eigen::Index k = 0; k < n; ++k) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == k) continue;
      loss += std::max(T(0), alpha - caption_scores(k, k) + caption_scores(k, j));
    }
  }
  return reduction == LossReduction::mean ? loss / static_cast<T>(n) : loss;
}

/// Pairwise cosine scores: out(k, j) = cosine(images[k], captions[j]).
template <typename T>
Mat<T> similarity_matrix(std::span<const Vec<T>> images, std::span<const Vec<T>> captions) {
  Mat<T> s(static_cast<Eigen::Index>(images.size()), static_cast<Eigen::Index>(captions.size()));
  for (std::size_t k = 0; k < images.size(); ++k) {
    for (std::size_t j = 0; j < captions.size(); ++j) {
      s(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = cosine(images[k], captions[j]);
    }
  }
  return s;
}

template <typename T>
T ranking_loss(const PairBatch<T>& batch, T alpha, LossReduction reduction = LossReduction::sum) {
  if (batch.images.size() != batch.captions.size() || batch.images.empty()) {
    throw DimensionError("a pair batch needs the same positive number of images and captions");
  }
  if (alpha < T(0)) throw ValidationError("ranking margin must be non-negative");
  const Mat<T> s = similarity_matrix<T>(batch.images, batch.captions);
  // s(c_k, i_j) = s(i_j, c_k) since cosine is symmetric.
  return ranking_loss_from_scores<T>(s, s.transpose(), alpha, reduction);
}

/// dL/dS for S(k, j) = s(i_k, c_j), with both loss halves folded in.
/// Hinges exactly at zero are inactive.
template <typename T>
Mat<T> ranking_loss_score_grad(const Mat<T>& s, T alpha, LossReduction reduction) {
  const auto n = s.rows();
  Mat<T> g = Mat<T>::Zero(n, n);
  const T unit = reduction == LossReduction::mean ? T(1) / static_cast<T>(n) : T(1);
  for (Eigen::Index k = 0; k < n; ++k) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == k) continue;
      // image k against caption j
      if (alpha - s(k, k) + s(k, j) > T(0)) {
        g(k, k) -= unit;
        g(k, j) += unit;
      }
      // caption k against image j: s(c_k, i_j) = S(j, k)
      if (alpha - s(k, k) + s(j, k) > T(0)) {
        g(k, k) -= unit;
        g(j, k) += unit;
      }
    }
  }
  return g;
}

/// One training batch: FNE columns (D x B, entries in {-1, 0, 1}) and the
/// token sequence of each paired caption.
template <typename T>
struct TrainingBatch {
  Mat<T> images;
  std::vector<std::vector<TokenIndex>> captions;

  Eigen::Index size() const { return images.cols(); }
};

template <typename T>
struct LossAndGradients {
  T loss = 0;
  ModelParams<T> grads;
  std::size_t degenerate_embeddings = 0;
};

namespace detail {

/// Gradient of cosine through unit-normalization: (g - (u.g) u) / |x|.
template <typename T>
void unit_backward(Mat<T>& g, const Mat<T>& units, const Vec<T>& norms) {
  for (Eigen::Index k = 0; k < g.cols(); ++k) {
    if (!(norms[k] > T(kDegenerateNorm))) {
      g.col(k).setZero();
      continue;
    }
    const T proj = units.col(k).dot(g.col(k));
    g.col(k) = (g.col(k) - proj * units.col(k)) / norms[k];
  }
}

template <typename T>
Mat<T> normalize_columns(const Mat<T>& x, Vec<T>& norms) {
  norms = x.colwise().norm().transpose();
  Mat<T> out = x;
  for (Eigen::Index k = 0; k < x.cols(); ++k) {
    if (norms[k] > T(kDegenerateNorm)) {
      out.col(k) /= norms[k];
    } else {
      out.col(k).setZero();
    }
  }
  return out;
}

}  // namespace detail

/// Loss of `batch` under `params` and exact gradients for every trainable
/// tensor. FNE inputs are constants and receive no gradient.
///
/// Caption encoding fans out over `workers` threads; per-chunk gradient
/// buffers are summed in chunk order.
template <typename T>
LossAndGradients<T> loss_backward(const TrainingBatch<T>& batch, const ModelParams<T>& params,
                                  T alpha, LossReduction reduction = LossReduction::sum,
                                  std::size_t workers = 1) {
  check_shapes(params);
  const auto n = batch.size();
  if (n < 1 || static_cast<Eigen::Index>(batch.captions.size()) != n) {
    throw DimensionError("training batch needs one caption per image column");
  }
  if (batch.images.rows() != params.image_dim()) {
    throw DimensionError("FNE dimension " + std::to_string(batch.images.rows()) +
                         " does not match model input " + std::to_string(params.image_dim()));
  }
  if (alpha < T(0)) throw ValidationError("ranking margin must be non-negative");
  const auto dh = params.hidden_dim();
  const auto count = static_cast<std::size_t>(n);

  Mat<T> image_emb = params.affine.W * batch.images;
  image_emb.colwise() += params.affine.b;

  std::vector<textenc::GruCache<T>> caches(count);
  Mat<T> caption_emb(dh, n);
  parallel_chunks(count, workers, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      caches[k] = textenc::gru_forward<T>(batch.captions[k], params.word_embedding, params.gru);
      caption_emb.col(static_cast<Eigen::Index>(k)) = caches[k].output();
    }
  });

  Vec<T> image_norms, caption_norms;
  const Mat<T> image_units = detail::normalize_columns(image_emb, image_norms);
  const Mat<T> caption_units = detail::normalize_columns(caption_emb, caption_norms);
  const Mat<T> scores = image_units.transpose() * caption_units;

  LossAndGradients<T> out;
  for (Eigen::Index k = 0; k < n; ++k) {
    out.degenerate_embeddings += !(image_norms[k] > T(kDegenerateNorm));
    out.degenerate_embeddings += !(caption_norms[k] > T(kDegenerateNorm));
  }
  out.loss = ranking_loss_from_scores<T>(scores, scores.transpose(), alpha, reduction);
  out.grads = ModelParams<T>::zeros_like(params);

  const Mat<T> dscores = ranking_loss_score_grad<T>(scores, alpha, reduction);
  Mat<T> dimage = caption_units * dscores.transpose();
  Mat<T> dcaption = image_units * dscores;
  detail::unit_backward(dimage, image_units, image_norms);
  detail::unit_backward(dcaption, caption_units, caption_norms);

  out.grads.affine.W.noalias() = dimage * batch.images.transpose();
  out.grads.affine.b = dimage.rowwise().sum();

  const std::size_t chunks = chunk_count(count, workers);
  std::vector<GruParams<T>> gru_parts(chunks);
  std::vector<Mat<T>> emb_parts(chunks);
  parallel_chunks(count, workers, [&](std::size_t chunk, std::size_t begin, std::size_t end) {
    gru_parts[chunk] = GruParams<T>::zeros(params.word_dim(), dh);
    emb_parts[chunk] = Mat<T>::Zero(params.vocab_size(), params.word_dim());
    for (std::size_t k = begin; k < end; ++k) {
      const Vec<T> upstream = dcaption.col(static_cast<Eigen::Index>(k));
      textenc::gru_backward_accumulate<T>(caches[k], upstream, params.gru, gru_parts[chunk],
                                          emb_parts[chunk]);
    }
  });
  for (std::size_t c = 0; c < chunks; ++c) {
    auto& g = out.grads.gru;
    const auto& part = gru_parts[c];
    g.W_z += part.W_z;
    g.W_r += part.W_r;
    g.W_h += part.W_h;
    g.U_z += part.U_z;
    g.U_r += part.U_r;
    g.U_h += part.U_h;
    g.b_z += part.b_z;
    g.b_r += part.b_r;
    g.b_h += part.b_h;
    out.grads.word_embedding += emb_parts[c];
  }
  return out;
}

}  // namespace fnmme::mmspace
