#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "fnmme/mmspace.hpp"
#include "fnmme/pipeline.hpp"

namespace fnmme::testing {

template <typename T>
Mat<T> random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Mat<T> m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = static_cast<T>(dist(rng));
  }
  return m;
}

template <typename T>
Vec<T> random_vector(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0) {
  return random_matrix<T>(rng, n, 1, scale);
}

inline std::vector<textenc::TokenIndex> random_tokens(std::mt19937_64& rng, std::size_t length,
                                                      std::size_t vocab) {
  std::uniform_int_distribution<std::size_t> dist(0, vocab - 1);
  std::vector<textenc::TokenIndex> out(length);
  for (auto& t : out) t = static_cast<textenc::TokenIndex>(dist(rng));
  return out;
}

/// Random ternary FNE columns, D x B.
template <typename T>
Mat<T> random_ternary(std::mt19937_64& rng, Eigen::Index dim, Eigen::Index count) {
  std::uniform_int_distribution<int> dist(-1, 1);
  Mat<T> m(dim, count);
  for (Eigen::Index j = 0; j < count; ++j) {
    for (Eigen::Index i = 0; i < dim; ++i) m(i, j) = static_cast<T>(dist(rng));
  }
  return m;
}

template <typename T>
mmspace::ModelParams<T> random_params(std::mt19937_64& rng, Eigen::Index vocab, Eigen::Index word_dim,
                                      Eigen::Index hidden, Eigen::Index image_dim, double scale = 0.5) {
  auto p = mmspace::ModelParams<T>::zeros(vocab, word_dim, hidden, image_dim);
  for (auto& t : mmspace::tensors(p)) {
    std::normal_distribution<double> dist(0.0, scale);
    for (auto& v : t.data) v = static_cast<T>(dist(rng));
  }
  return p;
}

/// Reference loss computed through the forward-only public route:
/// project_image + gru_forward + cosine + ranking_loss.
inline double reference_loss(const mmspace::TrainingBatch<double>& batch,
                             const mmspace::ModelParams<double>& params, double alpha) {
  mmspace::PairBatch<double> pairs;
  for (Eigen::Index k = 0; k < batch.size(); ++k) {
    pairs.images.push_back(mmspace::project_image<double>(batch.images.col(k), params.affine));
    pairs.captions.push_back(
        textenc::gru_forward<double>(batch.captions[static_cast<std::size_t>(k)],
                                     params.word_embedding, params.gru)
            .output());
  }
  return mmspace::ranking_loss<double>(pairs, alpha);
}

/// Smallest |hinge argument| over both loss halves.
inline double min_hinge_margin(const mmspace::TrainingBatch<double>& batch,
                               const mmspace::ModelParams<double>& params, double alpha) {
  std::vector<Vec<double>> images, captions;
  for (Eigen::Index k = 0; k < batch.size(); ++k) {
    images.push_back(mmspace::project_image<double>(batch.images.col(k), params.affine));
    captions.push_back(textenc::gru_forward<double>(batch.captions[static_cast<std::size_t>(k)],
                                                    params.word_embedding, params.gru)
                           .output());
  }
  const auto s = mmspace::similarity_matrix<double>(images, captions);
  double margin = INFINITY;
  for (Eigen::Index k = 0; k < s.rows(); ++k) {
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      if (j == k) continue;
      margin = std::min(margin, std::abs(alpha - s(k, k) + s(k, j)));
      margin = std::min(margin, std::abs(alpha - s(k, k) + s(j, k)));
    }
  }
  return margin;
}

struct GradientCheck {
  double max_relative_error = 0;
  std::string worst_tensor;
  std::size_t checked = 0;
};

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

/// Central finite differences of `loss` with respect to every parameter entry.
template <typename LossFn>
GradientCheck finite_difference_check(mmspace::ModelParams<double> params,
                                      const mmspace::ModelParams<double>& analytic, LossFn&& loss,
                                      double step = 1e-5) {
  GradientCheck out;
  auto views = mmspace::tensors(params);
  const auto grads = mmspace::tensors(analytic);
  for (std::size_t t = 0; t < views.size(); ++t) {
    for (std::size_t i = 0; i < views[t].data.size(); ++i) {
      double& x = views[t].data[i];
      const double saved = x;
      x = saved + step;
      const double up = loss(params);
      x = saved - step;
      const double down = loss(params);
      x = saved;
      const double numeric = (up - down) / (2 * step);
      const double err = relative_error(grads[t].data[i], numeric);
      if (err > out.max_relative_error) {
        out.max_relative_error = err;
        out.worst_tensor = std::string(views[t].name) + "[" + std::to_string(i) + "]";
      }
      ++out.checked;
    }
  }
  return out;
}

/// Synthetic separable dataset: image i carries a 5-bit code. Its FNE has one
/// block of features per bit (+1 set, -1 clear, some zeroed) plus noise
/// features; its captions name each bit with one of two synonyms, in random
/// order, with filler words.
struct ToyOptions {
  std::size_t images = 32;
  std::size_t captions_per_image = 5;
  std::size_t block_width = 8;
  std::size_t noise_features = 24;
  double dropout = 0.1;
};

inline constexpr std::size_t kToyBits = 5;

inline std::size_t toy_dimension(const ToyOptions& opt = {}) {
  return kToyBits * opt.block_width + opt.noise_features;
}

inline std::vector<ImageCaptions> toy_split(std::uint64_t seed, const std::string& prefix,
                                            const ToyOptions& opt = {}) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> ternary(-1, 1);
  static const char* kOn[2][kToyBits] = {{"red", "tall", "wet", "old", "loud"},
                                         {"crimson", "high", "soaked", "aged", "noisy"}};
  static const char* kOff[2][kToyBits] = {{"blue", "short", "dry", "young", "quiet"},
                                          {"navy", "small", "arid", "new", "silent"}};
  static const char* kFiller[] = {"a", "the", "photo", "of", "with", "and", "scene"};

  std::vector<ImageCaptions> out;
  for (std::size_t i = 0; i < opt.images; ++i) {
    const std::size_t code = i % (1u << kToyBits);
    ImageCaptions item;
    item.image.image_id = prefix + std::to_string(i);
    for (std::size_t b = 0; b < kToyBits; ++b) {
      const bool on = (code >> b) & 1u;
      for (std::size_t f = 0; f < opt.block_width; ++f) {
        item.image.values.push_back(unit(rng) < opt.dropout ? 0 : (on ? 1 : -1));
      }
    }
    for (std::size_t f = 0; f < opt.noise_features; ++f) {
      item.image.values.push_back(static_cast<std::int8_t>(ternary(rng)));
    }
    for (std::size_t c = 0; c < opt.captions_per_image; ++c) {
      std::vector<std::string> words;
      for (std::size_t b = 0; b < kToyBits; ++b) {
        const bool on = (code >> b) & 1u;
        const int synonym = unit(rng) < 0.5 ? 0 : 1;
        words.emplace_back(on ? kOn[synonym][b] : kOff[synonym][b]);
      }
      words.emplace_back(kFiller[rng() % std::size(kFiller)]);
      words.emplace_back(kFiller[rng() % std::size(kFiller)]);
      std::shuffle(words.begin(), words.end(), rng);
      std::string text;
      for (const auto& w : words) text += (text.empty() ? "" : " ") + w;
      item.captions.push_back(text + ".");
    }
    out.push_back(std::move(item));
  }
  return out;
}

/// Training data over two independently drawn 32-image splits.
inline TrainingData toy_training_data(std::uint64_t seed = 7, const ToyOptions& opt = {}) {
  TrainingData data;
  data.train = toy_split(seed, "train_", opt);
  data.val = toy_split(seed + 1000, "val_", opt);
  const auto dim = toy_dimension(opt);
  data.stats.mean.assign(dim, 0.0f);
  data.stats.std.assign(dim, 1.0f);
  data.stats.fitted_on = static_cast<std::uint32_t>(opt.images);
  return data;
}

/// Per-test scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("fnmme_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fnmme::testing
