#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fnmme/linalg.hpp"
#include "fnmme/mmspace.hpp"

/// Recall@K and median rank for image annotation and image retrieval.
namespace fnmme::eval {

enum class Direction { annotation, retrieval };

/// 1-based rank of the best-placed ground-truth item, one entry per query.
struct RankTable {
  Direction direction = Direction::annotation;
  std::vector<std::uint32_t> ranks;
  std::size_t pool_size = 0;
};

struct DirectionMetrics {
  double r_at_1 = 0;
  double r_at_5 = 0;
  double r_at_10 = 0;
  double med_r = 0;

  bool operator==(const DirectionMetrics&) const = default;
};

struct Metrics {
  DirectionMetrics annotation;
  DirectionMetrics retrieval;

  /// Sum of R@1, R@5 and R@10 over both directions.
  double score() const;
  bool operator==(const Metrics&) const = default;
};

/// Candidate indices by descending cosine similarity; ties keep ascending index.
template <typename T>
std::vector<std::size_t> rank_candidates(const Vec<T>& query, std::span<const Vec<T>> candidates) {
  std::vector<T> sims(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) sims[i] = mmspace::cosine(query, candidates[i]);
  std::vector<std::size_t> order(candidates.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sims[a] > sims[b]; });
  return order;
}

double recall_at_k(const RankTable& table, std::size_t k);
double median_rank(const RankTable& table);
DirectionMetrics summarize(const RankTable& table);

/// Cosine similarities between every image (column of `images`) and every
/// caption (column of `captions`), computed in 64-bit.
Mat<double> similarity_scores(const Mat<float>& images, const Mat<float>& captions);

struct RankTables {
  RankTable annotation;
  RankTable retrieval;
};

/// Builds both rank tables from a precomputed image x caption score matrix.
/// caption_image[j] is the image index that caption j describes.
RankTables rank_tables(const Mat<double>& scores, std::span<const std::size_t> caption_image);

/// Metrics for embeddings already in the joint space (one column per item).
Metrics evaluate_embeddings(const Mat<float>& images, const Mat<float>& captions,
                            std::span<const std::size_t> caption_image);

std::string direction_name(Direction d);

/// "<label> R@1 R@5 R@10 Medr" with recalls as percentages.
std::string format_row(const std::string& label, const DirectionMetrics& m);

/// Aligned two-block table in the usual annotation / retrieval layout.
std::string render_table(const std::string& label, const Metrics& m);

std::string to_json(const Metrics& m);

}  // namespace fnmme::eval
