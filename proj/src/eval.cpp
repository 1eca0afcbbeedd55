#include "fnmme/eval.hpp"

#include <algorithm>
#include <cstdio>

#include <fmt/format.h>
#include "json.hpp"

#include "fnmme/errors.hpp"

namespace fnmme::eval {

double Metrics::score() const {
  return annotation.r_at_1 + annotation.r_at_5 + annotation.r_at_10 + retrieval.r_at_1 +
         retrieval.r_at_5 + retrieval.r_at_10;
}

double recall_at_k(const RankTable& table, std::size_t k) {
  if (table.ranks.empty()) throw ValidationError("recall of an empty rank table");
  if (k < 1) throw ValidationError("recall cutoff k must be at least 1");
  const auto hits = std::count_if(table.ranks.begin(), table.ranks.end(),
                                  [k](std::uint32_t r) { return r <= k; });
  return static_cast<double>(hits) / static_cast<double>(table.ranks.size());
}

double median_rank(const RankTable& table) {
  if (table.ranks.empty()) throw ValidationError("median of an empty rank table");
  std::vector<std::uint32_t> sorted = table.ranks;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  if (n % 2 == 1) return sorted[n / 2];
  return (static_cast<double>(sorted[n / 2 - 1]) + static_cast<double>(sorted[n / 2])) / 2.0;
}

DirectionMetrics summarize(const RankTable& table) {
  return {recall_at_k(table, 1), recall_at_k(table, 5), recall_at_k(table, 10),
          median_rank(table)};
}

Mat<double> similarity_scores(const Mat<float>& images, const Mat<float>& captions) {
  if (images.rows() != captions.rows()) {
    throw DimensionError("image and caption embeddings have different widths");
  }
  auto units = [](const Mat<float>& x) {
    Mat<double> u = x.cast<double>();
    for (Eigen::Index k = 0; k < u.cols(); ++k) {
      const double n = u.col(k).norm();
      if (n > mmspace::kDegenerateNorm) {
        u.col(k) /= n;
      } else {
        u.col(k).setZero();
      }
    }
    return u;
  };
  return units(images).transpose() * units(captions);
}

namespace {

// Competition rank of candidate `target` among scores, ties by ascending index.
std::uint32_t rank_of(const auto& scores, Eigen::Index target) {
  const double s = scores[target];
  std::uint32_t ahead = 0;
  for (Eigen::Index j = 0; j < scores.size(); ++j) {
    if (scores[j] > s || (scores[j] == s && j < target)) ++ahead;
  }
  return ahead + 1;
}

}  // namespace

RankTables rank_tables(const Mat<double>& scores, std::span<const std::size_t> caption_image) {
  const auto n_images = scores.rows();
  const auto n_captions = scores.cols();
  if (static_cast<Eigen::Index>(caption_image.size()) != n_captions) {
    throw DimensionError("caption-to-image map does not cover every caption");
  }
  if (n_images < 1 || n_captions < 1) throw ValidationError("evaluation needs images and captions");

  std::vector<std::vector<Eigen::Index>> captions_of(static_cast<std::size_t>(n_images));
  for (Eigen::Index j = 0; j < n_captions; ++j) {
    const auto img = caption_image[static_cast<std::size_t>(j)];
    if (img >= static_cast<std::size_t>(n_images)) {
      throw ValidationError("caption " + std::to_string(j) + " refers to a missing image");
    }
    captions_of[img].push_back(j);
  }

  RankTables out;
  out.annotation = {Direction::annotation, {}, static_cast<std::size_t>(n_captions)};
  out.retrieval = {Direction::retrieval, {}, static_cast<std::size_t>(n_images)};
  out.annotation.ranks.reserve(static_cast<std::size_t>(n_images));
  out.retrieval.ranks.reserve(static_cast<std::size_t>(n_captions));

  for (Eigen::Index i = 0; i < n_images; ++i) {
    const auto& truth = captions_of[static_cast<std::size_t>(i)];
    if (truth.empty()) {
      throw ValidationError("image " + std::to_string(i) + " has no ground-truth caption");
    }
    const auto row = scores.row(i);
    std::uint32_t best = UINT32_MAX;
    for (auto j : truth) best = std::min(best, rank_of(row, j));
    out.annotation.ranks.push_back(best);
  }
  for (Eigen::Index j = 0; j < n_captions; ++j) {
    const auto col = scores.col(j);
    out.retrieval.ranks.push_back(
        rank_of(col, static_cast<Eigen::Index>(caption_image[static_cast<std::size_t>(j)])));
  }
  return out;
}

Metrics evaluate_embeddings(const Mat<float>& images, const Mat<float>& captions,
                            std::span<const std::size_t> caption_image) {
  const auto tables = rank_tables(similarity_scores(images, captions), caption_image);
  return {summarize(tables.annotation), summarize(tables.retrieval)};
}

std::string direction_name(Direction d) {
  return d == Direction::annotation ? "annotation" : "retrieval";
}

std::string format_row(const std::string& label, const DirectionMetrics& m) {
  return fmt::format("{} {:.1f} {:.1f} {:.1f} {:g}", label, 100.0 * m.r_at_1, 100.0 * m.r_at_5,
                     100.0 * m.r_at_10, m.med_r);
}

std::string render_table(const std::string& label, const Metrics& m) {
  const auto width = std::max<std::size_t>(label.size(), 6);
  std::string out = fmt::format("{:<{}} | {:^29} | {:^29}\n", "", width, "Image Annotation",
                                "Image Retrieval");
  out += fmt::format("{:<{}} | {:>6} {:>6} {:>6} {:>7} | {:>6} {:>6} {:>6} {:>7}\n", "Model",
                     width, "R@1", "R@5", "R@10", "Med r", "R@1", "R@5", "R@10", "Med r");
  const auto& a = m.annotation;
  const auto& r = m.retrieval;
  out += fmt::format(
      "{:<{}} | {:>6.1f} {:>6.1f} {:>6.1f} {:>7g} | {:>6.1f} {:>6.1f} {:>6.1f} {:>7g}\n", label,
      width, 100 * a.r_at_1, 100 * a.r_at_5, 100 * a.r_at_10, a.med_r, 100 * r.r_at_1,
      100 * r.r_at_5, 100 * r.r_at_10, r.med_r);
  return out;
}

std::string to_json(const Metrics& m) {
  auto block = [](const DirectionMetrics& d) {
    return nlohmann::json{{"r_at_1", d.r_at_1}, {"r_at_5", d.r_at_5}, {"r_at_10", d.r_at_10},
                          {"med_r", d.med_r}};
  };
  nlohmann::json j{{"annotation", block(m.annotation)},
                   {"retrieval", block(m.retrieval)},
                   {"score", m.score()}};
  return j.dump();
}

}  // namespace fnmme::eval
