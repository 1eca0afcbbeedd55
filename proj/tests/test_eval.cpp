#include <algorithm>
#include <random>

#include "doctest.h"

#include "fnmme/errors.hpp"
#include "fnmme/eval.hpp"
#include "support.hpp"

using namespace fnmme;
using namespace fnmme::eval;

TEST_CASE("rank_candidates: best match first and ties by index") {
  std::vector<Vec<double>> cands;
  for (int i = 0; i < 5; ++i) {
    Vec<double> e = Vec<double>::Zero(5);
    e[i] = 1;
    cands.push_back(e);
  }
  CHECK(rank_candidates<double>(cands[3], cands).front() == 3);

  std::vector<Vec<double>> tied{cands[0], cands[0], cands[1]};
  CHECK(rank_candidates<double>(cands[0], tied) == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("rank_candidates: matches brute-force ordering") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const auto q = testing::random_vector<double>(rng, 6);
    std::vector<Vec<double>> cands;
    for (int i = 0; i < 10; ++i) cands.push_back(testing::random_vector<double>(rng, 6));
    const auto order = rank_candidates<double>(q, cands);
    // Brute force: position = number of candidates strictly better (or tied, lower index).
    for (std::size_t i = 0; i < cands.size(); ++i) {
      std::size_t ahead = 0;
      const double si = mmspace::cosine<double>(q, cands[i]);
      for (std::size_t j = 0; j < cands.size(); ++j) {
        const double sj = mmspace::cosine<double>(q, cands[j]);
        if (sj > si || (sj == si && j < i)) ++ahead;
      }
      CHECK(order[ahead] == i);
    }
  }
}

TEST_CASE("recall_at_k and median_rank") {
  RankTable ones{Direction::annotation, {1, 1, 1}, 10};
  CHECK(recall_at_k(ones, 1) == 1.0);

  RankTable t{Direction::retrieval, {1, 6, 11}, 20};
  CHECK(recall_at_k(t, 1) == doctest::Approx(1.0 / 3));
  CHECK(recall_at_k(t, 5) == doctest::Approx(1.0 / 3));
  CHECK(recall_at_k(t, 10) == doctest::Approx(2.0 / 3));

  CHECK(median_rank({Direction::annotation, {1, 5, 10}, 10}) == 5.0);
  CHECK(median_rank({Direction::annotation, {2, 4}, 10}) == 3.0);

  RankTable empty;
  CHECK_THROWS_AS(recall_at_k(empty, 1), ValidationError);
  CHECK_THROWS_AS(median_rank(empty), ValidationError);
  CHECK_THROWS_AS(recall_at_k(t, 0), ValidationError);
}

TEST_CASE("recall is monotone in k; median matches a sort oracle") {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<std::uint32_t> dist(1, 50);
  RankTable t{Direction::annotation, {}, 50};
  for (int i = 0; i < 101; ++i) t.ranks.push_back(dist(rng));
  double prev = 0;
  for (std::size_t k = 1; k <= 50; ++k) {
    const double r = recall_at_k(t, k);
    CHECK(r >= prev);
    prev = r;
  }
  auto sorted = t.ranks;
  std::sort(sorted.begin(), sorted.end());
  CHECK(median_rank(t) == sorted[50]);
}

TEST_CASE("rank_tables: annotation uses the best of an image's captions") {
  // 2 images, 3 captions; caption 2 belongs to image 0.
  Mat<double> s(2, 3);
  s << 0.1, 0.9, 0.5,  //
      0.2, 0.8, 0.7;
  const std::vector<std::size_t> owner{0, 1, 0};
  const auto tables = rank_tables(s, owner);
  // Image 0 ranks captions 1, 2, 0: best own caption (2) at rank 2.
  CHECK(tables.annotation.ranks == std::vector<std::uint32_t>{2, 1});
  // Every caption scores the other image higher than its own.
  CHECK(tables.retrieval.ranks == std::vector<std::uint32_t>{2, 2, 2});
  CHECK(tables.annotation.pool_size == 3);
  CHECK(tables.retrieval.pool_size == 2);

  const std::vector<std::size_t> orphan{0, 0, 0};
  CHECK_THROWS_AS(rank_tables(s, orphan), ValidationError);
}

TEST_CASE("formatting") {
  Metrics m{{0.233, 0.508, 0.668, 5}, {0.172, 0.4, 0.55, 8}};
  CHECK(format_row("FN-MME", m.annotation) == "FN-MME 23.3 50.8 66.8 5");
  const auto table = render_table("FN-MME", m);
  CHECK(table.find("Image Annotation") != std::string::npos);
  CHECK(table.find("23.3") != std::string::npos);
  CHECK(to_json(m).find("\"r_at_1\":0.233") != std::string::npos);
  CHECK(m.score() == doctest::Approx(0.233 + 0.508 + 0.668 + 0.172 + 0.4 + 0.55));
}
