#include <string>
#include <vector>

#include "capconf/errors.hpp"
#include "capconf/knn.hpp"
#include "capconf/metrics.hpp"
#include "capconf/numfmt.hpp"
#include "capconf/parallel.hpp"
#include "capconf/rng.hpp"
#include "doctest.h"

using namespace capconf;

namespace {

EmbeddingMatrix oracle_train() {
  return EmbeddingMatrix(6, 2, std::vector<float>{3, 4, 4, 3, 6, 8, 0, 5, 5, 0, 1, 0});
}

EmbeddingMatrix oracle_queries() {
  return EmbeddingMatrix(2, 2, std::vector<float>{1, 0, 0, 1});
}

EmbeddingMatrix random_unit(std::size_t rows, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  EmbeddingMatrix m(rows, dim);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < dim; ++j) m(i, j) = static_cast<float>(rng.next_normal());
  }
  return normalize_rows(m);
}

void check_same(const KnnOutput& a, const KnnOutput& b) {
  REQUIRE(a.per_query.size() == b.per_query.size());
  for (std::size_t q = 0; q < a.per_query.size(); ++q) {
    CHECK(a.per_query[q].neighbor_indices == b.per_query[q].neighbor_indices);
    CHECK(a.per_query[q].neighbor_distances == b.per_query[q].neighbor_distances);
    CHECK(a.per_query[q].mean_distance == b.per_query[q].mean_distance);
  }
  CHECK(a.scores.values == b.scores.values);
}

}  // namespace

TEST_SUITE_BEGIN("knn");

TEST_CASE("locked oracle case: indices, distances and means") {
  const EmbeddingMatrix train = oracle_train();
  const EmbeddingMatrix queries = oracle_queries();
  const double d02 = 0.19999999999999996;  // 1 - 4/5 in 64-bit

  struct Expect {
    std::size_t k;
    std::vector<std::size_t> idx0, idx1;
    double mean0, mean1;
  };
  const std::vector<Expect> cases = {
      {1, {4}, {3}, 0.0, 0.0},
      {3, {4, 5, 1}, {3, 0, 2}, parse_double("0.06666666666666665"),
       parse_double("0.1333333333333333")},
      {6, {4, 5, 1, 0, 2, 3}, {3, 0, 2, 1, 4, 5}, parse_double("0.3333333333333333"),
       parse_double("0.4666666666666666")},
  };
  for (const auto& c : cases) {
    CAPTURE(c.k);
    const KnnOutput out = knnd(queries, train, KnnConfig{c.k, 1024});
    REQUIRE(out.per_query.size() == 2);
    CHECK(out.per_query[0].neighbor_indices == c.idx0);
    CHECK(out.per_query[1].neighbor_indices == c.idx1);
    CHECK(out.per_query[0].mean_distance == c.mean0);
    CHECK(out.per_query[1].mean_distance == c.mean1);
    CHECK(out.scores.values == std::vector<double>{c.mean0, c.mean1});
    CHECK(out.scores.kind == ScoreKind::knn_text);
    CHECK(out.scores.k == c.k);
    if (c.k == 3) {
      CHECK(out.per_query[0].neighbor_distances == std::vector<double>{0.0, 0.0, d02});
      CHECK(out.per_query[1].neighbor_distances == std::vector<double>{0.0, d02, d02});
    }
  }
}

TEST_CASE("distance ties break toward the lower training index") {
  // All four training rows point the same way, so every distance to the
  // query is identical; selection must take indices in ascending order.
  const EmbeddingMatrix train(4, 2, std::vector<float>{1, 0, 2, 0, 3, 0, 4, 0});
  const EmbeddingMatrix query(1, 2, std::vector<float>{5, 0});
  const KnnOutput out = knnd(query, train, KnnConfig{2, 1024});
  CHECK(out.per_query[0].neighbor_indices == std::vector<std::size_t>{0, 1});
  CHECK(out.per_query[0].mean_distance == 0.0);
}

TEST_CASE("configuration errors carry the documented messages") {
  const EmbeddingMatrix train = oracle_train();
  const EmbeddingMatrix queries = oracle_queries();

  CHECK_THROWS_WITH_AS(knnd(queries, train, KnnConfig{0, 1024}), "k must be >= 1", ConfigError);
  CHECK_THROWS_WITH_AS(knnd(queries, train, KnnConfig{7, 1024}),
                       "k exceeds training rows (7 > 6)", ConfigError);
  CHECK_THROWS_AS(knnd(EmbeddingMatrix(1, 3, std::vector<float>{1, 0, 0}), train, KnnConfig{1, 1024}),
                  ShapeError);
}

TEST_CASE("an empty query set yields an empty but well-formed output") {
  const KnnOutput out = knnd(EmbeddingMatrix(), oracle_train(), KnnConfig{2, 1024});
  CHECK(out.per_query.empty());
  CHECK(out.scores.values.empty());
  CHECK(out.scores.kind == ScoreKind::knn_text);
  CHECK(out.scores.k == 2);
}

TEST_CASE("blocked path equals brute force on randomized instances") {
  Rng pick(9000);
  for (int inst = 0; inst < 60; ++inst) {
    const std::size_t n = 1 + pick.next_below(120);
    const std::size_t d = 1 + pick.next_below(40);
    const std::size_t nq = 1 + pick.next_below(20);
    std::size_t k = 1 + pick.next_below(n);
    if (inst % 3 == 0) k = n;  // exercise the full-selection edge
    CAPTURE(inst);
    CAPTURE(n);
    CAPTURE(d);
    CAPTURE(k);
    const EmbeddingMatrix train = random_unit(n, d, 10000 + inst);
    const EmbeddingMatrix queries = random_unit(nq, d, 20000 + inst);
    const KnnConfig cfg{k, 16};
    check_same(knnd(queries, train, cfg), knnd_bruteforce(queries, train, cfg));
  }
}

TEST_CASE("results are identical for any block size and thread cap") {
  const EmbeddingMatrix train = random_unit(300, 12, 1);
  const EmbeddingMatrix queries = random_unit(40, 12, 2);
  set_max_threads(1);
  const KnnOutput base = knnd(queries, train, KnnConfig{7, 1024});
  for (std::size_t block : {std::size_t{1}, std::size_t{3}, std::size_t{64}, std::size_t{1024}}) {
    check_same(knnd(queries, train, KnnConfig{7, block}), base);
  }
  for (std::size_t threads : {std::size_t{2}, std::size_t{8}}) {
    set_max_threads(threads);
    check_same(knnd(queries, train, KnnConfig{7, 64}), base);
  }
  set_max_threads(1);
}

TEST_CASE("neighbor distances agree with scalar cosine_distance") {
  const EmbeddingMatrix train = random_unit(50, 6, 5);
  const EmbeddingMatrix queries = random_unit(8, 6, 6);
  const KnnOutput out = knnd(queries, train, KnnConfig{5, 1024});
  for (std::size_t q = 0; q < 8; ++q) {
    const auto& r = out.per_query[q];
    for (std::size_t j = 0; j < 5; ++j) {
      CHECK(r.neighbor_distances[j] ==
            cosine_distance(queries.row(q), train.row(r.neighbor_indices[j])));
    }
  }
}

TEST_SUITE_END();
