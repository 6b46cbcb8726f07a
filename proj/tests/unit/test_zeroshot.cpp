#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "capconf/conformal.hpp"
#include "capconf/errors.hpp"
#include "capconf/metrics.hpp"
#include "capconf/rng.hpp"
#include "capconf/zeroshot.hpp"
#include "doctest.h"

using namespace capconf;

namespace {

// Quadratic pair-counting AUROC used as an oracle: exact integer wins/ties.
double auroc_quadratic(const std::vector<double>& scores, const std::vector<std::uint8_t>& pos) {
  std::uint64_t wins = 0, ties = 0, p = 0, n = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) (pos[i] ? p : n) += 1;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!pos[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (pos[j]) continue;
      if (scores[i] > scores[j]) ++wins;
      if (scores[i] == scores[j]) ++ties;
    }
  }
  return static_cast<double>(2 * wins + ties) / static_cast<double>(2 * p * n);
}

LabelTable table_for(const std::vector<std::vector<LabelValue>>& rows,
                     std::vector<std::string> labels) {
  LabelTable t;
  t.labels = std::move(labels);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    t.row_ids.push_back("r" + std::to_string(i));
    for (LabelValue v : rows[i]) t.assignments.push_back(v);
  }
  t.validate();
  return t;
}

constexpr LabelValue P = LabelValue::positive;
constexpr LabelValue N = LabelValue::negative;
constexpr LabelValue U = LabelValue::unknown;

}  // namespace

TEST_SUITE_BEGIN("zeroshot");

TEST_CASE("label query is the normalized caption mean") {
  // Mean of (1,0) and (0,1) normalizes to (1/sqrt2, 1/sqrt2); the stored
  // 32-bit value is locked.
  const EmbeddingMatrix captions(2, 2, std::vector<float>{1, 0, 0, 1});
  const LabelQuery q = build_label_query(captions, "Edema");
  CHECK(q.label == "Edema");
  CHECK(q.caption_ids == std::vector<std::string>{"0", "1"});
  REQUIRE(q.dim() == 2);
  CHECK(q.query_embedding[0] == 0.70710677f);
  CHECK(q.query_embedding[1] == 0.70710677f);
}

TEST_CASE("caption order cannot change the query, bit for bit") {
  Rng rng(404);
  EmbeddingMatrix caps(9, 5);
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t j = 0; j < 5; ++j) caps(i, j) = static_cast<float>(rng.next_normal());

  const LabelQuery base = build_label_query(caps, "L");
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    Rng shuffler(seed);
    const auto perm = shuffler.permutation(9);
    EmbeddingMatrix shuffled(9, 5);
    for (std::size_t i = 0; i < 9; ++i)
      for (std::size_t j = 0; j < 5; ++j) shuffled(i, j) = caps(perm[i], j);
    CHECK(build_label_query(shuffled, "L").query_embedding == base.query_embedding);
  }
}

TEST_CASE("captions that cancel leave no usable query") {
  const EmbeddingMatrix captions(2, 2, std::vector<float>{1, 0, -1, 0});
  CHECK_THROWS_AS(build_label_query(captions, "X"), DegenerateQuery);
}

TEST_CASE("zeroshot scores equal scalar cosine similarity bit-exactly") {
  Rng rng(405);
  EmbeddingMatrix images(11, 6);
  for (std::size_t i = 0; i < 11; ++i)
    for (std::size_t j = 0; j < 6; ++j) images(i, j) = static_cast<float>(rng.next_normal());
  EmbeddingMatrix caps(4, 6);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 6; ++j) caps(i, j) = static_cast<float>(rng.next_normal());

  const std::vector<LabelQuery> queries = {build_label_query(caps, "A"),
                                           build_label_query(images, "B")};
  const std::vector<double> scores = zeroshot_scores(images, queries);
  REQUIRE(scores.size() == 22);
  for (std::size_t i = 0; i < 11; ++i)
    for (std::size_t l = 0; l < 2; ++l) {
      CHECK(scores[i * 2 + l] ==
            cosine_similarity(images.row(i), queries[l].query_embedding));
    }
}

TEST_CASE("zeroshot rejects dimension mismatches") {
  const EmbeddingMatrix images(1, 3, std::vector<float>{1, 0, 0});
  const EmbeddingMatrix caps(1, 2, std::vector<float>{1, 0});
  CHECK_THROWS_AS(zeroshot_scores(images, {build_label_query(caps, "A")}), ShapeError);
}

TEST_CASE("roc on the locked tie-heavy example") {
  const std::vector<double> scores = {0.9, 0.8, 0.8, 0.7, 0.5, 0.5, 0.5, 0.2};
  const std::vector<std::uint8_t> pos = {1, 1, 0, 0, 1, 0, 0, 0};
  const RocCurve roc = roc_auc(scores, pos);
  // P=3, N=5, wins=10, ties=3: (2*10+3)/30.
  CHECK(roc.auroc == 0.7666666666666667);
  CHECK(roc.auroc == auroc_quadratic(scores, pos));

  const std::vector<double> want_thr = {std::numeric_limits<double>::infinity(),
                                        0.9, 0.8, 0.7, 0.5, 0.2};
  const std::vector<double> want_fpr = {0.0, 0.0, 0.2, 0.4, 0.8, 1.0};
  const std::vector<double> want_tpr = {0.0, 0.3333333333333333, 0.6666666666666666,
                                        0.6666666666666666, 1.0, 1.0};
  CHECK(roc.thresholds == want_thr);
  CHECK(roc.fpr == want_fpr);
  CHECK(roc.tpr == want_tpr);
}

TEST_CASE("roc endpoints and degenerate classes") {
  const RocCurve perfect = roc_auc(std::vector<double>{1.0, 0.0},
                                   std::vector<std::uint8_t>{1, 0});
  CHECK(perfect.auroc == 1.0);
  CHECK(perfect.fpr.back() == 1.0);
  CHECK(perfect.tpr.back() == 1.0);

  const RocCurve worst = roc_auc(std::vector<double>{0.0, 1.0},
                                 std::vector<std::uint8_t>{1, 0});
  CHECK(worst.auroc == 0.0);

  const RocCurve flat = roc_auc(std::vector<double>{0.5, 0.5},
                                std::vector<std::uint8_t>{1, 0});
  CHECK(flat.auroc == 0.5);

  CHECK_THROWS_AS(roc_auc(std::vector<double>{1.0, 0.5}, std::vector<std::uint8_t>{1, 1}),
                  UndefinedAuroc);
  CHECK_THROWS_AS(roc_auc(std::vector<double>{1.0, 0.5}, std::vector<std::uint8_t>{0, 0}),
                  UndefinedAuroc);
  CHECK_THROWS_AS(roc_auc(std::vector<double>{1.0}, std::vector<std::uint8_t>{1, 0}),
                  ShapeError);
}

TEST_CASE("swapping the classes mirrors the auroc exactly") {
  Rng rng(42);
  std::vector<double> scores(60);
  std::vector<std::uint8_t> pos(60), neg(60);
  for (std::size_t i = 0; i < 60; ++i) {
    scores[i] = std::floor(rng.next_double() * 8.0) / 8.0;  // force ties
    pos[i] = static_cast<std::uint8_t>(rng.next_bernoulli(0.4));
    neg[i] = static_cast<std::uint8_t>(1 - pos[i]);
  }
  if (std::count(pos.begin(), pos.end(), 1) == 0) pos[0] = 1, neg[0] = 0;
  if (std::count(pos.begin(), pos.end(), 1) == 60) pos[0] = 0, neg[0] = 1;
  const double a = roc_auc(scores, pos).auroc;
  const double b = roc_auc(scores, neg).auroc;
  // Integer-exact arithmetic makes the mirror identity exact too:
  // a = (2w+t)/2PN, b = (2(PN-w-t)+t)/2PN, so a + b == 1 with no rounding.
  CHECK(a + b == 1.0);
}

TEST_CASE("sort-based auroc equals the quadratic oracle on random instances") {
  Rng rng(900);
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t n = 2 + rng.next_below(80);
    std::vector<double> scores(n);
    std::vector<std::uint8_t> pos(n);
    for (std::size_t i = 0; i < n; ++i) {
      // Coarse grid makes tie groups common.
      scores[i] = static_cast<double>(rng.next_below(6)) / 5.0;
      pos[i] = static_cast<std::uint8_t>(rng.next_bernoulli(0.5));
    }
    if (std::count(pos.begin(), pos.end(), 1) == 0) pos[0] = 1;
    if (std::count(pos.begin(), pos.end(), 0) == 0) pos[0] = 0;
    CAPTURE(inst);
    CHECK(roc_auc(scores, pos).auroc == auroc_quadratic(scores, pos));
  }
}

TEST_CASE("stratify separates pure and mixed positives") {
  const LabelTable t = table_for(
      {
          {P, N},  // r0: pure A
          {P, P},  // r1: mixed
          {N, P},  // r2: pure B
          {N, N},  // r3: all negative
      },
      {"A", "B"});

  const auto pure = stratify(t, StratifyMode::pure);
  REQUIRE(pure.size() == 2);
  CHECK(pure[0].label == "A");
  CHECK(pure[0].positives == std::vector<std::size_t>{0});
  CHECK(pure[0].negatives == std::vector<std::size_t>{2, 3});
  CHECK(pure[1].positives == std::vector<std::size_t>{2});
  CHECK(pure[1].negatives == std::vector<std::size_t>{0, 3});

  const auto mixed = stratify(t, StratifyMode::mixed);
  CHECK(mixed[0].positives == std::vector<std::size_t>{0, 1});
  CHECK(mixed[0].negatives == std::vector<std::size_t>{2, 3});
  CHECK(mixed[1].positives == std::vector<std::size_t>{1, 2});
  CHECK(mixed[1].negatives == std::vector<std::size_t>{0, 3});
}

TEST_CASE("pure positives are a subset of mixed positives") {
  Rng rng(31);
  std::vector<std::vector<LabelValue>> rows(40, std::vector<LabelValue>(3));
  for (auto& r : rows)
    for (auto& v : r) v = static_cast<LabelValue>(rng.next_below(3));
  const LabelTable t = table_for(rows, {"A", "B", "C"});
  const auto pure = stratify(t, StratifyMode::pure);
  const auto mixed = stratify(t, StratifyMode::mixed);
  for (std::size_t l = 0; l < 3; ++l) {
    for (std::size_t i : pure[l].positives) {
      CHECK(std::find(mixed[l].positives.begin(), mixed[l].positives.end(), i) !=
            mixed[l].positives.end());
    }
    CHECK(pure[l].negatives == mixed[l].negatives);
  }
}

TEST_CASE("unknown policy: count as negative or drop the row") {
  const LabelTable t = table_for(
      {
          {P, U},  // r0
          {U, N},  // r1
          {N, P},  // r2
      },
      {"A", "B"});

  const auto lenient = stratify(t, StratifyMode::mixed, UnknownPolicy::as_negative);
  CHECK(lenient[0].positives == std::vector<std::size_t>{0});
  CHECK(lenient[0].negatives == std::vector<std::size_t>{1, 2});  // r1's unknown counts negative
  CHECK(lenient[1].positives == std::vector<std::size_t>{2});
  CHECK(lenient[1].negatives == std::vector<std::size_t>{0, 1});

  // In pure mode, unknown-as-negative means r0 counts as a pure A positive.
  const auto pure = stratify(t, StratifyMode::pure, UnknownPolicy::as_negative);
  CHECK(pure[0].positives == std::vector<std::size_t>{0});

  const auto strict = stratify(t, StratifyMode::mixed, UnknownPolicy::exclude_row);
  CHECK(strict[0].positives.empty());   // r0 dropped (unknown B)
  CHECK(strict[0].negatives == std::vector<std::size_t>{2});
  CHECK(strict[1].positives == std::vector<std::size_t>{2});
  CHECK(strict[1].negatives.empty());  // r1 dropped (unknown A)
}

TEST_CASE("tpr/fpr of the locked example") {
  const CalibrationModel calib =
      CalibrationModel::from_series(ScoreSeries{ScoreKind::image_caption,
                                                {0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07,
                                                 0.08, 0.09, 0.10, 0.11, 0.12, 0.13, 0.14,
                                                 0.15, 0.16, 0.17, 0.18, 0.19},
                                                std::nullopt});
  // threshold at alpha=0.25: rank floor(0.25*20)=5 -> 0.05.
  const ScoreSeries pos{ScoreKind::image_caption, {0.03, 0.07}, std::nullopt};
  const ScoreSeries neg{ScoreKind::image_caption, {0.04, 0.5}, std::nullopt};
  const TprFpr r = evaluate_tpr_fpr(calib, pos, neg, 0.25);
  CHECK(r.tpr == 0.5);
  CHECK(r.fpr == 0.5);
}

TEST_CASE("tpr/fpr under NoAdmission and empty series") {
  const CalibrationModel calib = CalibrationModel::from_series(
      ScoreSeries{ScoreKind::image_caption, {0.1, 0.2, 0.3}, std::nullopt});
  const ScoreSeries pos{ScoreKind::image_caption, {0.0, 0.0}, std::nullopt};
  const ScoreSeries neg{ScoreKind::image_caption, {0.0}, std::nullopt};

  // alpha=0.05 on n=3 is NoAdmission: nothing admitted at all.
  const TprFpr na = evaluate_tpr_fpr(calib, pos, neg, 0.05);
  CHECK(na.tpr == 0.0);
  CHECK(na.fpr == 0.0);

  // Empty series contribute rate 0 rather than 0/0.
  const ScoreSeries empty{ScoreKind::image_caption, {}, std::nullopt};
  const TprFpr e = evaluate_tpr_fpr(calib, empty, neg, 0.5);
  CHECK(e.tpr == 0.0);
  CHECK(e.fpr == 1.0);  // 0.0 admitted under threshold 0.2 at alpha 0.5
}

TEST_CASE("admitting at the threshold counts toward the rates") {
  const CalibrationModel calib = CalibrationModel::from_series(
      ScoreSeries{ScoreKind::image_caption, {0.1, 0.2, 0.3}, std::nullopt});
  // alpha=0.5: rank floor(0.5*4)=2 -> threshold 0.2; scores equal to it admit.
  const ScoreSeries pos{ScoreKind::image_caption, {0.2, 0.2, 0.9}, std::nullopt};
  const ScoreSeries neg{ScoreKind::image_caption, {0.2}, std::nullopt};
  const TprFpr r = evaluate_tpr_fpr(calib, pos, neg, 0.5);
  CHECK(r.tpr == doctest::Approx(2.0 / 3.0));
  CHECK(r.fpr == 1.0);
}

TEST_SUITE_END();
