#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "capconf/conformal.hpp"
#include "capconf/errors.hpp"
#include "capconf/rng.hpp"
#include "doctest.h"

using namespace capconf;

namespace {

CalibrationModel model_of(std::vector<double> scores, ScoreKind kind = ScoreKind::image_caption) {
  ScoreSeries s{kind, std::move(scores), std::nullopt};
  return CalibrationModel::from_series(s);
}

CalibrationModel grid_model(std::size_t n) {
  // 0.01, 0.02, ..., n/100.
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<double>(i + 1) / 100.0;
  return model_of(std::move(v));
}

}  // namespace

TEST_SUITE_BEGIN("conformal");

TEST_CASE("mode names round-trip, with dashed aliases accepted") {
  CHECK(std::string(to_string(DecisionMode::tpr_control)) == "tpr_control");
  CHECK(std::string(to_string(DecisionMode::outlier_test)) == "outlier_test");
  CHECK(decision_mode_from_string("tpr_control") == DecisionMode::tpr_control);
  CHECK(decision_mode_from_string("tpr-control") == DecisionMode::tpr_control);
  CHECK(decision_mode_from_string("outlier_test") == DecisionMode::outlier_test);
  CHECK(decision_mode_from_string("outlier-test") == DecisionMode::outlier_test);
  CHECK_THROWS_AS(decision_mode_from_string("other"), ConfigError);
}

TEST_CASE("threshold is the floor(alpha*(n+1))-th smallest score") {
  // n = 100 scores 0.01..1.00 at alpha = 0.05: rank 5, i.e. 0.05.
  const CalibrationModel m = grid_model(100);
  const auto th = threshold_at(m, 0.05);
  REQUIRE(th.has_value());
  CHECK(*th == m.sorted_scores[4]);
  CHECK(*th == doctest::Approx(0.05));

  // alpha*(n+1) landing exactly on an integer: n = 19, alpha = 0.1 -> rank 2.
  const CalibrationModel m19 = grid_model(19);
  CHECK(threshold_at(m19, 0.1) == m19.sorted_scores[1]);

  // Large alpha walks to the top score.
  CHECK(threshold_at(m, 0.999) == m.sorted_scores[99]);
}

TEST_CASE("too-small alpha yields NoAdmission, not a threshold") {
  const CalibrationModel m = model_of({0.1, 0.2, 0.3});
  // floor(0.05 * 4) = 0.
  CHECK(!threshold_at(m, 0.05).has_value());
  // floor(0.25 * 4) = 1 is the first admitting alpha.
  CHECK(threshold_at(m, 0.25) == 0.1);
}

TEST_CASE("threshold input validation") {
  const CalibrationModel m = model_of({0.1});
  CHECK_THROWS_AS(threshold_at(m, 0.0), ConfigError);
  CHECK_THROWS_AS(threshold_at(m, 1.0), ConfigError);
  CHECK_THROWS_AS(threshold_at(m, -0.2), ConfigError);
  CHECK_THROWS_AS(threshold_at(m, std::numeric_limits<double>::quiet_NaN()), ConfigError);
  CHECK_THROWS_AS(threshold_at(model_of({}), 0.5), FormatError);
}

TEST_CASE("threshold is nondecreasing in alpha") {
  const CalibrationModel m = grid_model(37);
  double prev = -1.0;
  for (int i = 1; i < 100; ++i) {
    const auto th = threshold_at(m, i / 100.0);
    const double cur = th.has_value() ? *th : -1.0;
    CHECK(cur >= prev);
    prev = cur;
  }
}

TEST_CASE("p-value of the locked example") {
  const CalibrationModel m = model_of({0.1, 0.2, 0.3});
  const RequiredCoverage rc = p_value(m, 0.25);
  // One calibration score (0.3) is >= 0.25: p = (1+1)/4.
  CHECK(rc.p_value == 0.5);
  CHECK(rc.required_coverage == 0.5);
}

TEST_CASE("ties count as greater-or-equal") {
  const CalibrationModel m = model_of({0.1, 0.2, 0.2, 0.3});
  CHECK(p_value(m, 0.2).p_value == 0.8);   // {0.2, 0.2, 0.3} >= 0.2 -> 4/5
  CHECK(p_value(m, 0.21).p_value == 0.4);  // {0.3} -> 2/5
  CHECK(p_value(m, 0.0).p_value == 1.0);
  CHECK(p_value(m, 0.31).p_value == 0.2);  // {} -> 1/5
}

TEST_CASE("p-value is nonincreasing in the score and bounded") {
  Rng rng(77);
  std::vector<double> scores(200);
  for (auto& s : scores) s = rng.next_double();
  const CalibrationModel m = model_of(std::move(scores));
  double prev = 1.0;
  for (int i = 0; i <= 100; ++i) {
    const double p = p_value(m, i / 100.0).p_value;
    CHECK(p <= prev);
    CHECK(p >= 1.0 / 201.0);
    CHECK(p <= 1.0);
    prev = p;
  }
}

TEST_CASE("p-value input validation") {
  const CalibrationModel m = model_of({0.1});
  CHECK_THROWS_AS(p_value(m, -0.5), ConfigError);
  CHECK_THROWS_AS(p_value(m, std::numeric_limits<double>::infinity()), ConfigError);
  CHECK_THROWS_AS(p_value(model_of({}), 0.5), FormatError);
}

TEST_CASE("decide in tpr_control mode admits iff score <= threshold") {
  const CalibrationModel m = grid_model(100);
  const ConformalDecision in = decide(m, 0.04, 0.05, DecisionMode::tpr_control);
  CHECK(in.admitted);
  CHECK(in.threshold == 0.05);
  CHECK(in.mode == DecisionMode::tpr_control);
  CHECK(in.alpha == 0.05);
  CHECK(in.score == 0.04);

  // Equality with the threshold admits (<=, not <).
  CHECK(decide(m, *threshold_at(m, 0.05), 0.05, DecisionMode::tpr_control).admitted);
  CHECK(!decide(m, 0.051, 0.05, DecisionMode::tpr_control).admitted);
}

TEST_CASE("decide under NoAdmission rejects everything") {
  const CalibrationModel m = model_of({0.1, 0.2, 0.3});
  const ConformalDecision d = decide(m, 0.0, 0.05, DecisionMode::tpr_control);
  CHECK(!d.admitted);
  CHECK(!d.threshold.has_value());
}

TEST_CASE("decide in outlier_test mode follows the locked example") {
  const CalibrationModel m = model_of({0.1, 0.2, 0.3}, ScoreKind::knn_text);
  const ConformalDecision d = decide(m, 0.9, 0.05, DecisionMode::outlier_test);
  CHECK(d.admitted);  // p = 0.25 > 0.05
  CHECK(d.coverage.p_value == 0.25);
  CHECK(d.coverage.required_coverage == 0.75);
  CHECK(!d.threshold.has_value());

  // At alpha above the p-value the same score becomes an outlier.
  CHECK(!decide(m, 0.9, 0.3, DecisionMode::outlier_test).admitted);
}

TEST_CASE("decide validates alpha") {
  const CalibrationModel m = model_of({0.1});
  CHECK_THROWS_AS(decide(m, 0.5, 0.0, DecisionMode::tpr_control), ConfigError);
  CHECK_THROWS_AS(decide(m, 0.5, 1.5, DecisionMode::outlier_test), ConfigError);
}

TEST_CASE("decisions agree with their defining primitives on random input") {
  Rng rng(501);
  std::vector<double> scores(57);
  for (auto& s : scores) s = rng.next_double();
  const CalibrationModel m = model_of(std::move(scores));
  for (int i = 0; i < 300; ++i) {
    const double score = rng.next_double() * 1.2;
    const double alpha = 0.01 + 0.98 * rng.next_double();
    const auto th = threshold_at(m, alpha);
    const RequiredCoverage rc = p_value(m, score);

    const ConformalDecision t = decide(m, score, alpha, DecisionMode::tpr_control);
    CHECK(t.admitted == (th.has_value() && score <= *th));
    CHECK(t.coverage.p_value == rc.p_value);

    const ConformalDecision o = decide(m, score, alpha, DecisionMode::outlier_test);
    CHECK(o.admitted == (rc.p_value > alpha));
  }
}

TEST_CASE("kind/mode pairing reflects the intended score semantics") {
  CHECK(kind_matches_mode(ScoreKind::image_caption, DecisionMode::tpr_control));
  CHECK(kind_matches_mode(ScoreKind::knn_text, DecisionMode::outlier_test));
  CHECK(!kind_matches_mode(ScoreKind::image_caption, DecisionMode::outlier_test));
  CHECK(!kind_matches_mode(ScoreKind::knn_text, DecisionMode::tpr_control));
}

TEST_SUITE_END();
