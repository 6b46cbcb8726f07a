#include "capconf/conformal.hpp"

#include <algorithm>
#include <cmath>

namespace capconf {

const char* to_string(DecisionMode mode) {
  return mode == DecisionMode::tpr_control ? "tpr_control" : "outlier_test";
}

DecisionMode decision_mode_from_string(const std::string& s) {
  if (s == "tpr_control" || s == "tpr-control") return DecisionMode::tpr_control;
  if (s == "outlier_test" || s == "outlier-test") return DecisionMode::outlier_test;
  throw ConfigError("unknown decision mode \"" + s + "\"");
}

namespace {

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ConfigError("alpha must lie in (0, 1), got " + std::to_string(alpha));
  }
}

}  // namespace

std::optional<double> threshold_at(const CalibrationModel& calib, double alpha) {
  check_alpha(alpha);
  std::size_t n = calib.n();
  if (n < 1) throw FormatError("calibration model is empty");
  auto r = static_cast<std::size_t>(std::floor(alpha * static_cast<double>(n + 1)));
  if (r == 0) return std::nullopt;
  if (r > n) r = n;  // unreachable for alpha < 1, kept as a guard
  return calib.sorted_scores[r - 1];
}

RequiredCoverage p_value(const CalibrationModel& calib, double score) {
  if (!std::isfinite(score) || score < 0.0) {
    throw ConfigError("score must be finite and >= 0");
  }
  std::size_t n = calib.n();
  if (n < 1) throw FormatError("calibration model is empty");
  // #{calibration >= score} on the ascending-sorted scores
  auto first_ge =
      std::lower_bound(calib.sorted_scores.begin(), calib.sorted_scores.end(), score);
  auto count_ge = static_cast<std::size_t>(calib.sorted_scores.end() - first_ge);
  RequiredCoverage rc;
  rc.p_value = static_cast<double>(1 + count_ge) / static_cast<double>(n + 1);
  rc.required_coverage = 1.0 - rc.p_value;
  return rc;
}

ConformalDecision decide(const CalibrationModel& calib, double score, double alpha,
                         DecisionMode mode) {
  check_alpha(alpha);
  ConformalDecision d;
  d.score = score;
  d.alpha = alpha;
  d.mode = mode;
  d.coverage = p_value(calib, score);
  if (mode == DecisionMode::tpr_control) {
    d.threshold = threshold_at(calib, alpha);
    d.admitted = d.threshold.has_value() && score <= *d.threshold;
  } else {
    d.admitted = d.coverage.p_value > alpha;
  }
  return d;
}

bool kind_matches_mode(ScoreKind kind, DecisionMode mode) {
  return (mode == DecisionMode::tpr_control && kind == ScoreKind::image_caption) ||
         (mode == DecisionMode::outlier_test && kind == ScoreKind::knn_text);
}

}  // namespace capconf
