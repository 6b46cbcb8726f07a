#pragma once

#include <optional>

#include "capconf/types.hpp"

namespace capconf {

enum class DecisionMode { tpr_control, outlier_test };

const char* to_string(DecisionMode mode);
DecisionMode decision_mode_from_string(const std::string& s);

// Rank-based conformal p-value and the "coverage rate required to admit":
//   p = (1 + #{calibration >= score}) / (n + 1),  required_coverage = 1 - p.
// Ties count as >=.
struct RequiredCoverage {
  double p_value = 1.0;
  double required_coverage = 0.0;
};

// Full audit record of a single admit/outlier decision.
struct ConformalDecision {
  bool admitted = false;
  double score = 0.0;
  double alpha = 0.0;
  DecisionMode mode = DecisionMode::tpr_control;
  std::optional<double> threshold;  // nullopt = NoAdmission (tpr_control only)
  RequiredCoverage coverage;
};

// r-th smallest calibration score with r = floor(alpha * (n + 1)); nullopt
// (NoAdmission) when r = 0. Under exchangeability,
// P(fresh score <= threshold) <= alpha.
// Throws ConfigError unless 0 < alpha < 1, FormatError on an empty model.
std::optional<double> threshold_at(const CalibrationModel& calib, double alpha);

RequiredCoverage p_value(const CalibrationModel& calib, double score);

// tpr_control: admitted iff score <= threshold_at(calib, alpha).
// outlier_test: admitted iff p_value(calib, score).p_value > alpha.
// A calibration kind that does not match the mode's intended score is a
// caller concern, not an error (the CLI warns).
ConformalDecision decide(const CalibrationModel& calib, double score, double alpha,
                         DecisionMode mode);

// True if the calibration kind is the one this mode was designed for
// (s_I with tpr_control, s_T with outlier_test).
bool kind_matches_mode(ScoreKind kind, DecisionMode mode);

}  // namespace capconf
