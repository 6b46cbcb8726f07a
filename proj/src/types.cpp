#include "capconf/types.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "capconf/metrics.hpp"

namespace capconf {

void EmbeddingMatrix::validate() const {
  if (rows_ < 1 || dim_ < 1) {
    throw FormatError("embedding matrix must have n >= 1 and d >= 1, got " +
                      std::to_string(rows_) + "x" + std::to_string(dim_));
  }
  if (values_.size() != rows_ * dim_) {
    throw FormatError("embedding matrix value count does not match shape");
  }
  for (std::size_t i = 0; i < rows_; ++i) {
    auto r = row(i);
    for (std::size_t j = 0; j < dim_; ++j) {
      if (!std::isfinite(r[j])) throw DegenerateRow("non-finite entry", i);
    }
    if (l2_norm(r) < kNormEpsilon) throw DegenerateRow("row norm below 1e-12", i);
  }
}

std::optional<std::size_t> LabelTable::label_index(const std::string& name) const {
  auto it = std::find(labels.begin(), labels.end(), name);
  if (it == labels.end()) return std::nullopt;
  return static_cast<std::size_t>(it - labels.begin());
}

void LabelTable::validate() const {
  if (assignments.size() != rows() * labels.size()) {
    throw FormatError("label table shape mismatch: " + std::to_string(assignments.size()) +
                      " assignments for " + std::to_string(rows()) + " rows x " +
                      std::to_string(labels.size()) + " labels");
  }
  std::set<std::string> seen(labels.begin(), labels.end());
  if (seen.size() != labels.size()) throw FormatError("label names are not unique");
  std::set<std::string> ids;
  for (const std::string& id : row_ids) {
    if (!ids.insert(id).second) throw DuplicateId(id);
  }
  if (!group_ids.empty() && group_ids.size() != rows()) {
    throw FormatError("group id column length does not match row count");
  }
}

const char* to_string(ScoreKind kind) {
  return kind == ScoreKind::image_caption ? "image_caption" : "knn_text";
}

ScoreKind score_kind_from_string(const std::string& s) {
  if (s == "image_caption") return ScoreKind::image_caption;
  if (s == "knn_text") return ScoreKind::knn_text;
  throw FormatError("unknown score kind \"" + s + "\"");
}

void ScoreSeries::validate() const {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i]) || values[i] < 0.0) {
      throw FormatError("score " + std::to_string(i) + " is negative or non-finite");
    }
  }
}

CalibrationModel CalibrationModel::from_series(const ScoreSeries& series) {
  series.validate();
  CalibrationModel model;
  model.kind = series.kind;
  model.sorted_scores = series.values;
  std::sort(model.sorted_scores.begin(), model.sorted_scores.end());
  if (series.k) model.created_with["k"] = std::to_string(*series.k);
  return model;
}

void CalibrationModel::validate() const {
  for (std::size_t i = 0; i < sorted_scores.size(); ++i) {
    if (!std::isfinite(sorted_scores[i]) || sorted_scores[i] < 0.0) {
      throw FormatError("calibration score " + std::to_string(i) + " is negative or non-finite");
    }
    if (i > 0 && sorted_scores[i] < sorted_scores[i - 1]) {
      throw FormatError("calibration scores are not sorted ascending at index " +
                        std::to_string(i));
    }
  }
}

}  // namespace capconf
