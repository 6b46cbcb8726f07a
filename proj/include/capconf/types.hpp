#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "capconf/errors.hpp"

namespace capconf {

// Dense n x d matrix of row vectors (captions or images). Values are stored
// at 32-bit precision; all downstream arithmetic accumulates in 64-bit.
// Immutable by convention once validated: loaders and generators call
// validate() before handing a matrix out.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  EmbeddingMatrix(std::size_t rows, std::size_t dim, std::string source_tag = {})
      : rows_(rows), dim_(dim), values_(rows * dim, 0.0f), source_tag_(std::move(source_tag)) {}
  EmbeddingMatrix(std::size_t rows, std::size_t dim, std::vector<float> values,
                  std::string source_tag = {})
      : rows_(rows), dim_(dim), values_(std::move(values)), source_tag_(std::move(source_tag)) {}

  std::size_t rows() const { return rows_; }
  std::size_t dim() const { return dim_; }
  const std::string& source_tag() const { return source_tag_; }
  void set_source_tag(std::string tag) { source_tag_ = std::move(tag); }

  std::span<const float> row(std::size_t i) const {
    return {values_.data() + i * dim_, dim_};
  }
  std::span<float> row_mut(std::size_t i) { return {values_.data() + i * dim_, dim_}; }
  const float* data() const { return values_.data(); }
  float* data() { return values_.data(); }
  float operator()(std::size_t i, std::size_t j) const { return values_[i * dim_ + j]; }
  float& operator()(std::size_t i, std::size_t j) { return values_[i * dim_ + j]; }

  // Enforces the type invariants: n,d >= 1, all entries finite, every row
  // L2 norm >= kNormEpsilon. Throws FormatError / DegenerateRow.
  void validate() const;

  bool operator==(const EmbeddingMatrix& other) const {
    return rows_ == other.rows_ && dim_ == other.dim_ && values_ == other.values_;
  }

  static constexpr double kNormEpsilon = 1e-12;

 private:
  std::size_t rows_ = 0;
  std::size_t dim_ = 0;
  std::vector<float> values_;
  std::string source_tag_;
};

enum class LabelValue : std::uint8_t { negative = 0, positive = 1, unknown = 2 };

// Per-row multi-label assignments aligned to an EmbeddingMatrix by position.
// Rows may carry an optional group id (e.g. patient) that splitters must
// never separate.
struct LabelTable {
  std::vector<std::string> row_ids;
  std::vector<std::string> labels;
  // assignments[row * labels.size() + label]
  std::vector<LabelValue> assignments;
  std::vector<std::string> group_ids;  // empty, or aligned with row_ids

  std::size_t rows() const { return row_ids.size(); }
  LabelValue at(std::size_t row, std::size_t label) const {
    return assignments[row * labels.size() + label];
  }
  std::optional<std::size_t> label_index(const std::string& name) const;

  void validate() const;

  static std::vector<std::string> default_labels() {
    return {"Cardiomegaly", "Edema", "Consolidation", "Pleural Effusion"};
  }
};

enum class ScoreKind : std::uint8_t { image_caption, knn_text };

const char* to_string(ScoreKind kind);
ScoreKind score_kind_from_string(const std::string& s);

// Ordered collection of non-conformity scores with a provenance tag.
// image_caption holds image-caption cosine distances, knn_text holds mean
// k-NN distances to a reference caption set.
struct ScoreSeries {
  ScoreKind kind = ScoreKind::image_caption;
  std::vector<double> values;
  std::optional<std::size_t> k;  // set for knn_text

  std::size_t size() const { return values.size(); }
  void validate() const;  // finite, >= 0
};

// Sorted calibration scores plus provenance; the source of conformal
// thresholds and p-values.
struct CalibrationModel {
  ScoreKind kind = ScoreKind::image_caption;
  std::vector<double> sorted_scores;  // ascending
  // Parameter record: k, source files, seed - free-form string map so the
  // CLI can echo whatever produced the model.
  std::map<std::string, std::string> created_with;

  std::size_t n() const { return sorted_scores.size(); }

  // Builds a model by sorting a copy of the series values.
  static CalibrationModel from_series(const ScoreSeries& series);

  void validate() const;  // ascending order, finite values
};

}  // namespace capconf
