#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "capconf/types.hpp"

namespace capconf {

// A per-label zero-shot classifier: the normalized mean of the embeddings
// of all captions describing one label.
struct LabelQuery {
  std::string label;
  std::vector<std::string> caption_ids;
  std::vector<float> query_embedding;  // unit L2 norm

  std::size_t dim() const { return query_embedding.size(); }
};

// query_embedding = normalize(mean of caption rows). The column means are
// accumulated over value-sorted summands, so the result is bit-exactly
// invariant to caption order. Throws DegenerateQuery when captions cancel.
LabelQuery build_label_query(const EmbeddingMatrix& captions, const std::string& label);

// Row-major images.rows() x queries.size() matrix of cosine similarities;
// entry (i, l) equals cosine_similarity(images.row(i), queries[l]) bit-exactly
// and 1 - s_I(query_l, image_i) within rounding.
std::vector<double> zeroshot_scores(const EmbeddingMatrix& images,
                                    const std::vector<LabelQuery>& queries);

// ROC curve at every distinct score threshold (descending), prefixed with
// the (0,0) point at threshold +inf. auroc is the Mann-Whitney statistic
// with half credit for ties, computed sort-based in exact integer
// arithmetic so it equals the quadratic pair-counting oracle bit for bit.
struct RocCurve {
  std::vector<double> thresholds;
  std::vector<double> fpr;
  std::vector<double> tpr;
  double auroc = 0.0;
};

// positive[i] != 0 marks scores[i] as a positive sample.
// Throws UndefinedAuroc when either class is empty.
RocCurve roc_auc(std::span<const double> scores, std::span<const std::uint8_t> positive);

enum class StratifyMode { pure, mixed };
enum class UnknownPolicy { as_negative, exclude_row };

const char* to_string(StratifyMode mode);

struct LabelStrata {
  std::string label;
  std::vector<std::size_t> positives;
  std::vector<std::size_t> negatives;
};

// pure: rows positive for exactly one tracked label; mixed: rows positive
// for the label regardless of others. Negatives: rows where the label is
// negative. Unknown values count as negative under as_negative (default);
// exclude_row drops any row carrying an unknown among the tracked labels.
std::vector<LabelStrata> stratify(const LabelTable& labels, StratifyMode mode,
                                  UnknownPolicy unknown = UnknownPolicy::as_negative);

// TPR/FPR of score series against the conformal threshold at alpha.
// NoAdmission admits nothing: (0, 0).
struct TprFpr {
  double tpr = 0.0;
  double fpr = 0.0;
};
TprFpr evaluate_tpr_fpr(const CalibrationModel& calib, const ScoreSeries& pos_scores,
                        const ScoreSeries& neg_scores, double alpha);

}  // namespace capconf
