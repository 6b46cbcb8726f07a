#include "capconf/zeroshot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "capconf/conformal.hpp"
#include "capconf/errors.hpp"
#include "capconf/metrics.hpp"
#include "capconf/parallel.hpp"

namespace capconf {

LabelQuery build_label_query(const EmbeddingMatrix& captions, const std::string& label) {
  captions.validate();
  const std::size_t n = captions.rows();
  const std::size_t d = captions.dim();

  // Mean per column over value-sorted summands: summation order then depends
  // only on the multiset of values, never on caption order.
  std::vector<double> mean(d, 0.0);
  std::vector<double> column(n);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      column[i] = static_cast<double>(captions(i, j));
    }
    std::sort(column.begin(), column.end());
    double sum = 0.0;
    for (double v : column) {
      sum += v;
    }
    mean[j] = sum / static_cast<double>(n);
  }

  double sq = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    sq = std::fma(mean[j], mean[j], sq);
  }
  const double norm = std::sqrt(sq);
  if (!(norm >= EmbeddingMatrix::kNormEpsilon)) {
    throw DegenerateQuery("caption mean for label '" + label + "' has near-zero norm");
  }

  LabelQuery query;
  query.label = label;
  query.caption_ids.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    query.caption_ids.push_back(std::to_string(i));
  }
  query.query_embedding.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    query.query_embedding[j] = static_cast<float>(mean[j] / norm);
  }
  return query;
}

std::vector<double> zeroshot_scores(const EmbeddingMatrix& images,
                                    const std::vector<LabelQuery>& queries) {
  images.validate();
  const std::size_t n = images.rows();
  const std::size_t m = queries.size();
  for (const LabelQuery& q : queries) {
    if (q.dim() != images.dim()) {
      throw ShapeError("query '" + q.label + "' dimension " + std::to_string(q.dim()) +
                       " does not match image dimension " + std::to_string(images.dim()));
    }
  }

  std::vector<double> scores(n * m, 0.0);
  parallel_for(n, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      for (std::size_t l = 0; l < m; ++l) {
        scores[i * m + l] = cosine_similarity(
            images.row(i), std::span<const float>(queries[l].query_embedding));
      }
    }
  });
  return scores;
}

RocCurve roc_auc(std::span<const double> scores, std::span<const std::uint8_t> positive) {
  if (scores.size() != positive.size()) {
    throw ShapeError("scores and positive flags differ in length");
  }
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (std::uint8_t flag : positive) {
    n_pos += flag != 0 ? 1 : 0;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw UndefinedAuroc("ROC needs at least one positive and one negative sample");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;  // stable on ties
  });

  RocCurve curve;
  curve.thresholds.push_back(std::numeric_limits<double>::infinity());
  curve.fpr.push_back(0.0);
  curve.tpr.push_back(0.0);

  // Walk descending tie groups once. A positive beats every negative in a
  // strictly lower group and half-ties with negatives in its own group, so
  // 2 * AUROC * P * N = 2 * wins + ties exactly in integers.
  std::uint64_t wins = 0;
  std::uint64_t ties = 0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    std::size_t group_pos = 0;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      group_pos += positive[order[j]] != 0 ? 1 : 0;
      ++j;
    }
    const std::size_t group_neg = (j - i) - group_pos;
    // Negatives with strictly lower scores = all negatives not yet consumed.
    wins += static_cast<std::uint64_t>(group_pos) * static_cast<std::uint64_t>(n_neg - fp - group_neg);
    ties += static_cast<std::uint64_t>(group_pos) * static_cast<std::uint64_t>(group_neg);
    tp += group_pos;
    fp += group_neg;
    curve.thresholds.push_back(scores[order[i]]);
    curve.tpr.push_back(static_cast<double>(tp) / static_cast<double>(n_pos));
    curve.fpr.push_back(static_cast<double>(fp) / static_cast<double>(n_neg));
    i = j;
  }
  curve.auroc = static_cast<double>(2 * wins + ties) /
                (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
  return curve;
}

const char* to_string(StratifyMode mode) {
  return mode == StratifyMode::pure ? "pure" : "mixed";
}

std::vector<LabelStrata> stratify(const LabelTable& labels, StratifyMode mode,
                                  UnknownPolicy unknown) {
  labels.validate();
  const std::size_t n = labels.rows();
  const std::size_t m = labels.labels.size();

  std::vector<LabelStrata> out(m);
  for (std::size_t l = 0; l < m; ++l) {
    out[l].label = labels.labels[l];
  }

  for (std::size_t i = 0; i < n; ++i) {
    bool has_unknown = false;
    std::size_t positives = 0;
    for (std::size_t l = 0; l < m; ++l) {
      const LabelValue v = labels.at(i, l);
      has_unknown = has_unknown || v == LabelValue::unknown;
      positives += v == LabelValue::positive ? 1 : 0;
    }
    if (unknown == UnknownPolicy::exclude_row && has_unknown) {
      continue;
    }
    for (std::size_t l = 0; l < m; ++l) {
      const LabelValue v = labels.at(i, l);
      if (v == LabelValue::positive) {
        if (mode == StratifyMode::mixed || positives == 1) {
          out[l].positives.push_back(i);
        }
      } else {
        // unknown reaches here only under as_negative
        out[l].negatives.push_back(i);
      }
    }
  }
  return out;
}

TprFpr evaluate_tpr_fpr(const CalibrationModel& calib, const ScoreSeries& pos_scores,
                        const ScoreSeries& neg_scores, double alpha) {
  const std::optional<double> threshold = threshold_at(calib, alpha);
  if (!threshold.has_value()) {
    return TprFpr{0.0, 0.0};  // NoAdmission: nothing is ever admitted
  }
  const auto admitted_fraction = [&](const std::vector<double>& values) {
    if (values.empty()) return 0.0;
    std::size_t admitted = 0;
    for (double v : values) {
      admitted += v <= *threshold ? 1 : 0;
    }
    return static_cast<double>(admitted) / static_cast<double>(values.size());
  };
  return TprFpr{admitted_fraction(pos_scores.values), admitted_fraction(neg_scores.values)};
}

}  // namespace capconf
