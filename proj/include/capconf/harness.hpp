#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "capconf/types.hpp"
#include "capconf/zeroshot.hpp"

namespace capconf {

// Protocol knobs for the repeated-subsampling coverage simulation.
struct SimulationSpec {
  std::vector<double> alphas{0.001, 0.01, 0.05, 0.1};
  std::size_t n_sims = 100;
  std::size_t subsample = 5000;
  std::uint64_t seed = 0;
  StratifyMode stratification = StratifyMode::mixed;

  // Throws ConfigError: empty/out-of-range alphas, n_sims = 0, or
  // subsample > n_calib.
  void validate(std::size_t n_calib) const;
};

// Positive and negative score series for one label.
struct LabelScores {
  std::string label;
  ScoreSeries pos;
  ScoreSeries neg;
};

struct CoverageCell {
  std::string label;
  double alpha = 0.0;
  double tpr_mean = 0.0;
  double tpr_std = 0.0;
  double fpr_mean = 0.0;
  double fpr_std = 0.0;
};

// Optional per-label context rendered alongside the coverage table.
struct LabelSummary {
  std::string label;
  std::optional<double> auroc;
  std::optional<double> mean_s_t;
};

struct CoverageReport {
  SimulationSpec spec;
  std::string model_tag = "model";
  std::vector<CoverageCell> cells;  // label-major, alpha-minor
  std::vector<LabelSummary> label_summaries;
};

// For each simulation s: subsample calibration scores without replacement
// using the stream-s generator, rebuild the calibration model, and evaluate
// TPR/FPR for every (label, alpha). Aggregates mean and population std in
// ascending simulation order, so the report is bit-identical for identical
// (inputs, seed) regardless of thread count.
CoverageReport run_coverage_sim(const ScoreSeries& calib_scores,
                                const std::vector<LabelScores>& per_label,
                                const SimulationSpec& spec);

enum class ReportFormat { csv, markdown };

// "0.267 ± .006": three decimals, the spread printed without its leading
// zero (as in the tables this mirrors).
std::string format_mean_pm_std(double mean, double std);

// csv: pinned schema "label,alpha,tpr_mean,tpr_std,fpr_mean,fpr_std" with
// shortest round-trip values. markdown: one table row per (label, alpha)
// with "mean ± std" cells, plus a per-label summary table when present.
std::string render_report(const CoverageReport& report, ReportFormat format);

// Uniform-width histogram over [min, max] of values; edges has bins+1
// entries, the last bin is right-closed. Throws ConfigError on empty input
// or bins = 0.
struct Histogram {
  std::vector<double> edges;
  std::vector<std::size_t> counts;
};
Histogram make_histogram(std::span<const double> values, std::size_t bins);

// One row of the query-difficulty report.
struct KnndLabelRow {
  std::string label;
  double s_t = 0.0;               // mean k-NN distance of the query embedding
  double required_coverage = 0.0; // conformal coverage needed to admit it
  std::optional<double> auroc;    // zero-shot AUROC on pure-label test rows
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
};

struct KnndReport {
  std::vector<KnndLabelRow> rows;
  Histogram calib_hist;        // distribution of calibration s_T values
  CalibrationModel calib_st;   // the underlying calibration model
};

// Scores every label query against the training captions (s_T), positions it
// in the calibration s_T distribution (required coverage), and measures its
// zero-shot AUROC on pure-label test rows. Also bins the calibration s_T
// values for external plotting.
KnndReport knnd_report(const std::vector<LabelQuery>& queries,
                       const EmbeddingMatrix& train_captions,
                       const EmbeddingMatrix& calib_captions,
                       const EmbeddingMatrix& test_images, const LabelTable& test_labels,
                       std::size_t k, std::size_t hist_bins = 50);

// "label,s_t,required_coverage,auroc,n_pos,n_neg"; auroc empty when undefined.
std::string render_knnd_rows_csv(const KnndReport& report);
// "bin_left,bin_right,count"
std::string render_histogram_csv(const Histogram& hist);

}  // namespace capconf
