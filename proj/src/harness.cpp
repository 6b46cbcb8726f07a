#include "capconf/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "capconf/conformal.hpp"
#include "capconf/errors.hpp"
#include "capconf/knn.hpp"
#include "capconf/numfmt.hpp"
#include "capconf/parallel.hpp"
#include "capconf/rng.hpp"

namespace capconf {

void SimulationSpec::validate(std::size_t n_calib) const {
  if (alphas.empty()) {
    throw ConfigError("alpha grid is empty");
  }
  for (double a : alphas) {
    if (!(a > 0.0 && a < 1.0)) {
      throw ConfigError("alpha must lie strictly between 0 and 1");
    }
  }
  if (n_sims == 0) {
    throw ConfigError("n_sims must be at least 1");
  }
  if (subsample == 0) {
    throw ConfigError("subsample must be at least 1");
  }
  if (subsample > n_calib) {
    throw ConfigError("subsample " + std::to_string(subsample) + " exceeds the " +
                      std::to_string(n_calib) + " available calibration scores");
  }
}

CoverageReport run_coverage_sim(const ScoreSeries& calib_scores,
                                const std::vector<LabelScores>& per_label,
                                const SimulationSpec& spec) {
  calib_scores.validate();
  spec.validate(calib_scores.size());
  for (const LabelScores& ls : per_label) {
    ls.pos.validate();
    ls.neg.validate();
  }

  const std::size_t n_labels = per_label.size();
  const std::size_t n_alphas = spec.alphas.size();
  const std::size_t n_cells = n_labels * n_alphas;
  const std::size_t n = calib_scores.size();

  // Per-simulation results, indexed [sim][cell]; filled in parallel, reduced
  // sequentially so aggregation order never depends on scheduling.
  std::vector<double> sim_tpr(spec.n_sims * n_cells, 0.0);
  std::vector<double> sim_fpr(spec.n_sims * n_cells, 0.0);

  parallel_for(spec.n_sims, [&](std::size_t begin, std::size_t end) {
    for (std::size_t s = begin; s < end; ++s) {
      Rng rng(spec.seed, rng_stream(rng_domain::simulation, s));
      const std::vector<std::size_t> picked = rng.sample_without_replacement(n, spec.subsample);

      CalibrationModel model;
      model.kind = calib_scores.kind;
      model.sorted_scores.reserve(spec.subsample);
      for (std::size_t idx : picked) {
        model.sorted_scores.push_back(calib_scores.values[idx]);
      }
      std::sort(model.sorted_scores.begin(), model.sorted_scores.end());

      for (std::size_t l = 0; l < n_labels; ++l) {
        for (std::size_t a = 0; a < n_alphas; ++a) {
          const TprFpr rates =
              evaluate_tpr_fpr(model, per_label[l].pos, per_label[l].neg, spec.alphas[a]);
          sim_tpr[s * n_cells + l * n_alphas + a] = rates.tpr;
          sim_fpr[s * n_cells + l * n_alphas + a] = rates.fpr;
        }
      }
    }
  });

  CoverageReport report;
  report.spec = spec;
  report.cells.resize(n_cells);
  const double inv_sims = 1.0 / static_cast<double>(spec.n_sims);
  for (std::size_t l = 0; l < n_labels; ++l) {
    for (std::size_t a = 0; a < n_alphas; ++a) {
      CoverageCell& cell = report.cells[l * n_alphas + a];
      cell.label = per_label[l].label;
      cell.alpha = spec.alphas[a];
      double tpr_sum = 0.0;
      double fpr_sum = 0.0;
      for (std::size_t s = 0; s < spec.n_sims; ++s) {
        tpr_sum += sim_tpr[s * n_cells + l * n_alphas + a];
        fpr_sum += sim_fpr[s * n_cells + l * n_alphas + a];
      }
      cell.tpr_mean = tpr_sum * inv_sims;
      cell.fpr_mean = fpr_sum * inv_sims;
      double tpr_sq = 0.0;
      double fpr_sq = 0.0;
      for (std::size_t s = 0; s < spec.n_sims; ++s) {
        const double dt = sim_tpr[s * n_cells + l * n_alphas + a] - cell.tpr_mean;
        const double df = sim_fpr[s * n_cells + l * n_alphas + a] - cell.fpr_mean;
        tpr_sq = std::fma(dt, dt, tpr_sq);
        fpr_sq = std::fma(df, df, fpr_sq);
      }
      // Population standard deviation over the n_sims simulated estimates.
      cell.tpr_std = std::sqrt(tpr_sq * inv_sims);
      cell.fpr_std = std::sqrt(fpr_sq * inv_sims);
    }
  }
  return report;
}

std::string format_mean_pm_std(double mean, double std) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", mean);
  std::string out(buf);
  out += " ± ";
  std::snprintf(buf, sizeof(buf), "%.3f", std);
  std::string spread(buf);
  if (spread.size() > 1 && spread[0] == '0' && spread[1] == '.') {
    spread.erase(0, 1);  // ".006" rather than "0.006"
  }
  out += spread;
  return out;
}

std::string render_report(const CoverageReport& report, ReportFormat format) {
  std::string out;
  if (format == ReportFormat::csv) {
    out += "label,alpha,tpr_mean,tpr_std,fpr_mean,fpr_std\n";
    for (const CoverageCell& c : report.cells) {
      out += c.label;
      out += ',';
      out += format_double(c.alpha);
      out += ',';
      out += format_double(c.tpr_mean);
      out += ',';
      out += format_double(c.tpr_std);
      out += ',';
      out += format_double(c.fpr_mean);
      out += ',';
      out += format_double(c.fpr_std);
      out += '\n';
    }
    return out;
  }

  out += "| Label | Conformal Error Rate | " + report.model_tag + " TPR | " +
         report.model_tag + " FPR |\n";
  out += "| --- | --- | --- | --- |\n";
  for (const CoverageCell& c : report.cells) {
    out += "| " + c.label + " | " + format_double(c.alpha) + " | " +
           format_mean_pm_std(c.tpr_mean, c.tpr_std) + " | " +
           format_mean_pm_std(c.fpr_mean, c.fpr_std) + " |\n";
  }

  bool any_summary = false;
  for (const LabelSummary& s : report.label_summaries) {
    any_summary = any_summary || s.auroc.has_value() || s.mean_s_t.has_value();
  }
  if (any_summary) {
    out += "\n| Label | AUROC | Mean s_T |\n| --- | --- | --- |\n";
    for (const LabelSummary& s : report.label_summaries) {
      out += "| " + s.label + " | " + (s.auroc ? format_double(*s.auroc) : std::string("-")) +
             " | " + (s.mean_s_t ? format_double(*s.mean_s_t) : std::string("-")) + " |\n";
    }
  }
  return out;
}

Histogram make_histogram(std::span<const double> values, std::size_t bins) {
  if (values.empty()) {
    throw ConfigError("cannot build a histogram of zero values");
  }
  if (bins == 0) {
    throw ConfigError("histogram needs at least one bin");
  }
  const auto [min_it, max_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *min_it;
  const double hi = *max_it;
  const double width = hi - lo;

  Histogram hist;
  hist.edges.resize(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) {
    hist.edges[i] = lo + width * static_cast<double>(i) / static_cast<double>(bins);
  }
  hist.edges[bins] = hi;  // exact upper edge regardless of rounding
  hist.counts.assign(bins, 0);
  for (double v : values) {
    std::size_t idx = 0;
    if (width > 0.0) {
      idx = static_cast<std::size_t>((v - lo) / width * static_cast<double>(bins));
      if (idx >= bins) idx = bins - 1;  // right-closed last bin
    }
    ++hist.counts[idx];
  }
  return hist;
}

KnndReport knnd_report(const std::vector<LabelQuery>& queries,
                       const EmbeddingMatrix& train_captions,
                       const EmbeddingMatrix& calib_captions,
                       const EmbeddingMatrix& test_images, const LabelTable& test_labels,
                       std::size_t k, std::size_t hist_bins) {
  if (queries.empty()) {
    throw ConfigError("knnd report needs at least one label query");
  }
  KnnConfig knn_cfg;
  knn_cfg.k = k;

  // Calibration s_T distribution: every calibration caption scored against
  // the training captions.
  const KnnOutput calib_out = knnd(calib_captions, train_captions, knn_cfg);

  KnndReport report;
  report.calib_st = CalibrationModel::from_series(calib_out.scores);
  report.calib_hist = make_histogram(report.calib_st.sorted_scores, hist_bins);

  // Query embeddings as a matrix so they share the blocked scoring path.
  EmbeddingMatrix query_matrix(queries.size(), queries.front().dim(), "label_queries");
  for (std::size_t l = 0; l < queries.size(); ++l) {
    if (queries[l].dim() != queries.front().dim()) {
      throw ShapeError("label queries disagree on embedding dimension");
    }
    std::copy(queries[l].query_embedding.begin(), queries[l].query_embedding.end(),
              query_matrix.row_mut(l).begin());
  }
  const KnnOutput query_out = knnd(query_matrix, train_captions, knn_cfg);

  const std::vector<double> zs = zeroshot_scores(test_images, queries);
  const std::vector<LabelStrata> strata = stratify(test_labels, StratifyMode::pure);

  for (std::size_t l = 0; l < queries.size(); ++l) {
    KnndLabelRow row;
    row.label = queries[l].label;
    row.s_t = query_out.scores.values[l];
    row.required_coverage = p_value(report.calib_st, row.s_t).required_coverage;

    const auto it = std::find_if(strata.begin(), strata.end(),
                                 [&](const LabelStrata& s) { return s.label == row.label; });
    if (it != strata.end()) {
      row.n_pos = it->positives.size();
      row.n_neg = it->negatives.size();
      if (row.n_pos > 0 && row.n_neg > 0) {
        std::vector<double> scores;
        std::vector<std::uint8_t> positive;
        scores.reserve(row.n_pos + row.n_neg);
        positive.reserve(row.n_pos + row.n_neg);
        for (std::size_t i : it->positives) {
          scores.push_back(zs[i * queries.size() + l]);
          positive.push_back(1);
        }
        for (std::size_t i : it->negatives) {
          scores.push_back(zs[i * queries.size() + l]);
          positive.push_back(0);
        }
        row.auroc = roc_auc(scores, positive).auroc;
      }
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::string render_knnd_rows_csv(const KnndReport& report) {
  std::string out = "label,s_t,required_coverage,auroc,n_pos,n_neg\n";
  for (const KnndLabelRow& row : report.rows) {
    out += row.label;
    out += ',';
    out += format_double(row.s_t);
    out += ',';
    out += format_double(row.required_coverage);
    out += ',';
    if (row.auroc) out += format_double(*row.auroc);
    out += ',';
    out += std::to_string(row.n_pos);
    out += ',';
    out += std::to_string(row.n_neg);
    out += '\n';
  }
  return out;
}

std::string render_histogram_csv(const Histogram& hist) {
  std::string out = "bin_left,bin_right,count\n";
  for (std::size_t i = 0; i < hist.counts.size(); ++i) {
    out += format_double(hist.edges[i]);
    out += ',';
    out += format_double(hist.edges[i + 1]);
    out += ',';
    out += std::to_string(hist.counts[i]);
    out += '\n';
  }
  return out;
}

}  // namespace capconf
