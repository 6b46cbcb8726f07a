// capconf: conformal outlier detection for contrastive image/caption
// embeddings. Subcommands cover the full workflow: synthetic data, score
// calibration, k-NN text distances, conformal admission, zero-shot
// evaluation, coverage simulation, and run reporting.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "capconf/conformal.hpp"
#include "capconf/errors.hpp"
#include "capconf/harness.hpp"
#include "capconf/io.hpp"
#include "capconf/knn.hpp"
#include "capconf/metrics.hpp"
#include "capconf/numfmt.hpp"
#include "capconf/parallel.hpp"
#include "capconf/synth.hpp"
#include "capconf/types.hpp"
#include "capconf/zeroshot.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Config file: a flat JSON object whose keys mirror long flag names. Values
// from the file fill any flag the user did not pass; explicit flags win.
// ---------------------------------------------------------------------------

const std::set<std::string>& known_config_keys() {
  static const std::set<std::string> keys{
      "threads",    "captions",  "images",        "score",     "train",
      "k",          "out",       "out-scores",    "calib",     "scores",
      "alpha",      "mode",      "queries",       "block-rows", "labels",
      "label-queries", "out-dir", "unknown",      "pos",       "neg",
      "alphas",     "sims",      "subsample",     "seed",      "stratification",
      "model-tag",  "spec",      "proportions",   "in",        "format"};
  return keys;
}

json load_config_object(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw capconf::IoError("cannot open config file " + path);
  }
  json cfg;
  try {
    cfg = json::parse(in);
  } catch (const json::parse_error& e) {
    throw capconf::FormatError("config file " + path + ": " + e.what());
  }
  if (!cfg.is_object()) {
    throw capconf::FormatError("config file " + path + " must hold a JSON object");
  }
  for (const auto& [key, value] : cfg.items()) {
    if (known_config_keys().count(key) == 0) {
      throw capconf::ConfigError("config file " + path + ": unknown key '" + key + "'");
    }
  }
  return cfg;
}

// Pre-scan argv for --config so file values can seed the option defaults
// before CLI11 parses the real flags over them.
json prescan_config(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config") {
      if (i + 1 >= argc) {
        throw capconf::ConfigError("--config expects a file path");
      }
      return load_config_object(argv[i + 1]);
    }
    if (arg.rfind("--config=", 0) == 0) {
      return load_config_object(arg.substr(9));
    }
  }
  return json::object();
}

template <typename T>
void cfg_get(const json& cfg, const std::string& key, T& target) {
  if (!cfg.contains(key)) return;
  try {
    if constexpr (std::is_same_v<T, std::string>) {
      if (cfg[key].is_string()) {
        target = cfg[key].get<std::string>();
      } else {
        target = cfg[key].dump();
      }
    } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
      if (cfg[key].is_array()) {
        target = cfg[key].get<std::vector<std::string>>();
      } else {
        target = {cfg[key].get<std::string>()};
      }
    } else {
      target = cfg[key].get<T>();
    }
  } catch (const json::exception&) {
    throw capconf::ConfigError("config key '" + key + "' has the wrong type");
  }
}

// ---------------------------------------------------------------------------
// Manifests: every writing command drops a JSON record next to its outputs
// with the effective parameters, inputs, and outputs - enough to re-run the
// command. Thread count is deliberately absent (it never changes results).
// ---------------------------------------------------------------------------

struct Manifest {
  std::string subcommand;
  std::map<std::string, std::string> parameters;  // sorted by key
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;

  void write(const fs::path& path) const {
    ordered_json j;
    j["tool"] = "capconf";
    j["version"] = kVersion;
    j["subcommand"] = subcommand;
    ordered_json params = ordered_json::object();
    for (const auto& [key, value] : parameters) {
      params[key] = value;
    }
    j["parameters"] = std::move(params);
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw capconf::IoError("cannot write manifest " + path.string());
    }
    out << j.dump(2) << "\n";
  }
};

fs::path manifest_path_for_file(const std::string& out_file) {
  return fs::path(out_file + ".manifest.json");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw capconf::IoError("cannot write " + path.string());
  }
  out << text;
  if (!out) {
    throw capconf::IoError("failed while writing " + path.string());
  }
}

std::string csv_quote(const std::string& value) {
  if (value.find_first_of(",\"\n") == std::string::npos) return value;
  std::string quoted = "\"";
  for (char c : value) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  quoted += '"';
  return quoted;
}

// File-name-safe form of a label ("Pleural Effusion" -> "Pleural_Effusion").
std::string slug(const std::string& label) {
  std::string s = label;
  for (char& c : s) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                    (c >= '0' && c <= '9') || c == '.' || c == '-' || c == '_';
    if (!ok) c = '_';
  }
  return s;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw capconf::ConfigError(message);
}

std::vector<double> parse_double_list(const std::string& text, const std::string& what) {
  std::vector<double> values;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = text.find(',', pos);
    const std::string tok = text.substr(pos, comma == std::string::npos ? std::string::npos
                                                                        : comma - pos);
    if (tok.empty()) {
      throw capconf::ConfigError(what + ": empty entry in '" + text + "'");
    }
    try {
      values.push_back(capconf::parse_double(tok));
    } catch (const capconf::FormatError& e) {
      throw capconf::ConfigError(what + ": " + e.what());
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return values;
}

// "LABEL=path" or bare "path" (label = file stem). An '=' only counts as a
// separator when it appears before any path separator.
std::pair<std::string, std::string> parse_label_path(const std::string& arg) {
  const std::size_t eq = arg.find('=');
  const std::size_t sep = arg.find_first_of("/\\");
  if (eq != std::string::npos && (sep == std::string::npos || eq < sep)) {
    return {arg.substr(0, eq), arg.substr(eq + 1)};
  }
  return {fs::path(arg).stem().string(), arg};
}

void ensure_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw capconf::IoError("cannot create output directory " + dir + ": " + ec.message());
  }
}

// ---------------------------------------------------------------------------
// calibrate
// ---------------------------------------------------------------------------

struct CalibrateArgs {
  std::string captions;
  std::string images;
  std::string score;
  std::string train;
  std::size_t k = 500;
  std::string out;
  std::string out_scores;
};

int run_calibrate(const CalibrateArgs& a) {
  require(!a.captions.empty(), "--captions is required");
  require(!a.out.empty(), "--out is required");
  require(a.score == "si" || a.score == "st", "--score must be si or st");

  capconf::ScoreSeries series;
  Manifest manifest;
  manifest.subcommand = "calibrate";
  manifest.parameters["captions"] = a.captions;
  manifest.parameters["score"] = a.score;
  manifest.parameters["out"] = a.out;
  manifest.inputs.push_back(a.captions);

  capconf::CalibrationModel model;
  if (a.score == "si") {
    require(!a.images.empty(), "--images is required for --score si");
    const capconf::EmbeddingMatrix captions = capconf::load_npy(a.captions);
    const capconf::EmbeddingMatrix images = capconf::load_npy(a.images);
    series = capconf::pairwise_si_rowwise(captions, images);
    model = capconf::CalibrationModel::from_series(series);
    model.created_with["captions"] = a.captions;
    model.created_with["images"] = a.images;
    model.created_with["score"] = "si";
    manifest.parameters["images"] = a.images;
    manifest.inputs.push_back(a.images);
  } else {
    require(!a.train.empty(), "--train is required for --score st");
    const capconf::EmbeddingMatrix captions = capconf::load_npy(a.captions);
    const capconf::EmbeddingMatrix train = capconf::load_npy(a.train);
    capconf::KnnConfig cfg;
    cfg.k = a.k;
    series = capconf::knnd(captions, train, cfg).scores;
    model = capconf::CalibrationModel::from_series(series);
    model.created_with["captions"] = a.captions;
    model.created_with["train"] = a.train;
    model.created_with["score"] = "st";
    model.created_with["k"] = std::to_string(a.k);
    manifest.parameters["train"] = a.train;
    manifest.parameters["k"] = std::to_string(a.k);
    manifest.inputs.push_back(a.train);
  }

  capconf::store_calibration(model, a.out);
  manifest.outputs.push_back(a.out);
  if (!a.out_scores.empty()) {
    capconf::store_scores(series, a.out_scores);
    manifest.parameters["out-scores"] = a.out_scores;
    manifest.outputs.push_back(a.out_scores);
    manifest.outputs.push_back(capconf::score_sidecar_path(a.out_scores).string());
  }
  manifest.write(manifest_path_for_file(a.out));
  return 0;
}

// ---------------------------------------------------------------------------
// admit
// ---------------------------------------------------------------------------

struct AdmitArgs {
  std::string calib;
  std::string scores;
  double alpha = 0.0;
  std::string mode;
  std::string out;
};

int run_admit(const AdmitArgs& a) {
  require(!a.calib.empty(), "--calib is required");
  require(!a.scores.empty(), "--scores is required");
  require(!a.mode.empty(), "--mode is required");
  require(!a.out.empty(), "--out is required");
  const capconf::DecisionMode mode = capconf::decision_mode_from_string(a.mode);

  const capconf::CalibrationModel model = capconf::load_calibration(a.calib);
  const capconf::ScoreSeries series = capconf::load_scores(a.scores);
  if (!capconf::kind_matches_mode(model.kind, mode)) {
    std::cerr << "warning: calibration kind '" << capconf::to_string(model.kind)
              << "' is not the usual companion of mode '" << capconf::to_string(mode)
              << "'\n";
  }

  std::string csv = "index,score,p_value,required_coverage,admitted\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const capconf::ConformalDecision d =
        capconf::decide(model, series.values[i], a.alpha, mode);
    csv += std::to_string(i);
    csv += ',';
    csv += capconf::format_double(d.score);
    csv += ',';
    csv += capconf::format_double(d.coverage.p_value);
    csv += ',';
    csv += capconf::format_double(d.coverage.required_coverage);
    csv += ',';
    csv += d.admitted ? "true" : "false";
    csv += '\n';
  }
  write_text(a.out, csv);

  Manifest manifest;
  manifest.subcommand = "admit";
  manifest.parameters["calib"] = a.calib;
  manifest.parameters["scores"] = a.scores;
  manifest.parameters["alpha"] = capconf::format_double(a.alpha);
  manifest.parameters["mode"] = a.mode;
  manifest.parameters["out"] = a.out;
  manifest.inputs = {a.calib, a.scores};
  manifest.outputs = {a.out};
  manifest.write(manifest_path_for_file(a.out));
  return 0;
}

// ---------------------------------------------------------------------------
// knnd
// ---------------------------------------------------------------------------

struct KnndArgs {
  std::string queries;
  std::string train;
  std::size_t k = 500;
  std::size_t block_rows = 1024;
  std::string out;
};

int run_knnd(const KnndArgs& a) {
  require(!a.queries.empty(), "--queries is required");
  require(!a.train.empty(), "--train is required");
  require(!a.out.empty(), "--out is required");

  const capconf::EmbeddingMatrix queries = capconf::load_npy(a.queries);
  const capconf::EmbeddingMatrix train = capconf::load_npy(a.train);
  capconf::KnnConfig cfg;
  cfg.k = a.k;
  cfg.block_rows = a.block_rows;
  const capconf::KnnOutput out = capconf::knnd(queries, train, cfg);
  capconf::store_scores(out.scores, a.out);

  Manifest manifest;
  manifest.subcommand = "knnd";
  manifest.parameters["queries"] = a.queries;
  manifest.parameters["train"] = a.train;
  manifest.parameters["k"] = std::to_string(a.k);
  manifest.parameters["block-rows"] = std::to_string(a.block_rows);
  manifest.parameters["out"] = a.out;
  manifest.inputs = {a.queries, a.train};
  manifest.outputs = {a.out, capconf::score_sidecar_path(a.out).string()};
  manifest.write(manifest_path_for_file(a.out));
  return 0;
}

// ---------------------------------------------------------------------------
// zeroshot
// ---------------------------------------------------------------------------

struct ZeroshotArgs {
  std::string images;
  std::string labels;
  std::vector<std::string> label_queries;
  std::string out_dir;
  std::string unknown = "as-negative";
};

std::string query_label_for_file(const fs::path& npy_path) {
  fs::path sidecar = npy_path;
  sidecar.replace_extension(".query.json");
  if (fs::exists(sidecar)) {
    std::ifstream in(sidecar, std::ios::binary);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw capconf::FormatError(sidecar.filename().string() + ": " + e.what());
    }
    if (j.is_object() && j.contains("label") && j["label"].is_string()) {
      return j["label"].get<std::string>();
    }
    throw capconf::FormatError(sidecar.filename().string() + ": expected {\"label\": ...}");
  }
  return npy_path.stem().string();
}

int run_zeroshot(const ZeroshotArgs& a) {
  require(!a.images.empty(), "--images is required");
  require(!a.labels.empty(), "--labels is required");
  require(!a.label_queries.empty(), "--label-queries is required");
  require(!a.out_dir.empty(), "--out-dir is required");
  require(a.unknown == "as-negative" || a.unknown == "exclude-row",
          "--unknown must be as-negative or exclude-row");
  const capconf::UnknownPolicy policy = a.unknown == "as-negative"
                                            ? capconf::UnknownPolicy::as_negative
                                            : capconf::UnknownPolicy::exclude_row;

  const capconf::EmbeddingMatrix images = capconf::load_npy(a.images);
  const capconf::LabelTable table = capconf::load_labels(a.labels);

  std::vector<capconf::LabelQuery> queries;
  for (const std::string& file : a.label_queries) {
    const std::string label = query_label_for_file(file);
    const capconf::EmbeddingMatrix captions = capconf::load_npy(file);
    try {
      capconf::LabelQuery q = capconf::build_label_query(captions, label);
      q.caption_ids.assign(1, file);  // provenance: the source file
      queries.push_back(std::move(q));
    } catch (const capconf::DegenerateQuery& e) {
      std::cerr << "warning: skipping '" << label << "': " << e.what() << "\n";
    }
  }
  require(!queries.empty(), "no usable label queries");

  std::set<std::string> used_slugs;
  for (const capconf::LabelQuery& q : queries) {
    if (!used_slugs.insert(slug(q.label)).second) {
      throw capconf::ConfigError("label '" + q.label + "' collides with another label's file name");
    }
  }

  ensure_out_dir(a.out_dir);
  const std::vector<double> scores = capconf::zeroshot_scores(images, queries);

  std::string summary = "label,stratification,n_pos,n_neg,auroc,auroc_exact\n";
  std::vector<std::string> outputs;
  std::size_t evaluated = 0;
  for (const capconf::StratifyMode mode :
       {capconf::StratifyMode::pure, capconf::StratifyMode::mixed}) {
    const std::vector<capconf::LabelStrata> strata = capconf::stratify(table, mode, policy);
    for (std::size_t l = 0; l < queries.size(); ++l) {
      const std::string& label = queries[l].label;
      const auto it = std::find_if(strata.begin(), strata.end(),
                                   [&](const capconf::LabelStrata& s) { return s.label == label; });
      if (it == strata.end()) {
        std::cerr << "warning: label '" << label << "' (" << capconf::to_string(mode)
                  << ") is not in the label table; skipped\n";
        continue;
      }
      summary += label;
      summary += ',';
      summary += capconf::to_string(mode);
      summary += ',';
      summary += std::to_string(it->positives.size());
      summary += ',';
      summary += std::to_string(it->negatives.size());
      summary += ',';
      if (it->positives.empty() || it->negatives.empty()) {
        std::cerr << "warning: label '" << label << "' (" << capconf::to_string(mode)
                  << ") has a single class; skipped\n";
        summary += ",\n";
        continue;
      }
      std::vector<double> label_scores;
      std::vector<std::uint8_t> positive;
      for (std::size_t i : it->positives) {
        label_scores.push_back(scores[i * queries.size() + l]);
        positive.push_back(1);
      }
      for (std::size_t i : it->negatives) {
        label_scores.push_back(scores[i * queries.size() + l]);
        positive.push_back(0);
      }
      const capconf::RocCurve roc = capconf::roc_auc(label_scores, positive);

      std::string roc_csv = "threshold,fpr,tpr\n";
      for (std::size_t p = 0; p < roc.thresholds.size(); ++p) {
        roc_csv += capconf::format_double(roc.thresholds[p]);
        roc_csv += ',';
        roc_csv += capconf::format_double(roc.fpr[p]);
        roc_csv += ',';
        roc_csv += capconf::format_double(roc.tpr[p]);
        roc_csv += '\n';
      }
      const std::string roc_name =
          "roc_" + std::string(capconf::to_string(mode)) + "_" + slug(label) + ".csv";
      write_text(fs::path(a.out_dir) / roc_name, roc_csv);
      outputs.push_back(roc_name);

      char rounded[32];
      std::snprintf(rounded, sizeof(rounded), "%.3f", roc.auroc);
      summary += rounded;
      summary += ',';
      summary += capconf::format_double(roc.auroc);
      summary += '\n';
      ++evaluated;
    }
  }

  write_text(fs::path(a.out_dir) / "auroc_summary.csv", summary);
  outputs.push_back("auroc_summary.csv");
  std::sort(outputs.begin(), outputs.end());

  Manifest manifest;
  manifest.subcommand = "zeroshot";
  manifest.parameters["images"] = a.images;
  manifest.parameters["labels"] = a.labels;
  std::string joined;
  for (const std::string& q : a.label_queries) {
    if (!joined.empty()) joined += ' ';
    joined += q;
  }
  manifest.parameters["label-queries"] = joined;
  manifest.parameters["out-dir"] = a.out_dir;
  manifest.parameters["unknown"] = a.unknown;
  manifest.inputs = {a.images, a.labels};
  manifest.inputs.insert(manifest.inputs.end(), a.label_queries.begin(), a.label_queries.end());
  manifest.outputs = outputs;
  manifest.write(fs::path(a.out_dir) / "manifest.json");

  require(evaluated > 0, "no label could be evaluated (every label was single-class or missing)");
  return 0;
}

// ---------------------------------------------------------------------------
// eval-coverage
// ---------------------------------------------------------------------------

struct EvalCoverageArgs {
  std::string calib;
  std::vector<std::string> pos;
  std::vector<std::string> neg;
  std::string alphas = "0.001,0.01,0.05,0.1";
  std::size_t sims = 100;
  std::size_t subsample = 5000;
  std::uint64_t seed = 0;
  std::string stratification = "mixed";
  std::string model_tag = "model";
  std::string out_dir;
};

capconf::ScoreSeries load_calibration_pool(const std::string& path) {
  if (fs::path(path).extension() == ".json") {
    const capconf::CalibrationModel model = capconf::load_calibration(path);
    capconf::ScoreSeries series;
    series.kind = model.kind;
    series.values = model.sorted_scores;
    return series;
  }
  return capconf::load_scores(path);
}

int run_eval_coverage(const EvalCoverageArgs& a) {
  require(!a.calib.empty(), "--calib is required");
  require(!a.pos.empty(), "--pos is required");
  require(!a.out_dir.empty(), "--out-dir is required");
  require(a.stratification == "mixed" || a.stratification == "pure",
          "--stratification must be pure or mixed");

  const capconf::ScoreSeries calib = load_calibration_pool(a.calib);

  // Label order: first appearance across --pos then --neg.
  std::vector<capconf::LabelScores> per_label;
  const auto slot = [&per_label](const std::string& label) -> capconf::LabelScores& {
    for (capconf::LabelScores& ls : per_label) {
      if (ls.label == label) return ls;
    }
    per_label.push_back(capconf::LabelScores{label, {}, {}});
    return per_label.back();
  };
  for (const std::string& arg : a.pos) {
    const auto [label, path] = parse_label_path(arg);
    slot(label).pos = capconf::load_scores(path);
  }
  for (const std::string& arg : a.neg) {
    const auto [label, path] = parse_label_path(arg);
    slot(label).neg = capconf::load_scores(path);
  }
  for (const capconf::LabelScores& ls : per_label) {
    if (ls.pos.values.empty() && ls.neg.values.empty()) continue;
    if (!ls.pos.values.empty() && ls.pos.kind != calib.kind) {
      std::cerr << "warning: positive scores for '" << ls.label << "' have kind '"
                << capconf::to_string(ls.pos.kind) << "' but the calibration pool is '"
                << capconf::to_string(calib.kind) << "'\n";
    }
  }

  capconf::SimulationSpec spec;
  spec.alphas = parse_double_list(a.alphas, "--alphas");
  spec.n_sims = a.sims;
  spec.subsample = a.subsample;
  spec.seed = a.seed;
  spec.stratification = a.stratification == "pure" ? capconf::StratifyMode::pure
                                                   : capconf::StratifyMode::mixed;

  capconf::CoverageReport report = capconf::run_coverage_sim(calib, per_label, spec);
  report.model_tag = a.model_tag;

  ensure_out_dir(a.out_dir);
  write_text(fs::path(a.out_dir) / "coverage_report.csv",
             capconf::render_report(report, capconf::ReportFormat::csv));
  write_text(fs::path(a.out_dir) / "coverage_report.md",
             capconf::render_report(report, capconf::ReportFormat::markdown));

  Manifest manifest;
  manifest.subcommand = "eval-coverage";
  manifest.parameters["calib"] = a.calib;
  const auto join = [](const std::vector<std::string>& parts) {
    std::string joined;
    for (const std::string& p : parts) {
      if (!joined.empty()) joined += ' ';
      joined += p;
    }
    return joined;
  };
  manifest.parameters["pos"] = join(a.pos);
  if (!a.neg.empty()) manifest.parameters["neg"] = join(a.neg);
  manifest.parameters["alphas"] = a.alphas;
  manifest.parameters["sims"] = std::to_string(a.sims);
  manifest.parameters["subsample"] = std::to_string(a.subsample);
  manifest.parameters["seed"] = std::to_string(a.seed);
  manifest.parameters["stratification"] = a.stratification;
  manifest.parameters["model-tag"] = a.model_tag;
  manifest.parameters["out-dir"] = a.out_dir;
  manifest.inputs.push_back(a.calib);
  for (const std::string& arg : a.pos) manifest.inputs.push_back(parse_label_path(arg).second);
  for (const std::string& arg : a.neg) manifest.inputs.push_back(parse_label_path(arg).second);
  manifest.outputs = {"coverage_report.csv", "coverage_report.md"};
  manifest.write(fs::path(a.out_dir) / "manifest.json");
  return 0;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string spec;
  std::string proportions = "0.72,0.08,0.1,0.1";
  std::string out_dir;
};

int run_synth(const SynthArgs& a) {
  require(!a.spec.empty(), "--spec is required");
  require(!a.out_dir.empty(), "--out-dir is required");

  std::ifstream in(a.spec, std::ios::binary);
  if (!in) {
    throw capconf::IoError("cannot open spec file " + a.spec);
  }
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const capconf::SynthSpec spec = capconf::synth_spec_from_json(text);

  const std::vector<double> props = parse_double_list(a.proportions, "--proportions");
  require(props.size() == 4, "--proportions takes exactly four values (train,val,calib,test)");
  const capconf::SplitProportions proportions{props[0], props[1], props[2], props[3]};

  const capconf::SynthDataset ds = capconf::generate(spec);
  const capconf::SplitIndices splits = capconf::split(ds, proportions);

  ensure_out_dir(a.out_dir);
  const fs::path dir(a.out_dir);
  std::vector<std::string> outputs;
  const auto emit = [&outputs](const std::string& name) { outputs.push_back(name); };

  capconf::store_npy(ds.captions, dir / "captions.npy");
  emit("captions.npy");
  capconf::store_npy(ds.images, dir / "images.npy");
  emit("images.npy");
  capconf::store_labels(ds.labels, dir / "labels.jsonl");
  emit("labels.jsonl");
  write_text(dir / "splits.json", capconf::split_to_json(splits));
  emit("splits.json");
  write_text(dir / "synth_spec.json", capconf::synth_spec_to_json(ds.spec));
  emit("synth_spec.json");

  const std::vector<std::string> names = ds.spec.resolved_label_names();
  for (std::size_t l = 0; l < ds.query_captions.size(); ++l) {
    const std::string base = "query_captions_" + slug(names[l]);
    capconf::store_npy(ds.query_captions[l], dir / (base + ".npy"));
    emit(base + ".npy");
    ordered_json sidecar;
    sidecar["label"] = names[l];
    write_text(dir / (base + ".query.json"), sidecar.dump(2) + "\n");
    emit(base + ".query.json");
  }

  // Materialized per-split views so downstream commands can consume the
  // partition directly.
  const auto write_split = [&](const char* split_name, const std::vector<std::size_t>& rows) {
    if (rows.empty()) {
      std::cerr << "warning: split '" << split_name << "' is empty; no files written\n";
      return;
    }
    capconf::EmbeddingMatrix captions(rows.size(), ds.captions.dim(),
                                      std::string("captions_") + split_name);
    capconf::EmbeddingMatrix images(rows.size(), ds.images.dim(),
                                    std::string("images_") + split_name);
    capconf::LabelTable labels;
    labels.labels = ds.labels.labels;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const std::size_t src = rows[r];
      std::copy(ds.captions.row(src).begin(), ds.captions.row(src).end(),
                captions.row_mut(r).begin());
      std::copy(ds.images.row(src).begin(), ds.images.row(src).end(),
                images.row_mut(r).begin());
      labels.row_ids.push_back(ds.labels.row_ids[src]);
      for (std::size_t l = 0; l < ds.labels.labels.size(); ++l) {
        labels.assignments.push_back(ds.labels.at(src, l));
      }
      if (!ds.labels.group_ids.empty()) {
        labels.group_ids.push_back(ds.labels.group_ids[src]);
      }
    }
    const std::string cap_name = std::string("captions_") + split_name + ".npy";
    const std::string img_name = std::string("images_") + split_name + ".npy";
    const std::string lab_name = std::string("labels_") + split_name + ".jsonl";
    capconf::store_npy(captions, dir / cap_name);
    emit(cap_name);
    capconf::store_npy(images, dir / img_name);
    emit(img_name);
    capconf::store_labels(labels, dir / lab_name);
    emit(lab_name);
  };
  write_split("train", splits.train);
  write_split("val", splits.val);
  write_split("calib", splits.calib);
  write_split("test", splits.test);

  std::sort(outputs.begin(), outputs.end());

  Manifest manifest;
  manifest.subcommand = "synth";
  manifest.parameters["spec"] = a.spec;
  manifest.parameters["proportions"] = a.proportions;
  manifest.parameters["out-dir"] = a.out_dir;
  manifest.parameters["seed"] = std::to_string(spec.seed);
  manifest.inputs = {a.spec};
  manifest.outputs = outputs;
  manifest.write(dir / "manifest.json");
  return 0;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

struct ReportArgs {
  std::string in;
  std::string format = "md";
};

int run_report(const ReportArgs& a) {
  require(!a.in.empty(), "--in is required");
  require(a.format == "md" || a.format == "csv", "--format must be md or csv");
  if (!fs::is_directory(a.in)) {
    throw capconf::ConfigError("--in must name a directory");
  }

  std::vector<fs::path> manifests;
  for (const auto& entry : fs::recursive_directory_iterator(a.in)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    const bool is_manifest =
        name == "manifest.json" ||
        (name.size() > 14 && name.compare(name.size() - 14, 14, ".manifest.json") == 0);
    if (is_manifest) {
      manifests.push_back(entry.path());
    }
  }
  std::sort(manifests.begin(), manifests.end());
  if (manifests.empty()) {
    throw capconf::ConfigError("no manifests found under " + a.in);
  }

  std::string doc;
  if (a.format == "md") {
    doc += "# capconf run report\n";
  } else {
    doc += "manifest,subcommand,kind,key,value\n";
  }

  for (const fs::path& path : manifests) {
    const std::string rel = fs::relative(path, a.in).generic_string();
    std::ifstream in(path, std::ios::binary);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw capconf::FormatError(rel + ": " + e.what());
    }
    const std::string sub = j.value("subcommand", std::string("?"));

    if (a.format == "md") {
      doc += "\n## " + rel + "\n\n";
      doc += "subcommand: `" + sub + "`\n\n";
      doc += "| parameter | value |\n| --- | --- |\n";
      if (j.contains("parameters") && j["parameters"].is_object()) {
        for (const auto& [key, value] : j["parameters"].items()) {
          doc += "| " + key + " | " +
                 (value.is_string() ? value.get<std::string>() : value.dump()) + " |\n";
        }
      }
      if (j.contains("outputs") && j["outputs"].is_array()) {
        for (const auto& out_name : j["outputs"]) {
          if (!out_name.is_string()) continue;
          const std::string name = out_name.get<std::string>();
          if (name.size() < 4 || name.rfind(".csv") != name.size() - 4) continue;
          const fs::path csv_path = path.parent_path() / name;
          if (!fs::exists(csv_path)) continue;
          std::ifstream csv_in(csv_path, std::ios::binary);
          std::string csv((std::istreambuf_iterator<char>(csv_in)),
                          std::istreambuf_iterator<char>());
          doc += "\n### " + name + "\n\n```\n" + csv;
          if (!csv.empty() && csv.back() != '\n') doc += '\n';
          doc += "```\n";
        }
      }
    } else {
      const auto row = [&](const std::string& kind, const std::string& key,
                           const std::string& value) {
        doc += csv_quote(rel) + "," + csv_quote(sub) + "," + kind + "," + csv_quote(key) +
               "," + csv_quote(value) + "\n";
      };
      if (j.contains("parameters") && j["parameters"].is_object()) {
        for (const auto& [key, value] : j["parameters"].items()) {
          row("parameter", key, value.is_string() ? value.get<std::string>() : value.dump());
        }
      }
      for (const char* field : {"inputs", "outputs"}) {
        if (j.contains(field) && j[field].is_array()) {
          for (const auto& v : j[field]) {
            if (v.is_string()) {
              row(field == std::string("inputs") ? "input" : "output", "", v.get<std::string>());
            }
          }
        }
      }
      if (j.contains("outputs") && j["outputs"].is_array()) {
        for (const auto& out_name : j["outputs"]) {
          if (!out_name.is_string()) continue;
          const std::string name = out_name.get<std::string>();
          if (name.size() < 4 || name.rfind(".csv") != name.size() - 4) continue;
          const fs::path csv_path = path.parent_path() / name;
          if (!fs::exists(csv_path)) continue;
          std::ifstream csv_in(csv_path);
          std::string line;
          std::size_t line_no = 0;
          while (std::getline(csv_in, line)) {
            row("csv_line", name + ":" + std::to_string(line_no), line);
            ++line_no;
          }
        }
      }
    }
  }
  std::cout << doc;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  json cfg;
  try {
    cfg = prescan_config(argc, argv);
  } catch (const capconf::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  CLI::App app{"conformal outlier detection for contrastive image/caption embeddings"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));
  std::string config_path;
  app.add_option("--config", config_path, "JSON config file whose keys mirror long flags");
  std::size_t threads = 0;
  cfg_get(cfg, "threads", threads);
  app.add_option("--threads", threads, "worker threads (0 = all cores); never changes results");

  CalibrateArgs cal;
  cfg_get(cfg, "captions", cal.captions);
  cfg_get(cfg, "images", cal.images);
  cfg_get(cfg, "score", cal.score);
  cfg_get(cfg, "train", cal.train);
  cfg_get(cfg, "k", cal.k);
  cfg_get(cfg, "out", cal.out);
  cfg_get(cfg, "out-scores", cal.out_scores);
  CLI::App* c_cal = app.add_subcommand("calibrate", "fit a calibration model from scores");
  c_cal->add_option("--captions", cal.captions, "caption embeddings (.npy)");
  c_cal->add_option("--images", cal.images, "image embeddings (.npy), rowwise-paired (si)");
  c_cal->add_option("--score", cal.score, "si (image-caption) or st (k-NN text)");
  c_cal->add_option("--train", cal.train, "training caption embeddings (st)");
  c_cal->add_option("--k", cal.k, "neighbor count for st");
  c_cal->add_option("--out", cal.out, "output calibration model JSON");
  c_cal->add_option("--out-scores", cal.out_scores, "also write the raw score series CSV");

  AdmitArgs adm;
  cfg_get(cfg, "calib", adm.calib);
  cfg_get(cfg, "scores", adm.scores);
  cfg_get(cfg, "alpha", adm.alpha);
  cfg_get(cfg, "mode", adm.mode);
  cfg_get(cfg, "out", adm.out);
  CLI::App* c_adm = app.add_subcommand("admit", "conformal admit/outlier decisions for scores");
  c_adm->add_option("--calib", adm.calib, "calibration model JSON");
  c_adm->add_option("--scores", adm.scores, "score series CSV");
  c_adm->add_option("--alpha", adm.alpha, "error rate in (0,1)");
  c_adm->add_option("--mode", adm.mode, "tpr-control or outlier-test");
  c_adm->add_option("--out", adm.out, "output decisions CSV");

  KnndArgs knn;
  cfg_get(cfg, "queries", knn.queries);
  cfg_get(cfg, "train", knn.train);
  cfg_get(cfg, "k", knn.k);
  cfg_get(cfg, "block-rows", knn.block_rows);
  cfg_get(cfg, "out", knn.out);
  CLI::App* c_knn = app.add_subcommand("knnd", "mean k-NN cosine distance to training captions");
  c_knn->add_option("--queries", knn.queries, "query embeddings (.npy)");
  c_knn->add_option("--train", knn.train, "training caption embeddings (.npy)");
  c_knn->add_option("--k", knn.k, "neighbor count");
  c_knn->add_option("--block-rows", knn.block_rows, "kernel tile size (results unchanged)");
  c_knn->add_option("--out", knn.out, "output score series CSV");

  ZeroshotArgs zs;
  cfg_get(cfg, "images", zs.images);
  cfg_get(cfg, "labels", zs.labels);
  cfg_get(cfg, "label-queries", zs.label_queries);
  cfg_get(cfg, "out-dir", zs.out_dir);
  cfg_get(cfg, "unknown", zs.unknown);
  CLI::App* c_zs = app.add_subcommand("zeroshot", "per-label ROC/AUROC of query embeddings");
  c_zs->add_option("--images", zs.images, "image embeddings (.npy)");
  c_zs->add_option("--labels", zs.labels, "label table (.jsonl)");
  c_zs->add_option("--label-queries", zs.label_queries,
                   "per-label caption embedding files (.npy), averaged into queries");
  c_zs->add_option("--out-dir", zs.out_dir, "output directory");
  c_zs->add_option("--unknown", zs.unknown, "as-negative or exclude-row");

  EvalCoverageArgs ev;
  cfg_get(cfg, "calib", ev.calib);
  cfg_get(cfg, "pos", ev.pos);
  cfg_get(cfg, "neg", ev.neg);
  cfg_get(cfg, "alphas", ev.alphas);
  cfg_get(cfg, "sims", ev.sims);
  cfg_get(cfg, "subsample", ev.subsample);
  cfg_get(cfg, "seed", ev.seed);
  cfg_get(cfg, "stratification", ev.stratification);
  cfg_get(cfg, "model-tag", ev.model_tag);
  cfg_get(cfg, "out-dir", ev.out_dir);
  CLI::App* c_ev = app.add_subcommand("eval-coverage", "repeated-subsampling TPR/FPR simulation");
  c_ev->add_option("--calib", ev.calib, "calibration pool: score CSV or model JSON");
  c_ev->add_option("--pos", ev.pos, "positive score series, LABEL=path or path");
  c_ev->add_option("--neg", ev.neg, "negative score series, LABEL=path or path");
  c_ev->add_option("--alphas", ev.alphas, "comma-separated error rates");
  c_ev->add_option("--sims", ev.sims, "number of simulations");
  c_ev->add_option("--subsample", ev.subsample, "calibration scores drawn per simulation");
  c_ev->add_option("--seed", ev.seed, "simulation seed");
  c_ev->add_option("--stratification", ev.stratification, "pure or mixed (echoed in the report)");
  c_ev->add_option("--model-tag", ev.model_tag, "column tag in the markdown table");
  c_ev->add_option("--out-dir", ev.out_dir, "output directory");

  SynthArgs sy;
  cfg_get(cfg, "spec", sy.spec);
  cfg_get(cfg, "proportions", sy.proportions);
  cfg_get(cfg, "out-dir", sy.out_dir);
  CLI::App* c_sy = app.add_subcommand("synth", "generate a synthetic embedding benchmark");
  c_sy->add_option("--spec", sy.spec, "synth spec JSON");
  c_sy->add_option("--proportions", sy.proportions, "train,val,calib,test split proportions");
  c_sy->add_option("--out-dir", sy.out_dir, "output directory");

  ReportArgs rep;
  cfg_get(cfg, "in", rep.in);
  cfg_get(cfg, "format", rep.format);
  CLI::App* c_rep = app.add_subcommand("report", "aggregate manifests and result CSVs");
  c_rep->add_option("--in", rep.in, "directory to scan for manifests");
  c_rep->add_option("--format", rep.format, "md or csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      return app.exit(e);  // --help / --version
    }
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  capconf::set_max_threads(threads);

  try {
    if (c_cal->parsed()) return run_calibrate(cal);
    if (c_adm->parsed()) return run_admit(adm);
    if (c_knn->parsed()) return run_knnd(knn);
    if (c_zs->parsed()) return run_zeroshot(zs);
    if (c_ev->parsed()) return run_eval_coverage(ev);
    if (c_sy->parsed()) return run_synth(sy);
    if (c_rep->parsed()) return run_report(rep);
  } catch (const capconf::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
