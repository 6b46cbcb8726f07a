#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "capconf/types.hpp"

namespace capconf {

// NPY v1.0, '<f4'/'<f8', C-order, 2-D only. float64 input is narrowed to
// the 32-bit storage precision (round-to-nearest) before validation, so a
// value that overflows or underflows float32 is rejected like any other
// degenerate entry.
EmbeddingMatrix load_npy(const std::filesystem::path& path);
EmbeddingMatrix load_npy_stream(std::istream& in, const std::string& origin);

// Writes NPY v1.0, dtype '<f4', C-order, preamble space-padded to a
// multiple of 64 bytes ending in '\n' (byte-compatible with numpy's own
// writer). load_npy(store_npy(m)) == m bit-exactly.
void store_npy(const EmbeddingMatrix& m, const std::filesystem::path& path);
void store_npy_stream(const EmbeddingMatrix& m, std::ostream& out);

// JSONL label table: one object per line,
//   {"id": <string|int>, "labels": {"<name>": true|false|null, ...}, "group": <string|int>?}
// The label-name set is the union across lines; names missing on a line are
// unknown for that row. null is unknown, distinct from false.
LabelTable load_labels(const std::filesystem::path& path);
void store_labels(const LabelTable& table, const std::filesystem::path& path);

// Score CSV ("index,score") plus a JSON sidecar at <stem>.meta.json holding
// kind and params. Values round-trip exactly (shortest round-trip decimals).
ScoreSeries load_scores(const std::filesystem::path& path);
void store_scores(const ScoreSeries& series, const std::filesystem::path& path);
std::filesystem::path score_sidecar_path(const std::filesystem::path& csv_path);

// Calibration model JSON: {"kind", "n", "scores", "created_with"} with
// scores sorted ascending.
CalibrationModel load_calibration(const std::filesystem::path& path);
void store_calibration(const CalibrationModel& model, const std::filesystem::path& path);
std::string calibration_to_json(const CalibrationModel& model);
CalibrationModel calibration_from_json(const std::string& text, const std::string& origin);

}  // namespace capconf
