#include "capconf/io.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "capconf/numfmt.hpp"

namespace capconf {

namespace {

constexpr std::array<char, 6> kNpyMagic = {'\x93', 'N', 'U', 'M', 'P', 'Y'};

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

// Minimal parser for the NPY header dict. The header is machine-written
// ASCII; anything that deviates from the three known keys is malformed.
struct NpyHeader {
  std::string descr;
  bool fortran_order = false;
  std::vector<std::size_t> shape;
};

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

NpyHeader parse_npy_header(const std::string& raw, const std::string& origin) {
  std::string header = raw;
  if (header.empty() || header.back() != '\n') {
    throw FormatError(origin + ": NPY header does not end in newline");
  }
  header.pop_back();
  header = trim(header);
  if (header.size() < 2 || header.front() != '{' || header.back() != '}') {
    throw FormatError(origin + ": NPY header is not a dict");
  }

  NpyHeader out;
  auto find_value = [&](const std::string& key) -> std::string {
    std::string quoted = "'" + key + "'";
    auto pos = header.find(quoted);
    if (pos == std::string::npos) {
      throw FormatError(origin + ": NPY header missing key " + quoted);
    }
    auto colon = header.find(':', pos + quoted.size());
    if (colon == std::string::npos) {
      throw FormatError(origin + ": NPY header malformed near " + quoted);
    }
    // value runs to the matching comma at paren depth 0
    std::size_t depth = 0;
    std::size_t end = colon + 1;
    for (; end < header.size(); ++end) {
      char c = header[end];
      if (c == '(') ++depth;
      if (c == ')') {
        if (depth == 0) break;
        --depth;
      }
      if (c == ',' && depth == 0) break;
      if (c == '}') break;
    }
    return trim(header.substr(colon + 1, end - colon - 1));
  };

  std::string descr = find_value("descr");
  if (descr.size() < 2 || descr.front() != '\'' || descr.back() != '\'') {
    throw FormatError(origin + ": NPY descr is not a quoted string");
  }
  out.descr = descr.substr(1, descr.size() - 2);

  std::string fortran = find_value("fortran_order");
  if (fortran == "True") {
    out.fortran_order = true;
  } else if (fortran == "False") {
    out.fortran_order = false;
  } else {
    throw FormatError(origin + ": NPY fortran_order is not a boolean");
  }

  std::string shape = find_value("shape");
  if (shape.size() < 2 || shape.front() != '(' || shape.back() != ')') {
    throw FormatError(origin + ": NPY shape is not a tuple");
  }
  std::stringstream ss(shape.substr(1, shape.size() - 2));
  for (std::string tok; std::getline(ss, tok, ',');) {
    tok = trim(tok);
    if (tok.empty()) continue;  // trailing comma in 1-tuples
    std::size_t dim = 0;
    try {
      dim = std::stoull(tok);
    } catch (const std::exception&) {
      throw FormatError(origin + ": NPY shape entry \"" + tok + "\" is not a number");
    }
    out.shape.push_back(dim);
  }
  return out;
}

}  // namespace

EmbeddingMatrix load_npy_stream(std::istream& in, const std::string& origin) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || !std::equal(kNpyMagic.begin(), kNpyMagic.end(), magic.begin())) {
    throw FormatError(origin + ": not an NPY file (bad magic)");
  }
  if (magic[6] != 1 || magic[7] != 0) {
    throw UnsupportedLayout(origin + ": unsupported NPY version " + std::to_string(magic[6]) +
                            "." + std::to_string(magic[7]) + " (need 1.0)");
  }
  std::array<unsigned char, 2> len_le{};
  in.read(reinterpret_cast<char*>(len_le.data()), 2);
  if (!in) throw FormatError(origin + ": truncated NPY header length");
  std::size_t header_len = static_cast<std::size_t>(len_le[0]) | (static_cast<std::size_t>(len_le[1]) << 8);
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw FormatError(origin + ": truncated NPY header");

  NpyHeader h = parse_npy_header(header, origin);
  if (h.fortran_order) throw UnsupportedLayout(origin + ": fortran_order NPY is not supported");
  if (h.shape.size() != 2) {
    throw UnsupportedLayout(origin + ": expected a 2-D array, got " +
                            std::to_string(h.shape.size()) + "-D");
  }
  bool is_f4 = h.descr == "<f4";
  bool is_f8 = h.descr == "<f8";
  if (!is_f4 && !is_f8) {
    throw UnsupportedLayout(origin + ": dtype '" + h.descr + "' is not little-endian float32/64");
  }
  std::size_t n = h.shape[0];
  std::size_t d = h.shape[1];
  if (n < 1 || d < 1) {
    throw FormatError(origin + ": matrix must have n >= 1 and d >= 1, got (" +
                      std::to_string(n) + ", " + std::to_string(d) + ")");
  }

  std::size_t item = is_f4 ? 4 : 8;
  std::size_t count = n * d;
  std::vector<float> values(count);
  if (is_f4) {
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(count * item));
  } else {
    std::vector<double> wide(count);
    in.read(reinterpret_cast<char*>(wide.data()), static_cast<std::streamsize>(count * item));
    for (std::size_t i = 0; i < count; ++i) values[i] = static_cast<float>(wide[i]);
  }
  if (!in || static_cast<std::size_t>(in.gcount()) != count * item) {
    throw FormatError(origin + ": truncated NPY payload");
  }
  in.peek();
  if (!in.eof()) throw FormatError(origin + ": trailing bytes after NPY payload");

  EmbeddingMatrix m(n, d, std::move(values));
  m.validate();
  return m;
}

EmbeddingMatrix load_npy(const std::filesystem::path& path) {
  auto in = open_input(path);
  EmbeddingMatrix m = load_npy_stream(in, path.filename().string());
  m.set_source_tag(path.stem().string());
  return m;
}

void store_npy_stream(const EmbeddingMatrix& m, std::ostream& out) {
  m.validate();
  std::string dict = "{'descr': '<f4', 'fortran_order': False, 'shape': (" +
                     std::to_string(m.rows()) + ", " + std::to_string(m.dim()) + "), }";
  // preamble = magic(6) + version(2) + hlen(2) + dict + padding + '\n',
  // space-padded to a multiple of 64
  std::size_t base = 10 + dict.size() + 1;
  std::size_t pad = (64 - base % 64) % 64;
  std::size_t header_len = dict.size() + pad + 1;
  out.write(kNpyMagic.data(), kNpyMagic.size());
  out.put('\x01');
  out.put('\x00');
  out.put(static_cast<char>(header_len & 0xff));
  out.put(static_cast<char>((header_len >> 8) & 0xff));
  out << dict << std::string(pad, ' ') << '\n';
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(m.rows() * m.dim() * sizeof(float)));
  if (!out) throw IoError("failed writing NPY payload");
}

void store_npy(const EmbeddingMatrix& m, const std::filesystem::path& path) {
  auto out = open_output(path);
  store_npy_stream(m, out);
  out.close();
  if (!out) throw IoError("failed writing " + path.string());
}

namespace {

using json = nlohmann::json;

template <typename Json>
std::string id_to_string(const Json& j, const std::string& origin, std::size_t line) {
  if (j.is_string()) return j.template get<std::string>();
  if (j.is_number_integer()) return std::to_string(j.template get<long long>());
  if (j.is_number_unsigned()) return std::to_string(j.template get<unsigned long long>());
  throw FormatError(origin + ": \"id\" must be a string or integer", line);
}

}  // namespace

LabelTable load_labels(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::string origin = path.filename().string();

  LabelTable table;
  std::vector<std::map<std::string, LabelValue>> row_values;
  std::set<std::string> seen_ids;
  std::vector<std::string> groups;
  bool any_group = false;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    // ordered_json keeps document key order, so the first-seen label
    // order below is the order in the file, and round-trips exactly.
    nlohmann::ordered_json obj;
    try {
      obj = nlohmann::ordered_json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError(origin + ": " + e.what(), line_no);
    }
    if (!obj.is_object() || !obj.contains("id") || !obj.contains("labels") ||
        !obj["labels"].is_object()) {
      throw FormatError(origin + ": expected {\"id\", \"labels\": {...}}", line_no);
    }
    std::string id = id_to_string(obj["id"], origin, line_no);
    if (!seen_ids.insert(id).second) throw DuplicateId(id);
    table.row_ids.push_back(id);

    std::map<std::string, LabelValue> values;
    for (auto it = obj["labels"].begin(); it != obj["labels"].end(); ++it) {
      LabelValue v;
      if (it.value().is_null()) {
        v = LabelValue::unknown;
      } else if (it.value().is_boolean()) {
        v = it.value().get<bool>() ? LabelValue::positive : LabelValue::negative;
      } else {
        throw FormatError(origin + ": label \"" + it.key() + "\" must be true/false/null",
                          line_no);
      }
      values[it.key()] = v;
      if (!table.label_index(it.key())) table.labels.push_back(it.key());
    }
    row_values.push_back(std::move(values));

    if (obj.contains("group")) {
      any_group = true;
      groups.push_back(id_to_string(obj["group"], origin, line_no));
    } else {
      groups.push_back(id);  // rows without a group are their own group
    }
  }

  table.assignments.assign(table.rows() * table.labels.size(), LabelValue::unknown);
  for (std::size_t r = 0; r < table.rows(); ++r) {
    for (const auto& [name, value] : row_values[r]) {
      table.assignments[r * table.labels.size() + *table.label_index(name)] = value;
    }
  }
  if (any_group) table.group_ids = std::move(groups);
  table.validate();
  return table;
}

void store_labels(const LabelTable& table, const std::filesystem::path& path) {
  table.validate();
  auto out = open_output(path);
  for (std::size_t r = 0; r < table.rows(); ++r) {
    nlohmann::ordered_json obj;
    obj["id"] = table.row_ids[r];
    nlohmann::ordered_json labels = nlohmann::ordered_json::object();
    for (std::size_t l = 0; l < table.labels.size(); ++l) {
      switch (table.at(r, l)) {
        case LabelValue::positive: labels[table.labels[l]] = true; break;
        case LabelValue::negative: labels[table.labels[l]] = false; break;
        case LabelValue::unknown: labels[table.labels[l]] = nullptr; break;
      }
    }
    obj["labels"] = std::move(labels);
    if (!table.group_ids.empty()) obj["group"] = table.group_ids[r];
    out << obj.dump() << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::filesystem::path score_sidecar_path(const std::filesystem::path& csv_path) {
  std::filesystem::path p = csv_path;
  p.replace_extension(".meta.json");
  return p;
}

ScoreSeries load_scores(const std::filesystem::path& path) {
  std::string origin = path.filename().string();
  auto sidecar = score_sidecar_path(path);
  if (!std::filesystem::exists(sidecar)) {
    throw FormatError(origin + ": missing sidecar " + sidecar.filename().string());
  }
  json meta;
  {
    auto in = open_input(sidecar);
    try {
      meta = json::parse(in);
    } catch (const json::exception& e) {
      throw FormatError(sidecar.filename().string() + ": " + e.what());
    }
  }
  ScoreSeries series;
  if (!meta.is_object() || !meta.contains("kind")) {
    throw FormatError(sidecar.filename().string() + ": expected {\"kind\": ...}");
  }
  series.kind = score_kind_from_string(meta["kind"].get<std::string>());
  if (meta.contains("params") && meta["params"].contains("k")) {
    series.k = meta["params"]["k"].get<std::size_t>();
  }

  auto in = open_input(path);
  std::string line;
  if (!std::getline(in, line) || trim(line) != "index,score") {
    throw FormatError(origin + ": expected header \"index,score\"", 1);
  }
  std::size_t line_no = 1;
  std::size_t expect_index = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto comma = line.find(',');
    if (comma == std::string::npos) throw FormatError(origin + ": missing comma", line_no);
    std::string idx_s = trim(line.substr(0, comma));
    std::string score_s = trim(line.substr(comma + 1));
    std::size_t idx = 0;
    try {
      idx = std::stoull(idx_s);
    } catch (const std::exception&) {
      throw FormatError(origin + ": bad index \"" + idx_s + "\"", line_no);
    }
    if (idx != expect_index) {
      throw FormatError(origin + ": non-sequential index " + idx_s, line_no);
    }
    ++expect_index;
    double v;
    try {
      v = parse_double(score_s);
    } catch (const FormatError&) {
      throw FormatError(origin + ": bad score \"" + score_s + "\"", line_no);
    }
    if (!std::isfinite(v) || v < 0.0) {
      throw FormatError(origin + ": negative or non-finite score", line_no);
    }
    series.values.push_back(v);
  }
  return series;
}

void store_scores(const ScoreSeries& series, const std::filesystem::path& path) {
  series.validate();
  {
    auto out = open_output(path);
    out << "index,score\n";
    for (std::size_t i = 0; i < series.values.size(); ++i) {
      out << i << ',' << format_double(series.values[i]) << '\n';
    }
    if (!out) throw IoError("failed writing " + path.string());
  }
  nlohmann::ordered_json meta;
  meta["kind"] = to_string(series.kind);
  meta["params"] = nlohmann::ordered_json::object();
  if (series.k) meta["params"]["k"] = *series.k;
  auto out = open_output(score_sidecar_path(path));
  out << meta.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + score_sidecar_path(path).string());
}

std::string calibration_to_json(const CalibrationModel& model) {
  model.validate();
  std::string out = "{\n  \"kind\": \"";
  out += to_string(model.kind);
  out += "\",\n  \"n\": " + std::to_string(model.n()) + ",\n  \"scores\": [";
  for (std::size_t i = 0; i < model.sorted_scores.size(); ++i) {
    if (i) out += ", ";
    out += format_double(model.sorted_scores[i]);
  }
  out += "],\n  \"created_with\": {";
  bool first = true;
  for (const auto& [key, value] : model.created_with) {
    if (!first) out += ", ";
    first = false;
    out += json(key).dump() + ": " + json(value).dump();
  }
  out += "}\n}\n";
  return out;
}

CalibrationModel calibration_from_json(const std::string& text, const std::string& origin) {
  json obj;
  try {
    obj = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(origin + ": " + e.what());
  }
  if (!obj.is_object() || !obj.contains("kind") || !obj.contains("scores") ||
      !obj["scores"].is_array()) {
    throw FormatError(origin + ": expected {\"kind\", \"n\", \"scores\", \"created_with\"}");
  }
  CalibrationModel model;
  model.kind = score_kind_from_string(obj["kind"].get<std::string>());
  model.sorted_scores.reserve(obj["scores"].size());
  for (const auto& v : obj["scores"]) {
    if (!v.is_number()) throw FormatError(origin + ": non-numeric calibration score");
    model.sorted_scores.push_back(v.get<double>());
  }
  if (obj.contains("n") && obj["n"].get<std::size_t>() != model.n()) {
    throw FormatError(origin + ": \"n\" does not match score count");
  }
  if (obj.contains("created_with")) {
    for (auto it = obj["created_with"].begin(); it != obj["created_with"].end(); ++it) {
      model.created_with[it.key()] =
          it.value().is_string() ? it.value().get<std::string>() : it.value().dump();
    }
  }
  model.validate();
  return model;
}

CalibrationModel load_calibration(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return calibration_from_json(ss.str(), path.filename().string());
}

void store_calibration(const CalibrationModel& model, const std::filesystem::path& path) {
  auto out = open_output(path);
  out << calibration_to_json(model);
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace capconf
