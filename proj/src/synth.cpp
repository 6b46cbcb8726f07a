#include "capconf/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "capconf/errors.hpp"
#include "capconf/parallel.hpp"
#include "capconf/rng.hpp"

namespace capconf {

namespace {

// Stream index of query q for label l. The stride keeps (l, q) -> stream
// stable when n_queries_per_label changes, so adding queries never perturbs
// existing ones.
constexpr std::uint64_t kQueryStride = std::uint64_t{1} << 24;

double dot64(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc = std::fma(a[i], b[i], acc);
  }
  return acc;
}

double norm64(const std::vector<double>& v) { return std::sqrt(dot64(v, v)); }

// Label directions as 64-bit row-major L x d.
std::vector<double> resolve_directions(const SynthSpec& spec) {
  std::vector<double> dirs(spec.n_labels * spec.dim, 0.0);
  if (spec.label_geometry.empty()) {
    for (std::size_t l = 0; l < spec.n_labels; ++l) {
      dirs[l * spec.dim + l] = 1.0;
    }
  } else {
    for (std::size_t i = 0; i < dirs.size(); ++i) {
      dirs[i] = static_cast<double>(spec.label_geometry[i]);
    }
  }
  return dirs;
}

// Shift direction as 64-bit, or empty when every shift is zero.
std::vector<double> resolve_shift_direction(const SynthSpec& spec) {
  const std::vector<double> shifts = spec.resolved_shifts();
  const bool shifted = std::any_of(shifts.begin(), shifts.end(), [](double s) { return s > 0.0; });
  if (!shifted) return {};
  std::vector<double> dir(spec.dim, 0.0);
  if (spec.shift_direction.empty()) {
    dir[spec.n_labels] = 1.0;  // e_L, orthogonal to the default basis
  } else {
    for (std::size_t j = 0; j < spec.dim; ++j) {
      dir[j] = static_cast<double>(spec.shift_direction[j]);
    }
  }
  return dir;
}

void normalize_inplace(std::vector<double>& v, const char* what, std::size_t row) {
  const double n = norm64(v);
  if (!(n >= EmbeddingMatrix::kNormEpsilon)) {
    throw DegenerateRow(std::string(what) + " vector has near-zero norm", row);
  }
  for (double& x : v) {
    x /= n;
  }
}

void normalize_narrow(const std::vector<double>& v, std::span<float> out, const char* what,
                      std::size_t row) {
  const double n = norm64(v);
  if (!(n >= EmbeddingMatrix::kNormEpsilon)) {
    throw DegenerateRow(std::string(what) + " vector has near-zero norm", row);
  }
  for (std::size_t j = 0; j < v.size(); ++j) {
    out[j] = static_cast<float>(v[j] / n);
  }
}

}  // namespace

std::vector<std::string> SynthSpec::resolved_label_names() const {
  if (!label_names.empty()) return label_names;
  if (n_labels == 4) return LabelTable::default_labels();
  std::vector<std::string> names;
  names.reserve(n_labels);
  for (std::size_t l = 0; l < n_labels; ++l) {
    names.push_back("label_" + std::to_string(l));
  }
  return names;
}

std::vector<double> SynthSpec::resolved_shifts() const {
  if (query_shift.empty()) return std::vector<double>(n_labels, 0.0);
  if (query_shift.size() == 1) return std::vector<double>(n_labels, query_shift.front());
  return query_shift;
}

void SynthSpec::validate() const {
  if (dim == 0) throw ConfigError("dim must be at least 1");
  if (n_pairs == 0) throw ConfigError("n_pairs must be at least 1");
  if (n_labels == 0) throw ConfigError("n_labels must be at least 1");
  if (n_queries_per_label == 0) throw ConfigError("n_queries_per_label must be at least 1");
  for (double s : {sigma_img, sigma_txt, sigma_latent}) {
    if (!(std::isfinite(s) && s >= 0.0)) {
      throw ConfigError("noise levels must be finite and non-negative");
    }
  }
  if (!(std::isfinite(mix_prob) && mix_prob >= 0.0 && mix_prob <= 1.0)) {
    throw ConfigError("mix_prob must lie in [0, 1]");
  }
  if (!label_names.empty()) {
    if (label_names.size() != n_labels) {
      throw ConfigError("label_names must list exactly n_labels names");
    }
    std::set<std::string> unique(label_names.begin(), label_names.end());
    if (unique.size() != label_names.size() || unique.count("") != 0) {
      throw ConfigError("label names must be unique and non-empty");
    }
  }
  if (!(query_shift.empty() || query_shift.size() == 1 || query_shift.size() == n_labels)) {
    throw ConfigError("query_shift takes 0, 1, or n_labels values");
  }
  for (double s : query_shift) {
    if (!(std::isfinite(s) && s >= 0.0)) {
      throw ConfigError("query shifts must be finite and non-negative");
    }
  }

  if (label_geometry.empty()) {
    if (dim < n_labels) {
      throw ConfigError("default orthonormal geometry needs dim >= n_labels");
    }
  } else if (label_geometry.size() != n_labels * dim) {
    throw ConfigError("label_geometry must be n_labels x dim values");
  }
  if (!shift_direction.empty() && shift_direction.size() != dim) {
    throw ConfigError("shift_direction must have dim values");
  }

  const std::vector<double> shifts = resolved_shifts();
  const bool shifted = std::any_of(shifts.begin(), shifts.end(), [](double s) { return s > 0.0; });
  if (shifted && shift_direction.empty()) {
    if (!label_geometry.empty()) {
      throw ConfigError("custom label_geometry with a positive query_shift needs an explicit shift_direction");
    }
    if (dim < n_labels + 1) {
      throw ConfigError("a positive query_shift with default geometry needs dim >= n_labels + 1");
    }
  }

  // Unit and orthogonality checks on whatever geometry will actually be used.
  const std::vector<double> dirs = resolve_directions(*this);
  std::vector<double> row(dim);
  for (std::size_t l = 0; l < n_labels; ++l) {
    std::copy(dirs.begin() + l * dim, dirs.begin() + (l + 1) * dim, row.begin());
    if (std::abs(norm64(row) - 1.0) > 1e-6) {
      throw ConfigError("label direction " + std::to_string(l) + " is not unit length");
    }
  }
  if (shifted) {
    const std::vector<double> sd = resolve_shift_direction(*this);
    if (std::abs(norm64(sd) - 1.0) > 1e-6) {
      throw ConfigError("shift_direction is not unit length");
    }
    for (std::size_t l = 0; l < n_labels; ++l) {
      std::copy(dirs.begin() + l * dim, dirs.begin() + (l + 1) * dim, row.begin());
      if (std::abs(dot64(sd, row)) > 1e-6) {
        throw ConfigError("shift_direction must be orthogonal to label direction " +
                          std::to_string(l));
      }
    }
  }
}

SynthDataset generate(const SynthSpec& spec) {
  spec.validate();
  const std::size_t d = spec.dim;
  const std::size_t n = spec.n_pairs;
  const std::size_t L = spec.n_labels;
  const std::vector<std::string> names = spec.resolved_label_names();
  const std::vector<double> shifts = spec.resolved_shifts();
  const std::vector<double> dirs = resolve_directions(spec);
  const std::vector<double> shift_dir = resolve_shift_direction(spec);

  SynthDataset ds;
  ds.spec = spec;
  ds.captions = EmbeddingMatrix(n, d, "captions");
  ds.images = EmbeddingMatrix(n, d, "images");
  ds.labels.labels = names;
  ds.labels.row_ids.resize(n);
  ds.labels.assignments.assign(n * L, LabelValue::negative);

  parallel_for(n, [&](std::size_t begin, std::size_t end) {
    std::vector<double> z(d);
    std::vector<double> buf(d);
    std::vector<std::uint8_t> active(L);
    for (std::size_t i = begin; i < end; ++i) {
      Rng rng(spec.seed, rng_stream(rng_domain::synth_sample, i));

      // Label set: one primary uniform over L, extras independently with mix_prob,
      // drawn in ascending label order so the stream layout is pinned.
      std::fill(active.begin(), active.end(), 0);
      const std::size_t primary = rng.next_below(L);
      active[primary] = 1;
      for (std::size_t l = 0; l < L; ++l) {
        if (l != primary && rng.next_bernoulli(spec.mix_prob)) {
          active[l] = 1;
        }
      }

      // Latent: normalized sum of active directions plus optional noise.
      std::fill(z.begin(), z.end(), 0.0);
      for (std::size_t l = 0; l < L; ++l) {
        if (active[l]) {
          for (std::size_t j = 0; j < d; ++j) {
            z[j] += dirs[l * d + j];
          }
        }
      }
      if (spec.sigma_latent > 0.0) {
        for (std::size_t j = 0; j < d; ++j) {
          z[j] += spec.sigma_latent * rng.next_normal();
        }
      }
      normalize_inplace(z, "latent", i);

      // Caption then image noise; both views take the identical code path,
      // so the noiseless limit produces bit-identical pairs.
      for (std::size_t j = 0; j < d; ++j) {
        buf[j] = z[j] + spec.sigma_txt * rng.next_normal();
      }
      normalize_narrow(buf, ds.captions.row_mut(i), "caption", i);
      for (std::size_t j = 0; j < d; ++j) {
        buf[j] = z[j] + spec.sigma_img * rng.next_normal();
      }
      normalize_narrow(buf, ds.images.row_mut(i), "image", i);

      ds.labels.row_ids[i] = std::to_string(i);
      for (std::size_t l = 0; l < L; ++l) {
        if (active[l]) {
          ds.labels.assignments[i * L + l] = LabelValue::positive;
        }
      }
    }
  });

  // Query captions: same recipe as a single-label caption, with an optional
  // orthogonal shift, each from its own stream.
  std::vector<double> buf(d);
  for (std::size_t l = 0; l < L; ++l) {
    EmbeddingMatrix queries(spec.n_queries_per_label, d, "query_captions_" + names[l]);
    for (std::size_t q = 0; q < spec.n_queries_per_label; ++q) {
      Rng rng(spec.seed, rng_stream(rng_domain::synth_query, l * kQueryStride + q));
      for (std::size_t j = 0; j < d; ++j) {
        double base = dirs[l * d + j];
        if (!shift_dir.empty()) {
          base += shifts[l] * shift_dir[j];
        }
        buf[j] = base + spec.sigma_txt * rng.next_normal();
      }
      normalize_narrow(buf, queries.row_mut(q), "query", q);
    }
    queries.validate();
    ds.query_captions.push_back(std::move(queries));
  }

  ds.captions.validate();
  ds.images.validate();
  ds.labels.validate();
  return ds;
}

SplitIndices split_rows(std::size_t n, const SplitProportions& proportions, std::uint64_t seed,
                        const std::vector<std::string>* groups) {
  const std::array<double, 4> props{proportions.train, proportions.val, proportions.calib,
                                    proportions.test};
  double sum = 0.0;
  for (double p : props) {
    if (!(std::isfinite(p) && p > 0.0)) {
      throw ConfigError("split proportions must be positive");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ConfigError("split proportions must sum to 1");
  }
  if (groups != nullptr && groups->size() != n) {
    throw ShapeError("group ids must align with rows");
  }

  // Largest-remainder rounding: exact sizes whenever the proportions are.
  std::array<std::size_t, 4> target{};
  std::array<double, 4> remainder{};
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < 4; ++k) {
    const double exact = props[k] * static_cast<double>(n);
    target[k] = static_cast<std::size_t>(std::floor(exact));
    remainder[k] = exact - std::floor(exact);
    assigned += target[k];
  }
  std::array<std::size_t, 4> by_remainder{0, 1, 2, 3};
  std::stable_sort(by_remainder.begin(), by_remainder.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; i < n - assigned; ++i) {
    ++target[by_remainder[i]];
  }

  std::array<std::vector<std::size_t>, 4> out;
  Rng rng(seed, rng_stream(rng_domain::split, 0));

  if (groups == nullptr) {
    const std::vector<std::size_t> perm = rng.permutation(n);
    std::size_t pos = 0;
    for (std::size_t k = 0; k < 4; ++k) {
      out[k].assign(perm.begin() + pos, perm.begin() + pos + target[k]);
      pos += target[k];
    }
  } else {
    // Whole groups go to the split with the largest remaining deficit, in
    // seeded-permutation order, so a group never straddles two sets.
    std::unordered_map<std::string, std::size_t> group_index;
    std::vector<std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < n; ++i) {
      const auto [it, inserted] = group_index.try_emplace((*groups)[i], members.size());
      if (inserted) {
        members.emplace_back();
      }
      members[it->second].push_back(i);
    }
    const std::vector<std::size_t> perm = rng.permutation(members.size());
    std::array<long long, 4> deficit;
    for (std::size_t k = 0; k < 4; ++k) {
      deficit[k] = static_cast<long long>(target[k]);
    }
    for (std::size_t g : perm) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < 4; ++k) {
        if (deficit[k] > deficit[best]) {
          best = k;
        }
      }
      out[best].insert(out[best].end(), members[g].begin(), members[g].end());
      deficit[best] -= static_cast<long long>(members[g].size());
    }
  }

  for (std::vector<std::size_t>& part : out) {
    std::sort(part.begin(), part.end());
  }
  return SplitIndices{std::move(out[0]), std::move(out[1]), std::move(out[2]), std::move(out[3])};
}

SplitIndices split(const SynthDataset& dataset, const SplitProportions& proportions) {
  const std::vector<std::string>* groups =
      dataset.labels.group_ids.empty() ? nullptr : &dataset.labels.group_ids;
  return split_rows(dataset.captions.rows(), proportions, dataset.spec.seed, groups);
}

namespace {

nlohmann::ordered_json matrix_json(const std::vector<float>& values, std::size_t row_len) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (std::size_t off = 0; off < values.size(); off += row_len) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (std::size_t j = 0; j < row_len; ++j) {
      row.push_back(values[off + j]);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<float> matrix_from_json(const nlohmann::json& rows, const char* what) {
  if (!rows.is_array() || rows.empty()) {
    throw ConfigError(std::string(what) + " must be a non-empty array of rows");
  }
  std::vector<float> values;
  for (const auto& row : rows) {
    if (!row.is_array()) {
      throw ConfigError(std::string(what) + " must be an array of rows");
    }
    for (const auto& v : row) {
      values.push_back(v.get<float>());
    }
  }
  return values;
}

}  // namespace

std::string synth_spec_to_json(const SynthSpec& spec) {
  nlohmann::ordered_json j;
  j["dim"] = spec.dim;
  j["n_pairs"] = spec.n_pairs;
  j["n_labels"] = spec.n_labels;
  j["sigma_img"] = spec.sigma_img;
  j["sigma_txt"] = spec.sigma_txt;
  j["sigma_latent"] = spec.sigma_latent;
  j["mix_prob"] = spec.mix_prob;
  j["query_shift"] = spec.resolved_shifts();
  j["n_queries_per_label"] = spec.n_queries_per_label;
  j["seed"] = spec.seed;
  j["label_names"] = spec.resolved_label_names();
  if (!spec.label_geometry.empty()) {
    j["label_geometry"] = matrix_json(spec.label_geometry, spec.dim);
  }
  if (!spec.shift_direction.empty()) {
    j["shift_direction"] = spec.shift_direction;
  }
  return j.dump(2) + "\n";
}

SynthSpec synth_spec_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("invalid synth spec JSON: ") + e.what());
  }
  if (!j.is_object()) {
    throw FormatError("synth spec must be a JSON object");
  }
  static const std::set<std::string> known{
      "dim",        "n_pairs",  "n_labels",    "sigma_img",           "sigma_txt",
      "sigma_latent", "mix_prob", "query_shift", "n_queries_per_label", "seed",
      "label_names", "label_geometry", "shift_direction"};
  for (const auto& [key, value] : j.items()) {
    if (known.count(key) == 0) {
      throw ConfigError("unknown synth spec key '" + key + "'");
    }
  }

  SynthSpec spec;
  try {
    spec.dim = j.at("dim").get<std::size_t>();
    spec.n_pairs = j.at("n_pairs").get<std::size_t>();
    if (j.contains("n_labels")) spec.n_labels = j["n_labels"].get<std::size_t>();
    if (j.contains("sigma_img")) spec.sigma_img = j["sigma_img"].get<double>();
    if (j.contains("sigma_txt")) spec.sigma_txt = j["sigma_txt"].get<double>();
    if (j.contains("sigma_latent")) spec.sigma_latent = j["sigma_latent"].get<double>();
    if (j.contains("mix_prob")) spec.mix_prob = j["mix_prob"].get<double>();
    if (j.contains("query_shift")) {
      if (j["query_shift"].is_number()) {
        spec.query_shift = {j["query_shift"].get<double>()};
      } else {
        spec.query_shift = j["query_shift"].get<std::vector<double>>();
      }
    }
    if (j.contains("n_queries_per_label")) {
      spec.n_queries_per_label = j["n_queries_per_label"].get<std::size_t>();
    }
    if (j.contains("seed")) spec.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("label_names")) {
      spec.label_names = j["label_names"].get<std::vector<std::string>>();
    }
    if (j.contains("label_geometry")) {
      spec.label_geometry = matrix_from_json(j["label_geometry"], "label_geometry");
    }
    if (j.contains("shift_direction")) {
      spec.shift_direction = j["shift_direction"].get<std::vector<float>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid synth spec JSON: ") + e.what());
  }
  spec.validate();
  return spec;
}

std::string split_to_json(const SplitIndices& indices) {
  nlohmann::ordered_json j;
  j["train"] = indices.train;
  j["val"] = indices.val;
  j["calib"] = indices.calib;
  j["test"] = indices.test;
  return j.dump(2) + "\n";
}

SplitIndices split_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    SplitIndices indices;
    indices.train = j.at("train").get<std::vector<std::size_t>>();
    indices.val = j.at("val").get<std::vector<std::size_t>>();
    indices.calib = j.at("calib").get<std::vector<std::size_t>>();
    indices.test = j.at("test").get<std::vector<std::size_t>>();
    return indices;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid split JSON: ") + e.what());
  }
}

}  // namespace capconf
