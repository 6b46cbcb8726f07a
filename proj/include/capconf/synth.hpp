#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "capconf/types.hpp"

namespace capconf {

// Recipe for a synthetic caption/image embedding benchmark with known
// geometry: per-label unit "condition directions", Gaussian-plus-normalize
// sampling, and an optional orthogonal shift applied only to query captions
// (the knob that breaks exchangeability on purpose).
struct SynthSpec {
  std::size_t dim = 0;
  std::size_t n_pairs = 0;
  std::size_t n_labels = 4;
  double sigma_img = 0.0;
  double sigma_txt = 0.0;
  double sigma_latent = 0.0;  // isotropic noise on the latent before normalizing
  double mix_prob = 0.0;      // chance of each extra label beyond the primary
  // Empty = no shift; one value = same shift for every label; else one per label.
  std::vector<double> query_shift;
  std::size_t n_queries_per_label = 1;
  std::uint64_t seed = 0;
  // Empty = defaults (the four chest-film names when n_labels == 4, else
  // label_0..label_{L-1}).
  std::vector<std::string> label_names;
  // Row-major n_labels x dim unit rows; empty = standard basis e_0..e_{L-1}.
  std::vector<float> label_geometry;
  // Unit vector orthogonal to every label direction; empty = e_L (default
  // geometry only). Required whenever custom geometry meets a positive shift.
  std::vector<float> shift_direction;

  std::vector<std::string> resolved_label_names() const;
  std::vector<double> resolved_shifts() const;  // one entry per label
  void validate() const;                        // throws ConfigError
};

struct SynthDataset {
  EmbeddingMatrix captions;
  EmbeddingMatrix images;
  LabelTable labels;
  std::vector<EmbeddingMatrix> query_captions;  // one matrix per label
  SynthSpec spec;                               // provenance echo
};

// Fully deterministic given spec.seed; every sample and every query caption
// draws from its own counter-derived stream, so generation order (or
// parallelism) cannot change a single byte.
SynthDataset generate(const SynthSpec& spec);

struct SplitProportions {
  double train = 0.72;
  double val = 0.08;
  double calib = 0.1;
  double test = 0.1;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> calib;
  std::vector<std::size_t> test;
};

// Disjoint, exhaustive, seeded partition of rows [0, n). Target sizes use
// largest-remainder rounding (exact when proportions are). When groups is
// non-null (one id per row), whole groups are assigned to the split with the
// largest remaining deficit, so a group never straddles two sets. Index
// lists come back sorted ascending.
SplitIndices split_rows(std::size_t n, const SplitProportions& proportions,
                        std::uint64_t seed,
                        const std::vector<std::string>* groups = nullptr);

// Convenience: splits dataset rows with dataset.spec.seed, honoring the
// label table's group ids when present.
SplitIndices split(const SynthDataset& dataset, const SplitProportions& proportions);

std::string synth_spec_to_json(const SynthSpec& spec);
SynthSpec synth_spec_from_json(const std::string& text);
std::string split_to_json(const SplitIndices& indices);
SplitIndices split_from_json(const std::string& text);

}  // namespace capconf
