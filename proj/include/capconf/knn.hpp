#pragma once

#include <cstddef>
#include <vector>

#include "capconf/types.hpp"

namespace capconf {

struct KnnConfig {
  std::size_t k = 500;           // default: mean distance to the 500 nearest captions
  std::size_t block_rows = 1024; // tile size of the blocked kernel; never affects results
};

// One query's k nearest training rows under the (distance, index)
// lexicographic tie rule, ascending, plus their mean distance (the s_T value).
struct KnnResult {
  double mean_distance = 0.0;
  std::vector<std::size_t> neighbor_indices;
  std::vector<double> neighbor_distances;
};

struct KnnOutput {
  std::vector<KnnResult> per_query;
  ScoreSeries scores;  // kind knn_text, values = mean distances in query order
};

// Exact k-NN mean cosine distance, blocked kernel with bounded max-heap
// selection. Output is identical for any block_rows and any thread count.
// Queries that also appear in train are not excluded; pass k+1 and drop the
// zero for leave-one-out.
// Throws ConfigError (k < 1 or k > train rows), ShapeError, DegenerateRow.
KnnOutput knnd(const EmbeddingMatrix& query, const EmbeddingMatrix& train,
               const KnnConfig& cfg);

// Correctness oracle: full distance row via scalar cosine_distance, full
// sort, first k. Same contracts and bit-identical results by the
// summation-order contract.
KnnOutput knnd_bruteforce(const EmbeddingMatrix& query, const EmbeddingMatrix& train,
                          const KnnConfig& cfg);

}  // namespace capconf
