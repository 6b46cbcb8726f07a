#include "capconf/knn.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <utility>

#include "capconf/metrics.hpp"
#include "capconf/parallel.hpp"

namespace capconf {

namespace {

using Candidate = std::pair<double, std::size_t>;  // (distance, train index)

void check_inputs(const EmbeddingMatrix& query, const EmbeddingMatrix& train,
                  const KnnConfig& cfg) {
  if (query.dim() != train.dim() && query.rows() > 0) {
    throw ShapeError("query dim " + std::to_string(query.dim()) + " != train dim " +
                     std::to_string(train.dim()));
  }
  if (cfg.k < 1) throw ConfigError("k must be >= 1");
  if (cfg.k > train.rows()) {
    throw ConfigError("k exceeds training rows (" + std::to_string(cfg.k) + " > " +
                      std::to_string(train.rows()) + ")");
  }
}

// Mean over neighbors in their sorted (distance, index) order; both paths
// share this order so their means agree bit-exactly.
double mean_sorted(const std::vector<Candidate>& sorted, std::size_t k) {
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) sum += sorted[i].first;
  return sum / static_cast<double>(k);
}

KnnResult to_result(std::vector<Candidate> sorted, std::size_t k) {
  KnnResult r;
  r.mean_distance = mean_sorted(sorted, k);
  r.neighbor_indices.reserve(k);
  r.neighbor_distances.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    r.neighbor_distances.push_back(sorted[i].first);
    r.neighbor_indices.push_back(sorted[i].second);
  }
  return r;
}

KnnOutput collect(std::vector<KnnResult> per_query, std::size_t k) {
  KnnOutput out;
  out.scores.kind = ScoreKind::knn_text;
  out.scores.k = k;
  out.scores.values.reserve(per_query.size());
  for (const auto& r : per_query) out.scores.values.push_back(r.mean_distance);
  out.per_query = std::move(per_query);
  return out;
}

}  // namespace

KnnOutput knnd(const EmbeddingMatrix& query, const EmbeddingMatrix& train,
               const KnnConfig& cfg) {
  check_inputs(query, train, cfg);
  std::size_t nq = query.rows();
  std::size_t k = cfg.k;
  if (nq == 0) return collect({}, k);

  std::vector<double> norms_q = detail::row_norms(query);
  std::vector<double> norms_t = detail::row_norms(train);
  std::size_t block = std::max<std::size_t>(1, cfg.block_rows);
  std::size_t dim = train.dim();

  std::vector<KnnResult> results(nq);
  parallel_for(nq, [&](std::size_t begin, std::size_t end) {
    std::vector<double> block_t;
    std::vector<double> dots(std::min(block, train.rows()));
    // one bounded max-heap per query in this chunk; worst candidate on top
    std::vector<std::priority_queue<Candidate>> heaps(end - begin);

    for (std::size_t b0 = 0; b0 < train.rows(); b0 += block) {
      std::size_t b1 = std::min(b0 + block, train.rows());
      detail::transpose_block(train, b0, b1, block_t);
      for (std::size_t qi = begin; qi < end; ++qi) {
        detail::dot_block(query.row(qi), block_t.data(), b1 - b0, dim, dots.data());
        auto& heap = heaps[qi - begin];
        for (std::size_t t = b0; t < b1; ++t) {
          double dist =
              std::clamp(1.0 - dots[t - b0] / (norms_q[qi] * norms_t[t]), 0.0, 2.0);
          Candidate c{dist, t};
          if (heap.size() < k) {
            heap.push(c);
          } else if (c < heap.top()) {
            heap.pop();
            heap.push(c);
          }
        }
      }
    }
    for (std::size_t qi = begin; qi < end; ++qi) {
      auto& heap = heaps[qi - begin];
      std::vector<Candidate> sorted(heap.size());
      for (std::size_t i = heap.size(); i-- > 0;) {
        sorted[i] = heap.top();
        heap.pop();
      }
      results[qi] = to_result(std::move(sorted), k);
    }
  });
  return collect(std::move(results), k);
}

KnnOutput knnd_bruteforce(const EmbeddingMatrix& query, const EmbeddingMatrix& train,
                          const KnnConfig& cfg) {
  check_inputs(query, train, cfg);
  std::size_t nq = query.rows();
  std::size_t k = cfg.k;
  if (nq == 0) return collect({}, k);

  std::vector<KnnResult> results(nq);
  for (std::size_t qi = 0; qi < nq; ++qi) {
    std::vector<Candidate> row(train.rows());
    for (std::size_t t = 0; t < train.rows(); ++t) {
      row[t] = {cosine_distance(query.row(qi), train.row(t)), t};
    }
    std::sort(row.begin(), row.end());
    results[qi] = to_result(std::move(row), k);
  }
  return collect(std::move(results), k);
}

}  // namespace capconf
