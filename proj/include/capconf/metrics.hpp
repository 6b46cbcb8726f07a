#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "capconf/types.hpp"

namespace capconf {

// Summation-order contract: every dot product and squared-norm in this
// module accumulates in 64-bit with std::fma over ascending element index.
// The blocked kernels keep one independent accumulator chain per output
// element in that same order, so they equal the scalar functions below
// bit-exactly; tests enforce bit equality (0 ulp), not a tolerance.

// Sum_i fma(x[i], y[i]) in ascending index order, 64-bit accumulation.
double dot_f64(std::span<const float> x, std::span<const float> y);

// sqrt of the ascending-order squared sum.
double l2_norm(std::span<const float> x);

// 1 - x.y / (|x| |y|), clamped to [0, 2]. Clamping only absorbs rounding
// excursions; it never masks data problems.
// Throws ShapeError on dim mismatch, DegenerateRow on norm < 1e-12.
double cosine_distance(std::span<const float> x, std::span<const float> y);

// dot / (|x| |y|), clamped to [-1, 1]. Same contract as cosine_distance;
// zeroshot scoring is defined in terms of this.
double cosine_similarity(std::span<const float> x, std::span<const float> y);

enum class Pairing { rowwise, cross };

struct PairedScoreRequest {
  const EmbeddingMatrix* a = nullptr;  // captions
  const EmbeddingMatrix* b = nullptr;  // images
  Pairing pairing = Pairing::rowwise;
};

// Rowwise image-caption distances: series[i] = cosine_distance(a.row(i), b.row(i)).
ScoreSeries pairwise_si_rowwise(const EmbeddingMatrix& a, const EmbeddingMatrix& b);

// Cross-mode distance matrix, row-major a.rows() x b.rows(). Blocked and
// parallel over rows of `a`; entries are bit-identical to looped
// cosine_distance calls.
std::vector<double> pairwise_si_cross(const EmbeddingMatrix& a, const EmbeddingMatrix& b);

// Dispatch over PairedScoreRequest; rowwise result lands in `series`,
// cross result in `matrix`.
struct PairedScores {
  ScoreSeries series;           // rowwise
  std::vector<double> matrix;   // cross, a.rows() x b.rows()
};
PairedScores pairwise_si(const PairedScoreRequest& req);

// Every output row rescaled to unit L2 norm (64-bit math, narrowed back to
// storage precision). Throws DegenerateRow.
EmbeddingMatrix normalize_rows(const EmbeddingMatrix& m);

namespace detail {

// Row norms of a matrix, 64-bit, ascending-index order per row.
std::vector<double> row_norms(const EmbeddingMatrix& m);

// Blocked dot-product kernel: for one query row against train rows
// [t0, t1), writes dot products into out[t - t0]. Bit-identical to calling
// dot_f64 per row. `train_t` is the block transposed into column-major
// doubles (see transpose_block), which lets the compiler vectorize across
// train rows while each output keeps its own ascending-index chain.
void dot_block(std::span<const float> query, const double* train_t, std::size_t t_count,
               std::size_t dim, double* out);

// Transposes train rows [t0, t1) into out[l * t_count + (t - t0)] as doubles.
void transpose_block(const EmbeddingMatrix& train, std::size_t t0, std::size_t t1,
                     std::vector<double>& out);

}  // namespace detail

}  // namespace capconf
