#include "capconf/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "capconf/parallel.hpp"

namespace capconf {

double dot_f64(std::span<const float> x, std::span<const float> y) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    acc = std::fma(static_cast<double>(x[i]), static_cast<double>(y[i]), acc);
  }
  return acc;
}

double l2_norm(std::span<const float> x) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double v = static_cast<double>(x[i]);
    acc = std::fma(v, v, acc);
  }
  return std::sqrt(acc);
}

namespace {

void check_dims(std::span<const float> x, std::span<const float> y) {
  if (x.size() != y.size()) {
    throw ShapeError("vector dims differ: " + std::to_string(x.size()) + " vs " +
                     std::to_string(y.size()));
  }
}

double clamp01_2(double v) { return std::clamp(v, 0.0, 2.0); }

}  // namespace

double cosine_distance(std::span<const float> x, std::span<const float> y) {
  check_dims(x, y);
  double nx = l2_norm(x);
  double ny = l2_norm(y);
  if (nx < EmbeddingMatrix::kNormEpsilon) throw DegenerateRow("degenerate vector", 0);
  if (ny < EmbeddingMatrix::kNormEpsilon) throw DegenerateRow("degenerate vector", 1);
  return clamp01_2(1.0 - dot_f64(x, y) / (nx * ny));
}

double cosine_similarity(std::span<const float> x, std::span<const float> y) {
  check_dims(x, y);
  double nx = l2_norm(x);
  double ny = l2_norm(y);
  if (nx < EmbeddingMatrix::kNormEpsilon) throw DegenerateRow("degenerate vector", 0);
  if (ny < EmbeddingMatrix::kNormEpsilon) throw DegenerateRow("degenerate vector", 1);
  return std::clamp(dot_f64(x, y) / (nx * ny), -1.0, 1.0);
}

namespace detail {

std::vector<double> row_norms(const EmbeddingMatrix& m) {
  std::vector<double> norms(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    norms[i] = l2_norm(m.row(i));
    if (norms[i] < EmbeddingMatrix::kNormEpsilon) {
      throw DegenerateRow("degenerate row in \"" + m.source_tag() + "\"", i);
    }
  }
  return norms;
}

void transpose_block(const EmbeddingMatrix& train, std::size_t t0, std::size_t t1,
                     std::vector<double>& out) {
  std::size_t count = t1 - t0;
  std::size_t dim = train.dim();
  out.resize(count * dim);
  for (std::size_t t = t0; t < t1; ++t) {
    auto row = train.row(t);
    for (std::size_t l = 0; l < dim; ++l) {
      out[l * count + (t - t0)] = static_cast<double>(row[l]);
    }
  }
}

void dot_block(std::span<const float> query, const double* train_t, std::size_t t_count,
               std::size_t dim, double* out) {
  // Lane width chosen so gcc turns the inner loops into packed fma; each
  // lane is an independent ascending-index chain, so results match the
  // scalar dot_f64 bit for bit.
  constexpr std::size_t kLanes = 16;
  std::size_t t = 0;
  for (; t + kLanes <= t_count; t += kLanes) {
    double acc[kLanes] = {};
    for (std::size_t l = 0; l < dim; ++l) {
      double q = static_cast<double>(query[l]);
      const double* col = train_t + l * t_count + t;
      for (std::size_t r = 0; r < kLanes; ++r) {
        acc[r] = std::fma(q, col[r], acc[r]);
      }
    }
    for (std::size_t r = 0; r < kLanes; ++r) out[t + r] = acc[r];
  }
  if (t < t_count) {
    std::size_t rem = t_count - t;
    double acc[kLanes] = {};
    for (std::size_t l = 0; l < dim; ++l) {
      double q = static_cast<double>(query[l]);
      const double* col = train_t + l * t_count + t;
      for (std::size_t r = 0; r < rem; ++r) {
        acc[r] = std::fma(q, col[r], acc[r]);
      }
    }
    for (std::size_t r = 0; r < rem; ++r) out[t + r] = acc[r];
  }
}

}  // namespace detail

namespace {

void check_request(const EmbeddingMatrix& a, const EmbeddingMatrix& b, Pairing pairing) {
  if (a.dim() != b.dim()) {
    throw ShapeError("embedding dims differ: " + std::to_string(a.dim()) + " vs " +
                     std::to_string(b.dim()));
  }
  if (pairing == Pairing::rowwise && a.rows() != b.rows()) {
    throw ShapeError("rowwise pairing needs equal row counts: " + std::to_string(a.rows()) +
                     " vs " + std::to_string(b.rows()));
  }
}

}  // namespace

ScoreSeries pairwise_si_rowwise(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
  check_request(a, b, Pairing::rowwise);
  std::vector<double> norms_a = detail::row_norms(a);
  std::vector<double> norms_b = detail::row_norms(b);
  ScoreSeries out;
  out.kind = ScoreKind::image_caption;
  out.values.resize(a.rows());
  parallel_for(a.rows(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      double d = 1.0 - dot_f64(a.row(i), b.row(i)) / (norms_a[i] * norms_b[i]);
      out.values[i] = std::clamp(d, 0.0, 2.0);
    }
  });
  return out;
}

std::vector<double> pairwise_si_cross(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
  check_request(a, b, Pairing::cross);
  std::vector<double> norms_a = detail::row_norms(a);
  std::vector<double> norms_b = detail::row_norms(b);
  std::size_t nb = b.rows();
  std::vector<double> out(a.rows() * nb);
  constexpr std::size_t kBlock = 1024;
  parallel_for(a.rows(), [&](std::size_t begin, std::size_t end) {
    std::vector<double> block_t;
    std::vector<double> dots(std::min(kBlock, nb));
    for (std::size_t b0 = 0; b0 < nb; b0 += kBlock) {
      std::size_t b1 = std::min(b0 + kBlock, nb);
      detail::transpose_block(b, b0, b1, block_t);
      for (std::size_t i = begin; i < end; ++i) {
        detail::dot_block(a.row(i), block_t.data(), b1 - b0, a.dim(), dots.data());
        double* row_out = out.data() + i * nb;
        for (std::size_t t = b0; t < b1; ++t) {
          double d = 1.0 - dots[t - b0] / (norms_a[i] * norms_b[t]);
          row_out[t] = std::clamp(d, 0.0, 2.0);
        }
      }
    }
  });
  return out;
}

PairedScores pairwise_si(const PairedScoreRequest& req) {
  PairedScores result;
  if (req.pairing == Pairing::rowwise) {
    result.series = pairwise_si_rowwise(*req.a, *req.b);
  } else {
    result.matrix = pairwise_si_cross(*req.a, *req.b);
    result.series.kind = ScoreKind::image_caption;
  }
  return result;
}

EmbeddingMatrix normalize_rows(const EmbeddingMatrix& m) {
  std::vector<double> norms = detail::row_norms(m);
  EmbeddingMatrix out(m.rows(), m.dim(), m.source_tag());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto src = m.row(i);
    auto dst = out.row_mut(i);
    for (std::size_t l = 0; l < m.dim(); ++l) {
      dst[l] = static_cast<float>(static_cast<double>(src[l]) / norms[i]);
    }
  }
  return out;
}

}  // namespace capconf
