// Python bindings for the core operations: score computation, conformal
// decisions, zero-shot evaluation, and synthetic data generation. Thin
// wrappers only - all numerics live in the C++ library, so python callers
// see bit-identical results.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "capconf/conformal.hpp"
#include "capconf/errors.hpp"
#include "capconf/harness.hpp"
#include "capconf/knn.hpp"
#include "capconf/metrics.hpp"
#include "capconf/rng.hpp"
#include "capconf/synth.hpp"
#include "capconf/types.hpp"
#include "capconf/zeroshot.hpp"

namespace py = pybind11;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

capconf::EmbeddingMatrix to_matrix(const FloatArray& array, const char* name) {
  if (array.ndim() != 2) {
    throw capconf::ShapeError(std::string(name) + " must be a 2-D float array");
  }
  capconf::EmbeddingMatrix m(static_cast<std::size_t>(array.shape(0)),
                             static_cast<std::size_t>(array.shape(1)), name);
  std::memcpy(m.data(), array.data(), sizeof(float) * m.rows() * m.dim());
  m.validate();
  return m;
}

py::array_t<float> from_matrix(const capconf::EmbeddingMatrix& m) {
  py::array_t<float> out({m.rows(), m.dim()});
  std::memcpy(out.mutable_data(), m.data(), sizeof(float) * m.rows() * m.dim());
  return out;
}

std::vector<double> to_doubles(const DoubleArray& array, const char* name) {
  if (array.ndim() != 1) {
    throw capconf::ShapeError(std::string(name) + " must be a 1-D array");
  }
  return {array.data(), array.data() + array.shape(0)};
}

capconf::CalibrationModel model_from(const std::vector<double>& scores,
                                     const std::string& kind) {
  capconf::ScoreSeries series;
  series.kind = capconf::score_kind_from_string(kind);
  series.values = scores;
  return capconf::CalibrationModel::from_series(series);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "conformal outlier detection for contrastive embeddings";
  m.attr("__version__") = "0.1.0";

  py::register_exception<capconf::Error>(m, "CapconfError");

  m.def(
      "pairwise_si",
      [](const FloatArray& captions, const FloatArray& images) {
        const auto a = to_matrix(captions, "captions");
        const auto b = to_matrix(images, "images");
        const capconf::ScoreSeries series = capconf::pairwise_si_rowwise(a, b);
        return py::array_t<double>(series.values.size(), series.values.data());
      },
      py::arg("captions"), py::arg("images"),
      "Rowwise image-caption cosine distances (the s_I scores).");

  m.def(
      "knnd",
      [](const FloatArray& queries, const FloatArray& train, std::size_t k) {
        capconf::KnnConfig cfg;
        cfg.k = k;
        const capconf::KnnOutput out =
            capconf::knnd(to_matrix(queries, "queries"), to_matrix(train, "train"), cfg);
        py::list indices;
        py::list distances;
        for (const capconf::KnnResult& r : out.per_query) {
          indices.append(py::cast(r.neighbor_indices));
          distances.append(py::cast(r.neighbor_distances));
        }
        py::dict result;
        result["mean_distance"] =
            py::array_t<double>(out.scores.values.size(), out.scores.values.data());
        result["indices"] = indices;
        result["distances"] = distances;
        return result;
      },
      py::arg("queries"), py::arg("train"), py::arg("k") = 500,
      "Mean cosine distance to the k nearest training rows (the s_T scores).");

  m.def(
      "threshold_at",
      [](const DoubleArray& calib, double alpha, const std::string& kind) -> py::object {
        const auto t = capconf::threshold_at(model_from(to_doubles(calib, "calib"), kind), alpha);
        if (!t) return py::none();
        return py::float_(*t);
      },
      py::arg("calib"), py::arg("alpha"), py::arg("kind") = "image_caption",
      "Conformal admission threshold; None means NoAdmission.");

  m.def(
      "p_value",
      [](const DoubleArray& calib, double score, const std::string& kind) {
        return capconf::p_value(model_from(to_doubles(calib, "calib"), kind), score).p_value;
      },
      py::arg("calib"), py::arg("score"), py::arg("kind") = "knn_text",
      "Rank-based conformal p-value of a score.");

  m.def(
      "decide",
      [](const DoubleArray& calib, double score, double alpha, const std::string& mode,
         const std::string& kind) {
        const capconf::ConformalDecision d =
            capconf::decide(model_from(to_doubles(calib, "calib"), kind), score, alpha,
                            capconf::decision_mode_from_string(mode));
        py::dict out;
        out["admitted"] = d.admitted;
        out["score"] = d.score;
        out["alpha"] = d.alpha;
        out["mode"] = capconf::to_string(d.mode);
        out["threshold"] = d.threshold ? py::object(py::float_(*d.threshold)) : py::none();
        out["p_value"] = d.coverage.p_value;
        out["required_coverage"] = d.coverage.required_coverage;
        return out;
      },
      py::arg("calib"), py::arg("score"), py::arg("alpha"), py::arg("mode") = "tpr_control",
      py::arg("kind") = "image_caption", "Full conformal admit/outlier decision record.");

  m.def(
      "build_label_query",
      [](const FloatArray& captions, const std::string& label) {
        const capconf::LabelQuery q =
            capconf::build_label_query(to_matrix(captions, "captions"), label);
        return py::array_t<float>(q.query_embedding.size(), q.query_embedding.data());
      },
      py::arg("captions"), py::arg("label") = "label",
      "Normalized mean of caption embeddings (the zero-shot query).");

  m.def(
      "zeroshot_scores",
      [](const FloatArray& images, const FloatArray& queries) {
        const auto img = to_matrix(images, "images");
        if (queries.ndim() != 2) {
          throw capconf::ShapeError("queries must be a 2-D float array");
        }
        std::vector<capconf::LabelQuery> qs(static_cast<std::size_t>(queries.shape(0)));
        for (std::size_t l = 0; l < qs.size(); ++l) {
          qs[l].label = "q" + std::to_string(l);
          qs[l].query_embedding.assign(queries.data() + l * queries.shape(1),
                                       queries.data() + (l + 1) * queries.shape(1));
        }
        const std::vector<double> scores = capconf::zeroshot_scores(img, qs);
        py::array_t<double> out({img.rows(), qs.size()});
        std::memcpy(out.mutable_data(), scores.data(), sizeof(double) * scores.size());
        return out;
      },
      py::arg("images"), py::arg("queries"),
      "Cosine similarities of every image against every query row.");

  m.def(
      "roc_auc",
      [](const DoubleArray& scores, const py::array_t<bool, py::array::c_style>& positive) {
        const std::vector<double> s = to_doubles(scores, "scores");
        if (positive.ndim() != 1 ||
            static_cast<std::size_t>(positive.shape(0)) != s.size()) {
          throw capconf::ShapeError("positive flags must align with scores");
        }
        std::vector<std::uint8_t> flags(s.size());
        for (std::size_t i = 0; i < flags.size(); ++i) {
          flags[i] = positive.data()[i] ? 1 : 0;
        }
        return capconf::roc_auc(s, flags).auroc;
      },
      py::arg("scores"), py::arg("positive"),
      "AUROC with half credit for ties (exact integer arithmetic).");

  m.def(
      "generate",
      [](const std::string& spec_json) {
        const capconf::SynthDataset ds =
            capconf::generate(capconf::synth_spec_from_json(spec_json));
        py::dict out;
        out["captions"] = from_matrix(ds.captions);
        out["images"] = from_matrix(ds.images);
        out["label_names"] = py::cast(ds.labels.labels);
        py::list assignments;
        for (std::size_t i = 0; i < ds.labels.rows(); ++i) {
          py::list row;
          for (std::size_t l = 0; l < ds.labels.labels.size(); ++l) {
            row.append(ds.labels.at(i, l) == capconf::LabelValue::positive);
          }
          assignments.append(std::move(row));
        }
        out["labels"] = assignments;
        py::list queries;
        for (const capconf::EmbeddingMatrix& q : ds.query_captions) {
          queries.append(from_matrix(q));
        }
        out["query_captions"] = queries;
        return out;
      },
      py::arg("spec_json"), "Synthetic caption/image benchmark from a JSON spec.");

  m.def(
      "split_rows",
      [](std::size_t n, const std::vector<double>& proportions, std::uint64_t seed) {
        if (proportions.size() != 4) {
          throw capconf::ConfigError("proportions takes exactly four values");
        }
        const capconf::SplitIndices s = capconf::split_rows(
            n, capconf::SplitProportions{proportions[0], proportions[1], proportions[2],
                                         proportions[3]},
            seed);
        py::dict out;
        out["train"] = py::cast(s.train);
        out["val"] = py::cast(s.val);
        out["calib"] = py::cast(s.calib);
        out["test"] = py::cast(s.test);
        return out;
      },
      py::arg("n"), py::arg("proportions"), py::arg("seed"),
      "Seeded disjoint train/val/calib/test row partition.");
}
