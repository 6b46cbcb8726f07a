"""Smoke tests for the python bindings.

The bindings are thin wrappers over the C++ library, so these tests pin a
few exact values (the C++ unit suite freezes the same ones) and otherwise
check shapes, determinism, and error surfacing.
"""

import json
import math

import numpy as np
import pytest

import capconf


def unit_rows(a):
    return a / np.linalg.norm(a, axis=1, keepdims=True)


def test_version():
    assert capconf.__version__ == "0.1.0"


def test_pairwise_si_exact():
    captions = np.array([[1.0, 0.0], [0.0, 2.0]], dtype=np.float32)
    images = np.array([[1.0, 1.0], [0.0, 5.0]], dtype=np.float32)
    s = capconf.pairwise_si(captions, images)
    assert s.shape == (2,)
    assert s[0] == 1.0 - 1.0 / math.sqrt(2.0)
    assert s[1] == 0.0


def test_pairwise_si_shape_error():
    with pytest.raises(capconf.CapconfError):
        capconf.pairwise_si(np.zeros((2, 3), np.float32), np.ones((2, 4), np.float32))


def test_knnd_against_numpy():
    rng = np.random.default_rng(7)
    train = rng.standard_normal((50, 8)).astype(np.float32)
    queries = rng.standard_normal((5, 8)).astype(np.float32)
    out = capconf.knnd(queries, train, k=3)

    dists = 1.0 - unit_rows(queries.astype(np.float64)) @ unit_rows(
        train.astype(np.float64)
    ).T
    for q in range(5):
        order = np.argsort(dists[q], kind="stable")[:3]
        assert list(out["indices"][q]) == list(order)
        np.testing.assert_allclose(out["distances"][q], dists[q][order], rtol=1e-12)
    np.testing.assert_allclose(
        out["mean_distance"], [np.mean(d) for d in out["distances"]], rtol=0, atol=0
    )


def test_knnd_k_too_large():
    m = np.eye(3, dtype=np.float32)
    with pytest.raises(capconf.CapconfError, match="k exceeds training rows"):
        capconf.knnd(m, m, k=4)


def test_threshold_and_p_value_exact():
    calib = np.arange(1, 101, dtype=np.float64) / 100.0
    assert capconf.threshold_at(calib, 0.05) == 0.05
    assert capconf.threshold_at(np.array([0.1, 0.2, 0.3]), 0.05) is None  # NoAdmission
    assert capconf.p_value(np.array([0.1, 0.2, 0.3]), 0.25) == 0.5
    with pytest.raises(capconf.CapconfError):
        capconf.threshold_at(calib, 0.0)


def test_decide_record():
    calib = np.array([0.1, 0.2, 0.3])
    d = capconf.decide(calib, 0.9, 0.05, mode="outlier_test", kind="knn_text")
    assert d["admitted"] is True
    assert d["p_value"] == 0.25
    assert d["required_coverage"] == 0.75
    assert d["mode"] == "outlier_test"

    d = capconf.decide(calib, 0.05, 0.05, mode="tpr_control")
    assert d["admitted"] is False  # NoAdmission: floor(0.05 * 4) = 0
    assert d["threshold"] is None


def test_roc_auc_exact():
    scores = np.array([0.9, 0.8, 0.8, 0.7, 0.5, 0.5, 0.5, 0.2])
    positive = np.array([1, 1, 0, 0, 1, 0, 0, 0], dtype=bool)
    assert capconf.roc_auc(scores, positive) == 0.7666666666666667


def test_zeroshot_scores_matches_numpy():
    rng = np.random.default_rng(11)
    images = rng.standard_normal((20, 6)).astype(np.float32)
    queries = unit_rows(rng.standard_normal((3, 6))).astype(np.float32)
    s = capconf.zeroshot_scores(images, queries)
    assert s.shape == (20, 3)
    expected = unit_rows(images.astype(np.float64)) @ unit_rows(
        queries.astype(np.float64)
    ).T
    np.testing.assert_allclose(s, expected, rtol=1e-6)


def test_build_label_query_unit_norm():
    captions = np.array([[1.0, 0.0], [0.0, 1.0]], dtype=np.float32)
    q = capconf.build_label_query(captions, "demo")
    np.testing.assert_allclose(q, [1 / math.sqrt(2)] * 2, rtol=1e-6)
    assert abs(float(np.linalg.norm(q.astype(np.float64))) - 1.0) < 1e-6


def test_generate_deterministic():
    spec = json.dumps(
        {
            "dim": 6,
            "n_pairs": 40,
            "n_labels": 2,
            "sigma_img": 0.1,
            "sigma_txt": 0.1,
            "n_queries_per_label": 3,
            "seed": 5,
        }
    )
    a = capconf.generate(spec)
    b = capconf.generate(spec)
    assert a["captions"].shape == (40, 6)
    assert a["images"].shape == (40, 6)
    assert len(a["label_names"]) == 2
    assert len(a["labels"]) == 40
    assert all(any(row) for row in a["labels"])
    assert len(a["query_captions"]) == 2
    assert a["query_captions"][0].shape == (3, 6)
    np.testing.assert_array_equal(a["captions"], b["captions"])
    np.testing.assert_array_equal(a["images"], b["images"])
    # Unit rows up to float rounding.
    norms = np.linalg.norm(a["captions"].astype(np.float64), axis=1)
    np.testing.assert_allclose(norms, 1.0, atol=1e-6)


def test_split_rows_frozen():
    s = capconf.split_rows(10, [0.5, 0.1, 0.2, 0.2], seed=3)
    assert s["train"] == [0, 3, 4, 5, 7]
    assert s["val"] == [8]
    assert s["calib"] == [1, 2]
    assert s["test"] == [6, 9]
    with pytest.raises(capconf.CapconfError):
        capconf.split_rows(10, [0.5, 0.5], seed=0)
