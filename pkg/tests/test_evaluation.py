"""Metric oracles, prediction batching and report emission."""

import numpy as np
import pytest
from sklearn.metrics import normalized_mutual_info_score

from aecl import (EvaluationReport, ModelDims, TrainHistory, accuracy,
                  align_labels, batch_diagnostics, emit_report,
                  evaluate_params, init_params, negative_similarity, nmi,
                  predict)

from oracles import accuracy_brute


# -- accuracy ------------------------------------------------------------------

def test_accuracy_anchors():
    assert accuracy([0, 0, 1, 1], [1, 1, 0, 0]) == 1.0
    assert accuracy([2, 0, 1, 1, 2], [2, 0, 1, 1, 2]) == 1.0
    assert accuracy([0, 0, 1, 1], [0, 1, 0, 1]) == 0.5


def test_accuracy_matches_brute_force_on_random_instances():
    rng = np.random.default_rng(0)
    for _ in range(60):
        n = int(rng.integers(2, 13))
        k_true = int(rng.integers(1, 6))
        k_pred = int(rng.integers(1, 6))
        y = rng.integers(0, k_true, size=n)
        yp = rng.integers(0, k_pred, size=n)
        assert accuracy(y, yp) == pytest.approx(accuracy_brute(y, yp),
                                                abs=1e-12)


def test_accuracy_invariant_under_relabeling():
    rng = np.random.default_rng(1)
    y = rng.integers(0, 4, size=30)
    yp = rng.integers(0, 4, size=30)
    base = accuracy(y, yp)
    perm = rng.permutation(4)
    assert accuracy(y, perm[yp]) == pytest.approx(base, abs=1e-12)


def test_accuracy_rejects_length_mismatch():
    with pytest.raises(ValueError, match="length mismatch"):
        accuracy([0, 1], [0, 1, 1])


def test_align_labels_returns_optimal_mapping():
    mapping = align_labels([0, 0, 1, 1], [5, 5, 9, 9])
    assert mapping == {5: 0, 9: 1}


# -- NMI ------------------------------------------------------------------------

def test_nmi_anchors():
    assert nmi([0, 1, 0, 1, 2], [0, 1, 0, 1, 2]) == pytest.approx(1.0,
                                                                  abs=1e-12)
    assert nmi([0, 0, 1, 1], [2, 2, 2, 2]) == 0.0
    assert nmi([0, 0, 1, 1], [0, 1, 0, 1]) == pytest.approx(0.0, abs=1e-12)
    assert nmi([0, 0], [1, 1]) == 1.0  # both single-cluster


def test_nmi_symmetry_and_permutation_invariance():
    rng = np.random.default_rng(2)
    y = rng.integers(0, 3, size=40)
    yp = rng.integers(0, 4, size=40)
    assert nmi(y, yp) == pytest.approx(nmi(yp, y), abs=1e-12)
    perm = rng.permutation(4)
    assert nmi(y, perm[yp]) == pytest.approx(nmi(y, yp), abs=1e-12)


def test_nmi_agrees_with_sklearn():
    rng = np.random.default_rng(3)
    for _ in range(20):
        n = int(rng.integers(5, 60))
        y = rng.integers(0, 5, size=n)
        yp = rng.integers(0, 4, size=n)
        expected = normalized_mutual_info_score(y, yp,
                                                average_method="geometric")
        assert nmi(y, yp) == pytest.approx(expected, abs=1e-9)


# -- NS / PS -------------------------------------------------------------------------

def test_negative_similarity_hand_case():
    s = np.full((2, 2), 0.5)
    ns, ps = negative_similarity(s, [0, 1])
    assert ns == 0.5 and ps == 0.5


def test_negative_similarity_single_class_and_block_diagonal():
    s = np.full((3, 3), 1.0 / 3.0)
    ns, ps = negative_similarity(s, [1, 1, 1])
    assert ns == 0.0 and ps == 1.0
    block = np.array([[0.5, 0.5, 0.0, 0.0],
                      [0.5, 0.5, 0.0, 0.0],
                      [0.0, 0.0, 0.5, 0.5],
                      [0.0, 0.0, 0.5, 0.5]])
    ns, ps = negative_similarity(block, [0, 0, 1, 1])
    assert ns == 0.0 and ps == 1.0


def test_negative_similarity_bounds_and_complement():
    rng = np.random.default_rng(4)
    for _ in range(20):
        n = int(rng.integers(2, 12))
        s = rng.random((n, n))
        s /= s.sum(axis=1, keepdims=True)
        y = rng.integers(0, 3, size=n)
        ns, ps = negative_similarity(s, y)
        assert 0.0 <= ns <= 1.0
        assert ps == 1.0 - ns


def test_negative_similarity_rejects_mismatch():
    with pytest.raises(ValueError, match="length mismatch"):
        negative_similarity(np.eye(3), [0, 1])


# -- predict / evaluate ----------------------------------------------------------------

def test_predict_handles_partial_and_single_batches():
    params = init_params(ModelDims(6, 4, 3), 0)
    view0 = np.random.default_rng(5).standard_normal((5, 6))
    full = predict(params, view0, batch_size=5)
    assert full.shape == (5,) and set(full.tolist()) <= {0, 1, 2}
    chunked = predict(params, view0, batch_size=2)  # 2 + 2 + 1 (partial kept)
    assert chunked.shape == (5,)
    single = predict(params, view0[:1], batch_size=4)
    assert single.shape == (1,)


def test_evaluate_params_report_consistency():
    params = init_params(ModelDims(6, 4, 3), 1)
    view0 = np.random.default_rng(6).standard_normal((9, 6))
    y = np.random.default_rng(7).integers(0, 3, size=9)
    report, pred = evaluate_params(params, view0, 4, y)
    assert report.n_samples == 9 and report.m == 3
    assert report.cluster_sizes.sum() == 9
    assert report.acc == pytest.approx(accuracy(y, pred), abs=1e-15)
    assert report.ps == 1.0 - report.ns
    unlabeled, _ = evaluate_params(params, view0, 4, None)
    assert unlabeled.acc is None and unlabeled.ns is None
    assert unlabeled.cluster_sizes.sum() == 9


def test_batch_diagnostics_batching():
    params = init_params(ModelDims(6, 4, 3), 2)
    view0 = np.random.default_rng(8).standard_normal((10, 6))
    y = np.random.default_rng(9).integers(0, 3, size=10)
    pairs = batch_diagnostics(params, view0, y, batch_size=4)
    assert len(pairs) == 3  # 4 + 4 + 2
    for ns, ps in pairs:
        assert 0.0 <= ns <= 1.0 and ps == 1.0 - ns


# -- emit_report --------------------------------------------------------------------------

def test_emit_report_files_and_determinism(tmp_path):
    report = EvaluationReport(acc=1.0, nmi=0.5, ns=0.25, ps=0.75,
                              cluster_sizes=np.array([3, 2]), n_samples=5, m=2)
    history = TrainHistory()
    paths = emit_report(report, history, tmp_path)
    text = paths["report"].read_text()
    assert text.splitlines()[0] == "acc,nmi,ns,ps,n_samples,m"
    assert text.splitlines()[1].split(",")[0] == "1.0"
    assert paths["curves"].read_text() == \
        "epoch,stage,l_i,l_c,l_p,l_e1,l_e2,n_pseudo,acc,nmi,ns,ps\n"
    assert paths["cluster_sizes"].read_text() == \
        "cluster,count\n0,3\n1,2\n"
    before = {k: p.read_bytes() for k, p in paths.items()}
    again = emit_report(report, history, tmp_path)
    assert {k: p.read_bytes() for k, p in again.items()} == before


def test_emit_report_empty_metrics(tmp_path):
    report = EvaluationReport(acc=None, nmi=None, ns=None, ps=None,
                              cluster_sizes=np.array([4, 0, 1]),
                              n_samples=5, m=3)
    paths = emit_report(report, TrainHistory(), tmp_path)
    row = paths["report"].read_text().splitlines()[1]
    assert row == ",,,,5,3"
