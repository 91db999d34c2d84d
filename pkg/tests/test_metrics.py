"""Generalization metrics: aggregation, normalization, summaries."""

from __future__ import annotations

import json

import numpy as np
import pytest

from csabench.errors import DatasetOrderMismatch
from csabench.generalization import (
    GMatrices,
    ScoreTensor,
    aggregate_G,
    collect_tensor,
    compute_Ga,
    compute_Gn,
    compute_Gna,
    compute_gmatrices,
    summarize_across,
    write_gmatrices,
    write_tensor_json,
)


def make_tensor(values, model="m", metric="r2"):
    values = np.asarray(values, dtype=np.float64)
    d = values.shape[0]
    return ScoreTensor(model, [f"ds{i}" for i in range(d)], metric, values)


def brute_force_offdiag_means(matrix):
    """Independent double-loop oracle for Ga / Gna."""
    d = len(matrix)
    out = []
    for s in range(d):
        total, count = 0.0, 0
        for t in range(d):
            if t == s or not np.isfinite(matrix[s][t]):
                continue
            total += matrix[s][t]
            count += 1
        out.append(total / count if count else np.nan)
    return np.array(out)


# ---------------------------------------------------------------------------
# aggregate_G
# ---------------------------------------------------------------------------

def test_aggregate_mean_std():
    tensor = make_tensor([[[0.5, 0.7]]])
    mean, std, n_valid = aggregate_G(tensor)
    assert mean[0, 0] == pytest.approx(0.6, abs=1e-15)
    assert std[0, 0] == pytest.approx(0.1, abs=1e-15)  # population std
    assert n_valid[0, 0] == 2


def test_aggregate_all_null_entry():
    tensor = make_tensor([[[np.nan, np.nan], [0.2, 0.4]],
                          [[0.1, 0.3], [0.5, 0.5]]])
    mean, std, n_valid = aggregate_G(tensor)
    assert not np.isfinite(mean[0, 0]) and n_valid[0, 0] == 0
    assert mean[0, 1] == pytest.approx(0.3)
    assert std[1, 1] == 0.0  # equal splits


def test_aggregate_skips_partial_nulls():
    tensor = make_tensor([[[0.5, np.nan, 0.7]]])
    mean, _, n_valid = aggregate_G(tensor)
    assert mean[0, 0] == pytest.approx(0.6) and n_valid[0, 0] == 2


# ---------------------------------------------------------------------------
# Ga / Gn / Gna
# ---------------------------------------------------------------------------

def test_ga_four_term_mean():
    g = np.array([
        [0.8, 0.6, 0.4, 0.2, 0.0],
        [0.1, 0.9, 0.1, 0.1, 0.1],
        [0.2, 0.2, 0.7, 0.2, 0.2],
        [0.3, 0.3, 0.3, 0.6, 0.3],
        [0.4, 0.4, 0.4, 0.4, 0.5],
    ])
    ga = compute_Ga(g)
    assert ga[0] == pytest.approx(0.3)


def test_ga_two_datasets():
    g = np.array([[0.9, 0.6], [0.3, 0.8]])
    assert compute_Ga(g).tolist() == [0.6, 0.3]


def test_ga_matches_brute_force_oracle():
    rng = np.random.default_rng(41)
    for _ in range(50):
        g = rng.uniform(-1, 1, (5, 5))
        g[rng.uniform(size=(5, 5)) < 0.2] = np.nan
        got = compute_Ga(g)
        want = brute_force_offdiag_means(g)
        np.testing.assert_allclose(got, want, equal_nan=True)


def test_gn_diagonal_exactly_one():
    g = np.array([[0.731, 0.2], [0.4, 0.859]])
    gn, reasons = compute_Gn(g)
    assert gn[0, 0] == 1.0 and gn[1, 1] == 1.0
    assert not reasons


def test_gn_simple_ratio():
    g = np.array([[0.8, 0.4], [0.1, 0.5]])
    gn, _ = compute_Gn(g)
    assert gn[0, 1] == 0.5


def test_gn_unstable_denominator_guard():
    g = np.array([[0.01, 0.4], [0.3, 0.9]])
    gn, reasons = compute_Gn(g)
    assert not np.isfinite(gn[0, 0]) and not np.isfinite(gn[0, 1])
    assert reasons[(0, 1)] == "unstable-denominator"
    assert gn[1, 0] == pytest.approx(0.3 / 0.9)


def test_gn_negative_diagonal_guard():
    g = np.array([[-0.5, 0.4], [0.3, 0.9]])
    gn, reasons = compute_Gn(g)
    assert not np.isfinite(gn[0, 1])
    assert (0, 0) in reasons


def test_gna_row_mean():
    gn = np.array([
        [1.0, 0.5, 0.5, 0.5, 0.5],
        [0.2, 1.0, 0.2, 0.2, 0.2],
        [0.1, 0.1, 1.0, 0.1, 0.1],
        [0.3, 0.3, 0.3, 1.0, 0.3],
        [0.4, 0.4, 0.4, 0.4, 1.0],
    ])
    assert compute_Gna(gn)[0] == pytest.approx(0.5)


def test_gna_all_null_row():
    gn = np.array([[1.0, np.nan], [np.nan, 1.0]])
    out = compute_Gna(gn)
    assert not np.isfinite(out[0]) and not np.isfinite(out[1])


def test_gna_matches_brute_force_oracle():
    rng = np.random.default_rng(43)
    for _ in range(50):
        gn = rng.uniform(-1, 2, (5, 5))
        gn[rng.uniform(size=(5, 5)) < 0.3] = np.nan
        np.testing.assert_allclose(
            compute_Gna(gn), brute_force_offdiag_means(gn), equal_nan=True
        )


# ---------------------------------------------------------------------------
# algebraic properties
# ---------------------------------------------------------------------------

def test_scaling_by_two_is_exact():
    rng = np.random.default_rng(44)
    values = rng.uniform(0.1, 1.0, (4, 4, 3))
    gm1 = compute_gmatrices(make_tensor(values))
    gm2 = compute_gmatrices(make_tensor(2.0 * values))
    assert np.array_equal(gm2.g_mean, 2.0 * gm1.g_mean)
    assert np.array_equal(gm2.ga, 2.0 * gm1.ga)
    assert np.array_equal(gm2.gn, gm1.gn)
    assert np.array_equal(gm2.gna, gm1.gna)


def test_permutation_equivariance():
    rng = np.random.default_rng(45)
    values = rng.uniform(0.1, 1.0, (4, 4, 2))
    perm = [2, 0, 3, 1]
    permuted = values[np.ix_(perm, perm)]
    gm = compute_gmatrices(make_tensor(values))
    gmp = compute_gmatrices(make_tensor(permuted))
    np.testing.assert_array_equal(gmp.g_mean, gm.g_mean[np.ix_(perm, perm)])
    np.testing.assert_array_equal(gmp.ga, gm.ga[perm])
    np.testing.assert_array_equal(gmp.gn, gm.gn[np.ix_(perm, perm)])
    np.testing.assert_array_equal(gmp.gna, gm.gna[perm])


# ---------------------------------------------------------------------------
# summaries
# ---------------------------------------------------------------------------

def diag_gmatrices(model, datasets, diag_mean, diag_std):
    d = len(datasets)
    g_mean = np.full((d, d), np.nan)
    g_std = np.full((d, d), np.nan)
    np.fill_diagonal(g_mean, diag_mean)
    np.fill_diagonal(g_std, diag_std)
    gn, reasons = compute_Gn(g_mean)
    return GMatrices(model, list(datasets), "r2", g_mean, g_std,
                     compute_Ga(g_mean), gn, compute_Gna(gn),
                     np.full((d, d), 1), reasons)


def test_summarize_single_model():
    gm = diag_gmatrices("solo", ["a", "b"], [0.5, 0.7], [0.01, 0.02])
    out = summarize_across([gm])
    assert out["mean"].models == ["solo"]
    assert out["mean"].table.tolist() == [[0.5, 0.7]]
    assert out["mean"].row_means[0] == pytest.approx(0.6)
    assert out["std"].table.tolist() == [[0.01, 0.02]]


def test_summarize_dataset_order_mismatch():
    a = diag_gmatrices("a", ["x", "y"], [0.5, 0.7], [0.0, 0.0])
    b = diag_gmatrices("b", ["y", "x"], [0.5, 0.7], [0.0, 0.0])
    with pytest.raises(DatasetOrderMismatch):
        summarize_across([a, b])


# ---------------------------------------------------------------------------
# collection and serialization
# ---------------------------------------------------------------------------

def test_collect_tensor_marks_missing(tmp_path):
    rundir = tmp_path / "run"
    (rundir).mkdir()
    (rundir / "run_meta.json").write_text(json.dumps({
        "datasets": ["a", "b"], "n_splits": 2, "models": ["m"],
        "n_samples": {"a": 10, "b": 10}, "benchmark_root": "x", "reuse_train": True,
    }))
    for s in ("a", "b"):
        for t in ("a", "b"):
            for n in range(2):
                d = rundir / "m" / f"{s}-{t}" / f"split_{n}" / "infer"
                d.mkdir(parents=True)
                if (s, t, n) != ("a", "b", 1):
                    (d / "test_scores.json").write_text(json.dumps({"r2": 0.5}))
    tensor = collect_tensor(rundir, "m")
    assert np.isfinite(tensor.values).sum() == 7
    assert not np.isfinite(tensor.values[0, 1, 1])
    assert len(tensor.missing) == 1


def test_write_gmatrices_and_tensor_json(tmp_path):
    rng = np.random.default_rng(46)
    values = rng.uniform(0.2, 0.9, (3, 3, 2))
    values[0, 1, :] = np.nan
    tensor = make_tensor(values)
    gm = compute_gmatrices(tensor)
    write_gmatrices(gm, tmp_path)
    write_tensor_json(tensor, gm, tmp_path / "tensor.json")

    lines = (tmp_path / "G_mean.csv").read_text().splitlines()
    assert lines[0] == "source,ds0,ds1,ds2"
    assert lines[1].split(",")[2] == ""  # null cell serialized empty

    doc = json.loads((tmp_path / "tensor.json").read_text())
    assert doc["g"][0][1] == [None, None]
    assert doc["Gn"][1][1] == 1.0
    assert doc["n_valid"][0][1] == 0
