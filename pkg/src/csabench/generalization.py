"""Cross-dataset generalization metrics.

Per-split scores collected from a run directory form a d x d x N tensor
g[s, t, n] per model (source s, target t, split n). Four aggregates are
derived:

    G    — entrywise mean (and population std) over splits
    Ga   — row means of G excluding the diagonal: how well a model trained
           on s does, on average, on every other dataset
    Gn   — G scaled by its own diagonal: performance relative to the
           within-dataset baseline; the diagonal is 1 wherever defined
    Gna  — row means of Gn excluding the diagonal

Failed grid entries are null and stay null: aggregates skip them and report
valid counts rather than impute. Diagonals below a small threshold null
their whole Gn row (reason ``unstable-denominator``) instead of emitting
huge or infinite ratios. All transforms are pure and deterministic.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from .contract import TEST_SCORES, read_scores
from .errors import DatasetOrderMismatch
from .scheduler import read_run_meta

GN_DENOMINATOR_EPS = 0.05


@dataclass
class ScoreTensor:
    model: str
    datasets: list[str]
    metric: str
    values: NDArray  # (d, d, N); NaN marks a failed/missing entry
    missing: list[str] = field(default_factory=list)


@dataclass
class GMatrices:
    model: str
    datasets: list[str]
    metric: str
    g_mean: NDArray
    g_std: NDArray
    ga: NDArray
    gn: NDArray
    gna: NDArray
    n_valid: NDArray
    gn_reasons: dict[tuple[int, int], str] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Collection
# ---------------------------------------------------------------------------

def collect_tensor(rundir, model: str, metric: str = "r2") -> ScoreTensor:
    """Scan a run directory for one model's test scores.

    Entries whose score file is absent (failed or never ran) or whose
    metric is null come back as NaN, with the paths listed in ``missing``.
    """
    rundir = Path(rundir)
    meta = read_run_meta(rundir)
    datasets = list(meta["datasets"])
    n_splits = int(meta["n_splits"])
    d = len(datasets)
    values = np.full((d, d, n_splits), np.nan)
    missing: list[str] = []

    for si, s in enumerate(datasets):
        for ti, t in enumerate(datasets):
            for n in range(n_splits):
                path = rundir / model / f"{s}-{t}" / f"split_{n}" / "infer" / TEST_SCORES
                if not path.is_file():
                    missing.append(str(path))
                    continue
                scores = read_scores(path)
                value = scores.get(metric)
                if value is not None and math.isfinite(value):
                    values[si, ti, n] = float(value)
                else:
                    missing.append(str(path))
    return ScoreTensor(model, datasets, metric, values, missing)


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------

def aggregate_G(tensor: ScoreTensor) -> tuple[NDArray, NDArray, NDArray]:
    """Entrywise mean and population std over non-null splits.

    Entries where every split failed stay NaN with n_valid 0.
    """
    values = tensor.values
    valid = np.isfinite(values)
    n_valid = valid.sum(axis=2)
    filled = np.where(valid, values, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = filled.sum(axis=2) / n_valid
        dev = np.where(valid, values - mean[:, :, None], 0.0)
        var = (dev * dev).sum(axis=2) / n_valid
    std = np.sqrt(var)
    mean = np.where(n_valid > 0, mean, np.nan)
    std = np.where(n_valid > 0, std, np.nan)
    return mean, std, n_valid


def _offdiag_row_means(matrix: NDArray) -> NDArray:
    d = matrix.shape[0]
    out = np.full(d, np.nan)
    for s in range(d):
        vals = [matrix[s, t] for t in range(d) if t != s and np.isfinite(matrix[s, t])]
        if vals:
            out[s] = sum(vals) / len(vals)
    return out


def compute_Ga(g_mean: NDArray) -> NDArray:
    """Row means of G excluding the within-dataset column, null-skipping."""
    if g_mean.shape[0] < 2:
        raise ValueError("Ga needs at least two datasets")
    return _offdiag_row_means(g_mean)


def compute_Gn(
    g_mean: NDArray, eps: float = GN_DENOMINATOR_EPS
) -> tuple[NDArray, dict[tuple[int, int], str]]:
    """Scale each row by its diagonal entry.

    Rows whose diagonal is null or below ``eps`` become null with reason
    ``unstable-denominator``: dividing by a near-zero or negative
    within-dataset score would only mislead.
    """
    d = g_mean.shape[0]
    gn = np.full((d, d), np.nan)
    reasons: dict[tuple[int, int], str] = {}
    for s in range(d):
        denom = g_mean[s, s]
        if not np.isfinite(denom) or denom < eps:
            for t in range(d):
                reasons[(s, t)] = "unstable-denominator"
            continue
        for t in range(d):
            if np.isfinite(g_mean[s, t]):
                gn[s, t] = g_mean[s, t] / denom
    return gn, reasons


def compute_Gna(gn: NDArray) -> NDArray:
    """Row means of Gn excluding the diagonal, null-skipping."""
    if gn.shape[0] < 2:
        raise ValueError("Gna needs at least two datasets")
    return _offdiag_row_means(gn)


def compute_gmatrices(tensor: ScoreTensor) -> GMatrices:
    g_mean, g_std, n_valid = aggregate_G(tensor)
    gn, reasons = compute_Gn(g_mean)
    return GMatrices(
        model=tensor.model,
        datasets=tensor.datasets,
        metric=tensor.metric,
        g_mean=g_mean,
        g_std=g_std,
        ga=compute_Ga(g_mean),
        gn=gn,
        gna=compute_Gna(gn),
        n_valid=n_valid,
        gn_reasons=reasons,
    )


# ---------------------------------------------------------------------------
# Cross-model summaries
# ---------------------------------------------------------------------------

@dataclass
class WithinDatasetSummary:
    """Diagonal values per model with marginal means (Tables-4/5 layout)."""

    statistic: str  # "mean" | "std"
    models: list[str]
    datasets: list[str]
    table: NDArray       # (n_models, d) diagonal entries
    row_means: NDArray   # mean across datasets, per model
    col_means: NDArray   # mean across models, per dataset


def summarize_across(gmats: list[GMatrices]) -> dict[str, WithinDatasetSummary]:
    """Within-dataset summary tables across models, for mean and std."""
    if not gmats:
        raise ValueError("no models to summarize")
    datasets = gmats[0].datasets
    for g in gmats[1:]:
        if g.datasets != datasets:
            raise DatasetOrderMismatch(
                f"{g.model} orders datasets {g.datasets}, expected {datasets}"
            )
    models = [g.model for g in gmats]
    out = {}
    for stat in ("mean", "std"):
        matrix = np.array([
            np.diagonal(g.g_mean if stat == "mean" else g.g_std) for g in gmats
        ])
        out[stat] = WithinDatasetSummary(
            statistic=stat,
            models=models,
            datasets=list(datasets),
            table=matrix,
            row_means=matrix.mean(axis=1),
            col_means=matrix.mean(axis=0),
        )
    return out


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return "" if not np.isfinite(x) else f"{x:.17g}"


def _write_matrix_csv(path, datasets, matrix) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("source," + ",".join(datasets) + "\n")
        for s, name in enumerate(datasets):
            fh.write(name + "," + ",".join(_fmt(v) for v in matrix[s]) + "\n")


def _write_vector_csv(path, datasets, vector, column) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"source,{column}\n")
        for name, v in zip(datasets, vector):
            fh.write(f"{name},{_fmt(v)}\n")


def write_gmatrices(gm: GMatrices, out_dir) -> None:
    """Emit G_mean/G_std/Ga/Gn/Gna CSVs plus the raw tensor-shaped JSON."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_matrix_csv(out / "G_mean.csv", gm.datasets, gm.g_mean)
    _write_matrix_csv(out / "G_std.csv", gm.datasets, gm.g_std)
    _write_matrix_csv(out / "Gn.csv", gm.datasets, gm.gn)
    _write_vector_csv(out / "Ga.csv", gm.datasets, gm.ga, "Ga")
    _write_vector_csv(out / "Gna.csv", gm.datasets, gm.gna, "Gna")


def write_tensor_json(tensor: ScoreTensor, gm: GMatrices, path) -> None:
    def listify(arr):
        return [[None if not np.isfinite(v) else v for v in row] for row in arr]

    doc = {
        "model": tensor.model,
        "metric": tensor.metric,
        "datasets": tensor.datasets,
        "g": [listify(tensor.values[s]) for s in range(len(tensor.datasets))],
        "G_mean": listify(gm.g_mean),
        "G_std": listify(gm.g_std),
        "Ga": [None if not np.isfinite(v) else v for v in gm.ga],
        "Gn": listify(gm.gn),
        "Gna": [None if not np.isfinite(v) else v for v in gm.gna],
        "n_valid": [[int(v) for v in row] for row in gm.n_valid],
        "gn_reasons": {f"{s},{t}": r for (s, t), r in sorted(gm.gn_reasons.items())},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
