"""Native reference models: ridge regression and k-nearest-neighbors.

Both implement the three-stage contract end to end, so the harness can be
exercised without any external model code. They are exposed as the builtin
model specs ``baseline-ridge`` and ``baseline-knn`` and launched exactly
like external models:

    python -m csabench.baseline {ridge|knn} {preprocess|train|infer} --flags...

Preprocess joins benchmark features per the run's feature selection, fits
standardization statistics on training rows only, applies them to all three
partitions, and serializes matrices plus ids. Training is closed form
(ridge) or memorization (knn); the regularization strength is picked from a
fixed grid by validation performance, which stands in for early stopping.
Everything is deterministic for fixed inputs.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from . import data as bdata
from .contract import (
    MODEL_DIR,
    ParamField,
    PredictionRecord,
    StageKind,
    TEST_PREDICTIONS,
    TEST_SCORES,
    VAL_PREDICTIONS,
    VAL_SCORES,
    compute_scores,
    resolve_params,
    schema_help,
    write_predictions,
    write_scores,
)
from .errors import ContractViolation, CsabenchError

STD_FLOOR = 1e-8
LAMBDA_GRID = (1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3)


# ---------------------------------------------------------------------------
# Standardization
# ---------------------------------------------------------------------------

class StandardizationStats:
    """Per-feature mean and divisor fitted on training rows only.

    Features whose training standard deviation falls below the floor get a
    unit divisor, so constant columns scale to exact zeros and nothing can
    produce non-finite values.
    """

    def __init__(self, mean: NDArray, divisor: NDArray):
        self.mean = mean
        self.divisor = divisor

    @classmethod
    def fit(cls, x: NDArray) -> "StandardizationStats":
        mean = x.mean(axis=0)
        std = x.std(axis=0)
        divisor = np.where(std > STD_FLOOR, std, 1.0)
        return cls(mean, divisor)

    def apply(self, x: NDArray) -> NDArray:
        return (x - self.mean) / self.divisor

    def to_json_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "divisor": self.divisor.tolist()}


# ---------------------------------------------------------------------------
# Stage: preprocess
# ---------------------------------------------------------------------------

PREPROCESS_SCHEMA = (
    ParamField("benchmark_root", str, required=True, help="benchmark directory"),
    ParamField("source_dataset", str, required=True, help="training dataset name"),
    ParamField("target_dataset", str, required=True, help="evaluation dataset name"),
    ParamField("split_index", int, required=True, help="split number"),
    ParamField("split_dir", str, required=True, help="directory holding split files"),
    ParamField("output_dir", str, required=True, help="where train/val/test land"),
    ParamField("config", str, help="INI config file"),
    ParamField("supplementary_dir", str, help="model-specific extra data (unused)"),
    ParamField("device", str, help="opaque device string (unused)"),
    ParamField("cell_kinds", str, default="all", help="comma list of cell feature kinds"),
    ParamField("drug_kinds", str, default="all", help="comma list of drug feature kinds"),
)

TRAIN_SCHEMA = (
    ParamField("input_dir", str, required=True, help="preprocess output dir"),
    ParamField("output_dir", str, required=True, help="where model artifacts land"),
    ParamField("config", str, help="INI config file"),
    ParamField("device", str, help="opaque device string (unused)"),
    ParamField("knn_k", int, default=5, help="neighbor count for the knn model"),
    ParamField("lambda_grid", str, default=",".join(f"{v:g}" for v in LAMBDA_GRID),
               help="comma list of ridge regularization candidates"),
)

INFER_SCHEMA = (
    ParamField("input_dir", str, required=True, help="preprocess output dir"),
    ParamField("model_dir", str, required=True, help="trained model dir"),
    ParamField("test_data_dir", str, required=True, help="test partition dir"),
    ParamField("output_dir", str, required=True, help="where predictions land"),
    ParamField("config", str, help="INI config file"),
    ParamField("device", str, help="opaque device string (unused)"),
)


def _kinds(raw: str, available: dict[str, str]) -> tuple[str, ...]:
    if raw == "all":
        return tuple(sorted(available))
    return tuple(k.strip() for k in raw.split(",") if k.strip())


def _load_tables(root: Path, desc: bdata.DatasetDescriptor, kinds, entity: str):
    paths = desc.omics_paths if entity == "cell" else desc.drug_feature_paths
    tables = {}
    for kind in kinds:
        if kind not in paths:
            raise CsabenchError(f"dataset {desc.name} has no {entity} feature kind {kind!r}")
        tables[kind] = bdata.load_feature_table(root / paths[kind], entity, kind)
    return tables


def _write_partition(out: Path, x: NDArray, y: NDArray, sample_ids, cells, drugs) -> None:
    out.mkdir(parents=True, exist_ok=True)
    np.save(out / "x.npy", x)
    np.save(out / "y.npy", y)
    with open(out / "ids.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("sample_id,cell_id,drug_id\n")
        for s, c, d in zip(sample_ids, cells, drugs):
            fh.write(f"{s},{c},{d}\n")


def _read_partition(part_dir: Path):
    x = np.load(part_dir / "x.npy")
    y = np.load(part_dir / "y.npy")
    ids = []
    with open(part_dir / "ids.csv", "r", encoding="utf-8") as fh:
        fh.readline()
        for line in fh:
            if line.strip():
                ids.append(tuple(line.rstrip("\r\n").split(",")))
    return x, y, ids


def baseline_preprocess(params) -> None:
    root = Path(params["benchmark_root"])
    source = params["source_dataset"]
    target = params["target_dataset"]
    split_n = params["split_index"]
    out = Path(params["output_dir"])

    descriptors = {d.name: d for d in bdata.load_benchmark_index(root)}
    src = descriptors[source]
    tgt = descriptors[target]

    src_table = bdata.load_response_table(root / src.response_path)
    split = bdata.read_split_files(
        params["split_dir"], source, split_n, n_samples=src_table.n_samples
    )

    cell_kinds = _kinds(params["cell_kinds"], src.omics_paths)
    drug_kinds = _kinds(params["drug_kinds"], src.drug_feature_paths)
    selection = bdata.FeatureSelection(cell_kinds, drug_kinds)

    src_cells = _load_tables(root, src, cell_kinds, "cell")
    src_drugs = _load_tables(root, src, drug_kinds, "drug")

    x_train, y_train, names = bdata.join_features(
        src_table, src_cells, src_drugs, selection, split.train_idx
    )
    x_val, y_val, _ = bdata.join_features(
        src_table, src_cells, src_drugs, selection, split.val_idx
    )
    if source == target:
        test_rows = split.test_idx
        test_table = src_table
        x_test, y_test, _ = bdata.join_features(
            src_table, src_cells, src_drugs, selection, test_rows
        )
    else:
        test_table = bdata.load_response_table(root / tgt.response_path)
        test_rows = list(range(test_table.n_samples))
        tgt_cells = _load_tables(root, tgt, cell_kinds, "cell")
        tgt_drugs = _load_tables(root, tgt, drug_kinds, "drug")
        x_test, y_test, _ = bdata.join_features(
            test_table, tgt_cells, tgt_drugs, selection, test_rows
        )

    stats = StandardizationStats.fit(x_train)

    def ids_of(table, rows):
        return (
            [str(i) for i in rows],
            [table.cell_ids[i] for i in rows],
            [table.drug_ids[i] for i in rows],
        )

    _write_partition(out / "train", stats.apply(x_train), y_train, *ids_of(src_table, split.train_idx))
    _write_partition(out / "val", stats.apply(x_val), y_val, *ids_of(src_table, split.val_idx))
    _write_partition(out / "test", stats.apply(x_test), y_test, *ids_of(test_table, test_rows))

    meta = {
        "source_dataset": source,
        "target_dataset": target,
        "split_index": split_n,
        "feature_names": names,
        "scaler": stats.to_json_dict(),
    }
    with open(out / "preprocess_meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------

def _ridge_solve(x: NDArray, y: NDArray, lam: float) -> tuple[NDArray, float]:
    """Closed-form ridge with an unpenalized intercept (Cholesky solve)."""
    xm = x.mean(axis=0)
    xc = x - xm
    yc = y - y.mean()
    gram = xc.T @ xc + lam * np.eye(x.shape[1])
    chol = np.linalg.cholesky(gram)
    w = np.linalg.solve(chol.T, np.linalg.solve(chol, xc.T @ yc))
    return w, float(y.mean() - xm @ w)


def _knn_predict(train_x: NDArray, train_y: NDArray, x: NDArray, k: int) -> NDArray:
    """Mean response of the k nearest training rows (Euclidean).

    Ties in distance break toward the lower training index so predictions
    are deterministic.
    """
    preds = np.empty(x.shape[0])
    order_idx = np.arange(train_x.shape[0])
    for i in range(x.shape[0]):
        d2 = np.sum((train_x - x[i]) ** 2, axis=1)
        nearest = np.lexsort((order_idx, d2))[:k]
        preds[i] = train_y[nearest].mean()
    return preds


def baseline_train(params, kind: str) -> None:
    inp = Path(params["input_dir"])
    out = Path(params["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    x_train, y_train, _ = _read_partition(inp / "train")
    x_val, y_val, val_ids = _read_partition(inp / "val")

    model_dir = out / MODEL_DIR
    model_dir.mkdir(parents=True, exist_ok=True)

    if kind == "ridge":
        grid = tuple(float(v) for v in str(params["lambda_grid"]).split(",") if v.strip())
        # best validation R^2 == lowest validation MSE (same denominator);
        # MSE stays defined even when the validation targets are constant
        best = None
        for lam in grid:
            w, b = _ridge_solve(x_train, y_train, lam)
            val_mse = float(np.mean((x_val @ w + b - y_val) ** 2))
            if best is None or val_mse < best[0]:
                best = (val_mse, lam, w, b)
        _, lam, w, b = best
        np.save(model_dir / "weights.npy", w)
        np.save(model_dir / "scalars.npy", np.array([b, lam]))
        val_pred = x_val @ w + b
    elif kind == "knn":
        k = params["knn_k"]
        np.save(model_dir / "train_x.npy", x_train)
        np.save(model_dir / "train_y.npy", y_train)
        val_pred = _knn_predict(x_train, y_train, x_val, k)
    else:
        raise CsabenchError(f"unknown baseline model kind {kind!r}")

    with open(model_dir / "meta.json", "w", encoding="utf-8") as fh:
        json.dump({"kind": kind, "n_features": int(x_train.shape[1]),
                   "knn_k": int(params["knn_k"])}, fh)
        fh.write("\n")

    records = [
        PredictionRecord(sid, cell, drug, float(t), float(p))
        for (sid, cell, drug), t, p in zip(val_ids, y_val, val_pred)
    ]
    write_predictions(records, out / VAL_PREDICTIONS)
    write_scores(compute_scores(records), out / VAL_SCORES)


def baseline_infer(params) -> None:
    model_dir = Path(params["model_dir"])
    test_dir = Path(params["test_data_dir"])
    out = Path(params["output_dir"])
    out.mkdir(parents=True, exist_ok=True)

    meta_path = model_dir / "meta.json"
    if not meta_path.is_file():
        raise ContractViolation(f"model dir {model_dir} is incomplete (no meta.json)")
    with open(meta_path, "r", encoding="utf-8") as fh:
        meta = json.load(fh)

    if not test_dir.is_dir() or not (test_dir / "x.npy").is_file():
        raise ContractViolation(f"test data dir {test_dir} is incomplete")
    x_test, y_test, test_ids = _read_partition(test_dir)

    if meta["kind"] == "ridge":
        w = np.load(model_dir / "weights.npy")
        b = float(np.load(model_dir / "scalars.npy")[0])
        pred = x_test @ w + b
    else:
        train_x = np.load(model_dir / "train_x.npy")
        train_y = np.load(model_dir / "train_y.npy")
        pred = _knn_predict(train_x, train_y, x_test, int(meta["knn_k"]))

    records = [
        PredictionRecord(sid, cell, drug, float(t), float(p))
        for (sid, cell, drug), t, p in zip(test_ids, y_test, pred)
    ]
    write_predictions(records, out / TEST_PREDICTIONS)
    write_scores(compute_scores(records), out / TEST_SCORES)


# ---------------------------------------------------------------------------
# Stage entry point
# ---------------------------------------------------------------------------

_SCHEMAS = {
    StageKind.PREPROCESS: PREPROCESS_SCHEMA,
    StageKind.TRAIN: TRAIN_SCHEMA,
    StageKind.INFER: INFER_SCHEMA,
}


def _argv_to_dict(argv) -> dict[str, str]:
    args: dict[str, str] = {}
    i = 0
    while i < len(argv):
        tok = argv[i]
        if not tok.startswith("--"):
            raise CsabenchError(f"expected a --flag, got {tok!r}")
        if i + 1 >= len(argv):
            raise CsabenchError(f"flag {tok} is missing a value")
        args[tok[2:]] = argv[i + 1]
        i += 2
    return args


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if len(argv) >= 1 and argv[0] in ("-h", "--help"):
        print(_usage())
        return 0
    if len(argv) < 2 or argv[0] not in ("ridge", "knn"):
        print(_usage(), file=sys.stderr)
        return 2
    kind, stage_name = argv[0], argv[1]
    try:
        stage = StageKind(stage_name)
    except ValueError:
        print(f"unknown stage {stage_name!r}\n{_usage()}", file=sys.stderr)
        return 2

    try:
        cli = _argv_to_dict(argv[2:])
        config = cli.pop("config", None)
        params = resolve_params(_SCHEMAS[stage], config, cli, stage.value)
        if stage is StageKind.PREPROCESS:
            baseline_preprocess(params)
        elif stage is StageKind.TRAIN:
            baseline_train(params, kind)
        else:
            baseline_infer(params)
    except (CsabenchError, OSError, KeyError) as exc:
        print(f"baseline-{kind} {stage_name}: {exc}", file=sys.stderr)
        return 1
    return 0


def _usage() -> str:
    parts = ["usage: python -m csabench.baseline {ridge|knn} {preprocess|train|infer} [flags]"]
    for stage, schema in _SCHEMAS.items():
        parts.append(f"\n{stage.value} flags:\n{schema_help(schema)}")
    return "\n".join(parts)


if __name__ == "__main__":
    sys.exit(main())
