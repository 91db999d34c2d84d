"""On-disk benchmark data model: response tables, feature tables, splits.

A benchmark directory holds one subdirectory per dataset plus an index:

    <root>/benchmark.json
    <root>/<dataset>/response.csv
    <root>/<dataset>/features/<entity>_<kind>.csv
    <root>/<dataset>/splits/<dataset>_split_<n>_<train|val|test>.txt

Response rows are addressed by 0-based file order; split files contain one
decimal row index per line, so the row order of response.csv is a contract.
Loaders are read-only and safe to call concurrently; writers take a lock
file for exclusive directory access.
"""

from __future__ import annotations

import csv
import json
import math
import os
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import (
    AllRowsRejected,
    DuplicatePairWithinDataset,
    EmptyPartition,
    EmptyTable,
    IndexOutOfRange,
    MissingColumn,
    SchemaMismatch,
    TooSmall,
    UnknownEntity,
)
from .rng import SplitMix64, fisher_yates

SPLIT_PARTS = ("train", "val", "test")


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass
class DatasetDescriptor:
    name: str
    response_path: str
    omics_paths: dict[str, str]
    drug_feature_paths: dict[str, str]
    n_samples: int

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "response_path": self.response_path,
            "omics_paths": self.omics_paths,
            "drug_feature_paths": self.drug_feature_paths,
            "n_samples": self.n_samples,
        }


@dataclass
class ResponseTable:
    """Response rows in file order; the row index is the split-file key."""

    cell_ids: list[str]
    drug_ids: list[str]
    auc: NDArray

    @property
    def n_samples(self) -> int:
        return len(self.cell_ids)


@dataclass
class FeatureTable:
    entity_kind: str  # "cell" | "drug"
    feature_kind: str
    ids: list[str]
    matrix: NDArray
    feature_names: list[str]
    rejected: list[str] = field(default_factory=list)


@dataclass
class SplitSet:
    """One {train, val, test} partition of a dataset's row indices."""

    split_index: int
    train_idx: list[int]
    val_idx: list[int]
    test_idx: list[int]

    def validate(self, n_samples: int) -> None:
        parts = (self.train_idx, self.val_idx, self.test_idx)
        sets = [set(p) for p in parts]
        if any(len(s) != len(p) for s, p in zip(sets, parts)):
            raise SchemaMismatch("duplicate index within a partition")
        if sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2]:
            raise SchemaMismatch("split partitions overlap")
        union = sets[0] | sets[1] | sets[2]
        if union != set(range(n_samples)):
            raise SchemaMismatch("split does not cover exactly [0, n_samples)")
        for part, prop in zip(parts, (0.8, 0.1, 0.1)):
            if abs(len(part) - prop * n_samples) > 1:
                raise SchemaMismatch(
                    f"partition size {len(part)} deviates from "
                    f"{prop * n_samples} by more than 1"
                )


@dataclass(frozen=True)
class FeatureSelection:
    """Which feature kinds a model consumes, in concatenation order."""

    cell_kinds: tuple[str, ...]
    drug_kinds: tuple[str, ...]


# ---------------------------------------------------------------------------
# Loaders
# ---------------------------------------------------------------------------

def load_response_table(path) -> ResponseTable:
    """Load response.csv; row order is preserved (it addresses splits).

    Duplicate (cell_id, drug_id) pairs are an error: split indices address
    rows, so duplicates would create silent train/test leakage.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MissingColumn(f"{path}: empty file") from None
        header = [c.strip() for c in header]
        for col in ("cell_id", "drug_id", "auc"):
            if col not in header:
                raise MissingColumn(f"{path}: missing column {col!r}")
        ci, di, ai = header.index("cell_id"), header.index("drug_id"), header.index("auc")

        cells: list[str] = []
        drugs: list[str] = []
        aucs: list[float] = []
        seen: set[tuple[str, str]] = set()
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            cell, drug = row[ci].strip(), row[di].strip()
            key = (cell, drug)
            if key in seen:
                raise DuplicatePairWithinDataset(f"{path}: duplicate pair {key}")
            seen.add(key)
            cells.append(cell)
            drugs.append(drug)
            aucs.append(float(row[ai]))
    return ResponseTable(cells, drugs, np.asarray(aucs, dtype=np.float64))


def load_feature_table(path, entity_kind: str, feature_kind: str) -> FeatureTable:
    """Load a feature CSV: first column is the entity id, rest numeric.

    Rows with non-numeric or non-finite entries (or duplicate ids) are
    rejected and reported, not fatal. feature_kind of the form
    ``ecfp-<n>`` additionally pins the column count.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyTable(f"{path}: empty file") from None
        feature_names = [c.strip() for c in header[1:]]
        if not feature_names:
            raise EmptyTable(f"{path}: no feature columns")

        if feature_kind.startswith("ecfp-"):
            declared = feature_kind.split("-", 1)[1]
            if declared.isdigit() and len(feature_names) != int(declared):
                raise SchemaMismatch(
                    f"{path}: feature kind {feature_kind} requires {declared} columns, "
                    f"found {len(feature_names)}"
                )

        ids: list[str] = []
        rows: list[list[float]] = []
        rejected: list[str] = []
        seen: set[str] = set()
        n_rows = 0
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            n_rows += 1
            eid = row[0].strip()
            if eid in seen:
                rejected.append(f"line {lineno}: duplicate id {eid!r}")
                continue
            if len(row) != len(header):
                rejected.append(f"line {lineno}: expected {len(header)} fields")
                continue
            try:
                vals = [float(c) for c in row[1:]]
            except ValueError:
                rejected.append(f"line {lineno}: non-numeric entry")
                continue
            if not all(math.isfinite(v) for v in vals):
                rejected.append(f"line {lineno}: non-finite entry")
                continue
            seen.add(eid)
            ids.append(eid)
            rows.append(vals)

    if n_rows == 0:
        raise EmptyTable(f"{path}: no data rows")
    if not rows:
        raise AllRowsRejected(f"{path}: all {n_rows} rows rejected")
    return FeatureTable(
        entity_kind=entity_kind,
        feature_kind=feature_kind,
        ids=ids,
        matrix=np.asarray(rows, dtype=np.float64),
        feature_names=feature_names,
        rejected=rejected,
    )


def write_benchmark_index(root, descriptors: Sequence[DatasetDescriptor]) -> None:
    index = {"datasets": [d.to_json_dict() for d in descriptors]}
    with open(Path(root) / "benchmark.json", "w", encoding="utf-8") as fh:
        json.dump(index, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_benchmark_index(root) -> list[DatasetDescriptor]:
    path = Path(root) / "benchmark.json"
    with open(path, "r", encoding="utf-8") as fh:
        index = json.load(fh)
    return [
        DatasetDescriptor(
            name=d["name"],
            response_path=d["response_path"],
            omics_paths=dict(d["omics_paths"]),
            drug_feature_paths=dict(d["drug_feature_paths"]),
            n_samples=int(d["n_samples"]),
        )
        for d in index["datasets"]
    ]


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------

N_FOLDS = 10


def generate_splits(n_samples: int, n_splits: int = 10, seed: int = 0) -> list[SplitSet]:
    """Generate n_splits reproducible {train, val, test} splits.

    One Fisher-Yates shuffle (SplitMix64, so regeneration is byte-identical
    across platforms) is cut into 10 balanced contiguous folds; split n
    takes test = fold n, val = fold (n + 1) mod 10, train = the remaining
    eight folds. Every split therefore lands within one sample of the
    (0.8, 0.1, 0.1) proportions regardless of how many splits are emitted.
    """
    if not 1 <= n_splits <= N_FOLDS:
        raise TooSmall(f"n_splits must be in [1, {N_FOLDS}], got {n_splits}")
    if n_samples < max(2 * n_splits, N_FOLDS):
        raise TooSmall(
            f"n_samples={n_samples} < {max(2 * n_splits, N_FOLDS)} required "
            f"for {n_splits} splits over {N_FOLDS} folds"
        )
    perm = fisher_yates(n_samples, SplitMix64(seed))
    bounds = [n_samples * k // N_FOLDS for k in range(N_FOLDS + 1)]
    folds = [perm[bounds[k]:bounds[k + 1]] for k in range(N_FOLDS)]

    splits = []
    for n in range(n_splits):
        test = folds[n]
        val = folds[(n + 1) % N_FOLDS]
        train: list[int] = []
        for k in range(N_FOLDS):
            if k != n and k != (n + 1) % N_FOLDS:
                train.extend(folds[k])
        splits.append(SplitSet(n, train, val, test))
    return splits


def split_file_name(dataset: str, n: int, part: str) -> str:
    return f"{dataset}_split_{n}_{part}.txt"


@contextmanager
def _dir_lock(directory: Path):
    """Exclusive advisory lock for writers of a benchmark directory."""
    directory.mkdir(parents=True, exist_ok=True)
    lock = directory / ".lock"
    fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    try:
        yield
    finally:
        os.close(fd)
        os.unlink(lock)


def write_split_files(splits: Sequence[SplitSet], directory, dataset: str) -> None:
    """Write each partition as a text file of 0-based row indices."""
    directory = Path(directory)
    with _dir_lock(directory):
        for s in splits:
            for part in SPLIT_PARTS:
                idx = getattr(s, f"{part}_idx")
                path = directory / split_file_name(dataset, s.split_index, part)
                with open(path, "w", encoding="utf-8") as fh:
                    fh.writelines(f"{i}\n" for i in idx)


def read_split_files(directory, dataset: str, n: int, n_samples: int | None = None) -> SplitSet:
    """Read one split back; validates indices against n_samples if given."""
    directory = Path(directory)
    parts: dict[str, list[int]] = {}
    for part in SPLIT_PARTS:
        path = directory / split_file_name(dataset, n, part)
        with open(path, "r", encoding="utf-8") as fh:
            idx = [int(line) for line in fh if line.strip()]
        if not idx:
            raise EmptyPartition(f"{path}: empty partition")
        if n_samples is not None:
            bad = [i for i in idx if not 0 <= i < n_samples]
            if bad:
                raise IndexOutOfRange(f"{path}: indices {bad[:5]} outside [0, {n_samples})")
        parts[part] = idx
    return SplitSet(n, parts["train"], parts["val"], parts["test"])


# ---------------------------------------------------------------------------
# Feature joining
# ---------------------------------------------------------------------------

def join_features(
    response: ResponseTable,
    cell_tables: Mapping[str, FeatureTable],
    drug_tables: Mapping[str, FeatureTable],
    selection: FeatureSelection,
    rows: Sequence[int] | None = None,
) -> tuple[NDArray, NDArray, list[str]]:
    """Assemble the design matrix and target vector for response rows.

    Row i is the concatenation of the selected cell feature kinds followed
    by the selected drug feature kinds for response row i; the target is
    auc. Any id missing from a selected table fails fast with the complete
    missing-id lists before anything is trained.
    """
    rows = list(range(response.n_samples)) if rows is None else list(rows)
    cells = [response.cell_ids[i] for i in rows]
    drugs = [response.drug_ids[i] for i in rows]

    missing_cells: set[str] = set()
    missing_drugs: set[str] = set()
    cell_maps = {}
    for kind in selection.cell_kinds:
        table = cell_tables[kind]
        index = {eid: i for i, eid in enumerate(table.ids)}
        cell_maps[kind] = (table, index)
        missing_cells.update(c for c in cells if c not in index)
    drug_maps = {}
    for kind in selection.drug_kinds:
        table = drug_tables[kind]
        index = {eid: i for i, eid in enumerate(table.ids)}
        drug_maps[kind] = (table, index)
        missing_drugs.update(d for d in drugs if d not in index)
    if missing_cells or missing_drugs:
        raise UnknownEntity(missing_cells, missing_drugs)

    blocks: list[NDArray] = []
    names: list[str] = []
    for kind in selection.cell_kinds:
        table, index = cell_maps[kind]
        blocks.append(table.matrix[[index[c] for c in cells]])
        names.extend(f"cell:{kind}:{f}" for f in table.feature_names)
    for kind in selection.drug_kinds:
        table, index = drug_maps[kind]
        blocks.append(table.matrix[[index[d] for d in drugs]])
        names.extend(f"drug:{kind}:{f}" for f in table.feature_names)

    X = np.hstack(blocks) if blocks else np.empty((len(cells), 0))
    y = response.auc[np.asarray(rows, dtype=np.int64)]
    return X, y, names


# ---------------------------------------------------------------------------
# Synthetic benchmarks
# ---------------------------------------------------------------------------

@dataclass
class SynthSpec:
    """Desk-scale synthetic benchmark description.

    Every dataset shares one planted linear signal through a sigmoid;
    per-dataset response shifts control how far apart the datasets sit,
    so cross-dataset difficulty is tunable.
    """

    n_datasets: int
    sizes: list[int]
    n_cell_features: int
    n_drug_features: int
    shift_amplitudes: list[float]
    noise_sd: float = 0.0
    seed: int = 0
    n_splits: int = 0
    split_seed: int = 0

    def __post_init__(self):
        if self.n_datasets <= 0 or self.n_cell_features <= 0 or self.n_drug_features <= 0:
            raise ValueError("spec dimensions must be positive")
        if len(self.sizes) != self.n_datasets or len(self.shift_amplitudes) != self.n_datasets:
            raise ValueError("sizes and shift_amplitudes must have n_datasets entries")
        if any(s <= 0 for s in self.sizes):
            raise ValueError("sizes must be positive")

    @classmethod
    def from_json(cls, path) -> "SynthSpec":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(**json.load(fh))


def _sigmoid(z: NDArray) -> NDArray:
    return 1.0 / (1.0 + np.exp(-z))


def _write_feature_csv(path, ids, matrix, prefix):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("id," + ",".join(f"{prefix}{j}" for j in range(matrix.shape[1])) + "\n")
        for eid, row in zip(ids, matrix):
            fh.write(eid + "," + ",".join(f"{v:.17g}" for v in row) + "\n")


def generate_synthetic_benchmark(spec: SynthSpec, out_dir) -> list[DatasetDescriptor]:
    """Write a synthetic benchmark directory and return its descriptors.

    auc = clip(sigmoid(w·x_cell + v·x_drug) + dataset_shift + noise, 0, 1)
    with weights w, v shared across datasets. Ground truth (weights, shifts,
    seed) lands in synth_truth.json for oracle checks.
    """
    out = Path(out_dir)
    rng = np.random.default_rng(spec.seed)
    scale = 0.8 / math.sqrt(spec.n_cell_features + spec.n_drug_features)
    w = rng.normal(0.0, 1.0, spec.n_cell_features) * scale
    v = rng.normal(0.0, 1.0, spec.n_drug_features) * scale

    descriptors = []
    with _dir_lock(out):
        for i in range(spec.n_datasets):
            name = f"synth{i}"
            size = spec.sizes[i]
            n_cells = n_drugs = max(4, math.ceil(math.sqrt(2.0 * size)))
            cell_ids = [f"C{j:04d}" for j in range(n_cells)]
            drug_ids = [f"D{j:04d}" for j in range(n_drugs)]
            xc = rng.normal(0.0, 1.0, (n_cells, spec.n_cell_features))
            xd = rng.normal(0.0, 1.0, (n_drugs, spec.n_drug_features))

            grid = rng.permutation(n_cells * n_drugs)[:size]
            ci, di = grid // n_drugs, grid % n_drugs
            z = xc[ci] @ w + xd[di] @ v
            auc = _sigmoid(z) + spec.shift_amplitudes[i]
            if spec.noise_sd > 0:
                auc = auc + rng.normal(0.0, spec.noise_sd, size)
            auc = np.clip(auc, 0.0, 1.0)

            ds_dir = out / name
            (ds_dir / "features").mkdir(parents=True, exist_ok=True)
            (ds_dir / "splits").mkdir(parents=True, exist_ok=True)
            with open(ds_dir / "response.csv", "w", encoding="utf-8", newline="") as fh:
                fh.write("cell_id,drug_id,auc\n")
                for c, d, a in zip(ci, di, auc):
                    fh.write(f"{cell_ids[c]},{drug_ids[d]},{a:.17g}\n")
            _write_feature_csv(ds_dir / "features" / "cell_synth.csv", cell_ids, xc, "g")
            _write_feature_csv(ds_dir / "features" / "drug_synth.csv", drug_ids, xd, "m")

            if spec.n_splits > 0:
                splits = generate_splits(size, spec.n_splits, spec.split_seed + i)
                write_split_files(splits, ds_dir / "splits", name)

            descriptors.append(
                DatasetDescriptor(
                    name=name,
                    response_path=f"{name}/response.csv",
                    omics_paths={"synth": f"{name}/features/cell_synth.csv"},
                    drug_feature_paths={"synth": f"{name}/features/drug_synth.csv"},
                    n_samples=size,
                )
            )

        write_benchmark_index(out, descriptors)
        truth = {
            "seed": spec.seed,
            "cell_weights": w.tolist(),
            "drug_weights": v.tolist(),
            "shift_amplitudes": list(spec.shift_amplitudes),
            "noise_sd": spec.noise_sd,
        }
        with open(out / "synth_truth.json", "w", encoding="utf-8") as fh:
            json.dump(truth, fh, indent=2)
            fh.write("\n")
    return descriptors
