"""The standardized three-stage model interface.

Every model is three executables — preprocess, train, infer — launched as
child processes with a canonical flag set and judged by the artifacts they
leave behind:

    preprocess --benchmark_root R --source_dataset S --target_dataset T
               --split_index N --split_dir D --output_dir O
               [--config F] [--supplementary_dir P] [--device DEV]
        -> O/train/  O/val/  O/test/
    train      --input_dir P --output_dir O [--config F] [--device DEV]
        -> O/model/  O/val_y_data_predicted.csv  O/val_scores.json
    infer      --input_dir P --model_dir M --test_data_dir T --output_dir O
               [--config F] [--device DEV]
        -> O/test_y_data_predicted.csv  O/test_scores.json

Parameters resolve across three tiers with fixed precedence: command line
over config file over declared defaults. Config files are INI with
sections [preprocess] [train] [infer] plus [model] for keys shared by all
stages (a stage section wins over [model] for the same key).

The stage contract is the harness's external interface; everything in this
module is stateless and safe to use concurrently as long as workdirs are
disjoint.
"""

from __future__ import annotations

import configparser
import json
import math
import os
import signal
import subprocess
import sys
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    ContractViolation,
    DuplicateSampleId,
    MissingRequired,
    SchemaMismatch,
    TypeMismatch,
    UnknownKey,
    UnknownModel,
)


class StageKind(str, Enum):
    PREPROCESS = "preprocess"
    TRAIN = "train"
    INFER = "infer"


STAGES = (StageKind.PREPROCESS, StageKind.TRAIN, StageKind.INFER)

VAL_PREDICTIONS = "val_y_data_predicted.csv"
VAL_SCORES = "val_scores.json"
TEST_PREDICTIONS = "test_y_data_predicted.csv"
TEST_SCORES = "test_scores.json"
MODEL_DIR = "model"

DEFAULT_STAGE_TIMEOUT_S = 3600.0
DIAGNOSTICS_LIMIT = 16384

# Child stage processes see only these variables (plus every CSABENCH_*);
# anything else is scrubbed so runs do not depend on ambient shell state.
ENV_ALLOWLIST = (
    "PATH",
    "HOME",
    "LANG",
    "LC_ALL",
    "LC_CTYPE",
    "TMPDIR",
    "TEMP",
    "TMP",
    "PYTHONPATH",
    "VIRTUAL_ENV",
)


# ---------------------------------------------------------------------------
# Tiered parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParamField:
    """One declared stage parameter."""

    name: str
    type: type
    default: Any = None
    required: bool = False
    help: str = ""


PROVENANCE_DEFAULT = "default"
PROVENANCE_CONFIG = "config-file"
PROVENANCE_CLI = "command-line"


@dataclass
class ParamSet:
    values: dict[str, Any]
    provenance: dict[str, str]

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def get(self, key: str, default: Any = None) -> Any:
        return self.values.get(key, default)


def _coerce(fieldspec: ParamField, raw: Any) -> Any:
    if raw is None:
        return None
    if isinstance(raw, fieldspec.type) and not (
        fieldspec.type is not bool and isinstance(raw, bool)
    ):
        return raw
    text = str(raw).strip()
    try:
        if fieldspec.type is bool:
            low = text.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(low)
        return fieldspec.type(text)
    except (TypeError, ValueError):
        raise TypeMismatch(
            f"parameter {fieldspec.name!r}: cannot read {raw!r} as {fieldspec.type.__name__}"
        ) from None


def _read_config_section(path, stage: str) -> dict[str, str]:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keys are case-sensitive
    with open(path, "r", encoding="utf-8") as fh:
        parser.read_file(fh)
    merged: dict[str, str] = {}
    for section in ("model", stage):
        if parser.has_section(section):
            merged.update(parser[section])
    return merged


def resolve_params(
    schema: Sequence[ParamField],
    config_file: str | os.PathLike | None = None,
    cli_args: Mapping[str, Any] | None = None,
    stage: str = "model",
) -> ParamSet:
    """Merge defaults, config file and command line with fixed precedence.

    Unknown keys from either override tier are rejected against the
    declared schema; a required key left unset by every tier raises.
    """
    fields = {f.name: f for f in schema}
    values = {name: f.default for name, f in fields.items()}
    provenance = {name: PROVENANCE_DEFAULT for name in fields}

    if config_file is not None:
        for key, raw in _read_config_section(config_file, stage).items():
            if key not in fields:
                raise UnknownKey(f"config file sets undeclared parameter {key!r}")
            values[key] = _coerce(fields[key], raw)
            provenance[key] = PROVENANCE_CONFIG

    for key, raw in (cli_args or {}).items():
        if key not in fields:
            raise UnknownKey(f"command line sets undeclared parameter {key!r}")
        values[key] = _coerce(fields[key], raw)
        provenance[key] = PROVENANCE_CLI

    for name, f in fields.items():
        if f.required and values[name] is None:
            raise MissingRequired(f"parameter {name!r} must be provided")
    return ParamSet(values, provenance)


def schema_help(schema: Sequence[ParamField]) -> str:
    """Render user-facing help text from a declared schema."""
    lines = []
    for f in schema:
        d = "" if f.default is None else f" (default: {f.default})"
        req = " [required]" if f.required else ""
        lines.append(f"  --{f.name} <{f.type.__name__}>{req}  {f.help}{d}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Predictions and scores
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PredictionRecord:
    sample_id: str
    cell_id: str
    drug_id: str
    auc_true: float
    auc_pred: float


PREDICTION_COLUMNS = ("sample_id", "cell_id", "drug_id", "auc_true", "auc_pred")


def write_predictions(records: Iterable[PredictionRecord], path) -> None:
    """Serialize predictions with 17 significant digits (exact round trip)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(PREDICTION_COLUMNS) + "\n")
        for r in records:
            fh.write(f"{r.sample_id},{r.cell_id},{r.drug_id},{r.auc_true:.17g},{r.auc_pred:.17g}\n")


def read_predictions(path) -> list[PredictionRecord]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        header = fh.readline().rstrip("\r\n").split(",")
        if list(header) != list(PREDICTION_COLUMNS):
            raise SchemaMismatch(f"{path}: header {header} != {list(PREDICTION_COLUMNS)}")
        records = []
        seen: set[str] = set()
        for line in fh:
            if not line.strip():
                continue
            parts = line.rstrip("\r\n").split(",")
            if len(parts) != 5:
                raise SchemaMismatch(f"{path}: bad row {line!r}")
            sid = parts[0]
            if sid in seen:
                raise DuplicateSampleId(f"{path}: duplicate sample_id {sid!r}")
            seen.add(sid)
            auc_true = float(parts[3])
            if not math.isfinite(auc_true) or not 0.0 <= auc_true <= 1.0:
                raise SchemaMismatch(f"{path}: auc_true {auc_true} outside [0, 1]")
            records.append(PredictionRecord(sid, parts[1], parts[2], auc_true, float(parts[4])))
    return records


@dataclass
class ScoreSet:
    r2: float | None
    mse: float | None
    rmse: float | None
    pearson_r: float | None
    spearman_rho: float | None
    n: int
    null_reasons: dict[str, str] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        out: dict[str, Any] = {
            "r2": self.r2,
            "mse": self.mse,
            "rmse": self.rmse,
            "pearson_r": self.pearson_r,
            "spearman_rho": self.spearman_rho,
            "n": self.n,
        }
        if self.null_reasons:
            out["null_reasons"] = self.null_reasons
        return out


def _average_ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.size, dtype=np.float64)
    sx = x[order]
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _pearson(a: np.ndarray, b: np.ndarray) -> float | None:
    if np.all(a == a[0]) or np.all(b == b[0]):
        return None
    da, db = a - a.mean(), b - b.mean()
    na, nb = float(np.sqrt(np.sum(da * da))), float(np.sqrt(np.sum(db * db)))
    if na == 0.0 or nb == 0.0:
        return None
    return float(np.sum(da * db) / (na * nb))


def compute_scores(records: Sequence[PredictionRecord]) -> ScoreSet:
    """Standard regression scores over a prediction set.

    Records are sorted by sample_id first, so the result is invariant to
    input order. Degenerate inputs null the affected metrics with a reason
    instead of emitting NaN.
    """
    if len(records) < 2:
        raise ValueError("need at least 2 prediction records")
    ordered = sorted(records, key=lambda r: r.sample_id)
    y = np.array([r.auc_true for r in ordered], dtype=np.float64)
    p = np.array([r.auc_pred for r in ordered], dtype=np.float64)
    n = y.size

    if not np.all(np.isfinite(p)):
        reason = "non-finite-predictions"
        return ScoreSet(None, None, None, None, None, n,
                        {m: reason for m in ("r2", "mse", "rmse", "pearson_r", "spearman_rho")})

    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        reason = "degenerate-variance"
        return ScoreSet(None, None, None, None, None, n,
                        {m: reason for m in ("r2", "mse", "rmse", "pearson_r", "spearman_rho")})

    resid = y - p
    mse = float(np.sum(resid * resid)) / n
    rmse = math.sqrt(mse)
    r2 = 1.0 - float(np.sum(resid * resid)) / ss_tot

    reasons: dict[str, str] = {}
    pearson = _pearson(y, p)
    if pearson is None:
        reasons["pearson_r"] = "constant-predictions"
    spearman = _pearson(_average_ranks(y), _average_ranks(p))
    if spearman is None:
        reasons["spearman_rho"] = "constant-predictions"
    return ScoreSet(r2, mse, rmse, pearson, spearman, n, reasons)


def write_scores(scores: ScoreSet, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scores.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_scores(path) -> dict:
    """Read a scores JSON; unknown extra keys are preserved."""
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    if not isinstance(obj, dict):
        raise SchemaMismatch(f"{path}: scores JSON must be an object")
    return obj


# ---------------------------------------------------------------------------
# Model specs and stage invocation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelSpec:
    """A model's three stage executables (argv prefixes)."""

    name: str
    stages: dict[StageKind, tuple[str, ...]]

    @classmethod
    def resolve(cls, spec: str) -> "ModelSpec":
        """Resolve a builtin model name or a JSON manifest path."""
        if spec in _BUILTIN_MODELS:
            return _BUILTIN_MODELS[spec]
        path = Path(spec)
        if not path.exists():
            raise UnknownModel(f"{spec!r} is neither a builtin model nor a manifest file")
        with open(path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
        try:
            name = manifest["name"]
            raw_stages = manifest["stages"]
            stages = {}
            for kind in STAGES:
                argv = [str(tok) for tok in raw_stages[kind.value]]
                argv = [_resolve_token(tok, path.parent) for tok in argv]
                stages[kind] = tuple(argv)
        except KeyError as exc:
            raise UnknownModel(f"{spec}: manifest missing {exc}") from None
        return cls(name=name, stages=stages)


def _resolve_token(tok: str, base: Path) -> str:
    if "/" in tok and not os.path.isabs(tok) and (base / tok).exists():
        return str((base / tok).resolve())
    return tok


def _builtin(name: str, kind: str) -> ModelSpec:
    return ModelSpec(
        name=name,
        stages={
            stage: (sys.executable, "-m", "csabench.baseline", kind, stage.value)
            for stage in STAGES
        },
    )


_BUILTIN_MODELS = {
    "baseline-ridge": _builtin("baseline-ridge", "ridge"),
    "baseline-knn": _builtin("baseline-knn", "knn"),
}


@dataclass
class StageOutcome:
    stage: StageKind
    exit_status: int | None
    wall_time_s: float
    artifacts: dict[str, str]
    diagnostics: str
    error_class: str | None

    @property
    def success(self) -> bool:
        return self.error_class is None


# Flags are emitted in this fixed order for reproducible command lines.
_FLAG_ORDER = (
    "input_dir",
    "output_dir",
    "config",
    "benchmark_root",
    "source_dataset",
    "target_dataset",
    "split_index",
    "split_dir",
    "model_dir",
    "test_data_dir",
    "supplementary_dir",
    "device",
)


def stage_argv(spec: ModelSpec, stage: StageKind, params: Mapping[str, Any]) -> list[str]:
    argv = list(spec.stages[stage])
    keys = [k for k in _FLAG_ORDER if k in params]
    keys += sorted(k for k in params if k not in _FLAG_ORDER)
    for key in keys:
        value = params[key]
        if value is None:
            continue
        argv.extend((f"--{key}", str(value)))
    return argv


def scrub_environment(parent_env: Mapping[str, str] | None = None) -> dict[str, str]:
    env = dict(os.environ if parent_env is None else parent_env)
    return {
        k: v
        for k, v in env.items()
        if k in ENV_ALLOWLIST or k.startswith("CSABENCH_")
    }


def validate_outputs(stage: StageKind, output_dir) -> dict[str, str]:
    """Check the stage's required artifact set; raises ContractViolation."""
    out = Path(output_dir)
    artifacts: dict[str, str] = {}
    if stage is StageKind.PREPROCESS:
        for part in ("train", "val", "test"):
            d = out / part
            if not d.is_dir() or not any(d.iterdir()):
                raise ContractViolation(f"preprocess must produce non-empty dir {d}")
            artifacts[f"{part}_data"] = str(d)
        return artifacts
    if stage is StageKind.TRAIN:
        model = out / MODEL_DIR
        if not model.is_dir() or not any(model.iterdir()):
            raise ContractViolation(f"train must produce non-empty dir {model}")
        artifacts["model"] = str(model)
        checks = ((VAL_PREDICTIONS, read_predictions), (VAL_SCORES, read_scores))
    else:
        checks = ((TEST_PREDICTIONS, read_predictions), (TEST_SCORES, read_scores))
    for fname, parse in checks:
        fpath = out / fname
        if not fpath.is_file():
            raise ContractViolation(f"{stage.value} did not produce {fname}")
        try:
            parse(fpath)
        except Exception as exc:
            raise ContractViolation(f"{fpath}: {exc}") from exc
        artifacts[fname] = str(fpath)
    return artifacts


def invoke_stage(
    spec: ModelSpec,
    stage: StageKind,
    params: Mapping[str, Any],
    workdir,
    timeout_s: float = DEFAULT_STAGE_TIMEOUT_S,
) -> StageOutcome:
    """Launch one stage as a child process and validate its artifacts.

    The outcome distinguishes LaunchFailure, Timeout, StageFailed (nonzero
    exit) and ContractViolation (exit 0 but artifacts missing/invalid); it
    never raises for child misbehavior.
    """
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    argv = stage_argv(spec, stage, params)
    started = time.monotonic()
    try:
        proc = subprocess.Popen(
            argv,
            cwd=workdir,
            stdout=subprocess.PIPE,
            stderr=subprocess.STDOUT,
            env=scrub_environment(),
            start_new_session=True,
        )
    except OSError as exc:
        return StageOutcome(stage, None, 0.0, {}, f"launch failed: {exc}", "LaunchFailure")

    try:
        output, _ = proc.communicate(timeout=timeout_s)
    except subprocess.TimeoutExpired:
        try:
            os.killpg(proc.pid, signal.SIGKILL)
        except ProcessLookupError:
            pass
        output, _ = proc.communicate()
        diag = _bounded(output)
        return StageOutcome(stage, None, time.monotonic() - started, {}, diag, "Timeout")

    wall = time.monotonic() - started
    diag = _bounded(output)
    if proc.returncode != 0:
        return StageOutcome(stage, proc.returncode, wall, {}, diag, "StageFailed")
    output_dir = params.get("output_dir")
    try:
        artifacts = validate_outputs(stage, output_dir)
    except ContractViolation as exc:
        return StageOutcome(stage, 0, wall, {}, f"{diag}\n{exc}".strip(), "ContractViolation")
    return StageOutcome(stage, 0, wall, artifacts, diag, None)


def _bounded(raw: bytes | None) -> str:
    if not raw:
        return ""
    text = raw.decode("utf-8", errors="replace")
    if len(text) > DIAGNOSTICS_LIMIT:
        return text[-DIAGNOSTICS_LIMIT:]
    return text
