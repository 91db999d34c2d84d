"""Plan and execute the (model x source x target x split) evaluation grid.

The plan is a deterministic task list with explicit dependency edges:

    preprocess(s, t, n)  — source split n's train/val plus the evaluation
                           partition (split test when s == t, the entire
                           target response table when s != t)
    train(s, n)          — depends on preprocess(s, s, n); trained once per
                           source split and reused for every target
    infer(s, t, n)       — depends on train(s, n) and preprocess(s, t, n)

Training once per (source, split) is result-identical to the per-target
formulation and d-times cheaper; ``reuse_train=False`` restores the strict
per-(s, t, n) layout.

Execution is a single scheduler thread owning the ready queue and the
manifest, with a bounded worker pool running stage processes. The manifest
is an append-only JSONL file flushed after every state change, so a killed
run resumes by replay: tasks whose latest record is ``done`` with an
unchanged input fingerprint are skipped, everything else re-runs.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from . import data as bdata
from .contract import (
    DEFAULT_STAGE_TIMEOUT_S,
    ModelSpec,
    StageKind,
    invoke_stage,
    stage_argv,
)
from .errors import CsabenchError, MissingSplits

MANIFEST_NAME = "manifest.jsonl"
RUN_META_NAME = "run_meta.json"


# ---------------------------------------------------------------------------
# Plan
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PipelineTask:
    task_id: str
    model: str
    stage: StageKind
    source: str
    target: str
    split: int
    dependencies: tuple[str, ...]
    workdir: str  # relative to the run directory

    @staticmethod
    def make_id(model: str, source: str, target: str, split: int, stage: StageKind) -> str:
        return f"{model}:{source}:{target}:{split}:{stage.value}"


@dataclass
class RunPlan:
    benchmark_root: str
    models: dict[str, ModelSpec]
    datasets: list[str]
    n_samples: dict[str, int]
    n_splits: int
    slots: int
    reuse_train: bool
    tasks: list[PipelineTask]
    config_file: str | None = None
    device: str | None = None
    stage_timeout_s: float = DEFAULT_STAGE_TIMEOUT_S

    def task_map(self) -> dict[str, PipelineTask]:
        return {t.task_id: t for t in self.tasks}


def _pair_dir(model: str, s: str, t: str, n: int) -> str:
    return f"{model}/{s}-{t}/split_{n}"


def build_plan(
    benchmark_root,
    model_specs: list[str],
    n_splits: int,
    slots: int = 1,
    reuse_train: bool = True,
    config_file: str | None = None,
    device: str | None = None,
    stage_timeout_s: float = DEFAULT_STAGE_TIMEOUT_S,
) -> RunPlan:
    """Build the deterministic task list for a benchmark and model set.

    Validates that every dataset has the split files the plan will consume;
    model specs resolve builtin names or manifest paths.
    """
    root = Path(benchmark_root).resolve()
    descriptors = bdata.load_benchmark_index(root)
    datasets = [d.name for d in descriptors]
    n_samples = {d.name: d.n_samples for d in descriptors}

    for d in descriptors:
        split_dir = root / d.name / "splits"
        for n in range(n_splits):
            for part in bdata.SPLIT_PARTS:
                f = split_dir / bdata.split_file_name(d.name, n, part)
                if not f.is_file():
                    raise MissingSplits(f"{d.name}: missing split file {f}")

    models = {}
    for spec_str in model_specs:
        spec = ModelSpec.resolve(spec_str)
        models[spec.name] = spec

    tasks: list[PipelineTask] = []
    for model in models:
        for s in datasets:
            for t in datasets:
                for n in range(n_splits):
                    pre_id = PipelineTask.make_id(model, s, t, n, StageKind.PREPROCESS)
                    tasks.append(
                        PipelineTask(
                            pre_id, model, StageKind.PREPROCESS, s, t, n, (),
                            f"{_pair_dir(model, s, t, n)}/preprocess",
                        )
                    )
                    if reuse_train:
                        train_id = PipelineTask.make_id(model, s, s, n, StageKind.TRAIN)
                        if s == t:
                            tasks.append(
                                PipelineTask(
                                    train_id, model, StageKind.TRAIN, s, s, n, (pre_id,),
                                    f"{_pair_dir(model, s, s, n)}/train",
                                )
                            )
                    else:
                        train_id = PipelineTask.make_id(model, s, t, n, StageKind.TRAIN)
                        tasks.append(
                            PipelineTask(
                                train_id, model, StageKind.TRAIN, s, t, n, (pre_id,),
                                f"{_pair_dir(model, s, t, n)}/train",
                            )
                        )
                    infer_id = PipelineTask.make_id(model, s, t, n, StageKind.INFER)
                    tasks.append(
                        PipelineTask(
                            infer_id, model, StageKind.INFER, s, t, n, (pre_id, train_id),
                            f"{_pair_dir(model, s, t, n)}/infer",
                        )
                    )

    return RunPlan(
        benchmark_root=str(root),
        models=models,
        datasets=datasets,
        n_samples=n_samples,
        n_splits=n_splits,
        slots=slots,
        reuse_train=reuse_train,
        tasks=tasks,
        config_file=str(Path(config_file).resolve()) if config_file else None,
        device=device,
        stage_timeout_s=stage_timeout_s,
    )


def compose_task_io(plan: RunPlan, task: PipelineTask, rundir) -> dict[str, Any]:
    """Canonical stage flags for one task.

    Within-dataset preprocess consumes the source split's {train, val,
    test}; cross-dataset preprocess consumes the source split's {train,
    val} and evaluates on the whole target table, with feature transforms
    fit on source training data only (so target x may differ per split
    while target y never does).
    """
    rundir = Path(rundir)
    root = Path(plan.benchmark_root)
    pair = rundir / _pair_dir(task.model, task.source, task.target, task.split)
    params: dict[str, Any] = {"output_dir": str(rundir / task.workdir)}
    if plan.config_file:
        params["config"] = str(plan.config_file)
    if plan.device:
        params["device"] = plan.device

    if task.stage is StageKind.PREPROCESS:
        params.update(
            benchmark_root=str(root),
            source_dataset=task.source,
            target_dataset=task.target,
            split_index=task.split,
            split_dir=str(root / task.source / "splits"),
        )
    elif task.stage is StageKind.TRAIN:
        params["input_dir"] = str(pair / "preprocess")
    else:
        train_pair = (
            task.source if plan.reuse_train else task.target
        )
        train_dir = rundir / _pair_dir(task.model, task.source, train_pair, task.split) / "train"
        params.update(
            input_dir=str(pair / "preprocess"),
            model_dir=str(train_dir / "model"),
            test_data_dir=str(pair / "preprocess" / "test"),
        )
    return params


# ---------------------------------------------------------------------------
# Fingerprints
# ---------------------------------------------------------------------------

def _stat_token(path: Path) -> str:
    st = path.stat()
    return f"{path.name}:{st.st_size}:{st.st_mtime_ns}"


def _content_token(path: Path) -> str:
    h = hashlib.blake2b(path.read_bytes(), digest_size=8)
    return f"{path.name}:{h.hexdigest()}"


def task_fingerprint(
    plan: RunPlan, task: PipelineTask, params: Mapping[str, Any],
    dep_fingerprints: Mapping[str, str],
) -> str:
    """64-bit content hash over the task's inputs.

    Preprocess hashes split-file contents plus size/mtime of the benchmark
    data files; downstream stages chain their dependencies' fingerprints,
    so any upstream change invalidates the whole branch.
    """
    root = Path(plan.benchmark_root)
    tokens: list[str] = [task.task_id]
    tokens.extend(stage_argv(plan.models[task.model], task.stage, params))
    if task.stage is StageKind.PREPROCESS:
        for part in bdata.SPLIT_PARTS:
            f = root / task.source / "splits" / bdata.split_file_name(task.source, task.split, part)
            tokens.append(_content_token(f))
        for ds in sorted({task.source, task.target}):
            ds_dir = root / ds
            tokens.append(_stat_token(ds_dir / "response.csv"))
            feat_dir = ds_dir / "features"
            if feat_dir.is_dir():
                for f in sorted(feat_dir.iterdir()):
                    if f.is_file():
                        tokens.append(_stat_token(f))
    if plan.config_file:
        tokens.append(_content_token(Path(plan.config_file)))
    for dep in task.dependencies:
        tokens.append(f"dep:{dep}:{dep_fingerprints[dep]}")
    digest = hashlib.blake2b("\x00".join(tokens).encode("utf-8"), digest_size=8)
    return digest.hexdigest()


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

class RunManifest:
    """Append-only JSONL record of task state changes; recovery = replay."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = None

    def open(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "a", encoding="utf-8")

    def close(self) -> None:
        if self._fh:
            self._fh.close()
            self._fh = None

    def append(self, task_id: str, status: str, fingerprint: str | None = None,
               artifacts: dict | None = None, error: str | None = None,
               detail: str | None = None) -> None:
        record = {"task": task_id, "status": status, "ts": time.time()}
        if fingerprint:
            record["fingerprint"] = fingerprint
        if artifacts:
            record["artifacts"] = artifacts
        if error:
            record["error"] = error
        if detail:
            record["detail"] = detail[-2000:]
        line = json.dumps(record, sort_keys=True)
        self._fh.write(line + "\n")
        self._fh.flush()
        os.fsync(self._fh.fileno())

    @staticmethod
    def replay(path) -> dict[str, dict]:
        """Latest record per task id; tolerates a truncated final line."""
        latest: dict[str, dict] = {}
        p = Path(path)
        if not p.exists():
            return latest
        with open(p, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError:
                    continue  # torn tail write from a killed run
                latest[rec["task"]] = rec
        return latest


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    n_done: int = 0
    n_failed: int = 0
    n_skipped: int = 0
    failures: list[tuple[str, str]] = field(default_factory=list)
    wall_time_s: float = 0.0

    @property
    def ok(self) -> bool:
        return self.n_failed == 0


def write_run_meta(plan: RunPlan, rundir) -> None:
    meta = {
        "benchmark_root": plan.benchmark_root,
        "datasets": plan.datasets,
        "n_samples": plan.n_samples,
        "n_splits": plan.n_splits,
        "models": sorted(plan.models),
        "reuse_train": plan.reuse_train,
    }
    path = Path(rundir) / RUN_META_NAME
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_run_meta(rundir) -> dict:
    with open(Path(rundir) / RUN_META_NAME, "r", encoding="utf-8") as fh:
        return json.load(fh)


def execute(plan: RunPlan, rundir, resume: bool = False) -> RunResult:
    """Run every task to done or failed, bounded by ``plan.slots``.

    A failed task fails only its transitive dependents; independent
    branches keep running. Completed tasks from a previous run in the same
    directory are skipped when resuming iff their input fingerprint is
    unchanged.
    """
    rundir = Path(rundir).resolve()
    manifest_path = rundir / MANIFEST_NAME
    if manifest_path.exists() and not resume:
        raise CsabenchError(
            f"{manifest_path} already exists; pass resume=True (CLI: --resume) to continue it"
        )
    rundir.mkdir(parents=True, exist_ok=True)
    write_run_meta(plan, rundir)

    previous = RunManifest.replay(manifest_path) if resume else {}
    tasks = plan.task_map()
    order = {t.task_id: i for i, t in enumerate(plan.tasks)}

    params: dict[str, dict] = {}
    fingerprints: dict[str, str] = {}
    depth = {StageKind.PREPROCESS: 0, StageKind.TRAIN: 1, StageKind.INFER: 2}
    for task in sorted(plan.tasks, key=lambda t: (depth[t.stage], order[t.task_id])):
        params[task.task_id] = compose_task_io(plan, task, rundir)
        fingerprints[task.task_id] = task_fingerprint(
            plan, task, params[task.task_id], fingerprints
        )

    dependents: dict[str, list[str]] = {tid: [] for tid in tasks}
    blocking: dict[str, int] = {}
    for task in plan.tasks:
        blocking[task.task_id] = len(task.dependencies)
        for dep in task.dependencies:
            dependents[dep].append(task.task_id)

    result = RunResult()
    started = time.monotonic()
    manifest = RunManifest(manifest_path)
    manifest.open()
    state: dict[str, str] = {}

    def settle_done(tid: str, skipped: bool) -> list[str]:
        state[tid] = "done"
        if skipped:
            result.n_skipped += 1
        else:
            result.n_done += 1
        ready = []
        for child in dependents[tid]:
            blocking[child] -= 1
            if blocking[child] == 0:
                ready.append(child)
        return ready

    def settle_failed(tid: str, error: str, detail: str = "", upstream: bool = False) -> None:
        state[tid] = "failed"
        result.n_failed += 1
        result.failures.append((tid, error))
        manifest.append(tid, "failed", fingerprint=fingerprints[tid],
                        error=error, detail=detail)
        for child in dependents[tid]:
            if state.get(child) is None:
                settle_failed(child, "failed-upstream")

    try:
        ready: list[str] = []
        for task in plan.tasks:
            prev = previous.get(task.task_id)
            if (
                prev is not None
                and prev.get("status") == "done"
                and prev.get("fingerprint") == fingerprints[task.task_id]
            ):
                ready.extend(settle_done(task.task_id, skipped=True))
        for task in plan.tasks:
            if state.get(task.task_id) is None and blocking[task.task_id] == 0:
                ready.append(task.task_id)
        ready = sorted(set(ready) - set(state), key=order.__getitem__)

        with ThreadPoolExecutor(max_workers=plan.slots) as pool:
            pending = {}
            while ready or pending:
                for tid in ready:
                    manifest.append(tid, "running", fingerprint=fingerprints[tid])
                    task = tasks[tid]
                    fut = pool.submit(
                        invoke_stage,
                        plan.models[task.model],
                        task.stage,
                        params[tid],
                        rundir / task.workdir,
                        plan.stage_timeout_s,
                    )
                    pending[fut] = tid
                ready = []
                if not pending:
                    break
                finished, _ = wait(pending, return_when=FIRST_COMPLETED)
                newly_ready: list[str] = []
                for fut in finished:
                    tid = pending.pop(fut)
                    outcome = fut.result()
                    if outcome.success:
                        manifest.append(tid, "done", fingerprint=fingerprints[tid],
                                        artifacts=outcome.artifacts)
                        newly_ready.extend(settle_done(tid, skipped=False))
                    else:
                        settle_failed(tid, outcome.error_class or "StageFailed",
                                      outcome.diagnostics)
                ready = sorted(
                    (t for t in newly_ready if state.get(t) is None),
                    key=order.__getitem__,
                )
    finally:
        manifest.close()

    result.wall_time_s = time.monotonic() - started
    return result
