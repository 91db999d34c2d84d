"""Plan construction, dependency-safe execution, manifest durability."""

from __future__ import annotations

import json
import sys
from collections import Counter

import pytest

from csabench.contract import StageKind
from csabench.data import SynthSpec, generate_synthetic_benchmark
from csabench.errors import CsabenchError, MissingSplits, UnknownModel
from csabench.scheduler import (
    PipelineTask,
    RunManifest,
    build_plan,
    compose_task_io,
    execute,
    read_run_meta,
    task_fingerprint,
)

FAKE_MODEL = """\
import json, os, sys, time

args = dict(zip(sys.argv[2::2], sys.argv[3::2]))
stage = sys.argv[1]
out = args["--output_dir"]
os.makedirs(out, exist_ok=True)
marker = os.environ.get("CSABENCH_TEST_TRACE")
if marker:
    with open(os.path.join(marker, f"trace_{time.monotonic_ns()}"), "w") as fh:
        fh.write(f"{stage} start {time.monotonic()}\\n")
        time.sleep(float(os.environ.get("CSABENCH_TEST_STAGE_SLEEP", "0.05")))
        fh.write(f"{stage} end {time.monotonic()}\\n")
fail_on = os.environ.get("CSABENCH_TEST_FAIL_SUBSTRING")
if fail_on and fail_on in out:
    sys.exit(7)

def preds(path):
    with open(path, "w") as fh:
        fh.write("sample_id,cell_id,drug_id,auc_true,auc_pred\\n")
        fh.write("0,c0,d0,0.25,0.3\\n1,c1,d0,0.75,0.6\\n2,c0,d1,0.5,0.45\\n")

def scores(path):
    src = args.get("--source_dataset", "")
    json.dump({"r2": 0.5, "mse": 0.01, "rmse": 0.1,
               "pearson_r": 0.9, "spearman_rho": 0.8, "n": 3}, open(path, "w"))

if stage == "preprocess":
    for part in ("train", "val", "test"):
        os.makedirs(os.path.join(out, part), exist_ok=True)
        open(os.path.join(out, part, "data.txt"), "w").write(args["--source_dataset"])
elif stage == "train":
    os.makedirs(os.path.join(out, "model"), exist_ok=True)
    open(os.path.join(out, "model", "weights.txt"), "w").write("w")
    preds(os.path.join(out, "val_y_data_predicted.csv"))
    scores(os.path.join(out, "val_scores.json"))
else:
    assert os.path.isdir(args["--model_dir"]), args["--model_dir"]
    assert os.path.isdir(args["--test_data_dir"])
    preds(os.path.join(out, "test_y_data_predicted.csv"))
    scores(os.path.join(out, "test_scores.json"))
"""


@pytest.fixture(scope="module")
def benchmark(tmp_path_factory):
    root = tmp_path_factory.mktemp("bench")
    spec = SynthSpec(
        n_datasets=2, sizes=[60, 40], n_cell_features=3, n_drug_features=2,
        shift_amplitudes=[0.0, 0.1], seed=5, n_splits=2, split_seed=2,
    )
    generate_synthetic_benchmark(spec, root)
    return root


@pytest.fixture
def fake_model_spec(tmp_path):
    script = tmp_path / "fake_model.py"
    script.write_text(FAKE_MODEL)
    manifest = tmp_path / "fake.json"
    manifest.write_text(json.dumps({
        "name": "fake",
        "stages": {
            s: [sys.executable, str(script), s] for s in ("preprocess", "train", "infer")
        },
    }))
    return str(manifest)


# ---------------------------------------------------------------------------
# plan construction
# ---------------------------------------------------------------------------

def synth_index(tmp_path_factory, d, sizes=None):
    root = tmp_path_factory.mktemp("plan_bench")
    spec = SynthSpec(
        n_datasets=d,
        sizes=sizes or [40] * d,
        n_cell_features=2,
        n_drug_features=2,
        shift_amplitudes=[0.0] * d,
        seed=1,
        n_splits=10,
        split_seed=1,
    )
    generate_synthetic_benchmark(spec, root)
    return root


def test_plan_counts_d5_n10(tmp_path_factory):
    root = synth_index(tmp_path_factory, 5)
    plan = build_plan(root, ["baseline-ridge"], n_splits=10)
    by_stage = Counter(t.stage for t in plan.tasks)
    assert by_stage[StageKind.PREPROCESS] == 250  # 50 within-source + 200 cross
    assert by_stage[StageKind.TRAIN] == 50
    assert by_stage[StageKind.INFER] == 250
    within = [t for t in plan.tasks
              if t.stage is StageKind.PREPROCESS and t.source == t.target]
    assert len(within) == 50


def test_plan_counts_no_reuse(tmp_path_factory):
    root = synth_index(tmp_path_factory, 5)
    plan = build_plan(root, ["baseline-ridge"], n_splits=10, reuse_train=False)
    by_stage = Counter(t.stage for t in plan.tasks)
    assert by_stage[StageKind.TRAIN] == 250
    assert by_stage[StageKind.INFER] == 250


def test_plan_minimal_grid(tmp_path_factory):
    root = synth_index(tmp_path_factory, 1)
    plan = build_plan(root, ["baseline-ridge"], n_splits=1)
    assert [t.stage for t in plan.tasks] == [
        StageKind.PREPROCESS, StageKind.TRAIN, StageKind.INFER,
    ]


def test_plan_deterministic_ids(benchmark):
    a = build_plan(benchmark, ["baseline-ridge"], n_splits=2)
    b = build_plan(benchmark, ["baseline-ridge"], n_splits=2)
    assert [t.task_id for t in a.tasks] == [t.task_id for t in b.tasks]


def test_plan_dependency_edges(benchmark):
    plan = build_plan(benchmark, ["baseline-ridge"], n_splits=2)
    tasks = plan.task_map()
    train = tasks[PipelineTask.make_id("baseline-ridge", "synth0", "synth0", 1, StageKind.TRAIN)]
    assert train.dependencies == (
        PipelineTask.make_id("baseline-ridge", "synth0", "synth0", 1, StageKind.PREPROCESS),
    )
    infer = tasks[PipelineTask.make_id("baseline-ridge", "synth0", "synth1", 1, StageKind.INFER)]
    assert set(infer.dependencies) == {
        PipelineTask.make_id("baseline-ridge", "synth0", "synth1", 1, StageKind.PREPROCESS),
        PipelineTask.make_id("baseline-ridge", "synth0", "synth0", 1, StageKind.TRAIN),
    }


def test_plan_missing_splits(benchmark):
    with pytest.raises(MissingSplits):
        build_plan(benchmark, ["baseline-ridge"], n_splits=9)


def test_plan_unknown_model(benchmark):
    with pytest.raises(UnknownModel):
        build_plan(benchmark, ["not-a-model"], n_splits=2)


def test_compose_io_within_and_cross(benchmark, tmp_path):
    plan = build_plan(benchmark, ["baseline-ridge"], n_splits=2)
    tasks = plan.task_map()
    rundir = tmp_path / "run"

    within = tasks[PipelineTask.make_id("baseline-ridge", "synth0", "synth0", 0, StageKind.PREPROCESS)]
    io = compose_task_io(plan, within, rundir)
    assert io["source_dataset"] == "synth0" and io["target_dataset"] == "synth0"
    assert io["split_index"] == 0
    assert io["split_dir"].endswith("synth0/splits")

    cross_infer = tasks[PipelineTask.make_id("baseline-ridge", "synth0", "synth1", 0, StageKind.INFER)]
    io = compose_task_io(plan, cross_infer, rundir)
    # the model comes from the within-source train; data from the s-t preprocess
    assert "synth0-synth0/split_0/train/model" in io["model_dir"]
    assert "synth0-synth1/split_0/preprocess/test" in io["test_data_dir"]


def test_fingerprints_stable_and_input_sensitive(benchmark, tmp_path):
    plan = build_plan(benchmark, ["baseline-ridge"], n_splits=2)
    task = plan.tasks[0]
    io = compose_task_io(plan, task, tmp_path / "run")
    fp1 = task_fingerprint(plan, task, io, {})
    fp2 = task_fingerprint(plan, task, io, {})
    assert fp1 == fp2 and len(fp1) == 16
    split_file = (
        benchmark / task.source / "splits" / f"{task.source}_split_{task.split}_train.txt"
    )
    original = split_file.read_text()
    split_file.write_text(original + " ")
    try:
        assert task_fingerprint(plan, task, io, {}) != fp1
    finally:
        split_file.write_text(original)


# ---------------------------------------------------------------------------
# execution
# ---------------------------------------------------------------------------

def test_execute_full_grid_with_fake_model(benchmark, fake_model_spec, tmp_path):
    plan = build_plan(benchmark, [fake_model_spec], n_splits=2, slots=4)
    rundir = tmp_path / "run"
    result = execute(plan, rundir)
    # d=2, N=2 with train reuse: 8 preprocess + 4 train + 8 infer
    assert result.ok and result.n_done == len(plan.tasks) == 20
    score_files = list(rundir.glob("fake/*/split_*/infer/test_scores.json"))
    assert len(score_files) == 8  # d*d*N = 2*2*2
    meta = read_run_meta(rundir)
    assert meta["datasets"] == ["synth0", "synth1"] and meta["n_splits"] == 2


def test_execute_dependency_safety_via_manifest(benchmark, fake_model_spec, tmp_path):
    plan = build_plan(benchmark, [fake_model_spec], n_splits=2, slots=4)
    rundir = tmp_path / "run"
    execute(plan, rundir)
    events: dict[str, dict[str, float]] = {}
    for line in (rundir / "manifest.jsonl").read_text().splitlines():
        rec = json.loads(line)
        events.setdefault(rec["task"], {})[rec["status"]] = rec["ts"]
    for task in plan.tasks:
        for dep in task.dependencies:
            assert events[dep]["done"] <= events[task.task_id]["running"]


def test_execute_failure_fails_only_dependents(benchmark, fake_model_spec, tmp_path, monkeypatch):
    # fail the within-dataset preprocess of synth0 split 0; its train and
    # every infer hanging off that train must fail upstream, others succeed
    monkeypatch.setenv("CSABENCH_TEST_FAIL_SUBSTRING", "synth0-synth0/split_0/preprocess")
    plan = build_plan(benchmark, [fake_model_spec], n_splits=2, slots=2)
    rundir = tmp_path / "run"
    result = execute(plan, rundir)
    failed = dict(result.failures)
    assert failed[PipelineTask.make_id("fake", "synth0", "synth0", 0, StageKind.PREPROCESS)] == "StageFailed"
    assert failed[PipelineTask.make_id("fake", "synth0", "synth0", 0, StageKind.TRAIN)] == "failed-upstream"
    assert failed[PipelineTask.make_id("fake", "synth0", "synth1", 0, StageKind.INFER)] == "failed-upstream"
    # the failed preprocess, the train behind it, and both infers off that train
    assert result.n_failed == 4
    # synth0 split 1 and all synth1-sourced tasks are unaffected
    done_ids = {t.task_id for t in plan.tasks} - set(failed)
    assert PipelineTask.make_id("fake", "synth0", "synth0", 1, StageKind.INFER) in done_ids
    assert PipelineTask.make_id("fake", "synth1", "synth0", 0, StageKind.INFER) in done_ids
    assert result.n_done == len(plan.tasks) - result.n_failed


def test_execute_refuses_dirty_rundir_without_resume(benchmark, fake_model_spec, tmp_path):
    plan = build_plan(benchmark, [fake_model_spec], n_splits=2)
    rundir = tmp_path / "run"
    execute(plan, rundir)
    with pytest.raises(CsabenchError):
        execute(plan, rundir)


def test_execute_idempotent_resume(benchmark, fake_model_spec, tmp_path):
    plan = build_plan(benchmark, [fake_model_spec], n_splits=2, slots=2)
    rundir = tmp_path / "run"
    first = execute(plan, rundir)
    assert first.ok
    second = execute(plan, rundir, resume=True)
    assert second.n_done == 0 and second.n_skipped == len(plan.tasks)
    # no duplicate done records
    done_counts = Counter()
    for line in (rundir / "manifest.jsonl").read_text().splitlines():
        rec = json.loads(line)
        if rec["status"] == "done":
            done_counts[rec["task"]] += 1
    assert all(v == 1 for v in done_counts.values())


def test_execute_slots_bound_serializes(benchmark, fake_model_spec, tmp_path, monkeypatch):
    trace_dir = tmp_path / "trace"
    trace_dir.mkdir()
    monkeypatch.setenv("CSABENCH_TEST_TRACE", str(trace_dir))
    monkeypatch.setenv("CSABENCH_TEST_STAGE_SLEEP", "0.03")
    plan = build_plan(benchmark, [fake_model_spec], n_splits=1, slots=1)
    result = execute(plan, tmp_path / "run")
    assert result.ok
    intervals = []
    for f in trace_dir.iterdir():
        lines = f.read_text().splitlines()
        start = float(lines[0].split()[-1])
        end = float(lines[1].split()[-1])
        intervals.append((start, end))
    intervals.sort()
    assert len(intervals) == len(plan.tasks)
    for (_, end_prev), (start_next, _) in zip(intervals, intervals[1:]):
        assert start_next >= end_prev  # strictly serialized


def test_manifest_replay_tolerates_torn_tail(tmp_path):
    path = tmp_path / "manifest.jsonl"
    path.write_text(
        json.dumps({"task": "a", "status": "done", "ts": 1.0}) + "\n"
        + '{"task": "b", "status": "run'  # torn write
    )
    latest = RunManifest.replay(path)
    assert latest == {"a": {"task": "a", "status": "done", "ts": 1.0}}
