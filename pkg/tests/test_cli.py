"""Command line surfaces not already driven by the acceptance suite."""

from __future__ import annotations

import json

import numpy as np

from csabench.cli import main as cli_main
from csabench.curves import HillParams, hill_value
from csabench.data import load_response_table, read_split_files


def make_raw_table(path, n_pairs=5, seed=0):
    rng = np.random.default_rng(seed)
    doses = np.logspace(-9, -5, 8)
    lines = ["cell_id,drug_id,dose_M,viability"]
    for i in range(n_pairs):
        p = HillParams(rng.uniform(0, 0.7), 10 ** rng.uniform(-8, -6), 10 ** rng.uniform(-0.3, 0.6))
        for d, v in zip(doses, hill_value(p, doses)):
            lines.append(f"c{i:02d},drugX,{d:.6g},{v:.10g}")
    lines.append("c99,drugX,bogus,0.5")  # malformed row, skipped with a log entry
    path.write_text("\n".join(lines) + "\n")


def test_curvefit_command(tmp_path, capsys):
    raw = tmp_path / "raw.csv"
    make_raw_table(raw)
    out = tmp_path / "response.csv"
    rc = cli_main([
        "curvefit", "--input", str(raw), "--output", str(out),
        "--dataset", "toy", "--r2-min", "0.3",
    ])
    assert rc == 0
    table = load_response_table(out)
    assert table.n_samples == 5
    assert np.all((table.auc >= 0) & (table.auc <= 1))
    log = json.loads((tmp_path / "response.csv.fitlog.json").read_text())
    assert log["fitted"] == 5 and log["input_rows_skipped"] == 1
    assert "5 fitted" in capsys.readouterr().out


def test_curvefit_missing_column_fails(tmp_path, capsys):
    raw = tmp_path / "raw.csv"
    raw.write_text("cell_id,drug_id,dose\nc,d,1e-7\n")
    rc = cli_main(["curvefit", "--input", str(raw), "--output", str(tmp_path / "o.csv")])
    assert rc == 1
    assert "missing columns" in capsys.readouterr().err


def test_splitgen_command(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({
        "n_datasets": 1, "sizes": [50], "n_cell_features": 2, "n_drug_features": 2,
        "shift_amplitudes": [0.0], "seed": 3,
    }))
    bench = tmp_path / "bench"
    assert cli_main(["synth", "--spec", str(spec), "--out", str(bench)]) == 0
    rc = cli_main([
        "splitgen", "--benchmark", str(bench), "--dataset", "synth0",
        "--n-splits", "4", "--seed", "17",
    ])
    assert rc == 0
    split = read_split_files(bench / "synth0" / "splits", "synth0", 3, n_samples=50)
    split.validate(50)


def test_splitgen_unknown_dataset(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({
        "n_datasets": 1, "sizes": [30], "n_cell_features": 2, "n_drug_features": 2,
        "shift_amplitudes": [0.0], "seed": 3,
    }))
    bench = tmp_path / "bench"
    cli_main(["synth", "--spec", str(spec), "--out", str(bench)])
    rc = cli_main(["splitgen", "--benchmark", str(bench), "--dataset", "nope"])
    assert rc == 1
    assert "nope" in capsys.readouterr().err


def test_run_reports_failures_with_nonzero_exit(tmp_path, capsys):
    # missing split files surface as a CsabenchError before execution
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({
        "n_datasets": 1, "sizes": [30], "n_cell_features": 2, "n_drug_features": 2,
        "shift_amplitudes": [0.0], "seed": 3,
    }))
    bench = tmp_path / "bench"
    cli_main(["synth", "--spec", str(spec), "--out", str(bench)])
    rc = cli_main([
        "run", "--benchmark", str(bench), "--models", "baseline-ridge",
        "--n-splits", "2", "--out", str(tmp_path / "run"),
    ])
    assert rc == 1
    assert "missing split file" in capsys.readouterr().err
