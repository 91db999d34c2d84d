"""Report rendering: heatmaps, summary tables, tidy exports."""

from __future__ import annotations

import xml.etree.ElementTree as ET

import numpy as np

from csabench.generalization import WithinDatasetSummary
from csabench.report import (
    COLOR_SCALES,
    HeatmapSpec,
    _ramp_color,
    export_distributions,
    render_heatmap,
    render_tables,
)

SVG_NS = "{http://www.w3.org/2000/svg}"


def parse_svg(svg: str):
    return ET.fromstring(svg)


def spec_2x2(**kw):
    return HeatmapSpec(
        matrix=np.array([[0.9, 0.3], [0.1, 0.7]]),
        row_labels=["r0", "r1"],
        col_labels=["c0", "c1"],
        **kw,
    )


def test_heatmap_structure_counts():
    root = parse_svg(render_heatmap(spec_2x2()))
    cells = [e for e in root.iter(f"{SVG_NS}rect") if (e.get("class") or "").startswith("cell")]
    rlabels = [e for e in root.iter(f"{SVG_NS}text") if e.get("class") == "rlabel"]
    clabels = [e for e in root.iter(f"{SVG_NS}text") if e.get("class") == "clabel"]
    assert len(cells) == 4 and len(rlabels) == 2 and len(clabels) == 2


def test_heatmap_byte_identical_rerun():
    assert render_heatmap(spec_2x2()) == render_heatmap(spec_2x2())


def test_heatmap_annotation_format():
    spec = HeatmapSpec(
        matrix=np.array([[0.631]]),
        row_labels=["CTRPv2"],
        col_labels=["CCLE"],
        std=np.array([[0.005]]),
    )
    assert ">0.631 (0.005)<" in render_heatmap(spec)


def test_heatmap_null_cells_hatched():
    spec = HeatmapSpec(
        matrix=np.array([[0.5, np.nan]]),
        row_labels=["r"],
        col_labels=["a", "b"],
    )
    svg = render_heatmap(spec)
    assert 'fill="url(#null-hatch)"' in svg
    root = parse_svg(svg)
    nulls = [e for e in root.iter(f"{SVG_NS}rect") if e.get("class") == "cell null"]
    assert len(nulls) == 1


def test_heatmap_color_scales_differ_by_spec():
    blue = render_heatmap(spec_2x2(scale="sequential-blue"))
    green = render_heatmap(spec_2x2(scale="sequential-green"))
    assert COLOR_SCALES["sequential-blue"][8] in blue
    assert COLOR_SCALES["sequential-green"][8] in green


def test_ramp_monotone_and_equal_values_equal_colors():
    stops = COLOR_SCALES["sequential-blue"]
    ts = np.linspace(0, 1, 30)
    lums = []
    for t in ts:
        color = _ramp_color(stops, float(t))
        r, g, b = int(color[1:3], 16), int(color[3:5], 16), int(color[5:7], 16)
        lums.append(0.299 * r + 0.587 * g + 0.114 * b)
    assert all(b <= a + 1e-9 for a, b in zip(lums, lums[1:]))  # darker as t grows
    assert _ramp_color(stops, 0.37) == _ramp_color(stops, 0.37)


def test_heatmap_constant_matrix_does_not_crash():
    spec = HeatmapSpec(matrix=np.full((2, 2), 0.5), row_labels=["a", "b"],
                       col_labels=["a", "b"])
    svg = render_heatmap(spec)
    assert svg.count('class="cell"') == 4


# ---------------------------------------------------------------------------
# tables
# ---------------------------------------------------------------------------

def summary_6x5():
    models = ["m1", "m2", "m3", "m4", "m5", "m6"]
    datasets = ["gCSI", "CCLE", "GDSCv2", "GDSCv1", "CTRPv2"]
    rng = np.random.default_rng(3)
    table = rng.uniform(0.5, 0.9, (6, 5))
    return WithinDatasetSummary(
        "mean", models, datasets, table, table.mean(axis=1), table.mean(axis=0)
    )


def test_render_tables_structure(tmp_path):
    sizes = {"gCSI": 4941, "CCLE": 9519, "GDSCv2": 114644, "GDSCv1": 171940,
             "CTRPv2": 286665}
    csv_path, md_path = tmp_path / "t.csv", tmp_path / "t.md"
    render_tables(summary_6x5(), sizes, csv_path, md_path)
    lines = csv_path.read_text().splitlines()
    assert len(lines) == 8  # header + 6 models + mean row
    assert lines[0] == "model,gCSI,CCLE,GDSCv2,GDSCv1,CTRPv2,mean_across_datasets"
    assert lines[-1].startswith("mean_across_models,")
    md = md_path.read_text().splitlines()
    assert md[0].startswith("| Model |") and len(md) == 9


def test_render_tables_orders_by_sample_size(tmp_path):
    summary = WithinDatasetSummary(
        "mean", ["m"], ["big", "small"], np.array([[0.111, 0.999]]),
        np.array([0.555]), np.array([0.111, 0.999]),
    )
    render_tables(summary, {"big": 1000, "small": 10}, tmp_path / "t.csv", tmp_path / "t.md")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "model,small,big,mean_across_datasets"
    assert lines[1] == "m,0.999,0.111,0.5550"


def test_render_tables_decimal_formatting(tmp_path):
    summary = WithinDatasetSummary(
        "mean", ["m"], ["a"], np.array([[0.75222]]), np.array([0.75222]),
        np.array([0.75222]),
    )
    render_tables(summary, {"a": 5}, tmp_path / "t.csv", tmp_path / "t.md")
    body = (tmp_path / "t.csv").read_text()
    assert "m,0.752,0.7522" in body


def test_render_tables_empty_model_set(tmp_path):
    summary = WithinDatasetSummary(
        "mean", [], ["a", "b"], np.empty((0, 2)), np.empty(0), np.full(2, np.nan)
    )
    render_tables(summary, {"a": 1, "b": 2}, tmp_path / "t.csv", tmp_path / "t.md")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines == ["model,a,b,mean_across_datasets"]


# ---------------------------------------------------------------------------
# distributions export
# ---------------------------------------------------------------------------

def test_export_distributions_counts_and_schema(tmp_path):
    import json

    rundir = tmp_path / "run"
    rundir.mkdir()
    (rundir / "run_meta.json").write_text(json.dumps({
        "datasets": ["a", "b", "c"], "n_splits": 2, "models": ["m"],
        "n_samples": {"a": 1, "b": 1, "c": 1}, "benchmark_root": "x",
        "reuse_train": True,
    }))
    for s in "abc":
        for t in "abc":
            for n in range(2):
                d = rundir / "m" / f"{s}-{t}" / f"split_{n}" / "infer"
                d.mkdir(parents=True)
                if (s, t, n) == ("a", "c", 0):
                    continue  # simulate one failed entry
                (d / "test_scores.json").write_text(json.dumps({"r2": 0.25}))
    out = tmp_path / "distributions.csv"
    missing = export_distributions(rundir, out)
    lines = out.read_text().splitlines()
    assert lines[0] == "model,source,target,split,metric,value"
    assert len(lines) == 1 + 17  # 18 entries minus the failed one
    assert all(line.split(",")[4] == "r2" for line in lines[1:])
    assert missing == ["m:a:c:0"]
