"""Publication-style rendering: SVG heatmaps, summary tables, tidy exports.

Everything here is a deterministic function of its inputs: fixed element
order, fixed numeric precision, fixed color stops. Rerunning a report on
the same run directory produces byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import NDArray

from .contract import TEST_SCORES, read_scores
from .generalization import GMatrices, WithinDatasetSummary
from .scheduler import read_run_meta

# 9-step sequential ramps (light to dark), committed so rendering needs no
# plotting stack.
COLOR_SCALES = {
    "sequential-blue": (
        "#f7fbff", "#deebf7", "#c6dbef", "#9ecae1", "#6baed6",
        "#4292c6", "#2171b5", "#08519c", "#08306b",
    ),
    "sequential-green": (
        "#f7fcf5", "#e5f5e0", "#c7e9c0", "#a1d99b", "#74c476",
        "#41ab5d", "#238b45", "#006d2c", "#00441b",
    ),
}

CELL_W, CELL_H = 96.0, 36.0
MARGIN_LEFT, MARGIN_TOP = 110.0, 70.0
MARGIN_RIGHT, MARGIN_BOTTOM = 20.0, 20.0


@dataclass
class HeatmapSpec:
    matrix: NDArray
    row_labels: Sequence[str]
    col_labels: Sequence[str]
    scale: str = "sequential-blue"
    std: NDArray | None = None  # annotated in parentheses when given
    title: str = ""
    decimals: int = 3


def _hex_to_rgb(color: str) -> tuple[int, int, int]:
    return int(color[1:3], 16), int(color[3:5], 16), int(color[5:7], 16)


def _ramp_color(stops: Sequence[str], t: float) -> str:
    """Piecewise-linear interpolation through the ramp at t in [0, 1]."""
    t = min(max(t, 0.0), 1.0)
    pos = t * (len(stops) - 1)
    i = min(int(pos), len(stops) - 2)
    frac = pos - i
    r0, g0, b0 = _hex_to_rgb(stops[i])
    r1, g1, b1 = _hex_to_rgb(stops[i + 1])
    r = round(r0 + (r1 - r0) * frac)
    g = round(g0 + (g1 - g0) * frac)
    b = round(b0 + (b1 - b0) * frac)
    return f"#{r:02x}{g:02x}{b:02x}"


def _text_color(fill: str) -> str:
    r, g, b = _hex_to_rgb(fill)
    return "#000000" if 0.299 * r + 0.587 * g + 0.114 * b > 140 else "#ffffff"


def _esc(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def render_heatmap(spec: HeatmapSpec) -> str:
    """Render one matrix as a self-contained SVG document.

    The color domain is [min, max] of the finite entries; null cells are
    hatched. Cell text is the value at ``decimals`` places, with the std
    in parentheses when provided.
    """
    matrix = np.asarray(spec.matrix, dtype=np.float64)
    if matrix.size == 0:
        raise ValueError("empty matrix")
    n_rows, n_cols = matrix.shape
    stops = COLOR_SCALES[spec.scale]
    finite = matrix[np.isfinite(matrix)]
    vmin = float(finite.min()) if finite.size else 0.0
    vmax = float(finite.max()) if finite.size else 1.0
    vspan = vmax - vmin

    width = MARGIN_LEFT + n_cols * CELL_W + MARGIN_RIGHT
    height = MARGIN_TOP + n_rows * CELL_H + MARGIN_BOTTOM
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{height:.0f}" '
        f'viewBox="0 0 {width:.0f} {height:.0f}" font-family="Helvetica, Arial, sans-serif">',
        "<defs>",
        '<pattern id="null-hatch" width="6" height="6" patternUnits="userSpaceOnUse" '
        'patternTransform="rotate(45)">'
        '<rect width="6" height="6" fill="#eeeeee"/>'
        '<line x1="0" y1="0" x2="0" y2="6" stroke="#999999" stroke-width="1.5"/>'
        "</pattern>",
        "</defs>",
    ]
    if spec.title:
        out.append(
            f'<text class="title" x="{width / 2:.1f}" y="24" text-anchor="middle" '
            f'font-size="15" font-weight="bold">{_esc(spec.title)}</text>'
        )
    for j, label in enumerate(spec.col_labels):
        x = MARGIN_LEFT + (j + 0.5) * CELL_W
        out.append(
            f'<text class="clabel" x="{x:.1f}" y="{MARGIN_TOP - 10:.1f}" '
            f'text-anchor="middle" font-size="12">{_esc(str(label))}</text>'
        )
    for i, label in enumerate(spec.row_labels):
        y = MARGIN_TOP + (i + 0.5) * CELL_H
        out.append(
            f'<text class="rlabel" x="{MARGIN_LEFT - 8:.1f}" y="{y + 4:.1f}" '
            f'text-anchor="end" font-size="12">{_esc(str(label))}</text>'
        )
    for i in range(n_rows):
        for j in range(n_cols):
            x = MARGIN_LEFT + j * CELL_W
            y = MARGIN_TOP + i * CELL_H
            value = matrix[i, j]
            if not np.isfinite(value):
                out.append(
                    f'<rect class="cell null" x="{x:.1f}" y="{y:.1f}" width="{CELL_W:.1f}" '
                    f'height="{CELL_H:.1f}" fill="url(#null-hatch)" stroke="#ffffff"/>'
                )
                continue
            t = 0.5 if vspan == 0.0 else (value - vmin) / vspan
            fill = _ramp_color(stops, t)
            out.append(
                f'<rect class="cell" x="{x:.1f}" y="{y:.1f}" width="{CELL_W:.1f}" '
                f'height="{CELL_H:.1f}" fill="{fill}" stroke="#ffffff"/>'
            )
            text = f"{value:.{spec.decimals}f}"
            if spec.std is not None and np.isfinite(spec.std[i, j]):
                text += f" ({spec.std[i, j]:.{spec.decimals}f})"
            out.append(
                f'<text class="value" x="{x + CELL_W / 2:.1f}" y="{y + CELL_H / 2 + 4:.1f}" '
                f'text-anchor="middle" font-size="11" fill="{_text_color(fill)}">{text}</text>'
            )
    out.append("</svg>")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Summary tables
# ---------------------------------------------------------------------------

def _order_by_size(datasets: Sequence[str], sizes: dict[str, int]) -> list[int]:
    return sorted(range(len(datasets)), key=lambda i: (sizes[datasets[i]], datasets[i]))


def _cell(v: float, decimals: int) -> str:
    return "" if not np.isfinite(v) else f"{v:.{decimals}f}"


def render_tables(
    summary: WithinDatasetSummary,
    dataset_sizes: dict[str, int],
    csv_path,
    md_path,
) -> None:
    """Write one within-dataset summary as CSV and Markdown.

    Datasets are ordered by ascending sample size; cells carry 3 decimals
    and the aggregate row/column 4.
    """
    order = _order_by_size(summary.datasets, dataset_sizes)
    datasets = [summary.datasets[i] for i in order]
    table = summary.table[:, order]
    col_means = summary.col_means[order]

    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("model," + ",".join(datasets) + ",mean_across_datasets\n")
        for m, model in enumerate(summary.models):
            cells = ",".join(_cell(v, 3) for v in table[m])
            fh.write(f"{model},{cells},{_cell(summary.row_means[m], 4)}\n")
        if summary.models:
            fh.write(
                "mean_across_models," + ",".join(_cell(v, 3) for v in col_means) + ",\n"
            )

    with open(md_path, "w", encoding="utf-8") as fh:
        fh.write("| Model | " + " | ".join(datasets) + " | Mean across datasets |\n")
        if not summary.models:
            return
        fh.write("|" + "---|" * (len(datasets) + 2) + "\n")
        for m, model in enumerate(summary.models):
            cells = " | ".join(_cell(v, 3) for v in table[m])
            fh.write(f"| {model} | {cells} | {_cell(summary.row_means[m], 4)} |\n")
        fh.write(
            "| Mean across models | "
            + " | ".join(_cell(v, 3) for v in col_means)
            + " |  |\n"
        )


# ---------------------------------------------------------------------------
# Tidy distribution export
# ---------------------------------------------------------------------------

def export_distributions(
    rundir, out_path, metrics: Iterable[str] = ("r2",)
) -> list[str]:
    """Write a long-format (model, source, target, split, metric, value)
    table for external plotting; returns the missing-score entries, which
    are reported but not fatal.
    """
    rundir = Path(rundir)
    meta = read_run_meta(rundir)
    missing: list[str] = []
    rows: list[str] = []
    for model in meta["models"]:
        for s in meta["datasets"]:
            for t in meta["datasets"]:
                for n in range(int(meta["n_splits"])):
                    path = rundir / model / f"{s}-{t}" / f"split_{n}" / "infer" / TEST_SCORES
                    if not path.is_file():
                        missing.append(f"{model}:{s}:{t}:{n}")
                        continue
                    scores = read_scores(path)
                    for metric in metrics:
                        value = scores.get(metric)
                        if value is None:
                            missing.append(f"{model}:{s}:{t}:{n}:{metric}")
                            continue
                        rows.append(f"{model},{s},{t},{n},{metric},{value:.17g}")
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("model,source,target,split,metric,value\n")
        fh.writelines(r + "\n" for r in rows)
    return missing


def write_missing_report(missing: list[str], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"missing_scores": missing}, fh, indent=2)
        fh.write("\n")


def heatmaps_for_model(gm: GMatrices) -> dict[str, str]:
    """The two per-model heatmaps: G (blue, with std) and Gn (green)."""
    g_spec = HeatmapSpec(
        matrix=gm.g_mean,
        row_labels=gm.datasets,
        col_labels=gm.datasets,
        scale="sequential-blue",
        std=gm.g_std,
        title=f"{gm.model}: G ({gm.metric})",
    )
    gn_spec = HeatmapSpec(
        matrix=gm.gn,
        row_labels=gm.datasets,
        col_labels=gm.datasets,
        scale="sequential-green",
        title=f"{gm.model}: Gn ({gm.metric})",
    )
    return {
        f"heatmap_G_{gm.model}.svg": render_heatmap(g_spec),
        f"heatmap_Gn_{gm.model}.svg": render_heatmap(gn_spec),
    }
