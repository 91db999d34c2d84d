"""Dose-response curve fitting and normalized AUC response values.

Each cell-drug pair's viability measurements are fitted to a three-parameter
Hill-slope curve with the top asymptote fixed at 1 (viability is a fraction
of control):

    E(d) = einf + (1 - einf) / (1 + (d / ec50)^h)

Pairs whose fit explains too little variance (R² below 0.3 by default) are
excluded, and the response value for each surviving pair is the area under
the fitted curve over log10-dose in [1e-10 M, 1e-4 M], normalized to [0, 1].
Lower AUC means stronger response.

All functions here are pure and safe to call from multiple threads. The fit
inner loop runs on the selected kernel backend (see ``csabench._fit``).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import NDArray

from . import _fit
from .errors import DegenerateVariance, MissingColumn, TooFewPoints

LN10 = math.log(10.0)

EC50_LO, EC50_HI = 1e-12, 1e-2
H_LO, H_HI = 0.01, 10.0


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DoseResponseMeasurement:
    """One (cell, drug, dose, viability) observation.

    Dose is a molar concentration and must be strictly positive; viability
    is a fraction of control and may exceed [0, 1] in raw assay data but
    must be finite.
    """

    cell_id: str
    drug_id: str
    dose: float
    viability: float


@dataclass(frozen=True)
class HillParams:
    """Fitted curve parameters.

    einf is the asymptotic viability at infinite dose, ec50 the dose of
    half effect in molar units, h the Hill slope. Bounds are enforced at
    construction; the curve value at any dose then lies in [einf, 1].
    """

    einf: float
    ec50: float
    h: float

    def __post_init__(self):
        if not 0.0 <= self.einf <= 1.0:
            raise ValueError(f"einf out of [0, 1]: {self.einf}")
        if not EC50_LO <= self.ec50 <= EC50_HI:
            raise ValueError(f"ec50 out of [{EC50_LO}, {EC50_HI}]: {self.ec50}")
        if not 0.0 < self.h <= H_HI:
            raise ValueError(f"h out of (0, {H_HI}]: {self.h}")


@dataclass(frozen=True)
class FitResult:
    params: HillParams
    r2: float
    accepted: bool
    n_points: int


@dataclass(frozen=True)
class ResponseSample:
    """One fitted (cell, drug, auc) row; the y-data unit of the benchmark."""

    cell_id: str
    drug_id: str
    auc: float
    r2_fit: float
    source_dataset: str


@dataclass(frozen=True)
class FitConfig:
    r2_min: float = 0.3
    dose_lo: float = 1e-10
    dose_hi: float = 1e-4
    min_points: int = 4
    max_iter: int = 200
    rel_tol: float = 1e-10


@dataclass
class FitLog:
    """Counts and per-pair error classes from one table build."""

    dataset: str
    n_pairs: int = 0
    fitted: int = 0
    rejected: int = 0
    errored: int = 0
    input_rows_skipped: int = 0
    pair_errors: dict[str, str] = field(default_factory=dict)
    row_errors: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# Forward model and fit quality
# ---------------------------------------------------------------------------

def hill_value(params: HillParams, dose):
    """Evaluate the fitted curve at one or more positive doses.

    Computed via a numerically stable logistic in log10-dose so that very
    steep slopes or doses far from ec50 cannot overflow.
    """
    u = np.log10(np.asarray(dose, dtype=np.float64))
    t = (params.h * LN10) * (u - math.log10(params.ec50))
    ea = np.exp(-np.maximum(t, 0.0))
    eb = np.exp(np.minimum(t, 0.0))
    s = np.where(t >= 0, ea / (1.0 + ea), 1.0 / (1.0 + eb))
    out = params.einf + (1.0 - params.einf) * s
    if np.isscalar(dose):
        return float(out)
    return out


def compute_r2(observed, predicted) -> float:
    """Coefficient of determination 1 - SS_res / SS_tot.

    May be negative; equals 1 only when the vectors coincide. Raises
    DegenerateVariance when all observed values are equal (SS_tot = 0),
    which marks the pair as unfittable.
    """
    obs = np.asarray(observed, dtype=np.float64)
    pred = np.asarray(predicted, dtype=np.float64)
    if obs.shape != pred.shape or obs.ndim != 1 or obs.size < 2:
        raise ValueError("observed and predicted must be equal-length vectors of size >= 2")
    ss_tot = float(np.sum((obs - obs.mean()) ** 2))
    if ss_tot == 0.0:
        raise DegenerateVariance("all observed values are equal")
    ss_res = float(np.sum((obs - pred) ** 2))
    return 1.0 - ss_res / ss_tot


def compute_auc(params: HillParams, dose_lo: float = 1e-10, dose_hi: float = 1e-4) -> float:
    """Normalized area under the fitted curve over log10-dose.

    The integral has a closed form: with k = h·ln10 and a = log10(ec50),
    the antiderivative of the logistic term is u - softplus(k·(u - a))/k,
    so no quadrature is needed. The result lies in [einf, 1] ⊆ [0, 1] and
    equals 1 exactly when einf = 1.
    """
    if not (0.0 < dose_lo < dose_hi):
        raise ValueError("require 0 < dose_lo < dose_hi")
    u_lo, u_hi = math.log10(dose_lo), math.log10(dose_hi)
    a = math.log10(params.ec50)
    k = params.h * LN10
    sp_hi = float(np.logaddexp(0.0, k * (u_hi - a)))
    sp_lo = float(np.logaddexp(0.0, k * (u_lo - a)))
    q = ((u_hi - sp_hi / k) - (u_lo - sp_lo / k)) / (u_hi - u_lo)
    auc = params.einf + (1.0 - params.einf) * q
    return min(max(auc, 0.0), 1.0)


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------

def _fit_arrays(doses: NDArray, viab: NDArray, config: FitConfig) -> FitResult:
    """Fit one pair given parallel dose/viability arrays."""
    n = doses.size
    if n < config.min_points:
        raise TooFewPoints(f"{n} measurements; need >= {config.min_points}")
    if np.any(doses <= 0) or not np.all(np.isfinite(doses)):
        raise ValueError("doses must be positive and finite")
    if not np.all(np.isfinite(viab)):
        raise ValueError("viabilities must be finite")
    if float(viab.max()) == float(viab.min()):
        raise DegenerateVariance("constant viability; R² undefined")

    offsets = np.array([0, n], dtype=np.int64)
    theta, _, _ = _fit.fit_pairs(doses, viab, offsets, config.max_iter, config.rel_tol)
    params = HillParams(
        einf=float(theta[0, 0]),
        ec50=float(10.0 ** theta[0, 1]),
        h=float(10.0 ** theta[0, 2]),
    )
    r2 = compute_r2(viab, hill_value(params, doses))
    return FitResult(params=params, r2=r2, accepted=r2 >= config.r2_min, n_points=n)


def fit_hill(
    measurements: Sequence[DoseResponseMeasurement],
    config: FitConfig = FitConfig(),
) -> FitResult:
    """Fit one cell-drug pair's measurements.

    Minimizes the sum of squared viability residuals within the HillParams
    bounds using damped least squares with eight deterministic multistarts;
    the accepted flag applies the R² threshold from ``config``.
    """
    doses = np.array([m.dose for m in measurements], dtype=np.float64)
    viab = np.array([m.viability for m in measurements], dtype=np.float64)
    return _fit_arrays(doses, viab, config)


def build_response_table(
    raw: Iterable[DoseResponseMeasurement],
    dataset_name: str,
    config: FitConfig = FitConfig(),
) -> tuple[list[ResponseSample], FitLog]:
    """Fit every (cell, drug) pair in a measurement stream.

    Emits one ResponseSample per pair passing the R² filter, in an order
    sorted by (cell_id, drug_id). The FitLog records fitted, rejected
    (R² below threshold) and errored pair counts with per-pair reasons.
    """
    groups: dict[tuple[str, str], list[tuple[float, float]]] = {}
    for m in raw:
        groups.setdefault((m.cell_id, m.drug_id), []).append((m.dose, m.viability))

    log = FitLog(dataset=dataset_name, n_pairs=len(groups))
    keys = sorted(groups)

    fit_keys: list[tuple[str, str]] = []
    dose_chunks: list[NDArray] = []
    viab_chunks: list[NDArray] = []
    lengths: list[int] = []
    for key in keys:
        pts = groups[key]
        doses = np.array([p[0] for p in pts], dtype=np.float64)
        viab = np.array([p[1] for p in pts], dtype=np.float64)
        tag = f"{key[0]}|{key[1]}"
        if doses.size < config.min_points:
            log.errored += 1
            log.pair_errors[tag] = "TooFewPoints"
            continue
        if float(viab.max()) == float(viab.min()):
            log.errored += 1
            log.pair_errors[tag] = "DegenerateVariance"
            continue
        fit_keys.append(key)
        dose_chunks.append(doses)
        viab_chunks.append(viab)
        lengths.append(doses.size)

    samples: list[ResponseSample] = []
    if fit_keys:
        offsets = np.zeros(len(fit_keys) + 1, dtype=np.int64)
        offsets[1:] = np.cumsum(lengths)
        theta, _, _ = _fit.fit_pairs(
            np.concatenate(dose_chunks),
            np.concatenate(viab_chunks),
            offsets,
            config.max_iter,
            config.rel_tol,
        )
        for i, key in enumerate(fit_keys):
            params = HillParams(
                einf=float(theta[i, 0]),
                ec50=float(10.0 ** theta[i, 1]),
                h=float(10.0 ** theta[i, 2]),
            )
            r2 = compute_r2(viab_chunks[i], hill_value(params, dose_chunks[i]))
            if r2 >= config.r2_min:
                log.fitted += 1
                samples.append(
                    ResponseSample(
                        cell_id=key[0],
                        drug_id=key[1],
                        auc=compute_auc(params, config.dose_lo, config.dose_hi),
                        r2_fit=r2,
                        source_dataset=dataset_name,
                    )
                )
            else:
                log.rejected += 1
    return samples, log


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------

REQUIRED_INPUT_COLUMNS = ("cell_id", "drug_id", "dose_M", "viability")


def _detect_delimiter(header_line: str) -> str:
    return "\t" if "\t" in header_line else ","


def read_dose_response(path) -> tuple[list[DoseResponseMeasurement], list[str]]:
    """Read a delimiter-separated dose-response table.

    Comma or tab is auto-detected from the header line. Malformed rows are
    skipped and reported with their line numbers; processing continues.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        first = fh.readline()
        if not first:
            raise MissingColumn(f"{path}: empty file")
        delim = _detect_delimiter(first)
        header = [c.strip() for c in first.rstrip("\r\n").split(delim)]
        missing = [c for c in REQUIRED_INPUT_COLUMNS if c not in header]
        if missing:
            raise MissingColumn(f"{path}: missing columns {missing}")
        idx = {c: header.index(c) for c in REQUIRED_INPUT_COLUMNS}

        measurements: list[DoseResponseMeasurement] = []
        errors: list[str] = []
        for lineno, row in enumerate(csv.reader(fh, delimiter=delim), start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < len(header):
                errors.append(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
                continue
            try:
                dose = float(row[idx["dose_M"]])
                viab = float(row[idx["viability"]])
            except ValueError:
                errors.append(f"line {lineno}: non-numeric dose or viability")
                continue
            if not (dose > 0 and math.isfinite(dose)):
                errors.append(f"line {lineno}: dose must be positive and finite")
                continue
            if not math.isfinite(viab):
                errors.append(f"line {lineno}: viability must be finite")
                continue
            measurements.append(
                DoseResponseMeasurement(
                    cell_id=row[idx["cell_id"]].strip(),
                    drug_id=row[idx["drug_id"]].strip(),
                    dose=dose,
                    viability=viab,
                )
            )
    return measurements, errors


def write_response_csv(samples: Iterable[ResponseSample], path) -> None:
    """Write the response table with header cell_id,drug_id,auc,r2_fit."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("cell_id,drug_id,auc,r2_fit\n")
        for s in samples:
            fh.write(f"{s.cell_id},{s.drug_id},{s.auc:.17g},{s.r2_fit:.17g}\n")
