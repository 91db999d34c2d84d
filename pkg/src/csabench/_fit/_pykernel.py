"""Pure-numpy Hill-curve fit kernel (reference semantics).

Fits the three-parameter curve

    f(d) = einf + (1 - einf) / (1 + (d / ec50)^h)

to one cell-drug pair's (dose, viability) points by damped least squares in
the working coordinates theta = (einf, log10 ec50, log10 h), box-bounded to
[0, 1] x [-12, -2] x [-2, 1]. Eight deterministic multistarts are run per
pair: four ec50 starts log-spaced across the observed dose range crossed
with Hill-slope starts {1, 3}. The lowest residual wins; exact residual
ties break toward the smallest log10 ec50.

The compiled kernel in ``_kernel.pyx`` implements the same algorithm with
scalar loops; this module is the fallback and the semantic reference. The
eight starts are advanced in lockstep as batched array ops, which is
equivalent to running them sequentially because starts never interact.
"""

from __future__ import annotations

import numpy as np
from numpy.typing import NDArray

LN10 = 2.302585092994046

EINF_LO, EINF_HI = 0.0, 1.0
LEC_LO, LEC_HI = -12.0, -2.0
LH_LO, LH_HI = -2.0, 1.0

N_EC50_STARTS = 4
H_STARTS = (1.0, 3.0)
EINF0_CAP = 0.95

LAM0 = 1e-3
LAM_MIN = 1e-12
LAM_MAX = 1e12
DIAG_FLOOR = 1e-12
SSE_FLOOR = 1e-28


def _sigmoid_neg(t: NDArray) -> NDArray:
    """1 / (1 + exp(t)) without overflow for large |t|."""
    out = np.empty_like(t)
    pos = t >= 0
    ex = np.exp(-t[pos])
    out[pos] = ex / (1.0 + ex)
    out[~pos] = 1.0 / (1.0 + np.exp(t[~pos]))
    return out


def _model(theta: NDArray, u: NDArray) -> tuple[NDArray, NDArray, NDArray]:
    """Curve values and logistic terms for each start.

    theta is (k, 3), u is (n,) log10 doses; returns (f, s, h) with f and s
    shaped (k, n).
    """
    e = theta[:, 0:1]
    a = theta[:, 1:2]
    h = 10.0 ** theta[:, 2]
    t = (LN10 * h)[:, None] * (u[None, :] - a)
    s = _sigmoid_neg(t)
    return e + (1.0 - e) * s, s, h


def _sse(theta: NDArray, u: NDArray, y: NDArray) -> NDArray:
    f, _, _ = _model(theta, u)
    r = f - y[None, :]
    return np.einsum("kn,kn->k", r, r)


def _chol_solve3(M: NDArray, g: NDArray) -> tuple[NDArray, NDArray]:
    """Solve M x = -g for batched symmetric 3x3 systems.

    Returns (x, ok); rows with non-positive-definite M get ok=False and an
    unspecified x. Explicit Cholesky keeps the op order identical to the
    compiled kernel.
    """
    with np.errstate(all="ignore"):
        m11, m21, m31 = M[:, 0, 0], M[:, 1, 0], M[:, 2, 0]
        m22, m32, m33 = M[:, 1, 1], M[:, 2, 1], M[:, 2, 2]
        ok = m11 > 0
        l11 = np.sqrt(np.where(ok, m11, 1.0))
        l21 = m21 / l11
        l31 = m31 / l11
        d2 = m22 - l21 * l21
        ok &= d2 > 0
        l22 = np.sqrt(np.where(ok, d2, 1.0))
        l32 = (m32 - l31 * l21) / l22
        d3 = m33 - l31 * l31 - l32 * l32
        ok &= d3 > 0
        l33 = np.sqrt(np.where(ok, d3, 1.0))
        z1 = -g[:, 0] / l11
        z2 = (-g[:, 1] - l21 * z1) / l22
        z3 = (-g[:, 2] - l31 * z1 - l32 * z2) / l33
        x3 = z3 / l33
        x2 = (z2 - l32 * x3) / l22
        x1 = (z1 - l21 * x2 - l31 * x3) / l11
        x = np.stack([x1, x2, x3], axis=1)
    ok &= np.isfinite(x).all(axis=1)
    return x, ok


def _clip_theta(theta: NDArray) -> NDArray:
    theta[:, 0] = np.clip(theta[:, 0], EINF_LO, EINF_HI)
    theta[:, 1] = np.clip(theta[:, 1], LEC_LO, LEC_HI)
    theta[:, 2] = np.clip(theta[:, 2], LH_LO, LH_HI)
    return theta


def _start_grid(u: NDArray, y: NDArray) -> NDArray:
    umin, umax = float(u.min()), float(u.max())
    span = umax - umin
    e0 = min(max(float(y.min()), EINF_LO), EINF0_CAP)
    theta0 = np.empty((N_EC50_STARTS * len(H_STARTS), 3))
    k = 0
    for j in range(N_EC50_STARTS):
        a0 = umin + (j + 0.5) * span / N_EC50_STARTS
        a0 = min(max(a0, LEC_LO), LEC_HI)
        for h0 in H_STARTS:
            theta0[k] = (e0, a0, np.log10(h0))
            k += 1
    return theta0


def _fit_one(u: NDArray, y: NDArray, max_iter: int, rel_tol: float):
    """Run the multistart LM loop for one pair; returns (theta, sse, iters)."""
    theta = _start_grid(u, y)
    k = theta.shape[0]
    lam = np.full(k, LAM0)
    sse = _sse(theta, u, y)
    active = np.ones(k, dtype=bool)
    iters = 0

    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        iters += idx.size

        th = theta[idx]
        e = th[:, 0]
        a = th[:, 1]
        f, s, h = _model(th, u)
        r = f - y[None, :]
        w = s * (1.0 - s)
        du = u[None, :] - a[:, None]
        hl = (LN10 * h)[:, None]
        J = np.empty((idx.size, u.size, 3))
        J[:, :, 0] = 1.0 - s
        J[:, :, 1] = (1.0 - e)[:, None] * hl * w
        J[:, :, 2] = -(1.0 - e)[:, None] * hl * LN10 * du * w
        g = np.einsum("mnp,mn->mp", J, r)
        A = np.einsum("mnp,mnq->mpq", J, J)
        diag = np.maximum(np.einsum("mpp->mp", A), DIAG_FLOOR)

        accepted = np.zeros(idx.size, dtype=bool)
        new_theta = th.copy()
        new_sse = sse[idx].copy()
        pending = np.ones(idx.size, dtype=bool)
        while pending.any():
            p = np.flatnonzero(pending)
            M = A[p].copy()
            lam_p = lam[idx[p]]
            for d in range(3):
                M[:, d, d] += lam_p * diag[p, d]
            step, ok = _chol_solve3(M, g[p])
            prop = _clip_theta(th[p] + step)
            sse_prop = _sse(prop, u, y)
            good = ok & (sse_prop <= sse[idx[p]])
            gi = p[good]
            accepted[gi] = True
            new_theta[gi] = prop[good]
            new_sse[gi] = sse_prop[good]
            pending[gi] = False
            bi = p[~good]
            lam[idx[bi]] *= 10.0
            gave_up = bi[lam[idx[bi]] > LAM_MAX]
            pending[gave_up] = False

        prev = sse[idx]
        improve = prev - new_sse
        theta[idx] = new_theta
        sse[idx] = new_sse
        lam[idx[accepted]] = np.maximum(lam[idx[accepted]] * 0.1, LAM_MIN)
        done = (
            ~accepted
            | (new_sse <= SSE_FLOOR)
            | (improve <= rel_tol * prev)
        )
        active[idx[done]] = False

    order = np.lexsort((theta[:, 1], sse))
    best = order[0]
    return theta[best].copy(), float(sse[best]), iters


def fit_pairs(
    doses: NDArray,
    viab: NDArray,
    offsets: NDArray,
    max_iter: int = 200,
    rel_tol: float = 1e-10,
) -> tuple[NDArray, NDArray, NDArray]:
    """Fit every pair in a flattened batch.

    Parameters
    ----------
    doses, viab : (m,) float64
        Concatenated per-pair measurements; doses strictly positive.
    offsets : (p+1,) int64
        Pair i occupies slice [offsets[i], offsets[i+1]).
    max_iter : int
        Outer LM iteration cap per start.
    rel_tol : float
        Stop once an accepted step's relative residual decrease drops
        below this.

    Returns
    -------
    theta : (p, 3) float64
        Fitted (einf, log10 ec50, log10 h) per pair.
    sse : (p,) float64
        Residual sum of squares at the fit.
    niter : (p,) int64
        Total LM iterations spent across the pair's starts.
    """
    doses = np.ascontiguousarray(doses, dtype=np.float64)
    viab = np.ascontiguousarray(viab, dtype=np.float64)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    n_pairs = offsets.size - 1
    u_all = np.log10(doses)

    theta = np.empty((n_pairs, 3))
    sse = np.empty(n_pairs)
    niter = np.empty(n_pairs, dtype=np.int64)
    for i in range(n_pairs):
        lo, hi = offsets[i], offsets[i + 1]
        theta[i], sse[i], niter[i] = _fit_one(
            u_all[lo:hi], viab[lo:hi], max_iter, rel_tol
        )
    return theta, sse, niter
