"""alpha-entmax: a sparse normalizing transform solved by bisection.

For alpha in (1, 2] the transform maps a score vector z to
p_i = [(alpha-1) z_i - tau]_+^(1/(alpha-1)) with tau chosen so sum(p) = 1.
It interpolates softmax (alpha -> 1) and sparsemax (alpha = 2) and assigns
exact zeros to scores far enough below the maximum. The threshold is found
by bisecting on the scaled scores z' = (alpha-1) z, where the bracket
[max(z') - 1, max(z') - d^(1-alpha)] provably contains the root.

Besides the single-vector API, segmented variants operate on a flat value
array split into contiguous rows by an indptr, which is how the attention
layer normalizes all nodes (and heads) in one call.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BISECT_TOL = 1e-10
BISECT_MAX_ITER = 100


@dataclass(frozen=True)
class EntmaxResult:
    """Probabilities, the solved threshold (scaled domain), and the support set."""

    p: np.ndarray
    tau: float
    support: np.ndarray


def _check_alpha(alpha: float) -> None:
    if not alpha > 1:
        raise ValueError(f"alpha must be > 1 (got {alpha}); the softmax limit is a separate code path")


def entmax_tau(z, alpha: float) -> float:
    """Solve for the threshold of a single score vector.

    Bisects on the scaled scores until |sum(p) - 1| <= 1e-10 or 100
    iterations. The returned tau lives in the scaled domain, i.e.
    p = [ (alpha-1) z - tau ]_+^(1/(alpha-1)).
    """
    _check_alpha(alpha)
    z = np.asarray(z, dtype=np.float64)
    if z.size == 0:
        raise ValueError("empty score vector")
    zs = (alpha - 1.0) * z
    d = zs.size
    hi_anchor = zs.max()
    lo = hi_anchor - 1.0
    hi = hi_anchor - d ** (1.0 - alpha)
    inv = 1.0 / (alpha - 1.0)
    tau = lo
    for _ in range(BISECT_MAX_ITER):
        tau = 0.5 * (lo + hi)
        total = np.maximum(zs - tau, 0.0) ** inv
        s = total.sum()
        if abs(s - 1.0) <= BISECT_TOL:
            break
        if s < 1.0:
            hi = tau
        else:
            lo = tau
    return float(tau)


def entmax(z, alpha: float) -> EntmaxResult:
    """Normalize a score vector with alpha-entmax."""
    z = np.asarray(z, dtype=np.float64)
    tau = entmax_tau(z, alpha)
    p = np.maximum((alpha - 1.0) * z - tau, 0.0) ** (1.0 / (alpha - 1.0))
    return EntmaxResult(p=p, tau=tau, support=np.flatnonzero(p > 0))


def entmax_jvp(result: EntmaxResult, alpha: float, upstream) -> np.ndarray:
    """Gradient of the loss w.r.t. z given the gradient w.r.t. p.

    On the support, with s_i = p_i^(2-alpha):
        g = s * u - s * (s . u) / sum(s)
    and exactly zero off-support. (The entmax Jacobian is symmetric, so the
    vector-Jacobian and Jacobian-vector products coincide.)
    """
    _check_alpha(alpha)
    u = np.asarray(upstream, dtype=np.float64)
    p = result.p
    s = np.where(p > 0, p ** (2.0 - alpha), 0.0)
    ssum = s.sum()
    if ssum == 0:
        return np.zeros_like(p)
    return s * u - s * (s @ u) / ssum


def softmax(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max())
    return e / e.sum()


# ---------------------------------------------------------------------------
# Segmented variants: values is (m,) or (m, h); indptr splits axis 0 into rows.
# Rows must be non-empty (the attention layer always includes a self-loop).
# ---------------------------------------------------------------------------


def _row_ids(indptr: np.ndarray) -> np.ndarray:
    return np.repeat(np.arange(indptr.size - 1), np.diff(indptr))


def segment_entmax(values, indptr, alpha: float) -> np.ndarray:
    """alpha-entmax applied independently to every row of a segmented array."""
    _check_alpha(alpha)
    values = np.asarray(values, dtype=np.float64)
    if np.any(np.diff(indptr) <= 0):
        raise ValueError("segments must be non-empty")
    zs = (alpha - 1.0) * values
    starts = indptr[:-1]
    lens = np.diff(indptr).astype(np.float64)
    hi_anchor = np.maximum.reduceat(zs, starts, axis=0)
    if values.ndim == 2:
        lens = lens[:, None]
    lo = hi_anchor - 1.0
    hi = hi_anchor - lens ** (1.0 - alpha)
    inv = 1.0 / (alpha - 1.0)
    rows = _row_ids(indptr)
    p = np.empty_like(zs)
    for _ in range(BISECT_MAX_ITER):
        tau = 0.5 * (lo + hi)
        np.maximum(zs - tau[rows], 0.0, out=p)
        if inv != 1.0:
            np.power(p, inv, out=p)
        sums = np.add.reduceat(p, starts, axis=0)
        if np.abs(sums - 1.0).max() <= BISECT_TOL:
            break
        low = sums < 1.0
        hi = np.where(low, tau, hi)
        lo = np.where(low, lo, tau)
    return p


def segment_entmax_vjp(p, indptr, alpha: float, upstream) -> np.ndarray:
    """Row-wise entmax gradient (see entmax_jvp) on a segmented array."""
    _check_alpha(alpha)
    starts = indptr[:-1]
    rows = _row_ids(indptr)
    s = np.where(p > 0, p ** (2.0 - alpha), 0.0)
    su = s * upstream
    dot = np.add.reduceat(su, starts, axis=0)
    ssum = np.add.reduceat(s, starts, axis=0)
    ratio = np.divide(dot, ssum, out=np.zeros_like(dot), where=ssum > 0)
    return su - s * ratio[rows]


def segment_softmax(values, indptr) -> np.ndarray:
    """Row-wise softmax on a segmented array (the entmax alpha -> 1 limit)."""
    values = np.asarray(values, dtype=np.float64)
    starts = indptr[:-1]
    rows = _row_ids(indptr)
    shifted = values - np.maximum.reduceat(values, starts, axis=0)[rows]
    e = np.exp(shifted)
    return e / np.add.reduceat(e, starts, axis=0)[rows]


def segment_softmax_vjp(p, indptr, upstream) -> np.ndarray:
    """Row-wise softmax gradient: g = p * (u - <p, u>)."""
    starts = indptr[:-1]
    rows = _row_ids(indptr)
    dot = np.add.reduceat(p * upstream, starts, axis=0)
    return p * (upstream - dot[rows])
