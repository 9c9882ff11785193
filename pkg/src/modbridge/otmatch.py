"""Entropic optimal transport between prototype sets.

A log-domain Sinkhorn-Knopp solver couples the visible and infrared
prototype sets under uniform marginals; row/column argmax of the plan
yields the cross-modality cluster correspondence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calibration import PrototypeSet


@dataclass(frozen=True)
class CostMatrix:
    """Yv x Yr positive costs, exp(-cosine similarity) of prototype pairs."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.size == 0:
            raise ValueError("cost matrix must be a non-empty 2-D matrix")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("cost matrix entries must be finite and nonnegative")
        object.__setattr__(self, "values", v)

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class TransportPlan:
    """Nonnegative coupling with uniform marginals 1/Yv and 1/Yr."""

    q: np.ndarray
    lambda_reg: float
    converged: bool
    iterations: int

    @property
    def shape(self):
        return self.q.shape

    def marginal_violation(self) -> float:
        yv, yr = self.q.shape
        row = np.abs(self.q.sum(axis=1) - 1.0 / yv).max()
        col = np.abs(self.q.sum(axis=0) - 1.0 / yr).max()
        return float(max(row, col))


@dataclass(frozen=True)
class CrossModalMatch:
    """Argmax correspondence between visible and infrared clusters."""

    v2r: np.ndarray
    r2v: np.ndarray


def build_cost(pv: PrototypeSet, pr: PrototypeSet) -> CostMatrix:
    """C_ij = exp(-cos(p_i^v, p_j^r)) for unit-norm prototype sets."""
    if pv.protos.shape[1] != pr.protos.shape[1]:
        raise ValueError("prototype sets have mismatched dimensions")
    return CostMatrix(values=np.exp(-(pv.protos @ pr.protos.T)))


def sinkhorn(cost: CostMatrix, lambda_reg: float, max_iters: int = 1000,
             tol: float = 1e-8) -> TransportPlan:
    """Log-domain Sinkhorn-Knopp with uniform marginals.

    Alternates row and column scalings of the Gibbs kernel exp(-lambda*C)
    until the worst marginal violation drops below tol; non-convergence is
    reported on the plan, never silently ignored.
    """
    if lambda_reg <= 0:
        raise ValueError("lambda_reg must be positive")
    if max_iters < 1 or tol <= 0:
        raise ValueError("max_iters must be >= 1 and tol positive")
    yv, yr = cost.shape
    log_a = -np.log(yv)
    log_b = -np.log(yr)
    log_k = -lambda_reg * cost.values
    log_k -= log_k.max()  # stabilization; the shift cancels in the potentials
    f = np.zeros(yv)
    g = np.zeros(yr)
    converged = False
    iterations = 0
    for iterations in range(1, max_iters + 1):
        f = log_a - _lse(log_k + g[None, :], axis=1)
        g = log_b - _lse(log_k + f[:, None], axis=0)
        log_q = log_k + f[:, None] + g[None, :]
        row_violation = np.abs(np.exp(_lse(log_q, axis=1)) - 1.0 / yv).max()
        col_violation = np.abs(np.exp(_lse(log_q, axis=0)) - 1.0 / yr).max()
        if max(row_violation, col_violation) < tol:
            converged = True
            break
    q = np.exp(log_k + f[:, None] + g[None, :])
    if not np.all(np.isfinite(q)):
        raise FloatingPointError("transport plan is non-finite after stabilization")
    return TransportPlan(q=q, lambda_reg=lambda_reg, converged=converged,
                         iterations=iterations)


def _lse(x: np.ndarray, axis: int) -> np.ndarray:
    m = x.max(axis=axis, keepdims=True)
    out = m[..., 0] if axis == -1 else np.squeeze(m, axis=axis)
    return out + np.log(np.exp(x - m).sum(axis=axis))


def extract_match(plan: TransportPlan) -> CrossModalMatch:
    """Row-wise and column-wise argmax of the plan; ties go to the smallest index."""
    return CrossModalMatch(
        v2r=plan.q.argmax(axis=1).astype(np.int64),
        r2v=plan.q.argmax(axis=0).astype(np.int64),
    )
