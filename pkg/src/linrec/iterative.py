"""Weighted matrix factorization fitted by alternating least squares."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .closed_form import FactorModel

_log = logging.getLogger(__name__)


@dataclass(frozen=True)
class WmfConfig:
    """ALS settings.  Observed entries get confidence ``alpha``, missing ones 1."""

    k: int = 10
    reg: float = 0.0
    alpha: float = 1.0
    iterations: int = 15
    seed: int = 0

    def __post_init__(self):
        if self.alpha < 1:
            raise ValueError("alpha must be >= 1")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.reg < 0:
            raise ValueError("lambda must be non-negative")
        if self.k < 1:
            raise ValueError("k must be positive")


def wmf_objective(data, P, Q, alpha, reg):
    """sum_ui c_ui (x_ui - p_u.q_i)^2 + reg (|P|^2 + |Q|^2), computed without the dense m x n matrix."""
    total = float(np.sum((P.T @ P) * (Q.T @ Q)))
    users = np.repeat(np.arange(data.num_users), data.row_counts())
    s = np.einsum("ij,ij->i", P[users], Q[data.indices])
    total += float(np.sum(alpha * (1.0 - s) ** 2 - s**2))
    return total + reg * (float(np.sum(P * P)) + float(np.sum(Q * Q)))


def _solve_side(indptr, indices, other, alpha, reg):
    """Exact weighted ridge solve for every row given the fixed other-side factors."""
    nrows = len(indptr) - 1
    k = other.shape[1]
    gram = other.T @ other
    eye = np.eye(k)
    out = np.zeros((nrows, k))
    for r in range(nrows):
        cols = indices[indptr[r]:indptr[r + 1]]
        Os = other[cols]
        A = gram + (alpha - 1.0) * (Os.T @ Os) + reg * eye
        b = alpha * Os.sum(axis=0)
        try:
            out[r] = np.linalg.solve(A, b)
        except np.linalg.LinAlgError:
            warnings.warn(f"singular ALS subproblem at row {r}; adding 1e-10 ridge", RuntimeWarning,
                          stacklevel=3)
            out[r] = np.linalg.solve(A + 1e-10 * eye, b)
    return out


def fit_wmf(data, cfg: WmfConfig):
    """Alternate exact user and item updates for ``cfg.iterations`` rounds.

    Returns the fitted :class:`FactorModel` and the objective value recorded
    after every half-step (initial value first).
    """
    m, n = data.shape
    if cfg.k > min(m, n):
        raise ValueError(f"k={cfg.k} exceeds min(m, n)={min(m, n)}")
    rng = np.random.default_rng(cfg.seed)
    P = 0.01 * rng.standard_normal((m, cfg.k))
    Q = 0.01 * rng.standard_normal((n, cfg.k))

    csc = data.to_csr().tocsc()
    csc.sort_indices()
    trace = [wmf_objective(data, P, Q, cfg.alpha, cfg.reg)]
    for it in range(cfg.iterations):
        P = _solve_side(data.indptr, data.indices, Q, cfg.alpha, cfg.reg)
        trace.append(wmf_objective(data, P, Q, cfg.alpha, cfg.reg))
        Q = _solve_side(csc.indptr, csc.indices, P, cfg.alpha, cfg.reg)
        trace.append(wmf_objective(data, P, Q, cfg.alpha, cfg.reg))
        _log.debug("wmf iteration %d: objective %.6g", it + 1, trace[-1])

    prov = {"model": "wmf", "k": cfg.k, "lambda": cfg.reg, "alpha": cfg.alpha,
            "iterations": cfg.iterations, "seed": cfg.seed}
    model = FactorModel(P, Q, 0.0, "wmf", None, cfg.alpha, cfg.reg, prov)
    return model, np.array(trace)
