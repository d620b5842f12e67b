"""Closed-form linear recommenders built from the Gram eigendecomposition.

Low-rank ridge regression (LRR) and regularized matrix factorization (MF) both
keep the top-k eigenvectors V_k of XᵀX and shrink each dimension:

* LRR: d_i = sigma_i^2 / (sigma_i^2 + lambda_i)
* MF:  d_i = max(0, 1 - lambda' / sigma_i)

so that W = V_k diag(d) V_kᵀ.  EASE and DLAE are full-rank dense solves.
"""

from __future__ import annotations

import hashlib
import logging
import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import NumericalError, ShrinkageClampWarning
from .spectral import SpectralDecomposition, left_factors

_log = logging.getLogger(__name__)


def spectral_fingerprint(spec: SpectralDecomposition) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(spec.sigma, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(spec.V, dtype="<f8").tobytes())
    return h.hexdigest()[:16]


def factored_scores(X, left, d, right):
    """Scores X (left diag(d) rightᵀ) without forming the n x n matrix."""
    return ((X @ left) * d) @ right.T


@dataclass(eq=False)
class SimilarityModel:
    """Item-item weight matrix, either dense (``W``) or factored.

    The factored form stores ``left`` (n x k), ``d`` (k) and optionally
    ``right`` (n x k, defaults to ``left``) and represents
    ``W = left @ diag(d) @ right.T``.
    """

    W: np.ndarray | None = None
    left: np.ndarray | None = None
    d: np.ndarray | None = None
    right: np.ndarray | None = None
    zero_diagonal: bool = False
    provenance: dict = field(default_factory=dict)
    sigma: np.ndarray | None = None

    def __post_init__(self):
        if (self.W is None) == (self.left is None):
            raise ValueError("similarity model must be either dense or factored")
        if self.left is not None and self.d is None:
            raise ValueError("factored model needs a diagonal vector")

    @property
    def factored(self):
        return self.W is None

    @property
    def num_items(self):
        return self.W.shape[0] if self.W is not None else self.left.shape[0]

    @property
    def right_factor(self):
        return self.left if self.right is None else self.right

    def materialize(self):
        if self.W is not None:
            return self.W
        return (self.left * self.d) @ self.right_factor.T

    def diagonal(self):
        if self.W is not None:
            return np.diag(self.W).copy()
        return np.einsum("ik,k,ik->i", self.left, self.d, self.right_factor)

    def scores(self, X):
        """Row-wise scores ``X @ W`` for a dense (users x items) input."""
        if self.W is not None:
            return X @ self.W
        return factored_scores(X, self.left, self.d, self.right_factor)

    def with_provenance(self, **extra):
        prov = dict(self.provenance)
        prov.update(extra)
        return SimilarityModel(
            self.W, self.left, self.d, self.right, self.zero_diagonal, prov, self.sigma
        )


@dataclass(eq=False)
class FactorModel:
    """User factors P (m x k) and item factors Q (n x k), scores P Qᵀ.

    ``kind`` is ``"mf"`` for the closed-form shrunken SVD (Q = V_k, fold-in
    via the encoder view) or ``"wmf"`` for the ALS fit (fold-in by a weighted
    ridge solve with the stored ``alpha``/``reg``).
    """

    P: np.ndarray
    Q: np.ndarray
    shrinkage: float = 0.0
    kind: str = "mf"
    sigma: np.ndarray | None = None
    alpha: float = 1.0
    reg: float = 0.0
    provenance: dict = field(default_factory=dict)

    @property
    def k(self):
        return self.Q.shape[1]

    @property
    def num_items(self):
        return self.Q.shape[0]

    def fold_in(self, X):
        """User factors for new users given their (dense) fold-in rows."""
        if self.kind == "mf":
            keep = np.maximum(0.0, self.sigma - self.shrinkage)
            return (X @ self.Q) * (keep / self.sigma)
        return _wmf_fold_in(X, self.Q, self.alpha, self.reg)

    def scores(self, X):
        return self.fold_in(X) @ self.Q.T


def _wmf_fold_in(X, Q, alpha, reg):
    k = Q.shape[1]
    QtQ = Q.T @ Q
    out = np.zeros((X.shape[0], k))
    for r in range(X.shape[0]):
        items = np.flatnonzero(X[r])
        Qs = Q[items]
        A = QtQ + (alpha - 1.0) * (Qs.T @ Qs) + reg * np.eye(k)
        b = alpha * Qs.sum(axis=0)
        out[r] = np.linalg.lstsq(A, b, rcond=None)[0]
    return out


class RegKind(str, Enum):
    CONSTANT = "constant"
    PER_DIMENSION = "per_dimension"
    DROPOUT = "dropout"


@dataclass(frozen=True)
class RegularizerSpec:
    kind: RegKind
    value: object

    def __post_init__(self):
        object.__setattr__(self, "kind", RegKind(self.kind))
        if self.kind is RegKind.CONSTANT:
            if not self.value >= 0:
                raise ValueError(f"lambda must be non-negative, got {self.value}")
        elif self.kind is RegKind.PER_DIMENSION:
            arr = np.asarray(self.value, dtype=np.float64)
            if arr.ndim != 1 or np.any(~(arr >= 0)):
                raise ValueError("per-dimension lambdas must be a non-negative vector")
            object.__setattr__(self, "value", arr)
        elif not 0.0 <= self.value < 1.0:
            raise ValueError(f"dropout probability must lie in [0, 1), got {self.value}")

    @classmethod
    def constant(cls, lam):
        return cls(RegKind.CONSTANT, float(lam))

    @classmethod
    def per_dimension(cls, lams):
        return cls(RegKind.PER_DIMENSION, lams)

    @classmethod
    def dropout(cls, p):
        return cls(RegKind.DROPOUT, float(p))


def lrr_ratio(sigma, lam):
    """Fraction sigma^2 / (sigma^2 + lambda) of each singular value kept by LRR."""
    sigma = np.asarray(sigma, dtype=np.float64)
    s2 = sigma * sigma
    out = s2 / (s2 + lam)
    return float(out) if out.ndim == 0 else out


def mf_ratio(sigma, lambda_prime):
    """Fraction 1 - lambda'/sigma kept by regularized MF, clamped at zero.

    Clamping emits :class:`ShrinkageClampWarning`.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    raw = 1.0 - lambda_prime / sigma
    clamped = raw < 0
    if np.any(clamped):
        warnings.warn(
            f"MF shrinkage lambda'={lambda_prime} exceeds {int(np.sum(clamped))} singular value(s); "
            "factors clamped to zero",
            ShrinkageClampWarning,
            stacklevel=2,
        )
    out = np.maximum(raw, 0.0)
    return float(out) if out.ndim == 0 else out


def lrr_delta(sigma, lam):
    """Absolute reduction sigma - sigma * lrr_ratio = lambda / (sigma + lambda / sigma)."""
    sigma = np.asarray(sigma, dtype=np.float64)
    out = lam / (sigma + lam / sigma)
    return float(out) if out.ndim == 0 else out


def _check_rank(spec, k):
    if not 1 <= k <= spec.rank:
        raise ValueError(f"k={k} must lie in [1, rank={spec.rank}]")


def _is_degenerate(spec, k):
    if k >= spec.rank:
        return False
    a, b = spec.sigma[k - 1], spec.sigma[k]
    return bool(a - b <= 1e-12 * a)


def fit_lrr(spec: SpectralDecomposition, k, reg, strict=False) -> SimilarityModel:
    """Low-rank ridge regression in closed form.

    ``reg`` may be a number (constant lambda) or a :class:`RegularizerSpec`.
    Constant and per-dimension regularizers give a factored model
    ``V_k diag(sigma^2/(sigma^2+lambda_i)) V_kᵀ``.  A dropout-induced
    regularizer is not diagonal in the eigenbasis, so the general two-stage
    solution (ridge solve, then rank-k projection) is returned dense.
    """
    if not isinstance(reg, RegularizerSpec):
        reg = RegularizerSpec.constant(reg)
    _check_rank(spec, k)
    degenerate = _is_degenerate(spec, k)
    if degenerate and strict:
        raise NumericalError(f"sigma_{k} == sigma_{k + 1}: rank-{k} truncation is not unique")
    prov = {"model": "lrr", "k": int(k), "spectral": spectral_fingerprint(spec)}
    if degenerate:
        prov["degenerate_truncation"] = True

    if reg.kind is RegKind.DROPOUT:
        prov["p"] = reg.value
        return SimilarityModel(W=_lrr_dropout_dense(spec, k, reg.value), provenance=prov)

    sigma, Vk = spec.truncate(k)
    if reg.kind is RegKind.CONSTANT:
        lams = np.full(k, reg.value)
        prov["lambda"] = reg.value
    else:
        lams = reg.value
        if len(lams) != k:
            raise ValueError(f"expected {k} per-dimension lambdas, got {len(lams)}")
        prov["lambdas"] = [float(x) for x in lams]
    d = lrr_ratio(sigma, lams)
    return SimilarityModel(left=Vk, d=np.atleast_1d(d), provenance=prov, sigma=sigma)


def _lrr_dropout_dense(spec, k, p):
    G = spec.gram()
    lam = p / (1.0 - p) * np.diag(G)
    A = G + np.diag(lam)
    try:
        Wstar = np.linalg.solve(A, G)
    except np.linalg.LinAlgError as e:
        raise NumericalError(f"singular system in dropout-regularized LRR: {e}") from e
    # right singular vectors of [X; Lambda^1/2] W*: eigenvectors of W*ᵀ A W*
    M = Wstar.T @ A @ Wstar
    evals, evecs = np.linalg.eigh((M + M.T) / 2)
    Qk = evecs[:, np.argsort(-evals, kind="stable")[:k]]
    return Wstar @ Qk @ Qk.T


def fit_mf(spec: SpectralDecomposition, data, k, lambda_prime) -> FactorModel:
    """Regularized SVD in closed form: P = U_k diag(sigma - lambda'), Q = V_k.

    Dimensions with sigma_i <= lambda' are clamped to zero with a warning.
    ``lambda_prime=0`` is PureSVD.
    """
    if lambda_prime < 0:
        raise ValueError("lambda' must be non-negative")
    _check_rank(spec, k)
    sigma, Vk = spec.truncate(k)
    Uk = left_factors(data, spec, k)
    raw = sigma - lambda_prime
    clamped = np.flatnonzero(raw <= 0)
    prov = {"model": "mf", "k": int(k), "lambda_prime": float(lambda_prime),
            "spectral": spectral_fingerprint(spec)}
    if len(clamped):
        warnings.warn(
            f"lambda'={lambda_prime} >= sigma at dimensions {clamped.tolist()}; clamped to zero",
            ShrinkageClampWarning,
            stacklevel=2,
        )
        prov["clamped_dims"] = clamped.tolist()
    P = Uk * np.maximum(raw, 0.0)
    return FactorModel(P, Vk, float(lambda_prime), "mf", sigma, provenance=prov)


def mf_as_encoder(model: FactorModel, spec: SpectralDecomposition) -> SimilarityModel:
    """Item-item form W = V_k diag(1 - lambda'/sigma_i) V_kᵀ of an MF model, so X W = P Qᵀ."""
    if model.kind != "mf":
        raise ValueError("only closed-form MF models have an encoder form")
    fp = spectral_fingerprint(spec)
    if model.provenance.get("spectral") != fp:
        raise ValueError("factor model was not built from this spectral decomposition")
    sigma, Vk = spec.truncate(model.k)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ShrinkageClampWarning)
        d = np.atleast_1d(mf_ratio(sigma, model.shrinkage))
    prov = {"model": "mf_encoder", "k": model.k, "lambda_prime": model.shrinkage, "spectral": fp}
    return SimilarityModel(left=Vk, d=d, provenance=prov, sigma=sigma)


def fit_ease(data, lam) -> SimilarityModel:
    """Ridge regression with a zero-diagonal constraint.

    W = I - P diagM(1/diag(P)) with P = (XᵀX + lambda I)^-1, diagonal set to 0.
    """
    if not lam > 0:
        raise ValueError(f"EASE needs lambda > 0, got {lam}")
    G = data.gram()
    G[np.diag_indices_from(G)] += lam
    try:
        P = np.linalg.inv(G)
    except np.linalg.LinAlgError as e:
        raise NumericalError(f"EASE inverse failed: {e}") from e
    W = -P / np.diag(P)
    np.fill_diagonal(W, 0.0)
    return SimilarityModel(W=W, zero_diagonal=True, provenance={"model": "ease", "lambda": float(lam)})


def fit_dlae(data, p) -> SimilarityModel:
    """Denoising linear autoencoder: W = (XᵀX + Lambda)^-1 XᵀX, Lambda = p/(1-p) diagM(diag(XᵀX))."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must lie in [0, 1), got {p}")
    G = data.gram()
    A = G + np.diag(p / (1.0 - p) * np.diag(G))
    if np.linalg.matrix_rank(A) < A.shape[0]:
        hint = " (try p > 0)" if p == 0 else " (some items have no interactions)"
        raise NumericalError("DLAE system XᵀX + Lambda is singular" + hint)
    W = np.linalg.solve(A, G)
    return SimilarityModel(W=W, provenance={"model": "dlae", "p": float(p)})


def spectrum_table(spec: SpectralDecomposition, lam, lambda_prime):
    """Per-dimension shrinkage curves: one dict per singular value."""
    sigma = spec.sigma
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ShrinkageClampWarning)
        mf = np.atleast_1d(mf_ratio(sigma, lambda_prime))
    lr = np.atleast_1d(lrr_ratio(sigma, lam))
    delta = np.atleast_1d(lrr_delta(sigma, lam))
    return [
        {
            "index": i + 1,
            "sigma": float(sigma[i]),
            "lrr_scaled": float(sigma[i] * lr[i]),
            "mf_scaled": float(sigma[i] * mf[i]),
            "lrr_ratio": float(lr[i]),
            "mf_ratio": float(mf[i]),
            "delta": float(delta[i]),
        }
        for i in range(len(sigma))
    ]
