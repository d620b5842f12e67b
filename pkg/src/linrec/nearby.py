"""Nearby models: head/tail rescaling and sparsify-and-reweight on top of a fitted W.

    W_HT = diagM(sigmoid(h)) W diagM(sigmoid(t))
    W_S  = sigmoid(S) * W * (W >= threshold)

The base matrix is never modified; augmentation parameters live next to it.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .closed_form import SimilarityModel
from .errors import EmptyMaskWarning
from .search import TuneConfig, bpr_terms, bpr_train

_log = logging.getLogger(__name__)

#: Starting logit for every augmentation parameter; sigmoid(6) ~ 0.9975.
INIT_LOGIT = 6.0


@dataclass(eq=False)
class HeadTailParams:
    h: np.ndarray
    t: np.ndarray

    @classmethod
    def init(cls, n, logit=INIT_LOGIT):
        return cls(np.full(n, logit), np.full(n, logit))

    @property
    def head(self):
        return expit(self.h)

    @property
    def tail(self):
        return expit(self.t)


@dataclass(eq=False)
class SparsifyParams:
    """Threshold, survivor mask and one logit per surviving entry (row-major order)."""

    threshold: float
    mask: np.ndarray
    s_logits: np.ndarray

    @property
    def num_survivors(self):
        return int(self.mask.sum())

    def scale_matrix(self):
        S = np.zeros(self.mask.shape)
        S[self.mask] = expit(self.s_logits)
        return S


def sparsify_params(w: SimilarityModel, threshold=None, keep_fraction=0.1, logit=INIT_LOGIT):
    """Mask ``W >= threshold``; by default the threshold keeps the top ``keep_fraction`` of entries."""
    W = w.materialize()
    if threshold is None:
        threshold = float(np.quantile(W, 1.0 - keep_fraction))
    mask = W >= threshold
    if not mask.any():
        warnings.warn(f"threshold {threshold} masks every entry", EmptyMaskWarning, stacklevel=2)
    return SparsifyParams(float(threshold), mask, np.full(int(mask.sum()), float(logit)))


def apply_ht(w: SimilarityModel, params: HeadTailParams) -> SimilarityModel:
    n = w.num_items
    if len(params.h) != n or len(params.t) != n:
        raise ValueError(f"head/tail length must be {n}")
    H, T = params.head, params.tail
    prov = dict(w.provenance, augment="ht")
    if w.factored:
        return SimilarityModel(left=w.left * H[:, None], d=w.d, right=w.right_factor * T[:, None],
                               zero_diagonal=w.zero_diagonal, provenance=prov, sigma=w.sigma)
    return SimilarityModel(W=H[:, None] * w.W * T[None, :], zero_diagonal=w.zero_diagonal,
                           provenance=prov)


def apply_sparsify(w: SimilarityModel, params: SparsifyParams) -> SimilarityModel:
    W = w.materialize()
    if params.mask.shape != W.shape or not np.array_equal(params.mask, W >= params.threshold):
        raise ValueError("sparsification mask was not built from this model at its threshold")
    if not params.mask.any():
        warnings.warn("sparsification mask is empty; result is the zero matrix", EmptyMaskWarning,
                      stacklevel=2)
    out = np.zeros_like(W)
    out[params.mask] = W[params.mask] * expit(params.s_logits)
    prov = dict(w.provenance, augment="sparsify", threshold=params.threshold)
    return SimilarityModel(W=out, zero_diagonal=w.zero_diagonal, provenance=prov)


def remove_diagonal(w: SimilarityModel) -> SimilarityModel:
    W = np.array(w.materialize(), copy=True)
    np.fill_diagonal(W, 0.0)
    return SimilarityModel(W=W, zero_diagonal=True, provenance=dict(w.provenance, rmd=True),
                           sigma=w.sigma)


@dataclass(eq=False)
class NearbyModel:
    """A frozen base model plus augmentation parameters, optionally with RMD."""

    base: SimilarityModel
    mode: str
    params: object
    rmd: bool = False
    loss_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))
    provenance: dict = field(default_factory=dict)

    def similarity(self):
        if self.mode == "ht":
            w = apply_ht(self.base, self.params)
        else:
            w = apply_sparsify(self.base, self.params)
        if self.rmd:
            w = remove_diagonal(w)
        return w.with_provenance(**self.provenance)

    @property
    def num_items(self):
        return self.base.num_items

    def scores(self, X):
        return self.similarity().scores(X)


def _ht_loss_grad(W0, n, t_scale):
    def loss_grad(params, Xb, ii, jj):
        H, T = expit(params[:n]), expit(params[n:])
        A = Xb * H
        Wi, Wj = W0[:, ii].T, W0[:, jj].T
        yi = np.einsum("bk,bk->b", A, Wi)
        yj = np.einsum("bk,bk->b", A, Wj)
        loss, dz = bpr_terms(T[ii] * yi - T[jj] * yj, t_scale)
        g = dz / len(ii)
        gT = np.zeros(n)
        np.add.at(gT, ii, g * yi)
        np.add.at(gT, jj, -g * yj)
        gH = ((g * T[ii])[:, None] * Wi - (g * T[jj])[:, None] * Wj) * Xb
        gH = gH.sum(axis=0)
        return float(np.mean(loss)), np.concatenate([gH * H * (1 - H), gT * T * (1 - T)])

    return loss_grad


def _sparse_loss_grad(W, mask, rmd, t_scale):
    Wm = np.where(mask, W, 0.0)
    if rmd:
        np.fill_diagonal(Wm, 0.0)
    n = W.shape[0]
    w_surv = Wm[mask]

    def loss_grad(params, Xb, ii, jj):
        S = np.zeros((n, n))
        sig = expit(params)
        S[mask] = sig
        Weff = S * Wm
        rows = np.arange(len(ii))
        si = np.einsum("bk,kb->b", Xb, Weff[:, ii])
        sj = np.einsum("bk,kb->b", Xb, Weff[:, jj])
        loss, dz = bpr_terms(si - sj, t_scale)
        E = np.zeros((len(ii), n))
        g = dz / len(ii)
        np.add.at(E, (rows, ii), g)
        np.add.at(E, (rows, jj), -g)
        G = Xb.T @ E
        return float(np.mean(loss)), G[mask] * w_surv * sig * (1 - sig)

    return loss_grad


def tune_nearby(w: SimilarityModel, mode, train, cfg: TuneConfig, rmd=False, threshold=None,
                keep_fraction=0.1):
    """Fit head/tail (``mode="ht"``) or sparsify (``mode="sparse"``) logits with the BPR loss.

    The base ``w`` stays frozen.  Logits start at +6 so the initial model is
    a near-identity rescaling of the base.  With ``rmd`` the diagonal is
    removed after scaling in every forward pass.
    """
    n = w.num_items
    W = w.materialize()
    if mode == "ht":
        params0 = HeadTailParams.init(n)
        W0 = np.array(W, copy=True)
        if rmd:
            np.fill_diagonal(W0, 0.0)
        flat, trace = bpr_train(train, cfg, np.concatenate([params0.h, params0.t]),
                                _ht_loss_grad(W0, n, cfg.t_scale))
        params = HeadTailParams(flat[:n], flat[n:])
    elif mode in ("sparse", "sparsify"):
        mode = "sparse"
        sp = sparsify_params(w, threshold, keep_fraction)
        flat, trace = bpr_train(train, cfg, sp.s_logits,
                                _sparse_loss_grad(W, sp.mask, rmd, cfg.t_scale))
        params = SparsifyParams(sp.threshold, sp.mask, flat)
    else:
        raise ValueError(f"unknown nearby mode {mode!r}")
    prov = {"augment": mode, "rmd": bool(rmd), "epochs": cfg.epochs, "seed": cfg.seed,
            "t_scale": cfg.t_scale}
    model = NearbyModel(w, mode, params, bool(rmd), trace, prov)
    return model, trace
