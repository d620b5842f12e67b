"""Hyperparameter search: eigen-reuse grid search and BPR tuning of per-dimension lambdas."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .closed_form import SimilarityModel, lrr_ratio, spectral_fingerprint
from .data import Dataset
from .evaluation import evaluate, parse_metric
from .spectral import SpectralDecomposition

_log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GridSpec:
    lambdas: tuple
    ks: tuple
    metric: str = "ndcg@100"

    def __post_init__(self):
        if not self.lambdas or not self.ks:
            raise ValueError("grid lists must be non-empty")
        if list(self.ks) != sorted(self.ks):
            raise ValueError("ks must be sorted ascending")
        if any(lam < 0 for lam in self.lambdas):
            raise ValueError("lambdas must be non-negative")
        parse_metric(self.metric)


@dataclass
class GridCell:
    lam: float
    k: int
    value: float
    best: bool = False


def grid_search(spec: SpectralDecomposition, folds: Dataset, grid: GridSpec, which=None):
    """Evaluate the constant-lambda LRR model for every (lambda, k) pair.

    The decomposition is computed once by the caller; for each lambda the
    shrinkage vector is formed over all dimensions and each rank just keeps
    the first k columns.  Folds default to the validation set when one exists.
    Returns cells sorted by metric value, best first.
    """
    if max(grid.ks) > spec.rank:
        raise ValueError(f"max k={max(grid.ks)} exceeds rank {spec.rank}")
    if which is None:
        which = "validation" if folds.validation_folds else "test"
    fp = spectral_fingerprint(spec)
    Vks = {k: np.ascontiguousarray(spec.V[:, :k]) for k in grid.ks}
    sigmas = {k: np.ascontiguousarray(spec.sigma[:k]) for k in grid.ks}

    cells = []
    for lam in grid.lambdas:
        for k in grid.ks:
            d = np.atleast_1d(lrr_ratio(sigmas[k], np.full(k, float(lam))))
            model = SimilarityModel(left=Vks[k], d=d, sigma=sigmas[k],
                                    provenance={"model": "lrr", "k": k, "lambda": float(lam),
                                                "spectral": fp})
            report = evaluate(model, folds, [grid.metric], which=which, keep_per_user=False)
            cells.append(GridCell(float(lam), int(k), report.metrics[grid.metric]))
            _log.info("grid lambda=%g k=%d %s=%.5f", lam, k, grid.metric, cells[-1].value)
    cells.sort(key=lambda c: -c.value)
    cells[0].best = True
    return cells


@dataclass(frozen=True)
class TuneConfig:
    lambda0: float = 1.0
    c: float = 0.0
    t_scale: float = 1.0
    epochs: int = 10
    batch_size: int = 2048
    seed: int = 0
    learning_rate: float = 0.01
    dropout_rate: float = 0.0
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8

    def __post_init__(self):
        if self.c < 0:
            raise ValueError("c must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")


class Adam:
    """Adam with bias-corrected moments over a flat parameter vector."""

    def __init__(self, size, lr=0.01, betas=(0.9, 0.999), eps=1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params, grad):
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad * grad
        mhat = self.m / (1 - self.b1**self.t)
        vhat = self.v / (1 - self.b2**self.t)
        return params - self.lr * mhat / (np.sqrt(vhat) + self.eps)


def sample_triplets(train, rng):
    """One (u, i, j) per positive pair, j uniform over the user's non-interacted items.

    Users without positives or without negatives contribute nothing.  The
    returned triplets are shuffled.
    """
    counts = train.row_counts()
    ok = (counts > 0) & (counts < train.num_items)
    users = np.repeat(np.arange(train.num_users), counts)
    pos = train.indices
    keep = ok[users]
    users, pos = users[keep], pos[keep]
    X = train.to_csr()
    neg = rng.integers(0, train.num_items, size=len(users))
    bad = np.flatnonzero(np.asarray(X[users, neg]).ravel() > 0)
    while len(bad):
        neg[bad] = rng.integers(0, train.num_items, size=len(bad))
        still = np.asarray(X[users[bad], neg[bad]]).ravel() > 0
        bad = bad[still]
    order = rng.permutation(len(users))
    return users[order], pos[order], neg[order]


def bpr_terms(diff, t_scale):
    """Per-triplet loss -log sigmoid(t * diff) and its derivative with respect to diff."""
    z = t_scale * diff
    return np.logaddexp(0.0, -z), -t_scale * expit(-z)


def bpr_loss(model, triplets, t_scale, train):
    """Mean BPR loss of ``model`` over ``(u, i, j)`` triplets, scoring with the train rows."""
    trip = np.asarray(triplets, dtype=np.int64).reshape(-1, 3)
    if len(trip) == 0:
        raise ValueError("no triplets")
    X = train.to_csr()
    u, i, j = trip.T
    if np.any(u < 0) or np.any(u >= train.num_users):
        raise ValueError("malformed triplet: user index out of range")
    if np.any(np.asarray(X[u, i]).ravel() == 0):
        raise ValueError("malformed triplet: i is not a positive item of u")
    if np.any(np.asarray(X[u, j]).ravel() != 0):
        raise ValueError("malformed triplet: j is a positive item of u")
    S = model.scores(X[u].toarray())
    rows = np.arange(len(trip))
    loss, _ = bpr_terms(S[rows, i] - S[rows, j], t_scale)
    return float(np.mean(loss))


def lambdas_from_alphas(alphas, lambda0, c):
    return lambda0 + c * np.tanh(alphas)


def lambda_loss_grad(alphas, lambda0, c, sigma, Vk, Xb, ii, jj, t_scale):
    """Mean BPR loss of the per-dimension LRR model and its gradient in alpha."""
    lams = lambdas_from_alphas(alphas, lambda0, c)
    s2 = sigma * sigma
    d = s2 / (s2 + lams)
    Z = Xb @ Vk
    Dv = Vk[ii] - Vk[jj]
    ZD = Z * Dv
    loss, dz = bpr_terms(ZD @ d, t_scale)
    B = len(ii)
    grad_d = (dz @ ZD) / B
    dd_dlam = -s2 / (s2 + lams) ** 2
    dlam_da = c * (1.0 - np.tanh(alphas) ** 2)
    return float(np.mean(loss)), grad_d * dd_dlam * dlam_da


def bpr_train(train, cfg, params, loss_grad):
    """Shared BPR loop: resample triplets every epoch, Adam step per batch.

    ``loss_grad(params, Xb, ii, jj)`` returns the mean batch loss and its
    gradient.  Input dropout (inverted scaling) is applied to ``Xb``.
    Returns the final parameters and the per-epoch mean loss.
    """
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(len(params), cfg.learning_rate, cfg.betas, cfg.eps)
    X = train.to_csr()
    trace = []
    for epoch in range(cfg.epochs):
        uu, ii, jj = sample_triplets(train, rng)
        if len(uu) == 0:
            raise ValueError("no training user has both positive and negative items")
        total = 0.0
        for start in range(0, len(uu), cfg.batch_size):
            sl = slice(start, start + cfg.batch_size)
            Xb = X[uu[sl]].toarray()
            if cfg.dropout_rate > 0:
                Xb *= (rng.random(Xb.shape) >= cfg.dropout_rate) / (1.0 - cfg.dropout_rate)
            loss, grad = loss_grad(params, Xb, ii[sl], jj[sl])
            params = opt.step(params, grad)
            total += loss * len(ii[sl])
        trace.append(total / len(uu))
        _log.info("epoch %d: mean BPR loss %.6f", epoch + 1, trace[-1])
    return params, np.array(trace)


@dataclass(eq=False)
class TunedModel:
    """LRR model with per-dimension lambdas ``lambda0 + c * tanh(alpha_i)``."""

    alphas: np.ndarray
    lambda0: float
    c: float
    sigma: np.ndarray
    V: np.ndarray
    loss_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))
    provenance: dict = field(default_factory=dict)

    @property
    def lambdas(self):
        return lambdas_from_alphas(self.alphas, self.lambda0, self.c)

    @property
    def d(self):
        return lrr_ratio(self.sigma, self.lambdas)

    @property
    def num_items(self):
        return self.V.shape[0]

    def similarity(self):
        prov = dict(self.provenance)
        prov["lambdas"] = [float(x) for x in self.lambdas]
        return SimilarityModel(left=self.V, d=np.atleast_1d(self.d), provenance=prov,
                               sigma=self.sigma)

    def scores(self, X):
        return self.similarity().scores(X)


def tune_lambdas(spec: SpectralDecomposition, k, train, cfg: TuneConfig) -> TunedModel:
    """Search per-dimension lambdas around ``cfg.lambda0`` by minimizing the BPR loss.

    alpha starts at 0, so the initial model is the constant-lambda closed form.
    ``c`` may not exceed ``lambda0`` so every lambda_i stays non-negative.
    """
    if not 1 <= k <= spec.rank:
        raise ValueError(f"k={k} must lie in [1, rank={spec.rank}]")
    if cfg.c > cfg.lambda0:
        raise ValueError("c must not exceed lambda0 (lambda_i would go negative)")
    sigma, Vk = spec.truncate(k)

    def loss_grad(alphas, Xb, ii, jj):
        return lambda_loss_grad(alphas, cfg.lambda0, cfg.c, sigma, Vk, Xb, ii, jj, cfg.t_scale)

    alphas, trace = bpr_train(train, cfg, np.zeros(k), loss_grad)
    prov = {"model": "lrr_tuned", "k": int(k), "lambda": cfg.lambda0, "c": cfg.c,
            "t_scale": cfg.t_scale, "epochs": cfg.epochs, "seed": cfg.seed,
            "dropout": cfg.dropout_rate, "spectral": spectral_fingerprint(spec)}
    return TunedModel(alphas, cfg.lambda0, cfg.c, sigma, Vk, trace, prov)
