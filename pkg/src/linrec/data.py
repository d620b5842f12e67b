"""Interaction ingestion, filtering and evaluation splits."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
import scipy.sparse as sps

from .errors import DataError

_log = logging.getLogger(__name__)


class InteractionMatrix:
    """Binary user x item matrix stored in CSR form.

    Row ``u`` holds the strictly increasing item indices user ``u`` interacted
    with.  ``user_ids`` and ``item_ids`` map dense indices back to the external
    identifiers they were read from.
    """

    def __init__(self, indptr, indices, num_items, user_ids=None, item_ids=None):
        indptr = np.asarray(indptr, dtype=np.int64)
        indices = np.asarray(indices, dtype=np.int64)
        num_users = len(indptr) - 1
        if num_users < 0 or indptr[0] != 0 or indptr[-1] != len(indices):
            raise DataError("inconsistent row pointer array")
        if np.any(np.diff(indptr) < 0):
            raise DataError("row pointers must be non-decreasing")
        if len(indices):
            if indices.min() < 0 or indices.max() >= num_items:
                raise DataError("item index out of range")
            steps = np.diff(indices)
            # a step may only be non-positive where a new row starts
            starts = np.zeros(len(indices), dtype=bool)
            starts[indptr[:-1][indptr[:-1] < len(indices)]] = True
            if np.any((steps <= 0) & ~starts[1:]):
                raise DataError("row item lists must be strictly increasing")
        self.indptr = indptr
        self.indices = indices
        self.num_users = int(num_users)
        self.num_items = int(num_items)
        self.user_ids = list(user_ids) if user_ids is not None else [str(u) for u in range(num_users)]
        self.item_ids = list(item_ids) if item_ids is not None else [str(i) for i in range(num_items)]
        if len(self.user_ids) != self.num_users or len(self.item_ids) != self.num_items:
            raise DataError("id map length does not match matrix shape")

    @classmethod
    def from_rows(cls, rows, num_items, user_ids=None, item_ids=None):
        rows = [np.unique(np.asarray(r, dtype=np.int64)) for r in rows]
        indptr = np.zeros(len(rows) + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([len(r) for r in rows])
        indices = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
        return cls(indptr, indices, num_items, user_ids, item_ids)

    @classmethod
    def from_dense(cls, X):
        X = np.asarray(X)
        return cls.from_rows([np.flatnonzero(r) for r in X], X.shape[1])

    @property
    def shape(self):
        return (self.num_users, self.num_items)

    @property
    def nnz(self):
        return len(self.indices)

    def row(self, u):
        return self.indices[self.indptr[u]:self.indptr[u + 1]]

    @property
    def rows(self):
        return [self.row(u) for u in range(self.num_users)]

    def row_counts(self):
        return np.diff(self.indptr)

    def to_csr(self):
        data = np.ones(self.nnz, dtype=np.float64)
        return sps.csr_matrix((data, self.indices, self.indptr), shape=self.shape)

    def to_dense(self):
        return self.to_csr().toarray()

    def gram(self):
        """Dense item-item Gram matrix XᵀX."""
        X = self.to_csr()
        return np.asarray((X.T @ X).toarray(), dtype=np.float64)

    def __eq__(self, other):
        if not isinstance(other, InteractionMatrix):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
            and self.user_ids == other.user_ids
            and self.item_ids == other.item_ids
        )

    def __repr__(self):
        return f"InteractionMatrix(users={self.num_users}, items={self.num_items}, nnz={self.nnz})"


class Protocol(str, Enum):
    STRONG = "strong"
    LOO = "loo"


@dataclass(frozen=True)
class SplitSpec:
    protocol: Protocol = Protocol.STRONG
    seed: int = 0
    fractions: tuple = (0.8, 0.1, 0.1)
    holdout_fraction: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "protocol", Protocol(self.protocol))
        if len(self.fractions) != 3 or any(f < 0 for f in self.fractions):
            raise ValueError("fractions must be three non-negative numbers")
        if not math.isclose(sum(self.fractions), 1.0, abs_tol=1e-9):
            raise ValueError("split fractions must sum to 1")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ValueError("holdout_fraction must lie in (0, 1)")


@dataclass
class Fold:
    """One evaluated user: items given to the model and items to recover."""

    user: int
    fold_in: np.ndarray
    held_out: np.ndarray


@dataclass
class Dataset:
    train: InteractionMatrix
    validation_folds: list = field(default_factory=list)
    test_folds: list = field(default_factory=list)
    protocol: Protocol = Protocol.STRONG
    skipped_users: int = 0

    @property
    def num_items(self):
        return self.train.num_items

    def folds(self, which="test"):
        if which == "validation":
            return self.validation_folds
        if which == "test":
            return self.test_folds
        raise ValueError(f"unknown fold set {which!r}")


def load_interactions(
    path,
    binarize_threshold=4.0,
    min_user_items=5,
    min_item_users=1,
    delimiter=",",
    header=False,
):
    """Read ``user,item[,rating]`` lines into a filtered binary matrix.

    Rows with a rating below ``binarize_threshold`` are dropped; rows without
    a rating column always count.  User and item count filters are applied
    alternately until nothing changes.  Dense indices follow first appearance
    in the file among the surviving interactions.
    """
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e

    pairs = []
    with fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            for lineno, fields in enumerate(reader, start=1):
                if header and lineno == 1:
                    continue
                if not fields or all(not f.strip() for f in fields):
                    continue
                if len(fields) not in (2, 3):
                    raise DataError(f"{path}:{lineno}: expected 2 or 3 fields, got {len(fields)}")
                user, item = fields[0].strip(), fields[1].strip()
                if not user or not item:
                    raise DataError(f"{path}:{lineno}: empty user or item id")
                if len(fields) == 3 and fields[2].strip():
                    try:
                        rating = float(fields[2])
                    except ValueError:
                        raise DataError(f"{path}:{lineno}: bad rating {fields[2]!r}") from None
                    if rating < binarize_threshold:
                        continue
                pairs.append((user, item))
        except (csv.Error, UnicodeDecodeError) as e:
            raise DataError(f"{path}: {e}") from e

    return _build_filtered(pairs, min_user_items, min_item_users)


def _build_filtered(pairs, min_user_items, min_item_users):
    # dedupe, keeping first-seen order
    pairs = list(dict.fromkeys(pairs))
    while True:
        ucount, icount = {}, {}
        for u, i in pairs:
            ucount[u] = ucount.get(u, 0) + 1
            icount[i] = icount.get(i, 0) + 1
        kept = [
            (u, i) for u, i in pairs if ucount[u] >= min_user_items and icount[i] >= min_item_users
        ]
        if len(kept) == len(pairs):
            break
        pairs = kept
    if not pairs:
        raise DataError("empty matrix after filtering")

    uidx, iidx = {}, {}
    rows = []
    for u, i in pairs:
        if u not in uidx:
            uidx[u] = len(uidx)
            rows.append([])
        if i not in iidx:
            iidx[i] = len(iidx)
        rows[uidx[u]].append(iidx[i])
    _log.info("loaded %d interactions for %d users and %d items", len(pairs), len(uidx), len(iidx))
    return InteractionMatrix.from_rows(rows, len(iidx), list(uidx), list(iidx))


def split(data: InteractionMatrix, spec: SplitSpec) -> Dataset:
    """Split users (strong generalization) or one item per user (leave-one-out).

    Draws come from ``numpy.random.default_rng(spec.seed)`` and are consumed in
    ascending user-index order, so the result depends only on ``(data, spec)``.
    """
    rng = np.random.default_rng(spec.seed)
    if spec.protocol is Protocol.STRONG:
        return _split_strong(data, spec, rng)
    return _split_loo(data, rng)


def _split_strong(data, spec, rng):
    m = data.num_users
    counts = data.row_counts()
    if np.any(counts < 2):
        bad = int(np.sum(counts < 2))
        raise DataError(f"strong generalization needs >= 2 items per user; {bad} users have fewer")
    perm = rng.permutation(m)
    n_val = int(round(spec.fractions[1] * m))
    n_test = int(round(spec.fractions[2] * m))
    n_train = m - n_val - n_test
    if n_train < 1:
        raise DataError("no training users left after partitioning")
    train_users = np.sort(perm[:n_train])
    val_users = np.sort(perm[n_train:n_train + n_val])
    test_users = np.sort(perm[n_train + n_val:])

    def make_folds(users):
        folds = []
        for u in users:
            items = data.row(u)
            n_hold = max(1, int(math.floor(spec.holdout_fraction * len(items))))
            held = np.sort(rng.choice(items, size=n_hold, replace=False))
            fold_in = np.setdiff1d(items, held, assume_unique=True)
            folds.append(Fold(int(u), fold_in, held))
        return folds

    val_folds = make_folds(val_users)
    test_folds = make_folds(test_users)
    train = InteractionMatrix.from_rows(
        [data.row(u) for u in train_users],
        data.num_items,
        [data.user_ids[u] for u in train_users],
        data.item_ids,
    )
    return Dataset(train, val_folds, test_folds, Protocol.STRONG, 0)


def _split_loo(data, rng):
    rows = []
    folds = []
    skipped = 0
    for u in range(data.num_users):
        items = data.row(u)
        if len(items) < 2:
            skipped += 1
            rows.append(items)
            continue
        pos = int(rng.integers(len(items)))
        rest = np.delete(items, pos)
        rows.append(rest)
        folds.append(Fold(u, rest.copy(), items[pos:pos + 1].copy()))
    if skipped:
        _log.warning("leave-one-out: skipped %d users with fewer than 2 items", skipped)
    train = InteractionMatrix.from_rows(rows, data.num_items, data.user_ids, data.item_ids)
    return Dataset(train, [], folds, Protocol.LOO, skipped)


def fold_matrix(folds, num_items, which="fold_in"):
    """Stack the fold-in (or held-out) item sets of ``folds`` into a dense 0/1 matrix."""
    out = np.zeros((len(folds), num_items), dtype=np.float64)
    for r, f in enumerate(folds):
        out[r, getattr(f, which)] = 1.0
    return out
