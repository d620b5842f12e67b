"""Top-K ranking metrics and fold-in evaluation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, fold_matrix


def parse_metric(name):
    """``"ndcg@100"`` -> ``("ndcg", 100)``."""
    try:
        kind, cutoff = name.lower().split("@")
        cutoff = int(cutoff)
    except ValueError:
        raise ValueError(f"bad metric {name!r}; expected e.g. recall@20 or ndcg@100") from None
    if kind not in ("recall", "ndcg") or cutoff < 1:
        raise ValueError(f"bad metric {name!r}; expected e.g. recall@20 or ndcg@100")
    return kind, cutoff


def recall_at_k(ranked, held_out, k):
    """Hits in the top ``k`` divided by ``min(k, |held_out|)``."""
    held = set(np.asarray(held_out).tolist())
    if not held:
        raise ValueError("held-out set is empty")
    hits = sum(1 for i in list(ranked)[:k] if i in held)
    return hits / min(k, len(held))


def ndcg_at_k(ranked, held_out, k):
    """Binary-relevance nDCG truncated at ``k``."""
    held = set(np.asarray(held_out).tolist())
    if not held:
        raise ValueError("held-out set is empty")
    dcg = sum(1.0 / math.log2(pos + 2) for pos, i in enumerate(list(ranked)[:k]) if i in held)
    idcg = sum(1.0 / math.log2(pos + 2) for pos in range(min(k, len(held))))
    return dcg / idcg


_METRICS = {"recall": recall_at_k, "ndcg": ndcg_at_k}


def rank_items(scores, k):
    """Top-``k`` item indices by descending score, ties to the lower index; -inf items dropped."""
    order = np.argsort(-scores, kind="stable")[:k]
    return order[np.isfinite(scores[order])]


def score_user(model, fold_in, num_items=None, exclude_seen=True):
    """Score every item for one user from their fold-in item set."""
    fold_in = np.asarray(fold_in, dtype=np.int64)
    if len(fold_in) == 0:
        raise ValueError("fold-in set is empty")
    n = num_items if num_items is not None else model.num_items
    x = np.zeros((1, n))
    x[0, fold_in] = 1.0
    s = np.array(model.scores(x)[0], dtype=np.float64)
    if exclude_seen:
        s[fold_in] = -np.inf
    return s


@dataclass
class EvalReport:
    protocol: str
    metrics: dict
    per_user: dict = field(default_factory=dict)
    users: list = field(default_factory=list)
    evaluated: int = 0
    skipped: int = 0
    provenance: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "protocol": self.protocol,
            "metrics": dict(self.metrics),
            "evaluated": self.evaluated,
            "skipped": self.skipped,
            "provenance": self.provenance,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self):
        lines = [f"protocol\t{self.protocol}", f"evaluated\t{self.evaluated}", f"skipped\t{self.skipped}"]
        lines += [f"{name}\t{value:.5f}" for name, value in self.metrics.items()]
        return "\n".join(lines) + "\n"


def evaluate(model, folds, metrics=("recall@20", "recall@50", "ndcg@100"), which="test",
             exclude_seen=True, batch_size=1024, keep_per_user=True):
    """Rank items for every fold user and average the requested metrics.

    ``folds`` is a :class:`Dataset` (``which`` selects its validation or test
    folds) or a plain list of folds.
    """
    protocol = "custom"
    skipped = 0
    if isinstance(folds, Dataset):
        protocol = folds.protocol.value
        skipped = folds.skipped_users
        fold_list = folds.folds(which)
    else:
        fold_list = list(folds)
    if not fold_list:
        raise ValueError("no folds to evaluate")
    parsed = [(m, *parse_metric(m)) for m in metrics]
    kmax = max(c for _, _, c in parsed)
    n = model.num_items

    values = {m: [] for m, _, _ in parsed}
    users = []
    for start in range(0, len(fold_list), batch_size):
        chunk = fold_list[start:start + batch_size]
        X = fold_matrix(chunk, n)
        S = np.asarray(model.scores(X), dtype=np.float64)
        if exclude_seen:
            S[X > 0] = -np.inf
        for f, s in zip(chunk, S):
            if len(f.held_out) == 0:
                skipped += 1
                continue
            ranked = rank_items(s, kmax)
            users.append(f.user)
            for m, kind, cutoff in parsed:
                values[m].append(_METRICS[kind](ranked, f.held_out, cutoff))

    means = {m: float(np.mean(v)) if v else float("nan") for m, v in values.items()}
    prov = dict(getattr(model, "provenance", {}) or {})
    per_user = {m: np.array(v) for m, v in values.items()} if keep_per_user else {}
    return EvalReport(protocol, means, per_user, users if keep_per_user else [], len(users),
                      skipped, prov)
