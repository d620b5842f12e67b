import itertools
import json

import numpy as np
import pytest

from linrec.closed_form import SimilarityModel, fit_lrr
from linrec.data import Fold
from linrec.evaluation import evaluate, ndcg_at_k, parse_metric, rank_items, recall_at_k, score_user
from linrec.spectral import gram_eigen
from oracles import brute_ndcg, brute_rank, brute_recall


def test_score_identity():
    m = SimilarityModel(W=np.eye(4))
    s = score_user(m, [0, 2], exclude_seen=False)
    np.testing.assert_array_equal(s, [1, 0, 1, 0])
    s = score_user(m, [0, 2])
    assert np.all(s[np.isfinite(s)] == 0)
    assert np.isneginf(s[[0, 2]]).all()


def test_score_projection_reproduces_row(small_random):
    spec = gram_eigen(small_random)
    m = fit_lrr(spec, spec.rank, 0.0)
    row = small_random.row(0)
    s = score_user(m, row, small_random.num_items, exclude_seen=False)
    np.testing.assert_allclose(s, small_random.to_dense()[0], atol=1e-10)


def test_score_two_items():
    m = SimilarityModel(W=np.array([[0.0, 0.3], [0.7, 0.0]]))
    s = score_user(m, [0])
    assert s[0] == -np.inf and s[1] == pytest.approx(0.3)


def test_score_empty_fold_in():
    with pytest.raises(ValueError):
        score_user(SimilarityModel(W=np.eye(2)), [])


def test_recall_values():
    assert recall_at_k([1, 2, 3], {1, 2}, 3) == 1.0
    assert recall_at_k([5, 1], {1, 2, 3}, 2) == 0.5
    assert recall_at_k([5, 6], {1}, 2) == 0.0


def test_ndcg_values():
    assert ndcg_at_k([7], {7}, 1) == 1.0
    assert ndcg_at_k(["i1", "i2"], {"i2"}, 2) == pytest.approx(0.63093, abs=1e-5)
    assert ndcg_at_k(["a", "x", "b"], {"a", "b"}, 3) == pytest.approx(0.91972, abs=1e-5)


def test_empty_held_out():
    with pytest.raises(ValueError):
        recall_at_k([1], set(), 1)
    with pytest.raises(ValueError):
        ndcg_at_k([1], set(), 1)


def test_parse_metric():
    assert parse_metric("NDCG@100") == ("ndcg", 100)
    for bad in ("ndcg", "map@10", "recall@0", "recall@x"):
        with pytest.raises(ValueError):
            parse_metric(bad)


def test_rank_ties_and_exclusion():
    s = np.array([0.5, 1.0, 0.5, -np.inf, 1.0])
    assert rank_items(s, 10).tolist() == [1, 4, 0, 2]


def test_perfect_model_all_ones():
    # pairs of items always co-occur; folding in one member must rank the other first
    W = np.zeros((6, 6))
    for a in range(0, 6, 2):
        W[a, a + 1] = W[a + 1, a] = 1.0
    folds = [Fold(u, np.array([2 * u]), np.array([2 * u + 1])) for u in range(3)]
    rep = evaluate(SimilarityModel(W=W), folds, ["recall@1", "ndcg@100", "recall@20"])
    assert all(v == 1.0 for v in rep.metrics.values())
    assert rep.evaluated == 3


def test_random_model_matches_enumeration():
    rng = np.random.default_rng(7)
    W = rng.random((4, 4))
    folds = [
        Fold(0, np.array([0]), np.array([1, 3])),
        Fold(1, np.array([1, 2]), np.array([0])),
        Fold(2, np.array([3]), np.array([2])),
    ]
    metrics = ["recall@1", "recall@2", "ndcg@2", "ndcg@3"]
    rep = evaluate(SimilarityModel(W=W), folds, metrics)
    for name in metrics:
        kind, k = parse_metric(name)
        vals = []
        for f in folds:
            x = np.zeros(4)
            x[f.fold_in] = 1
            scores = [sum(x[j] * W[j, i] for j in range(4)) for i in range(4)]
            ranked = brute_rank(scores, set(f.fold_in.tolist()))
            held = set(f.held_out.tolist())
            vals.append(brute_recall(ranked, held, k) if kind == "recall" else brute_ndcg(ranked, held, k))
        assert rep.metrics[name] == pytest.approx(np.mean(vals), abs=1e-12)
        assert rep.metrics[name] == pytest.approx(np.mean(rep.per_user[name]), abs=1e-12)


def test_scale_invariance_and_bounds(planted, planted_split):
    spec = gram_eigen(planted_split.train)
    m = fit_lrr(spec, 8, 10.0)
    base = evaluate(m, planted_split, ["recall@5", "recall@10", "ndcg@100"])
    rng = np.random.default_rng(0)
    for _ in range(10):
        m2 = fit_lrr(spec, 8, 10.0)
        m2.d = m.d * float(np.exp(rng.uniform(-5, 5)))
        assert evaluate(m2, planted_split, ["recall@5", "recall@10", "ndcg@100"]).metrics == \
            pytest.approx(base.metrics, abs=1e-12)
    for v in base.per_user.values():
        assert np.all((v >= 0) & (v <= 1))
    assert base.metrics["recall@5"] <= base.metrics["recall@10"] + 1e-15


def test_exclusion_never_ranks_seen(planted_split):
    spec = gram_eigen(planted_split.train)
    m = fit_lrr(spec, 8, 10.0)
    for f in planted_split.test_folds:
        s = score_user(m, f.fold_in, planted_split.num_items)
        assert not set(rank_items(s, 40).tolist()) & set(f.fold_in.tolist())


def test_report_serialization(planted_split):
    spec = gram_eigen(planted_split.train)
    rep = evaluate(fit_lrr(spec, 4, 1.0), planted_split, ["ndcg@100"])
    d = json.loads(rep.to_json())
    assert d["protocol"] == "strong" and d["metrics"]["ndcg@100"] == rep.metrics["ndcg@100"]
    assert d["provenance"]["model"] == "lrr"
    assert rep.to_text().splitlines()[-1].startswith("ndcg@100\t")


def test_brute_force_agreement_exhaustive():
    # every permutation of 4 items against every held-out subset
    for perm in itertools.permutations(range(4)):
        for r in range(1, 4):
            for held in itertools.combinations(range(4), r):
                for k in (1, 2, 4):
                    assert ndcg_at_k(list(perm), set(held), k) == pytest.approx(
                        brute_ndcg(list(perm), set(held), k))
                    assert recall_at_k(list(perm), set(held), k) == pytest.approx(
                        brute_recall(list(perm), set(held), k))
