import numpy as np
import pytest

from linrec.data import InteractionMatrix
from linrec.iterative import WmfConfig, fit_wmf, wmf_objective
from linrec.synthetic import random_binary


def rank2_binary():
    a = np.array([1, 1, 1, 0, 0, 0, 0], dtype=float)
    b = np.array([0, 0, 0, 1, 1, 0, 1], dtype=float)
    rows = [a, b, a + b, a, b, a + b, b, a]
    return np.array(rows)


def dense_objective(X, P, Q, alpha, reg):
    C = np.where(X > 0, alpha, 1.0)
    return float(np.sum(C * (X - P @ Q.T) ** 2) + reg * (np.sum(P**2) + np.sum(Q**2)))


def test_objective_matches_dense(rng):
    X = random_binary(7, 5, 0.4, seed=2)
    P, Q = rng.standard_normal((7, 3)), rng.standard_normal((5, 3))
    x = InteractionMatrix.from_dense(X)
    assert wmf_objective(x, P, Q, 5.0, 0.3) == pytest.approx(dense_objective(X, P, Q, 5.0, 0.3),
                                                                rel=1e-12)


def test_exact_rank_recovery():
    X = rank2_binary()
    assert np.linalg.matrix_rank(X) == 2
    model, _ = fit_wmf(InteractionMatrix.from_dense(X), WmfConfig(k=2, reg=0.0, alpha=1.0,
                                                                   iterations=50, seed=0))
    assert np.linalg.norm(X - model.P @ model.Q.T) <= 1e-6


def test_matches_svd_reconstruction():
    X = random_binary(12, 6, 0.5, seed=8)
    model, _ = fit_wmf(InteractionMatrix.from_dense(X), WmfConfig(k=2, alpha=1.0, iterations=500))
    U, s, Vt = np.linalg.svd(X)
    svd2 = (U[:, :2] * s[:2]) @ Vt[:2]
    assert np.linalg.norm(model.P @ model.Q.T - svd2) <= 1e-5


@pytest.mark.parametrize("seed", range(5))
def test_objective_non_increasing(seed):
    X = random_binary(4, 3, 0.5, seed=seed)
    _, trace = fit_wmf(InteractionMatrix.from_dense(X),
                       WmfConfig(k=1, reg=0.1, alpha=5.0, iterations=20, seed=seed))
    assert len(trace) == 41
    assert np.all(np.diff(trace) <= 1e-9)


def test_deterministic():
    x = InteractionMatrix.from_dense(random_binary(10, 6, 0.4, seed=1))
    cfg = WmfConfig(k=3, reg=0.1, alpha=10.0, iterations=5, seed=3)
    a, ta = fit_wmf(x, cfg)
    b, tb = fit_wmf(x, cfg)
    assert a.P.tobytes() == b.P.tobytes() and a.Q.tobytes() == b.Q.tobytes()
    assert ta.tobytes() == tb.tobytes()


def test_fold_in_reproduces_user_solve():
    x = InteractionMatrix.from_dense(random_binary(10, 6, 0.5, seed=4))
    model, _ = fit_wmf(x, WmfConfig(k=2, reg=0.1, alpha=3.0, iterations=10))
    # weighted ridge solve against the final Q, written out with the dense confidence vector
    X = x.to_dense()
    Q = model.Q
    for u in range(3):
        C = np.where(X[u] > 0, 3.0, 1.0)
        A = Q.T @ (C[:, None] * Q) + 0.1 * np.eye(2)
        p = np.linalg.solve(A, Q.T @ (C * X[u]))
        np.testing.assert_allclose(model.fold_in(X[u:u + 1])[0], p, atol=1e-10)


def test_config_validation():
    with pytest.raises(ValueError):
        WmfConfig(alpha=0.5)
    with pytest.raises(ValueError):
        WmfConfig(iterations=0)
    with pytest.raises(ValueError):
        fit_wmf(InteractionMatrix.from_dense(np.eye(2)), WmfConfig(k=3))
