"""Small synthetic interaction matrices for tests, demos and the acceptance suite."""

import numpy as np

from .data import InteractionMatrix


def random_binary(m, n, density=0.3, seed=0, min_row=1):
    """Bernoulli(density) matrix; rows with fewer than ``min_row`` ones get random fills."""
    rng = np.random.default_rng(seed)
    X = (rng.random((m, n)) < density).astype(np.float64)
    for u in range(m):
        short = min_row - int(X[u].sum())
        if short > 0:
            X[u, rng.choice(np.flatnonzero(X[u] == 0), size=short, replace=False)] = 1.0
    return X


def planted_blocks(m=200, n=40, p_in=0.5, p_out=0.05, seed=42):
    """Two user groups, each preferring one half of the items.

    Users in the first half interact with first-half items with probability
    ``p_in`` and with the rest with ``p_out``; the second half mirrors that.
    Every user gets at least two items.
    """
    rng = np.random.default_rng(seed)
    X = np.zeros((m, n))
    half_u, half_i = m // 2, n // 2
    for u in range(m):
        pref = np.zeros(n, dtype=bool)
        if u < half_u:
            pref[:half_i] = True
        else:
            pref[half_i:] = True
        probs = np.where(pref, p_in, p_out)
        X[u] = rng.random(n) < probs
        while X[u].sum() < 2:
            X[u, rng.choice(np.flatnonzero(pref))] = 1.0
    return InteractionMatrix.from_dense(X)
