"""Shared fixtures: small hand-built instances used across test modules."""
import numpy as np
import pytest

from hteval import Dataset, DistanceMatrix, Match, MatchSpec


@pytest.fixture
def two_cluster_distances():
    """Two 3-unit clusters: within-cluster distance 2, across 3.

    Treated t1, t2 sit with control c1; treated t3 sits with controls
    c2, c3.
    """
    values = np.array(
        [
            [2.0, 3.0, 3.0],
            [2.0, 3.0, 3.0],
            [3.0, 2.0, 2.0],
        ]
    )
    return DistanceMatrix(
        values=values,
        kind="custom",
        treated_ids=("t1", "t2", "t3"),
        control_ids=("c1", "c2", "c3"),
    )


@pytest.fixture
def chain_match():
    """Chain t1-c1-t2-c2-t3-c3 with distances 4, 1, 2, 1, 4."""
    return Match(
        pairs=(
            (0, 0, 4.0),
            (1, 0, 1.0),
            (1, 1, 2.0),
            (2, 1, 1.0),
            (2, 2, 4.0),
        )
    )


@pytest.fixture
def default_spec():
    return MatchSpec(m_t=1, m_c=1, M_t=2, M_c=2)


def random_distance_matrix(rng, n_t=None, n_c=None, high=10):
    """Random integer-valued distance matrix with given or random shape."""
    if n_t is None:
        n_t = int(rng.integers(1, 7))
    if n_c is None:
        n_c = int(rng.integers(1, 7))
    values = rng.integers(0, high, size=(n_t, n_c)).astype(float)
    return DistanceMatrix(
        values=values,
        kind="custom",
        treated_ids=tuple(f"t{i}" for i in range(n_t)),
        control_ids=tuple(f"c{j}" for j in range(n_c)),
    )


def tiny_linear_dataset(n=80, p=3, seed=0, sigma=0.0, alpha=None, beta=None):
    """Small dataset with linear truth, optionally noiseless."""
    rng = np.random.default_rng(seed)
    if alpha is None:
        alpha = np.array([1.0] + [1.0] * p)
    if beta is None:
        beta = np.array([2.0] + [0.0] * p)
    X = rng.uniform(-1.0, 1.0, size=(n, p))
    W = (rng.random(n) < 0.5).astype(int)
    mu = alpha[0] + X @ alpha[1:]
    tau = beta[0] + X @ beta[1:]
    Y = mu + W * tau
    if sigma > 0:
        Y = Y + rng.normal(0.0, sigma, size=n)
    d = Dataset(X=X, W=W, Y=Y, ids=tuple(f"u{i}" for i in range(n)))
    return d, np.asarray(alpha, float), np.asarray(beta, float)
