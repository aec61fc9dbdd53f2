import numpy as np
import pytest

from hteval import (
    Dataset,
    ForestParams,
    Truth,
    fit_forest,
    mahalanobis_matrix,
    proximity_matrix,
    semi_oracle_matrix,
)
from hteval.distances import load_distance_matrix, save_distance_matrix
from hteval.forest import leaf_assignments


def _dataset(X, W, Y=None):
    X = np.asarray(X, dtype=float)
    if Y is None:
        Y = np.zeros(len(X))
    return Dataset(
        X=X, W=np.asarray(W, dtype=int), Y=np.asarray(Y, dtype=float),
        ids=tuple(f"u{i}" for i in range(len(X))),
    )


def test_proximity_identical_rows_are_at_distance_zero():
    rng = np.random.default_rng(0)
    Xc = rng.uniform(-1, 1, size=(30, 2))
    X = np.vstack([Xc[0], Xc])  # treated unit duplicates control 0
    W = np.array([1] + [0] * 30)
    Y = np.concatenate([[0.0], Xc[:, 0]])
    d = _dataset(X, W, Y)
    f = fit_forest(Xc, Y[1:], ForestParams(n_trees=50, seed=3))
    D = proximity_matrix(f, d)
    assert D.values[0, 0] == 0.0
    assert D.kind == "proximity"


def test_proximity_single_tree_in_different_leaves():
    Xc = np.array([[-1.0], [1.0]])
    Yc = np.array([0.0, 10.0])
    f = fit_forest(Xc, Yc, ForestParams(n_trees=1, min_leaf=1, bootstrap=False, seed=0))
    d = _dataset([[-1.0], [-0.9], [0.9]], [1, 0, 0], [0.0, 0.0, 10.0])
    D = proximity_matrix(f, d)
    assert D.values[0, 0] == 0.0  # same side of the split
    assert D.values[0, 1] == 1.0  # opposite leaves in the single tree


def test_proximity_counting_oracle():
    rng = np.random.default_rng(13)
    Xc = rng.uniform(-1, 1, size=(40, 3))
    Yc = Xc @ np.array([1.0, -2.0, 0.5]) + rng.normal(0, 0.2, 40)
    f = fit_forest(Xc, Yc, ForestParams(n_trees=100, seed=5))
    Xt = rng.uniform(-1, 1, size=(6, 3))
    X = np.vstack([Xt, Xc])
    W = np.array([1] * 6 + [0] * 40)
    d = _dataset(X, W, np.concatenate([np.zeros(6), Yc]))
    D = proximity_matrix(f, d)
    lt = leaf_assignments(f, Xt)
    lc = leaf_assignments(f, Xc)
    for i in range(6):
        for j in range(40):
            co_occurrence = int(np.sum(lt[i] == lc[j]))
            assert D.values[i, j] == 100 - co_occurrence


def test_mahalanobis_whitened_reduces_to_euclidean():
    # construct rows whose sample covariance is exactly the identity
    base = np.array(
        [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]
    )
    X = np.vstack([base * np.sqrt(7 / 2), [[0.0, 0.0]] * 4])
    W = np.array([1, 0, 0, 0, 1, 0, 0, 0])
    d = _dataset(X, W)
    D = mahalanobis_matrix(d)
    t_rows, c_rows = [0, 4], [1, 2, 3, 5, 6, 7]
    for i, ti in enumerate(t_rows):
        for j, cj in enumerate(c_rows):
            euclid = float(np.sum((X[ti] - X[cj]) ** 2))
            assert D.values[i, j] == pytest.approx(euclid, rel=1e-6)


def test_mahalanobis_identical_rows_and_handbuilt_covariance():
    # eight rows with sample covariance exactly diag(2, 1)
    c, d_, e = np.sqrt(0.4), np.sqrt(2.5), np.sqrt(5.6)
    X = np.array(
        [
            [1.0, 1.0],
            [-1.0, -1.0],
            [c, -d_],
            [-c, d_],
            [e, 0.0],
            [-e, 0.0],
            [0.0, 0.0],
            [0.0, 0.0],
        ]
    )
    W = np.array([1, 0, 0, 0, 0, 0, 0, 1])
    ds = _dataset(X, W)
    cov = np.cov(X, rowvar=False)
    assert np.allclose(cov, np.diag([2.0, 1.0]), atol=1e-12)
    D = mahalanobis_matrix(ds)
    # treated (1,1) vs control (0,0): diff (1,1) -> 1/2 + 1 = 1.5
    j_origin = D.control_ids.index("u6")
    assert D.values[0, j_origin] == pytest.approx(1.5, rel=1e-6)
    # identical covariate rows are at distance ~0
    x_dup = np.vstack([X, X[0]])
    w_dup = np.concatenate([W[:-1], [0], [0]])  # make last treated a control
    w_dup[0] = 1
    ds2 = _dataset(x_dup, w_dup)
    D2 = mahalanobis_matrix(ds2)
    j_dup = D2.control_ids.index("u8")
    assert D2.values[0, j_dup] == pytest.approx(0.0, abs=1e-9)


def test_mahalanobis_affine_invariance():
    rng = np.random.default_rng(3)
    X = rng.uniform(-1, 1, size=(60, 3))
    W = (rng.random(60) < 0.5).astype(int)
    A = np.array([[2.0, 0.3, 0.0], [0.0, 1.5, -0.2], [0.1, 0.0, 0.7]])
    b = np.array([5.0, -3.0, 0.5])
    D1 = mahalanobis_matrix(_dataset(X, W))
    D2 = mahalanobis_matrix(_dataset(X @ A.T + b, W))
    assert np.allclose(D1.values, D2.values, rtol=1e-6, atol=1e-8)


def test_semi_oracle_cluster_structure():
    # two clusters with control means 1 and 4; noiseless potentials
    mu = np.array([1.0, 1.0, 4.0, 1.0, 4.0, 4.0])
    W = np.array([1, 1, 1, 0, 0, 0])
    d = _dataset(np.zeros((6, 1)), W)
    truth = Truth(
        alpha=np.zeros(2), beta=np.zeros(2), delta=0.0, sigma=1.0,
        propensity_kind="constant", propensity_param=0.5,
        potential0=mu, potential1=mu,
    )
    D = semi_oracle_matrix(d, truth)
    # treated cluster means: [1, 1, 4]; control: [1, 4, 4]
    assert D.values[0, 0] == 0.0  # within cluster
    assert D.values[0, 1] == 9.0  # across: (4 - 1)^2
    assert D.values[2, 0] == 9.0


def test_semi_oracle_noisy_mean_is_two_sigma_squared():
    n = 2_000
    mu = np.zeros(n)
    W = np.array([1] * (n // 2) + [0] * (n // 2))
    d = _dataset(np.zeros((n, 1)), W)
    truth = Truth(
        alpha=np.zeros(2), beta=np.zeros(2), delta=0.0, sigma=1.5,
        propensity_kind="constant", propensity_param=0.5,
        potential0=mu, potential1=mu,
    )
    rng = np.random.default_rng(4)
    D = semi_oracle_matrix(d, truth, noisy=True, rng=rng)
    expected = 2 * truth.sigma**2
    assert abs(D.values.mean() - expected) < 0.1 * expected


def test_distance_matrix_round_trip(tmp_path):
    rng = np.random.default_rng(8)
    X = rng.uniform(-1, 1, size=(20, 2))
    W = np.array([1] * 8 + [0] * 12)
    D = mahalanobis_matrix(_dataset(X, W))
    path = tmp_path / "D.csv"
    save_distance_matrix(D, path)
    D2 = load_distance_matrix(path)
    assert np.array_equal(D.values, D2.values)
    assert D2.treated_ids == D.treated_ids
    assert D2.control_ids == D.control_ids
