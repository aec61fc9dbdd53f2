"""Regression forest on control units, exposing terminal-node identity.

The forest is only a metric learner here: downstream code consumes per-tree
leaf assignments, never predictions. Backed by scikit-learn's
RandomForestRegressor, whose ``apply`` returns exactly the leaf ids needed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.ensemble import RandomForestRegressor


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 500
    min_leaf: int = 5
    features_per_split: int | None = None  # default ceil(p/3)
    bootstrap: bool = True
    seed: int = 0


@dataclass(frozen=True)
class RegressionForest:
    model: RandomForestRegressor = field(repr=False)
    p: int
    params: ForestParams

    @property
    def n_trees(self) -> int:
        return self.params.n_trees


def fit_forest(X: np.ndarray, Y: np.ndarray, params: ForestParams | None = None) -> RegressionForest:
    """Grow CART regression trees on bootstrap resamples of (X, Y).

    Deterministic given ``params.seed``. Constant responses yield
    single-leaf trees, which is valid (proximity distance is then zero).
    """
    params = params or ForestParams()
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim != 2 or X.shape[0] != len(Y):
        raise ValueError("X must be 2-d with one response per row")
    if X.shape[0] < 2:
        raise ValueError("need at least 2 control units to fit a forest")
    p = X.shape[1]
    max_features = params.features_per_split or int(np.ceil(p / 3))
    model = RandomForestRegressor(
        n_estimators=params.n_trees,
        min_samples_leaf=params.min_leaf,
        max_features=min(max_features, p),
        bootstrap=params.bootstrap,
        random_state=params.seed,
        n_jobs=1,
    )
    model.fit(X, Y)
    return RegressionForest(model=model, p=p, params=params)


def leaf_assignments(f: RegressionForest, X: np.ndarray) -> np.ndarray:
    """n x m integer matrix; entry (i, l) is the leaf of unit i in tree l."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != f.p:
        raise ValueError(f"expected {f.p} covariate columns, got {X.shape}")
    return f.model.apply(X)
