"""Treated x control distance matrices: proximity, Mahalanobis, semi-oracle."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .datamodel import Dataset, Truth, split_by_treatment
from .forest import RegressionForest, leaf_assignments


@dataclass(frozen=True)
class DistanceMatrix:
    values: np.ndarray  # n_t x n_c, finite, >= 0
    kind: str  # proximity | mahalanobis | semi_oracle | custom
    treated_ids: tuple[str, ...]
    control_ids: tuple[str, ...]
    # Dataset row indices, present when built from a Dataset.
    treated_rows: tuple[int, ...] | None = None
    control_rows: tuple[int, ...] | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError("distance matrix must be 2-d")
        if values.shape != (len(self.treated_ids), len(self.control_ids)):
            raise ValueError("distance matrix shape does not match id lists")
        if not np.all(np.isfinite(values)):
            raise ValueError("distance matrix has non-finite entries")
        if np.any(values < 0):
            raise ValueError("distances must be nonnegative")
        object.__setattr__(self, "values", values)
        values.setflags(write=False)

    @property
    def n_treated(self) -> int:
        return self.values.shape[0]

    @property
    def n_control(self) -> int:
        return self.values.shape[1]


def _group_ids(d: Dataset) -> tuple[list[int], list[int], tuple, tuple]:
    treated, control = split_by_treatment(d)
    if not treated or not control:
        raise ValueError("both treatment groups must be nonempty for matching")
    t_ids = tuple(d.ids[i] for i in treated)
    c_ids = tuple(d.ids[i] for i in control)
    return treated, control, t_ids, c_ids


def proximity_matrix(
    f: RegressionForest, d: Dataset, chunk: int = 64
) -> DistanceMatrix:
    """Entry (i, j) counts the trees where treated i and control j land in
    different terminal nodes; integer-valued in [0, n_trees]."""
    treated, control, t_ids, c_ids = _group_ids(d)
    leaves_t = leaf_assignments(f, d.X[treated])
    leaves_c = leaf_assignments(f, d.X[control])
    m = leaves_t.shape[1]
    out = np.zeros((len(treated), len(control)), dtype=float)
    for start in range(0, m, chunk):
        lt = leaves_t[:, start : start + chunk]
        lc = leaves_c[:, start : start + chunk]
        out += (lt[:, None, :] != lc[None, :, :]).sum(axis=2)
    return DistanceMatrix(
        values=out,
        kind="proximity",
        treated_ids=t_ids,
        control_ids=c_ids,
        treated_rows=tuple(treated),
        control_rows=tuple(control),
    )


def mahalanobis_matrix(d: Dataset) -> DistanceMatrix:
    """Quadratic-form covariate distance with a ridge-regularized sample
    covariance (all n rows), so degenerate covariates never crash."""
    if d.n < 2:
        raise ValueError("need at least 2 units for a covariance estimate")
    treated, control, t_ids, c_ids = _group_ids(d)
    cov = np.cov(d.X, rowvar=False)
    cov = np.atleast_2d(cov)
    ridge = 1e-8 * np.trace(cov) / d.p
    if ridge <= 0:
        ridge = 1e-8
    prec = np.linalg.inv(cov + ridge * np.eye(d.p))
    diff = d.X[treated][:, None, :] - d.X[control][None, :, :]
    vals = np.einsum("ijk,kl,ijl->ij", diff, prec, diff)
    vals = np.maximum(vals, 0.0)  # clip tiny negative round-off
    return DistanceMatrix(
        values=vals,
        kind="mahalanobis",
        treated_ids=t_ids,
        control_ids=c_ids,
        treated_rows=tuple(treated),
        control_rows=tuple(control),
    )


def semi_oracle_matrix(
    d: Dataset,
    truth: Truth,
    noisy: bool = False,
    rng: np.random.Generator | None = None,
) -> DistanceMatrix:
    """Squared difference of control potentials, optionally with fresh noise
    draws added to the noiseless potentials."""
    if truth.potential0 is None:
        raise ValueError("Truth does not carry control potentials")
    treated, control, t_ids, c_ids = _group_ids(d)
    pot0 = np.asarray(truth.potential0, dtype=float)
    if noisy:
        if rng is None:
            rng = np.random.default_rng(0)
        pot0 = pot0 + rng.normal(0.0, truth.sigma, size=len(pot0))
    diff = pot0[treated][:, None] - pot0[control][None, :]
    return DistanceMatrix(
        values=diff**2,
        kind="semi_oracle",
        treated_ids=t_ids,
        control_ids=c_ids,
        treated_rows=tuple(treated),
        control_rows=tuple(control),
    )


def save_distance_matrix(D: DistanceMatrix, path) -> None:
    """CSV with control ids as header and treated ids as the first column."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id"] + list(D.control_ids))
        for i, tid in enumerate(D.treated_ids):
            writer.writerow([tid] + [repr(float(v)) for v in D.values[i]])


def load_distance_matrix(path, kind: str = "custom") -> DistanceMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        control_ids = tuple(header[1:])
        treated_ids, rows = [], []
        for row in reader:
            if not row:
                continue
            treated_ids.append(row[0])
            rows.append([float(v) for v in row[1:]])
    return DistanceMatrix(
        values=np.array(rows, dtype=float),
        kind=kind,
        treated_ids=tuple(treated_ids),
        control_ids=control_ids,
    )
