"""Core data containers and CSV ingestion shared by every other module."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np


class SchemaError(ValueError):
    """Raised when a dataset file is missing required columns."""


class ParseError(ValueError):
    """Raised when a dataset cell cannot be interpreted; names the row."""


@dataclass(frozen=True)
class Dataset:
    """Units with covariates X (n x p), binary treatment W, response Y.

    Immutable after construction; safe to share across workers.
    """

    X: np.ndarray
    W: np.ndarray
    Y: np.ndarray
    ids: tuple[str, ...]

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        W = np.asarray(self.W, dtype=int)
        Y = np.asarray(self.Y, dtype=float)
        if X.ndim != 2:
            raise ValueError("X must be a 2-d array")
        n = X.shape[0]
        if not (len(W) == len(Y) == len(self.ids) == n):
            raise ValueError("X, W, Y, ids must have equal length")
        if not np.all(np.isfinite(X)):
            raise ValueError("X contains non-finite entries")
        if not np.all(np.isfinite(Y)):
            raise ValueError("Y contains non-finite entries")
        if not np.all((W == 0) | (W == 1)):
            raise ValueError("W entries must be 0 or 1")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "ids", tuple(str(i) for i in self.ids))
        X.setflags(write=False)
        W.setflags(write=False)
        Y.setflags(write=False)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class Truth:
    """Hidden generating quantities of a simulated dataset.

    ``alpha`` and ``beta`` are length p+1 with the intercept first;
    ``kappa`` is Var(eps^2)/sigma^4 (2 for Gaussian noise).
    """

    alpha: np.ndarray
    beta: np.ndarray
    delta: float
    sigma: float
    propensity_kind: str  # "constant" or "logistic"
    propensity_param: float  # e for constant, theta (on x1) for logistic
    potential0: np.ndarray | None = None
    potential1: np.ndarray | None = None
    kappa: float = 2.0

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")

    def tau(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        return self.beta[0] + X @ self.beta[1:]

    def mu(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        return self.alpha[0] + X @ self.alpha[1:] + self.delta * np.abs(X[:, 0])


@dataclass(frozen=True)
class MatchSpec:
    """Per-unit multiplicity bounds for matching."""

    m_t: int = 1
    m_c: int = 1
    M_t: int = 2
    M_c: int = 2

    def __post_init__(self):
        if self.m_t < 0 or self.m_c < 0:
            raise ValueError("lower multiplicities must be nonnegative")
        if self.M_t < 1 or self.M_c < 1:
            raise ValueError("upper multiplicities must be positive")
        if self.m_t > self.M_t or self.m_c > self.M_c:
            raise ValueError("lower multiplicity exceeds upper multiplicity")


@dataclass(frozen=True)
class Match:
    """A set of (treated position, control position, distance) triples.

    Positions index rows/columns of the distance matrix the match was
    built from, not dataset rows.
    """

    pairs: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        seen = set()
        for t, c, _ in self.pairs:
            if (t, c) in seen:
                raise ValueError(f"duplicate pair ({t}, {c})")
            seen.add((t, c))

    @property
    def size(self) -> int:
        return len(self.pairs)

    @property
    def treated_count(self) -> int:
        return len({t for t, _, _ in self.pairs})

    @property
    def control_count(self) -> int:
        return len({c for _, c, _ in self.pairs})

    def treated_degrees(self) -> dict[int, int]:
        deg: dict[int, int] = {}
        for t, _, _ in self.pairs:
            deg[t] = deg.get(t, 0) + 1
        return deg

    def control_degrees(self) -> dict[int, int]:
        deg: dict[int, int] = {}
        for _, c, _ in self.pairs:
            deg[c] = deg.get(c, 0) + 1
        return deg

    def total_distance(self) -> float:
        return float(sum(d for _, _, d in self.pairs))

    def average_distance(self) -> float:
        if not self.pairs:
            raise ValueError("average distance of an empty match is undefined")
        return self.total_distance() / len(self.pairs)

    def max_multiplicities(self) -> tuple[int, int]:
        """(M_t^pi, M_c^pi): realized maximal multiplicities."""
        td = self.treated_degrees()
        cd = self.control_degrees()
        return (max(td.values(), default=0), max(cd.values(), default=0))


def load_dataset(path) -> Dataset:
    """Read a dataset from CSV with header ``id,x1,...,xp,w,y``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        for col in ("id", "w", "y"):
            if col not in header:
                raise SchemaError(f"{path}: missing column {col!r}")
        p = 0
        while f"x{p + 1}" in header:
            p += 1
        if p == 0:
            raise SchemaError(f"{path}: no covariate columns x1..xp")
        col_idx = {name: header.index(name) for name in header}
        ids, X, W, Y = [], [], [], []
        for rownum, row in enumerate(reader, start=2):
            if not row:
                continue
            ids.append(row[col_idx["id"]])
            try:
                X.append([float(row[col_idx[f"x{j + 1}"]]) for j in range(p)])
                y = float(row[col_idx["y"]])
                w = float(row[col_idx["w"]])
            except (ValueError, IndexError):
                raise ParseError(f"{path}: non-numeric cell in row {rownum}") from None
            if w not in (0.0, 1.0):
                raise ParseError(f"{path}: treatment not in {{0,1}} in row {rownum}")
            W.append(int(w))
            Y.append(y)
    return Dataset(X=np.array(X, dtype=float), W=np.array(W), Y=np.array(Y), ids=tuple(ids))


def save_dataset(d: Dataset, path) -> None:
    """Write a dataset as CSV; floats use repr so load o save is the identity."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id"] + [f"x{j + 1}" for j in range(d.p)] + ["w", "y"])
        for i in range(d.n):
            writer.writerow(
                [d.ids[i]]
                + [repr(float(v)) for v in d.X[i]]
                + [int(d.W[i]), repr(float(d.Y[i]))]
            )


def split_by_treatment(d: Dataset) -> tuple[list[int], list[int]]:
    """Order-preserving partition of 0..n-1 into (treated, control) indices."""
    treated = [i for i in range(d.n) if d.W[i] == 1]
    control = [i for i in range(d.n) if d.W[i] == 0]
    return treated, control
