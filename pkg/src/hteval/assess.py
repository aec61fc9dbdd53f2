"""Matched validation error, hold-out assessment, cross-validation under the
five validation methods, and the exponential-family conditional criterion."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .datamodel import Dataset, Match, MatchSpec
from .distances import DistanceMatrix, mahalanobis_matrix, proximity_matrix
from .estimator import LassoPath, predict_response, predict_tau
from .flowmatch import (
    InfeasibleMatchError,
    MatchSolution,
    min_avg_match,
    min_total_match,
)
from .forest import ForestParams, fit_forest
from .prune import components, is_star_shaped, prune

METHODS = ("prd", "cvr", "full", "S-M", "combo")


@dataclass(frozen=True)
class NoiseSpec:
    sigma2: float
    kappa: float = 2.0  # Var(eps^2)/sigma^4; 2 for Gaussian

    def __post_init__(self):
        if self.sigma2 <= 0 or self.kappa <= 0:
            raise ValueError("sigma2 and kappa must be positive")


@dataclass(frozen=True)
class PairDiagnostics:
    """Per-pair control-mean gaps and the oracle error of a match."""

    b_values: np.ndarray
    b2_bar: float
    oracle_error: float


@dataclass(frozen=True)
class Prop1Bounds:
    """Bias-ratio interval and variance upper bound for the matched
    validation error estimator. When ``absolute_scale`` is set the bias
    bounds are the exact expectation b2_bar + 2 sigma^2 instead of ratios
    (degenerate oracle error)."""

    bias_lower: float
    bias_upper: float
    variance_upper: float
    absolute_scale: bool = False


@dataclass(frozen=True)
class MethodConfig:
    method: str = "combo"
    spec: MatchSpec = field(default_factory=MatchSpec)
    forest: ForestParams = field(default_factory=ForestParams)
    k_folds: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(
                f"unknown method {self.method!r}; choose from {METHODS}"
            )


@dataclass(frozen=True)
class CVResult:
    errors: np.ndarray  # per-lambda mean validation error
    skipped_folds: tuple[int, ...]  # folds contributing no pairs/units


def validation_error(
    match: Match, y_t: np.ndarray, y_c: np.ndarray, tau_hat_t: np.ndarray
) -> float:
    """Mean of (Y_t - Y_c - tau_hat(X_t))^2 over matched pairs.

    ``y_t``/``tau_hat_t`` are indexed by treated matrix positions,
    ``y_c`` by control positions.
    """
    if not match.pairs:
        raise ValueError("validation error of an empty match is undefined")
    acc = 0.0
    for t, c, _ in match.pairs:
        acc += (y_t[t] - y_c[c] - tau_hat_t[t]) ** 2
    return acc / len(match.pairs)


def pair_diagnostics(
    match: Match,
    mu_t: np.ndarray,
    mu_c: np.ndarray,
    tau_t: np.ndarray,
    tau_hat_t: np.ndarray,
) -> PairDiagnostics:
    b = np.array([mu_t[t] - mu_c[c] for t, c, _ in match.pairs])
    err = float(
        np.mean([(tau_t[t] - tau_hat_t[t]) ** 2 for t, _, _ in match.pairs])
    )
    return PairDiagnostics(b_values=b, b2_bar=float(np.mean(b**2)), oracle_error=err)


def prop1_bounds(
    diag: PairDiagnostics, noise: NoiseSpec, match: Match
) -> Prop1Bounds:
    M_t, M_c = match.max_multiplicities()
    var_bound = (M_t + M_c - 1) / match.size * (
        (4 * noise.kappa + 8) * noise.sigma2**2
        + 32 * noise.sigma2 * (diag.b2_bar + diag.oracle_error)
    )
    if diag.oracle_error == 0.0:
        expected = diag.b2_bar + 2 * noise.sigma2
        return Prop1Bounds(expected, expected, var_bound, absolute_scale=True)
    ratio = math.sqrt(diag.b2_bar / diag.oracle_error)
    return Prop1Bounds((1 - ratio) ** 2, (1 + ratio) ** 2, var_bound)


def make_folds(
    match: Match,
    n_treated: int,
    n_control: int,
    k: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Assign units to folds without splitting any matched component.

    The match must be star-shaped. Components are shuffled and placed on
    the currently smallest fold; unmatched units go round-robin.
    Returns fold ids per treated position and per control position.
    """
    if not is_star_shaped(match):
        raise ValueError("make_folds requires a pruned (star-shaped) match")
    comps = components(match)
    if k > len(comps) and match.pairs:
        raise ValueError(
            f"cannot split {len(comps)} matched components into {k} folds"
        )
    fold_t = np.full(n_treated, -1, dtype=int)
    fold_c = np.full(n_control, -1, dtype=int)
    order = rng.permutation(len(comps))
    sizes = np.zeros(k, dtype=int)
    for idx in order:
        ts, cs = comps[idx]
        fold = int(np.argmin(sizes))
        for t in ts:
            fold_t[t] = fold
        for c in cs:
            fold_c[c] = fold
        sizes[fold] += len(ts) + len(cs)
    nxt = 0
    for t in range(n_treated):
        if fold_t[t] < 0:
            fold_t[t] = nxt % k
            nxt += 1
    for c in range(n_control):
        if fold_c[c] < 0:
            fold_c[c] = nxt % k
            nxt += 1
    return fold_t, fold_c


def holdout_assess(tau_hat, validation: Dataset, cfg: MethodConfig) -> float:
    """Algorithm: forest on validation controls, proximity distance,
    minimum-average match, matched validation error. No pruning (pruning
    only serves fold splitting)."""
    D, _ = _distance_for(validation, cfg, kind="proximity")
    sol = min_avg_match(D, cfg.spec)
    t_rows = np.array(D.treated_rows)
    c_rows = np.array(D.control_rows)
    tau_t = np.asarray(tau_hat(validation.X[t_rows]), dtype=float)
    return validation_error(
        sol.match, validation.Y[t_rows], validation.Y[c_rows], tau_t
    )


def _distance_for(d: Dataset, cfg: MethodConfig, kind: str):
    """Distance matrix for matching; the forest route sees only control
    covariates and control responses, never a treated response."""
    if kind == "mahalanobis":
        return mahalanobis_matrix(d), None
    ctrl = np.nonzero(d.W == 0)[0]
    forest = fit_forest(d.X[ctrl], d.Y[ctrl], cfg.forest)
    return proximity_matrix(forest, d), forest


def _subset(d: Dataset, rows: np.ndarray) -> Dataset:
    return Dataset(
        X=d.X[rows].copy(),
        W=d.W[rows].copy(),
        Y=d.Y[rows].copy(),
        ids=tuple(d.ids[i] for i in rows),
    )


def _random_unit_folds(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    fold = np.empty(n, dtype=int)
    fold[rng.permutation(n)] = np.arange(n) % k
    return fold


def _fold_errors_matched(
    d, trainer, lambdas, fold_of_row, pairs_by_fold, D, cfg
):
    """Per-fold training and Eq.-4 evaluation over the fold's pairs."""
    t_rows = np.array(D.treated_rows)
    c_rows = np.array(D.control_rows)
    errors = np.zeros((cfg.k_folds, len(lambdas)))
    usable = []
    for fold in range(cfg.k_folds):
        pairs = pairs_by_fold.get(fold, [])
        if not pairs:
            continue
        usable.append(fold)
        train = np.nonzero(fold_of_row != fold)[0]
        path = trainer(_subset(d, train), lambdas)
        for li in range(len(lambdas)):
            tau_t = predict_tau(path, li, d.X[t_rows])
            m = Match(pairs=tuple(pairs))
            errors[fold, li] = validation_error(
                m, d.Y[t_rows], d.Y[c_rows], tau_t
            )
    return errors, usable


def cross_validate(
    d: Dataset, trainer, lambdas, cfg: MethodConfig
) -> CVResult:
    """Per-lambda cross-validated error under one of the five methods.

    ``trainer(dataset, lambdas)`` fits the estimator on a training subset.
    Folds whose validation set contributes no pairs (matched methods) or
    no units (prd) are excluded and flagged.
    """
    lambdas = tuple(lambdas)
    if cfg.k_folds < 2:
        raise ValueError("need at least 2 folds")
    rng = np.random.default_rng(cfg.seed)
    method = cfg.method

    if method == "prd":
        fold_of_row = _random_unit_folds(d.n, cfg.k_folds, rng)
        errors = np.zeros((cfg.k_folds, len(lambdas)))
        usable = []
        for fold in range(cfg.k_folds):
            held = np.nonzero(fold_of_row == fold)[0]
            if held.size == 0:
                continue
            usable.append(fold)
            train = np.nonzero(fold_of_row != fold)[0]
            path = trainer(_subset(d, train), lambdas)
            for li in range(len(lambdas)):
                pred = predict_response(path, li, d.X[held], d.W[held])
                errors[fold, li] = float(np.mean((d.Y[held] - pred) ** 2))
        skipped = tuple(f for f in range(cfg.k_folds) if f not in usable)
        return CVResult(errors=errors[usable].mean(axis=0), skipped_folds=skipped)

    if method == "S-M":
        fold_of_row = _random_unit_folds(d.n, cfg.k_folds, rng)
        errors = np.zeros((cfg.k_folds, len(lambdas)))
        usable = []
        for fold in range(cfg.k_folds):
            held = np.nonzero(fold_of_row == fold)[0]
            sub = _subset(d, held)
            pm = None
            if sub.n and 0 < sub.W.sum() < sub.n and np.sum(sub.W == 0) >= 2:
                try:
                    D, _ = _distance_for(sub, cfg, kind="proximity")
                    pm = prune(min_avg_match(D, cfg.spec).match)
                except InfeasibleMatchError:
                    pm = None
            if pm is None or not pm.pairs:
                continue
            usable.append(fold)
            train = np.nonzero(fold_of_row != fold)[0]
            path = trainer(_subset(d, train), lambdas)
            t_rows = np.array(D.treated_rows)
            c_rows = np.array(D.control_rows)
            for li in range(len(lambdas)):
                tau_t = predict_tau(path, li, sub.X[t_rows])
                errors[fold, li] = validation_error(
                    pm, sub.Y[t_rows], sub.Y[c_rows], tau_t
                )
        skipped = tuple(f for f in range(cfg.k_folds) if f not in usable)
        if not usable:
            raise InfeasibleMatchError("no fold produced a feasible match")
        return CVResult(errors=errors[usable].mean(axis=0), skipped_folds=skipped)

    # matched methods on the full dataset: combo / cvr / full
    if method == "combo":
        D, _ = _distance_for(d, cfg, kind="proximity")
        sol = min_avg_match(D, cfg.spec)
    elif method == "cvr":
        D, _ = _distance_for(d, cfg, kind="mahalanobis")
        sol = min_avg_match(D, cfg.spec)
    elif method == "full":
        D, _ = _distance_for(d, cfg, kind="proximity")
        sol = min_total_match(D, cfg.spec)
    else:  # pragma: no cover
        raise AssertionError(method)
    pm = prune(sol.match)
    fold_t, fold_c = make_folds(pm, D.n_treated, D.n_control, cfg.k_folds, rng)
    fold_of_row = np.empty(d.n, dtype=int)
    t_rows = np.array(D.treated_rows)
    c_rows = np.array(D.control_rows)
    fold_of_row[t_rows] = fold_t
    fold_of_row[c_rows] = fold_c
    pairs_by_fold: dict[int, list] = {}
    for t, c, dist in pm.pairs:
        if fold_t[t] != fold_c[c]:
            raise AssertionError("a matched pair spans folds")
        pairs_by_fold.setdefault(int(fold_t[t]), []).append((t, c, dist))
    errors, usable = _fold_errors_matched(
        d, trainer, lambdas, fold_of_row, pairs_by_fold, D, cfg
    )
    skipped = tuple(f for f in range(cfg.k_folds) if f not in usable)
    return CVResult(errors=errors[usable].mean(axis=0), skipped_folds=skipped)


def _log_binom(z: np.ndarray, y: np.ndarray) -> np.ndarray:
    lg = np.frompyfunc(math.lgamma, 1, 1)
    return (
        lg(z + 1.0) - lg(y + 1.0) - lg(z - y + 1.0)
    ).astype(float)


def conditional_nll(
    match: Match,
    y_t: np.ndarray,
    y_c: np.ndarray,
    tau_hat_t: np.ndarray,
    family: str,
    sigma2: float = 1.0,
) -> float:
    """Mean negative log conditional likelihood of the observed pair split
    given the pair sum, with the natural-parameter gap set to tau_hat."""
    if not match.pairs:
        raise ValueError("conditional likelihood of an empty match is undefined")
    yt = np.array([y_t[t] for t, _, _ in match.pairs], dtype=float)
    yc = np.array([y_c[c] for _, c, _ in match.pairs], dtype=float)
    tau = np.array([tau_hat_t[t] for t, _, _ in match.pairs], dtype=float)
    if family == "gaussian":
        const = 0.5 * math.log(math.pi * sigma2)
        return float(np.mean((yt - yc - tau) ** 2 / (4 * sigma2) + const))
    if family == "bernoulli":
        if not np.all(np.isin(yt, (0.0, 1.0))) or not np.all(
            np.isin(yc, (0.0, 1.0))
        ):
            raise ValueError("bernoulli family needs responses in {0,1}")
        z = yt + yc
        disc = z == 1.0
        nll = np.zeros_like(yt)
        nll[disc] = np.logaddexp(0.0, tau[disc]) - tau[disc] * yt[disc]
        return float(np.mean(nll))
    if family == "poisson":
        if (
            np.any(yt < 0)
            or np.any(yc < 0)
            or np.any(yt != np.round(yt))
            or np.any(yc != np.round(yc))
        ):
            raise ValueError("poisson family needs nonnegative integer responses")
        z = yt + yc
        # Y_t | Z ~ Binomial(Z, sigmoid(tau_hat))
        log_p = tau - np.logaddexp(0.0, tau)
        log_q = -np.logaddexp(0.0, tau)
        nll = -(_log_binom(z, yt) + yt * log_p + (z - yt) * log_q)
        return float(np.mean(nll))
    raise ValueError(f"unknown family {family!r}")
