"""Synthetic data generation for the five simulation settings.

Covariates are i.i.d. uniform on [-1,1]^p (or standardized rows of a
user-supplied table), treatment is Bernoulli(e(x)), and responses follow
Y = mu(X) + W tau(X) + eps with Gaussian noise scaled to a target
signal-to-noise ratio.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .datamodel import Dataset, Truth


@dataclass(frozen=True)
class ScenarioConfig:
    n: int = 200
    p: int = 10
    delta: float = 0.0
    propensity_kind: str = "constant"  # "constant" or "logistic"
    propensity_param: float = 0.5  # e for constant, theta on x1 for logistic
    k_folds: int = 10
    snr_target: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n < 4:
            raise ValueError("n must be at least 4")
        if self.p < 1:
            raise ValueError("p must be at least 1")
        if not (0 < self.snr_target <= 1):
            raise ValueError("snr_target must lie in (0, 1]")
        if self.k_folds < 2:
            raise ValueError("k_folds must be at least 2")
        if self.propensity_kind not in ("constant", "logistic"):
            raise ValueError(f"unknown propensity kind {self.propensity_kind!r}")


#: Named presets: (delta, p, propensity, k_folds).
SETTINGS: dict[str, ScenarioConfig] = {
    "I": ScenarioConfig(delta=0.0, p=10, propensity_kind="constant", k_folds=10),
    "II": ScenarioConfig(delta=-2.0, p=10, propensity_kind="constant", k_folds=10),
    "III": ScenarioConfig(delta=0.0, p=20, propensity_kind="constant", k_folds=10),
    "IV": ScenarioConfig(
        delta=0.0, p=10, propensity_kind="logistic", propensity_param=2.0, k_folds=10
    ),
    "V": ScenarioConfig(delta=0.0, p=10, propensity_kind="constant", k_folds=25),
}


def scenario_config(name: str, **overrides) -> ScenarioConfig:
    """Look up a preset by name (I..V) with optional field overrides."""
    if name not in SETTINGS:
        raise ValueError(
            f"unknown setting {name!r}; choose one of {', '.join(SETTINGS)}"
        )
    return replace(SETTINGS[name], **overrides)


def propensity(x: np.ndarray, kind: str, param: float) -> float:
    """Treatment probability for one covariate row."""
    if kind == "constant":
        return float(param)
    if kind == "logistic":
        z = param * float(np.atleast_1d(x)[0])
        return float(1.0 / (1.0 + np.exp(-z)))
    raise ValueError(f"unknown propensity kind {kind!r}")


def _propensity_vec(X: np.ndarray, kind: str, param: float) -> np.ndarray:
    if kind == "constant":
        return np.full(X.shape[0], float(param))
    return 1.0 / (1.0 + np.exp(-param * X[:, 0]))


#: Magnitude of the (always nonzero) intercept draw. The intercept carries
#: the bulk of the effect signal so that the coefficient-space estimation
#: error tracks the function-space validation error instead of being
#: diluted by the Var(x_j) = 1/3 weighting of slope coefficients.
_INTERCEPT_MAG = 1.5

#: Magnitude of nonzero effect slope coefficients; small relative to the
#: intercept (see above) and to the control-mean slopes, which keeps the
#: SNR-scaled noise low enough for matching quality to matter.
_EFFECT_SLOPE_MAG = 0.5


#: Magnitudes of nonzero control-mean slope coefficients, sampled per
#: coefficient. The large value gives the control response enough
#: covariate signal (relative to the SNR-scaled noise) for a regression
#: forest to learn; the small value sits near the soft-threshold scale of
#: the tuning grid so that fitting the control mean keeps improving over
#: the whole grid.
_CONTROL_SLOPE_MAGS = (3.0, 0.3)


def _draw_coefficients(p: int, rng: np.random.Generator,
                       force_x1_positive: bool = False,
                       slope_mag=1.0) -> np.ndarray:
    """Length p+1 coefficients: intercept +-_INTERCEPT_MAG, and slopes of
    magnitude ``slope_mag`` (a scalar, or a tuple to sample from per
    coefficient) with random signs on a random support, so at least half
    of the covariate coefficients are exactly zero."""
    coef = np.zeros(p + 1)
    coef[0] = _INTERCEPT_MAG * rng.choice([-1.0, 1.0])
    # Support is capped so that raising the dimension adds irrelevant
    # predictors rather than proportionally more signal carriers.
    support_size = min(p // 2, 5)
    if support_size == 0:
        return coef
    if force_x1_positive:
        rest = rng.choice(np.arange(2, p + 1), size=support_size - 1, replace=False)
        support = np.concatenate(([1], rest)).astype(int)
    else:
        support = rng.choice(np.arange(1, p + 1), size=support_size, replace=False)
    mags = rng.choice(np.atleast_1d(slope_mag), size=len(support))
    coef[support] = mags * rng.choice([-1.0, 1.0], size=len(support))
    if force_x1_positive:
        coef[1] = abs(coef[1])
    return coef


def _generate_given_X(
    X: np.ndarray,
    cfg: ScenarioConfig,
    rng: np.random.Generator,
    alpha: np.ndarray | None,
    beta: np.ndarray | None,
) -> tuple[Dataset, Truth]:
    n, p = X.shape
    if alpha is None:
        alpha = _draw_coefficients(p, rng, slope_mag=_CONTROL_SLOPE_MAGS)
    if beta is None:
        # Under the correlated propensity the effect must load positively
        # on x1 so that e(x) and tau(x) move together.
        beta = _draw_coefficients(
            p, rng, force_x1_positive=(cfg.propensity_kind == "logistic"),
            slope_mag=_EFFECT_SLOPE_MAG,
        )
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)

    e = _propensity_vec(X, cfg.propensity_kind, cfg.propensity_param)
    W = (rng.random(n) < e).astype(int)

    mu = alpha[0] + X @ alpha[1:] + cfg.delta * np.abs(X[:, 0])
    tau = beta[0] + X @ beta[1:]

    # sigma solves Var((W - e(X)) tau(X)) / sigma^2 = snr_target, with the
    # variance estimated over the generated covariates.
    signal_var = float(np.mean(e * (1.0 - e) * tau**2))
    sigma = np.sqrt(signal_var / cfg.snr_target) if signal_var > 0 else 1.0

    eps = rng.normal(0.0, sigma, size=n)
    Y = mu + W * tau + eps

    ids = tuple(f"u{i}" for i in range(n))
    dataset = Dataset(X=X, W=W, Y=Y, ids=ids)
    truth = Truth(
        alpha=alpha,
        beta=beta,
        delta=cfg.delta,
        sigma=float(sigma),
        propensity_kind=cfg.propensity_kind,
        propensity_param=cfg.propensity_param,
        potential0=mu,
        potential1=mu + tau,
        kappa=2.0,
    )
    return dataset, truth


def generate_scenario(
    cfg: ScenarioConfig,
    alpha: np.ndarray | None = None,
    beta: np.ndarray | None = None,
) -> tuple[Dataset, Truth]:
    """Draw a dataset from the generating model under ``cfg``.

    ``alpha``/``beta`` override the random coefficient draws (length p+1,
    intercept first); used for null-effect checks.
    """
    rng = np.random.default_rng(cfg.seed)
    X = rng.uniform(-1.0, 1.0, size=(cfg.n, cfg.p))
    return _generate_given_X(X, cfg, rng, alpha, beta)


def generate_from_features(
    table: np.ndarray,
    cfg: ScenarioConfig,
    subsample_fraction: float = 1.0,
    alpha: np.ndarray | None = None,
    beta: np.ndarray | None = None,
) -> tuple[Dataset, Truth]:
    """Generate treatment and responses on top of real covariate rows.

    Rows are optionally subsampled without replacement, then each column
    is standardized to zero mean and unit variance.
    """
    table = np.asarray(table, dtype=float)
    if table.size == 0:
        raise ValueError("covariate table is empty")
    if not np.all(np.isfinite(table)):
        raise ValueError("covariate table contains missing or non-finite values")
    if not (0 < subsample_fraction <= 1):
        raise ValueError("subsample_fraction must lie in (0, 1]")
    rng = np.random.default_rng(cfg.seed)
    n_keep = int(np.floor(subsample_fraction * table.shape[0]))
    if n_keep < 4:
        raise ValueError("subsampled table has fewer than 4 rows")
    rows = rng.choice(table.shape[0], size=n_keep, replace=False)
    X = table[rows]
    sd = X.std(axis=0)
    if np.any(sd == 0):
        raise ValueError("covariate table has a zero-variance column")
    X = (X - X.mean(axis=0)) / sd
    cfg = replace(cfg, n=n_keep, p=X.shape[1])
    return _generate_given_X(X, cfg, rng, alpha, beta)


def spawn_seeds(seed: int, count: int) -> list[np.random.SeedSequence]:
    """Independent child seed streams for parallel replications."""
    return np.random.SeedSequence(seed).spawn(count)
