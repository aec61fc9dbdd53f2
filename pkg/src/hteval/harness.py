"""Simulation study driver: methods x settings x repetitions, relative MSE,
error-curve regressions, and result files."""
from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .assess import MethodConfig, cross_validate
from .datamodel import Dataset, Truth
from .estimator import DEFAULT_LAMBDAS, LassoPath, fit_joint_lasso
from .forest import ForestParams
from .synthgen import ScenarioConfig, generate_scenario, scenario_config


@dataclass(frozen=True)
class ExperimentConfig:
    settings: tuple[str, ...] = ("I",)
    methods: tuple[str, ...] = ("combo",)
    reps: int = 200
    seed: int = 0
    lambdas: tuple[float, ...] = DEFAULT_LAMBDAS
    n: int | None = None
    snr: float | None = None
    forest: ForestParams = ForestParams(n_trees=100)
    jobs: int = 1  # 1 = serial (reproducible ordering)

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be at least 1")


def oracle_mse(path: LassoPath, truth: Truth) -> tuple[int, float]:
    """(lambda index, minimum of ||beta_hat - beta||^2 over the grid);
    ties go to the smaller lambda index."""
    sq = np.sum((path.beta_hat - truth.beta[None, :]) ** 2, axis=1)
    idx = int(np.argmin(sq))
    return idx, float(sq[idx])


def relative_mse(mse_m: float, mse_o: float) -> float:
    """log(MSE_method / MSE_oracle); +inf sentinel for a zero oracle."""
    if mse_o == 0.0:
        return math.inf
    return math.log(mse_m / mse_o)


def curve_regression(validation, oracle) -> tuple[float, float, float]:
    """(slope, intercept, R^2) of OLS of the validation curve on the
    oracle curve."""
    v = np.asarray(validation, dtype=float)
    o = np.asarray(oracle, dtype=float)
    if v.shape != o.shape or len(v) < 3:
        raise ValueError("curves must have equal length >= 3")
    if np.ptp(o) == 0.0:
        raise ValueError("constant oracle curve: slope undefined")
    slope, intercept = np.polyfit(o, v, 1)
    resid = v - (slope * o + intercept)
    tss = float(np.sum((v - v.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / tss if tss > 0 else 1.0
    return float(slope), float(intercept), float(r2)


def _rep_seeds(seed: int, settings, reps: int) -> dict[tuple[str, int], int]:
    """Deterministic per-(setting, rep) seeds from one root stream."""
    ss = np.random.SeedSequence(seed)
    children = ss.spawn(len(settings) * reps)
    out = {}
    i = 0
    for setting in settings:
        for rep in range(reps):
            out[(setting, rep)] = int(children[i].generate_state(1)[0])
            i += 1
    return out


def _run_rep(args):
    setting, rep, rep_seed, cfg = args
    overrides = {"seed": rep_seed}
    if cfg.n is not None:
        overrides["n"] = cfg.n
    if cfg.snr is not None:
        overrides["snr_target"] = cfg.snr
    scen = scenario_config(setting, **overrides)
    dataset, truth = generate_scenario(scen)
    full_path = fit_joint_lasso(dataset, cfg.lambdas)
    oracle_idx, mse_o = oracle_mse(full_path, truth)
    oracle_curve = np.sum(
        (full_path.beta_hat - truth.beta[None, :]) ** 2, axis=1
    )
    record = {
        "setting": setting,
        "rep": rep,
        "seed": rep_seed,
        "mse_oracle": mse_o,
        "oracle_lambda_index": oracle_idx,
        "oracle_curve": [float(v) for v in oracle_curve],
        "methods": {},
    }
    for mi, method in enumerate(cfg.methods):
        mcfg = MethodConfig(
            method=method,
            k_folds=scen.k_folds,
            forest=replace(cfg.forest, seed=rep_seed % (2**31)),
            seed=rep_seed + 1000003 * (mi + 1),
        )
        try:
            cv = cross_validate(dataset, fit_joint_lasso, cfg.lambdas, mcfg)
        except Exception as exc:  # recorded, never silently dropped
            record["methods"][method] = {"failed": repr(exc)}
            continue
        errs = cv.errors
        # ties toward the smaller lambda: the grid is descending, so scan
        # from the end (smallest lambda) for the minimum
        best = len(errs) - 1 - int(np.argmin(errs[::-1]))
        sq = float(
            np.sum((full_path.beta_hat[best] - truth.beta) ** 2)
        )
        record["methods"][method] = {
            "lambda_index": best,
            "lambda": cfg.lambdas[best],
            "mse": sq,
            "relative_mse": relative_mse(sq, mse_o),
            "curve": [float(v) for v in errs],
            "skipped_folds": list(cv.skipped_folds),
        }
    return record


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Full study: per-repetition records plus aggregated curves and
    per-method (slope, R^2) against the oracle curve, per setting."""
    seeds = _rep_seeds(cfg.seed, cfg.settings, cfg.reps)
    tasks = [
        (setting, rep, seeds[(setting, rep)], cfg)
        for setting in cfg.settings
        for rep in range(cfg.reps)
    ]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            records = list(pool.map(_run_rep, tasks))
    else:
        records = [_run_rep(t) for t in tasks]
    records.sort(key=lambda r: (r["setting"], r["rep"]))

    aggregated = {}
    for setting in cfg.settings:
        recs = [r for r in records if r["setting"] == setting]
        oracle_curve = np.mean([r["oracle_curve"] for r in recs], axis=0)
        agg = {"oracle_curve": [float(v) for v in oracle_curve], "methods": {}}
        for method in cfg.methods:
            ok = [r for r in recs if "curve" in r["methods"].get(method, {})]
            if not ok:
                agg["methods"][method] = {"failed_reps": len(recs)}
                continue
            curve = np.mean([r["methods"][method]["curve"] for r in ok], axis=0)
            rel = sorted(r["methods"][method]["relative_mse"] for r in ok)
            slope, intercept, r2 = curve_regression(curve, oracle_curve)
            agg["methods"][method] = {
                "curve": [float(v) for v in curve],
                "slope": slope,
                "intercept": intercept,
                "r2": r2,
                "relative_mse_quartiles": [
                    float(np.quantile(rel, q)) for q in (0.25, 0.5, 0.75)
                ],
                "failed_reps": len(recs) - len(ok),
            }
        aggregated[setting] = agg
    return {
        "config": {
            "settings": list(cfg.settings),
            "methods": list(cfg.methods),
            "reps": cfg.reps,
            "seed": cfg.seed,
            "lambdas": list(cfg.lambdas),
            "n": cfg.n,
            "snr": cfg.snr,
            "forest_trees": cfg.forest.n_trees,
        },
        "repetitions": records,
        "aggregated": aggregated,
    }


def write_results(result: dict, outdir) -> None:
    """Emit results.json, curves.csv, summary.csv (and curves.svg)."""
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "results.json"), "w", encoding="utf-8") as fh:
        json.dump(result, fh, indent=1, sort_keys=True)
        fh.write("\n")
    lambdas = result["config"]["lambdas"]
    with open(
        os.path.join(outdir, "curves.csv"), "w", newline="", encoding="utf-8"
    ) as fh:
        writer = csv.writer(fh)
        writer.writerow(["setting", "lambda", "oracle"] + result["config"]["methods"])
        for setting, agg in result["aggregated"].items():
            for li, lam in enumerate(lambdas):
                row = [setting, repr(lam), repr(agg["oracle_curve"][li])]
                for method in result["config"]["methods"]:
                    mdata = agg["methods"][method]
                    row.append(
                        repr(mdata["curve"][li]) if "curve" in mdata else ""
                    )
                writer.writerow(row)
    with open(
        os.path.join(outdir, "summary.csv"), "w", newline="", encoding="utf-8"
    ) as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["setting", "method", "slope", "r2",
             "rel_mse_q1", "rel_mse_median", "rel_mse_q3", "failed_reps"]
        )
        for setting, agg in result["aggregated"].items():
            for method in result["config"]["methods"]:
                mdata = agg["methods"][method]
                if "curve" not in mdata:
                    writer.writerow([setting, method, "", "", "", "", "",
                                     mdata["failed_reps"]])
                    continue
                q1, med, q3 = mdata["relative_mse_quartiles"]
                writer.writerow(
                    [setting, method, repr(mdata["slope"]), repr(mdata["r2"]),
                     repr(q1), repr(med), repr(q3), mdata["failed_reps"]]
                )
    _write_svg(result, os.path.join(outdir, "curves.svg"))


def _write_svg(result: dict, path) -> None:
    """Static line plot of the shifted mean error curves, one panel per
    setting; curves are shifted only here so that starting points coincide."""
    lambdas = result["config"]["lambdas"]
    methods = result["config"]["methods"]
    settings = list(result["aggregated"])
    colors = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#000000"]
    width, height, pad = 320, 240, 36
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" '
        f'width="{width * len(settings)}" height="{height}">'
    ]
    for si, setting in enumerate(settings):
        agg = result["aggregated"][setting]
        series = [("oracle", agg["oracle_curve"], colors[-1])]
        for mi, method in enumerate(methods):
            mdata = agg["methods"][method]
            if "curve" in mdata:
                series.append((method, mdata["curve"], colors[mi % 5]))
        shifted = [
            (name, [v - curve[0] for v in curve], color)
            for name, curve, color in series
        ]
        all_vals = [v for _, c, _ in shifted for v in c]
        lo, hi = min(all_vals), max(all_vals)
        span = (hi - lo) or 1.0
        x0 = si * width
        parts.append(
            f'<text x="{x0 + pad}" y="16" font-size="12">setting {setting}</text>'
        )
        for name, curve, color in shifted:
            pts = []
            for li in range(len(lambdas)):
                x = x0 + pad + (width - 2 * pad) * li / (len(lambdas) - 1)
                y = height - pad - (height - 2 * pad) * (curve[li] - lo) / span
                pts.append(f"{x:.1f},{y:.1f}")
            parts.append(
                f'<polyline fill="none" stroke="{color}" '
                f'points="{" ".join(pts)}"/>'
            )
        for i, (name, _, color) in enumerate(shifted):
            parts.append(
                f'<text x="{x0 + pad}" y="{30 + 12 * i}" font-size="10" '
                f'fill="{color}">{name}</text>'
            )
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts))
