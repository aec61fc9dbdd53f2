"""Command-line front end: simulate, match, cv, experiment subcommands.

All machine-readable output goes to files or stdout; logs go to stderr.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import __version__
from .assess import METHODS, MethodConfig, cross_validate
from .datamodel import Match, MatchSpec, load_dataset, save_dataset
from .distances import (
    load_distance_matrix,
    mahalanobis_matrix,
    proximity_matrix,
    save_distance_matrix,
)
from .estimator import DEFAULT_LAMBDAS, fit_joint_lasso
from .flowmatch import InfeasibleMatchError, min_avg_match, min_total_match
from .forest import ForestParams, fit_forest
from .harness import ExperimentConfig, run_experiment, write_results
from .prune import prune as prune_match
from .synthgen import (
    SETTINGS,
    generate_from_features,
    generate_scenario,
    scenario_config,
)


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _parse_lambdas(text: str | None):
    if text is None or text == "default":
        return DEFAULT_LAMBDAS
    return tuple(float(v) for v in text.split(","))


def _write_pairs(path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["treated_id", "control_id", "distance"])
        for tid, cid, dist in rows:
            writer.writerow([tid, cid, repr(float(dist))])


def cmd_simulate(args) -> int:
    if args.from_features:
        with open(args.from_features, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            cols = [i for i, h in enumerate(header) if h.strip() != "id"]
            table = np.array(
                [[float(row[i]) for i in cols] for row in reader if row]
            )
        cfg = scenario_config(
            args.setting, seed=args.seed,
            **({"snr_target": args.snr} if args.snr else {}),
        )
        dataset, truth = generate_from_features(table, cfg, args.frac)
    else:
        overrides = {"seed": args.seed}
        if args.n:
            overrides["n"] = args.n
        if args.snr:
            overrides["snr_target"] = args.snr
        cfg = scenario_config(args.setting, **overrides)
        dataset, truth = generate_scenario(cfg)
    save_dataset(dataset, args.out)
    truth_doc = {
        "alpha": list(truth.alpha),
        "beta": list(truth.beta),
        "delta": truth.delta,
        "sigma": truth.sigma,
        "kappa": truth.kappa,
        "propensity_kind": truth.propensity_kind,
        "propensity_param": truth.propensity_param,
    }
    with open(args.truth_out, "w", encoding="utf-8") as fh:
        json.dump(truth_doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
    _log(f"simulate: wrote {dataset.n} units to {args.out} (config {cfg})")
    return 0


def cmd_match_solve(args) -> int:
    D = load_distance_matrix(args.distances)
    spec = MatchSpec(m_t=args.mt, m_c=args.mc, M_t=args.Mt, M_c=args.Mc)
    solver = min_avg_match if args.objective == "avg" else min_total_match
    sol = solver(D, spec)
    match = prune_match(sol.match) if args.prune else sol.match
    _write_pairs(
        args.out,
        [
            (D.treated_ids[t], D.control_ids[c], dist)
            for t, c, dist in match.pairs
        ],
    )
    _log(
        f"match solve: objective={args.objective} pairs={match.size} "
        f"total={sol.total:.6g} average={sol.average:.6g}"
    )
    return 0


def cmd_match_prune(args) -> int:
    with open(args.pairs, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = [
            (r["treated_id"], r["control_id"], float(r["distance"]))
            for r in reader
        ]
    t_ids = sorted({t for t, _, _ in rows})
    c_ids = sorted({c for _, c, _ in rows})
    t_pos = {tid: i for i, tid in enumerate(t_ids)}
    c_pos = {cid: j for j, cid in enumerate(c_ids)}
    match = Match(
        pairs=tuple((t_pos[t], c_pos[c], d) for t, c, d in rows)
    )
    pruned = prune_match(match)
    _write_pairs(
        args.out, [(t_ids[t], c_ids[c], d) for t, c, d in pruned.pairs]
    )
    _log(f"match prune: {match.size} -> {pruned.size} pairs")
    return 0


def cmd_match_export_distance(args) -> int:
    d = load_dataset(args.data)
    if args.kind == "proximity":
        ctrl = np.nonzero(d.W == 0)[0]
        forest = fit_forest(
            d.X[ctrl], d.Y[ctrl],
            ForestParams(n_trees=args.trees, seed=args.seed),
        )
        D = proximity_matrix(forest, d)
    else:
        D = mahalanobis_matrix(d)
    save_distance_matrix(D, args.out)
    _log(f"export-distance: {D.n_treated}x{D.n_control} {args.kind} matrix")
    return 0


def cmd_cv(args) -> int:
    d = load_dataset(args.data)
    lambdas = _parse_lambdas(args.lambdas)
    cfg = MethodConfig(
        method=args.method,
        k_folds=args.folds,
        forest=ForestParams(n_trees=args.trees, seed=args.seed),
        seed=args.seed,
    )
    result = cross_validate(d, fit_joint_lasso, lambdas, cfg)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lambda", "validation_error"])
        for lam, err in zip(lambdas, result.errors):
            writer.writerow([repr(lam), repr(float(err))])
    if result.skipped_folds:
        _log(f"cv: folds {list(result.skipped_folds)} contributed no pairs")
    _log(f"cv: method={args.method} folds={args.folds} -> {args.out}")
    return 0


def cmd_experiment(args) -> int:
    cfg = ExperimentConfig(
        settings=tuple(args.settings.split(",")),
        methods=tuple(args.methods.split(",")),
        reps=args.reps,
        seed=args.seed,
        lambdas=_parse_lambdas(args.lambdas),
        n=args.n,
        snr=args.snr,
        forest=ForestParams(n_trees=args.trees),
        jobs=1 if args.serial else args.jobs,
    )
    for setting in cfg.settings:
        if setting not in SETTINGS:
            raise SystemExit(
                f"unknown setting {setting!r}; choose from {', '.join(SETTINGS)}"
            )
    result = run_experiment(cfg)
    write_results(result, args.out)
    _log(f"experiment: wrote results to {args.out}/")
    return 0


def build_parser(config_defaults=None) -> argparse.ArgumentParser:
    """CLI parser; ``config_defaults`` (from --config JSON) supplies
    defaults for any subcommand flag, including otherwise-required paths."""
    cfgd = config_defaults or {}

    def req(name: str) -> bool:
        return name not in cfgd

    def finish(p: argparse.ArgumentParser) -> None:
        p.add_argument(
            "--config", default=None,
            help="JSON file of flag defaults (explicit flags win)",
        )
        p.set_defaults(
            **{k: v for k, v in cfgd.items()
               if any(a.dest == k for a in p._actions)}
        )

    parser = argparse.ArgumentParser(
        prog="hteval",
        description="Matching-based assessment of HTE estimators",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    p.add_argument("--setting", default="I", choices=sorted(SETTINGS),
                   metavar="{I,II,III,IV,V}")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--snr", type=float, default=None)
    p.add_argument("--from-features", default=None,
                   help="CSV of covariate rows to generate on top of")
    p.add_argument("--frac", type=float, default=1.0,
                   help="subsample fraction for --from-features")
    p.add_argument("--out", required=req("out"))
    p.add_argument("--truth-out", required=req("truth_out"))
    p.set_defaults(func=cmd_simulate)
    finish(p)

    m = sub.add_parser("match", help="matching operations")
    msub = m.add_subparsers(dest="match_command", required=True)

    p = msub.add_parser("solve", help="solve a matching problem")
    p.add_argument("--distances", required=req("distances"))
    p.add_argument("--objective", choices=("avg", "total"), default="avg")
    p.add_argument("--mt", type=int, default=1)
    p.add_argument("--mc", type=int, default=1)
    p.add_argument("--Mt", type=int, default=2)
    p.add_argument("--Mc", type=int, default=2)
    p.add_argument("--prune", action="store_true")
    p.add_argument("--out", required=req("out"))
    p.set_defaults(func=cmd_match_solve)
    finish(p)

    p = msub.add_parser("prune", help="prune a match to star components")
    p.add_argument("--pairs", required=req("pairs"))
    p.add_argument("--out", required=req("out"))
    p.set_defaults(func=cmd_match_prune)
    finish(p)

    p = msub.add_parser("export-distance", help="write a distance matrix CSV")
    p.add_argument("--data", required=req("data"))
    p.add_argument("--kind", choices=("proximity", "mahalanobis"),
                   default="proximity")
    p.add_argument("--trees", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=req("out"))
    p.set_defaults(func=cmd_match_export_distance)
    finish(p)

    p = sub.add_parser("cv", help="cross-validated error curve")
    p.add_argument("--data", required=req("data"))
    p.add_argument("--method", choices=METHODS, default="combo")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--lambdas", default="default")
    p.add_argument("--trees", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=req("out"))
    p.set_defaults(func=cmd_cv)
    finish(p)

    p = sub.add_parser("experiment", help="run the simulation study")
    p.add_argument("--settings", default="I")
    p.add_argument("--methods", default="combo")
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lambdas", default="default")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--snr", type=float, default=None)
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--serial", action="store_true",
                   help="force serial, reproducible ordering")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=req("out"))
    p.set_defaults(func=cmd_experiment)
    finish(p)

    return parser


def _find_config(argv) -> str | None:
    """Locate --config before real parsing so its values can relax
    otherwise-required flags."""
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    overrides = None
    config_path = _find_config(argv)
    if config_path is not None:
        try:
            with open(config_path, encoding="utf-8") as fh:
                overrides = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            _log(f"error: cannot read config {config_path}: {exc}")
            return 1
    parser = build_parser(overrides)
    args = parser.parse_args(argv)
    if overrides is not None:
        unknown = set(overrides) - set(vars(args))
        if unknown:
            _log(f"error: unknown config keys: {sorted(unknown)}")
            return 1
    try:
        return args.func(args)
    except InfeasibleMatchError as exc:
        _log(f"error: infeasible match specification: {exc}")
        return 2
    except (ValueError, OSError) as exc:
        _log(f"error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
