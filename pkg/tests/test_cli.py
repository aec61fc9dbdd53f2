import csv
import json

import numpy as np
import pytest

from hteval import DistanceMatrix
from hteval.cli import main
from hteval.distances import save_distance_matrix


def _fig_distances(tmp_path):
    values = np.array(
        [[2.0, 3.0, 3.0], [2.0, 3.0, 3.0], [3.0, 2.0, 2.0]]
    )
    D = DistanceMatrix(
        values=values, kind="custom",
        treated_ids=("t1", "t2", "t3"), control_ids=("c1", "c2", "c3"),
    )
    path = tmp_path / "D.csv"
    save_distance_matrix(D, path)
    return path


def _read_pairs(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_simulate_is_deterministic(tmp_path):
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / f"{tag}.csv"
        truth = tmp_path / f"{tag}.json"
        assert main(["simulate", "--setting", "I", "--seed", "7", "--n", "40",
                     "--out", str(out), "--truth-out", str(truth)]) == 0
        outs.append((out.read_bytes(), truth.read_bytes()))
    assert outs[0] == outs[1]


def test_simulate_rejects_unknown_setting(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--setting", "VI",
              "--out", str(tmp_path / "d.csv"),
              "--truth-out", str(tmp_path / "t.json")])
    assert exc.value.code == 2
    err = capsys.readouterr().err
    assert "I" in err and "V" in err


def test_simulate_from_features_subsample(tmp_path):
    rng = np.random.default_rng(1)
    feat = tmp_path / "features.csv"
    with open(feat, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x1", "x2", "x3"])
        writer.writerows(rng.standard_normal((30, 3)).tolist())
    out = tmp_path / "d.csv"
    assert main(["simulate", "--from-features", str(feat), "--frac", "0.667",
                 "--seed", "3", "--out", str(out),
                 "--truth-out", str(tmp_path / "t.json")]) == 0
    n_rows = len(out.read_text().splitlines()) - 1  # header
    assert n_rows == 20  # floor(0.667 * 30)


def test_match_solve_average_objective(tmp_path):
    D = _fig_distances(tmp_path)
    out = tmp_path / "pairs.csv"
    assert main(["match", "solve", "--distances", str(D),
                 "--objective", "avg", "--out", str(out)]) == 0
    rows = _read_pairs(out)
    assert len(rows) == 4
    assert np.mean([float(r["distance"]) for r in rows]) == pytest.approx(2.0)


def test_match_solve_total_objective(tmp_path):
    D = _fig_distances(tmp_path)
    out = tmp_path / "pairs.csv"
    assert main(["match", "solve", "--distances", str(D),
                 "--objective", "total", "--out", str(out)]) == 0
    rows = _read_pairs(out)
    assert len(rows) == 3
    assert sum(float(r["distance"]) for r in rows) == pytest.approx(7.0)


def test_match_prune_is_identity_on_stars(tmp_path):
    pairs = tmp_path / "pairs.csv"
    with open(pairs, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["treated_id", "control_id", "distance"])
        writer.writerows([["t1", "c1", "1.0"], ["t1", "c2", "2.0"],
                          ["t2", "c3", "1.0"]])
    out = tmp_path / "pruned.csv"
    assert main(["match", "prune", "--pairs", str(pairs),
                 "--out", str(out)]) == 0
    got = {(r["treated_id"], r["control_id"]) for r in _read_pairs(out)}
    assert got == {("t1", "c1"), ("t1", "c2"), ("t2", "c3")}


def test_match_prune_reduces_chain(tmp_path):
    pairs = tmp_path / "pairs.csv"
    with open(pairs, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["treated_id", "control_id", "distance"])
        writer.writerows([["t1", "c1", "4.0"], ["t2", "c1", "1.0"],
                          ["t2", "c2", "2.0"], ["t3", "c2", "1.0"],
                          ["t3", "c3", "4.0"]])
    out = tmp_path / "pruned.csv"
    assert main(["match", "prune", "--pairs", str(pairs),
                 "--out", str(out)]) == 0
    rows = _read_pairs(out)
    assert len(rows) == 4
    assert ("t2", "c2") not in {(r["treated_id"], r["control_id"]) for r in rows}


def test_infeasible_spec_exits_2_naming_bound(tmp_path, capsys):
    D = _fig_distances(tmp_path)
    code = main(["match", "solve", "--distances", str(D), "--mt", "4",
                 "--Mt", "4", "--out", str(tmp_path / "p.csv")])
    assert code == 2
    assert "m_t=4" in capsys.readouterr().err


def test_pipeline_simulate_export_solve_prune_cv(tmp_path):
    data = tmp_path / "d.csv"
    assert main(["simulate", "--setting", "I", "--seed", "5", "--n", "60",
                 "--out", str(data),
                 "--truth-out", str(tmp_path / "t.json")]) == 0
    dist = tmp_path / "D.csv"
    assert main(["match", "export-distance", "--data", str(data),
                 "--kind", "proximity", "--trees", "25",
                 "--out", str(dist)]) == 0
    pairs = tmp_path / "pairs.csv"
    assert main(["match", "solve", "--distances", str(dist),
                 "--out", str(pairs)]) == 0
    pruned = tmp_path / "pruned.csv"
    assert main(["match", "prune", "--pairs", str(pairs),
                 "--out", str(pruned)]) == 0
    assert len(_read_pairs(pruned)) <= len(_read_pairs(pairs))
    curve = tmp_path / "curve.csv"
    assert main(["cv", "--data", str(data), "--method", "combo",
                 "--folds", "3", "--trees", "25", "--seed", "1",
                 "--out", str(curve)]) == 0
    rows = curve.read_text().splitlines()
    assert rows[0] == "lambda,validation_error"
    assert len(rows) == 1 + 11  # default grid length


def test_experiment_summary_has_method_rows(tmp_path):
    out = tmp_path / "results"
    assert main(["experiment", "--settings", "I", "--methods", "combo,prd",
                 "--reps", "2", "--n", "60", "--trees", "20",
                 "--serial", "--seed", "4", "--out", str(out)]) == 0
    summary = (out / "summary.csv").read_text().splitlines()
    assert len(summary) == 1 + 2
    res = json.loads((out / "results.json").read_text())
    assert res["config"]["methods"] == ["combo", "prd"]


def test_experiment_rejects_unknown_setting(tmp_path):
    with pytest.raises(SystemExit):
        main(["experiment", "--settings", "I,VI", "--reps", "1",
              "--out", str(tmp_path / "r")])


def test_config_file_supplies_required_flags(tmp_path):
    cfg = tmp_path / "cfg.json"
    out = tmp_path / "d.csv"
    cfg.write_text(json.dumps({
        "out": str(out),
        "truth_out": str(tmp_path / "t.json"),
        "n": 40,
        "seed": 9,
    }))
    assert main(["simulate", "--config", str(cfg)]) == 0
    assert out.exists()
    # explicit flags win over config values
    out2 = tmp_path / "d2.csv"
    assert main(["simulate", "--config", str(cfg),
                 "--out", str(out2)]) == 0
    ref = tmp_path / "ref.csv"
    assert main(["simulate", "--seed", "9", "--n", "40", "--out", str(ref),
                 "--truth-out", str(tmp_path / "t3.json")]) == 0
    assert out2.read_bytes() == ref.read_bytes()


def test_config_file_rejects_unknown_keys(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"out": "x.csv", "truth_out": "t.json",
                               "bogus_key": 1}))
    assert main(["simulate", "--config", str(cfg)]) == 1
    assert "bogus_key" in capsys.readouterr().err


def test_config_file_missing_is_an_error(tmp_path, capsys):
    assert main(["simulate", "--config", str(tmp_path / "nope.json")]) == 1
    assert "cannot read config" in capsys.readouterr().err
