import json
import math

import numpy as np
import pytest

from corrdecay.cli import emit_report, main

DOUBLING_DOC = {
    "lambda": 2.0,
    "K": 0.0,
    "eta": 1.0,
    "truncation_mass": 0.0,
    "branches": [
        {"kind": "affine", "cell": [0.0, 0.5]},
        {"kind": "affine", "cell": [0.5, 1.0]},
    ],
}

GOLDEN_TOWER_DOC = {
    "base": DOUBLING_DOC,
    "tau": [1, 2],
    "tail": {"class": "polynomial", "C_tau": 2.0, "beta": 2.0},
    "L_max": 8,
    "R": 0.1,
}

GOLDEN_PSEQ_DOC = {
    "p_minus1": 1.0 / 384.0,
    "p0": 1.0 / 128.0,
    "p": [95.0 / 96.0],
    "N": 5,
    "law": {"class": "polynomial", "C_tau": 2.0, "beta": 2.0},
    "R": 0.0,
}


def write(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


def test_certificate_values(tmp_path, capsys):
    rc = main(["certificate", "--lambda", "2", "--K", "1", "--eta", "1", "--out", str(tmp_path)])
    assert rc == 0
    payload = json.loads((tmp_path / "certificate.json").read_text())
    cert = payload["certificate"]
    assert cert["R"] == 4.0
    assert abs(cert["gamma"] - (1.0 - 0.25 * math.exp(-4.0))) < 1e-15


def test_decay_csv_header(tmp_path):
    doc = write(tmp_path / "map.json", DOUBLING_DOC)
    rc = main(
        ["decay-ue", "--map", doc, "--r-floor", "0.1", "--grid", "256", "--out", str(tmp_path)]
    )
    assert rc == 0
    lines = (tmp_path / "decay.csv").read_text().splitlines()
    assert lines[0] == "n,measured,bound,budget"
    for line in lines[1:]:
        n, measured, bound, budget = line.split(",")
        assert float(measured) <= float(bound)


def test_detailed_decay_columns(tmp_path):
    doc = write(tmp_path / "map.json", DOUBLING_DOC)
    rc = main(
        [
            "decay-ue", "--map", doc, "--r-floor", "0.1", "--grid", "256",
            "--detailed", "--out", str(tmp_path),
        ]
    )
    assert rc == 0
    header = (tmp_path / "decay.csv").read_text().splitlines()[0]
    assert header == "n,sup_norm,holder_seminorm,certificate_bound,error_budget"


def test_tower_constants_json(tmp_path):
    cfg = write(tmp_path / "tower.json", GOLDEN_TOWER_DOC)
    rc = main(["tower", "--config", cfg, "--out", str(tmp_path)])
    assert rc == 0
    payload = json.loads((tmp_path / "tower_constants.json").read_text())
    assert payload["constants"]["N1"] == 4
    assert payload["constants"]["I_set"] == [1, 2]


def test_tail_not_dominated_exit_2(tmp_path, capsys):
    bad = dict(GOLDEN_PSEQ_DOC)
    bad["p"] = [0.2, 0.2, 0.2, 0.2, 0.18958333333333333]
    # p_5 = 0.19 > e^0 * 2/25 = 0.08: the declared law cannot dominate it
    cfg = write(tmp_path / "pseq.json", bad)
    rc = main(["tail", "--config", cfg, "--samples", "1000", "--out", str(tmp_path)])
    assert rc == 2
    assert "NotDominated" in capsys.readouterr().err


def test_tail_golden_runs(tmp_path):
    cfg = write(tmp_path / "pseq.json", GOLDEN_PSEQ_DOC)
    rc = main(
        ["tail", "--config", cfg, "--samples", "20000", "--n-max", "40", "--out", str(tmp_path)]
    )
    assert rc == 0
    lines = (tmp_path / "tail.csv").read_text().splitlines()
    assert lines[0] == "n,empirical_tail,wilson_upper,analytic_bound"


def test_invalid_grid_exit_2(tmp_path):
    doc = write(tmp_path / "map.json", DOUBLING_DOC)
    rc = main(["decay-ue", "--map", doc, "--grid", "1000", "--out", str(tmp_path)])
    assert rc == 2


def test_no_convergence_exit_3(tmp_path, capsys):
    moebius_doc = {
        "lambda": 1.6,
        "K": 0.5,
        "eta": 1.0,
        "truncation_mass": 0.0,
        "branches": [
            {"kind": "moebius", "cell": [0.0, 0.5], "curvature": 0.25},
            {"kind": "moebius", "cell": [0.5, 1.0], "curvature": -0.2},
        ],
    }
    doc = write(tmp_path / "map.json", moebius_doc)
    rc = main(
        [
            "invariant-density", "--map", doc, "--grid", "256",
            "--max-iter", "1", "--out", str(tmp_path),
        ]
    )
    assert rc == 3
    assert "numerical failure" in capsys.readouterr().err


def test_missing_config_exit_2(tmp_path):
    rc = main(["tower", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)])
    assert rc == 2


def test_demo_prints_golden_block(tmp_path, capsys):
    rc = main(["demo", "--out", str(tmp_path), "--samples", "5000", "--grid", "512"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "N1=4 N2=1 N=5" in out
    assert "p_minus1=0.00260416666667" in out


def test_emit_report_refuses_empty(tmp_path):
    with pytest.raises(Exception):
        emit_report([], "csv", str(tmp_path / "x.csv"))


def test_emit_report_deterministic(tmp_path):
    rows = [{"n": 1, "v": 1.0 / 3.0}, {"n": 2, "v": np.float64(2.0) ** -40}]
    emit_report(rows, "csv", str(tmp_path / "a.csv"))
    emit_report(rows, "csv", str(tmp_path / "b.csv"))
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
