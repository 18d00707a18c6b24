import csv
import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from alasso.cli import main

FIXTURES = Path(__file__).parent / "fixtures"
C2 = [[1.0, -0.7], [-0.7, 1.0]]
C3 = [[1.0, -0.3, 0.7], [-0.3, 1.0, 0.2], [0.7, 0.2, 1.0]]


def write(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


def read_csv(path):
    with open(path) as f:
        return list(csv.DictReader(f))


def small_experiment(**kw):
    doc = {
        "C": C2,
        "schedule": {"c": [1.0, 1.0], "gamma": [0.7, 0.7]},
        "n_grid": [100, 400],
        "replications": 30,
        "beta_catalog": [{"id": "zero", "beta": [0.0, 0.0]}, {"id": "one", "beta": [1.0, 0.0]}],
        "seed": 5,
    }
    doc.update(kw)
    return doc


# --- fit ------------------------------------------------------------------------

def test_fit_orthogonal_fixture_matches_closed_form(tmp_path):
    out = tmp_path / "out"
    assert main(["fit", "--config", str(FIXTURES / "orthogonal_problem.json"),
                 "--out", str(out)]) == 0
    fit = json.loads((out / "fit.json").read_text())
    expected = json.loads((FIXTURES / "orthogonal_expected.json").read_text())
    np.testing.assert_allclose(fit["beta_al"], expected["beta_al"], atol=1e-8)
    np.testing.assert_allclose(fit["beta_ls"], expected["beta_ls"], atol=1e-8)
    assert fit["beta_al"][1] == 0.0 and fit["active_set"] == [0, 2]
    assert fit["converged"] and fit["lemma1_ok"]
    rows = read_csv(out / "coefficients.csv")
    assert [r["j"] for r in rows] == ["1", "2", "3"]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["subcommand"] == "fit" and len(manifest["config_sha256"]) == 64
    assert set(manifest["outputs"]) == {"fit.json", "coefficients.csv"}


def test_fit_zero_tuning_is_exactly_least_squares(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.standard_normal((20, 2))
    prob = write(tmp_path / "p.json", {"X": X.tolist(), "y": rng.standard_normal(20).tolist()})
    tun = write(tmp_path / "t.json", {"lambda": [0.0, 0.0]})
    assert main(["fit", "--config", prob, "--tuning", tun, "--out", str(tmp_path / "o")]) == 0
    fit = json.loads((tmp_path / "o" / "fit.json").read_text())
    assert fit["beta_al"] == fit["beta_ls"]
    assert fit["lemma1_margin"] == [0.0, 0.0]


def test_fit_path_output(tmp_path):
    out = tmp_path / "o"
    assert main(["fit", "--config", str(FIXTURES / "orthogonal_problem.json"), "--out", str(out),
                 "--scales", "0,1,1e6"]) == 0
    rows = read_csv(out / "path.csv")
    assert len(rows) == 9 and set(rows[0]) == {"lambda_scale", "j", "beta_al_j"}
    assert float(rows[-2]["beta_al_j"]) == 0.0


def test_malformed_json_exits_nonzero_without_outputs(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"X": [[1, 2]],\n "y": [1,, 2]}')
    out = tmp_path / "o"
    assert main(["fit", "--config", str(bad), "--out", str(out)]) == 2
    assert not out.exists()
    assert "bad.json:2:" in capsys.readouterr().err


def test_invalid_problem_exits_nonzero(tmp_path):
    prob = write(tmp_path / "p.json", {"X": [[1.0, 0.0]], "y": [1.0], "lambda": [1.0, 1.0]})
    assert main(["fit", "--config", prob, "--out", str(tmp_path / "o")]) == 2
    assert not (tmp_path / "o").exists()


def test_convergence_failure_exits_nonzero(tmp_path):
    rng = np.random.default_rng(1)
    X = rng.standard_normal((30, 3))
    X[:, 1] = X[:, 0] + 0.05 * X[:, 1]
    y = X @ [1.0, 1.0, 0.5] + rng.standard_normal(30)
    prob = write(tmp_path / "p.json", {"X": X.tolist(), "y": y.tolist(), "lambda": [1, 1, 1]})
    assert main(["fit", "--config", prob, "--out", str(tmp_path / "o"), "--max-iter", "1"]) == 1
    assert not (tmp_path / "o").exists()


# --- mset -------------------------------------------------------------------------

def test_mset_one_dimensional(tmp_path):
    cfg = write(tmp_path / "r.json", {"C": [[1.0]], "lambda0": [1.0], "psi": [0.0]})
    assert main(["mset", "--config", cfg, "--out", str(tmp_path / "o"), "--count", "4"]) == 0
    pts = sorted(float(r["m_1"]) for r in read_csv(tmp_path / "o" / "boundary.csv"))
    np.testing.assert_allclose(pts, [-1.0, 1.0], atol=1e-9)


def test_mset_p3_uniform_cloud_is_inside(tmp_path):
    cfg = write(tmp_path / "r.json", {"C": C3})
    assert main(["mset", "--config", cfg, "--out", str(tmp_path / "o"), "--count", "100",
                 "--projection", "3"]) == 0
    rows = read_csv(tmp_path / "o" / "boundary.csv")
    assert len(rows) == 100
    assert max(float(r["margin"]) for r in rows) <= 1e-9
    proj = read_csv(tmp_path / "o" / "projection.csv")
    assert set(proj[0]) == {"m_1", "m_2"}


def test_mset_unpenalized_first_coordinate_is_planar(tmp_path):
    cfg = write(tmp_path / "r.json", {"C": C3, "lambda0": [0.0, 1.0, 1.0], "psi": ["inf", 0, 0]})
    assert main(["mset", "--config", cfg, "--out", str(tmp_path / "o"), "--count", "80"]) == 0
    pts = np.array([[float(r[f"m_{j}"]) for j in (1, 2, 3)]
                    for r in read_csv(tmp_path / "o" / "boundary.csv")])
    assert np.abs(pts @ np.array(C3)[0]).max() <= 1e-9


def test_mset_schedule_form_and_svg(tmp_path):
    cfg = write(tmp_path / "r.json", {"C": C2, "schedule": {"c": [1, 1], "gamma": [0.5, 0.5]}})
    out = tmp_path / "o"
    assert main(["mset", "--config", cfg, "--out", str(out), "--count", "32",
                 "--ellipse", "0.05"]) == 0
    svg = (out / "boundary.svg").read_text()
    assert svg.startswith("<svg") and svg.count("<polygon") == 2
    summary = json.loads((out / "summary.json").read_text())
    assert summary["regime"]["psi"] == [0.0, 0.0] and summary["ok"]


def test_mset_json_format_and_inf_encoding(tmp_path):
    cfg = write(tmp_path / "r.json", {"C": C3, "lambda0": [0.0, 1.0, 1.0], "psi": ["inf", 0, 0]})
    out = tmp_path / "o"
    assert main(["mset", "--config", cfg, "--out", str(out), "--count", "10",
                 "--format", "json"]) == 0
    doc = json.loads((out / "boundary.json").read_text())
    assert len(doc["points"]) == 10
    assert json.loads((out / "summary.json").read_text())["regime"]["psi"][0] == "inf"


def test_mset_invalid_regime(tmp_path):
    cfg = write(tmp_path / "r.json", {"C": C2, "lambda0": [0.5, 0.5], "psi": [0, 0]})
    assert main(["mset", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert not (tmp_path / "o").exists()


# --- experiments --------------------------------------------------------------------

def test_zero_replications_is_rejected(tmp_path):
    cfg = write(tmp_path / "c.json", small_experiment(replications=0))
    assert main(["select", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert not (tmp_path / "o").exists()


def test_runs_are_bitwise_identical_and_inputs_untouched(tmp_path):
    cfg = write(tmp_path / "c.json", small_experiment())
    before = Path(cfg).read_bytes()
    assert main(["select", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["select", "--config", cfg, "--out", str(tmp_path / "b"), "--threads", "2"]) == 0
    for name in ("report.csv", "summary.json", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert Path(cfg).read_bytes() == before


def test_manifest_hash_tracks_content_only(tmp_path):
    doc = small_experiment()
    a = write(tmp_path / "a.json", doc)
    b = tmp_path / "b.json"
    b.write_text(json.dumps(dict(reversed(list(doc.items()))), indent=4))
    c = write(tmp_path / "c.json", small_experiment(replications=31))
    hashes = []
    for i, path in enumerate((a, str(b), c)):
        out = tmp_path / f"o{i}"
        assert main(["select", "--config", path, "--out", str(out)]) == 0
        hashes.append(json.loads((out / "manifest.json").read_text())["config_sha256"])
    assert hashes[0] == hashes[1] != hashes[2]


def test_seed_override_changes_draws_and_is_recorded(tmp_path):
    cfg = write(tmp_path / "c.json", small_experiment())
    assert main(["rates", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["rates", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "99"]) == 0
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert (ma["seed"], mb["seed"]) == (5, 99)
    assert ma["config_sha256"] == mb["config_sha256"]
    assert (tmp_path / "a" / "report.csv").read_text() != (tmp_path / "b" / "report.csv").read_text()


def test_invalid_schedule_needs_override(tmp_path):
    doc = small_experiment(schedule={"c": [1.0, 1.0], "gamma": [1.0, 1.0]})
    cfg = write(tmp_path / "c.json", doc)
    assert main(["select", "--config", cfg, "--out", str(tmp_path / "a")]) == 2
    assert main(["select", "--config", cfg, "--out", str(tmp_path / "b"),
                 "--allow-invalid-schedule"]) == 0


def test_report_format_json(tmp_path):
    cfg = write(tmp_path / "c.json", small_experiment(phi=[5.0, "inf"]))
    assert main(["dist", "--config", cfg, "--out", str(tmp_path / "o"), "--format", "json"]) == 0
    rows = json.loads((tmp_path / "o" / "report.json").read_text())
    assert {"experiment", "n", "beta_id", "item", "statistic", "value", "stderr"} <= set(rows[0])
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["phi"] == [5.0, "inf"]


def test_csv_numbers_round_trip(tmp_path):
    cfg = write(tmp_path / "c.json", small_experiment())
    assert main(["rates", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    for r in read_csv(tmp_path / "o" / "report.csv"):
        v = r["value"]
        assert v in ("nan", "inf", "-inf") or repr(float(v)) == v


def test_coverage_fixture_reproduces_committed_report(tmp_path):
    cfg = tmp_path / "coverage_small.json"
    shutil.copy(FIXTURES / "coverage_small.json", cfg)
    assert main(["coverage", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    got = (tmp_path / "o" / "report.csv").read_text()
    assert got == (FIXTURES / "coverage_small_report.csv").read_text()


def test_missing_required_flag_is_a_usage_error():
    with pytest.raises(SystemExit) as e:
        main(["fit"])
    assert e.value.code == 2
