import json
import math
import os

import pytest
import yaml

from luq import cli

CONFIGS = os.path.join(os.path.dirname(__file__), "..", "demos", "configs")


def _cfg(tmp_path, payload, name="c.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(payload))
    return str(p)


def _load(path):
    with open(path) as fh:
        return json.load(fh)


def test_list_presets(capsys):
    assert cli.main(["list-presets"]) == 0
    out = capsys.readouterr().out
    for key in ("kl", "hellinger", "chi_alpha", "alpha", "slowfast", "double-well", "custom-polynomial"):
        assert key in out


def test_missing_config_flag():
    assert cli.main(["bound"]) == cli.EXIT_CONFIG


def test_malformed_config_writes_nothing(tmp_path):
    out = tmp_path / "out"
    assert cli.main(["run", "--config", os.path.join(CONFIGS, "malformed.yaml"), "--out", str(out)]) == 2
    assert not out.exists()


def test_semantic_config_error_writes_nothing(tmp_path):
    cfg = {"command": "bound", "grid": {"lo": [-5], "hi": [5], "n": [101]},
           "densities": {"mu": {"kind": "gaussian", "var": 1.0}}}
    out = tmp_path / "out"
    assert cli.main(["run", "--config", _cfg(tmp_path, cfg), "--out", str(out)]) == 2
    assert not out.exists()


def test_not_yaml(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("command: [unclosed\n")
    assert cli.main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == 2


def test_divergence_gaussian_shift(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["divergence", "--config", os.path.join(CONFIGS, "divergence.yaml"), "--out", str(out)]) == 0
    d = _load(out / "divergence.json")
    assert d["divergence"] == pytest.approx(0.5, abs=1e-4)
    assert d["resolution"]["grid"]["n"] == [2001]
    assert {"config_resolved.json", "run_info.json"} <= set(os.listdir(out))


def test_bound_equal_densities_zero(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["bound", "--config", os.path.join(CONFIGS, "bound_equal.yaml"), "--out", str(out)]) == 0
    b = _load(out / "bound.json")
    assert b["sandwich_holds"] is True
    for k in ("b_plus", "b_minus", "gap", "divergence"):
        assert abs(b[k]) <= 1e-8


def test_infinite_divergence_exit_3(tmp_path):
    cfg = {"command": "divergence", "grid": {"lo": [-10], "hi": [10], "n": [2001]},
           "densities": {"mu": {"kind": "gaussian", "mean": 5.0, "var": 0.01},
                         "nu": {"kind": "gaussian", "mean": -5.0, "var": 0.01}}}
    out = tmp_path / "o"
    assert cli.main(["run", "--config", _cfg(tmp_path, cfg), "--out", str(out)]) == 3
    assert _load(out / "divergence.json")["divergence"] == "inf"


def test_gated_violation_exit_4(tmp_path):
    s2 = math.sqrt(2.0)
    cfg = {"command": "pathspace-bound", "grid": {"lo": [-8], "hi": [8], "n": [801]},
           "models": {"mu": {"preset": "ou", "beta": 1.0, "sigma": s2},
                      "nu": {"preset": "ou", "beta": 2.0, "sigma": s2}},
           "densities": {"init": {"kind": "gaussian", "mean": 0.0, "var": 1.0}},
           "run": {"t0": 0.0, "t1": 0.5, "record_times": [0.0, 0.5]}}
    out = tmp_path / "o"
    assert cli.main(["run", "--config", _cfg(tmp_path, cfg), "--out", str(out)]) == 4
    assert _load(out / "pathspace_bound.json")["ftdr_checks"][0]["status"] == "violated"
    cfg["run"]["gate_checks"] = False
    assert cli.main(["run", "--config", _cfg(tmp_path, cfg, "u.yaml"), "--out", str(tmp_path / "u")]) == 0


def test_fpe_snapshots(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["fpe", "--config", os.path.join(CONFIGS, "fpe.yaml"), "--out", str(out)]) == 0
    f = _load(out / "fpe.json")
    csvs = [n for n in os.listdir(out / "snapshots") if n.endswith(".csv")]
    assert len(csvs) == len(f["times"])


def test_case_study_verdict(tmp_path):
    cfg = {"command": "case-study",
           "models": {"true": {"preset": "slowfast", "eps": 0.1}},
           "run": {"t1": 0.5, "N": 5000, "n_boot": 5, "with_bounds": False, "snapshots": 5}}
    out = tmp_path / "o"
    code = cli.main(["run", "--config", _cfg(tmp_path, cfg), "--out", str(out)])
    rep = _load(out / "case_study.json")
    assert rep["verdict"] in ("F_better", "I_better", "indistinguishable")
    assert code == (4 if rep["verdict"] == "I_better" else 0)
    assert (out / "reduced_I.csv").exists() and (out / "reduced_F.csv").exists()


def _outputs(d):
    skip = {"run_info.json", "config_resolved.json"}
    res = {}
    for root, _, files in os.walk(d):
        for f in files:
            if f not in skip:
                p = os.path.join(root, f)
                res[os.path.relpath(p, d)] = open(p, "rb").read()
    return res


@pytest.mark.parametrize("name", ["divergence", "bound", "ftdr_field"])
def test_rerun_byte_identical(tmp_path, name):
    path = os.path.join(CONFIGS, name + ".yaml")
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["run", "--config", path, "--out", str(a), "--seed", "11", "--workers", "1"]) == 0
    assert cli.main(["run", "--config", path, "--out", str(b), "--seed", "11", "--workers", "2"]) == 0
    assert _outputs(a) == _outputs(b)
    assert _load(a / "config_resolved.json")["run"]["seed"] == 11
