import csv
import json

import pytest
import yaml

from atomprep.cli import EXIT_CHECK_FAILED, EXIT_ERROR, EXIT_OK, main, report
from atomprep.config import SCHEMA_VERSION, ConfigError, ExperimentConfig


def _write(tmp_path, data, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return p


def _read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# units:")
    return list(csv.reader(lines[1:]))


def test_default_config_roundtrip():
    cfg = ExperimentConfig.default("validate")
    assert cfg.params.tau == 0.05
    assert cfg.hash() == ExperimentConfig.default("validate").hash()
    assert cfg.with_seed(3).hash() != cfg.hash()


@pytest.mark.parametrize("bad", [
    {"kind": "validate"},
    {"schema_version": 2, "kind": "validate"},
    {"schema_version": SCHEMA_VERSION, "kind": "nope"},
    {"schema_version": SCHEMA_VERSION, "kind": "validate", "extra": 1},
    {"schema_version": SCHEMA_VERSION, "kind": "validate", "params": {"taux": 1}},
    {"schema_version": SCHEMA_VERSION, "kind": "validate", "atom": {"preset": "x"}},
    {"schema_version": SCHEMA_VERSION, "kind": "validate", "schedule": {"gamma": -0.9}},
    {"schema_version": SCHEMA_VERSION, "kind": "validate", "form_factor": {"kind": "tabulated"}},
    {"schema_version": SCHEMA_VERSION, "kind": "validate", "params": {"photon": "yes"}},
    {"schema_version": SCHEMA_VERSION, "kind": "validate", "atom": {"energies": [0, 1]}},
])
def test_config_errors(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(bad)


def test_kind_mismatch(tmp_path):
    p = _write(tmp_path, {"schema_version": 1, "kind": "grid"})
    with pytest.raises(ConfigError):
        ExperimentConfig.load(p, "validate")


def test_custom_atom_complex_coupling():
    cfg = ExperimentConfig.from_dict({
        "schema_version": 1, "kind": "validate",
        "atom": {"energies": [0, 1], "coupling": [[0, [0, -1]], [[0, 1], 0]]}})
    atom = cfg.atom.build()
    assert atom.coupling[0, 1] == -1j


def test_cli_validate(tmp_path, capsys):
    code = main(["validate", "--out", str(tmp_path / "v")])
    assert code == EXIT_OK
    m = json.loads((tmp_path / "v" / "manifest.json").read_text())
    assert m["passed"] and m["config_hash"] and "numpy" in m["versions"]
    assert "PASS" in capsys.readouterr().out


def test_cli_lindblad_outputs(tmp_path):
    p = _write(tmp_path, {"schema_version": 1, "kind": "lindblad", "output": str(tmp_path / "L")})
    assert main(["lindblad", "--config", str(p)]) == EXIT_OK
    rows = _read_csv(tmp_path / "L" / "lindblad.csv")
    assert rows[0] == ["row", "col", "re", "im"] and len(rows) == 17
    assert _read_csv(tmp_path / "L" / "spectrum.csv")[0] == ["index", "re", "im"]
    fgr = _read_csv(tmp_path / "L" / "fgr.csv")
    assert fgr[0] == ["level", "rate", "passed"] and float(fgr[1][1]) > 0
    st = _read_csv(tmp_path / "L" / "stationary.csv")
    assert st[0] == ["row", "col", "re", "im"] and float(st[1][2]) == pytest.approx(1.0)


def test_cli_grid(tmp_path):
    assert main(["grid", "--out", str(tmp_path / "g")]) == EXIT_OK
    rows = _read_csv(tmp_path / "g" / "grid.csv")
    assert rows[0] == ["i", "t_i", "lambda_i", "gap"]


def test_cli_kp_check_fails_at_default_eps0(tmp_path):
    assert main(["kp-check", "--out", str(tmp_path / "k")]) == EXIT_CHECK_FAILED
    rows = _read_csv(tmp_path / "k" / "kp-check.csv")
    assert rows[0] == ["vertex", "anchor_sum", "majorant", "q", "pass"]


def test_cli_cluster_demo(tmp_path):
    assert main(["cluster-demo", "--out", str(tmp_path / "c"), "--seed", "4"]) == EXIT_OK
    m = json.loads((tmp_path / "c" / "manifest.json").read_text())
    assert m["seed"] == 4
    rows = _read_csv(tmp_path / "c" / "cluster-demo.csv")
    assert rows[0] == ["system", "order", "partial_sum", "log_Z", "abs_error", "tail_bound"]


def test_cli_prepare_small(tmp_path):
    p = _write(tmp_path, {"schema_version": 1, "kind": "prepare",
                          "params": {"M": 32, "r_max": 5.0, "n_max": 1, "t_end": 20.0,
                                     "ground_threshold": 0.5}})
    assert main(["prepare", "--config", str(p), "--out", str(tmp_path / "p")]) == EXIT_OK
    rows = _read_csv(tmp_path / "p" / "prepare.csv")
    assert rows[0] == ["t", "pop_1", "pop_2", "re_obs", "im_obs", "norm"]


def test_cli_bad_config_exit_code(tmp_path, capsys):
    p = _write(tmp_path, {"schema_version": 1, "kind": "grid", "params": {"bogus": 1}})
    assert main(["grid", "--config", str(p)]) == EXIT_ERROR
    assert "config error" in capsys.readouterr().err


def test_report(tmp_path, capsys):
    main(["grid", "--out", str(tmp_path / "r" / "a")])
    main(["kp-check", "--out", str(tmp_path / "r" / "b")])
    text, code = report([str(tmp_path / "r")], tmp_path / "rep")
    assert code == EXIT_CHECK_FAILED
    assert text.splitlines()[0].startswith("FAIL")
    assert (tmp_path / "rep" / "report.csv").exists()
    assert main(["report", str(tmp_path / "nothing")]) == EXIT_ERROR


def test_same_config_and_seed_give_identical_csv(tmp_path):
    p = _write(tmp_path, {"schema_version": 1, "kind": "cluster-demo", "params": {"n_random": 3}})
    main(["cluster-demo", "--config", str(p), "--out", str(tmp_path / "a"), "--seed", "7"])
    main(["cluster-demo", "--config", str(p), "--out", str(tmp_path / "b"), "--seed", "7"])
    a = (tmp_path / "a" / "cluster-demo.csv").read_bytes()
    b = (tmp_path / "b" / "cluster-demo.csv").read_bytes()
    assert a == b
