import csv
import json
import os

import numpy as np
import pytest

import rislocate.harness.campaign as campaign
from rislocate.errors import AlgorithmError, ConfigError, InvalidInputError
from rislocate.harness.campaign import compute_rmse, run_campaign
from rislocate.harness.cli import main
from rislocate.harness.config import parse_config, parse_power, ris_shape

QUICK = {"runs": 2, "N_list": [16], "T": 200, "K": 100}


def test_defaults():
    cfg = parse_config()
    assert (cfg.M, cfg.Nx, cfg.Ny, cfg.d_G, cfg.beta) == (4, 4, 4, 50.0, 2.0)
    assert cfg.P == pytest.approx(0.1) and cfg.sigma2 == pytest.approx(1e-11)
    assert (cfg.epsilon, cfg.N_A, cfg.delta, cfg.delta_f, cfg.T, cfg.overlap) == \
        (0.5, 3, 0.5, 30.72e6, 1000, 0.2)


def test_power_strings():
    assert parse_config(overrides=["P=20dBm"]).P == pytest.approx(0.1)
    assert parse_config(overrides={"sigma2": "-80 dBm"}).sigma2 == pytest.approx(1e-11)
    assert parse_power("P", "100mW") == pytest.approx(0.1)
    with pytest.raises(ConfigError):
        parse_power("P", "loud")


@pytest.mark.parametrize("override,key", [("runs=0", "runs"), ("bogus=1", "bogus"),
                                          ("N_A=2", "N_A"), ("L=64", "L"), ("T=abc", "T"),
                                          ("prior_range=[80, 20]", "prior")])
def test_rejections_name_the_key(override, key):
    with pytest.raises(ConfigError) as exc:
        parse_config(overrides=[override])
    assert exc.value.key == key


def test_yaml_file_and_override_precedence(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("runs: 7\nseed: 3\nN_list: [16, 64]\n")
    cfg = parse_config(p, ["seed=5"])
    assert (cfg.runs, cfg.seed, cfg.N_list) == (7, 5, [16, 64])
    bad = tmp_path / "bad.yaml"
    bad.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        parse_config(bad)


def test_ris_shapes():
    assert ris_shape(16) == (4, 4)
    assert ris_shape(32) == (8, 4)
    assert ris_shape(64) == (8, 8)
    with pytest.raises(ConfigError):
        ris_shape(32, square=True)


def test_rmse_arithmetic():
    assert compute_rmse([[0.0, 0.0], [0.0]]).rmse == [0.0, 0.0]
    assert compute_rmse([[np.array([3.0, 4.0, 0.0])]]).rmse == [pytest.approx(5.0)]
    assert compute_rmse([[0.0], [10.0]]).rmse[0] == pytest.approx(np.sqrt(50))
    # the short run carries its last value forward
    c = compute_rmse([[4.0, 2.0, 0.0], [3.0]])
    assert c.rmse == pytest.approx([np.sqrt(12.5), np.sqrt(6.5), np.sqrt(4.5)])
    with pytest.raises(InvalidInputError):
        compute_rmse([])


def test_campaign_outputs_round_trip(tmp_path):
    cfg = parse_config(overrides={**QUICK, "output_dir": str(tmp_path),
                                  "emit_pseudospectrum": True, "emit_beampattern": True,
                                  "pattern_step": 5.0})
    out = run_campaign(cfg)
    assert sorted(out["files"]) == ["beampattern.csv", "manifest.json", "pseudospectrum.csv",
                                    "raw.csv", "rmse.csv"]
    with open(tmp_path / "rmse.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["iteration", "rmse", "N"]
    assert all(float(r["rmse"]) >= 0 for r in rows)
    with open(tmp_path / "pseudospectrum.csv") as fh:
        assert next(csv.reader(fh)) == ["angle", "value", "iteration", "subarea", "N", "run"]
    with open(tmp_path / "beampattern.csv") as fh:
        assert next(csv.reader(fh)) == ["angle", "gain", "iteration", "subarea", "N", "run"]
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["seed"] == 0 and manifest["runs"]["16"]["failed"] == 0


def test_campaign_fails_when_most_runs_fail(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise AlgorithmError("stuck")
    monkeypatch.setattr(campaign, "run_localization", boom)
    cfg = parse_config(overrides={**QUICK, "output_dir": str(tmp_path)})
    with pytest.raises(AlgorithmError):
        run_campaign(cfg)


def test_parallel_matches_serial(tmp_path):
    a = parse_config(overrides={**QUICK, "output_dir": str(tmp_path / "a")})
    b = parse_config(overrides={**QUICK, "output_dir": str(tmp_path / "b"), "workers": 2})
    run_campaign(a)
    run_campaign(b)
    for name in ("rmse.csv", "raw.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_cli_error_is_json(capsys):
    assert main(["simulate", "--set", "runs=0"]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ConfigError" and err["key"] == "runs"


def test_cli_selftest(capsys):
    assert main(["selftest"]) == 0
    assert json.loads(capsys.readouterr().out)["passed"] is True


def test_cli_probe_and_pattern(tmp_path, capsys):
    out = tmp_path / "probe"
    assert main(["probe", "-o", str(out), "--set", "T=200", "--set", "pattern_step=10"]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["doa_error"] < 0.5
    assert {"pseudospectrum.csv", "beampattern.csv", "ris_configs.json"} <= set(os.listdir(out))
    dest = tmp_path / "pat.csv"
    assert main(["pattern", str(out / "ris_configs.json"), "--iteration", "1", "--subarea", "1",
                 "--step", "1", "--output", str(dest)]) == 0
    lines = dest.read_text().splitlines()
    assert lines[0] == "angle,gain" and len(lines) == 361
    assert main(["pattern", str(out / "ris_configs.json"), "--iteration", "99"]) == 2


def test_cli_simulate(tmp_path, capsys):
    assert main(["simulate", "-o", str(tmp_path), "--runs", "1", "--set", "N_list=[16]",
                 "--set", "T=200"]) == 0
    res = json.loads(capsys.readouterr().out)
    assert res["failures"] == {"16": 0}
    assert (tmp_path / "rmse.csv").exists()
