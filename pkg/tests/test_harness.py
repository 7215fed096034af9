import csv
import json
import math

import numpy as np
import pytest

from mudsim import __version__
from mudsim.cli import main
from mudsim.config import ConfigError, SimConfig, parse_config
from mudsim.sweep import make_trial, run_sweep, sidecar_paths

SMALL = dict(symbols=1000, trials=3, users=6)


# configuration


def test_empty_config_gives_reference_defaults():
    cfg = parse_config("")
    assert (cfg.users, cfg.degree, cfg.fd_tb, cfg.mu) == (20, 5, 0.003, 1e-4)
    assert cfg.spreading_factor == 31
    assert cfg.ebno_db == (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    assert cfg.receivers == ("mf", "sic", "pic", "ba_sic", "ba_pic")
    assert (cfg.symbols, cfg.trials, cfg.seed) == (20000, 10, 1)


def test_chip_referenced_step_size():
    assert parse_config("").effective_mu == pytest.approx(31e-4)
    assert parse_config("mu_reference = code").effective_mu == pytest.approx(1e-4)


def test_ebno_list_parsing_and_comments():
    cfg = parse_config("# sweep\nebno_db = 0,10,20,30  # four points\n\nreceivers = mf, sic\n")
    assert cfg.ebno_db == (0.0, 10.0, 20.0, 30.0)
    assert cfg.receivers == ("mf", "sic")


@pytest.mark.parametrize(
    "text,line",
    [
        ("users = 40", 1),
        ("\nfoo = 1", 2),
        ("symbols = 999", 1),
        ("fd_tb = 0.7", 1),
        ("receivers = mf, zf", 1),
        ("users = twenty", 1),
        ("users 20", 1),
        ("\n\nmu = -1", 3),
        ("seed = 1\nseed = 2", 2),
    ],
)
def test_invalid_config_reports_line(text, line):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert exc.value.line == line
    assert str(exc.value).startswith(f"line {line}:")


def test_family_size_bound_follows_degree():
    assert parse_config("degree = 6\nusers = 40").users == 40
    with pytest.raises(ConfigError, match="33"):
        parse_config("users = 34")


def test_overrides_win_and_are_validated():
    cfg = parse_config("seed = 3", seed=9, receivers=("mf",))
    assert cfg.seed == 9 and cfg.receivers == ("mf",)
    with pytest.raises(ConfigError):
        parse_config("", users=50)


def test_config_text_round_trip():
    cfg = SimConfig(users=7, ebno_db=(1.5, 2.0), receivers=("mf", "ba_pic"), bapic_weights="shared")
    assert parse_config(cfg.to_text()) == cfg


# sweeps


def test_trials_do_not_depend_on_trial_count():
    a = make_trial(SimConfig(**{**SMALL, "trials": 2}), 1)
    b = make_trial(SimConfig(**{**SMALL, "trials": 7}), 1)
    assert np.array_equal(a.gains, b.gains) and np.array_equal(a.unit_noise, b.unit_noise)
    c = make_trial(SimConfig(**SMALL), 2)
    assert not np.allclose(a.gains, c.gains)


def test_single_user_mf_rate_at_30db():
    res = run_sweep(SimConfig(users=1, receivers=("mf",), ebno_db=(30.0,), trials=4))
    row = res.row("mf", 0, 30.0)
    assert row.sum_rate_bps_hz == pytest.approx(math.log2(1001) / 31, rel=0.03)
    assert row.sum_rate_bps_hz == pytest.approx(0.32, abs=0.01)


def test_csv_layout_and_stage_rows(tmp_path):
    out = tmp_path / "r.csv"
    cfg = SimConfig(**SMALL, ebno_db=(10.0, 20.0), stages=2)
    run_sweep(cfg, out)
    lines = out.read_text().splitlines()
    assert lines[0] == "receiver,stage,ebno_db,mse,sinr_mean_db,sum_rate_bps_hz,ber,symbols,trials,seed"
    rows = list(csv.DictReader(lines))
    stages = {(r["receiver"], r["stage"]) for r in rows}
    assert stages == {("mf", "0"), ("sic", "0"), ("ba_sic", "0")} | {
        (k, str(l)) for k in ("pic", "ba_pic") for l in range(3)
    }
    assert len(rows) == 2 * 9
    for r in rows:
        assert float(r["mse"]) >= 0 and float(r["sum_rate_bps_hz"]) >= 0
        assert 0 <= float(r["ber"]) <= 1
        assert r["symbols"] == "1000" and r["trials"] == "3" and r["seed"] == "1"
    diag, man = sidecar_paths(out)
    assert len(diag.read_text().splitlines()) == 19
    m = json.loads(man.read_text())
    assert m["version"] == __version__
    assert len(m["trial_seeds"]) == 3 and len(m["code_family"]["sha256"]) == 64


def test_ber_falls_with_ebno():
    res = run_sweep(SimConfig(**SMALL, receivers=("mf", "sic"), ebno_db=(0.0, 20.0)))
    for k in ("mf", "sic"):
        assert res.row(k, 0, 20.0).ber < res.row(k, 0, 0.0).ber


def test_ba_pic_stage_variance_does_not_grow():
    res = run_sweep(SimConfig(users=20, symbols=4000, trials=2, receivers=("ba_pic",), ebno_db=(20.0,)))
    v = [res.cell("ba_pic", l, 20.0).acc.residual_power() for l in range(4)]
    assert all(b <= a for a, b in zip(v[1:], v[2:]))
    assert v[1] < v[0]


def test_diverged_cells_are_invalid(tmp_path):
    out = tmp_path / "d.csv"
    cfg = SimConfig(**SMALL, receivers=("mf", "ba_sic"), ebno_db=(10.0,), mu=20.0, mu_reference="code")
    res = run_sweep(cfg, out)
    assert res.cell("ba_sic", 0, 10.0).diverged == 3
    assert not res.cell("ba_sic", 0, 10.0).valid
    assert math.isnan(res.row("ba_sic", 0, 10.0).mse)
    assert res.cell("mf", 0, 10.0).valid
    diag = list(csv.DictReader(sidecar_paths(out)[0].read_text().splitlines()))
    bad = [d for d in diag if d["receiver"] == "ba_sic"][0]
    assert bad["valid"] == "0" and bad["diverged_trials"] == "3"


def test_worker_count_does_not_change_bytes(tmp_path):
    cfg = SimConfig(**SMALL, ebno_db=(5.0, 25.0))
    run_sweep(cfg.replace(workers=1), tmp_path / "a.csv")
    run_sweep(cfg.replace(workers=3), tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


# command line


def test_cli_version(capsys):
    assert main(["version"]) == 0
    assert capsys.readouterr().out.startswith(f"mudsim {__version__}")


def test_cli_codes(tmp_path, capsys):
    assert main(["codes", "--degree", "5", "--correlation", str(tmp_path / "R.csv")]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 34
    assert lines[0].split(",")[:3] == ["index", "label", "chip_0"]
    R = np.loadtxt(tmp_path / "R.csv", delimiter=",", skiprows=1, usecols=range(1, 34))
    assert np.allclose(np.diag(R), 1.0)


def test_cli_fading_check(tmp_path, capsys):
    trace = tmp_path / "t.csv"
    assert main(["fading-check", "--symbols", "5000", "--fd-tb", "0.01", "--trace", str(trace)]) == 0
    out = capsys.readouterr().out
    assert "variance = " in out and "ks_rayleigh = " in out
    lines = trace.read_text().splitlines()
    assert lines[0] == "m,re,im,magnitude" and len(lines) == 5001


def test_cli_run_and_errors(tmp_path, capsys):
    cfgf = tmp_path / "c.cfg"
    cfgf.write_text("users = 4\nsymbols = 1000\ntrials = 2\n")
    out = tmp_path / "o.csv"
    rec = tmp_path / "rec.csv"
    rc = main(
        ["run", "--config", str(cfgf), "--ebno-db", "10,20", "--receivers", "mf,ba_sic", "--seed", "5",
         "--out", str(out), "--records", str(rec)]
    )
    assert rc == 0
    rows = list(csv.DictReader(out.read_text().splitlines()))
    assert [r["receiver"] for r in rows] == ["mf", "mf", "ba_sic", "ba_sic"]
    assert all(r["seed"] == "5" for r in rows)
    recs = rec.read_text().splitlines()
    assert recs[0] == "receiver,stage,user,m,z,est,bit"
    assert len(recs) == 1 + 2 * 1000 * 4

    cfgf.write_text("users = 40\n")
    assert main(["run", "--config", str(cfgf), "--out", str(out)]) != 0
    assert "line 1" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "missing.cfg")]) != 0
