import json
from pathlib import Path

import pytest

from ponsim import cli
from ponsim.cli import ParseError, config_from_dict, config_hash, parse_config
from ponsim.scenario import ValidationError
from ponsim.sched import PriorityPolicy, SchedKind
from ponsim.twdm import WavelengthPolicy

SMALL_CONFIG = """
name = "cli-small"
n_onus = 4
n_wavelengths = 2
line_rate_bps = 2.5e9
duration_s = 0.3
warmup_s = 0.1
replications = 2
master_seed = 7
loads = [0.8]

[scheduler]
kind = "dwba_fl"
priority_policy = "dc_first"
guard_ns = 6240

[fl]
payload_bytes_per_round = 264000
clients = 2
"""


def test_empty_config_reproduces_reference_scenario(tmp_path):
    path = tmp_path / "empty.toml"
    path.write_text("")
    cfg = parse_config(path)
    assert cfg.n_onus == 32
    assert cfg.n_wavelengths == 2
    assert cfg.line_rate_bps == 25e9
    assert cfg.scheduler.guard_ns == 624
    assert cfg.scheduler.max_cycle_ns == 1_000_000
    assert cfg.scheduler.theta == 0.015
    assert cfg.rtt_min_ns == 100_000 and cfg.rtt_max_ns == 200_000
    assert cfg.duration_s == 100.0
    assert cfg.replications == 10
    assert cfg.loads == tuple(round(0.6 + 0.05 * i, 2) for i in range(9))
    assert cfg.cbr.packet_bytes == 70
    assert cfg.cbr.interarrival_ns == 12_500
    assert cfg.fl.payload_bytes_per_round == 26_400_000
    assert cfg.fl.clients == 32
    assert cfg.guaranteed_bps == 50e9 / 32


def test_unknown_key_rejected():
    with pytest.raises(ValidationError, match="unknown key"):
        config_from_dict({"bogus_knob": 1})
    with pytest.raises(ValidationError, match="scheduler"):
        config_from_dict({"scheduler": {"no_such": 1}})


def test_invalid_values_rejected():
    with pytest.raises(ValidationError):
        config_from_dict({"n_onus": 0})
    with pytest.raises(ValidationError):
        config_from_dict({"scheduler": {"theta": 1.5, "kind": "mw_bs"}})


def test_bad_toml_raises_parse_error(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("n_onus = = 3\n")
    with pytest.raises(ParseError, match="bad.toml"):
        parse_config(path)


def test_run_writes_csv_and_manifest(tmp_path):
    cfg_path = tmp_path / "cfg.toml"
    cfg_path.write_text(SMALL_CONFIG)
    out = tmp_path / "out"
    rc = cli.main(["run", "--config", str(cfg_path), "--out", str(out)])
    assert rc == 0
    csv_path = out / "results_load0.8.csv"
    assert csv_path.exists()
    text = csv_path.read_text()
    header = text.splitlines()[0]
    assert header == "scenario,seed,load,scheduler,policy,wavelength_policy,class,metric,value"
    assert "mean_delay_s" in text and "util_l0" in text and "mean_cycle_s" in text
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["scenario"] == "cli-small"
    assert len(manifest["seeds"]) == 2
    assert manifest["config_hash"]


def test_run_is_byte_deterministic(tmp_path):
    cfg_path = tmp_path / "cfg.toml"
    cfg_path.write_text(SMALL_CONFIG)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert cli.main(["run", "--config", str(cfg_path), "--out", str(out1), "--seed", "7"]) == 0
    assert cli.main(["run", "--config", str(cfg_path), "--out", str(out2), "--seed", "7"]) == 0
    a = (out1 / "results_load0.8.csv").read_bytes()
    b = (out2 / "results_load0.8.csv").read_bytes()
    assert a == b


def test_seed_override_recorded_in_manifest(tmp_path):
    cfg_path = tmp_path / "cfg.toml"
    cfg_path.write_text(SMALL_CONFIG)
    out = tmp_path / "out"
    assert cli.main(["run", "--config", str(cfg_path), "--out", str(out), "--seed", "99"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["master_seed"] == 99


def test_unwritable_out_dir_exits_2(tmp_path):
    cfg_path = tmp_path / "cfg.toml"
    cfg_path.write_text(SMALL_CONFIG)
    blocker = tmp_path / "blocked"
    blocker.write_text("a file, not a directory")
    rc = cli.main(["run", "--config", str(cfg_path), "--out", str(blocker)])
    assert rc == 2


def test_sweep_overrides_loads(tmp_path):
    cfg_path = tmp_path / "cfg.toml"
    cfg_path.write_text(SMALL_CONFIG.replace('loads = [0.8]', 'loads = [0.8, 0.9]'))
    out = tmp_path / "out"
    rc = cli.main(["sweep", "--config", str(cfg_path), "--out", str(out),
                   "--loads", "0.7", "--replications", "1"])
    assert rc == 0
    assert (out / "results_load0.7.csv").exists()
    assert not (out / "results_load0.8.csv").exists()


def test_config_hash_tracks_meaningful_changes():
    a = config_from_dict({})
    b = config_from_dict({"n_onus": 16})
    c = config_from_dict({})
    assert config_hash(a) != config_hash(b)
    assert config_hash(a) == config_hash(c)


def test_selftest_passes(capsys):
    assert cli.selftest() == 0
    out = capsys.readouterr().out
    assert "dba2_equal_split" in out
    assert "FAIL" not in out


def test_selftest_catches_corrupted_dba2(monkeypatch, capsys):
    from ponsim import dba

    real = dba.distribute_excess

    def corrupted(policy, demands, over, pool):
        grants = real(policy, demands, over, pool)
        if policy is dba.ExcessPolicy.DBA2:
            grants = {i: g + 1 for i, g in grants.items()}
        return grants

    monkeypatch.setattr(cli, "distribute_excess", corrupted)
    assert cli.selftest() == 1
    out = capsys.readouterr().out
    assert "dba2_equal_split  FAIL" in out.replace("   ", "  ") or "dba2_equal_split" in out


def test_waste_subcommand_prints_reference_row(capsys):
    rc = cli.main([
        "waste", "--cycle-us", "1000", "--rtt-us", "200", "--n-onus", "32",
        "--n-group", "28", "--wlength-percent", "100", "--guard-us", "1",
    ])
    assert rc == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("cycle_us,rtt_us")
    assert out[1] == "1000,200,32,28,100,1,75,7.5"
