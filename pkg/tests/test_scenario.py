"""Scenario parsing/validation, bundled fixtures, runner reports, CLI."""

import os
import subprocess
import sys

import pytest

from droneqkd import cli, runner, scenario
from droneqkd.scenario import ScenarioError, list_bundled, load_bundled, loads_scenario

MINIMAL = """
name = mini
seed = 5
duration_s = 2
channel.loss_db = 0.5
channel.drift_rate = 0.002
session.block_pulses = 100000
session.block_seconds = 1
receiver.detection_efficiency = 0.85
receiver.electronic_noise = 0.03
channel.excess_noise = 0.005
session.v1 = 5.0
pat.enabled = false
"""


def test_bundled_coverage():
    names = list_bundled()
    assert names == ["ground_100m", "ground_100m_day2", "hover_25m", "hover_50m",
                     "hover_75m", "km_1p2", "km_1p2_hover", "motion_1mps"]
    for name in names:
        cfg = load_bundled(name)
        assert cfg.paper_reference is not None
        assert cfg.paper_reference.key_rate_kbps is not None


def test_bundled_hover_75m_values():
    cfg = load_bundled("hover_75m")
    assert cfg.channel.loss_db == 0.741
    assert cfg.paper_reference.key_rate_kbps == 79.48
    assert cfg.geometry.altitude_m == 75.0


def test_bundled_km_link_carries_both_loss_figures():
    cfg = load_bundled("km_1p2")
    assert cfg.channel.loss_db == 3.468
    assert cfg.paper_reference.transmittance == 0.483
    assert cfg.paper_reference.key_rate_kbps == 4.27


def test_unknown_bundled_name():
    with pytest.raises(ScenarioError):
        load_bundled("does_not_exist")


def test_minimal_scenario_defaults():
    cfg = loads_scenario(MINIMAL)
    assert cfg.name == "mini"
    assert cfg.receiver.split_ratio == 0.10
    assert cfg.sync.pattern == "0000010110"
    assert cfg.session.reveal_fraction == 0.5
    assert cfg.session.block_size == 100_000
    assert not cfg.pat.enabled


def test_receiver_defaults_applied_when_block_omitted():
    cfg = loads_scenario("name = x\nchannel.loss_db = 1.0\n")
    assert cfg.receiver.detection_efficiency == 0.55
    assert cfg.receiver.electronic_noise == 0.10


def test_validation_errors_name_the_key():
    with pytest.raises(ScenarioError, match="channel.loss_db"):
        loads_scenario("name = x\nchannel.loss_db = -1\n")
    with pytest.raises(ScenarioError, match="unknown key"):
        loads_scenario("name = x\nchannel.loss_db = 1\nchannel.bogus = 2\n")
    with pytest.raises(ScenarioError, match="duplicate"):
        loads_scenario("name = x\nname = y\nchannel.loss_db = 1\n")
    with pytest.raises(ScenarioError, match="missing required key"):
        loads_scenario("name = x\n")
    with pytest.raises(ScenarioError, match="travel_m"):
        loads_scenario("name = x\nchannel.loss_db = 1\ngeometry.speed_mps = 1\n")
    with pytest.raises(ScenarioError, match="expected 'key = value'"):
        loads_scenario("name x\nchannel.loss_db = 1\n")


def test_geometry_slew_derivation():
    cfg = loads_scenario("name = x\nchannel.loss_db = 1\n"
                         "geometry.speed_mps = 1\ngeometry.travel_m = 10\n"
                         "geometry.distance_m = 100\n")
    assert cfg.geometry.slew_urad_per_s == pytest.approx(1e4)
    assert cfg.pat.profile.slew_urad_per_s == pytest.approx(1e4)


def test_comments_and_blank_lines_ignored():
    cfg = loads_scenario("# header\n\nname = x  # trailing\nchannel.loss_db = 1\n")
    assert cfg.name == "x"


def test_run_scenario_report_and_csv_round_trip(tmp_path):
    cfg = loads_scenario(MINIMAL)
    report = runner.run_scenario(cfg)
    assert len(report.blocks) == 2
    assert report.mean_key_rate_bps > 0
    paths = runner.emit_report(report, tmp_path)
    assert sorted(p.name for p in paths) == [
        "mini_blocks.csv", "mini_pat.csv", "mini_summary.txt"]
    parsed = runner.read_blocks_csv(tmp_path / "mini_blocks.csv")
    for orig, back in zip(report.blocks, parsed):
        assert back.block_index == orig.block_index
        assert back.time_s == orig.time_s
        assert back.t_est == orig.t_est
        assert back.xi_est == orig.xi_est
        assert back.key_rate_bps == orig.key_rate_bps
        assert back.clamped == orig.clamped


def test_run_scenario_deterministic_outputs(tmp_path):
    cfg = loads_scenario(MINIMAL)
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    runner.emit_report(runner.run_scenario(cfg), out_a)
    runner.emit_report(runner.run_scenario(cfg), out_b)
    for name in os.listdir(out_a):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()


def test_seed_override_changes_outputs():
    cfg = loads_scenario(MINIMAL)
    r1 = runner.run_scenario(cfg)
    r2 = runner.run_scenario(cfg, seed_override=99)
    assert r2.seed == 99
    assert r1.blocks[0].key_rate_bps != r2.blocks[0].key_rate_bps


def test_exact_counts_mode():
    cfg = loads_scenario("""
name = tiny
seed = 2
duration_s = 0.02
channel.loss_db = 0.3
channel.excess_noise = 0.005
receiver.detection_efficiency = 0.85
receiver.electronic_noise = 0.03
session.v1 = 5.0
session.block_seconds = 0.01
pat.enabled = false
""")
    rep = runner.run_scenario(cfg, exact_counts=True)
    assert rep.exact_counts
    # every real pulse processed: 0.01 s at 10 MHz = 1e5 pulses per block
    assert len(rep.blocks) == 2
    assert all(b.key_bits > 0 for b in rep.blocks)


def test_summary_mentions_transmittance_discrepancy(tmp_path):
    report = runner.run_scenario(load_bundled("km_1p2"))
    runner.emit_report(report, tmp_path)
    text = (tmp_path / "km_1p2_summary.txt").read_text()
    assert "paper_transmittance_discrepancy" in text
    assert "paper_measured_key_rate_kbps = 4.27" in text
    assert "not reproductions" in text


def test_pat_csv_columns(tmp_path):
    cfg = loads_scenario(MINIMAL.replace("pat.enabled = false", "pat.enabled = true"))
    report = runner.run_scenario(cfg)
    runner.emit_report(report, tmp_path)
    lines = (tmp_path / "mini_pat.csv").read_text().splitlines()
    assert lines[0] == "time_s,az_urad,el_urad,phase"
    assert len(lines) == 1 + int(2 * 500)


def test_cli_validate_and_exit_codes(tmp_path):
    good = tmp_path / "good.scenario"
    good.write_text(MINIMAL)
    bad = tmp_path / "bad.scenario"
    bad.write_text("name = b\nchannel.loss_db = -4\n")
    assert cli.main(["validate", str(good)]) == 0
    assert cli.main(["validate", str(bad)]) == 2
    assert cli.main(["run", str(bad)]) == 2


def test_cli_run_writes_reports(tmp_path, capsys):
    good = tmp_path / "good.scenario"
    good.write_text(MINIMAL)
    out = tmp_path / "results"
    assert cli.main(["run", str(good), "--out", str(out)]) == 0
    assert (out / "mini_summary.txt").exists()
    captured = capsys.readouterr()
    assert "mini" in captured.out


def test_cli_out_dir_env_override(tmp_path, monkeypatch):
    good = tmp_path / "good.scenario"
    good.write_text(MINIMAL)
    env_out = tmp_path / "env_out"
    monkeypatch.setenv("DRONEQKD_OUT", str(env_out))
    assert cli.main(["run", str(good)]) == 0
    assert (env_out / "mini_summary.txt").exists()


def test_cli_abort_only_exit_code(tmp_path):
    # 40 dB of loss: the sync scan never clears the threshold
    dead = tmp_path / "dead.scenario"
    dead.write_text(MINIMAL.replace("channel.loss_db = 0.5",
                                    "channel.loss_db = 40"))
    out = tmp_path / "dead_out"
    assert cli.main(["run", str(dead), "--out", str(out)]) == 3


def test_cli_zero_blocks_without_aborts_is_success(tmp_path):
    short = tmp_path / "short.scenario"
    short.write_text(MINIMAL.replace("duration_s = 2", "duration_s = 0.5"))
    out = tmp_path / "short_out"
    assert cli.main(["run", str(short), "--out", str(out)]) == 0
    assert "blocks_completed = 0" in (out / "mini_summary.txt").read_text()


def test_cli_list_names_bundled(capsys):
    assert cli.main(["list"]) == 0
    out = capsys.readouterr().out
    for name in list_bundled():
        assert name in out


def test_cli_run_bundled_by_name(tmp_path):
    assert cli.main(["run", "hover_75m", "--out", str(tmp_path), "--seed", "3"]) == 0
    assert (tmp_path / "hover_75m_summary.txt").exists()


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "droneqkd.cli", "list"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "hover_75m" in proc.stdout
