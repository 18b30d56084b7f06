"""Command-line behavior: exit codes, printed summaries, exported files."""

import json
import shutil
import subprocess
import sys

import pytest

from voisim.cli import main
from voisim.scenario_io import dump_scenario

from conftest import small_scenario


def run_cli(capsys, *argv):
    rc = main(list(argv))
    captured = capsys.readouterr()
    return rc, captured.out, captured.err


def test_run_smoke_writes_table(tmp_path, capsys):
    rc, out, err = run_cli(
        capsys, "run", "--scenario", "spacecraft_broadcast",
        "--seed", "3", "--out", str(tmp_path),
    )
    assert rc == 0 and err == ""
    assert "station 1: MSE=" in out
    assert "station 2: MSE=" in out
    assert " total  Phi=" in out
    table = tmp_path / "spacecraft_broadcast_voi_seed3.csv"
    assert f"table: {table}" in out
    assert table.read_text().startswith("# voisim-table/1")


def test_run_verbose_and_plot(tmp_path, capsys):
    rc, out, _ = run_cli(
        capsys, "run", "--scenario", "spacecraft_broadcast",
        "--policy", "periodic:50", "--plot", "--verbose", "--out", str(tmp_path),
    )
    assert rc == 0
    assert "scenario=spacecraft_broadcast kind=broadcast policy=periodic:50" in out
    svg = tmp_path / "spacecraft_broadcast_periodic-50_seed0.svg"
    assert f"plot: {svg}" in out
    assert svg.stat().st_size > 1000


def test_run_periodic_transmission_count_is_exact(tmp_path, capsys):
    # ceil(1000/15) = 67 shared sends, split over the two stations
    rc, out, _ = run_cli(
        capsys, "run", "--scenario", "spacecraft_multiaccess",
        "--policy", "periodic:15", "--out", str(tmp_path),
    )
    assert rc == 0
    assert "TX=67 total" in out


def test_unknown_scenario_exits_2_listing_builtins(capsys):
    rc, out, err = run_cli(capsys, "show-scenario", "no_such_scenario")
    assert rc == 2
    assert err.startswith("error:")
    assert "spacecraft_broadcast" in err  # the built-ins are named


def test_scenario_file_path_accepted(tmp_path, capsys):
    doc = dump_scenario(small_scenario(horizon=20, name="tiny"))
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(doc))
    rc, out, _ = run_cli(
        capsys, "run", "--scenario", str(path), "--policy", "always",
        "--out", str(tmp_path),
    )
    assert rc == 0
    assert "TX=21 total" in out  # every step including the last


def test_compare_policy_against_itself_is_exactly_zero(tmp_path, capsys):
    rc, out, _ = run_cli(
        capsys, "compare", "--scenario", "spacecraft_broadcast",
        "--policies", "voi", "voi", "--seeds", "0:4", "--out", str(tmp_path),
    )
    assert rc == 0
    assert "paired differences vs voi (same seeds):" in out
    assert "voi - voi: dPhi=0 +/- 0 t=0" in out
    assert "dMSE_1=0 +/- 0" in out
    # first batch row pairs the base against itself: exact zeros there too
    table = (tmp_path / "spacecraft_broadcast_batch.csv").read_text().splitlines()
    first = table[2].split(",")
    header = table[1].split(",")
    assert first[header.index("dphi_mean")] == "0.0"


def test_compare_needs_two_policies(capsys):
    rc, out, err = run_cli(
        capsys, "compare", "--scenario", "spacecraft_broadcast",
        "--policies", "voi",
    )
    assert rc == 2
    assert "at least two" in err


def test_batch_single_seed_has_no_standard_error(tmp_path, capsys):
    rc, out, _ = run_cli(
        capsys, "batch", "--scenario", "spacecraft_broadcast",
        "--seeds", "7", "--out", str(tmp_path),
    )
    assert rc == 0
    assert "runs=1 per policy" in out
    assert "(se n/a)" in out


def test_batch_default_policy_and_table(tmp_path, capsys):
    rc, out, _ = run_cli(
        capsys, "batch", "--scenario", "spacecraft_broadcast",
        "--seed-count", "3", "--out", str(tmp_path),
    )
    assert rc == 0
    assert "policy voi: Phi=" in out
    assert f"batch table: {tmp_path / 'spacecraft_broadcast_batch.csv'}" in out


@pytest.mark.parametrize("seeds", ["0:x", "3:3", "-2,-1"])
def test_bad_seed_specs_exit_2(seeds, capsys):
    rc, _, err = run_cli(
        capsys, "batch", "--scenario", "spacecraft_broadcast", f"--seeds={seeds}",
    )
    assert rc == 2
    assert err.startswith("error:")


def test_output_dir_env_fallback(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("VOISIM_OUTPUT_DIR", str(tmp_path))
    rc, out, _ = run_cli(capsys, "run", "--scenario", "spacecraft_broadcast")
    assert rc == 0
    assert (tmp_path / "spacecraft_broadcast_voi_seed0.csv").exists()


def test_table_export_is_reproducible(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    for out_dir in (a, b):
        out_dir.mkdir()
        rc, _, _ = run_cli(
            capsys, "run", "--scenario", "spacecraft_broadcast",
            "--seed", "11", "--out", str(out_dir),
        )
        assert rc == 0
    name = "spacecraft_broadcast_voi_seed11.csv"
    assert (a / name).read_bytes() == (b / name).read_bytes()


def test_threads_do_not_change_batch_table(tmp_path, capsys):
    dirs = []
    for threads in ("1", "4"):
        d = tmp_path / f"t{threads}"
        d.mkdir()
        rc, _, _ = run_cli(
            capsys, "compare", "--scenario", "spacecraft_broadcast",
            "--policies", "voi", "periodic:15", "--seeds", "0:6",
            "--threads", threads, "--out", str(d),
        )
        assert rc == 0
        dirs.append(d)
    name = "spacecraft_broadcast_batch.csv"
    assert (dirs[0] / name).read_bytes() == (dirs[1] / name).read_bytes()


def test_validate_passes_at_reduced_size(capsys):
    rc, out, _ = run_cli(capsys, "validate", "--runs", "5")
    assert rc == 0
    assert "5/5 checks passed" in out
    assert "PASS filter-equivalence: 3 systems" in out
    assert "200 draws" in out  # sample counts scale with --runs


def test_validate_rejects_zero_runs(capsys):
    rc, _, err = run_cli(capsys, "validate", "--runs", "0")
    assert rc == 2
    assert "--runs" in err


def test_validation_checks_catch_corrupted_decisions():
    # the hooks exist for exactly this: a corrupted gain must flip decisions
    from voisim.validate import check_one_shot_broadcast, check_one_shot_multiaccess

    assert not check_one_shot_broadcast(0.05, gain_transform=lambda g: -g).passed
    assert not check_one_shot_multiaccess(0.05, gain_transform=lambda g: 0.0).passed


def test_show_scenario_summary(capsys):
    rc, out, _ = run_cli(capsys, "show-scenario", "spacecraft_broadcast")
    assert rc == 0
    assert "name: spacecraft_broadcast" in out
    assert "kind: broadcast" in out
    assert "horizon: 1000" in out
    assert "link 1: erasure rate 0.3" in out
    assert "link 2: erasure rate 0.1" in out
    assert "price: 1.1e-05 (constant)" in out


def test_show_scenario_json_round_trips(capsys):
    rc, out, _ = run_cli(capsys, "show-scenario", "spacecraft_broadcast_bursty", "--json")
    assert rc == 0
    doc = json.loads(out)
    assert doc["schema"] == "voisim-scenario/1"
    assert doc["links"][0]["rate"]["transition"] == [[0.95, 0.05], [0.05, 0.95]]


def test_installed_entry_point(tmp_path):
    exe = shutil.which("voisim")
    argv = [exe] if exe else [sys.executable, "-m", "voisim.cli"]
    proc = subprocess.run(
        argv + ["show-scenario", "spacecraft_multiaccess"],
        capture_output=True, text=True, cwd=tmp_path,
    )
    assert proc.returncode == 0
    assert "kind: multiaccess" in proc.stdout
