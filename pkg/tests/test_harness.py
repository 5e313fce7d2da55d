"""CSV logging, batch determinism, parameter sweeps, the self-test gate,
and the command-line entry points."""

import dataclasses

import numpy as np
import pytest

import pcrb_tracker.harness as harness
from pcrb_tracker import pcrb
from pcrb_tracker.cli import main
from pcrb_tracker.controller import BENCHMARK, PROPOSED, run_episode
from pcrb_tracker.harness import (
    CSV_COLUMNS,
    read_csv_rows,
    resolve_jobs,
    rows_from_result,
    scenario_with,
    selftest_checks,
    simulate_to_dir,
    summarize_rows,
    sweep_to_dir,
    write_csv,
)
from pcrb_tracker.scenario import Scenario, ScenarioError


@pytest.fixture(scope="module")
def small_scenario():
    sc = Scenario()
    mission = dataclasses.replace(
        sc.mission, num_slots=12, final_pos=20.0, target_start=20.0, energy_budget=600.0
    )
    return dataclasses.replace(sc, mission=mission)


@pytest.fixture(scope="module")
def sim_dir(small_scenario, tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    summary = simulate_to_dir(small_scenario, (PROPOSED, BENCHMARK), 2, 0, out, jobs=1)
    return out, summary


# ---------------------------------------------------------------------------
# CSV logs


def test_csv_header_and_round_trip(small_scenario, tmp_path):
    result = run_episode(small_scenario, PROPOSED, 0)
    rows = rows_from_result(0, result, small_scenario)
    path = tmp_path / "log.csv"
    write_csv(path, rows)
    first_line = path.read_text().splitlines()[0]
    assert first_line == ",".join(CSV_COLUMNS)
    back = read_csv_rows(path)
    assert len(back) == small_scenario.mission.num_slots
    for row, recovered in zip(rows, back):
        for col in CSV_COLUMNS:
            assert row[col] == recovered[col], col


def test_csv_reader_rejects_foreign_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ValueError, match="unexpected CSV header"):
        read_csv_rows(path)


def test_simulate_outputs_are_deterministic(small_scenario, sim_dir, tmp_path):
    out_a, _ = sim_dir
    out_b = tmp_path / "again"
    simulate_to_dir(small_scenario, (PROPOSED, BENCHMARK), 2, 0, out_b, jobs=1)
    for name in ("trial_0000.csv", "trial_0001.csv", "summary.txt"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes(), name


def test_summary_recomputable_from_csv(sim_dir):
    out, summary = sim_dir
    rows = []
    for path in sorted(out.glob("trial_*.csv")):
        rows.extend(read_csv_rows(path))
    assert summarize_rows(rows) == summary
    assert (out / "summary.txt").read_text() == summary


def test_logged_target_path_is_policy_free(sim_dir):
    out, _ = sim_dir
    rows = read_csv_rows(out / "trial_0000.csv")
    by_policy = {
        p: sorted((r for r in rows if r["policy"] == p), key=lambda r: r["slot"])
        for p in (PROPOSED, BENCHMARK)
    }
    a, b = by_policy[PROPOSED], by_policy[BENCHMARK]
    assert len(a) == len(b) == 12
    for ra, rb in zip(a, b):
        assert ra["target_pos_m"] == pytest.approx(rb["target_pos_m"], abs=1e-9)


def test_slot_energy_accumulates(sim_dir):
    out, _ = sim_dir
    for row_set in (read_csv_rows(out / "trial_0000.csv"),):
        for policy in (PROPOSED, BENCHMARK):
            rows = [r for r in row_set if r["policy"] == policy]
            cum = np.cumsum([r["slot_energy_j"] for r in rows])
            logged = np.array([r["cum_energy_j"] for r in rows])
            assert np.allclose(cum, logged, rtol=1e-12, atol=1e-9)


# ---------------------------------------------------------------------------
# Jobs and parallel equivalence


def test_resolve_jobs_flag_and_floor(monkeypatch):
    monkeypatch.delenv("PCRB_TRACKER_JOBS", raising=False)
    assert resolve_jobs(None) == 1
    assert resolve_jobs(4) == 4
    assert resolve_jobs(0) == 1
    assert resolve_jobs(-3) == 1


def test_resolve_jobs_env_override(monkeypatch):
    monkeypatch.setenv("PCRB_TRACKER_JOBS", "3")
    assert resolve_jobs(1) == 3
    monkeypatch.setenv("PCRB_TRACKER_JOBS", "zero")
    with pytest.raises(ValueError, match="PCRB_TRACKER_JOBS"):
        resolve_jobs(1)


def test_parallel_batch_matches_serial(small_scenario, tmp_path):
    out1, out2 = tmp_path / "serial", tmp_path / "parallel"
    simulate_to_dir(small_scenario, (PROPOSED, BENCHMARK), 1, 5, out1, jobs=1)
    simulate_to_dir(small_scenario, (PROPOSED, BENCHMARK), 1, 5, out2, jobs=2)
    assert (out1 / "trial_0000.csv").read_bytes() == (out2 / "trial_0000.csv").read_bytes()
    assert (out1 / "summary.txt").read_bytes() == (out2 / "summary.txt").read_bytes()


# ---------------------------------------------------------------------------
# Parameter replacement and sweeps


def test_scenario_with_replaces_and_validates(small_scenario):
    assert scenario_with(small_scenario, "energy_budget", 1600.0).mission.energy_budget == 1600.0
    assert scenario_with(small_scenario, "num_slots", 14.0).mission.num_slots == 14
    with pytest.raises(ScenarioError, match="integer"):
        scenario_with(small_scenario, "num_slots", 12.5)
    with pytest.raises(ScenarioError, match="unknown parameter"):
        scenario_with(small_scenario, "thrust", 1.0)


def test_sweep_single_value_matches_simulate(small_scenario, tmp_path):
    sim_out, swp_out = tmp_path / "sim", tmp_path / "swp"
    simulate_to_dir(small_scenario, (PROPOSED, BENCHMARK), 1, 0, sim_out, jobs=1)
    summary = sweep_to_dir(
        small_scenario, "energy_budget", [600.0], (PROPOSED, BENCHMARK), 1, 0, swp_out, jobs=1
    )
    sweep_rows = read_csv_rows(next(swp_out.glob("sweep_energy_budget_*.csv")))
    sim_rows = read_csv_rows(sim_out / "trial_0000.csv")
    assert sweep_rows == sim_rows
    assert "energy_budget=600.0" in summary
    assert (swp_out / "sweep_summary.txt").read_text() == summary


def test_sweep_requires_values(small_scenario, tmp_path):
    with pytest.raises(ValueError, match="at least one value"):
        sweep_to_dir(small_scenario, "energy_budget", [], (PROPOSED,), 1, 0, tmp_path)


# ---------------------------------------------------------------------------
# Self-test gate


def test_selftest_clean_run_passes():
    checks = selftest_checks()
    names = [c.name for c in checks]
    assert names == [
        "propulsion-constants",
        "pcrb-matrix-oracle",
        "jacobian-finite-difference",
        "minimizer-grid-vs-roots",
        "sdp-vs-roots",
        "backup-vs-dp",
    ]
    for c in checks:
        assert c.status == "PASS", (c.name, c.detail)


def test_selftest_catches_injected_fault():
    checks = selftest_checks(inject_fault="pcrb-bearing")
    by_name = {c.name: c for c in checks}
    assert by_name["pcrb-matrix-oracle"].status == "FAIL"
    assert pcrb._MUTATION_HOOK["bearing_term_scale"] == 1.0
    with pytest.raises(ValueError, match="unknown fault"):
        selftest_checks(inject_fault="gravity")


def test_selftest_skips_without_backend(monkeypatch):
    monkeypatch.setattr(harness, "default_sdp_backend", lambda: None)
    checks = {c.name: c for c in selftest_checks()}
    assert checks["sdp-vs-roots"].status == "SKIPPED"


# ---------------------------------------------------------------------------
# Command line


def test_cli_simulate_writes_outputs(small_scenario, tmp_path, capsys):
    cfg = tmp_path / "scenario.yaml"
    cfg.write_text(small_scenario.to_config_text())
    out = tmp_path / "run"
    code = main(
        ["simulate", "--config", str(cfg), "--out", str(out), "--trials", "1",
         "--policy", "proposed", "--seed", "0"]
    )
    assert code == 0
    assert (out / "trial_0000.csv").exists() and (out / "summary.txt").exists()
    printed = capsys.readouterr().out
    assert printed == (out / "summary.txt").read_text()


def test_cli_requires_out_directory():
    with pytest.raises(SystemExit) as exc:
        main(["simulate"])
    assert exc.value.code == 2


def test_cli_sweep_rejects_empty_values(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["sweep", "--out", str(tmp_path), "--param", "energy_budget", "--values", ","])
    assert exc.value.code == 2


def test_cli_reports_config_errors(tmp_path, capsys):
    cfg = tmp_path / "broken.yaml"
    cfg.write_text("num_slots: 12.5\n")
    code = main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "x")])
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_cli_selftest_reports_injected_fault(capsys):
    code = main(["selftest", "--inject-fault", "pcrb-bearing"])
    assert code == 1
    printed = capsys.readouterr().out
    assert "check pcrb-matrix-oracle: FAIL" in printed
    assert printed.strip().endswith("5/6 passed")
