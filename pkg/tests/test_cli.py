import csv
import json

import numpy as np
import pytest

from anharmonic_gates import cli, optimizer
from anharmonic_gates.cli import main, read_pulse_csv, write_pulse_csv
from anharmonic_gates.dynamics import ControlPulse
from anharmonic_gates.fidelity import harmonic_ms_baseline
from anharmonic_gates.trap import YB171_MASS, TrapSpec, stretch_anharmonicity

SMALL_OPT = {
    "segment_count": 16,
    "strong_segment_count": 16,
    "max_iterations": 40,
    "strong_max_iterations": 40,
    "grid_points": 3,
    "restarts": 1,
}


def write_config(path, **sections):
    path.write_text(json.dumps({"schema_version": 1, **sections}))
    return str(path)


def test_optimize_writes_artifacts(tmp_path):
    cfg = write_config(
        tmp_path / "c.json",
        system={"chi_over_omega_g": 3.0, "delta_fraction": 0.05, "n_fock": 8},
        optimizer={**SMALL_OPT, "target_infidelity": 1e-3},
    )
    out = tmp_path / "run"
    assert main(["optimize", "--config", cfg, "--out", str(out)]) == 0
    for name in ("pulse.csv", "optimization_report.json", "fidelity_report.json", "config.resolved.json", "version.json"):
        assert (out / name).exists(), name
    report = json.loads((out / "fidelity_report.json").read_text())
    assert report["average_infidelity"] < 1e-3
    pulse = read_pulse_csv(out / "pulse.csv")
    assert np.max(np.abs(pulse.amplitudes)) <= 1.0
    resolved = json.loads((out / "config.resolved.json").read_text())
    assert resolved["optimizer"]["segment_count"] == 16


def test_optimize_harmonic_exits_two(tmp_path):
    cfg = write_config(
        tmp_path / "c.json",
        system={"chi_over_omega_g": 0.0, "n_fock": 8},
        optimizer={**SMALL_OPT, "max_iterations": 5, "strong_max_iterations": 5},
    )
    out = tmp_path / "run"
    assert main(["optimize", "--config", cfg, "--out", str(out)]) == 2
    assert (out / "pulse.csv").exists()


def test_bad_configs_exit_one(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    out = tmp_path / "run"
    assert main(["optimize", "--config", str(bad), "--out", str(out)]) == 1
    assert not out.exists()
    typo = write_config(tmp_path / "t.json", system={"chi": 1.0})
    assert main(["optimize", "--config", typo, "--out", str(out)]) == 1
    assert "unknown keys" in capsys.readouterr().err
    wrong = write_config(tmp_path / "w.json", optimizer={"segment_count": 1})
    assert main(["optimize", "--config", wrong, "--out", str(out)]) == 1
    assert not out.exists()


def test_evaluate_rejects_loud_pulse(tmp_path, capsys):
    path = tmp_path / "p.csv"
    path.write_text("segment_index,t_start,re_f,im_f\n0,0.0,0.5,0.0\n1,0.5,1.5,0.0\n")
    assert main(["evaluate", "--pulse", str(path), "--out", str(tmp_path / "e")]) == 1
    assert "segment 1" in capsys.readouterr().err


def test_evaluate_ms_baseline_curve(tmp_path):
    base = harmonic_ms_baseline(ratios=[1.0], segment_count=256, n_fock=14)
    pulse_path = tmp_path / "ms.csv"
    write_pulse_csv(pulse_path, base.pulse)
    cfg = write_config(
        tmp_path / "c.json",
        system={"chi_over_omega_g": 0.0, "omega_c_over_omega_g": base.params.omega_c, "n_fock": 14},
        sweep={"ratios": [0.9, 0.95, 1.0, 1.05, 1.1]},
    )
    out = tmp_path / "e"
    assert main(["evaluate", "--pulse", str(pulse_path), "--config", cfg, "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "infidelity_curve.csv")))
    vals = [float(r["infidelity"]) for r in rows]
    assert int(np.argmin(vals)) == 2 and vals[2] < 1e-6
    assert vals[0] > 1e-2 and vals[-1] > 1e-2


def test_pulse_csv_round_trip(tmp_path, rng):
    pulse = ControlPulse(0.3 * np.exp(1j * rng.uniform(size=9)))
    write_pulse_csv(tmp_path / "p.csv", pulse)
    assert read_pulse_csv(tmp_path / "p.csv") == pulse


def test_composite_command(tmp_path):
    cfg = write_config(tmp_path / "c.json", system={"n_sub": 1, "chi_over_omega_g": 100.0, "n_fock": 8})
    out = tmp_path / "comp"
    assert main(["composite", "--config", cfg, "--out", str(out)]) == 0
    rep = json.loads((out / "composite_report.json").read_text())
    assert rep["strong_limit_fidelity"] >= 1 - 1e-8
    assert rep["lifted_full_model_fidelity"] >= 1 - 1e-3
    sched = json.loads((out / "schedule.json").read_text())
    assert sched["schema_version"] == 1 and len(sched["steps"]) == 1


def test_composite_infeasible_exits_one(tmp_path):
    cfg = write_config(tmp_path / "c.json", system={"n_sub": 3, "omega_c_over_omega_g": 1.0})
    assert main(["composite", "--config", cfg, "--out", str(tmp_path / "x")]) == 1


def test_trap_command(tmp_path, capsys):
    cfg = write_config(
        tmp_path / "c.json",
        trap={"omega_hz": 5e6, "sweep_omega_hz": [1e6], "sweep_xi_m": [1e-5]},
        system={"gate_time_s": 1e-3},
    )
    out = tmp_path / "trap"
    assert main(["trap", "--config", cfg, "--out", str(out)]) == 0
    data = json.loads((out / "trap.json").read_text())
    expect = stretch_anharmonicity(TrapSpec(YB171_MASS, 2 * np.pi * 5e6)) / (2 * np.pi)
    assert data["chi_over_2pi_hz"] == pytest.approx(expect, rel=1e-12)
    assert data["chi_over_omega_g"] == pytest.approx(expect * 1e-3, rel=1e-12)
    rows = list(csv.reader(open(out / "anharmonicity_sweep.csv")))
    assert rows[0] == ["omega_hz", "xi_m", "chi_rad_per_s", "chi_over_2pi_hz"]


def test_required_chi_command(tmp_path, monkeypatch):
    def fake(params, config, target):
        ok = params.chi >= 30 * params.delta_omega / params.omega_c
        return ok, 0.0

    monkeypatch.setattr(optimizer, "reaches", fake)
    cfg = write_config(tmp_path / "c.json", sweep={"chi_bracket": [0.0, 8.0]})
    out = tmp_path / "req"
    assert main(["required-chi", "--config", cfg, "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "required_chi.csv")))
    chis = [float(r["chi_over_omega_g"]) for r in rows]
    assert chis == sorted(chis)


def test_trajectory_command(tmp_path):
    cfg = write_config(tmp_path / "c.json", trajectory={"samples_per_segment": 5})
    out = tmp_path / "traj"
    assert main(["trajectory", "--config", cfg, "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "trajectories.csv")))
    assert len(rows) == 9 * 21
    summary = json.loads((out / "trajectory_summary.json").read_text())
    assert summary["endpoint_spread"] < summary["max_spread"]


def test_output_root_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "root"))
    assert main(["trajectory"]) == 0
    assert (tmp_path / "root" / "trajectory" / "trajectories.csv").exists()


def test_byte_identical_reruns(tmp_path):
    cfg = write_config(
        tmp_path / "c.json",
        system={"chi_over_omega_g": 3.0, "delta_fraction": 0.05, "n_fock": 8},
        optimizer={**SMALL_OPT, "max_iterations": 10, "strong_max_iterations": 10},
    )
    a, b = tmp_path / "a", tmp_path / "b"
    main(["optimize", "--config", cfg, "--out", str(a), "--seed", "7"])
    main(["optimize", "--config", cfg, "--out", str(b), "--seed", "7", "--workers", "3"])
    for name in ("pulse.csv", "fidelity_report.json", "optimization_report.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
