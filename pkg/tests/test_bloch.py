import csv

import numpy as np
import pytest

from anharmonic_gates.bloch import bloch_trajectory, trajectory_family, write_trajectories_csv
from anharmonic_gates.composite import four_segment_pulse
from anharmonic_gates.dynamics import ControlPulse, SystemParams
from anharmonic_gates.fidelity import harmonic_ms_baseline

from conftest import random_pulse_values


def test_zero_pulse_is_stationary():
    p = SystemParams(chi=0.0, omega_c=1.0, n_fock=4)
    tr = bloch_trajectory(p, ControlPulse(np.zeros(3)), 1.0, samples_per_segment=5)
    np.testing.assert_allclose(tr.xyz, np.tile([1.0, 0.0, 0.0], (16, 1)), atol=1e-15)


def test_composite_endpoints_and_unit_length():
    p = SystemParams(chi=0.0, omega_c=1.0, n_fock=3)
    tr = bloch_trajectory(p, four_segment_pulse(1, np.pi / 2, 1.0), 1.0)
    np.testing.assert_array_equal(tr.xyz[0], [1.0, 0.0, 0.0])
    np.testing.assert_allclose(tr.final, [-1.0, 0.0, 0.0], atol=1e-8)
    assert np.max(np.abs(tr.length - 1)) <= 1e-9
    assert tr.t[0] == 0.0 and tr.t[-1] == pytest.approx(1.0)


def test_full_model_contracts(rng):
    p = SystemParams(chi=2.0, omega_c=1.0, n_fock=8)
    tr = bloch_trajectory(p, ControlPulse(random_pulse_values(rng, 6)), 1.0, samples_per_segment=10)
    assert np.max(tr.length) <= 1 + 1e-9
    assert np.min(tr.length) < 1 - 1e-3


def test_single_member_family_has_no_spread():
    p = SystemParams(chi=0.0, omega_c=1.0, n_fock=3)
    fam = trajectory_family(p, four_segment_pulse(1, np.pi / 2, 1.0), [1.0], samples_per_segment=4)
    assert fam.endpoint_spread == 0.0 and fam.max_spread == 0.0


def test_composite_family_refocuses_relative_to_peak():
    p = SystemParams(chi=0.0, omega_c=1.0, n_fock=3)
    fam = trajectory_family(p, four_segment_pulse(1, np.pi / 2, 1.0), np.linspace(0.9, 1.1, 9), samples_per_segment=20)
    # the angle error is second order, so the family tightens again at T
    assert fam.endpoint_spread < 0.5 * fam.max_spread
    small = trajectory_family(p, four_segment_pulse(1, np.pi / 2, 1.0), np.linspace(0.99, 1.01, 5), samples_per_segment=20)
    assert small.endpoint_spread <= 1e-3


def test_harmonic_family_returns_to_start():
    # A closed phase-space loop leaves only a function of S_y^2, which commutes
    # with X_1, so the projected vector comes back to (1, 0, 0) whatever the
    # amplitude error.  The error is invisible in this projection.
    base = harmonic_ms_baseline(ratios=[1.0], segment_count=64, n_fock=10)
    p = base.params
    fam = trajectory_family(p, base.pulse, p.omega_c * np.linspace(0.9, 1.1, 5), samples_per_segment=2)
    for member in fam.members:
        np.testing.assert_allclose(member.final, [1.0, 0.0, 0.0], atol=1e-3)
    assert fam.mid_spread > 100 * fam.endpoint_spread


def test_csv_layout(tmp_path):
    p = SystemParams(chi=0.0, omega_c=1.0, n_fock=3)
    fam = trajectory_family(p, four_segment_pulse(1, np.pi / 2, 1.0), [0.95, 1.05], samples_per_segment=2)
    path = tmp_path / "t.csv"
    write_trajectories_csv(path, fam)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["t", "omega_r", "x", "y", "z", "length"]
    assert len(rows) == 1 + 2 * 9
    assert float(rows[1][1]) == 0.95


def test_rejects_bad_transition():
    p = SystemParams(chi=0.0, omega_c=1.0, n_fock=3)
    with pytest.raises(ValueError):
        bloch_trajectory(p, ControlPulse([0.1]), 1.0, n=3)
