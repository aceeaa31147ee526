import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from anharmonic_gates.algebra import HilbertLayout, spin_sy, subspace_projector, target_gate
from anharmonic_gates.composite import target_generator
from anharmonic_gates.dynamics import ControlPulse, SystemParams
from anharmonic_gates.fidelity import (
    FidelityReport,
    RabiEnsemble,
    average_infidelity,
    dense_fidelity,
    gate_fidelity,
    harmonic_ms_baseline,
    ms_predicted_infidelity,
    rabi_angle,
    subspace_fidelity,
)

from conftest import random_pulse_values


@pytest.mark.parametrize("n_sub", [1, 2, 4])
def test_identity_fidelity_is_one_half(n_sub):
    layout = HilbertLayout(6)
    f = gate_fidelity(np.eye(layout.dim), target_gate(), subspace_projector(n_sub, layout))
    assert f == pytest.approx(0.5, abs=1e-12)


def test_target_itself_scores_one():
    layout = HilbertLayout(4)
    v = layout.embed(target_gate(), np.eye(4))
    assert gate_fidelity(v, target_gate(), subspace_projector(3, layout)) == pytest.approx(1.0, abs=1e-14)


def test_global_phase_invariance(rng):
    layout = HilbertLayout(4)
    v = layout.embed(target_gate(), np.eye(4)) @ expm(-0.3j * layout.embed(spin_sy(), np.eye(4)))
    p = subspace_projector(2, layout)
    assert gate_fidelity(np.exp(0.77j) * v, target_gate(), p) == pytest.approx(gate_fidelity(v, target_gate(), p))


@pytest.mark.parametrize("n", range(1, 7))
def test_transition_generator_realizes_gate(n):
    layout = HilbertLayout(n + 1)
    v = target_generator(n, layout)
    assert gate_fidelity(v, target_gate(), subspace_projector(n, layout)) == pytest.approx(1.0, abs=1e-10)


def test_block_and_dense_fidelity_agree(rng):
    p = SystemParams(chi=1.5, omega_c=1.0, n_fock=7, n_sub=3)
    pulse = ControlPulse(random_pulse_values(rng, 5))
    assert subspace_fidelity(p, pulse, 1.05) == pytest.approx(dense_fidelity(p, pulse, 1.05), abs=1e-13)


def test_ensemble_members():
    ens = RabiEnsemble(2.0, 0.2, 5)
    np.testing.assert_allclose(ens.members, [1.8, 1.9, 2.0, 2.1, 2.2])
    assert RabiEnsemble(2.0, 0.0, 1).members.tolist() == [2.0]
    with pytest.raises(ValueError):
        RabiEnsemble(2.0, 0.2, 1)


def test_rabi_angle_single_loop():
    t = np.linspace(0, 1, 4001)
    # one closed loop: angle Omega^2 T^2 / (2 pi) with Omega = Omega_G = 2 pi
    assert rabi_angle(np.exp(2j * np.pi * t), 1.0) == pytest.approx(2 * np.pi, rel=1e-6)
    assert rabi_angle(np.exp(2j * np.pi * t), 0.25) == pytest.approx(np.pi / 8, rel=1e-6)


def test_ms_baseline_matches_loop_area_prediction():
    base = harmonic_ms_baseline(ratios=np.linspace(0.9, 1.1, 9), segment_count=512, n_fock=14)
    assert base.params.omega_c == pytest.approx(0.25, rel=1e-6)
    np.testing.assert_allclose(base.infidelity, base.predicted, atol=2e-4)
    assert base.infidelity[4] <= 1e-6
    assert min(base.infidelity[0], base.infidelity[-1]) >= 1e-2


def test_ms_predicted_is_symmetric_in_loop_area():
    assert ms_predicted_infidelity(1.0) == 0.0
    assert ms_predicted_infidelity(1.1) == pytest.approx(np.sin(np.pi / 4 * 0.21) ** 2)


def test_average_and_report_round_trip(rng):
    p = SystemParams(chi=2.0, omega_c=1.0, delta_omega=0.1, n_fock=6, n_sub=1)
    pulse = ControlPulse(random_pulse_values(rng, 4, 0.3))
    rep = average_infidelity(p, pulse, RabiEnsemble.from_params(p, 3))
    assert len(rep.per_member) == 3
    back = FidelityReport.from_dict(json.loads(rep.to_json()))
    assert back.average_infidelity == rep.average_infidelity
    assert back.per_member == rep.per_member
    assert rep.to_dict()["schema_version"] == 1


def test_average_independent_of_worker_count(rng):
    p = SystemParams(chi=2.0, omega_c=1.0, delta_omega=0.1, n_fock=6, n_sub=1)
    pulse = ControlPulse(random_pulse_values(rng, 4, 0.5))
    ens = RabiEnsemble.from_params(p, 5)
    a = average_infidelity(p, pulse, ens, workers=1, check_truncation=False)
    b = average_infidelity(p, pulse, ens, workers=3, check_truncation=False)
    assert a.to_json() == b.to_json()


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1), st.integers(min_value=1, max_value=4))
def test_fidelity_bounded(seed, n_sub):
    rng = np.random.default_rng(seed)
    p = SystemParams(chi=float(rng.uniform(0, 3)), omega_c=1.0, n_fock=6, n_sub=n_sub)
    f = subspace_fidelity(p, ControlPulse(random_pulse_values(rng, 3, 1.0)), 1.0)
    assert -1e-12 <= f <= 1 + 1e-12
