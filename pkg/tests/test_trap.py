import math

import numpy as np
import pytest

from anharmonic_gates.trap import (
    ATOMIC_MASS,
    HBAR,
    YB171_MASS,
    Grid,
    TrapError,
    TrapSpec,
    anharmonic_shift_from_levels,
    anharmonicity_sweep,
    com_anharmonicity,
    default_grid,
    equilibrium_residual,
    finite_difference_levels,
    numerov_levels,
    stretch_anharmonicity,
    stretch_equilibrium,
    stretch_expansion,
    stretch_potential,
)

from conftest import random_quartic

MHZ = 2 * math.pi * 1e6


def test_com_value():
    chi = com_anharmonicity(TrapSpec(YB171_MASS, MHZ, 2e-6, "COM"))
    # 3 hbar / (4 m xi^2), recomputed by hand from the constants
    assert chi == pytest.approx(69.6357, rel=1e-4)
    assert chi / (2 * math.pi) == pytest.approx(10, abs=2)


def test_com_scaling_and_harmonic_limit():
    a = com_anharmonicity(TrapSpec(YB171_MASS, MHZ, 2e-6, "COM"))
    b = com_anharmonicity(TrapSpec(2 * YB171_MASS, MHZ, 2e-6, "COM"))
    assert a / b == pytest.approx(2.0, rel=1e-14)
    assert com_anharmonicity(TrapSpec(YB171_MASS, MHZ, math.inf, "COM")) == 0.0
    with pytest.raises(TrapError):
        com_anharmonicity(TrapSpec(YB171_MASS, MHZ, 2e-6, "stretch"))


def test_spec_validation():
    with pytest.raises(TrapError):
        TrapSpec(-1.0, MHZ)
    with pytest.raises(TrapError):
        TrapSpec(YB171_MASS, MHZ, 0.0)


def test_equilibrium_harmonic_closed_form():
    spec = TrapSpec(YB171_MASS, 5 * MHZ)
    z0 = stretch_equilibrium(spec)
    assert z0 == pytest.approx((spec.coulomb_range * spec.length**2 / 4) ** (1 / 3), rel=1e-12)
    assert equilibrium_residual(spec, z0) <= 1e-12


@pytest.mark.parametrize("xi", [1e-7, 1e-6, 1e-5])
def test_equilibrium_with_quartic(xi):
    harmonic = stretch_equilibrium(TrapSpec(YB171_MASS, MHZ))
    spec = TrapSpec(YB171_MASS, MHZ, xi)
    z0 = stretch_equilibrium(spec)
    assert z0 < harmonic
    assert equilibrium_residual(spec, z0) <= 1e-12
    d = 1e-3 * z0
    v0 = stretch_potential(spec, z0)
    assert stretch_potential(spec, z0 + d) > v0 and stretch_potential(spec, z0 - d) > v0


def test_expansion_harmonic_identities():
    exp = stretch_expansion(TrapSpec(YB171_MASS, 2 * MHZ))
    assert exp.c2 == pytest.approx(3.0, rel=1e-12)
    assert exp.c4 == pytest.approx(2 * (exp.length / exp.z0) ** 2, rel=1e-10)
    printed = stretch_expansion(TrapSpec(YB171_MASS, 2 * MHZ), cubic="printed")
    assert printed.c3 == pytest.approx(2 * exp.c3, rel=1e-12)


@pytest.mark.parametrize("xi", [math.inf, 3e-6])
def test_expansion_matches_taylor_coefficients(xi):
    spec = TrapSpec(YB171_MASS, MHZ, xi)
    exp = stretch_expansion(spec)
    hw = HBAR * spec.omega
    # finite-difference derivatives of the exact potential (ions at +-z)
    h = 2e-3 * exp.z0
    z = exp.z0 + h * np.arange(-3, 4)
    v = stretch_potential(spec, z) / hw
    coeffs = np.polyfit((z - exp.z0) / exp.length, v - v[3], 6)[::-1]
    assert coeffs[2] == pytest.approx(exp.c2, rel=1e-6)
    assert coeffs[3] == pytest.approx(exp.c3, rel=1e-4)
    assert coeffs[4] == pytest.approx(exp.c4, rel=1e-2)


def test_numerov_harmonic_spectrum():
    levels = numerov_levels(lambda x: 0.5 * x * x, 3)
    np.testing.assert_allclose(levels, [0.5, 1.5, 2.5], rtol=1e-9)


def test_numerov_si_units():
    m, w = YB171_MASS, MHZ
    levels = numerov_levels(lambda x: 0.5 * m * w * w * x * x, 3, mass=m, hbar=HBAR)
    np.testing.assert_allclose(levels / (HBAR * w), [0.5, 1.5, 2.5], rtol=1e-9)


def test_quartic_raises_levels():
    base = numerov_levels(lambda x: 0.5 * x * x)
    bumped = numerov_levels(lambda x: 0.5 * x * x + 1e-3 * x**4)
    assert np.all(bumped > base)
    assert anharmonic_shift_from_levels(bumped) > 0


def test_numerov_matches_finite_difference(rng):
    for _ in range(8):
        pot = random_quartic(rng)
        grid = default_grid(pot)
        a = numerov_levels(pot, grid=grid)
        b = finite_difference_levels(pot, grid=grid)
        np.testing.assert_allclose(a, b, rtol=1e-6)


def test_numerov_grid_convergence():
    pot = lambda x: x * x * (0.5 - 0.05 * x + 0.02 * x * x)
    g = default_grid(pot)
    fine = Grid(g.lo, g.hi, 2 * g.points - 1)
    np.testing.assert_allclose(numerov_levels(pot, grid=g), numerov_levels(pot, grid=fine), rtol=1e-8)


def test_numerov_rejects_non_confining_grid():
    with pytest.raises(TrapError):
        numerov_levels(lambda x: 0.5 * x * x, 3, grid=Grid(-1.0, 1.0, 401))


def test_harmonic_expansion_has_no_shift():
    exp = stretch_expansion(TrapSpec(YB171_MASS, MHZ))
    levels = numerov_levels(lambda x: 0.5 * exp.c2 * x * x)
    assert abs(anharmonic_shift_from_levels(levels)) <= 1e-9


def test_stretch_grows_with_trap_frequency():
    chis = [stretch_anharmonicity(TrapSpec(YB171_MASS, f * MHZ)) for f in (0.3, 1.0, 3.0)]
    assert chis[0] < chis[1] < chis[2]
    assert all(c > 0 for c in chis)


def test_external_part_scales_inverse_square():
    # perturbative regime xi >> z0: the quartic contribution goes as 1 / xi^2
    omega = MHZ
    bare = stretch_anharmonicity(TrapSpec(YB171_MASS, omega))
    ext = [stretch_anharmonicity(TrapSpec(YB171_MASS, omega, xi)) - bare for xi in (2e-5, 4e-5)]
    assert ext[0] / ext[1] == pytest.approx(4.0, rel=0.05)


def test_sweep_rows():
    rows = anharmonicity_sweep([1e6], [1e-5, math.inf])
    assert len(rows) == 2
    for f, xi, chi, hz in rows:
        assert chi > 0 and hz == pytest.approx(chi / (2 * math.pi))
