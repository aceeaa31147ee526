"""Anharmonicity estimates for trapped-ion motional modes.

Everything here is in SI units.  The centre-of-mass estimate is first-order
perturbation theory in a quartic trap.  The stretch mode of a two-ion crystal
is handled numerically: find the equilibrium half-separation, expand the
potential to fourth order in the displacement, and solve the resulting 1D
Schrodinger problem with Numerov's method.

The stretch displacement ``eta`` (ions at ``+-(z0 + eta)``) has kinetic
energy ``m eta_dot^2``.  Following that convention literally, levels are
computed for a particle of mass ``m`` in ``V_eff = V / 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eig_banded
from scipy.optimize import brentq, minimize_scalar, newton

# CODATA 2018 (hbar and e are exact in the revised SI).
HBAR = 1.054571817e-34
ELEMENTARY_CHARGE = 1.602176634e-19
EPSILON_0 = 8.8541878128e-12
ATOMIC_MASS = 1.66053906660e-27
COULOMB_K = 1.0 / (4.0 * math.pi * EPSILON_0)

YB171_MASS = 171 * ATOMIC_MASS


class TrapError(ValueError):
    pass


@dataclass(frozen=True)
class TrapSpec:
    mass: float
    omega: float
    xi: float = math.inf
    mode: str = "stretch"

    def __post_init__(self):
        if not self.mass > 0:
            raise TrapError("mass must be positive")
        if not self.omega > 0:
            raise TrapError("omega must be positive")
        if not self.xi > 0:
            raise TrapError("xi must be positive or inf")
        if self.mode not in ("COM", "stretch"):
            raise TrapError("mode must be 'COM' or 'stretch'")

    @property
    def length(self) -> float:
        """Harmonic length ``sqrt(hbar / m omega)``."""
        return math.sqrt(HBAR / (self.mass * self.omega))

    @property
    def coulomb_range(self) -> float:
        """``k e^2 / (hbar omega)``."""
        return COULOMB_K * ELEMENTARY_CHARGE**2 / (HBAR * self.omega)

    @property
    def quartic_ratio(self) -> float:
        """``(l / xi)^2``; zero for a purely harmonic trap."""
        return 0.0 if math.isinf(self.xi) else (self.length / self.xi) ** 2


def com_anharmonicity(spec: TrapSpec) -> float:
    """``3 hbar / (4 m xi^2)`` in rad/s.

    An infinite ``xi`` (no quartic term) returns 0 rather than raising.
    """
    if spec.mode != "COM":
        raise TrapError("com_anharmonicity needs mode='COM'")
    if math.isinf(spec.xi):
        return 0.0
    return 3.0 * HBAR / (4.0 * spec.mass * spec.xi**2)


def _equilibrium_terms(y: float, a: float, b: float):
    """Terms of ``dV/dz`` in units ``hbar omega / l`` at ``z0 = y l``."""
    return -a / (2.0 * y * y), 2.0 * y, 4.0 * b * y**3


def stretch_equilibrium(spec: TrapSpec) -> float:
    """Half-separation ``z0`` (m) of the two-ion crystal.

    Solves ``-L l / (2 z0^2) + 2 z0 / l + 4 z0^3 / (xi^2 l) = 0`` with a
    bracketed bisection followed by a Newton polish.
    """
    a = spec.coulomb_range / spec.length
    b = spec.quartic_ratio

    def f(y):
        return sum(_equilibrium_terms(y, a, b))

    def df(y):
        return a / y**3 + 2.0 + 12.0 * b * y * y

    hi = (a / 4.0) ** (1.0 / 3.0) * (1 + 1e-9)  # just past the harmonic root; the quartic only pulls ions in
    lo = hi
    for _ in range(200):
        lo *= 0.5
        if f(lo) < 0:
            break
    if not (f(lo) < 0 <= f(hi)):
        raise TrapError(f"no sign change of the equilibrium condition on [{lo * spec.length}, {hi * spec.length}] m")
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    y = newton(f, 0.5 * (lo + hi), fprime=df, tol=1e-15 * hi, maxiter=50)
    return float(y * spec.length)


def equilibrium_residual(spec: TrapSpec, z0: float) -> float:
    """Residual of the equilibrium condition relative to its largest term."""
    terms = _equilibrium_terms(z0 / spec.length, spec.coulomb_range / spec.length, spec.quartic_ratio)
    return abs(sum(terms)) / max(abs(t) for t in terms)


def stretch_potential(spec: TrapSpec, z: np.ndarray) -> np.ndarray:
    """``k e^2 / (2 z) + m omega^2 (z^2 + z^4 / xi^2)`` in J."""
    z = np.asarray(z, dtype=float)
    quartic = 0.0 if math.isinf(spec.xi) else z**4 / spec.xi**2
    return COULOMB_K * ELEMENTARY_CHARGE**2 / (2 * z) + spec.mass * spec.omega**2 * (z**2 + quartic)


@dataclass(frozen=True)
class StretchExpansion:
    """``V(eta) / hbar omega = c2 x^2 + c3 x^3 + c4 x^4`` with ``x = eta / l``.

    ``c3`` is stored with the sign it carries in the potential.
    """

    z0: float
    c2: float
    c3: float
    c4: float
    length: float
    coulomb_range: float

    def potential(self, x):
        """Expanded potential in units of ``hbar omega``."""
        x = np.asarray(x, dtype=float)
        return x * x * (self.c2 + x * (self.c3 + x * self.c4))

    def effective(self, x):
        return 0.5 * self.potential(x)


def stretch_expansion(spec: TrapSpec, cubic: str = "taylor") -> StretchExpansion:
    """Fourth-order expansion of the stretch potential about equilibrium.

    ``cubic='taylor'`` uses the exact third derivative,
    ``-L l^3 / (2 z0^4) + 4 z0 l / xi^2``.  ``cubic='printed'`` uses
    ``-(L l^3 / z0^4 - 4 z0 l / xi^2)``, whose Coulomb part is twice the
    Taylor value; it is kept for comparison only.
    """
    if cubic not in ("taylor", "printed"):
        raise ValueError("cubic must be 'taylor' or 'printed'")
    z0 = stretch_equilibrium(spec)
    l, big_l, b = spec.length, spec.coulomb_range, spec.quartic_ratio
    u = l / z0
    c2 = 1.0 + 0.5 * big_l * l**2 / z0**3 + 6.0 * b / u**2
    coulomb3 = big_l * l**3 / z0**4
    c3 = (-0.5 if cubic == "taylor" else -1.0) * coulomb3 + 4.0 * b / u
    c4 = 0.5 * big_l * l**4 / z0**5 + b
    return StretchExpansion(z0, c2, c3, c4, l, big_l)


# ---------------------------------------------------------------------------
# 1D bound states


@dataclass(frozen=True)
class Grid:
    lo: float
    hi: float
    points: int

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.points)

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / (self.points - 1)


def default_grid(potential, count=3, mass=1.0, hbar=1.0, points=4001, extent=8.0, guess=0.0) -> Grid:
    """Symmetric window around the potential minimum.

    The half-width is ``extent`` times the larger of the local harmonic length
    and the classical turning point at ``count`` local quanta above the minimum.
    """
    res = minimize_scalar(lambda x: float(potential(x)), bracket=(guess - 1e-3, guess, guess + 1e-3))
    x0, v0 = float(res.x), float(res.fun)
    h = 1e-3 * max(1.0, abs(x0))
    curv = (potential(x0 + h) - 2 * v0 + potential(x0 - h)) / h**2
    if not curv > 0:
        raise TrapError("potential has no local minimum near the guess")
    omega = math.sqrt(curv / mass)
    l_loc = math.sqrt(hbar / (mass * omega))
    level = count * hbar * omega
    reach = l_loc
    for sign in (1.0, -1.0):
        far = l_loc
        while potential(x0 + sign * far) - v0 < level:
            far *= 2.0
            if far > 1e6 * l_loc:
                raise TrapError("potential is not confining on this side")
        turn = brentq(lambda d: potential(x0 + sign * d) - v0 - level, 0.0, far)
        reach = max(reach, turn)
    half = extent * reach
    return Grid(x0 - half, x0 + half, points)


def _numerov_shoot(k2: np.ndarray, h: float) -> tuple[float, int]:
    """Integrate ``psi'' = -k2 psi`` from the left edge; return (psi at end, nodes)."""
    f = 1.0 + h * h * k2 / 12.0
    psi_prev, psi = 0.0, 1e-30
    nodes = 0
    n = k2.size
    for i in range(1, n - 1):
        nxt = ((12.0 - 10.0 * f[i]) * psi - f[i - 1] * psi_prev) / f[i + 1]
        if nxt == 0.0 or (nxt < 0) != (psi < 0):
            if i < n - 2:
                nodes += 1
        psi_prev, psi = psi, nxt
        if abs(psi) > 1e200:
            psi_prev *= 1e-200
            psi *= 1e-200
    return psi, nodes


def numerov_levels(
    potential,
    count: int = 3,
    mass: float = 1.0,
    hbar: float = 1.0,
    grid: Grid | None = None,
    rtol: float = 1e-12,
) -> np.ndarray:
    """Lowest ``count`` eigenvalues of ``-(hbar^2 / 2m) psi'' + V psi = E psi``.

    Each level is bracketed by node-count bisection (the Sturm count of the
    shooting solution equals the number of levels below the trial energy)
    and then refined with Brent's method on the far-edge value.
    """
    if grid is None:
        grid = default_grid(potential, count, mass, hbar)
    x = grid.x
    v = np.asarray(potential(x), dtype=float)
    h = grid.step
    scale = 2.0 * mass / hbar**2

    def shoot(e):
        return _numerov_shoot(scale * (e - v), h)

    i_min = int(np.argmin(v))
    vmin = float(v[i_min])
    if not (v[0] > vmin and v[-1] > vmin) or i_min in (0, v.size - 1):
        raise TrapError("potential does not confine on the grid")
    # local harmonic quantum sets the energy scale of the bracket search
    curv = (v[i_min + 1] - 2 * vmin + v[i_min - 1]) / h**2
    quantum = hbar * math.sqrt(curv / mass) if curv > 0 else (min(v[0], v[-1]) - vmin) / (count + 1)
    hi = vmin + quantum
    for _ in range(200):
        if shoot(hi)[1] >= count:
            break
        hi = vmin + 2.0 * (hi - vmin)
    else:
        raise TrapError("could not bracket the requested number of levels")

    levels = []
    lo, n_lo = vmin, 0
    for n in range(count):
        up, n_up = hi, shoot(hi)[1]
        # shrink [lo, up] until it holds exactly level n
        for _ in range(200):
            if n_lo == n and n_up == n + 1:
                break
            mid = 0.5 * (lo + up)
            n_mid = shoot(mid)[1]
            if n_mid <= n:
                lo, n_lo = mid, n_mid
            else:
                up, n_up = mid, n_mid
        else:
            raise TrapError(f"node-count bisection failed for level {n}")
        e = brentq(lambda en: shoot(en)[0], lo, up, xtol=1e-300, rtol=max(rtol, 4 * np.finfo(float).eps))
        levels.append(e)
        lo, n_lo = up, n + 1
    if levels[-1] >= min(v[0], v[-1]):
        raise TrapError("requested levels are not bound on this grid")
    return np.array(levels)


def finite_difference_levels(
    potential, count: int = 3, mass: float = 1.0, hbar: float = 1.0, grid: Grid | None = None
) -> np.ndarray:
    """Independent check: 5-point finite-difference Hamiltonian, banded eigensolver."""
    if grid is None:
        grid = default_grid(potential, count, mass, hbar)
    x = grid.x[1:-1]
    h = grid.step
    t = hbar**2 / (2.0 * mass * h * h)
    n = x.size
    bands = np.zeros((3, n))
    bands[0] = np.asarray(potential(x), dtype=float) + t * 30.0 / 12.0
    bands[1, :-1] = -t * 16.0 / 12.0
    bands[2, :-2] = t / 12.0
    return eig_banded(bands, lower=True, eigvals_only=True, select="i", select_range=(0, count - 1))


def anharmonic_shift_from_levels(levels) -> float:
    e0, e1, e2 = levels[:3]
    return float((e2 - e1) - (e1 - e0))


def stretch_anharmonicity(spec: TrapSpec, cubic: str = "taylor", points: int = 4001) -> float:
    """``(E2 - E1) - (E1 - E0)`` of the stretch mode, in rad/s."""
    if spec.mode != "stretch":
        raise TrapError("stretch_anharmonicity needs mode='stretch'")
    exp = stretch_expansion(spec, cubic)
    grid = default_grid(exp.effective, 3, points=points)
    levels = numerov_levels(exp.effective, 3, grid=grid)
    return anharmonic_shift_from_levels(levels) * spec.omega


def anharmonicity_sweep(omega_hz, xi_m, mass: float = YB171_MASS, cubic: str = "taylor"):
    """Stretch-mode anharmonicity on an (omega, xi) grid.

    Returns rows ``(omega_hz, xi_m, chi_rad_per_s, chi_over_2pi_hz)``; a cell
    that fails keeps ``nan`` and the sweep carries on.
    """
    rows = []
    for f in np.asarray(omega_hz, dtype=float):
        for xi in np.asarray(xi_m, dtype=float):
            try:
                chi = stretch_anharmonicity(TrapSpec(mass, 2 * math.pi * f, xi, "stretch"), cubic)
            except (TrapError, ValueError, RuntimeError):
                chi = math.nan
            rows.append((float(f), float(xi), chi, chi / (2 * math.pi)))
    return rows
