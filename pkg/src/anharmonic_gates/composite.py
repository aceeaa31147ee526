"""Analytic gates for the strong-anharmonicity limit.

Each Fock transition ``n-1 <-> n`` behaves like a qubit with Pauli triple
``(X_n, Y_n, Z_n)``.  A four-segment composite drive rotates it by
``exp(i phi Z_n)`` with the rotation angle insensitive to the Rabi frequency
to second order.  Rotations of transitions with the same parity commute, so
the full gate needs only an odd step and an even step.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .algebra import HilbertLayout, transition_identity, transition_ops
from .dynamics import OMEGA_G, StrongLimitControls

SCHEMA_VERSION = 1
TWO_PI = 2 * np.pi

_SX = np.array([[0, 1], [1, 0]], dtype=complex)
_SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
_SZ = np.array([[1, 0], [0, -1]], dtype=complex)
_PAULIS = (_SX, _SY, _SZ)


class InfeasiblePulseError(ValueError):
    """The requested rotation needs a drive amplitude ``|g| > 1``."""

    def __init__(self, message, transitions=(), min_omega_c=None):
        super().__init__(message)
        self.transitions = list(transitions)
        self.min_omega_c = min_omega_c


def composite_amplitude(n: int, omega_c: float, duration: float) -> float:
    """Segment modulus ``2 pi / (sqrt(n) Omega_C T)`` (``omega_c`` in units of Omega_G)."""
    return 1.0 / (np.sqrt(n) * omega_c * duration)


def four_segment_values(n: int, phi: float, omega_c: float, duration: float = 1.0) -> np.ndarray:
    """The four envelope values ``(g1, g2, g2^*, g1^*)`` for transition ``n``."""
    amp = composite_amplitude(n, omega_c, duration)
    if amp > 1.0 + 1e-12:
        need = 1.0 / (np.sqrt(n) * duration)
        raise InfeasiblePulseError(
            f"transition {n} needs |g| = {amp:.4g} > 1; minimum feasible omega_c is {need:.6g}",
            [n],
            need,
        )
    g1 = 1j * amp * np.exp(-0.75j * phi)
    g2 = 1j * amp * np.exp(-0.25j * phi)
    return np.array([g1, g2, np.conj(g2), np.conj(g1)])


def four_segment_pulse(n: int, phi: float, omega_c: float, total_time: float = 1.0) -> StrongLimitControls:
    """Composite drive of transition ``n`` realising ``exp(i phi Z_n)`` at ``Omega_C``."""
    if n < 1:
        raise ValueError("transition index starts at 1")
    g = np.zeros((n, 4), dtype=complex)
    g[n - 1] = four_segment_values(n, phi, omega_c, total_time)
    return StrongLimitControls(g, total_time)


def _su2_step(vec: np.ndarray, t: float) -> np.ndarray:
    """``exp(-i t vec . sigma)`` in closed form."""
    norm = np.linalg.norm(vec)
    if norm == 0:
        return np.eye(2, dtype=complex)
    gen = sum(c * s for c, s in zip(vec, _PAULIS)) / norm
    return np.cos(norm * t) * np.eye(2) - 1j * np.sin(norm * t) * gen


def su2_reduce(controls: StrongLimitControls, omega_r: float) -> np.ndarray:
    """Two-level propagator of a single driven transition.

    ``X_n, Y_n, Z_n`` are mapped to ``sigma_x, sigma_y, sigma_z`` so the
    segment Hamiltonian becomes ``Omega_R sqrt(n) (g^R sigma_x - g^I sigma_y)``.
    """
    driven = controls.driven_transitions()
    if len(driven) > 1:
        raise ValueError(f"su2_reduce needs one driven transition, got {driven}")
    u = np.eye(2, dtype=complex)
    if not driven:
        return u
    n = driven[0]
    scale = OMEGA_G * omega_r * np.sqrt(n)
    dt = controls.segment_duration
    for g in controls.g[n - 1]:
        u = _su2_step(scale * np.array([g.real, -g.imag, 0.0]), dt) @ u
    return u


def lift_su2(u2: np.ndarray, n: int, layout: HilbertLayout) -> np.ndarray:
    """Embed a two-level unitary into the composite space via ``sigma_a -> (X_n, Y_n, Z_n)``.

    The identity maps to the unit of the triple's algebra; outside of it the
    lifted operator acts as the identity.
    """
    ops = transition_ops(n, layout)
    unit = transition_identity(n, layout)
    coeffs = [np.trace(s @ u2) / 2 for s in _PAULIS]
    out = np.eye(layout.dim, dtype=complex) - unit + np.trace(u2) / 2 * unit
    for c, op in zip(coeffs, ops):
        out = out + c * op
    return out


def target_generator(n_sub: int, layout: HilbertLayout) -> np.ndarray:
    """``exp(-i pi/2 sum_{n=1}^{N} n Z_n)``, which equals the gate on the lowest N levels."""
    if n_sub > layout.n_fock - 1:
        raise ValueError(f"N = {n_sub} needs n_fock >= {n_sub + 1}")
    gen = np.zeros((layout.dim, layout.dim), dtype=complex)
    for n in range(1, n_sub + 1):
        gen += n * transition_ops(n, layout)[2]
    return expm(-0.5j * np.pi * gen)


def su2_rotation_angle(u: np.ndarray) -> float:
    """Rotation angle of a 2x2 unitary, ignoring its global phase."""
    u = u / np.sqrt(np.linalg.det(u))
    a0 = np.trace(u) / 2
    vec = np.array([np.trace(s @ u) / 2 for s in _PAULIS])
    return float(2 * np.arctan2(np.linalg.norm(vec), abs(a0)))


def su2_infidelity(u: np.ndarray, target: np.ndarray) -> float:
    return float(1.0 - abs(np.trace(target.conj().T @ u) / 2) ** 2)


@dataclass
class ErrorOrder:
    angle_slope: float
    infidelity_slope: float
    eps: np.ndarray
    angle_error: np.ndarray
    infidelity: np.ndarray


def amplitude_error_order(
    n: int, phi: float, omega_c: float, total_time: float = 1.0, points: int = 9
) -> ErrorOrder:
    """Log-log slopes of the composite rotation's error against the Rabi offset.

    The relative offset ``eps = (Omega_R - Omega_C) / Omega_C`` runs over
    ``+-[1e-3, 1e-2]``.  The angle error is the rotation angle of
    ``U_target^dag U(eps)``; the infidelity is the two-level one.
    """
    controls = four_segment_pulse(n, phi, omega_c, total_time)
    target = expm(1j * phi * _SZ)
    mags = np.logspace(-3, -2, points)
    eps = np.concatenate([-mags[::-1], mags])
    ang, inf = [], []
    for e in eps:
        u = su2_reduce(controls, omega_c * (1 + e))
        ang.append(su2_rotation_angle(target.conj().T @ u))
        inf.append(su2_infidelity(u, target))
    ang, inf = np.array(ang), np.array(inf)
    x = np.log(np.abs(eps))
    return ErrorOrder(
        float(np.polyfit(x, np.log(ang), 1)[0]),
        float(np.polyfit(x, np.log(inf), 1)[0]),
        eps,
        ang,
        inf,
    )


@dataclass
class TransitionDrive:
    n: int
    target_angle: float
    pulse_phase: float
    segments: np.ndarray


@dataclass
class GateStep:
    parity: str
    t_start: float
    duration: float
    drives: dict[int, TransitionDrive] = field(default_factory=dict)


@dataclass
class GateSchedule:
    """Sequence of parity steps; each drives its transitions with a four-segment pulse.

    ``target_angle`` is the angle theta of ``exp(-i theta Z_n)``; the drive is
    synthesized with ``pulse_phase = -theta mod 2 pi`` because the composite
    pulse produces ``exp(+i phi Z_n)``.
    """

    n_sub: int
    omega_c: float
    total_time: float
    steps: list[GateStep]

    def to_controls(self) -> StrongLimitControls:
        n_steps = max(1, len(self.steps))
        g = np.zeros((self.n_sub, 4 * n_steps), dtype=complex)
        for i, step in enumerate(self.steps):
            for n, drive in step.drives.items():
                g[n - 1, 4 * i : 4 * i + 4] = drive.segments
        return StrongLimitControls(g, self.total_time)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "n_sub": self.n_sub,
            "omega_c": self.omega_c,
            "total_time": self.total_time,
            "steps": [
                {
                    "parity": s.parity,
                    "t_start": s.t_start,
                    "duration": s.duration,
                    "transitions": [
                        {
                            "n": d.n,
                            "target_angle": d.target_angle,
                            "pulse_phase": d.pulse_phase,
                            "segments": [[float(v.real), float(v.imag)] for v in d.segments],
                        }
                        for d in s.drives.values()
                    ],
                }
                for s in self.steps
            ],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: dict) -> "GateSchedule":
        steps = []
        for s in data["steps"]:
            drives = {
                int(d["n"]): TransitionDrive(
                    int(d["n"]),
                    float(d["target_angle"]),
                    float(d["pulse_phase"]),
                    np.array([complex(re, im) for re, im in d["segments"]]),
                )
                for d in s["transitions"]
            }
            steps.append(GateStep(s["parity"], float(s["t_start"]), float(s["duration"]), drives))
        return cls(int(data["n_sub"]), float(data["omega_c"]), float(data["total_time"]), steps)


def gate_angle(n: int) -> float:
    """Per-transition target ``n pi / 2`` reduced into ``[0, 2 pi)``."""
    return float(np.mod(n * np.pi / 2, TWO_PI))


def build_gate_schedule(n_sub: int, omega_c: float, total_time: float = 1.0) -> GateSchedule:
    """Two-step (odd, then even) composite realisation of the entangling gate on N levels.

    Transitions whose target is a multiple of 2 pi are left undriven; steps
    without any driven transition are dropped and the remaining steps share
    the gate time equally.
    """
    if n_sub < 1:
        raise ValueError("n_sub must be >= 1")
    groups = []
    for parity, start in (("odd", 1), ("even", 2)):
        ns = [n for n in range(start, n_sub + 1, 2) if not np.isclose(gate_angle(n), 0.0)]
        if ns:
            groups.append((parity, ns))
    duration = total_time / max(1, len(groups))
    bad = [
        n for _, ns in groups for n in ns if composite_amplitude(n, omega_c, duration) > 1 + 1e-12
    ]
    if bad:
        need = max(1.0 / (np.sqrt(n) * duration) for n in bad)
        raise InfeasiblePulseError(
            f"transitions {bad} need |g| > 1 at omega_c = {omega_c}; minimum feasible omega_c is {need:.6g}",
            bad,
            need,
        )
    steps = []
    for i, (parity, ns) in enumerate(groups):
        drives = {}
        for n in ns:
            theta = gate_angle(n)
            phase = float(np.mod(-theta, TWO_PI))
            drives[n] = TransitionDrive(n, theta, phase, four_segment_values(n, phase, omega_c, duration))
        steps.append(GateStep(parity, i * duration, duration, drives))
    return GateSchedule(n_sub, omega_c, total_time, steps)
