"""Gate fidelity on a motional subspace and its Rabi-frequency average."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from .algebra import HilbertLayout, subspace_projector, target_gate
from .dynamics import (
    OMEGA_G,
    ControlPulse,
    SystemParams,
    propagate,
    propagate_blocks,
    truncation_converged,
)
from .parallel import ordered_map

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class RabiEnsemble:
    """Equally spaced Rabi frequencies on ``[omega_c - delta, omega_c + delta]``."""

    omega_c: float
    delta_omega: float
    grid_points: int = 9

    def __post_init__(self):
        if self.grid_points < 1:
            raise ValueError("grid_points must be >= 1")
        if self.grid_points == 1 and self.delta_omega != 0:
            raise ValueError("a single-member ensemble must have delta_omega = 0")
        if not 0 <= self.delta_omega < self.omega_c:
            raise ValueError("delta_omega must satisfy 0 <= delta_omega < omega_c")

    @classmethod
    def from_params(cls, params: SystemParams, grid_points: int = 9) -> "RabiEnsemble":
        if params.delta_omega == 0:
            grid_points = 1
        return cls(params.omega_c, params.delta_omega, grid_points)

    @property
    def members(self) -> np.ndarray:
        if self.grid_points == 1:
            return np.array([self.omega_c])
        return np.linspace(
            self.omega_c - self.delta_omega, self.omega_c + self.delta_omega, self.grid_points
        )


@dataclass
class FidelityReport:
    per_member: list[tuple[float, float]]
    average_infidelity: float
    leakage_max: float
    truncation: dict | None = None
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "members": [[float(w), float(f)] for w, f in self.per_member],
            "average_infidelity": float(self.average_infidelity),
            "leakage_max": float(self.leakage_max),
            "truncation": self.truncation,
            "metadata": self.metadata,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: dict) -> "FidelityReport":
        return cls(
            [(float(w), float(f)) for w, f in data["members"]],
            float(data["average_infidelity"]),
            float(data["leakage_max"]),
            data.get("truncation"),
            data.get("metadata", {}),
        )


def gate_fidelity(v: np.ndarray, u_target: np.ndarray, projector: np.ndarray) -> float:
    """``|tr((U_T^dag (x) P) V) / (4 tr P)|^2`` for a composite-space ``V``."""
    norm = np.trace(projector).real
    if norm <= 0:
        raise ValueError("projector has zero trace")
    weight = np.kron(projector, np.conj(u_target).T)
    return float(abs(np.sum(weight.T * v) / (4 * norm)) ** 2)


def fidelity_weight(params: SystemParams) -> np.ndarray:
    layout = params.layout
    return layout.embed(np.conj(target_gate()).T, subspace_projector(params.n_sub, layout))


def fidelity_from_blocks(prop, n_sub: int) -> tuple[float, float]:
    """Fidelity and leakage out of the gate subspace from a block propagation."""
    phases = np.exp(-1j * np.pi / 8 * prop.spin_values**2)
    sub = prop.blocks[:, :n_sub, :n_sub]
    tau = np.sum(phases * np.trace(sub, axis1=1, axis2=2))
    fid = abs(tau / (4 * n_sub)) ** 2
    kept = np.sum(np.abs(sub) ** 2) / (4 * n_sub)
    return float(fid), float(max(0.0, 1.0 - kept))


def subspace_fidelity(params: SystemParams, pulse: ControlPulse, omega_r: float) -> float:
    return fidelity_from_blocks(propagate_blocks(params, pulse, omega_r), params.n_sub)[0]


def average_infidelity(
    params: SystemParams,
    pulse: ControlPulse,
    ensemble: RabiEnsemble,
    workers: int = 1,
    check_truncation: bool = True,
) -> FidelityReport:
    """Ensemble-mean infidelity of ``pulse`` with per-member diagnostics.

    The truncation check is skipped (and reported as such) when the Fock
    cutoff leaves fewer than four guard levels above the gate subspace.
    """
    members = ensemble.members

    def score(omega_r):
        return fidelity_from_blocks(propagate_blocks(params, pulse, omega_r), params.n_sub)

    results = ordered_map(score, members, workers)
    fids = [r[0] for r in results]
    truncation = None
    if check_truncation:
        if params.n_fock >= params.n_sub + 4:
            truncation = truncation_converged(params, pulse, ensemble).to_dict()
        else:
            truncation = {"converged": None, "note": "n_fock < n_sub + 4, guard not applicable"}
    return FidelityReport(
        per_member=list(zip(map(float, members), fids)),
        average_infidelity=float(1.0 - np.mean(fids)),
        leakage_max=float(max(r[1] for r in results)),
        truncation=truncation,
    )


def rabi_angle(f_samples, omega_r: float, total_time: float = 1.0) -> float:
    """Loop-area Rabi angle ``Omega_R^2 Im int_0^T f(t) int_0^t f^*(t') dt' dt``.

    ``f_samples`` are uniform samples on ``[0, T]`` including both ends;
    ``omega_r`` is in units of the gate frequency.
    """
    f = np.asarray(f_samples, dtype=complex)
    if f.size < 2:
        raise ValueError("need at least two samples")
    dt = total_time / (f.size - 1)
    inner = cumulative_trapezoid(np.conj(f), dx=dt, initial=0.0)
    area = trapezoid(f * inner, dx=dt)
    return float((OMEGA_G * omega_r) ** 2 * area.imag)


def ms_predicted_infidelity(ratio) -> np.ndarray:
    """Harmonic-gate infidelity when the Rabi frequency is ``ratio * Omega_C``.

    The loop area scales as ``ratio^2``, so the residual interaction is
    ``exp(i eps S_y^2)`` with ``eps = pi/8 (ratio^2 - 1)`` and
    ``1 - F = sin^2(2 eps)``.
    """
    eps = np.pi / 8 * (np.asarray(ratio, dtype=float) ** 2 - 1.0)
    return np.sin(2 * eps) ** 2


@dataclass
class MSBaseline:
    pulse: ControlPulse
    params: SystemParams
    ratios: np.ndarray
    infidelity: np.ndarray
    predicted: np.ndarray
    metadata: dict = field(default_factory=lambda: {"loops": 1, "detuning": "2*pi/T"})


def harmonic_ms_baseline(
    ratios=None,
    segment_count: int = 1024,
    n_fock: int = 16,
    total_time: float = 1.0,
    quadrature_samples: int = 20001,
) -> MSBaseline:
    """Single-loop Molmer-Sorensen gate on a harmonic bus.

    The drive ``exp(2 pi i t / T)`` closes one phase-space loop; the central
    Rabi frequency is fixed by requiring a loop-area angle of ``pi/8``.  The
    infidelity is evaluated by propagation at every ``ratio = Omega_R/Omega_C``.
    """
    if ratios is None:
        ratios = np.linspace(0.9, 1.1, 41)
    ratios = np.asarray(ratios, dtype=float)
    t = np.linspace(0.0, total_time, quadrature_samples)
    unit_angle = rabi_angle(np.exp(2j * np.pi * t / total_time), 1.0, total_time)
    omega_c = float(np.sqrt(np.pi / 8 / unit_angle))
    t_mid = (np.arange(segment_count) + 0.5) * total_time / segment_count
    pulse = ControlPulse(np.exp(2j * np.pi * t_mid / total_time), total_time)
    params = SystemParams(chi=0.0, omega_c=omega_c, n_fock=n_fock, n_sub=1)
    infid = np.array([1.0 - subspace_fidelity(params, pulse, r * omega_c) for r in ratios])
    return MSBaseline(pulse, params, ratios, infid, ms_predicted_infidelity(ratios))


def infidelity_curve(params, pulse, ratios, workers: int = 1) -> np.ndarray:
    """``1 - F`` as a function of ``Omega_R / Omega_C``."""
    ratios = np.asarray(ratios, dtype=float)
    fids = ordered_map(lambda r: subspace_fidelity(params, pulse, r * params.omega_c), ratios, workers)
    return 1.0 - np.array(fids)


def dense_fidelity(params: SystemParams, pulse: ControlPulse, omega_r: float) -> float:
    """Reference path through the dense propagator (for cross-checks)."""
    layout = HilbertLayout(params.n_fock)
    return gate_fidelity(propagate(params, pulse, omega_r), target_gate(), subspace_projector(params.n_sub, layout))
