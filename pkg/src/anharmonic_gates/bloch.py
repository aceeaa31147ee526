"""Bloch-vector trajectories of a single Fock transition.

The operator ``X_n`` is carried forward by the gate, ``A(t) = V(t) X_n V(t)^dag``,
and projected back onto the triple ``(X_n, Y_n, Z_n)`` with the trace inner
product.  While the dynamics stays inside that triple's algebra the vector
has unit length; leakage to other levels shortens it.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .algebra import transition_ops
from .dynamics import (
    ControlPulse,
    StrongLimitControls,
    SystemParams,
    hamiltonian_full,
    hamiltonian_strong_limit,
)
from .parallel import ordered_map

CSV_COLUMNS = ("t", "omega_r", "x", "y", "z", "length")


@dataclass
class Trajectory:
    omega_r: float
    t: np.ndarray
    xyz: np.ndarray  # (samples, 3)

    @property
    def length(self) -> np.ndarray:
        return np.linalg.norm(self.xyz, axis=1)

    @property
    def final(self) -> np.ndarray:
        return self.xyz[-1]


def _segment_hamiltonian(params, controls, omega_r, k):
    if isinstance(controls, ControlPulse):
        return hamiltonian_full(params, controls, omega_r, k)
    return hamiltonian_strong_limit(params, controls, omega_r, k)


def bloch_trajectory(
    params: SystemParams,
    controls: ControlPulse | StrongLimitControls,
    omega_r: float,
    n: int = 1,
    samples_per_segment: int = 50,
) -> Trajectory:
    """Projected Bloch vector of transition ``n`` at evenly spaced times.

    Works for both the full drive and the strong-limit envelopes.  The first
    sample is at ``t = 0`` and the last at ``t = T``.
    """
    if not 1 <= n <= params.n_fock - 1:
        raise ValueError(f"transition {n} needs 1 <= n <= n_fock - 1")
    if samples_per_segment < 1:
        raise ValueError("samples_per_segment must be >= 1")
    ops = transition_ops(n, params.layout)
    norms = [np.trace(op @ op).real for op in ops]
    x_op = ops[0]

    def project(v):
        a = v @ x_op @ v.conj().T
        return [np.sum(a * op.T).real / nrm for op, nrm in zip(ops, norms)]

    dt = controls.segment_duration
    taus = dt * np.arange(1, samples_per_segment + 1) / samples_per_segment
    v = np.eye(params.layout.dim, dtype=complex)
    times, points = [0.0], [project(v)]
    for k in range(controls.segment_count):
        w, vecs = np.linalg.eigh(_segment_hamiltonian(params, controls, omega_r, k))
        vh = vecs.conj().T
        for tau in taus:
            u = (vecs * np.exp(-1j * w * tau)) @ vh
            times.append(k * dt + tau)
            points.append(project(u @ v))
        v = u @ v
    return Trajectory(float(omega_r), np.array(times), np.array(points))


@dataclass
class TrajectoryFamily:
    members: list[Trajectory]

    def spread(self, index: int) -> float:
        """Largest pairwise distance between members at sample ``index``."""
        pts = np.array([m.xyz[index] for m in self.members])
        if len(pts) < 2:
            return 0.0
        diff = pts[:, None, :] - pts[None, :, :]
        return float(np.max(np.linalg.norm(diff, axis=-1)))

    @property
    def endpoint_spread(self) -> float:
        return self.spread(-1)

    @property
    def mid_spread(self) -> float:
        return self.spread(len(self.members[0].t) // 2)

    @property
    def max_spread(self) -> float:
        return max(self.spread(i) for i in range(len(self.members[0].t)))


def trajectory_family(params, controls, omega_rs, n: int = 1, samples_per_segment: int = 50, workers: int = 1):
    """One trajectory per Rabi frequency in ``omega_rs``."""
    members = ordered_map(
        lambda w: bloch_trajectory(params, controls, w, n, samples_per_segment), list(omega_rs), workers
    )
    return TrajectoryFamily(members)


def write_trajectories_csv(path, family: TrajectoryFamily) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(CSV_COLUMNS)
        for traj in family.members:
            for t, (x, y, z), r in zip(traj.t, traj.xyz, traj.length):
                out.writerow([repr(float(t)), repr(traj.omega_r), repr(float(x)), repr(float(y)), repr(float(z)), repr(float(r))])
