"""Driven dynamics of the qubits and the anharmonic bus mode.

Units: the gate time is ``T = 1`` and every frequency handed to this module
is a multiple of the gate frequency ``Omega_G = 2 pi / T``.  Angular values
used in the exponent are obtained by multiplying with :data:`OMEGA_G`.

All propagation happens in the frame rotating with the free spin terms and
the harmonic part of the motion.  There the anharmonic shifts
``Delta_n = (n^2 - n) chi`` are a static diagonal and the drive

    H_k = sum_n Delta_n |n><n| (x) 1 + Omega_R (f_k^* a + a^dag f_k) (x) S_y

carries all time dependence (piecewise constant, segment ``k``).

The drive couples to the qubits only through ``S_y``, so in the eigenbasis
of ``S_y`` (eigenvalues -2, 0, 0, 2) every Hamiltonian splits into four
``n_fock x n_fock`` tridiagonal blocks.  The propagators and their exact
derivatives are computed block-wise and assembled on request.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .algebra import (
    HilbertLayout,
    UNITARY_TOL,
    fock_ops,
    spin_sy,
    spin_sy_eigen,
    transition_ops,
)

OMEGA_G = 2.0 * np.pi
AMPLITUDE_TOL = 1e-12
MIN_SAMPLES_PER_TONE = 20


class AmplitudeBoundWarning(UserWarning):
    """A synthesized drive had to be rescaled to satisfy ``|f| <= 1``."""


@dataclass(frozen=True)
class SystemParams:
    """Physical parameters, frequencies in units of ``Omega_G``."""

    chi: float
    omega_c: float
    delta_omega: float = 0.0
    n_fock: int = 12
    n_sub: int = 1

    def __post_init__(self):
        if self.chi < 0:
            raise ValueError("chi must be non-negative")
        if self.omega_c <= 0:
            raise ValueError("omega_c must be positive")
        if not 0 <= self.delta_omega < self.omega_c:
            raise ValueError("delta_omega must satisfy 0 <= delta_omega < omega_c")
        HilbertLayout(self.n_fock)
        if not 1 <= self.n_sub <= self.n_fock:
            raise ValueError("n_sub must satisfy 1 <= n_sub <= n_fock")

    @property
    def layout(self) -> HilbertLayout:
        return HilbertLayout(self.n_fock)

    def replace(self, **changes) -> "SystemParams":
        fields = dict(
            chi=self.chi,
            omega_c=self.omega_c,
            delta_omega=self.delta_omega,
            n_fock=self.n_fock,
            n_sub=self.n_sub,
        )
        fields.update(changes)
        return SystemParams(**fields)


@dataclass(frozen=True, eq=False)
class ControlPulse:
    """Piecewise-constant complex drive ``f(t)`` on equal segments of ``[0, T]``."""

    amplitudes: np.ndarray
    total_time: float = 1.0

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size < 1:
            raise ValueError("a pulse needs at least one segment")
        if self.total_time <= 0:
            raise ValueError("total_time must be positive")
        worst = int(np.argmax(np.abs(amps)))
        if abs(amps[worst]) > 1.0 + AMPLITUDE_TOL:
            raise ValueError(
                f"segment {worst} violates |f| <= 1 (|f| = {abs(amps[worst]):.6g})"
            )
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    @property
    def segment_count(self) -> int:
        return self.amplitudes.size

    @property
    def segment_duration(self) -> float:
        return self.total_time / self.segment_count

    @property
    def t_start(self) -> np.ndarray:
        return np.arange(self.segment_count) * self.segment_duration

    def resampled(self, segment_count: int) -> "ControlPulse":
        """Same drive on a grid refined by an integer factor."""
        factor, rest = divmod(segment_count, self.segment_count)
        if rest or factor < 1:
            raise ValueError("new segment count must be a multiple of the current one")
        return ControlPulse(np.repeat(self.amplitudes, factor), self.total_time)

    def __eq__(self, other):
        if not isinstance(other, ControlPulse):
            return NotImplemented
        return self.total_time == other.total_time and np.array_equal(
            self.amplitudes, other.amplitudes
        )


@dataclass(frozen=True, eq=False)
class StrongLimitControls:
    """Per-transition envelopes ``g_n(t)``, row ``n - 1`` holds transition ``n``."""

    g: np.ndarray
    total_time: float = 1.0

    def __post_init__(self):
        g = np.array(self.g, dtype=complex)
        if g.ndim == 1:
            g = g[None, :]
        if g.ndim != 2 or g.shape[0] < 1 or g.shape[1] < 1:
            raise ValueError("g must have shape (n_transitions, segment_count)")
        if np.max(np.abs(g)) > 1.0 + AMPLITUDE_TOL:
            n, k = np.unravel_index(np.argmax(np.abs(g)), g.shape)
            raise ValueError(f"envelope g_{n + 1} violates |g| <= 1 at segment {k}")
        g.flags.writeable = False
        object.__setattr__(self, "g", g)

    @property
    def n_transitions(self) -> int:
        return self.g.shape[0]

    @property
    def segment_count(self) -> int:
        return self.g.shape[1]

    @property
    def segment_duration(self) -> float:
        return self.total_time / self.segment_count

    def driven_transitions(self) -> list[int]:
        return [n + 1 for n in range(self.n_transitions) if np.any(self.g[n] != 0)]

    def resampled(self, segment_count: int) -> "StrongLimitControls":
        factor, rest = divmod(segment_count, self.segment_count)
        if rest or factor < 1:
            raise ValueError("new segment count must be a multiple of the current one")
        return StrongLimitControls(np.repeat(self.g, factor, axis=1), self.total_time)

    def padded(self, n_transitions: int) -> "StrongLimitControls":
        if n_transitions < self.n_transitions:
            raise ValueError("cannot drop driven transitions")
        g = np.zeros((n_transitions, self.segment_count), dtype=complex)
        g[: self.n_transitions] = self.g
        return StrongLimitControls(g, self.total_time)


def anharmonic_shift(n, chi):
    """Level shift ``(n^2 - n) chi`` of Fock level ``n``."""
    n = np.asarray(n)
    if np.any(n < 0):
        raise ValueError("Fock index must be non-negative")
    return (n * n - n) * chi


def _shift_diagonal(n_fock: int, chi: float) -> np.ndarray:
    return OMEGA_G * anharmonic_shift(np.arange(n_fock, dtype=float), chi)


def hamiltonian_full(params: SystemParams, pulse: ControlPulse, omega_r: float, k: int) -> np.ndarray:
    """Dense rotating-frame Hamiltonian of segment ``k`` (angular units, T = 1)."""
    if not 0 <= k < pulse.segment_count:
        raise IndexError(f"segment {k} outside pulse of {pulse.segment_count} segments")
    layout = params.layout
    a, ad = fock_ops(params.n_fock)
    f = pulse.amplitudes[k]
    drive = OMEGA_G * omega_r * (np.conj(f) * a + f * ad)
    return layout.embed(None, np.diag(_shift_diagonal(params.n_fock, params.chi))) + layout.embed(
        spin_sy(), drive
    )


def hamiltonian_strong_limit(
    params: SystemParams, controls: StrongLimitControls, omega_r: float, k: int
) -> np.ndarray:
    """Dense strong-anharmonicity Hamiltonian ``Omega_R sum_n sqrt(n) (g^R X_n - g^I Y_n)``."""
    if controls.n_transitions > params.n_fock - 1:
        raise ValueError(
            f"{controls.n_transitions} transitions do not fit into n_fock = {params.n_fock}"
        )
    if not 0 <= k < controls.segment_count:
        raise IndexError(f"segment {k} outside controls of {controls.segment_count} segments")
    layout = params.layout
    h = np.zeros((layout.dim, layout.dim), dtype=complex)
    for n in range(1, controls.n_transitions + 1):
        g = controls.g[n - 1, k]
        if g == 0:
            continue
        x, y, _ = transition_ops(n, layout)
        h += np.sqrt(n) * (g.real * x - g.imag * y)
    return OMEGA_G * omega_r * h


def polychromatic_lift(
    controls: StrongLimitControls, chi: float, fine_segments: int
) -> tuple[ControlPulse, float]:
    """Full-model drive that addresses each transition with its own tone.

    ``f(t) = 1/2 sum_n g_n(t) exp(-i (Delta_n - Delta_{n-1}) t)`` sampled at the
    midpoints of ``fine_segments`` equal segments.  The factor 1/2 makes the
    resonant part of the full drive term equal ``Omega_R sqrt(n) (g^R X_n -
    g^I Y_n)``.  Returns the pulse and the factor by which it was divided to
    respect ``|f| <= 1`` (1.0 when untouched; a larger value triggers an
    :class:`AmplitudeBoundWarning`).
    """
    factor, rest = divmod(fine_segments, controls.segment_count)
    if rest or factor < 1:
        raise ValueError("fine_segments must be a multiple of the envelope segment count")
    n_tr = controls.n_transitions
    detunings = OMEGA_G * np.array(
        [anharmonic_shift(n, chi) - anharmonic_shift(n - 1, chi) for n in range(1, n_tr + 1)]
    )
    driven = [n - 1 for n in controls.driven_transitions()]
    fastest = max((abs(detunings[i]) for i in driven), default=0.0)
    dt = controls.total_time / fine_segments
    if fastest > 0 and 2 * np.pi / fastest / dt < MIN_SAMPLES_PER_TONE:
        need = int(np.ceil(MIN_SAMPLES_PER_TONE * fastest * controls.total_time / (2 * np.pi)))
        raise ValueError(
            f"{fine_segments} segments under-resolve the fastest tone; need at least {need}"
        )
    t_mid = (np.arange(fine_segments) + 0.5) * dt
    g_fine = np.repeat(controls.g, factor, axis=1)
    f = 0.5 * np.sum(g_fine * np.exp(-1j * detunings[:, None] * t_mid[None, :]), axis=0)
    peak = float(np.max(np.abs(f)))
    scale = max(1.0, peak)
    if scale > 1.0:
        warnings.warn(
            f"lifted drive peaks at |f| = {peak:.4g}; rescaled to respect |f| <= 1",
            AmplitudeBoundWarning,
            stacklevel=2,
        )
        f = f / scale
    return ControlPulse(f, controls.total_time), scale


# ---------------------------------------------------------------------------
# block-diagonal propagation kernel


def _phi_kernel(w: np.ndarray, dt: float) -> np.ndarray:
    """Divided differences of ``exp(-i w dt)`` over eigenvalue pairs.

    The sinc form is exact and reduces to ``-i dt exp(-i w dt)`` for equal
    eigenvalues without a special case.
    """
    wi = w[..., :, None]
    wj = w[..., None, :]
    return -1j * dt * np.exp(-0.5j * (wi + wj) * dt) * np.sinc((wi - wj) * dt / (2 * np.pi))


def _tridiag_blocks(d: np.ndarray, c: np.ndarray, lam: float) -> np.ndarray:
    """Stack of ``diag(d) + lam (C_k + C_k^dag)`` with ``C_k`` on the superdiagonal."""
    m, nb = c.shape
    nf = d.size
    h = np.zeros((m, nf, nf), dtype=complex)
    idx = np.arange(nb)
    h[:, idx, idx + 1] = lam * c
    h[:, idx + 1, idx] = lam * np.conj(c)
    h[:, np.arange(nf), np.arange(nf)] = d
    return h


@dataclass
class _BlockRun:
    lam: float
    unitary: np.ndarray
    prefix: np.ndarray | None = None
    d_re: np.ndarray | None = None
    d_im: np.ndarray | None = None


def _run_block(d, c, lam, dt, weight=None, keep_prefix=False) -> _BlockRun:
    """Propagate one spin block; with ``weight`` also differentiate ``tr(weight V)``.

    The derivatives are returned with respect to the real and imaginary parts
    of every coupling ``c[k, n]``.
    """
    h = _tridiag_blocks(d, c, lam)
    w, vecs = np.linalg.eigh(h)
    seg = (vecs * np.exp(-1j * w * dt)[:, None, :]) @ np.conj(np.swapaxes(vecs, 1, 2))
    m, nf = c.shape[0], d.size
    prefix = np.empty((m + 1, nf, nf), dtype=complex)
    prefix[0] = np.eye(nf)
    for k in range(m):
        prefix[k + 1] = seg[k] @ prefix[k]
    run = _BlockRun(lam, prefix[m].copy(), prefix if keep_prefix else None)
    if weight is None:
        return run
    suffix = np.empty((m, nf, nf), dtype=complex)
    acc = np.asarray(weight, dtype=complex)
    for k in range(m - 1, -1, -1):
        suffix[k] = acc
        acc = acc @ seg[k]
    mk = prefix[:m] @ suffix
    vh = np.conj(np.swapaxes(vecs, 1, 2))
    m_eig = vh @ mk @ vecs
    kern = np.swapaxes(m_eig, 1, 2) * _phi_kernel(w, dt)
    g = np.conj(vecs) @ kern @ np.swapaxes(vecs, 1, 2)
    idx = np.arange(nf - 1)
    g_sup = g[:, idx, idx + 1]
    g_sub = g[:, idx + 1, idx]
    run.d_re = lam * (g_sup + g_sub)
    run.d_im = 1j * lam * (g_sup - g_sub)
    return run


@dataclass
class Propagation:
    """Propagator stored as ``n_fock x n_fock`` blocks in the ``S_y`` eigenbasis."""

    layout: HilbertLayout
    blocks: np.ndarray  # (4, n_fock, n_fock), block s belongs to S_y eigenvector s
    spin_basis: np.ndarray
    spin_values: np.ndarray
    prefixes: dict = field(default_factory=dict)

    def full(self) -> np.ndarray:
        nf = self.layout.n_fock
        s = self.spin_basis
        v = np.einsum("snm,as,bs->namb", self.blocks, s, np.conj(s))
        return v.reshape(4 * nf, 4 * nf)


def _weight_blocks(weight: np.ndarray, layout: HilbertLayout, spin_basis: np.ndarray) -> np.ndarray:
    """Diagonal spin blocks of ``R^dag weight R`` with ``R = 1 (x) spin_basis``."""
    nf = layout.n_fock
    w4 = np.asarray(weight, dtype=complex).reshape(nf, 4, nf, 4)
    rot = np.einsum("as,manb,bt->smnt", np.conj(spin_basis), w4, spin_basis)
    return np.stack([rot[s, :, :, s] for s in range(4)])


def _propagate_couplings(layout, diag, couplings, dt, weight=None, keep_prefix=False):
    """Shared engine for both drive models.

    ``couplings[k, n-1]`` is the (lam = 1) matrix element ``<n-1|H_k|n>``.
    Returns the propagation, ``tr(weight V)`` and its derivatives with respect
    to the real and imaginary parts of every coupling (``None`` without weight).
    """
    vals, basis = spin_sy_eigen()
    nf = layout.n_fock
    m = couplings.shape[0]
    wblocks = None if weight is None else _weight_blocks(weight, layout, basis)
    blocks = np.empty((4, nf, nf), dtype=complex)
    free = np.diag(np.exp(-1j * diag * dt * m))
    d_re = np.zeros(couplings.shape, dtype=complex)
    d_im = np.zeros(couplings.shape, dtype=complex)
    trace = 0.0j
    prefixes = {}
    # The lam = -lam' block is the parity conjugate of the lam' block because
    # parity flips the sign of every off-diagonal coupling.  Only the positive
    # block is propagated; its partner's weight is folded into it.
    parity = (-1.0) ** np.arange(nf)
    positive = {lam: s for s, lam in enumerate(vals) if lam > 0}
    for s, lam in enumerate(vals):
        if lam == 0:
            blocks[s] = free
            if keep_prefix:
                steps = np.arange(m + 1)[:, None] * dt
                prefixes[s] = np.exp(-1j * diag[None, :] * steps)[:, :, None] * np.eye(nf)
            if wblocks is not None:
                trace += np.trace(wblocks[s] @ blocks[s])
        elif lam > 0:
            partner = [t for t, mu in enumerate(vals) if mu == -lam]
            w_eff = None
            if wblocks is not None:
                w_eff = wblocks[s] + sum(parity[:, None] * wblocks[t] * parity[None, :] for t in partner)
            run = _run_block(diag, couplings, lam, dt, w_eff, keep_prefix)
            blocks[s] = run.unitary
            if keep_prefix:
                prefixes[s] = run.prefix
            for t in partner:
                blocks[t] = parity[:, None] * run.unitary * parity[None, :]
                if keep_prefix:
                    prefixes[t] = parity[None, :, None] * run.prefix * parity[None, None, :]
            if wblocks is not None:
                trace += np.trace(w_eff @ run.unitary)
                d_re += run.d_re
                d_im += run.d_im
        elif -lam not in positive:
            raise ValueError("spin spectrum is not symmetric")
    prop = Propagation(layout, blocks, basis, vals, prefixes)
    if weight is None:
        return prop, None, None, None
    return prop, trace, d_re, d_im


def _full_couplings(params: SystemParams, amplitudes: np.ndarray, omega_r: float) -> np.ndarray:
    root_n = np.sqrt(np.arange(1, params.n_fock))
    return OMEGA_G * omega_r * np.conj(amplitudes)[:, None] * root_n[None, :]


def _strong_couplings(params: SystemParams, g: np.ndarray, omega_r: float) -> np.ndarray:
    n_tr = g.shape[0]
    if n_tr > params.n_fock - 1:
        raise ValueError(f"{n_tr} transitions do not fit into n_fock = {params.n_fock}")
    c = np.zeros((g.shape[1], params.n_fock - 1), dtype=complex)
    root_n = np.sqrt(np.arange(1, n_tr + 1))
    c[:, :n_tr] = 0.5 * OMEGA_G * omega_r * (np.conj(g) * root_n[:, None]).T
    return c


def propagate(params: SystemParams, pulse: ControlPulse, omega_r: float) -> np.ndarray:
    """Total rotating-frame propagator ``V = U_M ... U_1`` for Rabi frequency ``omega_r``."""
    return propagate_blocks(params, pulse, omega_r).full()


def propagate_blocks(params, pulse, omega_r, keep_prefix=False) -> Propagation:
    prop, *_ = _propagate_couplings(
        params.layout,
        _shift_diagonal(params.n_fock, params.chi),
        _full_couplings(params, pulse.amplitudes, omega_r),
        pulse.segment_duration,
        keep_prefix=keep_prefix,
    )
    return prop


@dataclass
class TraceGradient:
    """``tr(weight V)`` and its derivatives with respect to each segment's real
    and imaginary drive amplitude (arrays of complex sensitivities)."""

    propagation: Propagation
    value: complex
    d_real: np.ndarray
    d_imag: np.ndarray


def propagate_with_gradient(params, pulse, omega_r, weight) -> TraceGradient:
    """Propagator plus exact derivatives of ``tr(weight V)`` per segment.

    ``d_real[k] = d tr(weight V) / d Re f_k`` and likewise ``d_imag``.  The
    derivative of each segment exponential is taken in the eigenbasis of the
    segment Hamiltonian, so no finite differencing is involved.
    """
    omega = OMEGA_G * omega_r
    root_n = np.sqrt(np.arange(1, params.n_fock))
    prop, value, d_re, d_im = _propagate_couplings(
        params.layout,
        _shift_diagonal(params.n_fock, params.chi),
        _full_couplings(params, pulse.amplitudes, omega_r),
        pulse.segment_duration,
        weight=weight,
    )
    # c = Omega sqrt(n) conj(f): dRe c/dRe f = Omega sqrt(n), dIm c/dIm f = -Omega sqrt(n)
    return TraceGradient(prop, value, omega * d_re @ root_n, -omega * d_im @ root_n)


def propagate_strong_limit(params, controls: StrongLimitControls, omega_r) -> np.ndarray:
    return propagate_strong_limit_blocks(params, controls, omega_r).full()


def propagate_strong_limit_blocks(params, controls, omega_r, keep_prefix=False) -> Propagation:
    prop, *_ = _propagate_couplings(
        params.layout,
        np.zeros(params.n_fock),
        _strong_couplings(params, controls.g, omega_r),
        controls.segment_duration,
        keep_prefix=keep_prefix,
    )
    return prop


def propagate_strong_limit_with_gradient(params, controls, omega_r, weight) -> TraceGradient:
    """As :func:`propagate_with_gradient`; derivatives have shape ``(N, M)``."""
    n_tr = controls.n_transitions
    half = 0.5 * OMEGA_G * omega_r * np.sqrt(np.arange(1, n_tr + 1))
    prop, value, d_re, d_im = _propagate_couplings(
        params.layout,
        np.zeros(params.n_fock),
        _strong_couplings(params, controls.g, omega_r),
        controls.segment_duration,
        weight=weight,
    )
    return TraceGradient(
        prop, value, half[:, None] * d_re[:, :n_tr].T, -half[:, None] * d_im[:, :n_tr].T
    )


def top_level_population(params, pulse, omega_r, levels: int = 4) -> float:
    """Largest population in the top ``levels`` Fock states at any segment
    boundary, over all initial states inside the gate subspace."""
    prop = propagate_blocks(params, pulse, omega_r, keep_prefix=True)
    worst = 0.0
    for pre in prop.prefixes.values():
        pop = np.sum(np.abs(pre[:, -levels:, : params.n_sub]) ** 2, axis=1)
        worst = max(worst, float(np.max(pop)))
    return worst


@dataclass
class TruncationReport:
    converged: bool
    max_fidelity_change: float
    max_top_population: float
    offending_member: float | None = None

    def to_dict(self) -> dict:
        return {
            "converged": self.converged,
            "max_fidelity_change": self.max_fidelity_change,
            "max_top_population": self.max_top_population,
            "offending_member": self.offending_member,
        }


FIDELITY_CHANGE_TOL = 1e-6
TOP_POPULATION_TOL = 1e-8
GUARD_LEVELS = 4


def truncation_converged(params: SystemParams, pulse: ControlPulse, ensemble) -> TruncationReport:
    """Check that the Fock cutoff does not influence the scored fidelities.

    Every member is rerun with ``n_fock + 4`` levels; the cutoff is accepted
    when no fidelity moves by ``1e-6`` or more and the population of the top
    four levels of the original truncation stays below ``1e-8``.
    """
    from .fidelity import subspace_fidelity

    if params.n_fock < params.n_sub + GUARD_LEVELS:
        raise ValueError("truncation guard needs n_fock >= n_sub + 4")
    bigger = params.replace(n_fock=params.n_fock + GUARD_LEVELS)
    worst_change, worst_pop, offender = 0.0, 0.0, None
    ok = True
    for omega_r in ensemble.members:
        f_small = subspace_fidelity(params, pulse, omega_r)
        f_big = subspace_fidelity(bigger, pulse, omega_r)
        change = abs(f_small - f_big)
        pop = top_level_population(params, pulse, omega_r, GUARD_LEVELS)
        worst_change = max(worst_change, change)
        worst_pop = max(worst_pop, pop)
        if ok and (change >= FIDELITY_CHANGE_TOL or pop >= TOP_POPULATION_TOL):
            ok, offender = False, float(omega_r)
    return TruncationReport(ok, worst_change, worst_pop, offender)


def check_unitary(v: np.ndarray) -> None:
    err = np.max(np.abs(v.conj().T @ v - np.eye(v.shape[0])))
    if err > UNITARY_TOL:
        raise ArithmeticError(f"propagator not unitary (deviation {err:.3g})")
