"""Ensemble-robust pulse synthesis.

Controls are piecewise constant.  The objective is the ensemble-mean
infidelity over a grid of Rabi frequencies and its gradient is exact
(propagator derivatives from :mod:`.dynamics` pushed through the modulus
squared of the overlap).  Amplitudes stay inside ``|f| <= 1`` because the
optimizer only ever sees unconstrained parameters:

* ``amplitude-phase``: ``f = sin(rho) exp(i theta)``
* ``clipped-cartesian``: ``f = z / max(1, |z|)`` with ``z = x + i y``

Minimization uses scipy's limited-memory BFGS (with its line search) and
stops early once the target infidelity is reached.
"""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize

from .composite import InfeasiblePulseError, build_gate_schedule
from .dynamics import (
    GUARD_LEVELS,
    AmplitudeBoundWarning,
    ControlPulse,
    StrongLimitControls,
    SystemParams,
    polychromatic_lift,
    propagate_strong_limit_with_gradient,
    propagate_with_gradient,
    truncation_converged,
)
from .fidelity import FidelityReport, RabiEnsemble, average_infidelity, fidelity_weight
from .parallel import ordered_map

log = logging.getLogger(__name__)

PARAMETERIZATIONS = ("amplitude-phase", "clipped-cartesian")
GUARD_EVERY = 25
# keeps |f| <= 1 exact after rounding of |z| and of cos^2 + sin^2
_SHRINK = 1.0 - 4.0 * np.finfo(float).eps


@dataclass
class OptimizationConfig:
    segment_count: int = 64
    strong_segment_count: int = 64
    max_iterations: int = 500
    strong_max_iterations: int = 300
    target_infidelity: float = 1e-4
    strong_target_infidelity: float | None = None
    grid_points: int = 9
    parameterization: str = "amplitude-phase"
    rng_seed: int = 0
    restarts: int = 3
    restart_noise: float = 0.05
    gradient_tol: float = 1e-9
    history: int = 20
    max_line_search: int = 40
    workers: int = 1

    def __post_init__(self):
        if self.target_infidelity <= 0:
            raise ValueError("target_infidelity must be positive")
        if self.segment_count < 4 or self.strong_segment_count < 4:
            raise ValueError("segment counts must be >= 4")
        if self.parameterization not in PARAMETERIZATIONS:
            raise ValueError(f"parameterization must be one of {PARAMETERIZATIONS}")
        if self.grid_points < 1:
            raise ValueError("grid_points must be >= 1")

    @classmethod
    def from_dict(cls, data: dict) -> "OptimizationConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown optimizer keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class OptimizationReport:
    status: str
    iterations: int
    trace: list[float]
    final: FidelityReport | None
    wall_time: float
    seed: str
    stages: list[dict] = field(default_factory=list)
    restarts_used: int = 0
    notes: list[str] = field(default_factory=list)
    guard_checks: list[dict] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "status": self.status,
            "iterations": self.iterations,
            "trace": [float(v) for v in self.trace],
            "final": None if self.final is None else self.final.to_dict(),
            "wall_time": self.wall_time,
            "seed": self.seed,
            "stages": self.stages,
            "restarts_used": self.restarts_used,
            "notes": self.notes,
            "guard_checks": self.guard_checks,
        }


# ---------------------------------------------------------------------------
# parameterizations


def encode(values: np.ndarray, parameterization: str) -> np.ndarray:
    """Unconstrained parameters that reproduce ``values`` (shape ``(..., M)``)."""
    values = np.asarray(values, dtype=complex)
    if parameterization == "amplitude-phase":
        rho = np.arcsin(np.clip(np.abs(values) / _SHRINK, 0.0, 1.0))
        theta = np.angle(values)
        return np.concatenate([rho.ravel(), theta.ravel()])
    return np.concatenate([values.real.ravel(), values.imag.ravel()])


def decode(x: np.ndarray, shape, parameterization: str):
    """Complex controls and the Jacobian pieces needed for the chain rule.

    Returns ``values`` and the four arrays ``dRe/du, dIm/du, dRe/dv, dIm/dv``
    with ``u, v`` the two halves of ``x``.
    """
    half = x.size // 2
    u = x[:half].reshape(shape)
    v = x[half:].reshape(shape)
    if parameterization == "amplitude-phase":
        s, c = _SHRINK * np.sin(u), _SHRINK * np.cos(u)
        ct, st = np.cos(v), np.sin(v)
        values = s * (ct + 1j * st)
        return values, (c * ct, c * st, -s * st, s * ct)
    z = u + 1j * v
    r = np.abs(z)
    out = r > 1.0
    values = np.where(out, _SHRINK * z / np.where(out, r, 1.0), z)
    # inside the disk the map is the identity; outside it is the radial projection
    rr = np.where(out, r, 1.0)
    r3 = rr**3 / _SHRINK
    dre_du = np.where(out, v * v / r3, 1.0)
    dim_du = np.where(out, -u * v / r3, 0.0)
    dre_dv = np.where(out, -u * v / r3, 0.0)
    dim_dv = np.where(out, u * u / r3, 1.0)
    return values, (dre_du, dim_du, dre_dv, dim_dv)


def _chain(d_re: np.ndarray, d_im: np.ndarray, jac) -> np.ndarray:
    a, b, c, d = jac
    return np.concatenate([(d_re * a + d_im * b).ravel(), (d_re * c + d_im * d).ravel()])


# ---------------------------------------------------------------------------
# objectives


class EnsembleObjective:
    """Mean infidelity over a Rabi ensemble with its exact gradient.

    ``model='full'`` optimizes a single drive ``f`` under the full
    rotating-frame Hamiltonian; ``model='strong'`` optimizes the per-transition
    envelopes ``g_n`` of the strong-anharmonicity model.
    """

    def __init__(
        self,
        params: SystemParams,
        ensemble: RabiEnsemble,
        segment_count: int,
        model: str = "full",
        n_transitions: int | None = None,
        parameterization: str = "amplitude-phase",
        workers: int = 1,
        total_time: float = 1.0,
    ):
        if model not in ("full", "strong"):
            raise ValueError("model must be 'full' or 'strong'")
        self.params = params
        self.ensemble = ensemble
        self.model = model
        self.parameterization = parameterization
        self.workers = workers
        self.total_time = total_time
        self.n_transitions = n_transitions or params.n_sub
        self.shape = (segment_count,) if model == "full" else (self.n_transitions, segment_count)
        self.weight = fidelity_weight(params)
        self.norm = (4.0 * params.n_sub) ** 2
        self.evaluations = 0

    @property
    def size(self) -> int:
        return 2 * int(np.prod(self.shape))

    def controls(self, x):
        values, _ = decode(np.asarray(x, dtype=float), self.shape, self.parameterization)
        if self.model == "full":
            return ControlPulse(values, self.total_time)
        return StrongLimitControls(values, self.total_time)

    def encode(self, controls) -> np.ndarray:
        vals = controls.amplitudes if self.model == "full" else controls.g
        if vals.shape != self.shape:
            raise ValueError(f"controls have shape {vals.shape}, objective expects {self.shape}")
        return encode(vals, self.parameterization)

    def _member(self, args):
        controls, omega_r = args
        if self.model == "full":
            tg = propagate_with_gradient(self.params, controls, omega_r, self.weight)
        else:
            tg = propagate_strong_limit_with_gradient(self.params, controls, omega_r, self.weight)
        tau = tg.value
        fid = abs(tau) ** 2 / self.norm
        d_re = 2.0 * np.real(np.conj(tau) * tg.d_real) / self.norm
        d_im = 2.0 * np.real(np.conj(tau) * tg.d_imag) / self.norm
        return fid, d_re, d_im

    def fidelities(self, x) -> np.ndarray:
        controls = self.controls(x)
        return np.array([r[0] for r in self._evaluate(controls)])

    def _evaluate(self, controls):
        return ordered_map(self._member, [(controls, w) for w in self.ensemble.members], self.workers)

    def __call__(self, x) -> tuple[float, np.ndarray]:
        x = np.asarray(x, dtype=float)
        values, jac = decode(x, self.shape, self.parameterization)
        controls = (
            ControlPulse(values, self.total_time)
            if self.model == "full"
            else StrongLimitControls(values, self.total_time)
        )
        results = self._evaluate(controls)
        count = len(results)
        fid = sum(r[0] for r in results) / count
        d_re = sum(r[1] for r in results) / count
        d_im = sum(r[2] for r in results) / count
        self.evaluations += 1
        return float(1.0 - fid), -_chain(d_re, d_im, jac)


def objective_and_gradient(params, controls, ensemble, parameterization="amplitude-phase", workers=1):
    """Ensemble-mean infidelity and its gradient for ``controls``.

    Works for both a :class:`ControlPulse` (full model) and
    :class:`StrongLimitControls`; the gradient is with respect to the
    unconstrained parameters of ``parameterization``.
    """
    if isinstance(controls, ControlPulse):
        obj = EnsembleObjective(
            params, ensemble, controls.segment_count, "full",
            parameterization=parameterization, workers=workers, total_time=controls.total_time,
        )
    else:
        obj = EnsembleObjective(
            params, ensemble, controls.segment_count, "strong", controls.n_transitions,
            parameterization=parameterization, workers=workers, total_time=controls.total_time,
        )
    x = obj.encode(controls)
    value, grad = obj(x)
    return value, grad, x


class _TargetReached(Exception):
    pass


def _minimize(objective, x0, config: OptimizationConfig, target: float, max_iterations: int, monitor=None):
    """One L-BFGS run with early exit at ``target``; returns best x and its trace."""
    state = {"best_x": np.array(x0, dtype=float), "best_f": np.inf, "trace": []}

    def fun(x):
        value, grad = objective(x)
        if value < state["best_f"]:
            state["best_f"], state["best_x"] = value, np.array(x)
        if value <= target:
            raise _TargetReached
        return value, grad

    def callback(intermediate_result):
        state["trace"].append(float(intermediate_result.fun))
        if monitor is not None and (len(state["trace"]) - 1) % GUARD_EVERY == 0:
            monitor(np.array(intermediate_result.x))

    status = "max_iterations"
    try:
        value0, _ = fun(state["best_x"])
        state["trace"].append(value0)
        res = minimize(
            fun,
            state["best_x"],
            jac=True,
            method="L-BFGS-B",
            callback=callback,
            options=dict(
                maxiter=max_iterations,
                maxcor=config.history,
                gtol=config.gradient_tol,
                ftol=1e-15,
                maxls=config.max_line_search,
            ),
        )
        if res.status == 0:
            status = "stalled"
    except _TargetReached:
        status = "converged"
        state["trace"].append(state["best_f"])
    return state["best_x"], state["best_f"], state["trace"], status


def _run_with_restarts(objective, x0, config, target, max_iterations, rng, monitor=None):
    best_x, best_f, trace, status = _minimize(objective, x0, config, target, max_iterations, monitor)
    restarts = 0
    while status != "converged" and restarts < config.restarts:
        restarts += 1
        start = best_x + config.restart_noise * rng.standard_normal(best_x.size)
        x, f, tr, status = _minimize(objective, start, config, target, max_iterations, monitor)
        # the trace continues from the best point seen so far, so it stays monotone
        trace.extend(min(v, best_f) for v in tr)
        if f < best_f:
            best_x, best_f = x, f
        trace = list(np.minimum.accumulate(trace))
    if status != "converged" and best_f <= target:
        status = "converged"
    return best_x, best_f, trace, status, restarts


def optimize_pulse(
    params: SystemParams,
    config: OptimizationConfig,
    seed_pulse: ControlPulse,
    seed_kind: str = "user",
) -> tuple[ControlPulse, OptimizationReport]:
    """Refine ``seed_pulse`` against the full model on the ``+-delta_omega`` ensemble."""
    start = time.perf_counter()
    ensemble = RabiEnsemble.from_params(params, config.grid_points)
    if seed_pulse.segment_count != config.segment_count:
        seed_pulse = seed_pulse.resampled(config.segment_count)
    obj = EnsembleObjective(
        params, ensemble, config.segment_count, "full",
        parameterization=config.parameterization, workers=config.workers,
        total_time=seed_pulse.total_time,
    )
    x0 = obj.encode(seed_pulse)
    value0, _ = obj(x0)
    guarded = params.n_fock >= params.n_sub + GUARD_LEVELS
    guard_checks = []

    def monitor(x):
        guard_checks.append(truncation_converged(params, obj.controls(x), ensemble).to_dict())

    if value0 <= config.target_infidelity:
        pulse, status, trace, restarts = seed_pulse, "converged", [value0], 0
        iterations = 0
    else:
        rng = np.random.default_rng(config.rng_seed)
        x, _, trace, status, restarts = _run_with_restarts(
            obj, x0, config, config.target_infidelity, config.max_iterations, rng,
            monitor if guarded else None,
        )
        pulse = obj.controls(x)
        iterations = len(trace) - 1
    final = average_infidelity(params, pulse, ensemble, config.workers, check_truncation=False)
    notes = []
    if any(not g["converged"] for g in guard_checks):
        notes.append("Fock truncation guard failed at an intermediate iterate")
    if guarded:
        guard = truncation_converged(params, pulse, ensemble)
        final.truncation = guard.to_dict()
        if not guard.converged:
            notes.append("Fock truncation guard failed; increase n_fock")
    report = OptimizationReport(
        status=status,
        iterations=iterations,
        trace=trace,
        final=final,
        wall_time=time.perf_counter() - start,
        seed=seed_kind,
        restarts_used=restarts,
        notes=notes,
        guard_checks=guard_checks,
    )
    return pulse, report


def composite_seed(params: SystemParams, total_time: float = 1.0) -> tuple[StrongLimitControls, str]:
    """Strong-limit schedule as a seed; rescaled into ``|g| <= 1`` when infeasible."""
    try:
        sched = build_gate_schedule(params.n_sub, params.omega_c, total_time)
        return sched.to_controls(), "analytic-lift"
    except InfeasiblePulseError as err:
        sched = build_gate_schedule(params.n_sub, err.min_omega_c, total_time)
        controls = sched.to_controls()
        return controls, "analytic-lift (rescaled)"


def _lift_segments(controls: StrongLimitControls, chi: float, requested: int) -> int:
    """Smallest multiple of the envelope grid >= ``requested`` that resolves every tone."""
    n_tr = controls.n_transitions
    driven = controls.driven_transitions()
    fastest = max((2 * (n - 1) * chi for n in driven), default=0.0)
    need = max(requested, int(np.ceil(20 * fastest * controls.total_time)))
    base = controls.segment_count
    return int(np.ceil(need / base) * base) if n_tr else requested


def two_stage_optimize(
    params: SystemParams, config: OptimizationConfig, seed: StrongLimitControls | None = None
) -> tuple[ControlPulse, OptimizationReport]:
    """Strong-limit optimization followed by full-model refinement.

    Stage 1 optimizes the envelopes ``g_n`` in the strong-anharmonicity model,
    seeded with the composite schedule.  Stage 2 lifts them to a polychromatic
    drive and refines it against the full Hamiltonian.
    """
    start = time.perf_counter()
    if params.n_sub < 1:
        raise ValueError("n_sub must be >= 1")
    rng = np.random.default_rng(config.rng_seed)
    ensemble = RabiEnsemble.from_params(params, config.grid_points)
    seed_kind = "user"
    if seed is None:
        seed, seed_kind = composite_seed(params)
    strong_params = params.replace(n_fock=max(params.n_sub + 1, 2))
    seg = config.strong_segment_count
    base = seed.segment_count
    seg = int(np.ceil(seg / base) * base)
    seed = seed.resampled(seg)
    strong_target = config.strong_target_infidelity
    if strong_target is None:
        strong_target = config.target_infidelity / 100
    obj1 = EnsembleObjective(
        strong_params, RabiEnsemble.from_params(params, config.grid_points), seg, "strong",
        params.n_sub, config.parameterization, config.workers, seed.total_time,
    )
    x0 = obj1.encode(seed)
    v0, _ = obj1(x0)
    if v0 <= strong_target:
        x1, f1, trace1, status1, r1 = x0, v0, [v0], "converged", 0
    else:
        x1, f1, trace1, status1, r1 = _run_with_restarts(
            obj1, x0, config, strong_target, config.strong_max_iterations, rng
        )
    envelopes = obj1.controls(x1)
    stage1 = {
        "model": "strong",
        "status": status1,
        "infidelity": f1,
        "iterations": len(trace1) - 1,
        "trace": [float(v) for v in trace1],
        "segment_count": seg,
    }
    if not np.isfinite(f1):
        report = OptimizationReport("stage1_failed", 0, trace1, None, time.perf_counter() - start, seed_kind, [stage1])
        return None, report

    fine = _lift_segments(envelopes, params.chi, config.segment_count)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", AmplitudeBoundWarning)
        lifted, scale = polychromatic_lift(envelopes, params.chi, fine)
    notes = [str(w.message) for w in caught]
    stage2_config = OptimizationConfig(**{**config.to_dict(), "segment_count": fine})
    pulse, report = optimize_pulse(params, stage2_config, lifted, seed_kind)
    stage2 = {
        "model": "full",
        "status": report.status,
        "infidelity": report.final.average_infidelity,
        "iterations": report.iterations,
        "trace": [float(v) for v in report.trace],
        "segment_count": fine,
        "lift_scale": scale,
    }
    report.stages = [stage1, stage2]
    report.notes = notes + report.notes
    report.wall_time = time.perf_counter() - start
    return pulse, report


def sweep_infidelity_map(
    chi_grid,
    omega_c_grid,
    template: SystemParams,
    config: OptimizationConfig,
    delta_fraction: float = 0.1,
    warm_start: bool = True,
):
    """Achieved average infidelity on a (chi, Omega_C) grid.

    Values are censored at the target infidelity because every cell stops as
    soon as it reaches it.  Returns ``(values, statuses)``; failing cells hold
    ``nan`` and the error text.
    """
    chi_grid = np.asarray(chi_grid, dtype=float)
    omega_c_grid = np.asarray(omega_c_grid, dtype=float)
    values = np.full((chi_grid.size, omega_c_grid.size), np.nan)
    statuses = [[None] * omega_c_grid.size for _ in chi_grid]
    for j, oc in enumerate(omega_c_grid):
        neighbour = None
        for i, chi in enumerate(chi_grid):
            params = template.replace(chi=float(chi), omega_c=float(oc), delta_omega=delta_fraction * oc)
            try:
                pulse, report = two_stage_optimize(params, config)
                if warm_start and neighbour is not None and not report.converged:
                    warm, warm_report = optimize_pulse(params, config, neighbour, "warm-start")
                    if warm_report.final.average_infidelity < report.final.average_infidelity:
                        pulse, report = warm, warm_report
                values[i, j] = max(report.final.average_infidelity, config.target_infidelity)
                statuses[i][j] = report.status
                if pulse.segment_count == config.segment_count:
                    neighbour = pulse
            except Exception as err:  # recorded per cell, sweep continues
                statuses[i][j] = f"error: {err}"
    return values, statuses


def reaches(params, config, target) -> tuple[bool, float]:
    cfg = OptimizationConfig(**{**config.to_dict(), "target_infidelity": target})
    _, report = two_stage_optimize(params, cfg)
    value = report.final.average_infidelity if report.final is not None else np.inf
    return value <= target, value


@dataclass
class RequiredChiPoint:
    error_magnitude: float
    chi: float | None
    bounded: bool
    evaluations: list[tuple[float, float]]


def required_anharmonicity(
    error_magnitudes,
    template: SystemParams,
    config: OptimizationConfig,
    target: float = 1e-3,
    chi_bracket: tuple[float, float] = (0.0, 8.0),
    steps: int = 10,
) -> list[RequiredChiPoint]:
    """Smallest chi for which two-stage optimization reaches ``target``, per error size.

    Bisection over ``chi_bracket`` (``steps`` halvings).  A magnitude whose
    upper bracket end already fails is reported unbounded.
    """
    out = []
    for mag in error_magnitudes:
        if not 0 < mag <= 0.2:
            raise ValueError("error magnitudes must lie in (0, 0.2]")
        lo, hi = chi_bracket
        evals = []

        def ok(chi):
            params = template.replace(chi=float(chi), delta_omega=mag * template.omega_c)
            hit, value = reaches(params, config, target)
            evals.append((float(chi), float(value)))
            return hit

        if ok(lo):
            out.append(RequiredChiPoint(mag, lo, True, evals))
            continue
        if not ok(hi):
            out.append(RequiredChiPoint(mag, None, False, evals))
            continue
        for _ in range(steps):
            mid = 0.5 * (lo + hi)
            if ok(mid):
                hi = mid
            else:
                lo = mid
        out.append(RequiredChiPoint(mag, hi, True, evals))
    return out
