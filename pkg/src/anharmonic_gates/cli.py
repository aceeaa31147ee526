"""Command-line entry point.

Every subcommand reads a JSON run config, writes its artifacts into one
output directory together with the fully resolved config and a version
stamp, and returns ``0`` on success, ``2`` when an optimization did not reach
its target (artifacts are still written) and ``1`` on bad input.

Floats are written with ``repr``, the shortest decimal that round-trips, so
identical runs give byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bloch import trajectory_family, write_trajectories_csv
from .composite import InfeasiblePulseError, build_gate_schedule, four_segment_pulse
from .dynamics import OMEGA_G, ControlPulse, SystemParams, polychromatic_lift
from .fidelity import (
    RabiEnsemble,
    average_infidelity,
    fidelity_from_blocks,
    infidelity_curve,
)
from .dynamics import propagate_strong_limit_blocks
from .optimizer import OptimizationConfig, required_anharmonicity, sweep_infidelity_map, two_stage_optimize
from .trap import (
    ATOMIC_MASS,
    TrapSpec,
    anharmonicity_sweep,
    com_anharmonicity,
    stretch_anharmonicity,
    stretch_expansion,
)

SCHEMA_VERSION = 1
OUTPUT_ENV = "ANHARMONIC_GATES_OUT"
PULSE_COLUMNS = ("segment_index", "t_start", "re_f", "im_f")

log = logging.getLogger("anharmonic_gates")


class ConfigError(ValueError):
    pass


def _section(data, name, defaults: dict) -> dict:
    raw = data.get(name, {}) or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"'{name}' must be an object")
    unknown = set(raw) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown keys in '{name}': {sorted(unknown)}")
    return {**defaults, **raw}


SYSTEM_DEFAULTS = {
    "chi_over_omega_g": 2.0,
    "omega_c_over_omega_g": 1.0,
    "delta_fraction": 0.1,
    "n_fock": 12,
    "n_sub": 1,
    "gate_time_s": None,
}
SWEEP_DEFAULTS = {
    "chi": [0.0, 0.5, 1.0, 2.0, 4.0, 8.0],
    "omega_c": [0.5, 1.0, 1.5, 2.0, 2.5, 3.0],
    "warm_start": True,
    "error_magnitudes": [0.01, 0.02, 0.05, 0.1],
    "chi_bracket": [0.0, 8.0],
    "bisection_steps": 10,
    "required_target": 1e-3,
    "ratios": None,
}
TRAP_DEFAULTS = {
    "mass_u": 171.0,
    "omega_hz": 5e6,
    "xi_m": None,
    "mode": "stretch",
    "cubic": "taylor",
    "sweep_omega_hz": None,
    "sweep_xi_m": None,
}
TRAJECTORY_DEFAULTS = {
    "transition": 1,
    "phi": math.pi / 2,
    "ratios": None,
    "samples_per_segment": 50,
}
TOP_KEYS = {"schema_version", "system", "optimizer", "sweep", "trap", "trajectory", "output_dir", "rng_seed"}


@dataclass
class RunConfig:
    system: dict
    optimizer: OptimizationConfig
    sweep: dict
    trap: dict
    trajectory: dict
    output_dir: str | None = None
    rng_seed: int = 0
    extras: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(data) - TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
        version = data.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version}")
        system = _section(data, "system", SYSTEM_DEFAULTS)
        opt_raw = dict(data.get("optimizer", {}) or {})
        seed = data.get("rng_seed", opt_raw.get("rng_seed", 0))
        if "rng_seed" in opt_raw and opt_raw["rng_seed"] != seed:
            raise ConfigError("rng_seed given twice with different values")
        opt_raw["rng_seed"] = seed
        try:
            optimizer = OptimizationConfig.from_dict(opt_raw)
        except (TypeError, ValueError) as err:
            raise ConfigError(str(err)) from err
        cfg = cls(
            system=system,
            optimizer=optimizer,
            sweep=_section(data, "sweep", SWEEP_DEFAULTS),
            trap=_section(data, "trap", TRAP_DEFAULTS),
            trajectory=_section(data, "trajectory", TRAJECTORY_DEFAULTS),
            output_dir=data.get("output_dir"),
            rng_seed=int(seed),
        )
        cfg.params()  # validates the system block
        return cfg

    def params(self) -> SystemParams:
        s = self.system
        try:
            oc = float(s["omega_c_over_omega_g"])
            return SystemParams(
                chi=float(s["chi_over_omega_g"]),
                omega_c=oc,
                delta_omega=float(s["delta_fraction"]) * oc,
                n_fock=int(s["n_fock"]),
                n_sub=int(s["n_sub"]),
            )
        except (TypeError, ValueError) as err:
            raise ConfigError(f"invalid system block: {err}") from err

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "system": self.system,
            "optimizer": self.optimizer.to_dict(),
            "sweep": self.sweep,
            "trap": self.trap,
            "trajectory": self.trajectory,
            "output_dir": self.output_dir,
            "rng_seed": self.rng_seed,
        }


def load_config(path) -> RunConfig:
    if path is None:
        return RunConfig.from_dict({})
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    return RunConfig.from_dict(data)


# ---------------------------------------------------------------------------
# artifact writers


def _dump_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def write_pulse_csv(path, pulse: ControlPulse) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(PULSE_COLUMNS)
        for k, (t, f) in enumerate(zip(pulse.t_start, pulse.amplitudes)):
            out.writerow([k, repr(float(t)), repr(float(f.real)), repr(float(f.imag))])


def read_pulse_csv(path, total_time: float = 1.0) -> ControlPulse:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or set(PULSE_COLUMNS) - set(rows[0]):
        raise ConfigError(f"{path}: expected columns {PULSE_COLUMNS}")
    rows.sort(key=lambda r: int(r["segment_index"]))
    values = np.array([complex(float(r["re_f"]), float(r["im_f"])) for r in rows])
    return ControlPulse(values, total_time)


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(header)
        for row in rows:
            out.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _output_dir(args, cfg: RunConfig, command: str) -> Path:
    if args.out:
        root = Path(args.out)
    elif cfg.output_dir:
        root = Path(cfg.output_dir)
    else:
        root = Path(os.environ.get(OUTPUT_ENV, "runs")) / command
    root.mkdir(parents=True, exist_ok=True)
    return root


def _stamp(out: Path, cfg: RunConfig, command: str) -> None:
    _dump_json(out / "config.resolved.json", cfg.to_dict())
    _dump_json(
        out / "version.json",
        {
            "schema_version": SCHEMA_VERSION,
            "tool": "anharmonic_gates",
            "version": __version__,
            "command": command,
            "numpy": np.__version__,
        },
    )


def _ratios(cfg: RunConfig) -> np.ndarray:
    if cfg.sweep["ratios"] is not None:
        return np.asarray(cfg.sweep["ratios"], dtype=float)
    d = max(float(cfg.system["delta_fraction"]), 0.1)
    return np.linspace(1 - d, 1 + d, 41)


# ---------------------------------------------------------------------------
# commands


def cmd_optimize(args, cfg: RunConfig) -> int:
    params = cfg.params()
    opt = OptimizationConfig(**{**cfg.optimizer.to_dict(), "workers": args.workers})
    pulse, report = two_stage_optimize(params, opt)
    out = _output_dir(args, cfg, "optimize")
    _stamp(out, cfg, "optimize")
    data = report.to_dict()
    data.pop("wall_time")  # keeps the report reproducible; timing goes to the log
    log.info("optimization took %.1f s", report.wall_time)
    _dump_json(out / "optimization_report.json", data)
    if pulse is None:
        return 2
    write_pulse_csv(out / "pulse.csv", pulse)
    _dump_json(out / "fidelity_report.json", report.final.to_dict())
    log.info("average infidelity %.3e (%s)", report.final.average_infidelity, report.status)
    return 0 if report.converged else 2


def cmd_evaluate(args, cfg: RunConfig) -> int:
    if not args.pulse:
        raise ConfigError("evaluate needs --pulse")
    pulse = read_pulse_csv(args.pulse)
    params = cfg.params()
    ensemble = RabiEnsemble.from_params(params, cfg.optimizer.grid_points)
    report = average_infidelity(params, pulse, ensemble, args.workers)
    ratios = _ratios(cfg)
    curve = infidelity_curve(params, pulse, ratios, args.workers)
    out = _output_dir(args, cfg, "evaluate")
    _stamp(out, cfg, "evaluate")
    _dump_json(out / "fidelity_report.json", report.to_dict())
    _write_rows(
        out / "infidelity_curve.csv",
        ("omega_r_over_omega_c", "infidelity"),
        [(float(r), float(v)) for r, v in zip(ratios, curve)],
    )
    log.info("average infidelity %.3e", report.average_infidelity)
    return 0


def cmd_sweep_map(args, cfg: RunConfig) -> int:
    params = cfg.params()
    opt = OptimizationConfig(**{**cfg.optimizer.to_dict(), "workers": args.workers})
    chi, oc = cfg.sweep["chi"], cfg.sweep["omega_c"]
    values, statuses = sweep_infidelity_map(
        chi, oc, params, opt, float(cfg.system["delta_fraction"]), bool(cfg.sweep["warm_start"])
    )
    out = _output_dir(args, cfg, "sweep-map")
    _stamp(out, cfg, "sweep-map")
    rows = []
    for i, c in enumerate(chi):
        for j, o in enumerate(oc):
            v = float(values[i, j])
            rows.append((float(c), float(o), v, statuses[i][j], bool(v <= opt.target_infidelity)))
    _write_rows(
        out / "sweep_map.csv",
        ("chi_over_omega_g", "omega_c_over_omega_g", "infidelity", "status", "censored_at_target"),
        rows,
    )
    return 0 if all(s == "converged" for row in statuses for s in row) else 2


def cmd_required_chi(args, cfg: RunConfig) -> int:
    params = cfg.params()
    opt = OptimizationConfig(**{**cfg.optimizer.to_dict(), "workers": args.workers})
    points = required_anharmonicity(
        cfg.sweep["error_magnitudes"],
        params,
        opt,
        float(cfg.sweep["required_target"]),
        tuple(cfg.sweep["chi_bracket"]),
        int(cfg.sweep["bisection_steps"]),
    )
    out = _output_dir(args, cfg, "required-chi")
    _stamp(out, cfg, "required-chi")
    _write_rows(
        out / "required_chi.csv",
        ("error_magnitude", "chi_over_omega_g", "bounded"),
        [(float(p.error_magnitude), float("nan") if p.chi is None else float(p.chi), p.bounded) for p in points],
    )
    return 0 if all(p.bounded for p in points) else 2


def _strong_fidelity(n_sub, controls, omega_r):
    params = SystemParams(chi=0.0, omega_c=omega_r, n_fock=n_sub + 1, n_sub=n_sub)
    return fidelity_from_blocks(propagate_strong_limit_blocks(params, controls, omega_r), n_sub)[0]


def cmd_composite(args, cfg: RunConfig) -> int:
    params = cfg.params()
    schedule = build_gate_schedule(params.n_sub, params.omega_c)
    controls = schedule.to_controls()
    out = _output_dir(args, cfg, "composite")
    _stamp(out, cfg, "composite")
    _dump_json(out / "schedule.json", schedule.to_dict())
    report = {
        "schema_version": SCHEMA_VERSION,
        "n_sub": params.n_sub,
        "omega_c_over_omega_g": params.omega_c,
        "strong_limit_fidelity": _strong_fidelity(params.n_sub, controls, params.omega_c),
    }
    if params.chi > 0:
        fine = max(64, controls.segment_count)
        fastest = 2 * (params.n_sub - 1) * params.chi
        fine = int(math.ceil(max(fine, 20 * fastest) / controls.segment_count) * controls.segment_count)
        lifted, scale = polychromatic_lift(controls, params.chi, fine)
        write_pulse_csv(out / "lifted_pulse.csv", lifted)
        ens = RabiEnsemble(params.omega_c, 0.0, 1)
        report["lift_scale"] = scale
        report["lifted_full_model_fidelity"] = 1.0 - average_infidelity(
            params, lifted, ens, check_truncation=False
        ).average_infidelity
    _dump_json(out / "composite_report.json", report)
    return 0


def cmd_trap(args, cfg: RunConfig) -> int:
    t = cfg.trap
    xi = math.inf if t["xi_m"] is None else float(t["xi_m"])
    mass = float(t["mass_u"]) * ATOMIC_MASS
    spec = TrapSpec(mass, 2 * math.pi * float(t["omega_hz"]), xi, t["mode"])
    if spec.mode == "COM":
        chi = com_anharmonicity(spec)
        result = {"mode": "COM", "note": "xi = inf gives a harmonic trap" if math.isinf(xi) else None}
    else:
        chi = stretch_anharmonicity(spec, t["cubic"])
        exp = stretch_expansion(spec, t["cubic"])
        result = {"mode": "stretch", "cubic": t["cubic"], "z0_m": exp.z0, "c2": exp.c2, "c3": exp.c3, "c4": exp.c4}
    result.update(
        schema_version=SCHEMA_VERSION,
        mass_kg=mass,
        omega_rad_per_s=spec.omega,
        xi_m=None if math.isinf(xi) else xi,
        chi_rad_per_s=chi,
        chi_over_2pi_hz=chi / (2 * math.pi),
    )
    gate_time = cfg.system["gate_time_s"]
    if gate_time is not None:
        result["chi_over_omega_g"] = chi * float(gate_time) / (2 * math.pi)
    out = _output_dir(args, cfg, "trap")
    _stamp(out, cfg, "trap")
    _dump_json(out / "trap.json", result)
    if t["sweep_omega_hz"] is not None and t["sweep_xi_m"] is not None:
        rows = anharmonicity_sweep(t["sweep_omega_hz"], t["sweep_xi_m"], mass, t["cubic"])
        _write_rows(out / "anharmonicity_sweep.csv", ("omega_hz", "xi_m", "chi_rad_per_s", "chi_over_2pi_hz"), rows)
    print(json.dumps({"chi_over_2pi_hz": result["chi_over_2pi_hz"]}))
    return 0


def cmd_trajectory(args, cfg: RunConfig) -> int:
    params = cfg.params()
    tr = cfg.trajectory
    ratios = (
        np.asarray(tr["ratios"], dtype=float)
        if tr["ratios"] is not None
        else np.round(np.arange(0.9, 1.1 + 1e-9, 0.025), 12)
    )
    n = int(tr["transition"])
    if args.pulse:
        controls = read_pulse_csv(args.pulse)
        source = "pulse"
    else:
        controls = four_segment_pulse(n, float(tr["phi"]), params.omega_c)
        params = params.replace(n_fock=max(params.n_fock, n + 1))
        source = "composite"
    family = trajectory_family(
        params, controls, params.omega_c * ratios, n, int(tr["samples_per_segment"]), args.workers
    )
    out = _output_dir(args, cfg, "trajectory")
    _stamp(out, cfg, "trajectory")
    write_trajectories_csv(out / "trajectories.csv", family)
    _dump_json(
        out / "trajectory_summary.json",
        {
            "schema_version": SCHEMA_VERSION,
            "source": source,
            "transition": n,
            "endpoint_spread": family.endpoint_spread,
            "mid_spread": family.mid_spread,
            "max_spread": family.max_spread,
        },
    )
    return 0


COMMANDS = {
    "optimize": cmd_optimize,
    "evaluate": cmd_evaluate,
    "sweep-map": cmd_sweep_map,
    "required-chi": cmd_required_chi,
    "composite": cmd_composite,
    "trap": cmd_trap,
    "trajectory": cmd_trajectory,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="anharmonic-gates", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="run-config JSON")
        p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV}/<command> or ./runs/<command>)")
        p.add_argument("--workers", type=int, default=1, help="parallel ensemble members")
        p.add_argument("--seed", type=int, help="overrides rng_seed")
        p.add_argument("--verbose", "-v", action="store_true")
        if name in ("evaluate", "trajectory"):
            p.add_argument("--pulse", help="pulse CSV (segment_index, t_start, re_f, im_f)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.rng_seed = args.seed
            cfg.optimizer.rng_seed = args.seed
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, InfeasiblePulseError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
