"""Command-line front end.

Usage::

    pbrcontrol SUBCOMMAND [--config run.json] [--out DIR] [--prefix NAME] [options]

Subcommands: steady, solve, constant, simulate, near-optimal, bifurcation,
contour, fishing, verify. Omitted configuration values fall back to the
reference reactor (mu_bar=1.7, a=0.5, I0_bar=1500, K_I=20, r=0.07, T=1,
T_bar=0.5, u_max=2).

Configuration schema (JSON, every section and key optional)::

    {
      "model":   {"family": "beer_lambert", "mu_bar": 1.7, "a": 0.5, "I0_bar": 1500, "K_I": 20},
      "reactor": {"r": 0.07, "T": 1.0, "T_bar": 0.5, "u_max": 2.0},
      "solver":  {"step": 1e-4, "sweep_step": 1e-3, "grid": 8, "starts": 4, "xatol": 1e-6,
                  "tol_switch_lambda": 1e-3, "tol_hamiltonian_drift": 1e-4, "tol_state": 1e-6},
      "output":  {"directory": ".", "prefix": "pbr"}
    }

The logistic family reads ``{"family": "logistic", "alpha": 6, "K": 10, "r_link": 1}``.
Failures print one ``error: <Kind>: <message>`` line to stderr and exit with
status 2. Every floating value written is rounded to 12 significant digits.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import analysis
from .dynamics import (
    ControlPolicy,
    Mode,
    ReactorParams,
    Segment,
    integrate,
    periodic_state,
    write_trajectory_csv,
)
from .errors import IoError, PBRError, SchemaError
from .growth import BeerLambertMonod, LogisticGrowth, check_assumptions, equilibrium
from .pmp import Tolerances, verify
from .solver import (
    BANG_BANG,
    BANG_SINGULAR_BANG,
    CONSTANT_MAX,
    BangBang,
    BangSingularBang,
    ConstantMax,
    SolverOptions,
    best_constant,
    evaluate_structure,
    solve,
)

EXIT_ERROR = 2

_MODEL_KEYS = {
    "beer_lambert": ("mu_bar", "a", "I0_bar", "K_I"),
    "logistic": ("alpha", "K", "r_link"),
}
_REACTOR_KEYS = ("r", "T", "T_bar", "u_max")
_SOLVER_INT_KEYS = ("grid", "starts")
_SOLVER_FLOAT_KEYS = (
    "step",
    "sweep_step",
    "xatol",
    "tol_switch_lambda",
    "tol_hamiltonian_drift",
    "tol_state",
)
_OUTPUT_KEYS = ("directory", "prefix")


@dataclass(frozen=True)
class SolverConfig:
    step: float = 1e-4
    sweep_step: float = 1e-3
    grid: int = 8
    starts: int = 4
    xatol: float = 1e-6
    tol_switch_lambda: float = 1e-3
    tol_hamiltonian_drift: float = 1e-4
    tol_state: float = 1e-6

    @property
    def tolerances(self) -> Tolerances:
        return Tolerances(self.tol_switch_lambda, self.tol_hamiltonian_drift, self.tol_state)

    def options(self) -> SolverOptions:
        return SolverOptions(
            step=self.step,
            search_step=max(self.sweep_step, self.step),
            grid=self.grid,
            starts=self.starts,
            xatol=self.xatol,
            tolerances=self.tolerances,
        )

    def sweep_options(self) -> SolverOptions:
        base = SolverOptions.sweep()
        return SolverOptions(
            step=self.sweep_step,
            search_step=self.sweep_step,
            grid=base.grid,
            starts=base.starts,
            xatol=base.xatol,
            tolerances=self.tolerances,
        )


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration."""

    params: ReactorParams = field(default_factory=ReactorParams)
    solver: SolverConfig = field(default_factory=SolverConfig)
    directory: str = "."
    prefix: str = "pbr"

    def path(self, suffix: str) -> str:
        return os.path.join(self.directory, f"{self.prefix}_{suffix}")


# ---------------------------------------------------------------------------
# configuration parsing
# ---------------------------------------------------------------------------


def _section(data: dict, name: str) -> dict:
    sec = data.get(name, {})
    if not isinstance(sec, dict):
        raise SchemaError(name, "must be an object")
    return sec


def _reject_unknown(sec: dict, allowed, path: str) -> None:
    for key in sec:
        if key not in allowed:
            raise SchemaError(f"{path}.{key}" if path else key, "unknown key")


def _number(sec: dict, key: str, path: str, positive: bool = True, allow_zero: bool = False) -> Optional[float]:
    if key not in sec:
        return None
    v = sec[key]
    where = f"{path}.{key}"
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SchemaError(where, f"expected a number, got {v!r}")
    v = float(v)
    if not math.isfinite(v):
        raise SchemaError(where, "must be finite")
    if positive and (v < 0.0 or (v == 0.0 and not allow_zero)):
        raise SchemaError(where, f"must be {'non-negative' if allow_zero else 'positive'}, got {v}")
    return v


def config_from_dict(data) -> RunConfig:
    """Validate a decoded JSON document and build a ``RunConfig``.

    Raises:
        SchemaError: unknown keys, wrong types, or violated invariants; the
            offending key path is in ``path``.
    """
    if not isinstance(data, dict):
        raise SchemaError("", "configuration must be a JSON object")
    _reject_unknown(data, ("model", "reactor", "solver", "output"), "")

    model_sec = _section(data, "model")
    family = model_sec.get("family", "beer_lambert")
    if family not in _MODEL_KEYS:
        raise SchemaError("model.family", f"unknown family {family!r}, expected one of {sorted(_MODEL_KEYS)}")
    _reject_unknown(model_sec, ("family",) + _MODEL_KEYS[family], "model")
    kwargs = {}
    for key in _MODEL_KEYS[family]:
        v = _number(model_sec, key, "model", allow_zero=(key == "r_link"))
        if v is not None:
            kwargs[key] = v
    model = BeerLambertMonod(**kwargs) if family == "beer_lambert" else LogisticGrowth(**kwargs)

    reactor = _section(data, "reactor")
    _reject_unknown(reactor, _REACTOR_KEYS, "reactor")
    rkw = {}
    for key in _REACTOR_KEYS:
        v = _number(reactor, key, "reactor", allow_zero=(key == "r"))
        if v is not None:
            rkw[key] = v
    T = rkw.get("T", 1.0)
    T_bar = rkw.get("T_bar", 0.5)
    if not T_bar < T:
        raise SchemaError("reactor.T_bar", f"must be smaller than T={T:g}, got {T_bar:g}")
    try:
        params = ReactorParams(model, **rkw)
    except ValueError as exc:
        raise SchemaError("reactor", str(exc)) from exc

    solver_sec = _section(data, "solver")
    _reject_unknown(solver_sec, _SOLVER_INT_KEYS + _SOLVER_FLOAT_KEYS, "solver")
    skw = {}
    for key in _SOLVER_FLOAT_KEYS:
        v = _number(solver_sec, key, "solver")
        if v is not None:
            skw[key] = v
    for key in _SOLVER_INT_KEYS:
        if key in solver_sec:
            v = solver_sec[key]
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise SchemaError(f"solver.{key}", f"expected a positive integer, got {v!r}")
            skw[key] = v

    out = _section(data, "output")
    _reject_unknown(out, _OUTPUT_KEYS, "output")
    okw = {}
    for key in _OUTPUT_KEYS:
        if key in out:
            if not isinstance(out[key], str) or not out[key]:
                raise SchemaError(f"output.{key}", "expected a non-empty string")
            okw[key] = out[key]
    return RunConfig(params, SolverConfig(**skw), **okw)


def parse_config(path) -> RunConfig:
    """Read and validate a JSON configuration file.

    Raises:
        IoError: the file cannot be read or is not valid JSON.
        SchemaError: the document does not match the schema.
    """
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise IoError(f"{path} is not valid JSON: {exc}") from exc
    return config_from_dict(data)


# ---------------------------------------------------------------------------
# argument helpers
# ---------------------------------------------------------------------------


def parse_range(text: str) -> np.ndarray:
    """``start:stop:count`` to ``count`` evenly spaced values, endpoints included."""
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected start:stop:count, got {text!r}")
    try:
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad range {text!r}: {exc}") from exc
    if count < 1:
        raise argparse.ArgumentTypeError(f"count must be positive in {text!r}")
    return np.linspace(start, stop, count)


def parse_policy(text: str, params: ReactorParams) -> ControlPolicy:
    """Policy from ``MODE:END`` items separated by commas.

    MODE is ``closed``, ``max``, ``singular`` or a number (constant dilution);
    END is the segment end time. The first segment starts at 0 and the last
    must end at T, e.g. ``closed:0.3,max:0.6,closed:1``.
    """
    segs = []
    start = 0.0
    for item in text.split(","):
        try:
            mode, end = item.strip().split(":")
            end = float(end)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"bad policy item {item!r}, expected MODE:END") from exc
        mode = mode.strip().lower()
        if mode in ("closed", "max", "singular"):
            segs.append(Segment(start, end, Mode(mode)))
        else:
            try:
                segs.append(Segment(start, end, Mode.CONST, float(mode)))
            except ValueError as exc:
                raise argparse.ArgumentTypeError(f"unknown policy mode {mode!r}") from exc
        start = end
    policy = ControlPolicy(tuple(segs))
    policy.validate(params)
    return policy


def read_solution(path) -> dict:
    """Parse a ``key=value`` summary file written by ``solve``."""
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc.strerror or exc}") from exc
    out = {}
    for line in lines:
        if "=" in line:
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    if "family" not in out:
        raise IoError(f"{path} has no family= line")
    return out


def structure_from_summary(fields: dict):
    family = fields["family"]
    try:
        if family == BANG_BANG:
            return BangBang(float(fields["t1"]), float(fields["t2"]))
        if family == BANG_SINGULAR_BANG:
            return BangSingularBang(float(fields["t_exit"]), float(fields["t2"]))
        if family == CONSTANT_MAX:
            return ConstantMax()
    except KeyError as exc:
        raise IoError(f"solution summary lacks {exc.args[0]}") from exc
    raise IoError(f"cannot verify a solution of family {family!r}")


def _kv(pairs) -> str:
    lines = []
    for k, v in pairs:
        if isinstance(v, (float, np.floating)):
            v = f"{float(v):.12g}"
        lines.append(f"{k}={v}")
    return "\n".join(lines) + "\n"


def _emit(cfg: RunConfig, text: str, suffix: Optional[str] = "summary.txt") -> None:
    sys.stdout.write(text)
    if suffix:
        with open(cfg.path(suffix), "w") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_steady(cfg: RunConfig, args) -> None:
    p = cfg.params
    rep = check_assumptions(p)
    pairs = [
        ("x_sigma", rep.x_sigma),
        ("u_sigma", rep.u_sigma),
        ("x_bar0", equilibrium(p.model, p.r, 0.0)),
        ("x_bar_umax", equilibrium(p.model, p.r, p.u_max)),
    ]
    pairs += [(k, v) for k, v in rep.as_dict().items() if k not in ("x_sigma", "u_sigma")]
    _emit(cfg, _kv(pairs), None)


def cmd_solve(cfg: RunConfig, args) -> None:
    sol = solve(cfg.params, cfg.solver.options())
    sol.write(os.path.join(cfg.directory, cfg.prefix))
    sys.stdout.write(sol.summary())


def cmd_constant(cfg: RunConfig, args) -> None:
    res = best_constant(cfg.params, cfg.solver.step)
    pairs = [
        ("u_hat", res.u_hat),
        ("x0", res.x0),
        ("yield", res.yield_),
        ("cumulated_flow", res.cumulated_flow),
    ]
    if res.yield_ > 0.0:
        traj = integrate(cfg.params, res.x0, ControlPolicy.constant(cfg.params, res.u_hat), cfg.solver.step)
        write_trajectory_csv(traj, cfg.path("trajectory.csv"))
    _emit(cfg, _kv(pairs))


def cmd_simulate(cfg: RunConfig, args) -> None:
    p = cfg.params
    if args.policy is not None:
        policy = parse_policy(args.policy, p)
    elif args.window is not None:
        t_on, t_off = args.window
        policy = ControlPolicy.window(p, t_on, t_off)
    elif args.constant is not None:
        policy = ControlPolicy.constant(p, args.constant)
    else:
        policy = ControlPolicy.closed(p)
    step = cfg.solver.step
    x0 = args.x0 if args.x0 is not None else periodic_state(p, policy, step)
    traj = integrate(p, x0, policy, step)
    write_trajectory_csv(traj, cfg.path("trajectory.csv"))
    pairs = [
        ("x0", traj.x0),
        ("x_T", traj.x_end),
        ("yield", traj.yield_),
        ("cumulated_flow", traj.cumulated_flow),
        ("periodic", args.x0 is None),
    ]
    _emit(cfg, _kv(pairs))


def cmd_near_optimal(cfg: RunConfig, args) -> None:
    step = cfg.solver.sweep_step
    flows = args.flows if args.flows is not None else analysis.admissible_flows(cfg.params, step=step)
    rows = analysis.flow_sweep(cfg.params, flows, step)
    analysis.write_flow_csv(rows, cfg.path("grid.csv"))
    best = max(rows, key=lambda row: row.yield_window)
    _emit(cfg, _kv([("rows", len(rows)), ("best_u_tilde", best.u_tilde), ("best_yield_window", best.yield_window)]))


def cmd_bifurcation(cfg: RunConfig, args) -> None:
    grid = analysis.bifurcation_sweep(cfg.params, args.r, args.ubar, cfg.solver.sweep_options(), args.workers)
    grid.write(os.path.join(cfg.directory, cfg.prefix))
    labels, counts = np.unique(grid.labels.astype(str), return_counts=True)
    pairs = [("cells", int(grid.labels.size)), ("r_washout", grid.r_washout)]
    pairs += [(f"count_{lab}", int(c)) for lab, c in zip(labels, counts)]
    _emit(cfg, _kv(pairs))


def cmd_contour(cfg: RunConfig, args) -> None:
    p = cfg.params
    t1 = args.t1 if args.t1 is not None else np.linspace(p.T_bar / 61, p.T_bar, 61)
    t2 = args.t2 if args.t2 is not None else np.linspace(p.T_bar, p.T - (p.T - p.T_bar) / 61, 61)
    grid = analysis.productivity_contour(p, t1, t2, cfg.solver.sweep_step, args.workers)
    grid.write(os.path.join(cfg.directory, cfg.prefix))
    a, b, y = grid.argmax()
    _emit(cfg, _kv([("best_t1", a), ("best_t2", b), ("best_yield", y)]))


def cmd_fishing(cfg: RunConfig, args) -> None:
    rep = analysis.fishing_scenario(
        alpha=args.alpha,
        K=args.K,
        r=args.mortality,
        T_bar=args.season,
        T=1.0,
        u_max=args.ubar,
        options=cfg.solver.options(),
    )
    rep.optimal.write(os.path.join(cfg.directory, cfg.prefix))
    _emit(cfg, rep.summary())


def cmd_verify(cfg: RunConfig, args) -> None:
    fields = read_solution(args.solution)
    ev = evaluate_structure(cfg.params, structure_from_summary(fields), cfg.solver.step)
    report = verify(cfg.params, ev.trajectory, cfg.solver.tolerances)
    with open(cfg.path("pmp.csv"), "w", newline="") as fh:
        fh.write(report.to_csv())
    sys.stdout.write(report.to_text())


COMMANDS = {
    "steady": cmd_steady,
    "solve": cmd_solve,
    "constant": cmd_constant,
    "simulate": cmd_simulate,
    "near-optimal": cmd_near_optimal,
    "bifurcation": cmd_bifurcation,
    "contour": cmd_contour,
    "fishing": cmd_fishing,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", help="output directory (overrides output.directory)")
    common.add_argument("--prefix", help="output file prefix (overrides output.prefix)")
    common.add_argument("--step", type=float, help="RK4 step for light segments [day]")
    common.add_argument("--sweep-step", type=float, help="RK4 step for sweeps and seeding [day]")
    common.add_argument("--tol-switch-lambda", type=float, help="max |lambda - 1| at switches")
    common.add_argument("--tol-drift", type=float, help="max relative Hamiltonian drift per phase")
    common.add_argument("--tol-state", type=float, help="relative tolerance on x_sigma comparisons")
    common.add_argument("-v", "--verbose", action="store_true", help="log solver warnings")

    parser = argparse.ArgumentParser(prog="pbrcontrol", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("steady", parents=[common], help="constant-light optimum and feasibility gates")
    sub.add_parser("solve", parents=[common], help="optimal periodic dilution policy")
    sub.add_parser("constant", parents=[common], help="best constant dilution rate")
    sp = sub.add_parser("simulate", parents=[common], help="integrate a given policy")
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--policy", help="segments as MODE:END,... (e.g. closed:0.3,max:0.6,closed:1)")
    g.add_argument("--window", type=float, nargs=2, metavar=("T_ON", "T_OFF"), help="u_max on [T_ON, T_OFF]")
    g.add_argument("--constant", type=float, metavar="U", help="constant dilution U")
    sp.add_argument("--x0", type=float, help="initial biomass (default: periodic orbit)")
    sp = sub.add_parser("near-optimal", parents=[common], help="window vs constant at equal flow")
    sp.add_argument("--flows", type=parse_range, help="flow range start:stop:count (default: admissible)")
    sp = sub.add_parser("bifurcation", parents=[common], help="family map over (r, u_max)")
    sp.add_argument("--r", type=parse_range, default=parse_range("0.01:1.0:41"), help="start:stop:count")
    sp.add_argument("--ubar", type=parse_range, default=parse_range("0.01:2.5:41"), help="start:stop:count")
    sp.add_argument("--workers", type=int, help=f"process count (default: ${analysis.WORKERS_ENV} or 1)")
    sp = sub.add_parser("contour", parents=[common], help="bang-bang yield over (t1, t2)")
    sp.add_argument("--t1", type=parse_range, help="start:stop:count inside (0, T_bar]")
    sp.add_argument("--t2", type=parse_range, help="start:stop:count inside [T_bar, T)")
    sp.add_argument("--workers", type=int, help=f"process count (default: ${analysis.WORKERS_ENV} or 1)")
    sp = sub.add_parser("fishing", parents=[common], help="seasonal logistic fishery")
    sp.add_argument("--alpha", type=float, default=6.0)
    sp.add_argument("--K", type=float, default=10.0)
    sp.add_argument("--mortality", type=float, default=1.0)
    sp.add_argument("--season", type=float, default=0.2, help="growing-season length (fraction of the year)")
    sp.add_argument("--ubar", type=float, default=2.0, help="maximal fishing effort")
    sp = sub.add_parser("verify", parents=[common], help="maximum-principle checks on a solution summary")
    sp.add_argument("solution", help="<prefix>_summary.txt written by solve")
    return parser


def _overrides(cfg: RunConfig, args) -> RunConfig:
    s = cfg.solver
    changes = {
        "step": args.step,
        "sweep_step": args.sweep_step,
        "tol_switch_lambda": args.tol_switch_lambda,
        "tol_hamiltonian_drift": args.tol_drift,
        "tol_state": args.tol_state,
    }
    kw = {k: v for k, v in changes.items() if v is not None}
    for k, v in kw.items():
        if not (v > 0.0 and math.isfinite(v)):
            raise SchemaError(f"--{k.replace('_', '-')}", f"must be positive, got {v}")
    if kw:
        s = SolverConfig(**{**s.__dict__, **kw})
    return RunConfig(
        cfg.params,
        s,
        args.out if args.out is not None else cfg.directory,
        args.prefix if args.prefix is not None else cfg.prefix,
    )


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR, format="%(levelname)s: %(message)s")
    try:
        cfg = parse_config(args.config) if args.config else RunConfig()
        cfg = _overrides(cfg, args)
        os.makedirs(cfg.directory, exist_ok=True)
        COMMANDS[args.command](cfg, args)
    except (PBRError, ValueError, OSError, argparse.ArgumentTypeError) as exc:
        kind = type(exc).__name__
        message = " ".join(str(exc).split())
        sys.stderr.write(f"error: {kind}: {message}\n")
        return EXIT_ERROR
    return 0


if __name__ == "__main__":
    sys.exit(main())
