"""Structure-parameterized solution of the periodic productivity problem.

Only three control shapes can be optimal: bang-bang (closed, open at u_max
across dusk, closed), bang-singular-bang (closed until x reaches x_sigma, hold
x_sigma with u_sigma, open at u_max across dusk, closed) and u = u_max
throughout. Each shape is reduced to at most two switch times; the periodic
initial state is solved for inside every evaluation and the switch times are
optimized by a grid-seeded pattern search followed by Nelder-Mead.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from . import _kernels
from .dynamics import (
    DEFAULT_STEP,
    SWEEP_STEP,
    ControlPolicy,
    Mode,
    ReactorParams,
    Segment,
    Trajectory,
    _fixed_point,
    _run,
    integrate,
    periodic_state,
    policy_pieces,
    write_trajectory_csv,
)
from .errors import (
    Infeasible,
    NoPositiveFixedPoint,
    NoSolution,
    PolicyInvalid,
    SolverStalled,
    StateNegative,
    WindowOutOfRange,
)
from .growth import check_assumptions
from .pmp import PmpReport, Tolerances, verify

logger = logging.getLogger(__name__)

BANG_BANG = "BangBang"
BANG_SINGULAR_BANG = "BangSingularBang"
CONSTANT_MAX = "ConstantMax"
NO_SOLUTION = "NoSolution"

ENTRY_TOL = 1e-12  # day, singular entry-time resolution
TIE_TOL = 1e-8


@dataclass(frozen=True)
class BangBang:
    t1: float  # 0 -> u_max, in (0, T_bar)
    t2: float  # u_max -> 0, in (T_bar, T)

    label = BANG_BANG


@dataclass(frozen=True)
class BangSingularBang:
    t_exit: float  # singular -> u_max, before T_bar
    t2: float  # u_max -> 0, after T_bar
    t_entry: Optional[float] = None  # filled in by evaluate_structure

    label = BANG_SINGULAR_BANG


@dataclass(frozen=True)
class ConstantMax:
    label = CONSTANT_MAX


CandidateStructure = Union[BangBang, BangSingularBang, ConstantMax]


@dataclass(frozen=True)
class Evaluation:
    structure: CandidateStructure
    x0: float
    trajectory: Trajectory

    @property
    def yield_(self) -> float:
        return self.trajectory.yield_


@dataclass(frozen=True)
class SolverOptions:
    """Numerical settings of the structure search.

    Attributes:
        step: RK4 step for the final polish and the returned orbit [day].
        search_step: RK4 step for the seeding grid and pattern search [day].
        grid: seeding grid size per switch-time axis.
        starts: number of best grid cells refined further.
        xatol: Nelder-Mead simplex diameter at convergence [day].
        tolerances: maximum-principle check thresholds.
    """

    step: float = DEFAULT_STEP
    search_step: float = SWEEP_STEP
    grid: int = 8
    starts: int = 4
    xatol: float = 1e-6
    tolerances: Tolerances = field(default_factory=Tolerances)

    @classmethod
    def sweep(cls) -> "SolverOptions":
        """Reduced budget for parameter sweeps."""
        return cls(step=SWEEP_STEP, search_step=SWEEP_STEP, grid=6, starts=4, xatol=1e-5)


@dataclass(frozen=True)
class OptimalSolution:
    family: str
    structure: Optional[CandidateStructure]
    policy: Optional[ControlPolicy]
    x0: float
    trajectory: Optional[Trajectory]
    yield_: float
    cumulated_flow: float
    pmp: Optional[PmpReport]
    candidates: tuple = ()  # every locally optimal candidate with its report

    def switch_times(self) -> list:
        return self.policy.switch_times() if self.policy is not None else []

    def summary(self) -> str:
        s = self.structure
        lines = [f"family={self.family}"]
        if isinstance(s, BangBang):
            lines += [f"t1={s.t1:.12g}", f"t2={s.t2:.12g}"]
        elif isinstance(s, BangSingularBang):
            lines += [f"t_entry={s.t_entry:.12g}", f"t_exit={s.t_exit:.12g}", f"t2={s.t2:.12g}"]
        lines += [
            "switch_times=" + ";".join(f"{t:.12g}" for t in self.switch_times()),
            f"x0={self.x0:.12g}",
            f"yield={self.yield_:.12g}",
            f"cumulated_flow={self.cumulated_flow:.12g}",
            f"pmp_verdict={self.pmp.verdict if self.pmp else 'n/a'}",
        ]
        if self.pmp is not None and self.pmp.failures:
            lines.append("pmp_failures=" + ";".join(self.pmp.failures))
        return "\n".join(lines) + "\n"

    def write(self, prefix) -> None:
        """Write ``<prefix>_trajectory.csv``, ``<prefix>_summary.txt`` and ``<prefix>_pmp.csv``."""
        prefix = str(prefix)
        with open(prefix + "_summary.txt", "w") as fh:
            fh.write(self.summary())
        if self.trajectory is not None:
            write_trajectory_csv(self.trajectory, prefix + "_trajectory.csv")
        if self.pmp is not None:
            with open(prefix + "_pmp.csv", "w", newline="") as fh:
                fh.write(self.pmp.to_csv())


# ---------------------------------------------------------------------------
# single-structure evaluation
# ---------------------------------------------------------------------------


def _check_bang_times(params: ReactorParams, t1: float, t2: float) -> None:
    if not (0.0 <= t1 <= params.T_bar <= t2 <= params.T):
        raise Infeasible(f"switch times ({t1}, {t2}) outside 0 <= t1 <= T_bar <= t2 <= T")


def _singular_policy(params: ReactorParams, t_entry: float, t_exit: float, t2: float) -> ControlPolicy:
    segs = [
        Segment(0.0, t_entry, Mode.CLOSED),
        Segment(t_entry, t_exit, Mode.SINGULAR),
        Segment(t_exit, t2, Mode.MAX),
        Segment(t2, params.T, Mode.CLOSED),
    ]
    return ControlPolicy(tuple(s for s in segs if s.t_end > s.t_start))


def _singular_orbit(params: ReactorParams, t_exit: float, t2: float, step: float):
    """Periodic x0 and entry time of a bang-singular-bang shape, no sampling.

    Whatever the admissible x0, the state equals x_sigma at t_exit, so x(T) is
    a constant map of x0 and its value is the fixed point.
    """
    if not 0.0 < t_exit < params.T_bar <= t2 <= params.T:
        raise Infeasible(f"need 0 < t_exit < T_bar <= t2 <= T, got ({t_exit}, {t2})")
    report = check_assumptions(params)
    if not report.C_sing:
        raise Infeasible(f"u_sigma={report.u_sigma:.6g} >= u_max={params.u_max}: no admissible singular arc")
    xs = report.x_sigma
    tail = [Segment(t_exit, t2, Mode.MAX), Segment(t2, params.T, Mode.CLOSED)]
    tail = [s for s in tail if s.t_end > s.t_start]
    # run the tail pieces from x_sigma at t_exit
    tail_policy = ControlPolicy((Segment(0.0, t_exit, Mode.CLOSED),) + tuple(tail))
    pieces = policy_pieces(params, tail_policy)[1:]
    x0, _, _ = _run(params, xs, pieces, step)
    if not x0 < xs:
        raise Infeasible(f"periodic x0={x0:.6g} not below x_sigma={xs:.6g}")
    m = params.model
    t_entry = _kernels.day_time_to_level(m.kind, m.coefficients, params.r, 0.0, x0, xs, t_exit, step, ENTRY_TOL)
    if t_entry < 0.0:
        raise Infeasible(f"x never reaches x_sigma before t_exit={t_exit:.6g}")
    return x0, t_entry


def evaluate_structure(
    params: ReactorParams,
    structure: CandidateStructure,
    step: float = DEFAULT_STEP,
) -> Evaluation:
    """Periodic orbit and yield of one candidate shape.

    Raises:
        Infeasible: no positive periodic orbit, or the singular level cannot be
            reached in time from below.
    """
    if isinstance(structure, ConstantMax):
        policy = ControlPolicy.maximal(params)
        try:
            x0 = periodic_state(params, policy, step)
        except NoPositiveFixedPoint as exc:
            raise Infeasible(str(exc)) from exc
    elif isinstance(structure, BangBang):
        _check_bang_times(params, structure.t1, structure.t2)
        policy = ControlPolicy.window(params, structure.t1, structure.t2)
        try:
            x0 = periodic_state(params, policy, step)
        except NoPositiveFixedPoint as exc:
            raise Infeasible(str(exc)) from exc
    elif isinstance(structure, BangSingularBang):
        x0, t_entry = _singular_orbit(params, structure.t_exit, structure.t2, step)
        structure = BangSingularBang(structure.t_exit, structure.t2, t_entry)
        policy = _singular_policy(params, t_entry, structure.t_exit, structure.t2)
    else:
        raise TypeError(f"unknown structure {structure!r}")
    try:
        traj = integrate(params, x0, policy, step)
    except (PolicyInvalid, StateNegative) as exc:
        raise Infeasible(str(exc)) from exc
    return Evaluation(structure, x0, traj)


def _bang_yield(params: ReactorParams, t1: float, t2: float, step: float, memo: Optional[dict] = None) -> float:
    if not (0.0 <= t1 <= params.T_bar <= t2 <= params.T):
        return -1.0 - abs(min(t1, 0.0)) - max(t1 - params.T_bar, 0.0) - max(params.T_bar - t2, 0.0) - max(t2 - params.T, 0.0)
    policy = ControlPolicy.window(params, t1, t2)
    pieces = policy_pieces(params, policy)
    guess = memo.get("x0") if memo is not None else None
    try:
        x0 = _fixed_point(params, pieces, step, guess)
    except NoPositiveFixedPoint:
        return 0.0
    if memo is not None:
        memo["x0"] = x0
    return _run(params, x0, pieces, step)[1]


def _singular_yield(params: ReactorParams, t_exit: float, t2: float, step: float) -> float:
    if not (0.0 < t_exit < params.T_bar <= t2 <= params.T):
        return -1.0 - abs(min(t_exit, 0.0)) - max(t_exit - params.T_bar, 0.0) - max(params.T_bar - t2, 0.0) - max(t2 - params.T, 0.0)
    try:
        x0, t_entry = _singular_orbit(params, t_exit, t2, step)
    except Infeasible:
        return 0.0
    policy = _singular_policy(params, t_entry, t_exit, t2)
    try:
        return _run(params, x0, policy_pieces(params, policy), step)[1]
    except (PolicyInvalid, StateNegative):
        return 0.0


# ---------------------------------------------------------------------------
# two-parameter maximization
# ---------------------------------------------------------------------------


def _pattern_search(fun, start, step0, min_step, bounds):
    """Compass search maximizing ``fun`` from ``start``."""
    best = np.array(start, dtype=float)
    fbest = fun(best)
    step = np.array(step0, dtype=float)
    dirs = [np.array(d, dtype=float) for d in ((1, 0), (-1, 0), (0, 1), (0, -1))]
    while np.max(step) > min_step:
        improved = False
        for d in dirs:
            cand = np.clip(best + d * step, bounds[:, 0], bounds[:, 1])
            fc = fun(cand)
            if fc > fbest:
                best, fbest, improved = cand, fc, True
                break
        if not improved:
            step = step * 0.5
    return best, fbest


def _maximize_2d(objective, bounds, opts: SolverOptions):
    """Local maxima of ``objective(a, b, step)`` over a rectangle.

    A ``grid x grid`` set of points seeds ``starts`` compass searches at
    ``search_step``; each result is polished by Nelder-Mead at ``step``.
    Returns a list of (point, value) sorted by decreasing value.
    """
    bounds = np.asarray(bounds, dtype=float)
    n = opts.grid
    # Seeds crowd quadratically toward the shared edge at T_bar, where narrow
    # dusk windows live; a uniform grid steps right over them.
    q = ((np.arange(n) + 0.5) / n) ** 2
    axes = [bounds[0, 1] - (bounds[0, 1] - bounds[0, 0]) * q, bounds[1, 0] + (bounds[1, 1] - bounds[1, 0]) * q]
    coarse = lambda z: objective(z[0], z[1], opts.search_step)  # noqa: E731
    seeds = []
    for a in axes[0]:
        for b in axes[1]:
            seeds.append((coarse((a, b)), a, b))
    seeds.sort(key=lambda s: -s[0])
    seeds = [s for s in seeds if s[0] > 0.0][: opts.starts]
    cell = (bounds[:, 1] - bounds[:, 0]) / (2 * n)
    results = []
    for _, a, b in seeds:
        z, _ = _pattern_search(coarse, (a, b), cell / 2, 1e-4, bounds)
        fine = lambda v: -objective(v[0], v[1], opts.step)  # noqa: E731
        simplex = np.array([z, z + [2e-3, 0.0], z + [0.0, 2e-3]])
        simplex = np.clip(simplex, bounds[:, 0], bounds[:, 1])
        res = minimize(
            fine,
            z,
            method="Nelder-Mead",
            options={"xatol": opts.xatol, "fatol": 1e-13, "initial_simplex": simplex, "maxiter": 2000},
        )
        results.append((np.asarray(res.x), -float(res.fun)))
    # merge near-duplicate optima
    merged = []
    for z, v in sorted(results, key=lambda r: -r[1]):
        if all(np.max(np.abs(z - m[0])) > 1e-4 for m in merged):
            merged.append((z, v))
    return merged


def _pick(cands, opts: SolverOptions):
    """Best verified candidate; ties within TIE_TOL go to the lower total flow."""
    verified = [c for c in cands if c.pmp.passed]
    pool = verified or cands
    if not verified:
        logger.warning("no candidate passed the maximum-principle checks; returning the best yield")
    best_yield = max(c.yield_ for c in pool)
    tied = [c for c in pool if c.yield_ >= best_yield - TIE_TOL]
    return min(tied, key=lambda c: c.cumulated_flow)


def _solution(params: ReactorParams, ev: Evaluation, tol: Tolerances) -> OptimalSolution:
    report = verify(params, ev.trajectory, tol)
    return OptimalSolution(
        family=ev.structure.label,
        structure=ev.structure,
        policy=ev.trajectory.policy,
        x0=ev.x0,
        trajectory=ev.trajectory,
        yield_=ev.yield_,
        cumulated_flow=ev.trajectory.cumulated_flow,
        pmp=report,
    )


def solve(params: ReactorParams, options: Optional[SolverOptions] = None) -> OptimalSolution:
    """Maximize the yield per period over the three admissible shapes.

    Raises:
        NoSolution: f'(0) T_bar <= r T, only washout can occur.
        SolverStalled: no shape admits a periodic orbit.
    """
    opts = options or SolverOptions()
    report = check_assumptions(params)
    if not report.A1:
        raise NoSolution("only washout can occur: f'(0) T_bar <= r T")
    T, Tb = params.T, params.T_bar
    evals = []
    if report.C_x0max:
        try:
            evals.append(evaluate_structure(params, ConstantMax(), opts.step))
        except Infeasible:
            pass

    eps = 1e-9
    memo: dict = {}
    for z, v in _maximize_2d(
        lambda a, b, s: _bang_yield(params, a, b, s, memo), [(eps, Tb - eps), (Tb + eps, T - eps)], opts
    ):
        if v <= 0.0 or z[1] - z[0] > T - 1e-6:
            # an empty closed interval is the constant-maximum policy
            continue
        try:
            evals.append(evaluate_structure(params, BangBang(float(z[0]), float(z[1])), opts.step))
        except Infeasible:
            pass

    if report.C_sing:
        for z, v in _maximize_2d(
            lambda a, b, s: _singular_yield(params, a, b, s), [(eps, Tb - eps), (Tb, T - eps)], opts
        ):
            if v <= 0.0:
                continue
            try:
                evals.append(evaluate_structure(params, BangSingularBang(float(z[0]), float(z[1])), opts.step))
            except Infeasible:
                pass

    evals = [e for e in evals if e.yield_ > 0.0]
    if not evals:
        raise SolverStalled("no control structure admits a positive periodic orbit")
    sols = [_solution(params, e, opts.tolerances) for e in evals]
    best = _pick(sols, opts)
    return OptimalSolution(**{**best.__dict__, "candidates": tuple(sols)})


def classify(params: ReactorParams, options: Optional[SolverOptions] = None) -> str:
    """Family label of the optimal solution, ``NoSolution`` on any failure."""
    try:
        return solve(params, options).family
    except (NoSolution, SolverStalled):
        return NO_SOLUTION


# ---------------------------------------------------------------------------
# reference strategies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstantResult:
    u_hat: float
    x0: float
    yield_: float

    cumulated_flow: float


def constant_yield(params: ReactorParams, u: float, step: float = DEFAULT_STEP):
    """(x0, yield) of the periodic orbit under constant u; (0, 0) on washout."""
    policy = ControlPolicy.constant(params, u)
    try:
        x0 = periodic_state(params, policy, step)
    except NoPositiveFixedPoint:
        return 0.0, 0.0
    return x0, _run(params, x0, policy_pieces(params, policy), step)[1]


def best_constant(params: ReactorParams, step: float = DEFAULT_STEP, grid: int = 64) -> ConstantResult:
    """Best constant dilution rate over [0, u_max].

    Brackets the maximum on a uniform ``grid``-point scan, then refines by
    bounded scalar minimization inside the two neighbouring cells.
    """
    us = np.linspace(0.0, params.u_max, grid)
    ys = np.array([constant_yield(params, u, step)[1] for u in us])
    k = int(np.argmax(ys))
    if ys[k] <= 0.0:
        return ConstantResult(0.0, 0.0, 0.0, 0.0)
    lo = us[max(k - 1, 0)]
    hi = us[min(k + 1, grid - 1)]
    res = minimize_scalar(
        lambda u: -constant_yield(params, u, step)[1],
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-9},
    )
    u_hat = float(res.x)
    x0, y = constant_yield(params, u_hat, step)
    if y < ys[k]:
        u_hat = float(us[k])
        x0, y = constant_yield(params, u_hat, step)
    return ConstantResult(u_hat, x0, y, u_hat * params.T)


@dataclass(frozen=True)
class WindowResult:
    policy: ControlPolicy
    x0: float
    yield_: float
    trajectory: Optional[Trajectory]


def near_optimal_window(params: ReactorParams, u_tilde: float, step: float = DEFAULT_STEP) -> WindowResult:
    """Max-dilution window centred on T_bar with total flow ``u_tilde``.

    Raises:
        WindowOutOfRange: the window does not fit inside [0, T].
        NoPositiveFixedPoint: the window washes the reactor out.
    """
    half = u_tilde / (2.0 * params.u_max)
    if u_tilde < 0.0 or half > min(params.T_bar, params.T - params.T_bar) + 1e-15:
        raise WindowOutOfRange(f"u_tilde={u_tilde} does not fit: half-width {half} exceeds the phases")
    if u_tilde == 0.0:
        policy = ControlPolicy.closed(params)
        x0 = periodic_state(params, policy, step)
        return WindowResult(policy, x0, 0.0, integrate(params, x0, policy, step))
    t_on = max(params.T_bar - half, 0.0)
    t_off = min(params.T_bar + half, params.T)
    policy = ControlPolicy.window(params, t_on, t_off)
    x0 = periodic_state(params, policy, step)
    traj = integrate(params, x0, policy, step)
    return WindowResult(policy, x0, traj.yield_, traj)
