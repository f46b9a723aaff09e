"""Parameter sweeps: (r, u_max) family map, switch-time contours, flow
comparisons and the seasonal fishery scenario.

Sweeps emit plot-ready arrays and CSV files; nothing is rendered here.
Cells are independent and addressed by index, so running them in a process
pool (``PBRCONTROL_WORKERS``) gives the same output as a serial run.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .dynamics import SWEEP_STEP, ControlPolicy, ReactorParams, Trajectory, integrate, periodic_state
from .errors import NoPositiveFixedPoint, PBRError, WindowOutOfRange
from .growth import LogisticGrowth, NoInteriorOptimum, u_sigma
from .solver import (
    NO_SOLUTION,
    BangBang,
    ConstantResult,
    Infeasible,
    OptimalSolution,
    SolverOptions,
    best_constant,
    classify,
    constant_yield,
    evaluate_structure,
    near_optimal_window,
    solve,
)

logger = logging.getLogger(__name__)

WORKERS_ENV = "PBRCONTROL_WORKERS"
OVERLAY_POINTS = 200


def _workers(workers: Optional[int]) -> int:
    if workers is not None:
        return max(1, int(workers))
    return max(1, int(os.environ.get(WORKERS_ENV, "1")))


def _map(fn, items, workers: int):
    if workers <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


def _fmt(v) -> str:
    return f"{v:.12g}" if isinstance(v, float) else str(v)


# ---------------------------------------------------------------------------
# bifurcation map
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BifurcationGrid:
    """Family label per (r, u_max) cell; ``labels[i, j]`` is r_values[i], u_bar_values[j]."""

    r_values: np.ndarray
    u_bar_values: np.ndarray
    labels: np.ndarray
    overlay_r: np.ndarray
    overlay_u_sigma: np.ndarray  # u_sigma(r), nan where f'(0) <= r
    overlay_bigubar: np.ndarray  # f'(0) - r
    r_washout: float  # f'(0) T_bar / T

    def write(self, prefix) -> None:
        """``<prefix>_grid.csv`` (long form), ``<prefix>_matrix.csv``, ``<prefix>_overlay.csv``."""
        prefix = str(prefix)
        with open(prefix + "_grid.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["row", "col", "r", "u_bar", "label"])
            for i, r in enumerate(self.r_values):
                for j, ub in enumerate(self.u_bar_values):
                    w.writerow([i, j, _fmt(float(r)), _fmt(float(ub)), self.labels[i, j]])
        with open(prefix + "_matrix.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r\\u_bar"] + [_fmt(float(u)) for u in self.u_bar_values])
            for i, r in enumerate(self.r_values):
                w.writerow([_fmt(float(r))] + list(self.labels[i]))
        with open(prefix + "_overlay.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "u_sigma", "f_prime0_minus_r", "r_washout"])
            for r, us, ub in zip(self.overlay_r, self.overlay_u_sigma, self.overlay_bigubar):
                w.writerow([_fmt(float(r)), _fmt(float(us)), _fmt(float(ub)), _fmt(self.r_washout)])


def _classify_cell(args):
    params, options = args
    try:
        return classify(params, options)
    except PBRError as exc:  # never abort a sweep on one cell
        logger.warning("cell r=%g u_max=%g failed: %s", params.r, params.u_max, exc)
        return NO_SOLUTION


def overlay_curves(base_params: ReactorParams, r_values: np.ndarray):
    model = base_params.model
    fp0 = model.f_prime(0.0)
    us = []
    for r in r_values:
        try:
            us.append(u_sigma(model, float(r)))
        except NoInteriorOptimum:
            us.append(math.nan)
    return np.asarray(us), fp0 - np.asarray(r_values)


def bifurcation_sweep(
    base_params: ReactorParams,
    r_values: Sequence[float],
    u_bar_values: Sequence[float],
    options: Optional[SolverOptions] = None,
    workers: Optional[int] = None,
) -> BifurcationGrid:
    """Classify the optimal family on every (r, u_max) cell."""
    r_values = np.asarray(r_values, dtype=float)
    u_bar_values = np.asarray(u_bar_values, dtype=float)
    if r_values.size < 2 or u_bar_values.size < 2:
        raise ValueError("need at least two values per axis")
    if np.any(r_values <= 0.0) or np.any(u_bar_values <= 0.0):
        raise ValueError("sweep ranges must be positive")
    opts = options or SolverOptions.sweep()
    jobs = [
        (dataclasses.replace(base_params, r=float(r), u_max=float(ub)), opts)
        for r in r_values
        for ub in u_bar_values
    ]
    flat = _map(_classify_cell, jobs, _workers(workers))
    labels = np.array(flat, dtype=object).reshape(r_values.size, u_bar_values.size)
    overlay_r = np.linspace(r_values.min(), r_values.max(), OVERLAY_POINTS)
    us, big = overlay_curves(base_params, overlay_r)
    fp0 = base_params.model.f_prime(0.0)
    return BifurcationGrid(
        r_values, u_bar_values, labels, overlay_r, us, big, fp0 * base_params.T_bar / base_params.T
    )


# ---------------------------------------------------------------------------
# switch-time contour
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ContourGrid:
    """Yield of the bang-bang policy per (t1, t2) cell; 0 where it washes out."""

    t1_values: np.ndarray
    t2_values: np.ndarray
    yields: np.ndarray  # yields[i, j] at t1_values[i], t2_values[j]

    def argmax(self):
        i, j = np.unravel_index(int(np.argmax(self.yields)), self.yields.shape)
        return float(self.t1_values[i]), float(self.t2_values[j]), float(self.yields[i, j])

    def write(self, prefix) -> None:
        prefix = str(prefix)
        with open(prefix + "_grid.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["row", "col", "t1", "t2", "yield"])
            for i, t1 in enumerate(self.t1_values):
                for j, t2 in enumerate(self.t2_values):
                    w.writerow([i, j, _fmt(float(t1)), _fmt(float(t2)), _fmt(float(self.yields[i, j]))])
        with open(prefix + "_matrix.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t1\\t2"] + [_fmt(float(t)) for t in self.t2_values])
            for i, t1 in enumerate(self.t1_values):
                w.writerow([_fmt(float(t1))] + [_fmt(float(y)) for y in self.yields[i]])


def _contour_cell(args):
    params, t1, t2, step = args
    try:
        return evaluate_structure(params, BangBang(t1, t2), step).yield_
    except Infeasible:
        return 0.0


def productivity_contour(
    params: ReactorParams,
    t1_values: Sequence[float],
    t2_values: Sequence[float],
    step: float = SWEEP_STEP,
    workers: Optional[int] = None,
) -> ContourGrid:
    t1_values = np.asarray(t1_values, dtype=float)
    t2_values = np.asarray(t2_values, dtype=float)
    if np.any(t1_values <= 0.0) or np.any(t1_values > params.T_bar):
        raise ValueError("t1 values must lie in (0, T_bar]")
    if np.any(t2_values < params.T_bar) or np.any(t2_values >= params.T):
        raise ValueError("t2 values must lie in [T_bar, T)")
    jobs = [(params, float(a), float(b), step) for a in t1_values for b in t2_values]
    flat = _map(_contour_cell, jobs, _workers(workers))
    return ContourGrid(t1_values, t2_values, np.asarray(flat).reshape(t1_values.size, t2_values.size))


# ---------------------------------------------------------------------------
# flow-matched comparison
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FlowRow:
    u_tilde: float
    yield_window: float
    yield_constant: float


def flow_sweep(params: ReactorParams, u_tilde_values: Sequence[float], step: float = SWEEP_STEP) -> list:
    """Window strategy versus constant dilution at equal total flow per period."""
    rows = []
    for ut in u_tilde_values:
        ut = float(ut)
        try:
            yw = near_optimal_window(params, ut, step).yield_
        except NoPositiveFixedPoint:
            yw = 0.0
        u_const = ut / params.T
        yc = constant_yield(params, u_const, step)[1] if u_const <= params.u_max else math.nan
        rows.append(FlowRow(ut, yw, yc))
    return rows


def admissible_flows(params: ReactorParams, count: int = 41, step: float = SWEEP_STEP) -> np.ndarray:
    """``count`` flows from 0 up to the largest window that avoids washout."""
    hi = 2.0 * params.u_max * min(params.T_bar, params.T - params.T_bar)

    def alive(ut):
        try:
            near_optimal_window(params, ut, step)
            return True
        except (NoPositiveFixedPoint, WindowOutOfRange):
            return False

    if not alive(hi):
        lo = 0.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if alive(mid):
                lo = mid
            else:
                hi = mid
        hi = lo
    return np.linspace(0.0, hi, count)


def write_flow_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["u_tilde", "yield_window", "yield_constant"])
        for row in rows:
            w.writerow([_fmt(row.u_tilde), _fmt(row.yield_window), _fmt(row.yield_constant)])


# ---------------------------------------------------------------------------
# seasonal fishery
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FishingReport:
    params: ReactorParams
    optimal: OptimalSolution
    constant: ConstantResult
    constant_trajectory: Optional[Trajectory]
    unfished_x0: float
    unfished_trajectory: Trajectory

    @property
    def improvement(self) -> float:
        """Relative gain of the optimal catch over the best constant effort."""
        return self.optimal.yield_ / self.constant.yield_ - 1.0

    def summary(self) -> str:
        K = self.params.model.K
        lines = [
            f"family={self.optimal.family}",
            "switch_times=" + ";".join(f"{t:.12g}" for t in self.optimal.switch_times()),
            f"optimal_yield={self.optimal.yield_:.12g}",
            f"constant_u={self.constant.u_hat:.12g}",
            f"constant_yield={self.constant.yield_:.12g}",
            f"improvement={self.improvement:.12g}",
            f"unfished_x0={self.unfished_x0:.12g}",
            f"unfished_max={float(self.unfished_trajectory.x.max()):.12g}",
            f"half_capacity={K / 2:.12g}",
            f"pmp_verdict={self.optimal.pmp.verdict}",
        ]
        return "\n".join(lines) + "\n"


def fishing_params(alpha=6.0, K=10.0, r=1.0, T_bar=0.2, T=1.0, u_max=2.0) -> ReactorParams:
    return ReactorParams(LogisticGrowth(alpha, K, r), r=r, T=T, T_bar=T_bar, u_max=u_max)


def fishing_scenario(
    alpha: float = 6.0,
    K: float = 10.0,
    r: float = 1.0,
    T_bar: float = 0.2,
    T: float = 1.0,
    u_max: float = 2.0,
    options: Optional[SolverOptions] = None,
) -> FishingReport:
    """Logistic stock with a growing season of length T_bar and mortality r all year."""
    params = fishing_params(alpha, K, r, T_bar, T, u_max)
    opts = options or SolverOptions()
    optimal = solve(params, opts)
    const = best_constant(params, opts.step)
    const_traj = None
    if const.yield_ > 0.0:
        const_traj = integrate(params, const.x0, ControlPolicy.constant(params, const.u_hat), opts.step)
    closed = ControlPolicy.closed(params)
    x0 = periodic_state(params, closed, opts.step)
    return FishingReport(params, optimal, const, const_traj, x0, integrate(params, x0, closed, opts.step))
