"""Forced scalar dynamics dx/dt = f(x) h(t) - r x - u x under piecewise control.

Light segments are integrated with fixed-step RK4 (compiled kernels);
dark segments are linear and use exact exponentials; singular segments hold
x = x_sigma with u = u_sigma. Every segment boundary and the light/dark
switch T_bar is hit exactly, so no discontinuity ever falls inside a step.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from . import _kernels
from .errors import (
    AssumptionViolated,
    NoPositiveFixedPoint,
    PolicyInvalid,
    StateNegative,
)
from .growth import BeerLambertMonod, GrowthModel, check_assumptions, equilibrium, u_sigma, x_sigma

DEFAULT_STEP = 1e-4
SWEEP_STEP = 1e-3
SINGULAR_TOL = 1e-6  # relative mismatch to x_sigma allowed at singular entry


@dataclass(frozen=True)
class ReactorParams:
    """Growth law plus reactor operating constants.

    Attributes:
        model: concave growth law f.
        r: respiration plus mortality rate [1/day].
        T: period length [day].
        T_bar: light-phase length [day].
        u_max: upper bound on the dilution rate [1/day].
    """

    model: GrowthModel = field(default_factory=BeerLambertMonod)
    r: float = 0.07
    T: float = 1.0
    T_bar: float = 0.5
    u_max: float = 2.0

    def __post_init__(self):
        if not self.r >= 0.0:
            raise ValueError(f"r must be non-negative, got {self.r}")
        if not 0.0 < self.T_bar < self.T:
            raise ValueError(f"need 0 < T_bar < T, got T_bar={self.T_bar}, T={self.T}")
        if not self.u_max > 0.0:
            raise ValueError(f"u_max must be positive, got {self.u_max}")

    @property
    def x_sigma(self) -> float:
        return x_sigma(self.model, self.r)

    @property
    def u_sigma(self) -> float:
        return u_sigma(self.model, self.r)

    def light(self, t: float) -> int:
        return 1 if (t % self.T) < self.T_bar else 0


class Mode(str, enum.Enum):
    CLOSED = "closed"
    MAX = "max"
    SINGULAR = "singular"
    CONST = "const"


@dataclass(frozen=True)
class Segment:
    t_start: float
    t_end: float
    mode: Mode
    value: Optional[float] = None  # only for Mode.CONST

    def control(self, params: ReactorParams) -> float:
        if self.mode is Mode.CLOSED:
            return 0.0
        if self.mode is Mode.MAX:
            return params.u_max
        if self.mode is Mode.SINGULAR:
            return params.u_sigma
        return float(self.value)


@dataclass(frozen=True)
class ControlPolicy:
    """Ordered control segments partitioning [0, T]."""

    segments: tuple

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))

    @classmethod
    def constant(cls, params: ReactorParams, u: float) -> "ControlPolicy":
        return cls((Segment(0.0, params.T, Mode.CONST, float(u)),))

    @classmethod
    def closed(cls, params: ReactorParams) -> "ControlPolicy":
        return cls((Segment(0.0, params.T, Mode.CLOSED),))

    @classmethod
    def maximal(cls, params: ReactorParams) -> "ControlPolicy":
        return cls((Segment(0.0, params.T, Mode.MAX),))

    @classmethod
    def window(cls, params: ReactorParams, t_on: float, t_off: float) -> "ControlPolicy":
        """Closed except for u = u_max on [t_on, t_off]; empty pieces dropped."""
        pieces = [
            Segment(0.0, t_on, Mode.CLOSED),
            Segment(t_on, t_off, Mode.MAX),
            Segment(t_off, params.T, Mode.CLOSED),
        ]
        return cls(tuple(s for s in pieces if s.t_end > s.t_start))

    def validate(self, params: ReactorParams) -> None:
        segs = self.segments
        if not segs:
            raise PolicyInvalid("policy has no segments")
        tol = 1e-12 * params.T
        if abs(segs[0].t_start) > tol:
            raise PolicyInvalid(f"first segment starts at {segs[0].t_start}, not 0")
        if abs(segs[-1].t_end - params.T) > tol:
            raise PolicyInvalid(f"last segment ends at {segs[-1].t_end}, not T={params.T}")
        for prev, nxt in zip(segs, segs[1:]):
            if abs(prev.t_end - nxt.t_start) > tol:
                raise PolicyInvalid(f"gap or overlap between {prev} and {nxt}")
        for s in segs:
            if not s.t_end > s.t_start:
                raise PolicyInvalid(f"empty or reversed segment {s}")
            if s.mode is Mode.SINGULAR and s.t_end > params.T_bar + tol:
                raise PolicyInvalid(f"singular segment {s} extends into the dark phase")
            if s.mode is Mode.CONST:
                if s.value is None or not 0.0 <= s.value <= params.u_max:
                    raise PolicyInvalid(f"constant control {s.value} outside [0, {params.u_max}]")

    def control_at(self, params: ReactorParams, t: float) -> float:
        for s in self.segments:
            if s.t_start <= t < s.t_end:
                return s.control(params)
        return self.segments[-1].control(params)

    def switch_times(self) -> list:
        return [s.t_start for s in self.segments[1:]]


@dataclass(frozen=True)
class Piece:
    """A policy segment clipped to a single light or dark phase."""

    t0: float
    t1: float
    mode: Mode
    u: float
    light: bool


def policy_pieces(params: ReactorParams, policy: ControlPolicy) -> list:
    """Validate ``policy`` and split its segments at T_bar."""
    policy.validate(params)
    out = []
    tb = params.T_bar
    for s in policy.segments:
        u = s.control(params)
        t0, t1 = s.t_start, s.t_end
        if t0 < tb < t1:
            out.append(Piece(t0, tb, s.mode, u, True))
            out.append(Piece(tb, t1, s.mode, u, False))
        else:
            out.append(Piece(t0, t1, s.mode, u, t1 <= tb))
    return out


@dataclass(frozen=True)
class Trajectory:
    """Sampled state path over one period.

    Samples are repeated at every segment boundary (left and right limits of
    u), so ``t`` is non-decreasing rather than strictly increasing.
    """

    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    h: np.ndarray
    cumulative_yield: np.ndarray
    yield_: float
    cumulated_flow: float
    policy: ControlPolicy
    step: float
    piece_starts: tuple  # x at the start of each piece, for the adjoint pass

    @property
    def x0(self) -> float:
        return float(self.x[0])

    @property
    def x_end(self) -> float:
        return float(self.x[-1])

    def x_at(self, t: float) -> float:
        """State at time ``t``; right limit at breakpoints is irrelevant since x is continuous."""
        return float(np.interp(t, self.t, self.x))


def _dark_piece(x0: float, rate: float, u: float, d: float):
    x1 = x0 * math.exp(-rate * d)
    if rate > 0.0:
        y = u * x0 * (1.0 - math.exp(-rate * d)) / rate
    else:
        y = u * x0 * d
    return x1, y


def _run(params: ReactorParams, x0: float, pieces: Sequence[Piece], step: float):
    """Terminal state, yield and flow without sampling (fast path)."""
    model = params.model
    kind, coef = model.kind, model.coefficients
    x, total = x0, 0.0
    xs = None
    for pc in pieces:
        d = pc.t1 - pc.t0
        if pc.mode is Mode.SINGULAR:
            if xs is None:
                xs = params.x_sigma
            if abs(x - xs) > SINGULAR_TOL * xs:
                raise PolicyInvalid(f"singular arc at t={pc.t0} entered with x={x}, x_sigma={xs}")
            x = xs
            total += pc.u * xs * d
        elif pc.light:
            x, y, ok = _kernels.day_advance(kind, coef, params.r, pc.u, x, d, step)
            if not ok:
                raise StateNegative(f"x={x} < 0 during [{pc.t0}, {pc.t1}]")
            total += y
        else:
            x, y = _dark_piece(x, params.r + pc.u, pc.u, d)
            total += y
    flow = sum(pc.u * (pc.t1 - pc.t0) for pc in pieces)
    return x, total, flow


def integrate(
    params: ReactorParams,
    x0: float,
    policy: ControlPolicy,
    step: float = DEFAULT_STEP,
) -> Trajectory:
    """Integrate one period from ``x0`` under ``policy``.

    Raises:
        PolicyInvalid: malformed policy or singular arc entered away from x_sigma.
        StateNegative: the state went below -1e-12.
    """
    if not x0 >= 0.0:
        raise ValueError(f"x0 must be non-negative, got {x0}")
    if not step > 0.0:
        raise ValueError(f"step must be positive, got {step}")
    pieces = policy_pieces(params, policy)
    model = params.model
    kind, coef = model.kind, model.coefficients
    ts, xs_, us, hs, ys = [], [], [], [], []
    starts = []
    x, acc = float(x0), 0.0
    xsig = None
    for pc in pieces:
        starts.append(x)
        d = pc.t1 - pc.t0
        if pc.mode is Mode.SINGULAR:
            if xsig is None:
                xsig = params.x_sigma
            if abs(x - xsig) > SINGULAR_TOL * xsig:
                raise PolicyInvalid(f"singular arc at t={pc.t0} entered with x={x}, x_sigma={xsig}")
            n = max(1, int(math.ceil(d / step)))
            rel = np.linspace(0.0, d, n + 1)
            seg_x = np.full(n + 1, xsig)
            seg_y = pc.u * xsig * rel
        elif pc.light:
            rel, seg_x, seg_y = _kernels.day_samples(kind, coef, params.r, pc.u, x, d, step)
            if seg_x.min() < _kernels.NEG_TOL:
                raise StateNegative(f"x < 0 during [{pc.t0}, {pc.t1}]")
        else:
            n = max(1, int(math.ceil(d / step)))
            rel = np.linspace(0.0, d, n + 1)
            rate = params.r + pc.u
            seg_x = x * np.exp(-rate * rel)
            if rate > 0.0:
                seg_y = pc.u * x * (1.0 - np.exp(-rate * rel)) / rate
            else:
                seg_y = pc.u * x * rel
        ts.append(pc.t0 + rel)
        xs_.append(seg_x)
        us.append(np.full(rel.size, pc.u))
        hs.append(np.full(rel.size, 1 if pc.light else 0, dtype=np.int8))
        ys.append(acc + seg_y)
        x = float(seg_x[-1])
        acc += float(seg_y[-1])
    flow = sum(pc.u * (pc.t1 - pc.t0) for pc in pieces)
    t = np.concatenate(ts)
    # pin breakpoints exactly
    t[-1] = params.T
    return Trajectory(
        t=t,
        x=np.concatenate(xs_),
        u=np.concatenate(us),
        h=np.concatenate(hs),
        cumulative_yield=np.concatenate(ys),
        yield_=acc,
        cumulated_flow=flow,
        policy=policy,
        step=step,
        piece_starts=tuple(starts),
    )


def poincare_map(
    params: ReactorParams,
    x0: float,
    policy: ControlPolicy,
    step: float = DEFAULT_STEP,
) -> float:
    """x(T) reached from x(0) = x0 after one period under ``policy``."""
    if not x0 >= 0.0:
        raise ValueError(f"x0 must be non-negative, got {x0}")
    pieces = policy_pieces(params, policy)
    return _run(params, x0, pieces, step)[0]


def _terminal_sens(params: ReactorParams, x0: float, pieces: Sequence[Piece], step: float):
    """x(T) and dx(T)/dx(0) along ``pieces``; singular pieces reset the sensitivity."""
    model = params.model
    kind, coef = model.kind, model.coefficients
    x, s = x0, 1.0
    for pc in pieces:
        d = pc.t1 - pc.t0
        if pc.mode is Mode.SINGULAR:
            x, s = params.x_sigma, 0.0
        elif pc.light:
            x, s, ok = _kernels.day_advance_sens(kind, coef, params.r, pc.u, x, s, d, step)
            if not ok:
                raise StateNegative(f"x={x} < 0 during [{pc.t0}, {pc.t1}]")
        else:
            g = math.exp(-(params.r + pc.u) * d)
            x, s = x * g, s * g
    return x, s


@lru_cache(maxsize=256)
def _closed_equilibrium(params: ReactorParams) -> float:
    return equilibrium(params.model, params.r, 0.0)


def _fixed_point(params: ReactorParams, pieces: Sequence[Piece], step: float, guess: Optional[float] = None) -> float:
    """Positive root of x(T; x0) - x0 on [1e-9 xbar0, xbar0].

    The Poincare map of concave scalar dynamics is increasing with x(T)/x0
    decreasing, so the positive root is unique whenever the map exceeds the
    identity near 0. Newton steps on the sensitivity are kept inside a
    shrinking bracket and replaced by bisection when they leave it.
    """
    terminal = lambda z: _terminal_sens(params, z, pieces, step)  # noqa: E731
    hi = _closed_equilibrium(params)
    if not math.isfinite(hi):
        hi = 1.0
        for _ in range(200):
            if terminal(hi)[0] < hi:
                break
            hi *= 2.0
        else:
            raise NoPositiveFixedPoint("biomass grows without bound")
    if hi <= 0.0:
        raise NoPositiveFixedPoint("the only equilibrium is washout")
    lo = 1e-9 * hi
    if terminal(lo)[0] - lo <= 0.0:
        raise NoPositiveFixedPoint("x(T) < x(0) for every x(0) > 0")
    x = guess if guess is not None and lo < guess < hi else hi
    for _ in range(200):
        fx, dfx = terminal(x)
        g = fx - x
        slope = dfx - 1.0
        if abs(g) <= 1e-10 * x and slope < 0.0:
            # quadratic convergence: one more step lands at rounding level
            return x - g / slope
        if g > 0.0:
            lo = x
        else:
            hi = x
        if hi - lo <= 1e-14 * hi:
            return 0.5 * (lo + hi)
        nxt = x - g / slope if slope != 0.0 else 0.5 * (lo + hi)
        if not lo < nxt < hi:
            nxt = 0.5 * (lo + hi)
        x = nxt
    return x


def periodic_state(
    params: ReactorParams,
    policy: ControlPolicy,
    step: float = DEFAULT_STEP,
    guess: Optional[float] = None,
) -> float:
    """Positive fixed point of the Poincare map of ``policy``.

    ``guess`` (optional) warm-starts the search, e.g. from a neighbouring policy.

    Raises:
        NoPositiveFixedPoint: the policy washes the reactor out.
    """
    return _fixed_point(params, policy_pieces(params, policy), step, guess)


@dataclass(frozen=True)
class FeasibleInterval:
    x0_min: Optional[float]
    x0_max: float


def feasible_interval(params: ReactorParams, step: float = DEFAULT_STEP) -> FeasibleInterval:
    """Range of periodic initial states [x0_min, x0_max].

    x0_max is the closed-reactor periodic state; x0_min the maximal-dilution
    periodic state, absent when f'(0) T_bar <= (r + u_max) T.
    """
    report = check_assumptions(params)
    if not report.A1:
        raise AssumptionViolated(
            f"f'(0) T_bar = {report.f_prime_0 * params.T_bar:.6g} <= r T = {params.r * params.T:.6g}"
        )
    x_max = periodic_state(params, ControlPolicy.closed(params), step)
    x_min = None
    if report.C_x0max:
        x_min = periodic_state(params, ControlPolicy.maximal(params), step)
    return FeasibleInterval(x_min, x_max)


def closed_orbit_residual(params: ReactorParams, x0: float) -> float:
    """Residual of the integral characterization of the closed-reactor orbit.

    For u = 0 the periodic x0 satisfies
    int_{x0}^{x0 exp(r (T - T_bar))} dxi / (f(xi) - r xi) = T_bar.
    Evaluated by adaptive quadrature; independent of the RK4 path.
    """
    from scipy.integrate import quad

    model, r = params.model, params.r
    upper = x0 * math.exp(r * (params.T - params.T_bar))
    val, _ = quad(lambda s: 1.0 / (model.f(s) - r * s), x0, upper, epsabs=1e-14, epsrel=1e-13, limit=200)
    return val - params.T_bar


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """CSV with columns t, x, u, h, cumulative_yield at 12 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "u", "h", "cumulative_yield"])
        for t, x, u, h, y in zip(traj.t, traj.x, traj.u, traj.h, traj.cumulative_yield):
            w.writerow([f"{t:.12g}", f"{x:.12g}", f"{u:.12g}", int(h), f"{y:.12g}"])


# ---------------------------------------------------------------------------
# two-state substrate/biomass model, used only as a reduction oracle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FullModelState:
    """Volumic state of the substrate/biomass model and its Monod constants.

    Attributes:
        S: substrate concentration.
        X: volumic biomass; the surfacic density is X * L.
        L: reactor depth [m].
        S_in: substrate concentration of the inflow.
        k: substrate consumed per unit of biomass produced.
        K_S: substrate half-saturation constant.
    """

    S: float
    X: float
    L: float
    S_in: float
    k: float = 1.0
    K_S: float = 1.0

    def __post_init__(self):
        if self.S < 0.0 or self.X < 0.0:
            raise ValueError("S and X must be non-negative")
        if not self.L > 0.0:
            raise ValueError("L must be positive")


@dataclass(frozen=True)
class FullModelTrajectory:
    t: np.ndarray
    S: np.ndarray
    X: np.ndarray
    L: float

    @property
    def x(self) -> np.ndarray:
        return self.X * self.L


def _light_factor(model: BeerLambertMonod, I0: float, xs: float) -> float:
    """ln((I0 + K_I) / (I0 exp(-a x) + K_I)) / a, i.e. depth-integrated light response."""
    if I0 == 0.0:
        return 0.0
    return math.log((I0 + model.K_I) / (I0 * math.exp(-model.a * xs) + model.K_I)) / model.a


def full_model_simulate(
    state0: FullModelState,
    params: ReactorParams,
    policy: ControlPolicy,
    step: float = DEFAULT_STEP,
) -> FullModelTrajectory:
    """Integrate the Monod substrate/biomass model with averaged Beer-Lambert light.

    The growth term mu_bar S/(S+K_S) * (1/(a X L)) ln(...) X is written with
    the X cancelled so it stays finite at X = 0. Solved piecewise with an
    adaptive high-order scheme, sampled every ``step``.
    """
    model = params.model
    if not isinstance(model, BeerLambertMonod):
        raise TypeError("the two-state model requires a BeerLambertMonod growth law")
    pieces = policy_pieces(params, policy)
    L = state0.L
    r = params.r
    usig = None

    def rhs_factory(u: float, light: bool):
        I0 = model.I0_bar if light else 0.0

        def rhs(_t, y):
            S, X = y
            mu_s = model.mu_bar * max(S, 0.0) / (max(S, 0.0) + state0.K_S)
            growth = mu_s * _light_factor(model, I0, X * L) / L
            return [u * (state0.S_in - S) - state0.k * growth, growth - r * X - u * X]

        return rhs

    ts, Ss, Xs = [], [], []
    y = [state0.S, state0.X]
    for pc in pieces:
        u = pc.u
        if pc.mode is Mode.SINGULAR:
            if usig is None:
                usig = params.u_sigma
            u = usig
        d = pc.t1 - pc.t0
        n = max(1, int(math.ceil(d / step)))
        t_eval = np.linspace(pc.t0, pc.t1, n + 1)
        sol = solve_ivp(
            rhs_factory(u, pc.light),
            (pc.t0, pc.t1),
            y,
            method="DOP853",
            t_eval=t_eval,
            rtol=1e-11,
            atol=1e-12,
        )
        if not sol.success:
            raise StateNegative(f"full model integration failed: {sol.message}")
        ts.append(sol.t)
        Ss.append(sol.y[0])
        Xs.append(sol.y[1])
        y = [sol.y[0, -1], sol.y[1, -1]]
    return FullModelTrajectory(np.concatenate(ts), np.concatenate(Ss), np.concatenate(Xs), L)
