"""Periodic costate and numerical checks of the maximum-principle conditions.

With H = lam (f(x) h - r x - u x) + u x the costate obeys

    lam' = lam (-f'(x) h + r + u) - u,    lam(T) = lam(0).

The equation is linear in lam, so lam(t) = Phi(t) lam0 + p(t) where Phi is
the homogeneous solution (Phi(0) = 1) and p the particular one (p(0) = 0).
Periodicity then fixes lam0 = p(T) / (1 - Phi(T)) without any shooting.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .dynamics import Mode, ReactorParams, Trajectory, policy_pieces
from .errors import DegenerateMonodromy

MONODROMY_TOL = 1e-10


@dataclass(frozen=True)
class Tolerances:
    """Acceptance thresholds for ``verify``; calibrated for RK4 at step 1e-4."""

    switch_lambda: float = 1e-3
    hamiltonian_drift: float = 1e-4
    state: float = 1e-6  # relative, for comparisons against x_sigma


@dataclass(frozen=True)
class AdjointTrajectory:
    t: np.ndarray
    lam: np.ndarray
    lambda0: float
    monodromy: float  # Phi(T)
    particular_end: float  # p(T)

    def at(self, t: float) -> float:
        return float(np.interp(t, self.t, self.lam))


def _dark_adjoint(phi: float, p: float, a: float, u: float, rel: np.ndarray):
    g = np.exp(a * rel)
    if a != 0.0:
        ps = (p - u / a) * g + u / a
    else:
        ps = p - u * rel
    return phi * g, ps


def adjoint_periodic(params: ReactorParams, traj: Trajectory) -> AdjointTrajectory:
    """Periodic costate along a state trajectory, sampled on ``traj.t``.

    Raises:
        DegenerateMonodromy: |1 - Phi(T)| < 1e-10, or the control vanishes
            identically so the only periodic costate is lam = 0.
    """
    model = params.model
    kind, coef = model.kind, model.coefficients
    pieces = policy_pieces(params, traj.policy)
    r = params.r
    phis, ps = [], []
    phi, p = 1.0, 0.0
    for pc, x_start in zip(pieces, traj.piece_starts):
        d = pc.t1 - pc.t0
        if pc.mode is Mode.SINGULAR or not pc.light:
            n = max(1, int(math.ceil(d / traj.step)))
            rel = np.linspace(0.0, d, n + 1)
            if pc.mode is Mode.SINGULAR:
                a = -model.f_prime(params.x_sigma) + r + pc.u
            else:
                a = r + pc.u
            seg_phi, seg_p = _dark_adjoint(phi, p, a, pc.u, rel)
        else:
            _, _, seg_phi, seg_p = _kernels.day_adjoint(kind, coef, r, pc.u, x_start, phi, p, d, traj.step)
        phis.append(seg_phi)
        ps.append(seg_p)
        phi, p = float(seg_phi[-1]), float(seg_p[-1])
    if all(pc.u == 0.0 for pc in pieces):
        raise DegenerateMonodromy("u = 0 throughout: only the trivial costate lam = 0 is periodic")
    if abs(1.0 - phi) < MONODROMY_TOL:
        raise DegenerateMonodromy(f"Phi(T) = {phi!r} is 1 to within {MONODROMY_TOL}")
    lam0 = p / (1.0 - phi)
    lam = np.concatenate(phis) * lam0 + np.concatenate(ps)
    return AdjointTrajectory(traj.t, lam, lam0, phi, p)


def hamiltonian(params: ReactorParams, x, lam, u, h):
    """H = lam (f(x) h - r x - u x) + u x; vectorized over numpy inputs."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0):
        raise ValueError("x must be non-negative")
    fx = np.vectorize(params.model.f, otypes=[float])(x) if x.ndim else params.model.f(float(x))
    fx = np.where(x == 0.0, 0.0, fx)
    out = lam * (fx * h - params.r * x - u * x) + u * x
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class PmpReport:
    """Outcome of the necessary-condition checks on one candidate.

    ``failures`` names every violated condition; the verdict is pass iff it
    is empty.
    """

    switch_times: tuple
    switch_lambda_errors: tuple
    hamiltonian_drift_day: float
    hamiltonian_drift_night: float
    sign_consistency: tuple
    kelley_ok: bool
    lambda0: float
    failures: tuple = field(default=())
    tolerances: Tolerances = field(default_factory=Tolerances)

    @property
    def passed(self) -> bool:
        return not self.failures

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def as_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "failures": ";".join(self.failures),
            "lambda0": self.lambda0,
            "switch_times": ";".join(f"{t:.12g}" for t in self.switch_times),
            "switch_lambda_errors": ";".join(f"{e:.12g}" for e in self.switch_lambda_errors),
            "max_switch_lambda_error": max(self.switch_lambda_errors, default=0.0),
            "hamiltonian_drift_day": self.hamiltonian_drift_day,
            "hamiltonian_drift_night": self.hamiltonian_drift_night,
            "sign_consistency": ";".join("1" if s else "0" for s in self.sign_consistency),
            "kelley_ok": self.kelley_ok,
            "tol_switch_lambda": self.tolerances.switch_lambda,
            "tol_hamiltonian_drift": self.tolerances.hamiltonian_drift,
        }

    def to_text(self) -> str:
        lines = []
        for k, v in self.as_dict().items():
            if isinstance(v, float):
                v = f"{v:.12g}"
            lines.append(f"{k}={v}")
        return "\n".join(lines) + "\n"

    def to_csv(self, header: bool = True) -> str:
        d = self.as_dict()
        buf = io.StringIO()
        w = csv.writer(buf)
        if header:
            w.writerow(d.keys())
        w.writerow(f"{v:.12g}" if isinstance(v, float) else v for v in d.values())
        return buf.getvalue()


def _phase_drift(H: np.ndarray, scale: float) -> float:
    """Spread of H over one phase relative to the largest |H| of the period.

    Normalizing per phase would blow up when H is near zero all night.
    """
    if H.size == 0:
        return 0.0
    return float((H.max() - H.min()) / max(scale, 1e-12))


def verify(params: ReactorParams, candidate, tolerances: Tolerances = Tolerances()) -> PmpReport:
    """Check the maximum-principle necessary conditions on a periodic candidate.

    ``candidate`` is an ``OptimalSolution`` or a bare ``Trajectory``. Never
    raises on a well-formed candidate; violated conditions are listed in
    ``failures`` (a: lam = 1 at switches, b: sign rule, c: Hamiltonian
    constancy per phase, d: no 0 -> u_max switch at night, e: switch levels
    versus x_sigma, f: singular arc and Kelley condition, g: biomass lower
    at the closing switch than at the opening one).
    """
    traj: Trajectory = getattr(candidate, "trajectory", candidate)
    tol = tolerances
    failures = []
    model = params.model
    u_max = params.u_max
    xs = params.x_sigma
    x_tol = tol.state * xs
    try:
        adj = adjoint_periodic(params, traj)
    except DegenerateMonodromy as exc:
        return PmpReport((), (), math.nan, math.nan, (), False, math.nan, (f"adjoint: {exc}",), tol)
    lam = adj.lam
    segs = traj.policy.segments

    # (a) lam = 1 at every control switch
    switch_times = tuple(s.t_start for s in segs[1:])
    lam_err = tuple(abs(adj.at(t) - 1.0) for t in switch_times)
    for t, e in zip(switch_times, lam_err):
        if e > tol.switch_lambda:
            failures.append(f"a: |lam-1|={e:.3g} at switch t={t:.6g}")

    # (b) sign rule on each segment; endpoints excluded (lam = 1 there)
    signs = []
    for s in segs:
        u = s.control(params)
        mask = (traj.t > s.t_start) & (traj.t < s.t_end)
        seg_lam = lam[mask]
        if seg_lam.size == 0:
            signs.append(True)
            continue
        if s.mode is Mode.SINGULAR or 0.0 < u < u_max:
            ok = bool(np.all(np.abs(seg_lam - 1.0) <= tol.switch_lambda))
        elif u == 0.0:
            ok = bool(np.all(seg_lam >= 1.0 - tol.switch_lambda))
        else:
            ok = bool(np.all(seg_lam <= 1.0 + tol.switch_lambda))
        signs.append(ok)
        if not ok:
            failures.append(f"b: sign rule violated on [{s.t_start:.6g}, {s.t_end:.6g}] ({s.mode.value})")

    # (c) Hamiltonian constant on each phase separately
    H = hamiltonian(params, traj.x, lam, traj.u, traj.h)
    day = traj.t < params.T_bar
    night = traj.t > params.T_bar
    scale = float(np.max(np.abs(H)))
    drift_day = _phase_drift(H[day], scale)
    drift_night = _phase_drift(H[night], scale)
    if drift_day > tol.hamiltonian_drift:
        failures.append(f"c: day Hamiltonian drift {drift_day:.3g}")
    if drift_night > tol.hamiltonian_drift:
        failures.append(f"c: night Hamiltonian drift {drift_night:.3g}")

    # (d), (e) switch directions and levels
    for prev, nxt in zip(segs, segs[1:]):
        t = nxt.t_start
        up = nxt.control(params) > prev.control(params)
        x = traj.x_at(t)
        if up and prev.control(params) == 0.0 and nxt.control(params) == u_max and t >= params.T_bar:
            failures.append(f"d: 0 -> u_max switch in the dark at t={t:.6g}")
        if t < params.T_bar:
            if nxt.control(params) == u_max and up and x > xs + x_tol:
                failures.append(f"e: switch to u_max at x={x:.6g} > x_sigma")
            if nxt.control(params) == 0.0 and prev.control(params) == u_max and x < xs - x_tol:
                failures.append(f"e: switch u_max -> 0 at x={x:.6g} < x_sigma")

    # (f) singular arcs and the Kelley condition
    kelley_ok = -model.f_second(xs) >= 0.0
    for s in segs:
        if s.mode is Mode.SINGULAR:
            mask = (traj.t >= s.t_start) & (traj.t <= s.t_end)
            if np.any(np.abs(traj.x[mask] - xs) > x_tol):
                failures.append(f"f: singular arc leaves x_sigma on [{s.t_start:.6g}, {s.t_end:.6g}]")
            if not kelley_ok:
                failures.append("f: Kelley condition -f''(x_sigma) >= 0 violated")

    # (g) closing switch below opening switch
    max_segs = [i for i, s in enumerate(segs) if s.control(params) == u_max]
    if max_segs and len(segs) > 1:
        s_open = segs[max_segs[0]]
        s_close = segs[max_segs[-1]]
        if s_open.t_start > 0.0 and s_close.t_end < params.T:
            x_open = traj.x_at(s_open.t_start)
            x_close = traj.x_at(s_close.t_end)
            if not x_close < x_open:
                failures.append(f"g: x at closing switch {x_close:.6g} >= x at opening {x_open:.6g}")

    return PmpReport(
        switch_times=switch_times,
        switch_lambda_errors=lam_err,
        hamiltonian_drift_day=drift_day,
        hamiltonian_drift_night=drift_night,
        sign_consistency=tuple(signs),
        kelley_ok=kelley_ok,
        lambda0=adj.lambda0,
        failures=tuple(failures),
        tolerances=tol,
    )
