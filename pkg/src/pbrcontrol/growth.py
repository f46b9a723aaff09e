"""Concave net-growth laws f(x) and their constant-light critical points.

Two families are provided:

* ``BeerLambertMonod``: depth-averaged Monod light response under
  Beer-Lambert attenuation, written in surfacic biomass x = X L::

      f(x) = (mu_bar / a) * ln((I0_bar + K_I) / (I0_bar * exp(-a x) + K_I))

* ``LogisticGrowth``: growing-season stock growth with mortality folded in::

      f(x) = alpha x (1 - x / K) + r_link x

Both are strictly concave with f(0) = 0 and f'(0) > 0, which is all the
periodic optimal-control machinery needs. Models are frozen dataclasses and
every function here is pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Union

import numpy as np

from ._numerics import bisect
from .errors import NoInteriorOptimum

if TYPE_CHECKING:
    from .dynamics import ReactorParams

# integer tags consumed by the compiled kernels in _kernels.py
KIND_BEER_LAMBERT = 0
KIND_LOGISTIC = 1


@dataclass(frozen=True)
class BeerLambertMonod:
    """Monod light response averaged over a Beer-Lambert attenuated column.

    Attributes:
        mu_bar: Maximum specific growth rate [1/day].
        a: Light attenuation coefficient [m2/g C].
        I0_bar: Incident light during the day [umol quanta/m2/s].
        K_I: Light half-saturation constant [umol quanta/m2/s].
    """

    mu_bar: float = 1.7
    a: float = 0.5
    I0_bar: float = 1500.0
    K_I: float = 20.0

    def __post_init__(self):
        for name in ("mu_bar", "a", "I0_bar", "K_I"):
            value = getattr(self, name)
            if not (value > 0.0 and math.isfinite(value)):
                raise ValueError(f"{name} must be strictly positive, got {value}")

    kind = KIND_BEER_LAMBERT

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([self.mu_bar, self.a, self.I0_bar, self.K_I])

    @property
    def upper_bound(self) -> float:
        """Supremum of f, reached as x -> infinity."""
        return self.mu_bar / self.a * math.log((self.I0_bar + self.K_I) / self.K_I)

    @property
    def x_domain_max(self) -> float:
        return math.inf

    def f(self, x: float) -> float:
        # log1p/expm1 keep f(x)/x accurate as x -> 0
        e = self.I0_bar * math.exp(-self.a * x)
        return self.mu_bar / self.a * math.log1p(-self.I0_bar * math.expm1(-self.a * x) / (e + self.K_I))

    def f_prime(self, x: float) -> float:
        e = self.I0_bar * math.exp(-self.a * x)
        return self.mu_bar * e / (e + self.K_I)

    def f_second(self, x: float) -> float:
        e = self.I0_bar * math.exp(-self.a * x)
        return -self.mu_bar * self.a * e * self.K_I / (e + self.K_I) ** 2

    def x_sigma_closed(self, r: float) -> float:
        return math.log(self.I0_bar * (self.mu_bar - r) / (r * self.K_I)) / self.a


@dataclass(frozen=True)
class LogisticGrowth:
    """Logistic growing-season law with the mortality rate added back.

    ``f(x) - r_link x`` is the classical logistic term, so with ``r = r_link``
    the constant-harvest optimum sits at K/2. f is unbounded below for large
    x, so evaluation is restricted to ``[0, K (1 + r_link / alpha)]`` where
    f >= 0.
    """

    alpha: float = 6.0
    K: float = 10.0
    r_link: float = 1.0

    def __post_init__(self):
        if not self.alpha > 0.0:
            raise ValueError(f"alpha must be strictly positive, got {self.alpha}")
        if not self.K > 0.0:
            raise ValueError(f"K must be strictly positive, got {self.K}")
        if not self.r_link >= 0.0:
            raise ValueError(f"r_link must be non-negative, got {self.r_link}")

    kind = KIND_LOGISTIC

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([self.alpha, self.K, self.r_link, 0.0])

    @property
    def upper_bound(self) -> float:
        return math.inf

    @property
    def x_domain_max(self) -> float:
        return self.K * (1.0 + self.r_link / self.alpha)

    def f(self, x: float) -> float:
        return self.alpha * x * (1.0 - x / self.K) + self.r_link * x

    def f_prime(self, x: float) -> float:
        return self.alpha * (1.0 - 2.0 * x / self.K) + self.r_link

    def f_second(self, x: float) -> float:
        return -2.0 * self.alpha / self.K

    def x_sigma_closed(self, r: float) -> float:
        return self.K * (self.alpha + self.r_link - r) / (2.0 * self.alpha)


GrowthModel = Union[BeerLambertMonod, LogisticGrowth]


def _check_x(model: GrowthModel, x: float) -> None:
    if not x >= 0.0:
        raise ValueError(f"surfacic biomass must be non-negative, got {x}")
    if x > model.x_domain_max * (1.0 + 1e-12):
        raise ValueError(f"x={x} outside the domain [0, {model.x_domain_max}] where f >= 0")


def eval_f(model: GrowthModel, x: float) -> float:
    """Growth flux f(x) [g C/m2/day]; exactly 0 at x = 0."""
    _check_x(model, x)
    if x == 0.0:
        return 0.0
    return model.f(x)


def eval_f_prime(model: GrowthModel, x: float) -> float:
    _check_x(model, x)
    return model.f_prime(x)


def eval_f_second(model: GrowthModel, x: float) -> float:
    _check_x(model, x)
    return model.f_second(x)


def _require_interior(model: GrowthModel, r: float) -> None:
    if not model.f_prime(0.0) > r:
        raise NoInteriorOptimum(f"f'(0)={model.f_prime(0.0):.6g} <= r={r:.6g}")


def x_sigma_bisect(model: GrowthModel, r: float) -> float:
    """Generic route: solve f'(x) = r by bisection, using only monotonicity of f'."""
    _require_interior(model, r)
    hi = 1.0
    while model.f_prime(hi) > r:
        hi *= 2.0
        if hi > model.x_domain_max:
            hi = model.x_domain_max
            break
    return bisect(lambda x: model.f_prime(x) - r, 0.0, hi)


def x_sigma(model: GrowthModel, r: float) -> float:
    """Biomass level maximizing the net surfacic productivity f(x) - r x.

    Raises:
        NoInteriorOptimum: if f'(0) <= r.
    """
    _require_interior(model, r)
    return model.x_sigma_closed(r)


def u_sigma(model: GrowthModel, r: float) -> float:
    """Dilution rate holding x at x_sigma in constant light: f(x_s)/x_s - r."""
    xs = x_sigma(model, r)
    return model.f(xs) / xs - r


def equilibrium(model: GrowthModel, r: float, u: float) -> float:
    """Positive light-phase equilibrium of dx/dt = f(x) - (r + u) x.

    Returns 0 (washout) when f'(0) <= r + u, and ``inf`` for a bounded model
    with r + u = 0 (the biomass grows without limit).
    """
    if r < 0.0 or u < 0.0:
        raise ValueError(f"r and u must be non-negative, got r={r}, u={u}")
    rate = r + u
    if model.f_prime(0.0) <= rate:
        return 0.0
    if math.isfinite(model.upper_bound):
        if rate == 0.0:
            return math.inf
        hi = model.upper_bound / rate
    else:
        hi = model.x_domain_max
    lo = 1e-9 * hi
    # f(x)/x is strictly decreasing, so the root is unique
    return bisect(lambda x: model.f(x) / x - rate, lo, hi)


@dataclass(frozen=True)
class FeasibilityReport:
    """Closed-form gates deciding which optimal structures can occur.

    Attributes:
        A1: growth can outpace respiration, f'(0) T_bar > r T.
        C_x0max: a periodic orbit exists under u = u_max, f'(0) T_bar > (r + u_max) T.
        C_sing: the singular control is admissible, u_sigma < u_max.
        C_bigubar: u_max > f'(0) - r (no constant-max solution possible).
    """

    A1: bool
    C_x0max: bool
    C_sing: bool
    C_bigubar: bool
    margin_A1: float
    margin_x0max: float
    margin_sing: float
    margin_bigubar: float
    f_prime_0: float
    x_sigma: float
    u_sigma: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def check_assumptions(params: "ReactorParams") -> FeasibilityReport:
    """Evaluate the structural gates for a reactor configuration."""
    model, r = params.model, params.r
    fp0 = model.f_prime(0.0)
    m_a1 = fp0 * params.T_bar - r * params.T
    m_x0 = fp0 * params.T_bar - (r + params.u_max) * params.T
    try:
        xs = x_sigma(model, r)
        us = model.f(xs) / xs - r
    except NoInteriorOptimum:
        xs = us = math.nan
    m_sing = params.u_max - us if math.isfinite(us) else -math.inf
    m_big = params.u_max - (fp0 - r)
    return FeasibilityReport(
        A1=m_a1 > 0.0,
        C_x0max=m_x0 > 0.0,
        C_sing=m_sing > 0.0,
        C_bigubar=m_big > 0.0,
        margin_A1=m_a1,
        margin_x0max=m_x0,
        margin_sing=m_sing,
        margin_bigubar=m_big,
        f_prime_0=fp0,
        x_sigma=xs,
        u_sigma=us,
    )
