"""Growth laws and constant-light critical points."""

import math

import numpy as np
import pytest
from scipy.optimize import brentq, minimize_scalar

from pbrcontrol.dynamics import ReactorParams
from pbrcontrol.errors import NoInteriorOptimum
from pbrcontrol.growth import (
    BeerLambertMonod,
    LogisticGrowth,
    check_assumptions,
    equilibrium,
    eval_f,
    eval_f_prime,
    eval_f_second,
    u_sigma,
    x_sigma,
    x_sigma_bisect,
)

# Closed-reactor equilibrium of the reference law at r = 0.07; regression value
# from an independent brentq solve of f(x) = 0.07 x (see TestEquilibrium).
X_BAR0_TABLE1 = 210.3499051


def hand_f(x, mu=1.7, a=0.5, I0=1500.0, KI=20.0):
    return mu / a * math.log((I0 + KI) / (I0 * math.exp(-a * x) + KI))


class TestEvalF:
    def test_zero_is_exact(self, monod, logistic):
        assert eval_f(monod, 0.0) == 0.0
        assert eval_f(logistic, 0.0) == 0.0

    def test_monod_matches_hand_formula(self, monod):
        assert eval_f(monod, 14.93) == pytest.approx(hand_f(14.93), rel=1e-14)
        assert eval_f(monod, 14.93) == pytest.approx(14.58, abs=0.01)

    def test_logistic_substitution(self, logistic):
        assert eval_f(logistic, 5.0) == pytest.approx(20.0, rel=1e-15)

    @pytest.mark.parametrize("fn", [eval_f, eval_f_prime, eval_f_second])
    def test_negative_x_rejected(self, monod, fn):
        with pytest.raises(ValueError):
            fn(monod, -1e-3)

    def test_logistic_domain_upper_end(self, logistic):
        with pytest.raises(ValueError):
            eval_f(logistic, 10.0 * (1.0 + 1.0 / 6.0) + 1e-6)

    def test_monod_bounded_above(self, monod):
        bound = 1.7 / 0.5 * math.log(1520.0 / 20.0)
        assert monod.upper_bound == pytest.approx(bound)
        assert eval_f(monod, 200.0) <= bound
        assert eval_f(monod, 20.0) < bound


class TestDerivatives:
    def test_slope_at_origin(self, monod):
        assert eval_f_prime(monod, 0.0) == pytest.approx(1.7 * 1500.0 / 1520.0, rel=1e-14)

    def test_slope_at_reported_level(self, monod):
        # f'(x_sigma) = r = 0.07 at the reported x_sigma = 14.93
        assert eval_f_prime(monod, 14.93) == pytest.approx(0.07, abs=1e-3)

    @pytest.mark.parametrize("model_name", ["monod", "logistic"])
    def test_central_differences(self, model_name, request):
        model = request.getfixturevalue(model_name)
        d = 1e-5
        for x in np.linspace(0.01, 0.95 * model.x_domain_max if model_name == "logistic" else 60.0, 37):
            fd = (eval_f(model, x + d) - eval_f(model, x - d)) / (2 * d)
            assert fd == pytest.approx(eval_f_prime(model, x), rel=1e-6, abs=1e-9)
            fd2 = (eval_f_prime(model, x + d) - eval_f_prime(model, x - d)) / (2 * d)
            assert fd2 == pytest.approx(eval_f_second(model, x), rel=1e-5, abs=1e-9)

    def test_strict_concavity(self, monod, logistic):
        for model, hi in ((monod, 100.0), (logistic, 11.0)):
            xs = np.linspace(0.0, hi, 200)
            assert all(eval_f_second(model, x) < 0.0 for x in xs)
            fp = [eval_f_prime(model, x) for x in xs]
            assert np.all(np.diff(fp) < 0.0)


class TestProperty1:
    @pytest.mark.parametrize("model_name", ["monod", "logistic"])
    def test_sampled_inequalities(self, model_name, request):
        model = request.getfixturevalue(model_name)
        xmax = model.x_domain_max if math.isfinite(model.x_domain_max) else 500.0
        xs = np.logspace(-6, math.log10(xmax), 1000)
        fp0 = eval_f_prime(model, 0.0)
        ratio = np.array([eval_f(model, x) / x for x in xs])
        slope = np.array([eval_f_prime(model, x) for x in xs])
        assert np.all(fp0 > ratio)
        assert np.all(ratio > slope)
        assert np.all(np.diff(ratio) < 0.0)


class TestCriticalPoints:
    def test_reference_values(self, monod):
        assert x_sigma(monod, 0.07) == pytest.approx(14.93, abs=0.01)
        assert u_sigma(monod, 0.07) == pytest.approx(0.9066, abs=5e-4)

    def test_closed_form_formula(self, monod):
        expected = math.log(1500.0 * (1.7 - 0.07) / (0.07 * 20.0)) / 0.5
        assert x_sigma(monod, 0.07) == pytest.approx(expected, rel=1e-14)

    def test_logistic_msy_level(self, logistic):
        assert x_sigma(logistic, 1.0) == pytest.approx(5.0, rel=1e-14)
        assert u_sigma(logistic, 1.0) == pytest.approx(3.0, rel=1e-13)

    def test_closed_form_vs_bisection_random(self):
        rng = np.random.default_rng(20261015)
        for _ in range(100):
            m = BeerLambertMonod(
                mu_bar=rng.uniform(0.5, 3.0),
                a=rng.uniform(0.05, 2.0),
                I0_bar=rng.uniform(100.0, 3000.0),
                K_I=rng.uniform(1.0, 200.0),
            )
            r = rng.uniform(0.01, 0.9) * m.f_prime(0.0)
            assert x_sigma_bisect(m, r) == pytest.approx(x_sigma(m, r), rel=1e-10)
        for _ in range(100):
            lg = LogisticGrowth(rng.uniform(0.5, 10.0), rng.uniform(1.0, 50.0), rng.uniform(0.0, 3.0))
            r = rng.uniform(0.0, 0.95) * lg.f_prime(0.0)
            assert x_sigma_bisect(lg, r) == pytest.approx(x_sigma(lg, r), rel=1e-10)

    def test_stationarity_and_maximum(self, monod):
        r = 0.07
        xs = x_sigma(monod, r)
        assert eval_f_prime(monod, xs) == pytest.approx(r, abs=1e-9)
        best = eval_f(monod, xs) - r * xs
        for x in np.linspace(0.0, 80.0, 400):
            assert eval_f(monod, x) - r * x <= best + 1e-12
        # scipy oracle on the net productivity
        res = minimize_scalar(lambda x: -(hand_f(x) - r * x), bounds=(0.0, 80.0), method="bounded",
                              options={"xatol": 1e-10})
        assert res.x == pytest.approx(xs, rel=1e-6)

    def test_u_sigma_balance(self, monod, logistic):
        for model, r in ((monod, 0.07), (monod, 0.7), (logistic, 1.0)):
            xs, us = x_sigma(model, r), u_sigma(model, r)
            assert us > 0.0
            assert eval_f(model, xs) - (r + us) * xs == pytest.approx(0.0, abs=1e-10)

    def test_no_interior_optimum(self, monod):
        with pytest.raises(NoInteriorOptimum):
            x_sigma(monod, 1.7)
        with pytest.raises(NoInteriorOptimum):
            u_sigma(monod, 2.0)

    def test_kelley_sign(self, monod, logistic):
        assert -eval_f_second(monod, x_sigma(monod, 0.07)) > 0.0
        assert -eval_f_second(logistic, x_sigma(logistic, 1.0)) > 0.0


class TestEquilibrium:
    def test_washout(self, monod):
        assert equilibrium(monod, 0.07, 1.7) == 0.0

    def test_closed_reactor_against_brentq(self, monod):
        oracle = brentq(lambda x: hand_f(x) - 0.07 * x, 1.0, 1000.0, xtol=1e-13)
        x = equilibrium(monod, 0.07, 0.0)
        assert x == pytest.approx(oracle, rel=1e-10)
        assert x == pytest.approx(X_BAR0_TABLE1, rel=1e-9)

    def test_balance_and_monotonicity(self, monod, logistic):
        for model, us in ((monod, np.linspace(0.0, 1.5, 40)), (logistic, np.linspace(0.0, 6.5, 40))):
            prev = math.inf
            for u in us:
                x = equilibrium(model, 0.07, u)
                if x > 0.0:
                    assert eval_f(model, x) - (0.07 + u) * x == pytest.approx(0.0, abs=1e-9 * max(1.0, x))
                assert x <= prev
                prev = x


class TestAssumptions:
    def test_reference(self, table1):
        rep = check_assumptions(table1)
        assert rep.A1 and rep.C_sing and rep.C_bigubar
        assert not rep.C_x0max
        assert rep.margin_A1 == pytest.approx(1.7 * 1500 / 1520 * 0.5 - 0.07)

    def test_high_respiration_fails_a1(self):
        assert not check_assumptions(ReactorParams(r=0.9)).A1

    def test_reduced_bound_blocks_singular(self):
        assert not check_assumptions(ReactorParams(u_max=0.8)).C_sing

    def test_tight_bound_allows_constant_max(self):
        assert check_assumptions(ReactorParams(u_max=0.1)).C_x0max
