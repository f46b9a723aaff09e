"""Structure search, reference strategies and classification."""

import numpy as np
import pytest
from scipy.optimize import minimize

from pbrcontrol.dynamics import ControlPolicy, ReactorParams, integrate, periodic_state, poincare_map
from pbrcontrol.errors import Infeasible, NoSolution, WindowOutOfRange
from pbrcontrol.solver import (
    BANG_BANG,
    BANG_SINGULAR_BANG,
    CONSTANT_MAX,
    NO_SOLUTION,
    BangBang,
    BangSingularBang,
    ConstantMax,
    SolverOptions,
    classify,
    constant_yield,
    evaluate_structure,
    near_optimal_window,
    solve,
)


def _periodic(sol):
    return abs(sol.trajectory.x_end - sol.x0) <= 1e-8 * sol.x0


class TestEvaluateStructure:
    def test_bang_bang_near_constant_max(self):
        p = ReactorParams(u_max=0.1)
        cm = evaluate_structure(p, ConstantMax()).yield_
        bb = evaluate_structure(p, BangBang(1e-7, 1.0 - 1e-7)).yield_
        assert bb == pytest.approx(cm, rel=1e-5)

    def test_reported_bang_bang_times(self):
        ev = evaluate_structure(ReactorParams(u_max=0.8), BangBang(0.222, 0.790))
        assert ev.yield_ == pytest.approx(6.30, abs=0.05)

    def test_reported_singular_times(self, table1):
        ev = evaluate_structure(table1, BangSingularBang(0.420, 0.584))
        assert ev.yield_ == pytest.approx(6.33, abs=0.05)
        assert ev.trajectory.cumulated_flow == pytest.approx(0.453, abs=0.01)
        assert ev.structure.t_entry < 0.420

    def test_singular_arc_holds_level(self, table1):
        ev = evaluate_structure(table1, BangSingularBang(0.39, 0.566))
        tr = ev.trajectory
        arc = (tr.t > ev.structure.t_entry) & (tr.t < 0.39)
        assert np.all(np.abs(tr.x[arc] - table1.x_sigma) <= 1e-6 * table1.x_sigma)

    def test_singular_entry_is_crossing(self, table1):
        ev = evaluate_structure(table1, BangSingularBang(0.39, 0.566))
        t_entry = ev.structure.t_entry
        # from x0 under u = 0, x first reaches x_sigma at t_entry
        pre = integrate(table1, ev.x0, ControlPolicy.closed(table1), step=1e-5)
        assert pre.x_at(t_entry) == pytest.approx(table1.x_sigma, rel=1e-6)

    def test_singular_needs_room(self):
        with pytest.raises(Infeasible):
            evaluate_structure(ReactorParams(u_max=0.8), BangSingularBang(0.4, 0.6))

    def test_out_of_order_times(self, table1):
        with pytest.raises(Infeasible):
            evaluate_structure(table1, BangBang(0.6, 0.7))

    def test_bang_bang_washout_is_infeasible(self, table1):
        with pytest.raises(Infeasible):
            evaluate_structure(table1, BangBang(0.05, 0.95))


class TestSolve:
    def test_singular_family(self, sol_table1, table1):
        assert sol_table1.family == BANG_SINGULAR_BANG
        assert sol_table1.pmp.passed
        assert _periodic(sol_table1)
        s = sol_table1.structure
        assert s.t_entry < s.t_exit < table1.T_bar < s.t2
        assert sol_table1.yield_ == pytest.approx(6.33, abs=0.05)

    def test_bang_bang_family(self, sol_high_r):
        s = sol_high_r.structure
        assert sol_high_r.family == BANG_BANG
        assert s.t1 < 0.5 < s.t2
        tr = sol_high_r.trajectory
        assert tr.x_at(s.t2) < tr.x_at(s.t1)
        assert _periodic(sol_high_r)

    def test_constant_max_family(self, sol_tight_bound):
        assert sol_tight_bound.family == CONSTANT_MAX
        assert sol_tight_bound.yield_ == pytest.approx(4.35, abs=0.05)
        assert sol_tight_bound.cumulated_flow == pytest.approx(0.1)

    def test_matches_independent_optimizer(self, sol_high_r):
        # two-parameter scipy search on the public evaluator only
        p = ReactorParams(r=0.7)

        def neg(z):
            try:
                return -evaluate_structure(p, BangBang(*z)).yield_
            except Infeasible:
                return 0.0

        res = minimize(neg, [0.47, 0.53], method="Nelder-Mead",
                       options={"xatol": 1e-7, "fatol": 1e-12, "initial_simplex": [[0.47, 0.53], [0.48, 0.53], [0.47, 0.52]]})
        assert sol_high_r.yield_ >= -res.fun - 1e-9
        assert sol_high_r.structure.t1 == pytest.approx(res.x[0], abs=1e-4)
        assert sol_high_r.structure.t2 == pytest.approx(res.x[1], abs=1e-4)

    def test_dominates_references(self, sol_table1, const_table1, table1):
        assert sol_table1.yield_ >= const_table1.yield_ - 1e-6
        for ut in (0.2, 0.45, 0.6):
            assert sol_table1.yield_ >= near_optimal_window(table1, ut).yield_ - 1e-6

    def test_yield_continuity(self):
        p = ReactorParams(r=0.7)
        base = evaluate_structure(p, BangBang(0.474, 0.522)).yield_
        for eps in (1e-3, 1e-4):
            y = evaluate_structure(p, BangBang(0.474 + eps, 0.522 - eps)).yield_
            assert abs(y - base) < 50 * eps

    def test_no_solution_beyond_a1(self):
        with pytest.raises(NoSolution):
            solve(ReactorParams(r=0.9))

    def test_write(self, sol_table1, tmp_path):
        sol_table1.write(tmp_path / "run")
        summary = (tmp_path / "run_summary.txt").read_text()
        assert "family=BangSingularBang" in summary
        assert (tmp_path / "run_trajectory.csv").exists()
        assert (tmp_path / "run_pmp.csv").exists()


class TestClassify:
    @pytest.mark.parametrize(
        "r, u_max, label",
        [(0.07, 2.0, BANG_SINGULAR_BANG), (0.7, 2.0, BANG_BANG), (0.9, 1.0, NO_SOLUTION),
         (0.07, 0.8, BANG_BANG), (0.07, 0.1, CONSTANT_MAX)],
    )
    def test_labels_at_sweep_budget(self, r, u_max, label):
        assert classify(ReactorParams(r=r, u_max=u_max), SolverOptions.sweep()) == label


class TestBestConstant:
    def test_reference(self, const_table1):
        assert const_table1.u_hat == pytest.approx(0.461, abs=0.005)
        assert const_table1.yield_ == pytest.approx(6.26, abs=0.05)
        assert const_table1.cumulated_flow == pytest.approx(const_table1.u_hat)

    def test_high_respiration(self, const_high_r):
        assert const_high_r.u_hat == pytest.approx(0.095, abs=0.005)
        assert const_high_r.yield_ == pytest.approx(0.519, abs=0.01)

    def test_is_a_maximum(self, const_table1, table1):
        for du in (-1e-3, 1e-3):
            assert constant_yield(table1, const_table1.u_hat + du)[1] <= const_table1.yield_ + 1e-12

    def test_washout_gives_zero(self, table1):
        assert constant_yield(table1, 1.9) == (0.0, 0.0)


class TestNearOptimalWindow:
    def test_zero_flow(self, table1):
        res = near_optimal_window(table1, 0.0)
        assert res.yield_ == 0.0

    def test_window_out_of_range(self, table1):
        with pytest.raises(WindowOutOfRange):
            near_optimal_window(table1, 2.5)

    def test_exact_flow_and_centring(self, table1):
        res = near_optimal_window(table1, 0.4)
        assert res.trajectory.cumulated_flow == pytest.approx(0.4, rel=1e-12)
        on, off = res.policy.switch_times()
        assert 0.5 * (on + off) == pytest.approx(table1.T_bar)

    def test_high_respiration_close_to_optimum(self, sol_high_r):
        res = near_optimal_window(ReactorParams(r=0.7), 0.096)
        assert res.yield_ == pytest.approx(sol_high_r.yield_, rel=0.01)

    def test_periodic(self, table1):
        res = near_optimal_window(table1, 0.45)
        assert abs(poincare_map(table1, res.x0, res.policy) - res.x0) <= 1e-9 * res.x0
        assert res.x0 == pytest.approx(periodic_state(table1, res.policy))
