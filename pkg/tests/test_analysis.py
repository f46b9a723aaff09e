"""Sweeps: family map, contours, flow comparison and the fishery."""

import numpy as np
import pytest

from pbrcontrol.analysis import (
    admissible_flows,
    bifurcation_sweep,
    flow_sweep,
    productivity_contour,
    write_flow_csv,
)
from pbrcontrol.dynamics import ReactorParams
from pbrcontrol.growth import check_assumptions
from pbrcontrol.solver import BANG_BANG, BANG_SINGULAR_BANG, CONSTANT_MAX, NO_SOLUTION, SolverOptions


@pytest.fixture(scope="module")
def small_map():
    return bifurcation_sweep(ReactorParams(), [0.07, 0.4, 0.7, 0.9], [0.1, 0.8, 2.0], workers=1)


@pytest.fixture(scope="module")
def contour_high_r():
    p = ReactorParams(r=0.7)
    return productivity_contour(p, np.linspace(0.44, 0.5, 25), np.linspace(0.5, 0.56, 25))


class TestBifurcation:
    def test_shape_and_overlay(self, small_map):
        assert small_map.labels.shape == (4, 3)
        assert small_map.overlay_r.size == 200
        assert small_map.r_washout == pytest.approx(1.7 * 1500 / 1520 * 0.5)

    def test_labels_follow_gates(self, small_map):
        for i, r in enumerate(small_map.r_values):
            for j, ub in enumerate(small_map.u_bar_values):
                lab = small_map.labels[i, j]
                rep = check_assumptions(ReactorParams(r=float(r), u_max=float(ub)))
                if not rep.A1:
                    assert lab == NO_SOLUTION
                if lab == BANG_SINGULAR_BANG:
                    assert rep.C_sing
                if lab == CONSTANT_MAX:
                    assert rep.C_x0max
                if rep.C_bigubar and rep.A1:
                    assert lab in (BANG_BANG, BANG_SINGULAR_BANG)

    def test_reference_cells(self, small_map):
        assert small_map.labels[0, 2] == BANG_SINGULAR_BANG
        assert small_map.labels[2, 2] == BANG_BANG

    def test_parallel_matches_serial(self, small_map):
        par = bifurcation_sweep(ReactorParams(), [0.07, 0.4, 0.7, 0.9], [0.1, 0.8, 2.0], workers=2)
        assert (par.labels == small_map.labels).all()

    def test_write(self, small_map, tmp_path):
        small_map.write(tmp_path / "bif")
        lines = (tmp_path / "bif_grid.csv").read_text().splitlines()
        assert lines[0] == "row,col,r,u_bar,label"
        assert len(lines) == 13
        assert (tmp_path / "bif_matrix.csv").exists()
        assert (tmp_path / "bif_overlay.csv").exists()

    def test_rejects_bad_ranges(self):
        with pytest.raises(ValueError):
            bifurcation_sweep(ReactorParams(), [0.1], [1.0, 2.0])
        with pytest.raises(ValueError):
            bifurcation_sweep(ReactorParams(), [-0.1, 0.2], [1.0, 2.0])


class TestContour:
    def test_max_matches_solver(self, contour_high_r, sol_high_r):
        t1, t2, y = contour_high_r.argmax()
        cell = 0.06 / 24
        assert abs(t1 - sol_high_r.structure.t1) <= cell
        assert abs(t2 - sol_high_r.structure.t2) <= cell
        assert y <= sol_high_r.yield_ + 1e-6
        assert y == pytest.approx(0.607, abs=0.01)

    def test_nonnegative(self, contour_high_r):
        assert np.all(contour_high_r.yields >= 0.0)

    def test_level_sets_follow_window_length(self, contour_high_r):
        t1, t2 = np.meshgrid(contour_high_r.t1_values, contour_high_r.t2_values, indexing="ij")
        y = contour_high_r.yields.ravel()
        c_width = abs(np.corrcoef(y, (t2 - t1).ravel())[0, 1])
        c_t1 = abs(np.corrcoef(y, t1.ravel())[0, 1])
        assert c_width > c_t1

    def test_vanishing_window(self):
        p = ReactorParams(r=0.7)
        g = productivity_contour(p, [0.4999, 0.49999], [0.5, 0.50001])
        assert g.yields.max() < 1e-2

    def test_range_checks(self):
        with pytest.raises(ValueError):
            productivity_contour(ReactorParams(), [0.6], [0.7])


@pytest.fixture(scope="module")
def rows():
    p = ReactorParams()
    return flow_sweep(p, admissible_flows(p, count=21))


class TestFlowSweep:
    def test_zero_flow(self, rows):
        assert rows[0].u_tilde == 0.0
        assert rows[0].yield_window == 0.0 and rows[0].yield_constant == 0.0

    def test_window_beats_constant(self, rows):
        for row in rows:
            if row.yield_window > 0.0 and row.yield_constant > 0.0:
                assert row.yield_window >= row.yield_constant - 1e-9

    def test_near_optimum(self, rows, sol_table1):
        best = max(r.yield_window for r in rows)
        assert best >= 0.98 * sol_table1.yield_

    def test_increasing_head(self, rows):
        head = [r.yield_window for r in rows[:5]]
        assert np.all(np.diff(head) > 0.0)

    def test_high_respiration_window_beats_constant(self):
        p = ReactorParams(r=0.7)
        for row in flow_sweep(p, admissible_flows(p, count=9)):
            if row.yield_window > 0.0 and row.yield_constant > 0.0:
                assert row.yield_window >= row.yield_constant - 1e-9

    def test_admissible_edge_is_alive(self):
        p = ReactorParams(r=0.7)
        flows = admissible_flows(p, count=5)
        assert flow_sweep(p, flows[-1:])[0].yield_window > 0.0

    def test_csv(self, rows, tmp_path):
        write_flow_csv(rows, tmp_path / "f.csv")
        lines = (tmp_path / "f.csv").read_text().splitlines()
        assert lines[0] == "u_tilde,yield_window,yield_constant"
        assert len(lines) == len(rows) + 1


class TestFishing:
    def test_structure(self, fishing):
        assert fishing.optimal.family == BANG_BANG
        t1, t2 = fishing.optimal.switch_times()
        assert t1 < 0.2 < t2
        assert fishing.optimal.pmp.passed

    def test_improvement(self, fishing):
        assert fishing.improvement == pytest.approx(0.37, abs=0.03)

    def test_unfished_below_half_capacity(self, fishing):
        assert fishing.unfished_trajectory.x.max() < fishing.params.model.K / 2

    def test_no_singular_phase(self, fishing):
        assert all(c.family != BANG_SINGULAR_BANG for c in fishing.optimal.candidates)

    def test_summary(self, fishing):
        text = fishing.summary()
        assert "family=BangBang" in text
        assert "improvement=" in text


def test_sweep_options_budget():
    opts = SolverOptions.sweep()
    assert opts.starts == 4
    assert opts.step == 1e-3
