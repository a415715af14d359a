"""Tests for the Volterra boundary solver and the BoundaryPair container.

The solved pair is validated structurally (terminal pinning, monotonicity,
class membership, sign), by symmetry relations that the equations imply,
by grid-refinement convergence, and by re-evaluating the defining integral
equations with an independent, finer quadrature.
"""

import json

import numpy as np
import numpy.testing as npt
import pytest

from lastzero import (
    BoundaryPair,
    NonConvergenceError,
    ProblemSpec,
    SchemaError,
    SolverConfig,
    boundary_residuals,
    h_curves,
    interpolate_boundary,
    solve_boundaries,
)
from lastzero.boundaries import sqrt_time_grid

# Regression anchor, solver defaults (n_steps=400, T=1): independent checks
# of this value come from the residual certificate below and the lattice
# cross-validation in the acceptance suite.
B_PLUS_0_MU0 = 1.1229225669


class TestSqrtTimeGrid:
    def test_span_and_shape(self):
        g = sqrt_time_grid(2.0, 50)
        assert g.size == 51
        assert g[0] == 0.0
        assert g[-1] == 2.0
        assert np.all(np.diff(g) > 0)

    def test_refines_toward_horizon(self):
        # Boundary slope blows up like 1/sqrt(T - t); spacing must shrink
        # near T to keep the collocation error balanced.
        g = sqrt_time_grid(1.0, 100)
        d = np.diff(g)
        assert np.all(np.diff(d) < 0)
        assert d[-1] < d[0] / 50


class TestSolverConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            SolverConfig(n_steps=0)
        with pytest.raises(ValueError):
            SolverConfig(max_iter=0)
        with pytest.raises(ValueError):
            SolverConfig(tol_b=0.0)
        with pytest.raises(ValueError):
            SolverConfig(damping=1.5)


class TestSolvedBoundaries:
    def test_terminal_condition_exact(self, boundaries_for):
        bp = boundaries_for(0.0)
        assert bp.b_minus[-1] == 0.0
        assert bp.b_plus[-1] == 0.0

    def test_monotone(self, boundaries_for):
        bp = boundaries_for(0.0)
        assert np.all(np.diff(bp.b_minus) >= 0.0)
        assert np.all(np.diff(bp.b_plus) <= 0.0)

    def test_strict_sign_in_interior(self, boundaries_for):
        bp = boundaries_for(0.0)
        assert np.all(bp.b_minus[:-1] < 0.0)
        assert np.all(bp.b_plus[:-1] > 0.0)

    def test_class_membership(self, boundaries_for):
        # Uniqueness class: b- at or below the lower zero-level curve of H,
        # b+ at or above the upper one.
        bp = boundaries_for(0.0)
        hc = h_curves(bp.spec, bp.grid)
        assert np.all(bp.b_minus <= hc.h_minus + 1e-9)
        assert np.all(bp.b_plus >= hc.h_plus - 1e-9)

    def test_reported_residuals_within_tolerance(self, boundaries_for):
        bp = boundaries_for(0.0)
        res = bp.residuals[:-1]
        assert np.all(np.isfinite(res))
        assert np.max(np.abs(res)) <= 1e-6

    def test_zero_drift_symmetry(self, boundaries_for):
        bp = boundaries_for(0.0)
        npt.assert_allclose(bp.b_minus, -bp.b_plus, atol=1e-9, rtol=0)

    def test_regression_value_at_origin(self, boundaries_for):
        bp = boundaries_for(0.0)
        assert abs(bp.b_plus[0] - B_PLUS_0_MU0) <= 1e-6

    def test_drift_flip_mirrors_boundaries(self):
        cfg = SolverConfig(n_steps=80)
        bp_pos = solve_boundaries(ProblemSpec(mu=0.8, T=1.0), cfg)
        bp_neg = solve_boundaries(ProblemSpec(mu=-0.8, T=1.0), cfg)
        npt.assert_allclose(bp_pos.b_plus, -bp_neg.b_minus, atol=1e-9,
                            rtol=0)
        npt.assert_allclose(bp_pos.b_minus, -bp_neg.b_plus, atol=1e-9,
                            rtol=0)

    def test_grid_refinement_converges(self):
        spec = ProblemSpec(mu=0.5, T=1.0)
        b0 = {}
        for n in (50, 100, 200):
            pair = solve_boundaries(spec, SolverConfig(n_steps=n))
            b0[n] = (pair.b_minus[0], pair.b_plus[0])
        err_coarse = abs(b0[50][1] - b0[200][1])
        err_fine = abs(b0[100][1] - b0[200][1])
        assert err_fine < err_coarse
        assert err_coarse <= 1e-4
        assert err_fine <= 2e-5

    def test_independent_residual_certificate(self, boundaries_for):
        bp = boundaries_for(0.0)
        rng = np.random.default_rng(7)
        times = np.sort(rng.uniform(0.0, 0.97, 20))
        res = boundary_residuals(bp.spec, bp, times)
        assert np.max(np.abs(res)) <= 1e-5


class TestInterpolation:
    def test_terminal_and_knots(self, boundaries_for):
        bp = boundaries_for(0.0)
        bm, bpl = bp.interpolate(1.0)
        assert bm == 0.0 and bpl == 0.0
        k = 37
        bm, bpl = bp.interpolate(bp.grid[k])
        assert bm == bp.b_minus[k]
        assert bpl == bp.b_plus[k]

    def test_between_knots(self, boundaries_for):
        bp = boundaries_for(0.0)
        t = 0.5 * (bp.grid[10] + bp.grid[11])
        bm, bpl = bp.interpolate(t)
        assert bp.b_plus[11] <= bpl <= bp.b_plus[10]
        assert bp.b_minus[10] <= bm <= bp.b_minus[11]

    def test_vectorized_and_function_form(self, boundaries_for):
        bp = boundaries_for(0.0)
        ts = np.linspace(0.0, 1.0, 11)
        bm, bpl = bp.interpolate(ts)
        assert bm.shape == ts.shape
        fm, fp = interpolate_boundary(bp, ts)
        npt.assert_array_equal(fm, bm)
        npt.assert_array_equal(fp, bpl)

    def test_domain_errors(self, boundaries_for):
        bp = boundaries_for(0.0)
        with pytest.raises(ValueError):
            bp.interpolate(-0.01)
        with pytest.raises(ValueError):
            bp.interpolate(1.01)


class TestContainerValidation:
    grid = np.array([0.0, 0.5, 1.0])

    def _make(self, bm, bp):
        return BoundaryPair(spec=ProblemSpec(mu=0.0, T=1.0), grid=self.grid,
                            b_minus=np.array(bm), b_plus=np.array(bp))

    def test_accepts_valid(self):
        pair = self._make([-1.0, -0.5, 0.0], [1.0, 0.5, 0.0])
        assert pair.grid.size == 3

    def test_rejects_nonzero_terminal(self):
        with pytest.raises(ValueError):
            self._make([-1.0, -0.5, -0.1], [1.0, 0.5, 0.0])

    def test_rejects_nonmonotone(self):
        with pytest.raises(ValueError):
            self._make([-0.5, -1.0, 0.0], [1.0, 0.5, 0.0])

    def test_rejects_sign_violation(self):
        with pytest.raises(ValueError):
            self._make([-1.0, -0.5, 0.0], [-0.2, 0.5, 0.0][::-1])

    def test_rejects_descending_grid(self):
        with pytest.raises(ValueError):
            BoundaryPair(spec=ProblemSpec(mu=0.0, T=1.0),
                         grid=np.array([0.0, 0.7, 0.6, 1.0]),
                         b_minus=np.array([-1.0, -0.5, -0.4, 0.0]),
                         b_plus=np.array([1.0, 0.5, 0.4, 0.0]))

    def test_arrays_read_only(self, boundaries_for):
        bp = boundaries_for(0.0)
        with pytest.raises(ValueError):
            bp.b_plus[0] = 2.0


class TestNonConvergence:
    def test_iteration_exhaustion_raises(self):
        spec = ProblemSpec(mu=0.0, T=1.0)
        cfg = SolverConfig(n_steps=12, max_iter=1, tol_res=1e-14,
                           tol_b=1e-14)
        with pytest.raises(NonConvergenceError) as exc:
            solve_boundaries(spec, cfg)
        assert exc.value.step >= 0
        assert 0.0 <= exc.value.t <= 1.0


class TestSerialization:
    def test_json_round_trip(self, boundaries_for, tmp_path):
        bp = boundaries_for(0.0)
        path = tmp_path / "b.json"
        bp.save_json(path, config=SolverConfig())
        back = BoundaryPair.load_json(path)
        assert back.spec == bp.spec
        npt.assert_array_equal(back.grid, bp.grid)
        npt.assert_array_equal(back.b_minus, bp.b_minus)
        npt.assert_array_equal(back.b_plus, bp.b_plus)
        npt.assert_array_equal(back.residuals, bp.residuals)

    def test_json_schema_enforced(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"schema": "something.else.v9"}))
        with pytest.raises(SchemaError):
            BoundaryPair.load_json(path)

    def test_json_garbage_rejected(self, tmp_path):
        path = tmp_path / "junk.json"
        path.write_text("not json at all {")
        with pytest.raises(SchemaError):
            BoundaryPair.load_json(path)
        path.write_text("[1, 2, 3]")
        with pytest.raises(SchemaError):
            BoundaryPair.load_json(path)

    def test_csv_layout(self, boundaries_for, tmp_path):
        bp = boundaries_for(0.0)
        path = tmp_path / "b.csv"
        bp.save_csv(path, manifest_hash="deadbeef")
        lines = path.read_text().splitlines()
        assert lines[0] == "# manifest_hash=deadbeef"
        header = lines[1].split(",")
        assert header == ["t", "b_minus", "b_plus", "h_minus", "h_plus",
                          "residual_minus", "residual_plus"]
        first = lines[2].split(",")
        last = lines[-1].split(",")
        assert float(first[0]) == 0.0
        assert float(last[0]) == 1.0
        assert float(last[1]) == 0.0 and float(last[2]) == 0.0
        # h columns bracket the b columns (class membership in the file)
        t_mid = lines[2 + 200].split(",")
        assert float(t_mid[1]) <= float(t_mid[3])  # b- <= h-
        assert float(t_mid[2]) >= float(t_mid[4])  # b+ >= h+
