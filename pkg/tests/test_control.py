"""
Control tests for heatobs.

Covers the penalized HUM solver and its verification fields, the cost
report, the smooth cutoffs, the discrete Hölder norm and the regular-control
construction.
"""
import math
import sys
from pathlib import Path

import numpy as np
import pytest
from pydantic import ValidationError

project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from heatobs.analysis.control.base import cost_monotone, cost_report, hum_solve  # noqa: E402
from heatobs.analysis.control.cutoff import SpaceCutoff, TimeCutoff, build_chi, build_phi, smoothstep  # noqa: E402
from heatobs.analysis.control.regular import (  # noqa: E402
    NestedIntervals,
    RegularControlConfig,
    default_nested_intervals,
    holder_norm,
    regular_control,
    validate_nesting,
)
from heatobs.core.mesh.base import ObservationRegion, SpaceGrid, TimeGrid  # noqa: E402
from heatobs.core.pde.base import HeatSolver, SpaceTimeField  # noqa: E402
from heatobs.core.potential.base import ConstantPotential  # noqa: E402
from heatobs.core.potential.norms import norms  # noqa: E402


class TestHUM:
    def test_full_region_drives_state_to_rest(self):
        grid, tg = SpaceGrid(n=15), TimeGrid(T=0.5, N=32)
        solver = HeatSolver(grid=grid, tg=tg)
        region = ObservationRegion.build(grid, tg, [(0.0, 1.0)])
        solution = hum_solve(np.sin(np.pi * grid.nodes), solver, region, eps=1e-10, cg_tol=1e-12)

        assert solution.converged
        assert solution.terminal_ratio < 1e-5
        assert solution.optimality_residual < 1e-9
        assert solution.penalization_defect < 1e-8
        assert solution.cost_l2 > 0

    @pytest.mark.parametrize("value", [0.0, 25.0, 100.0])
    def test_partial_region_reaches_rest(self, value):
        grid, tg = SpaceGrid(n=32), TimeGrid(T=0.5, N=64)
        V = ConstantPotential(value=value)
        region = ObservationRegion.build(grid, tg, [(0.3, 0.7)])
        y0 = np.sin(np.pi * grid.nodes)
        solution = hum_solve(y0, HeatSolver(grid=grid, tg=tg, potential=V), region, eps=1e-10, cg_tol=1e-10,
                             max_iter=500)

        assert solution.cg_iterations <= 500
        assert solution.terminal_ratio <= 1e-6
        replay = HeatSolver(grid=grid, tg=tg, potential=V).forward(y0, solution.h)
        assert grid.norm(replay.terminal) <= 1e-6 * grid.norm(y0)

    def test_control_lives_on_region(self):
        grid, tg = SpaceGrid(n=31), TimeGrid(T=0.5, N=32)
        solver = HeatSolver(grid=grid, tg=tg, potential=ConstantPotential(value=-5.0))
        region = ObservationRegion.build(grid, tg, [(0.3, 0.7)], [(0.0, 0.25)])
        solution = hum_solve(np.ones(grid.n), solver, region, max_iter=50)

        assert np.all(solution.h.values[:, ~region.mask.mask] == 0)
        assert np.all(solution.h.values[16:] == 0)
        scale = np.abs(solution.trajectory.values).max() / grid.h ** 2 + np.abs(solution.h.values).max()
        assert solver.residual_norm(solution.trajectory, solution.h) < 1e-10 * scale
        with pytest.raises(ValueError):
            solution.qT_star[0] = 1.0

    def test_zero_datum(self):
        grid, tg = SpaceGrid(n=9), TimeGrid(T=0.5, N=8)
        region = ObservationRegion.build(grid, tg, [(0.2, 0.6)])
        solution = hum_solve(np.zeros(grid.n), HeatSolver(grid=grid, tg=tg), region)
        assert solution.cost_l2 == 0.0
        assert solution.terminal_ratio == 0.0
        report = cost_report(solution, tg.T, norms(ConstantPotential(), grid, tg))
        assert report.log_cost == -math.inf

    def test_invalid_parameters(self):
        grid, tg = SpaceGrid(n=9), TimeGrid(T=0.5, N=8)
        region = ObservationRegion.build(grid, tg, [(0.2, 0.6)])
        with pytest.raises(ValueError):
            hum_solve(np.ones(grid.n), HeatSolver(grid=grid, tg=tg), region, eps=-1.0)
        with pytest.raises(ValueError):
            hum_solve(np.ones(grid.n), HeatSolver(grid=grid, tg=tg), region, cg_tol=0.0)


class TestCostReport:
    def test_log_cost_against_bound(self):
        grid, tg = SpaceGrid(n=15), TimeGrid(T=0.5, N=32)
        V = ConstantPotential(value=4.0)
        region = ObservationRegion.build(grid, tg, [(0.0, 1.0)])
        y0 = np.sin(np.pi * grid.nodes)
        solution = hum_solve(y0, HeatSolver(grid=grid, tg=tg, potential=V), region)
        report = cost_report(solution, tg.T, norms(V, grid, tg), C=2.0)

        assert report.log_cost == pytest.approx(math.log(solution.cost_l2 / grid.norm(y0)))
        assert report.log_bound == pytest.approx(2.0 * (1 + 2 + 0.5 * 4 + 2))
        assert report.log_ratio == pytest.approx(report.log_cost - report.log_bound)

    def test_cost_monotone(self):
        assert cost_monotone([(1.0, 2.0), (0.5, 3.0), (2.0, 2.0)])
        assert not cost_monotone([(0.5, 1.0), (1.0, 2.0)])
        assert cost_monotone([(0.5, 1.0), (1.0, 1.05)], rtol=0.1)


class TestCutoffs:
    def test_smoothstep_values(self):
        assert smoothstep(np.array([-1.0, 0.0, 0.5, 1.0, 2.0])).tolist() == pytest.approx([0, 0, 0.5, 1, 1])

    def test_time_cutoff(self):
        chi = build_chi(1.0, 0.25)
        assert chi.value(np.array([0.0, 0.25, 0.75, 1.0])).tolist() == pytest.approx([1, 1, 0, 0])
        assert chi.integral_check() == pytest.approx(-1.0, abs=1e-13)
        assert chi.derivative(np.array([0.0, 1.0])).tolist() == [0.0, 0.0]

    def test_time_cutoff_rejects_wide_ramp(self):
        with pytest.raises(ValidationError):
            TimeCutoff(T=1.0, ramp_fraction=0.5)

    def test_space_cutoff_plateau_and_support(self):
        grid = SpaceGrid(n=63)
        phi = build_phi(grid, (0.3, 0.7), (0.2, 0.8))
        x = np.array([0.1, 0.2, 0.3, 0.5, 0.7, 0.8, 0.9])
        assert phi.value(x).tolist() == pytest.approx([0, 0, 1, 1, 1, 0, 0])
        assert np.all(phi.d1(x) == 0)

    def test_space_cutoff_derivatives(self):
        phi = SpaceCutoff(grid=SpaceGrid(n=63), inner=(0.3, 0.7), outer=(0.2, 0.8))
        x, h = np.array([0.23, 0.27, 0.74, 0.78]), 1e-6
        assert np.allclose(phi.d1(x), (phi.value(x + h) - phi.value(x - h)) / (2 * h), rtol=1e-6)
        assert np.allclose(phi.d2(x), (phi.d1(x + h) - phi.d1(x - h)) / (2 * h), rtol=1e-5, atol=1e-6)

    def test_space_cutoff_rejects_bad_nesting(self):
        with pytest.raises(ValidationError):
            SpaceCutoff(grid=SpaceGrid(n=15), inner=(0.1, 0.9), outer=(0.2, 0.8))


class TestHolderNorm:
    def test_constant_field_has_zero_seminorm(self):
        field = SpaceTimeField(grid=SpaceGrid(n=7), tg=TimeGrid(T=1.0, N=4), values=np.full((5, 7), 2.0))
        report = holder_norm(field, alpha=0.5)
        assert report.seminorm == 0.0
        assert report.norm == 2.0

    def test_linear_profile(self):
        """For f = x the largest quotient sits at the widest spatial pair"""
        grid, tg = SpaceGrid(n=15), TimeGrid(T=1.0, N=4)
        values = np.tile(grid.nodes, (tg.N + 1, 1))
        report = holder_norm(SpaceTimeField(grid=grid, tg=tg, values=values), alpha=0.5, radius=4)
        assert report.seminorm == pytest.approx(0.5)
        assert report.sup_norm == pytest.approx(15 / 16)

    def test_invalid_alpha(self):
        field = SpaceTimeField.zeros(SpaceGrid(n=7), TimeGrid(T=1.0, N=4))
        with pytest.raises(ValueError):
            holder_norm(field, alpha=1.0)


class TestRegularControl:
    def test_nested_intervals(self):
        nested = default_nested_intervals((0.2, 0.8))
        assert nested.omega4 == pytest.approx((0.275, 0.725))
        assert nested.omega2 == pytest.approx((0.425, 0.575))
        assert len(list(nested.collars())) == 6
        with pytest.raises(ValidationError):
            NestedIntervals(omega=(0.2, 0.8), omega4=(0.3, 0.7), omega3=(0.35, 0.75), omega2=(0.4, 0.6))

    def test_collars_need_nodes(self):
        with pytest.raises(ValueError):
            validate_nesting(SpaceGrid(n=7), default_nested_intervals((0.2, 0.8)))

    def test_construction_properties(self):
        grid, tg = SpaceGrid(n=63), TimeGrid(T=0.5, N=64)
        solver = HeatSolver(grid=grid, tg=tg, potential=ConstantPotential(value=2.0))
        y0 = np.sin(np.pi * grid.nodes)
        result = regular_control(y0, solver, omega=(0.1, 0.9), config=RegularControlConfig(eps=1e-8, max_iter=200))

        outside = (grid.nodes <= 0.1) | (grid.nodes >= 0.9)
        assert np.all(result.h_reg.values[:, outside] == 0)
        assert np.all(result.h_reg.values[0] == 0)
        assert np.allclose(result.y.initial, y0)
        assert result.terminal_ratio <= result.hum_terminal_ratio + 1e-12
        assert result.holder_norm == pytest.approx(result.holder.sup_norm + result.holder.seminorm)
        assert result.preroll_levels == 0

    def test_terminal_state_vanishes(self):
        grid, tg = SpaceGrid(n=31), TimeGrid(T=0.5, N=32)
        solver = HeatSolver(grid=grid, tg=tg)
        config = RegularControlConfig(eps=0.0, cg_tol=1e-12, max_iter=2000)
        result = regular_control(np.sin(np.pi * grid.nodes), solver, omega=(0.1, 0.9), config=config)

        assert result.terminal_ratio <= 1e-10
        assert grid.norm(result.y.terminal) <= 1e-10 * grid.norm(result.y.initial)
        assert np.all(result.h_reg.values[0] == 0)
        # h(., T) only carries the HUM terminal mismatch
        assert result.terminal_defect <= 1e-6 * np.abs(result.h_reg.values).max()

    def test_residual_decays_at_second_order(self):
        config = RegularControlConfig(eps=1e-6, max_iter=2000)
        steps, residuals = [], []
        for n, N in ((31, 32), (63, 64), (127, 128), (255, 256)):
            grid, tg = SpaceGrid(n=n), TimeGrid(T=0.5, N=N)
            solver = HeatSolver(grid=grid, tg=tg)
            result = regular_control(np.sin(np.pi * grid.nodes), solver, omega=(0.1, 0.9), config=config)
            steps.append(grid.h)
            residuals.append(result.residual_norm)
        slope = np.polyfit(np.log(steps), np.log(residuals), 1)[0]
        assert slope == pytest.approx(2.0, abs=0.3)

    def test_preroll(self):
        grid, tg = SpaceGrid(n=63), TimeGrid(T=0.5, N=40)
        solver = HeatSolver(grid=grid, tg=tg)
        y0 = np.sin(2 * np.pi * grid.nodes)
        config = RegularControlConfig(eps=1e-8, max_iter=100, preroll=True, preroll_fraction=0.1)
        result = regular_control(y0, solver, omega=(0.1, 0.9), config=config)

        free = solver.forward(y0).values
        assert result.preroll_levels == 4
        assert np.all(result.h_reg.values[:4] == 0)
        assert np.allclose(result.y.values[:5], free[:5])

    def test_requires_omega_or_nested(self):
        solver = HeatSolver(grid=SpaceGrid(n=31), tg=TimeGrid(T=0.5, N=8))
        with pytest.raises(ValueError):
            regular_control(np.ones(31), solver)


if __name__ == "__main__":
    pytest.main([__file__, "-v", "--tb=short"])
