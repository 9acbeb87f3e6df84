"""
PDE solver tests for heatobs.

Checks the trapezoidal forward and adjoint solvers against exact discrete
solutions, the discrete duality identity, and the diagnostics built on them.
"""
import math
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError

project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from heatobs.core.mesh.base import ObservationRegion, SpaceGrid, TimeGrid  # noqa: E402
from heatobs.core.pde.base import (  # noqa: E402
    HalfStepSource,
    HeatSolver,
    SolverError,
    SpaceTimeField,
    inject,
    laplacian,
    observation_trace,
)
from heatobs.core.pde.diagnostics import (  # noqa: E402
    dissipativity_check,
    duality_gap,
    energy_ratio,
    energy_report,
    field_frame,
    write_field_csv,
)
from heatobs.core.potential.base import (  # noqa: E402
    ConstantPotential,
    FunctionPotential,
    Poly1pProfile,
    SeparablePotential,
    SinProfile,
)
from heatobs.core.potential.norms import norms  # noqa: E402


def _discrete_eigenvalue(grid: SpaceGrid, k: int = 1) -> float:
    return 4.0 / grid.h ** 2 * math.sin(k * math.pi * grid.h / 2) ** 2


class TestForwardSolve:
    def test_first_mode_decays_by_exact_factor(self):
        """sin(pi x) is an eigenvector of -Delta_h; each step multiplies it by a Cayley factor"""
        grid, tg = SpaceGrid(n=31), TimeGrid(T=0.1, N=20)
        y0 = np.sin(np.pi * grid.nodes)
        y = HeatSolver(grid=grid, tg=tg, potential=ConstantPotential(value=2.0)).forward(y0)

        a = _discrete_eigenvalue(grid) + 2.0
        factor = (1 - 0.5 * tg.dt * a) / (1 + 0.5 * tg.dt * a)
        assert np.allclose(y.terminal, factor ** tg.N * y0, rtol=1e-10, atol=1e-14)

    @pytest.mark.parametrize("n", [32, 64])
    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_sine_modes_follow_scalar_recursion(self, n, k):
        grid, tg = SpaceGrid(n=n), TimeGrid(T=0.05, N=32)
        mode = np.sin(k * np.pi * grid.nodes)
        solver = HeatSolver(grid=grid, tg=tg)

        a = _discrete_eigenvalue(grid, k)
        expected = ((1 - 0.5 * tg.dt * a) / (1 + 0.5 * tg.dt * a)) ** tg.N * mode
        for computed in (solver.forward(mode).terminal, solver.adjoint(mode).initial):
            assert np.linalg.norm(computed - expected) <= 1e-10 * np.linalg.norm(expected)

    def test_manufactured_solution_converges_at_second_order(self):
        """y = exp(-t) sin(pi x) (1 + x) with V = 2 sin(2 pi x) (1 + t)"""
        V = SeparablePotential(V0=SinProfile(amplitude=2.0, frequency=2.0), g=Poly1pProfile(beta=1.0))

        def exact(x, t):
            return np.exp(-t) * np.sin(np.pi * x) * (1 + x)

        def forcing(x, t):
            y_xx = np.exp(-t) * (-np.pi ** 2 * np.sin(np.pi * x) * (1 + x) + 2 * np.pi * np.cos(np.pi * x))
            return -exact(x, t) - y_xx + 2.0 * np.sin(2 * np.pi * x) * (1 + t) * exact(x, t)

        errors = []
        for n, N in ((31, 16), (63, 32), (127, 64), (255, 128)):
            grid, tg = SpaceGrid(n=n), TimeGrid(T=0.5, N=N)
            x, t = grid.nodes[None, :], tg.half_times[:, None]
            source = HalfStepSource(grid=grid, tg=tg, values=forcing(x, t))
            y = HeatSolver(grid=grid, tg=tg, potential=V).forward(exact(grid.nodes, 0.0), source)
            errors.append(grid.norm(y.terminal - exact(grid.nodes, tg.T)))

        slopes = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
        assert np.all(slopes >= 1.8)

    def test_field_shape_and_role(self):
        grid, tg = SpaceGrid(n=15), TimeGrid(T=0.5, N=8)
        y = HeatSolver(grid=grid, tg=tg).forward(np.ones(grid.n))
        assert y.values.shape == (9, 15)
        assert y.role == 'state'
        assert np.array_equal(y.initial, np.ones(grid.n))

    def test_residual_vanishes_with_source(self):
        grid, tg = SpaceGrid(n=20), TimeGrid(T=0.3, N=12)
        rng = np.random.default_rng(7)
        V = SeparablePotential(V0=SinProfile(amplitude=5.0, frequency=3.0))
        solver = HeatSolver(grid=grid, tg=tg, potential=V)
        source = HalfStepSource(grid=grid, tg=tg, values=rng.standard_normal((tg.N, grid.n)))
        y = solver.forward(rng.standard_normal(grid.n), source)
        assert solver.residual_norm(y, source) < 1e-9

    def test_wrong_length_rejected(self):
        solver = HeatSolver(grid=SpaceGrid(n=10), tg=TimeGrid(T=1.0, N=4))
        with pytest.raises(ValueError):
            solver.forward(np.zeros(9))

    def test_non_finite_potential_raises_solver_error(self):
        V = FunctionPotential(fn=lambda x, t: np.where(x > 0.5, np.inf, 0.0))
        solver = HeatSolver(grid=SpaceGrid(n=10), tg=TimeGrid(T=1.0, N=4), potential=V)
        with pytest.raises(SolverError):
            solver.forward(np.ones(10))

    def test_strongly_negative_potential_still_steps(self):
        """dt * ||V_-|| >= 2 triggers the singularity check, which passes off the spectrum"""
        grid, tg = SpaceGrid(n=15), TimeGrid(T=1.0, N=2)
        y = HeatSolver(grid=grid, tg=tg, potential=ConstantPotential(value=-7.0)).forward(np.sin(np.pi * grid.nodes))
        assert np.all(np.isfinite(y.values))


class TestAdjoint:
    def test_duality_identity(self):
        """<y^N, q^N> - <y^0, q^0> equals the source pairing to round-off"""
        grid, tg = SpaceGrid(n=24), TimeGrid(T=0.4, N=16)
        rng = np.random.default_rng(3)
        V = SeparablePotential(V0=SinProfile(amplitude=-30.0, frequency=2.0))
        solver = HeatSolver(grid=grid, tg=tg, potential=V)
        source = HalfStepSource(grid=grid, tg=tg, values=rng.standard_normal((tg.N, grid.n)))
        gap = duality_gap(solver, rng.standard_normal(grid.n), rng.standard_normal(grid.n), source)
        assert gap.relative < 1e-11

    def test_duality_identity_on_random_trials(self):
        grid, tg = SpaceGrid(n=64), TimeGrid(T=0.5, N=128)
        rng = np.random.default_rng(100)
        for _ in range(100):
            V = SeparablePotential(
                V0=SinProfile(amplitude=rng.uniform(-20.0, 20.0), frequency=rng.uniform(0.5, 4.0),
                              phase=rng.uniform(0.0, np.pi)),
                g=Poly1pProfile(beta=rng.uniform(-1.0, 2.0)),
            )
            solver = HeatSolver(grid=grid, tg=tg, potential=V)
            source = HalfStepSource(grid=grid, tg=tg, values=rng.standard_normal((tg.N, grid.n)))
            gap = duality_gap(solver, rng.standard_normal(grid.n), rng.standard_normal(grid.n), source)
            assert gap.relative <= 1e-11

    def test_adjoint_terminal_is_data(self):
        grid, tg = SpaceGrid(n=9), TimeGrid(T=0.2, N=5)
        qT = np.linspace(-1, 1, grid.n)
        q = HeatSolver(grid=grid, tg=tg).adjoint(qT)
        assert np.array_equal(q.terminal, qT)
        assert q.role == 'adjoint'


class TestObservationTrace:
    def test_trace_vanishes_outside_region(self):
        grid, tg = SpaceGrid(n=15), TimeGrid(T=1.0, N=4)
        region = ObservationRegion.build(grid, tg, [(0.25, 0.5)], [(0.0, 0.5)])
        q = HeatSolver(grid=grid, tg=tg).adjoint(np.ones(grid.n))
        trace = observation_trace(q, region)
        assert np.all(trace.values[:, ~region.mask.mask] == 0)
        assert np.all(trace.values[2:] == 0)

    def test_inject_scales_by_weight_factor(self):
        grid, tg = SpaceGrid(n=15), TimeGrid(T=1.0, N=4)
        region = ObservationRegion.build(grid, tg, [(0.25, 0.5)], [(0.0, 0.375)])
        trace = HalfStepSource(grid=grid, tg=tg, values=np.where(region.mask.mask, 1.0, 0.0)[None, :].repeat(4, 0),
                               mask=region.mask)
        source = inject(trace, region)
        assert source.values[1, 4] == pytest.approx(math.sqrt(0.5))
        assert source.values[0, 4] == pytest.approx(1.0)

    def test_source_outside_mask_rejected(self):
        grid, tg = SpaceGrid(n=15), TimeGrid(T=1.0, N=4)
        region = ObservationRegion.build(grid, tg, [(0.25, 0.5)])
        with pytest.raises(ValidationError):
            HalfStepSource(grid=grid, tg=tg, values=np.ones((tg.N, grid.n)), mask=region.mask)


class TestDiagnostics:
    def test_laplacian_of_first_mode(self):
        grid = SpaceGrid(n=31)
        u = np.sin(np.pi * grid.nodes)
        assert np.allclose(-laplacian(u, grid.h), _discrete_eigenvalue(grid) * u)

    def test_dissipativity_with_growth(self):
        """V = -50 grows the adjoint backward at rate about 50 - pi^2, so c_min is near 0.8"""
        grid, tg = SpaceGrid(n=63), TimeGrid(T=0.25, N=256)
        V = ConstantPotential(value=-50.0)
        q = HeatSolver(grid=grid, tg=tg, potential=V).adjoint(np.sin(np.pi * grid.nodes))
        report = dissipativity_check(q, norms(V, grid, tg), c=1.0)
        assert report.holds
        assert not report.holds_at_zero
        assert report.c_min == pytest.approx((50 - math.pi ** 2) / 50, rel=2e-2)

    def test_dissipativity_without_negative_part(self):
        grid, tg = SpaceGrid(n=15), TimeGrid(T=0.25, N=16)
        V = ConstantPotential(value=3.0)
        q = HeatSolver(grid=grid, tg=tg, potential=V).adjoint(np.sin(np.pi * grid.nodes))
        report = dissipativity_check(q, norms(V, grid, tg))
        assert report.holds_at_zero
        assert report.c_min == 0.0

    def test_energy_ratio_below_growth_factor(self):
        grid, tg = SpaceGrid(n=31), TimeGrid(T=0.5, N=32)
        V = ConstantPotential(value=-4.0)
        y = HeatSolver(grid=grid, tg=tg, potential=V).forward(np.sin(2 * np.pi * grid.nodes))
        result = energy_ratio(y, norms(V, grid, tg))
        assert 0 < result.ratio < result.growth_factor
        assert result.growth_factor == pytest.approx(math.exp(2.0))

    def test_energy_report_of_zero_field(self):
        report = energy_report(SpaceTimeField.zeros(SpaceGrid(n=5), TimeGrid(T=1.0, N=3)))
        assert report.max_energy == 0.0
        assert report.gradient_energy == 0.0

    def test_field_frame_layout(self, tmp_path):
        """Rows run over time first, then space"""
        grid, tg = SpaceGrid(n=4), TimeGrid(T=1.0, N=3)
        values = np.arange(16, dtype=float).reshape(4, 4)
        field = SpaceTimeField(grid=grid, tg=tg, values=values)
        frame = field_frame(field)
        assert len(frame) == 16
        assert list(frame.columns) == ["t", "x", "value"]
        assert frame["value"].tolist() == list(range(16))
        assert frame["t"].iloc[4] == pytest.approx(1.0 / 3.0)

        path = write_field_csv(field, tmp_path / "field.csv")
        assert pd.read_csv(path).shape == (16, 3)


if __name__ == "__main__":
    pytest.main([__file__, "-v", "--tb=short"])
