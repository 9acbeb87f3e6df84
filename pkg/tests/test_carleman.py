"""
Carleman tests for heatobs.

Covers the auxiliary function xi, the weight identities, the weighted sums
of the inequality and the minimal tau search on a seeded corpus.
"""
import math
import sys
from pathlib import Path

import numpy as np
import pytest
from pydantic import ValidationError

project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from heatobs.analysis.carleman.inequality import (  # noqa: E402
    CarlemanEvaluator,
    calibrate_c1,
    carleman_sides,
    min_tau_search,
    random_sine_corpus,
)
from heatobs.analysis.carleman.weights import (  # noqa: E402
    CarlemanParams,
    XiFunction,
    build_xi,
    endpoint_weight,
    tau0,
    weights,
)
from heatobs.core.mesh.base import SpaceGrid, SpaceMask, TimeGrid  # noqa: E402
from heatobs.core.pde.base import HeatSolver  # noqa: E402
from heatobs.core.potential.base import ConstantPotential, SeparablePotential, SinProfile  # noqa: E402
from heatobs.core.potential.norms import PotentialNorms, norms  # noqa: E402


@pytest.fixture
def small_setup():
    grid, tg = SpaceGrid(n=15), TimeGrid(T=0.5, N=16)
    mask = SpaceMask(grid=grid, intervals=[(0.3, 0.7)])
    return grid, tg, mask


class TestXiFunction:
    def test_mu_and_second_root(self):
        """c = 0.3 gives mu = -40/21 and the other root of xi' at 1.75"""
        xi = build_xi(SpaceGrid(n=31), 0.3)
        assert xi.mu == pytest.approx(-40.0 / 21.0)
        assert xi.second_root == pytest.approx(1.75)

    def test_symmetric_center(self):
        xi = build_xi(SpaceGrid(n=31), 0.5)
        assert xi.mu == 0.0
        assert xi.second_root is None
        assert xi.sup == pytest.approx(0.25)

    def test_verification_passes(self):
        report = build_xi(SpaceGrid(n=63), 0.3).verify()
        assert report.passed
        assert report.critical_point == pytest.approx(0.3, abs=1e-9)
        assert report.delta_xi > 0

    def test_derivatives_match_finite_differences(self):
        xi = build_xi(SpaceGrid(a=-1.0, b=2.0, n=31), 0.9)
        x, h = np.linspace(-0.5, 1.5, 9), 1e-5
        assert np.allclose(xi.d1(x), (xi.value(x + h) - xi.value(x - h)) / (2 * h), rtol=1e-6, atol=1e-8)
        assert np.allclose(xi.d2(x), (xi.d1(x + h) - xi.d1(x - h)) / (2 * h), rtol=1e-5, atol=1e-6)

    def test_center_outside_domain_rejected(self):
        with pytest.raises(ValidationError):
            XiFunction(grid=SpaceGrid(n=7), center=1.0)


class TestCarlemanParams:
    def test_lambda_alias(self):
        params = CarlemanParams.model_validate({'s': 3.0, 'lambda': 4.0})
        assert params.lam == 4.0

    def test_rejects_small_parameters(self):
        with pytest.raises(ValidationError):
            CarlemanParams(s=0.5)
        with pytest.raises(ValidationError):
            CarlemanParams(lam=1.0)


class TestWeights:
    def test_weight_identities(self, small_setup):
        grid, tg, _ = small_setup
        xi = build_xi(grid, 0.4)
        params = CarlemanParams(s=2.0, lam=3.0)
        field = weights(xi, params, grid, tg)

        theta = 1.0 / (tg.half_times * (tg.T - tg.half_times))
        S = params.s * xi.sup
        assert np.all(field.beta >= 0)
        assert np.allclose(field.beta + field.eta, np.exp(2 * params.lam * S) * theta[:, None])
        assert np.allclose(field.grad_beta, -field.grad_eta)
        assert math.isfinite(field.dt_beta_constant())

    def test_endpoint_weight_vanishes_at_ends(self, small_setup):
        grid, tg, _ = small_setup
        weight = endpoint_weight(build_xi(grid, 0.5), CarlemanParams(), grid, tg)
        assert weight.shape == (tg.N + 1, grid.n)
        assert np.all(weight[0] == 0) and np.all(weight[-1] == 0)
        assert np.all((weight >= 0) & (weight < 1))
        assert np.all(weight[tg.N // 2] > 0)

    def test_tau0_values(self):
        """tau0 = C (T + T^2 + T^2 |||V|||)"""
        assert tau0(1.0, PotentialNorms.from_components(sup=0.0)) == pytest.approx(2.0)
        assert tau0(1.0, PotentialNorms.from_components(sup=16.0)) == pytest.approx(6.0)
        assert tau0(2.0, PotentialNorms.from_components(sup=81.0)) == pytest.approx(42.0)
        with pytest.raises(ValueError):
            tau0(1.0, PotentialNorms.from_components(sup=1.0), C=0.0)


class TestCarlemanSides:
    def test_adjoint_solution_has_no_source(self, small_setup):
        """Fields from the adjoint scheme make f vanish in the adjoint form"""
        grid, tg, mask = small_setup
        V = SeparablePotential(V0=SinProfile(amplitude=10.0))
        q = HeatSolver(grid=grid, tg=tg, potential=V).adjoint(np.sin(np.pi * grid.nodes))
        sides = carleman_sides(q, V, build_xi(grid, 0.5), CarlemanParams(tau=1.0), mask, adjoint_form=True)
        assert sides.rhs_f <= 1e-20 * sides.lhs
        assert sides.rhs_local > 0

    def test_default_form_adds_the_potential(self, small_setup):
        """w_t + lap w + V w vanishes on adjoint fields of the opposite potential"""
        grid, tg, mask = small_setup
        V = SeparablePotential(V0=SinProfile(amplitude=10.0))
        flipped = SeparablePotential(V0=SinProfile(amplitude=-10.0))
        q = HeatSolver(grid=grid, tg=tg, potential=flipped).adjoint(np.sin(np.pi * grid.nodes))
        xi = build_xi(grid, 0.5)
        default = carleman_sides(q, V, xi, CarlemanParams(tau=1.0), mask)
        assert default.rhs_f <= 1e-20 * default.lhs
        assert carleman_sides(q, V, xi, CarlemanParams(tau=1.0), mask, adjoint_form=True).rhs_f > 0

    def test_holds_depends_on_c1(self, small_setup):
        grid, tg, mask = small_setup
        w = random_sine_corpus(grid, tg, 1, seed=5, modes=4)[0]
        evaluator = CarlemanEvaluator(w, ConstantPotential(value=1.0), build_xi(grid, 0.5), CarlemanParams(), mask)
        assert not evaluator.sides(1.0, 1e-12).holds
        assert evaluator.sides(1.0, 1e12).holds
        sides = evaluator.sides(1.0, 1.0)
        assert sides.lhs == pytest.approx(sides.lhs3 + sides.lhs1 + sides.lhs_neg1)

    def test_mask_grid_mismatch(self, small_setup):
        grid, tg, _ = small_setup
        w = random_sine_corpus(grid, tg, 1)[0]
        other = SpaceMask(grid=SpaceGrid(n=31), intervals=[(0.3, 0.7)])
        with pytest.raises(ValueError):
            CarlemanEvaluator(w, ConstantPotential(), build_xi(grid, 0.5), CarlemanParams(), other)


class TestTauSearch:
    def test_corpus_is_seeded(self, small_setup):
        grid, tg, _ = small_setup
        first = random_sine_corpus(grid, tg, 2, seed=11, modes=4)
        second = random_sine_corpus(grid, tg, 2, seed=11, modes=4)
        assert len(first) == 2
        assert np.array_equal(first[1].values, second[1].values)
        assert first[0].values.shape == (tg.N + 1, grid.n)

    def test_calibrated_search_is_verified(self, small_setup):
        grid, tg, mask = small_setup
        V = ConstantPotential(value=5.0)
        xi = build_xi(grid, 0.5)
        params = CarlemanParams(s=2.0, lam=2.0)
        corpus = random_sine_corpus(grid, tg, 3, seed=1, modes=4)

        C1 = calibrate_c1(corpus, V, xi, params, mask, tau_ref=1.0, margin=1.05)
        assert C1 > 0
        result = min_tau_search(corpus, V, xi, params.model_copy(update={'C1': C1}), mask, tau_hi=1.0, iterations=30)
        assert result.found
        assert result.verified
        assert 0 < result.tau_star <= 1.0
        assert result.min_slack >= 0
        assert result.evaluations > 2

    def test_search_reports_failure_at_tau_hi(self, small_setup):
        grid, tg, mask = small_setup
        corpus = random_sine_corpus(grid, tg, 2, seed=2, modes=4)
        params = CarlemanParams(C1=1e-12)
        result = min_tau_search(corpus, ConstantPotential(), build_xi(grid, 0.5), params, mask, tau_hi=1.0)
        assert not result.found
        assert result.tau_star is None
        assert result.reason

    def test_tau0_of_configured_potential(self, small_setup):
        grid, tg, _ = small_setup
        value = tau0(tg.T, norms(ConstantPotential(value=4.0), grid, tg))
        assert value == pytest.approx(0.5 + 0.25 + 0.25 * 2.0)


if __name__ == "__main__":
    pytest.main([__file__, "-v", "--tb=short"])
