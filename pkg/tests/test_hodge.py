import numpy as np
import pytest

from discrete_de_rham.config import CHECK_QUAD_DEGREE, SLOPE_MARGIN
from discrete_de_rham.generators import cartesian_grid
from discrete_de_rham.hodge import (
    HodgeProblem,
    TopologyError,
    adjoint_dual_norm,
    adjoint_error_functional,
    adjoint_vector,
    assemble,
    convergence_slopes,
    eh_decomposition_residual,
    fit_slope,
    graph_gram,
    infsup_diagnostic,
    infsup_report,
    mean_functional,
    run_hodge,
    slope_ok,
    slope_verdict,
    source_vector,
    symmetry_residual,
)
from discrete_de_rham.manufactured import bubble_solution, trigonometric_solution
from discrete_de_rham.models import ERROR_COLUMNS, HodgeRun


class TestProblem:
    def test_rejects_non_trivial_topology(self, annulus):
        with pytest.raises(TopologyError, match="Betti numbers"):
            HodgeProblem(annulus, 1, 0, trigonometric_solution(2, 1))

    def test_rejects_mismatched_solution(self, square):
        with pytest.raises(ValueError, match="manufactured solution"):
            HodgeProblem(square, 1, 0, trigonometric_solution(3, 1))

    def test_improved_potential_needs_functions(self, square):
        with pytest.raises(ValueError, match="improved potential"):
            HodgeProblem(square, 1, 1, trigonometric_solution(2, 1), improved_potential=True)

    def test_unknown_source_mode(self, square):
        with pytest.raises(ValueError, match="source mode"):
            HodgeProblem(square, 0, 0, trigonometric_solution(2, 0), source="strong")


class TestAssembly:
    @pytest.mark.parametrize("k", [0, 1, 2])
    def test_symmetric_after_negating_sigma_rows(self, square, k):
        system = assemble(HodgeProblem(square, k, 1, trigonometric_solution(2, k)))
        assert symmetry_residual(system) < 1e-10

    def test_bordered_system_for_functions(self, square):
        problem = HodgeProblem(square, 0, 1, trigonometric_solution(2, 0))
        system = assemble(problem)
        assert system.bordered
        assert system.n_sigma == 0
        assert system.matrix.shape == (system.n_u + 1, system.n_u + 1)

    def test_saddle_sizes(self, cube):
        problem = HodgeProblem(cube, 2, 0, trigonometric_solution(3, 2))
        system = assemble(problem)
        assert (system.n_sigma, system.n_u) == (12, 6)
        assert system.dofs == 18

    def test_mean_functional_integrates_constants(self, square):
        problem = HodgeProblem(square, 0, 1, bubble_solution(2, 0))
        one = problem.ddr.interpolate(0, problem.solution.u)
        assert mean_functional(problem.ddr) @ one == pytest.approx(1.0)
        with pytest.raises(ValueError, match="0-forms"):
            mean_functional(problem.ddr, 1)

    def test_source_modes_agree_on_polynomial_sources(self, square):
        problem = HodgeProblem(square, 1, 1, bubble_solution(2, 1))
        assert np.allclose(source_vector(problem, "weak"), source_vector(problem, "interpolate"), atol=1e-10)


class TestExactness:
    @pytest.mark.parametrize("r", [0, 1])
    def test_constant_function(self, square, r):
        run = run_hodge(HodgeProblem(square, 0, r, bubble_solution(2, 0)))
        assert all(run.errors[c] < 1e-9 for c in ERROR_COLUMNS), run.errors

    def test_bubble_one_form(self, square):
        run = run_hodge(HodgeProblem(square, 1, 2, bubble_solution(2, 1)))
        assert all(run.errors[c] < 1e-9 for c in ERROR_COLUMNS), run.errors
        assert run.residual < 1e-10

    def test_run_records_mesh_data(self, square):
        run = run_hodge(HodgeProblem(square, 2, 0, trigonometric_solution(2, 2)), level=3)
        assert run.level == 3
        assert run.mesh_h == pytest.approx(square.h)
        assert set(run.errors) == set(ERROR_COLUMNS)


class TestConsistencyError:
    @pytest.mark.parametrize("k", [0, 1, 2])
    def test_decomposition_identity(self, square, rng, k):
        problem = HodgeProblem(square, k, 1, trigonometric_solution(2, k), quad_degree=CHECK_QUAD_DEGREE)
        assert eh_decomposition_residual(problem, rng) < 1e-10

    def test_adjoint_degree_mismatch(self, square):
        problem = HodgeProblem(square, 1, 0, trigonometric_solution(2, 1))
        with pytest.raises(ValueError, match="adjoint functional"):
            adjoint_vector(problem.ddr, 1, trigonometric_solution(2, 1).u)

    def test_adjoint_error_vanishes_on_bubbles(self, square):
        problem = HodgeProblem(square, 1, 2, bubble_solution(2, 1))
        assert adjoint_dual_norm(problem.ddr, 0, problem.solution.u) < 1e-8

    def test_adjoint_error_is_positive_for_smooth_fields(self, square):
        problem = HodgeProblem(square, 1, 0, trigonometric_solution(2, 1))
        assert adjoint_dual_norm(problem.ddr, 0, problem.solution.u) > 0

    def test_functional_is_bounded_by_its_dual_norm(self, square, rng):
        problem = HodgeProblem(square, 1, 0, trigonometric_solution(2, 1))
        ddr, u = problem.ddr, problem.solution.u
        mu = ddr.space(0).random(rng)
        value = adjoint_error_functional(ddr, 0, u, mu)
        assert value == pytest.approx(adjoint_vector(ddr, 0, u) @ mu)
        size = np.sqrt(mu @ (graph_gram(ddr, 0) @ mu))
        assert abs(value) <= adjoint_dual_norm(ddr, 0, u) * size * (1 + 1e-10)


class TestDiagnostics:
    def test_infsup_is_positive(self, square):
        assert infsup_diagnostic(HodgeProblem(square, 1, 0, trigonometric_solution(2, 1))) > 1e-3

    def test_infsup_report_flags(self):
        steady = infsup_report([1.0, 0.8, 0.7])
        assert steady["ratios"] == pytest.approx([1.0, 0.8, 0.7])
        assert steady["monotone"] and not steady["collapsed"]
        assert infsup_report([1.0, 1e-4])["collapsed"]
        assert not infsup_report([1.0, 2.0, 1.0])["monotone"]

    def test_fit_slope(self):
        h = [0.5, 0.25, 0.125]
        assert fit_slope(h, [x ** 2 for x in h]) == pytest.approx(2.0)
        assert fit_slope([0.5, 0.25], [0.0, 1.0]) is None

    def test_convergence_slopes(self):
        runs = [
            HodgeRun(level=i, mesh_h=h, dofs=10 * 4 ** i, errors={c: 3.0 * h ** 2 for c in ERROR_COLUMNS})
            for i, h in enumerate([0.5, 0.25, 0.125])
        ]
        slopes = convergence_slopes(list(reversed(runs)))
        assert slopes["total"] == pytest.approx(2.0)
        assert all(slopes[c] == pytest.approx(2.0) for c in ERROR_COLUMNS)

    @pytest.mark.parametrize("slope,expected", [(2.1, True), (1.7, False), (None, False)])
    def test_slope_ok(self, slope, expected):
        assert slope_ok(slope, 1, 0.25) is expected


    @pytest.mark.parametrize("slope,expected", [
        (2.1, "ok"), (2.43, "superconvergent"), (1.7, "slow"), (None, "undetermined"),
    ])
    def test_slope_verdict(self, slope, expected):
        assert slope_verdict(slope, 1, 0.25) == expected

    def test_superconvergent_part_lifts_the_fitted_slope(self):
        # A·h² + B·h with a large A: the fit on coarse levels overshoots the h¹ rate.
        h = [0.25, 0.125, 0.0625]
        runs = [
            HodgeRun(level=i, mesh_h=x, dofs=0, errors={"u_l2": 136.0 * x ** 2, "u_d": 12.0 * x})
            for i, x in enumerate(h)
        ]
        slopes = convergence_slopes(runs)
        assert slopes["u_d"] == pytest.approx(1.0)
        assert slope_verdict(slopes["total"], 0, 0.25) == "superconvergent"


def refinement_runs(k, r, divisions=(4, 8, 16)):
    return [
        run_hodge(HodgeProblem(cartesian_grid(2, m), k, r, trigonometric_solution(2, k)), level)
        for level, m in enumerate(divisions)
    ]


@pytest.mark.slow
def test_one_form_rate_is_in_band():
    runs = refinement_runs(1, 0)
    totals = [run.total_error for run in runs]
    assert totals[0] > totals[1] > totals[2]
    slope = convergence_slopes(runs)["total"]
    assert slope_ok(slope, 0, SLOPE_MARGIN), slope


@pytest.mark.slow
def test_zero_form_rate_is_never_slow():
    runs = refinement_runs(0, 0)
    slope = convergence_slopes(runs)["total"]
    assert slope_verdict(slope, 0, SLOPE_MARGIN) in ("ok", "superconvergent"), slope
