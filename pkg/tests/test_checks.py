import pytest

from discrete_de_rham.checks import SUITES, run_suite, run_suites, sample_cells, suites_for
from discrete_de_rham.generators import cartesian_grid
from discrete_de_rham.models import SuiteResult

SEED = 7


class TestRegistry:
    def test_complex_filter(self):
        ddr = suites_for("ddr")
        assert "stokes" in ddr and "ledger" in ddr
        assert not any(name.startswith("vem_") for name in ddr)
        assert not any(name.startswith("ddr_") for name in suites_for("vem"))
        assert suites_for("both") == list(SUITES)

    def test_unknown_suite(self, square):
        with pytest.raises(ValueError, match="unknown suite"):
            run_suite("flux", square, 1, SEED)

    def test_sample_cells(self):
        mesh = cartesian_grid(2, 4)
        assert len(sample_cells(mesh, 2, 4)) == 4
        assert sample_cells(mesh, 2, 4)[0] == (2, 0)
        assert sample_cells(mesh, 2, 0) == mesh.cell_ids(2)


class TestFastSuites:
    @pytest.mark.parametrize("name", ["stokes", "ledger", "ddr_consistency", "ddr_complex", "ddr_l2", "vem_complex"])
    def test_suite_passes_on_square(self, square, name):
        result = run_suite(name, square, 1, SEED)
        assert result.passed, result.to_dict()
        assert result.checks

    def test_ddr_suites_in_three_dimensions(self, cube):
        results = run_suites(cube, 0, SEED, names=["ddr_complex", "ddr_reduction"])
        assert all(r.passed for r in results), [r.to_dict() for r in results if not r.passed]

    def test_l2_suite_on_the_hexahedron(self, cube):
        result = run_suite("ddr_l2", cube, 1, SEED)
        assert result.passed, result.to_dict()
        stabilization = [c for c in result.checks if c.name.startswith("stabilization on polynomials")]
        assert len(stabilization) == 4

    def test_aborted_suite_is_recorded(self, square):
        result = run_suite("ddr_complex", square, -1, SEED)
        assert not result.passed
        assert "non-negative" in result.error
        assert result.checks == []

    def test_same_seed_same_residuals(self, square):
        first = run_suite("ddr_l2", square, 1, SEED).to_dict()
        second = run_suite("ddr_l2", square, 1, SEED).to_dict()
        assert first == second


@pytest.mark.slow
@pytest.mark.parametrize("name", ["ddr_commutation", "ddr_links", "ddr_reduction", "vem_consistency", "vem_reduction"])
def test_heavy_suites(triangles, name):
    result = run_suite(name, triangles, 1, SEED)
    assert result.passed, result.to_dict()


class TestSuiteResult:
    def test_thresholds_scale(self):
        result = SuiteResult("demo")
        result.add("tight", 2e-10, 1e-10)
        assert not result.passed
        result.scale_thresholds(10.0)
        assert result.passed
        assert result.checks[0].threshold == pytest.approx(1e-9)

    def test_error_fails_the_suite(self):
        assert not SuiteResult("demo", error="boom").passed

    def test_to_dict(self):
        result = SuiteResult("demo")
        result.add("exact", 0.0, 0.0, "Cell 2-0")
        data = result.to_dict()
        assert data["passed"] is True
        assert data["checks"][0] == {
            "name": "exact", "residual": 0.0, "threshold": 0.0, "passed": True, "detail": "Cell 2-0",
        }
