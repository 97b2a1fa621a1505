import numpy as np
import pytest

from discrete_de_rham.exterior_algebra import alt_dim
from discrete_de_rham.polynomial_forms import FormField, PolyForm, exterior_derivative, n_monomials
from discrete_de_rham.local_spaces import (
    ConditioningError,
    dimension_ledger,
    guarded_solve,
    spaces_for,
    trimmed_dimension,
)


class TestTrimmedDimension:
    @pytest.mark.parametrize("d,r,ell,expected", [
        (2, 1, 1, 3),    # lowest-order edge elements on triangles
        (3, 1, 1, 6),
        (3, 1, 2, 4),
        (3, 1, 3, 1),
        (3, 2, 1, 20),
        (2, 0, 1, 0),
    ])
    def test_closed_form(self, d, r, ell, expected):
        assert trimmed_dimension(d, r, ell) == expected

    def test_zero_forms_are_full(self):
        assert trimmed_dimension(2, 3, 0) == n_monomials(2, 3)
        assert trimmed_dimension(3, 0, 0) == 1


class TestFamilies:
    def test_full_space_is_orthonormal(self, square):
        spaces = spaces_for(square)
        basis = spaces.full_space((2, 0), 2, 1)
        assert basis.dim == n_monomials(2, 2) * alt_dim(2, 1)
        assert np.allclose(basis.mass, np.eye(basis.dim), atol=1e-10)

    def test_koszul_dimensions(self, square):
        spaces = spaces_for(square)
        fid = (2, 0)
        assert spaces.koszul_space(fid, 0, 1).dim == 0
        assert spaces.koszul_space(fid, 1, 0).dim == 2
        assert spaces.koszul_space(fid, 1, 1).dim == 1
        assert spaces.koszul_space(fid, 1, 2).dim == 0

    def test_image_of_d_on_zero_forms(self, square):
        # d P_2Λ^0 on a face: quadratics modulo constants
        assert spaces_for(square).image_d_space((2, 0), 2, 0).dim == 5

    def test_cache_is_shared(self, square):
        spaces = spaces_for(square)
        first = spaces.trimmed_space((2, 1), 1, 1)
        assert spaces_for(square) is spaces
        assert spaces.trimmed_space((2, 1), 1, 1) is first

    def test_unknown_tag(self, square):
        with pytest.raises(ValueError, match="unknown space tag"):
            spaces_for(square).space((2, 0), "serendipity", 1, 1)


class TestDimensionLedger:
    def test_identities_on_square(self, square):
        records = dimension_ledger(square, 2, cells=[(1, 0), (2, 0)])
        assert len(records) == 3 * 2 + 3 * 3
        for record in records:
            assert record["decomposition"], record
            assert record["trimmed_split"], record
            assert record["top_degree"], record
            assert record["closed_form"], record

    def test_identities_on_hexahedron(self, cube):
        records = dimension_ledger(cube, 1, cells=[(2, 0), (3, 0)])
        assert all(r["decomposition"] and r["closed_form"] and r["top_degree"] for r in records)

    def test_top_degree_trimmed_space(self, triangles):
        records = dimension_ledger(triangles, 2, cells=[(2, 0)])
        top = [r for r in records if r["ell"] == 2]
        assert [r["trimmed"] for r in top] == [0, 1, 3]


class TestProjectionAndDecomposition:
    def test_projection_reproduces_polynomials(self, triangles, rng):
        fid = (2, 0)
        frame = triangles.cell(fid).frame
        spaces = spaces_for(triangles)
        p = PolyForm(2, 0, 2, rng.standard_normal((n_monomials(2, 2), 1)), frame)
        basis = spaces.full_space(fid, 2, 0)
        from_poly = basis.as_poly(spaces.l2_project(basis, p), frame)
        from_field = basis.as_poly(spaces.l2_project(basis, FormField.from_poly(p)), frame)
        assert np.allclose(from_poly.coeffs, p.coeffs, atol=1e-9)
        assert np.allclose(from_field.coeffs, p.coeffs, atol=1e-9)

    def test_projection_rejects_wrong_degree(self, square, rng):
        spaces = spaces_for(square)
        frame = square.cell((2, 0)).frame
        p = PolyForm(2, 1, 1, rng.standard_normal((3, 2)), frame)
        with pytest.raises(ValueError, match="cannot project"):
            spaces.l2_project(spaces.full_space((2, 0), 1, 0), p)

    @pytest.mark.parametrize("r", [0, 1, 2])
    def test_decompose_reconstructs(self, square, rng, r):
        fid = (2, 3)
        frame = square.cell(fid).frame
        omega = PolyForm(2, 1, r, rng.standard_normal((n_monomials(2, r), 2)), frame)
        mu, nu = spaces_for(square).decompose(fid, omega)
        rebuilt = (exterior_derivative(mu) + nu).with_degree(r)
        assert np.allclose(rebuilt.coeffs, omega.coeffs, atol=1e-9)

    def test_trimmed_decompose_reconstructs(self, cube, rng):
        fid = (3, 0)
        spaces = spaces_for(cube)
        frame = cube.cell(fid).frame
        trimmed = spaces.trimmed_space(fid, 1, 2)
        omega = trimmed.as_poly(rng.standard_normal(trimmed.dim), frame)
        mu, nu = spaces.trimmed_decompose(fid, omega)
        assert mu.form_degree == 1 and nu.form_degree == 2
        rebuilt = (exterior_derivative(mu) + nu).with_degree(1)
        assert np.allclose(rebuilt.coeffs, omega.coeffs, atol=1e-9)

    def test_decompose_needs_positive_degree(self, square):
        omega = PolyForm.zero(2, 0, 1, square.cell((2, 0)).frame)
        with pytest.raises(ValueError, match="degree at least 1"):
            spaces_for(square).decompose((2, 0), omega)


class TestConditioning:
    def test_singular_solve_is_rejected(self):
        A = np.array([[1.0, 1.0], [1.0, 1.0]])
        with pytest.raises(ConditioningError, match="condition number"):
            guarded_solve(A, np.ones(2), "test solve")

    def test_well_conditioned_solve(self):
        A = np.array([[2.0, 0.0], [0.0, 4.0]])
        assert guarded_solve(A, np.array([2.0, 2.0]), "test solve") == pytest.approx([1.0, 0.5])

    def test_empty_solve(self):
        assert guarded_solve(np.zeros((0, 0)), np.zeros(0), "empty").shape == (0,)
