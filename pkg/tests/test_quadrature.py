from dataclasses import replace
from math import factorial

import numpy as np
import pytest

from discrete_de_rham.exterior_algebra import alt_dim
from discrete_de_rham.generators import distort, simplicial_grid
from discrete_de_rham.local_spaces import spaces_for, star_op
from discrete_de_rham.polynomial_forms import FormField, PolyForm, n_monomials
from discrete_de_rham.quadrature import (
    QuadratureError,
    cell_rule,
    integrate_field_wedge,
    integrate_wedge,
    l2_inner,
    mass_matrix,
    monomial_mass,
    pairing_matrix,
    simplex_rule,
    stokes_residual,
)


def random_poly(rng, d, ell, r, frame):
    return PolyForm(d, ell, r, rng.standard_normal((n_monomials(d, r), alt_dim(d, ell))), frame)


class TestSimplexRules:
    @pytest.mark.parametrize("dim", [1, 2, 3])
    def test_weights_sum_to_volume(self, dim):
        rule = simplex_rule(dim, 5)
        assert rule.weights.sum() == pytest.approx(1.0 / factorial(dim))

    def test_exact_monomial(self):
        rule = simplex_rule(2, 4)
        x, y = rule.cartesian().T
        # ∫ x² y² over the reference triangle = 2! 2! / 6!
        assert rule.weights @ (x**2 * y**2) == pytest.approx(4.0 / 720.0, abs=1e-15)

    def test_points_are_inside(self):
        rule = simplex_rule(3, 9)
        assert np.all(rule.points >= 0.0)
        assert np.allclose(rule.points.sum(axis=1), 1.0)

    def test_degree_cap(self):
        with pytest.raises(QuadratureError, match="maximum"):
            simplex_rule(2, 22)
        with pytest.raises(QuadratureError):
            simplex_rule(2, -1)


class TestCellRules:
    def test_square_area_and_moment(self, square):
        total = 0.0
        moment = 0.0
        for fid in square.cell_ids(2):
            q = cell_rule(square, fid, 2)
            total += q.weights.sum()
            moment += q.weights @ q.x[:, 0] ** 2
        assert total == pytest.approx(1.0)
        assert moment == pytest.approx(1.0 / 3.0)

    def test_edge_length(self, cube):
        q = cell_rule(cube, (1, 0), 3)
        assert q.weights.sum() == pytest.approx(1.0)
        assert q.y.shape == (len(q.weights), 1)

    def test_mass_of_constants_is_measure(self, triangles):
        for fid in triangles.cell_ids(2):
            assert monomial_mass(triangles, fid, 0, 0)[0, 0] == pytest.approx(triangles.cell(fid).measure)

    def test_mass_is_symmetric_positive(self, cube):
        M = monomial_mass(cube, (3, 0), 2, 2)
        assert np.allclose(M, M.T)
        assert np.linalg.eigvalsh(M).min() > 0


class TestStokes:
    @pytest.mark.parametrize("fixture", ["square", "cube", "triangles"])
    def test_stokes_on_every_cell(self, request, rng, fixture):
        mesh = request.getfixturevalue(fixture)
        for d in range(1, mesh.ambient_dim + 1):
            for fid in mesh.cell_ids(d):
                frame = mesh.cell(fid).frame
                for ell in range(d):
                    a = random_poly(rng, d, ell, 2, frame)
                    b = random_poly(rng, d, d - ell - 1, 2, frame)
                    assert stokes_residual(mesh, fid, a, b) < 1e-10

    def test_stokes_on_distorted_simplices(self, rng):
        mesh = distort(simplicial_grid(2, 3), 0.03, seed=2)
        for fid in mesh.cell_ids(2):
            frame = mesh.cell(fid).frame
            a = random_poly(rng, 2, 0, 3, frame)
            b = random_poly(rng, 2, 1, 3, frame)
            assert stokes_residual(mesh, fid, a, b) < 1e-10

    def test_degree_mismatch(self, square, rng):
        frame = square.cell((2, 0)).frame
        a = random_poly(rng, 2, 1, 1, frame)
        with pytest.raises(ValueError, match="degree mismatch"):
            stokes_residual(square, (2, 0), a, a)


class TestIntegrals:
    def test_wedge_of_coordinate_forms(self, square):
        fid = (2, 0)
        frame = square.cell(fid).frame
        one = PolyForm(2, 0, 0, [[1.0]], frame)
        volume = PolyForm(2, 2, 0, [[1.0]], frame)
        assert integrate_wedge(square, fid, one, volume) == pytest.approx(0.25)
        assert l2_inner(square, fid, one, one) == pytest.approx(0.25)

    def test_field_wedge_matches_polynomial_integral(self, square, rng):
        fid = (2, 1)
        frame = square.cell(fid).frame
        a = random_poly(rng, 2, 1, 2, frame)
        b = random_poly(rng, 2, 1, 1, frame)
        exact = integrate_wedge(square, fid, a, b)
        assert integrate_field_wedge(square, fid, FormField.from_poly(a), b, 6) == pytest.approx(exact, abs=1e-12)

    def test_l2_inner_matches_pointwise_quadrature(self, rng):
        mesh = simplicial_grid(2, 1)
        fid = (2, 0)
        frame = mesh.cell(fid).frame
        p = random_poly(rng, 2, 0, 2, frame)
        field = FormField.from_poly(p)
        q = cell_rule(mesh, fid, 6)
        direct = q.weights @ field(q.x)[:, 0] ** 2
        assert l2_inner(mesh, fid, p, p) == pytest.approx(direct, rel=1e-12)

    @pytest.mark.parametrize("ell", [0, 1, 2])
    def test_basis_gram_matrices(self, square, ell):
        basis = spaces_for(square).full_space((2, 0), 1, ell)
        M = mass_matrix(square, basis)
        assert np.allclose(M, np.eye(basis.dim), atol=1e-10)
        starred = replace(basis, degree=2 - ell, columns=star_op(2, basis.poly_degree, ell) @ basis.columns)
        assert np.allclose(pairing_matrix(square, basis, starred), M, atol=1e-10)

    def test_pairing_needs_one_cell(self, square):
        spaces = spaces_for(square)
        with pytest.raises(ValueError, match="different cells"):
            pairing_matrix(square, spaces.full_space((2, 0), 0, 1), spaces.full_space((2, 1), 0, 1))
