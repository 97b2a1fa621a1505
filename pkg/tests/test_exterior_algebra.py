import numpy as np
import pytest

from discrete_de_rham.exterior_algebra import (
    AltForm,
    alt_basis,
    alt_dim,
    contraction,
    hodge_star,
    hodge_star_inv,
    inner,
    permutation_sign,
    proxy_decode,
    proxy_encode,
    trace_alt,
    wedge,
)


def random_form(rng, dim, degree):
    return AltForm(dim, degree, rng.standard_normal(alt_dim(dim, degree)))


class TestIndexing:
    def test_dimensions_are_binomials(self):
        assert [alt_dim(3, k) for k in range(5)] == [1, 3, 3, 1, 0]
        assert alt_dim(2, -1) == 0

    def test_basis_is_lexicographic(self):
        assert alt_basis(3, 2) == ((0, 1), (0, 2), (1, 2))
        assert alt_basis(2, 3) == ()

    def test_negative_degree_is_rejected(self):
        with pytest.raises(ValueError):
            alt_basis(2, -1)

    def test_permutation_sign(self):
        assert permutation_sign((0, 1, 2)) == 1
        assert permutation_sign((1, 0, 2)) == -1
        assert permutation_sign((2, 0, 1)) == 1
        assert permutation_sign((0, 0)) == 0

    def test_wrong_coefficient_count(self):
        with pytest.raises(ValueError, match="needs 3 coefficients"):
            AltForm(3, 1, [1.0, 2.0])


class TestWedge:
    def test_basis_product(self):
        dx0 = AltForm.basis(3, (0,))
        dx1 = AltForm.basis(3, (1,))
        assert wedge(dx0, dx1).allclose(AltForm.basis(3, (0, 1)))
        assert wedge(dx1, dx0).allclose(-AltForm.basis(3, (0, 1)))

    @pytest.mark.parametrize("i,j", [(1, 1), (1, 2), (0, 2), (2, 1)])
    def test_graded_commutativity(self, rng, i, j):
        a, b = random_form(rng, 3, i), random_form(rng, 3, j)
        assert wedge(a, b).allclose((-1) ** (i * j) * wedge(b, a), atol=1e-12)

    def test_associativity(self, rng):
        a, b, c = (random_form(rng, 3, 1) for _ in range(3))
        assert wedge(wedge(a, b), c).allclose(wedge(a, wedge(b, c)), atol=1e-12)

    def test_beyond_dimension_is_zero(self, rng):
        out = wedge(random_form(rng, 2, 2), random_form(rng, 2, 1))
        assert out.degree == 3
        assert out.coeffs.size == 0


class TestHodgeStar:
    @pytest.mark.parametrize("dim", [1, 2, 3])
    def test_inverse(self, rng, dim):
        for degree in range(dim + 1):
            a = random_form(rng, dim, degree)
            assert hodge_star_inv(hodge_star(a)).allclose(a, atol=1e-12)

    def test_two_dimensional_rotation(self):
        assert hodge_star(AltForm.basis(2, (0,))).allclose(AltForm.basis(2, (1,)))
        assert hodge_star(AltForm.basis(2, (1,))).allclose(-AltForm.basis(2, (0,)))

    @pytest.mark.parametrize("degree", [0, 1, 2, 3])
    def test_wedge_with_star_is_inner_product_volume(self, rng, degree):
        a, b = random_form(rng, 3, degree), random_form(rng, 3, degree)
        volume = wedge(a, hodge_star(b))
        assert volume.coeffs[0] == pytest.approx(inner(a, b), abs=1e-12)


class TestContractionAndTrace:
    def test_contraction_of_basis_form(self):
        out = contraction(AltForm.basis(3, (0, 1)), [1.0, 0.0, 0.0])
        assert out.allclose(AltForm.basis(3, (1,)))

    def test_contraction_is_an_antiderivation(self, rng):
        a, b = random_form(rng, 3, 1), random_form(rng, 3, 1)
        v = rng.standard_normal(3)
        lhs = contraction(wedge(a, b), v)
        rhs = float(a.coeffs @ v) * b - float(b.coeffs @ v) * a
        assert lhs.allclose(rhs, atol=1e-12)

    def test_contraction_of_scalar_is_rejected(self):
        with pytest.raises(ValueError):
            contraction(AltForm(2, 0, [1.0]), [1.0, 0.0])

    def test_trace_onto_coordinate_plane(self):
        form = AltForm.from_dict(3, 2, {(0, 1): 2.0, (1, 2): 5.0})
        traced = trace_alt(form, np.eye(3)[:, :2])
        assert traced.dim == 2
        assert traced.coeffs == pytest.approx([2.0])

    def test_trace_rejects_non_orthonormal_frame(self):
        with pytest.raises(ValueError, match="not orthonormal"):
            trace_alt(AltForm.basis(3, (0,)), np.array([[2.0], [0.0], [0.0]]))


class TestProxies:
    def test_three_dimensional_two_form(self):
        form = proxy_encode([1.0, 2.0, 3.0], 2, 3)
        assert form.coeffs == pytest.approx([3.0, -2.0, 1.0])
        assert proxy_decode(form) == pytest.approx([1.0, 2.0, 3.0])

    def test_two_dimensional_conventions(self):
        assert proxy_encode([1.0, 2.0], 1, 2, "identity").coeffs == pytest.approx([1.0, 2.0])
        rotated = proxy_encode([1.0, 2.0], 1, 2)
        assert rotated.coeffs == pytest.approx([-2.0, 1.0])
        assert proxy_decode(rotated) == pytest.approx([1.0, 2.0])

    def test_no_proxy_in_one_dimension(self):
        with pytest.raises(ValueError):
            proxy_encode(1.0, 0, 1)
