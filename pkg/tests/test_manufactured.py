import numpy as np
import pytest

from discrete_de_rham.manufactured import (
    bubble_solution,
    manufactured_solution,
    trigonometric_solution,
)

STEP = 1e-6


def partial(field, x, i):
    e = np.zeros(x.shape[1])
    e[i] = STEP
    return (field(x + e) - field(x - e)) / (2 * STEP)


@pytest.fixture
def points(rng):
    return rng.uniform(0.05, 0.95, size=(6, 2))


class TestTrigonometric:
    @pytest.mark.parametrize("n,k", [(1, 0), (1, 1), (2, 0), (2, 1), (2, 2), (3, 1), (3, 2)])
    def test_source_is_scaled_solution(self, rng, n, k):
        sol = trigonometric_solution(n, k)
        x = rng.uniform(size=(5, n))
        assert np.allclose(sol.source(x), n * np.pi ** 2 * sol.u(x), atol=1e-10)

    def test_gradient(self, points):
        sol = trigonometric_solution(2, 0)
        expected = np.column_stack([partial(sol.u, points, i)[:, 0] for i in range(2)])
        assert np.allclose(sol.du(points), expected, atol=1e-6)
        assert sol.sigma is None

    def test_curl_and_divergence_in_2d(self, points):
        sol = trigonometric_solution(2, 1)
        da = [partial(sol.u, points, i)[:, 0] for i in range(2)]
        db = [partial(sol.u, points, i)[:, 1] for i in range(2)]
        assert np.allclose(sol.du(points)[:, 0], db[0] - da[1], atol=1e-6)
        # σ = δu = -div u
        assert np.allclose(sol.sigma(points)[:, 0], -(da[0] + db[1]), atol=1e-6)

    def test_natural_boundary_traces_vanish(self, rng):
        sol = trigonometric_solution(2, 1)
        t = rng.uniform(size=4)
        for side in (0.0, 1.0):
            # ⋆u on x1 = const has tangential part u_1; on x2 = const it is u_2
            assert np.allclose(sol.u(np.column_stack([np.full(4, side), t]))[:, 0], 0.0, atol=1e-14)
            assert np.allclose(sol.u(np.column_stack([t, np.full(4, side)]))[:, 1], 0.0, atol=1e-14)

    def test_derivative_chain(self, rng):
        sol = trigonometric_solution(3, 1)
        x = rng.uniform(size=(4, 3))
        assert np.allclose(sol.u.d()(x), sol.du(x))
        assert np.allclose(sol.u.delta()(x), sol.sigma(x))


class TestBubble:
    @pytest.mark.parametrize("k", [0, 1, 2])
    def test_polynomial_degree(self, k):
        assert bubble_solution(2, k).polynomial_degree == 2 * k
        assert trigonometric_solution(2, k).polynomial_degree is None

    def test_constant_for_functions(self, rng):
        sol = bubble_solution(3, 0)
        x = rng.uniform(size=(4, 3))
        assert np.allclose(sol.u(x), 1.0)
        assert np.allclose(sol.source(x), 0.0)

    def test_source_of_one_forms(self, rng):
        sol = bubble_solution(3, 1)
        x = rng.uniform(size=(4, 3))
        assert np.allclose(sol.source(x), 2.0 * np.array([1.0, 0.5, 1.0 / 3.0]), atol=1e-12)

    def test_curl_free_in_2d(self, points):
        assert np.allclose(bubble_solution(2, 1).du(points), 0.0, atol=1e-14)


class TestRegistry:
    def test_family_lookup(self):
        assert manufactured_solution("bubble", 2, 1).name == "bubble"
        assert manufactured_solution("trigonometric", 3, 2).label == "trigonometric(n=3, k=2)"

    def test_unknown_family(self):
        with pytest.raises(ValueError, match="unknown manufactured family"):
            manufactured_solution("gaussian", 2, 1)

    def test_degree_out_of_range(self):
        with pytest.raises(ValueError, match="form degree"):
            trigonometric_solution(2, 3)
