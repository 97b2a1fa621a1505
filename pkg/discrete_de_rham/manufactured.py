"""
Manufactured solutions of the mixed Hodge Laplacian on the unit cube [0, 1]^n.

Every component of u = Σ_σ a_σ φ_σ dx^σ is a tensor product

    φ_σ(x) = Π_{i ∈ σ} s(x_i) Π_{i ∉ σ} c(x_i)

where s vanishes at 0 and 1 and c' vanishes at 0 and 1.  With this choice
tr ⋆u = 0 and tr ⋆du = 0 on the boundary of the cube, the natural boundary
conditions of the mixed formulation, so (σ, u) = (δu, u) solves the problem
with source g = δdu + dδu.

All derivatives are linear maps of the component gradients and Hessians:

    du  = Σ_i  D_k[i] ∂_i u         D_k[i] = (dx^i ∧ ·) on k-forms
    δu  = Σ_i  Δ_k[i] ∂_i u         Δ_k[i] = (-1)^k ⋆⁻¹ (dx^i ∧ ·) ⋆

and the second-order terms compose the same tables with the Hessian.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from discrete_de_rham.exterior_algebra import alt_basis, alt_dim, star_inv_matrix, star_matrix, wedge_tensor
from discrete_de_rham.polynomial_forms import FormField

Profile1D = Callable[[np.ndarray], np.ndarray]

FAMILIES = ("trigonometric", "bubble")


@dataclass(frozen=True)
class Profile:
    """A 1D factor with its first and second derivatives."""

    value: Profile1D
    first: Profile1D
    second: Profile1D


SINE = Profile(
    lambda t: np.sin(np.pi * t),
    lambda t: np.pi * np.cos(np.pi * t),
    lambda t: -np.pi ** 2 * np.sin(np.pi * t),
)
COSINE = Profile(
    lambda t: np.cos(np.pi * t),
    lambda t: -np.pi * np.sin(np.pi * t),
    lambda t: -np.pi ** 2 * np.cos(np.pi * t),
)
BUBBLE = Profile(
    lambda t: t * (1.0 - t),
    lambda t: 1.0 - 2.0 * t,
    lambda t: np.full_like(t, -2.0),
)
ONE = Profile(np.ones_like, np.zeros_like, np.zeros_like)


# =============================================================================
# Derivative tables
# =============================================================================
def d_table(n: int, k: int) -> np.ndarray:
    """D[t, i, s]: coefficient of dx^t in dx^i ∧ dx^s; shape (C(n, k+1), n, C(n, k))."""
    return np.asarray(wedge_tensor(n, 1, k))


def delta_table(n: int, k: int) -> np.ndarray:
    """Δ[t, i, s] with δu = Σ_i Δ[:, i, :] ∂_i u; shape (C(n, k-1), n, C(n, k))."""
    if k < 1:
        raise ValueError("the codifferential needs a form of degree at least 1")
    W = np.asarray(wedge_tensor(n, 1, n - k))
    left = star_inv_matrix(n, n - k + 1)
    right = star_matrix(n, k)
    return (-1) ** k * np.einsum("ta,aib,bs->tis", left, W, right)


# =============================================================================
# Component products
# =============================================================================
class TensorForm:
    """k-form on R^n whose components are weighted tensor products of 1D profiles."""

    def __init__(self, n: int, k: int, inside: Profile, outside: Profile, amplitudes: np.ndarray):
        self.n = n
        self.k = k
        self.subsets = alt_basis(n, k)
        self.inside = inside
        self.outside = outside
        self.amplitudes = np.asarray(amplitudes, dtype=float).reshape(len(self.subsets))

    def _factors(self, x: np.ndarray, subset) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        F = np.empty_like(x)
        F1 = np.empty_like(x)
        F2 = np.empty_like(x)
        for i in range(self.n):
            p = self.inside if i in subset else self.outside
            t = x[:, i]
            F[:, i], F1[:, i], F2[:, i] = p.value(t), p.first(t), p.second(t)
        return F, F1, F2

    def jets(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Values (N, C), gradients (N, n, C) and Hessians (N, n, n, C) of the components."""
        x = np.asarray(points, dtype=float).reshape(-1, self.n)
        N, C = x.shape[0], len(self.subsets)
        U = np.zeros((N, C))
        G = np.zeros((N, self.n, C))
        H = np.zeros((N, self.n, self.n, C))
        for s, subset in enumerate(self.subsets):
            F, F1, F2 = self._factors(x, subset)
            a = self.amplitudes[s]
            U[:, s] = a * np.prod(F, axis=1)
            for i in range(self.n):
                Fi = F.copy()
                Fi[:, i] = F1[:, i]
                G[:, i, s] = a * np.prod(Fi, axis=1)
                for j in range(self.n):
                    Fij = Fi.copy()
                    Fij[:, j] = F2[:, i] if i == j else F1[:, j]
                    H[:, i, j, s] = a * np.prod(Fij, axis=1)
        return U, G, H

    def values(self, points: np.ndarray) -> np.ndarray:
        return self.jets(points)[0]

    def d(self, points: np.ndarray) -> np.ndarray:
        _, G, _ = self.jets(points)
        return np.einsum("tis,nis->nt", d_table(self.n, self.k), G)

    def delta(self, points: np.ndarray) -> np.ndarray:
        _, G, _ = self.jets(points)
        return np.einsum("tis,nis->nt", delta_table(self.n, self.k), G)

    def d_delta(self, points: np.ndarray) -> np.ndarray:
        """dδu; zero for 0-forms."""
        _, _, H = self.jets(points)
        if self.k == 0:
            return np.zeros((H.shape[0], alt_dim(self.n, 0)))
        return np.einsum("tjm,mis,njis->nt", d_table(self.n, self.k - 1), delta_table(self.n, self.k), H)

    def delta_d(self, points: np.ndarray) -> np.ndarray:
        """δdu; zero for n-forms."""
        _, _, H = self.jets(points)
        if self.k == self.n:
            return np.zeros((H.shape[0], alt_dim(self.n, self.n)))
        return np.einsum("tjm,mis,njis->nt", delta_table(self.n, self.k + 1), d_table(self.n, self.k), H)

    def laplacian(self, points: np.ndarray) -> np.ndarray:
        return self.delta_d(points) + self.d_delta(points)


# =============================================================================
# Manufactured solutions
# =============================================================================
@dataclass(frozen=True, eq=False)
class ManufacturedSolution:
    """Exact (σ, u) with source g; ``sigma`` is None for k = 0."""

    name: str
    n: int
    k: int
    u: FormField
    sigma: FormField | None
    du: FormField
    source: FormField
    polynomial_degree: int | None = None  # degree of u when it is a polynomial

    @property
    def label(self) -> str:
        return f"{self.name}(n={self.n}, k={self.k})"


def _zero(n: int, degree: int) -> Callable[[np.ndarray], np.ndarray]:
    def evaluate_zero(points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, n)
        return np.zeros((points.shape[0], alt_dim(n, degree)))
    return evaluate_zero


def _default_amplitudes(n: int, k: int) -> np.ndarray:
    return 1.0 / (1.0 + np.arange(alt_dim(n, k)))


def _build(name: str, form: TensorForm, polynomial_degree: int | None) -> ManufacturedSolution:
    n, k = form.n, form.k
    sigma = None
    if k >= 1:
        sigma = FormField(n, k - 1, form.delta, form.d_delta, _zero(n, k - 2) if k >= 2 else None)
    u = FormField(n, k, form.values, form.d, form.delta if k >= 1 else None)
    du = FormField(n, k + 1, form.d, _zero(n, k + 2), form.delta_d if k < n else _zero(n, k))
    source = FormField(n, k, form.laplacian)
    return ManufacturedSolution(name, n, k, u, sigma, du, source, polynomial_degree)


def _check(n: int, k: int) -> None:
    if n < 1:
        raise ValueError(f"ambient dimension must be positive, got {n}")
    if not 0 <= k <= n:
        raise ValueError(f"form degree must be in [0, {n}], got {k}")


def trigonometric_solution(n: int, k: int, amplitudes=None) -> ManufacturedSolution:
    """u_σ = a_σ Π_{i∈σ} sin(πx_i) Π_{i∉σ} cos(πx_i); then g = nπ² u."""
    _check(n, k)
    a = _default_amplitudes(n, k) if amplitudes is None else amplitudes
    return _build("trigonometric", TensorForm(n, k, SINE, COSINE, a), None)


def bubble_solution(n: int, k: int, amplitudes=None) -> ManufacturedSolution:
    """u_σ = a_σ Π_{i∈σ} x_i(1 - x_i), a polynomial of degree 2k.

    Interpolating this pair reproduces the discrete solution exactly once
    r ≥ 2k.
    """
    _check(n, k)
    a = _default_amplitudes(n, k) if amplitudes is None else amplitudes
    return _build("bubble", TensorForm(n, k, BUBBLE, ONE, a), 2 * k)


def manufactured_solution(family: str, n: int, k: int) -> ManufacturedSolution:
    if family == "trigonometric":
        return trigonometric_solution(n, k)
    if family == "bubble":
        return bubble_solution(n, k)
    raise ValueError(f"unknown manufactured family '{family}' (choices: {', '.join(FAMILIES)})")
