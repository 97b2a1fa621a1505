"""
Simplex quadrature and the integrals built on it.

Reference rules on {x_i >= 0, sum x_i <= 1} come from collapsing the cube:
a d-dimensional rule is the (d-1)-dimensional rule scaled by (1 - t) along
Gauss-Jacobi nodes t with weight (1 - t)^(d-1).  Every rule checks its own
exactness on all monomials up to its degree when it is built.

Cell integrals sum the reference rule over the cell's simplicial chunks.
Points are returned both in ambient coordinates and in the scaled local
coordinates y of the cell frame, so polynomial forms are evaluated directly.
Coefficients of local forms refer to the orthonormal coframe dz = h dy, so
the top-degree coefficient integrates against the plain Lebesgue measure.
"""

from __future__ import annotations

import logging
import threading
import weakref
from dataclasses import dataclass
from functools import lru_cache
from math import ceil, factorial, prod
from typing import TYPE_CHECKING

import numpy as np
from scipy.special import roots_jacobi

from discrete_de_rham.config import QUADRATURE_MAX_DEGREE, QUADRATURE_SELF_TEST_TOL
from discrete_de_rham.exterior_algebra import alt_dim, wedge_tensor
from discrete_de_rham.polynomial_forms import (
    FormField,
    PolyForm,
    monomial_exponents,
    exterior_derivative,
    monomial_values,
    pullback_to_subcell,
    trace_values,
)

if TYPE_CHECKING:
    from discrete_de_rham.mesh import CellId, PolytopalMesh

logger = logging.getLogger(__name__)


class QuadratureError(ValueError):
    """No rule available, or a rule failed its exactness self-test."""


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Rule on the reference d-simplex; ``points`` are barycentric, shape (N, d + 1)."""

    dim: int
    degree_exact: int
    points: np.ndarray
    weights: np.ndarray

    def cartesian(self) -> np.ndarray:
        return self.points[:, 1:]


@lru_cache(maxsize=None)
def simplex_rule(dim: int, degree: int) -> QuadratureRule:
    """Collapsed Gauss-Jacobi rule on the reference ``dim``-simplex, exact to ``degree``."""
    if degree < 0:
        raise QuadratureError(f"quadrature degree must be >= 0, got {degree}")
    if degree > QUADRATURE_MAX_DEGREE:
        raise QuadratureError(
            f"no quadrature rule for degree {degree} (maximum is {QUADRATURE_MAX_DEGREE})"
        )
    m = ceil((degree + 1) / 2)
    points = np.zeros((1, 0))
    weights = np.ones(1)
    for d in range(1, dim + 1):
        s, w = roots_jacobi(m, d - 1, 0)
        t = (s + 1.0) / 2.0
        scaled = (1.0 - t)[:, None, None] * points[None, :, :]
        new_points = np.concatenate(
            (scaled, np.broadcast_to(t[:, None, None], (m, len(points), 1))), axis=2
        )
        points = new_points.reshape(-1, d)
        weights = np.outer(w / 2.0**d, weights).ravel()
    bary = np.column_stack((1.0 - points.sum(axis=1), points))
    rule = QuadratureRule(dim, degree, bary, weights)
    _self_test(rule)
    return rule


def _self_test(rule: QuadratureRule) -> None:
    d = rule.dim
    if d == 0:
        return
    X = rule.cartesian()
    values = monomial_values(X, d, rule.degree_exact)
    approx = rule.weights @ values
    for col, alpha in enumerate(monomial_exponents(d, rule.degree_exact)):
        exact = prod(factorial(a) for a in alpha) / factorial(d + sum(alpha))
        if abs(approx[col] - exact) > QUADRATURE_SELF_TEST_TOL * max(1.0, abs(exact)) * 10:
            raise QuadratureError(
                f"simplex rule d={d} degree={rule.degree_exact} fails on monomial {alpha}: "
                f"{approx[col]!r} != {exact!r}"
            )


# =============================================================================
# Cell rules
# =============================================================================
@dataclass(frozen=True, eq=False)
class CellQuadrature:
    x: np.ndarray        # (N, n) ambient points
    y: np.ndarray        # (N, d) scaled local coordinates
    weights: np.ndarray  # (N,) physical weights


_CACHES: "weakref.WeakKeyDictionary[PolytopalMesh, dict]" = weakref.WeakKeyDictionary()
_CACHE_LOCK = threading.Lock()


def _cache(mesh: PolytopalMesh) -> dict:
    with _CACHE_LOCK:
        store = _CACHES.get(mesh)
        if store is None:
            store = _CACHES[mesh] = {}
        return store


def cell_rule(mesh: PolytopalMesh, fid: CellId, degree: int) -> CellQuadrature:
    store = _cache(mesh)
    key = ("rule", fid, degree)
    if key not in store:
        cell = mesh.cell(fid)
        d = cell.dim
        rule = simplex_rule(d, degree)
        xs, ws = [], []
        for chunk in mesh.simplicial_subdivision(fid):
            xs.append(rule.points @ chunk.points)
            ws.append(rule.weights * factorial(d) * chunk.volume)
        x = np.vstack(xs)
        store[key] = CellQuadrature(x, cell.frame.to_local(x).reshape(len(x), d), np.concatenate(ws))
    return store[key]


def monomial_mass(mesh: PolytopalMesh, fid: CellId, r1: int, r2: int) -> np.ndarray:
    """∫_f φ_a φ_b over scaled monomials of degrees ≤ r1 and ≤ r2."""
    store = _cache(mesh)
    key = ("mass", fid, r1, r2)
    if key not in store:
        d = fid[0]
        q = cell_rule(mesh, fid, r1 + r2)
        V1 = monomial_values(q.y, d, r1)
        V2 = V1 if r2 == r1 else monomial_values(q.y, d, r2)
        store[key] = (V1 * q.weights[:, None]).T @ V2
    return store[key]


def form_mass(mesh: PolytopalMesh, fid: CellId, ell: int, r1: int, r2: int | None = None) -> np.ndarray:
    """L² Gram matrix between monomial-flat ℓ-form bases of degrees r1 and r2."""
    r2 = r1 if r2 is None else r2
    return np.kron(monomial_mass(mesh, fid, r1, r2), np.eye(alt_dim(fid[0], ell)))


def wedge_pairing(mesh: PolytopalMesh, fid: CellId, ell: int, r1: int, r2: int) -> np.ndarray:
    """Matrix W with ∫_f a ∧ b = a.flat @ W @ b.flat for ℓ-forms a and (d - ℓ)-forms b."""
    d = fid[0]
    if not 0 <= ell <= d:
        raise ValueError(f"form degree {ell} out of range for a {d}-cell")
    return np.kron(monomial_mass(mesh, fid, r1, r2), wedge_tensor(d, ell, d - ell)[0])


# =============================================================================
# Integrals of polynomial forms and fields
# =============================================================================
def _check_pair(fid: CellId, a: PolyForm, b: PolyForm) -> None:
    d = fid[0]
    if a.cell_dim != d or b.cell_dim != d:
        raise ValueError(f"forms live on {a.cell_dim}/{b.cell_dim}-cells, not on a {d}-cell")
    if a.form_degree + b.form_degree != d:
        raise ValueError(
            f"degree mismatch: {a.form_degree} + {b.form_degree} != cell dimension {d}"
        )


def integrate_wedge(mesh: PolytopalMesh, fid: CellId, a: PolyForm, b: PolyForm) -> float:
    """∫_f a ∧ b for complementary-degree polynomial forms on f."""
    _check_pair(fid, a, b)
    W = wedge_pairing(mesh, fid, a.form_degree, a.poly_degree, b.poly_degree)
    return float(a.flat @ W @ b.flat)


def l2_inner(mesh: PolytopalMesh, fid: CellId, a: PolyForm, b: PolyForm) -> float:
    """∫_f a ∧ ⋆b."""
    if a.form_degree != b.form_degree:
        raise ValueError(f"degree mismatch: {a.form_degree} != {b.form_degree}")
    M = form_mass(mesh, fid, a.form_degree, a.poly_degree, b.poly_degree)
    return float(a.flat @ M @ b.flat)


def stokes_residual(mesh: PolytopalMesh, fid: CellId, a: PolyForm, b: PolyForm) -> float:
    """|∫ da ∧ b + (-1)^ℓ ∫ a ∧ db - Σ ε ∫_{f'} tr a ∧ tr b| relative to the size of the terms.

    ``a`` is an ℓ-form and ``b`` a (d - ℓ - 1)-form, both on the chart of f.
    """
    d = fid[0]
    ell = a.form_degree
    if a.form_degree + b.form_degree != d - 1:
        raise ValueError(f"degree mismatch: {a.form_degree} + {b.form_degree} != {d - 1}")
    terms = [
        integrate_wedge(mesh, fid, exterior_derivative(a), b),
        (-1) ** ell * integrate_wedge(mesh, fid, a, exterior_derivative(b)),
    ]
    boundary = []
    for sub, eps in mesh.facets(fid):
        frame = mesh.cell(sub).frame
        boundary.append(eps * integrate_wedge(mesh, sub, pullback_to_subcell(a, frame), pullback_to_subcell(b, frame)))
    residual = abs(sum(terms) - sum(boundary))
    scale = 1.0 + max(abs(x) for x in terms + boundary)
    return residual / scale


def traced_field(mesh: PolytopalMesh, fid: CellId, field: FormField, degree: int) -> tuple[CellQuadrature, np.ndarray]:
    """Quadrature on f and the trace of ``field`` onto f, coefficients in the local coframe."""
    q = cell_rule(mesh, fid, degree)
    values = field(q.x)
    return q, trace_values(values, mesh.cell(fid).frame.axes, field.degree)


def field_moments(mesh: PolytopalMesh, fid: CellId, values: np.ndarray, q: CellQuadrature, r: int) -> np.ndarray:
    """Monomial-flat vector of ∫_f ⟨values, φ dz^σ⟩ over P_rΛ^ℓ(f)."""
    d = fid[0]
    phi = monomial_values(q.y, d, r)
    return ((phi * q.weights[:, None]).T @ values).ravel()


def integrate_field_wedge(
    mesh: PolytopalMesh, fid: CellId, field: FormField, b: PolyForm, degree: int
) -> float:
    """∫_f tr F ∧ b for a smooth field F of degree d - deg b."""
    d = fid[0]
    if b.cell_dim != d or field.degree + b.form_degree != d:
        raise ValueError(
            f"degree mismatch: field {field.degree} + form {b.form_degree} != cell dimension {d}"
        )
    q, values = traced_field(mesh, fid, field, degree)
    T = wedge_tensor(d, field.degree, b.form_degree)[0]
    return float(np.sum(q.weights * np.einsum("ns,st,nt->n", values, T, b.values(q.y))))


# =============================================================================
# Subspace bases
# =============================================================================
def mass_matrix(mesh: PolytopalMesh, basis) -> np.ndarray:
    M = form_mass(mesh, basis.cell, basis.degree, basis.poly_degree)
    return basis.columns.T @ M @ basis.columns


def pairing_matrix(mesh: PolytopalMesh, first, second) -> np.ndarray:
    """[∫ b1_i ∧ b2_j] for bases of complementary form degree on the same cell."""
    if first.cell != second.cell:
        raise ValueError(f"bases live on different cells {first.cell} and {second.cell}")
    W = wedge_pairing(mesh, first.cell, first.degree, first.poly_degree, second.poly_degree)
    return first.columns.T @ W @ second.columns

