"""
Polynomial differential forms on a cell, in scaled local coordinates.

A ``PolyForm`` on a d-cell ``f`` with frame ``Q`` (n × d, orthonormal
columns), center ``x_f`` and diameter ``h_f`` is

    ω = Σ_{α, σ} c[α, σ] y^α dz^σ,      z = Qᵀ(x − x_f),  y = z / h_f,

with monomials ``y^α`` in graded order (so P_{r'} is a leading block of
P_r) and ``dz^σ`` the frame covectors of ``exterior_algebra``.  Flattened
coefficient vectors are monomial-major: ``flat[m * C(d, ℓ) + s]``.

In these coordinates ``d = h_f⁻¹ Σ_i ∂_{y_i} dz^i ∧`` and the Koszul
differential is ``κ = h_f · (⌟ y)``.  The matrix builders below return the
coordinate parts without the ``h_f`` factors; ``PolyForm`` methods apply
them.

``FormField`` wraps user-supplied ambient fields (vectorised evaluators on
``(N, n)`` point arrays) together with optional exact ``d`` and ``δ``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb
from typing import Callable

import numpy as np

from discrete_de_rham.config import AFFINE_HULL_TOL
from discrete_de_rham.exterior_algebra import (
    AltForm,
    alt_dim,
    compound,
    contraction_tensor,
    star_inv_matrix,
    star_matrix,
    wedge_tensor,
)

Evaluator = Callable[[np.ndarray], np.ndarray]


# =============================================================================
# Monomials
# =============================================================================
def n_monomials(d: int, r: int) -> int:
    """dim P_r(R^d); zero for r < 0."""
    return comb(r + d, d) if r >= 0 else 0


@lru_cache(maxsize=None)
def monomial_exponents(d: int, r: int) -> tuple[tuple[int, ...], ...]:
    """Exponents of total degree ≤ r, graded, lexicographically decreasing inside a degree."""
    if r < 0:
        return ()
    out: list[tuple[int, ...]] = []
    for total in range(r + 1):
        out.extend(_exponents_of_degree(d, total))
    return tuple(out)


def _exponents_of_degree(d: int, total: int) -> list[tuple[int, ...]]:
    if d == 0:
        return [()] if total == 0 else []
    return [
        (first,) + rest
        for first in range(total, -1, -1)
        for rest in _exponents_of_degree(d - 1, total - first)
    ]


@lru_cache(maxsize=None)
def _exponent_rank(d: int, r: int) -> dict[tuple[int, ...], int]:
    return {alpha: i for i, alpha in enumerate(monomial_exponents(d, r))}


@lru_cache(maxsize=None)
def _product_table(d: int, r1: int, r2: int) -> np.ndarray:
    """Index in P_{r1+r2} of the product of monomials ``m1`` of P_{r1} and ``m2`` of P_{r2}."""
    rank = _exponent_rank(d, r1 + r2)
    e1, e2 = monomial_exponents(d, r1), monomial_exponents(d, r2)
    table = np.empty((len(e1), len(e2)), dtype=int)
    for i, a in enumerate(e1):
        for j, b in enumerate(e2):
            table[i, j] = rank[tuple(x + y for x, y in zip(a, b))]
    table.setflags(write=False)
    return table


def monomial_values(y: np.ndarray, d: int, r: int) -> np.ndarray:
    """Values of all monomials of P_r(R^d) at points ``y`` of shape (N, d)."""
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y.reshape(1, d)
    exps = monomial_exponents(d, r)
    if d == 0:
        return np.ones((y.shape[0], len(exps)))
    powers = y[:, None, :] ** np.array(exps, dtype=int)[None, :, :]
    return np.prod(powers, axis=2)


# =============================================================================
# Coordinate matrices (flattened, monomial-major)
# =============================================================================
@lru_cache(maxsize=None)
def derivative_matrix(d: int, r: int, ell: int) -> np.ndarray:
    """Σ_i ∂_{y_i} dz^i ∧ : P_rΛ^ℓ → P_rΛ^{ℓ+1} (top-degree rows stay zero)."""
    c_in, c_out = alt_dim(d, ell), alt_dim(d, ell + 1)
    exps = monomial_exponents(d, r)
    rank = _exponent_rank(d, r)
    table = wedge_tensor(d, 1, ell)
    out = np.zeros((len(exps) * c_out, len(exps) * c_in))
    if c_in == 0 or c_out == 0:
        return out
    for m, alpha in enumerate(exps):
        for i in range(d):
            if alpha[i] == 0:
                continue
            lowered = alpha[:i] + (alpha[i] - 1,) + alpha[i + 1:]
            target = rank[lowered]
            for s in range(c_in):
                for t in np.flatnonzero(table[:, i, s]):
                    out[target * c_out + t, m * c_in + s] += alpha[i] * table[t, i, s]
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def koszul_matrix(d: int, r: int, ell: int) -> np.ndarray:
    """Contraction with ``y``: P_rΛ^ℓ → P_{r+1}Λ^{ℓ-1}."""
    c_in, c_out = alt_dim(d, ell), alt_dim(d, ell - 1)
    exps = monomial_exponents(d, r)
    rank_up = _exponent_rank(d, r + 1)
    tensor = contraction_tensor(d, ell)
    out = np.zeros((n_monomials(d, r + 1) * c_out, len(exps) * c_in))
    if c_in == 0 or c_out == 0:
        return out
    for m, alpha in enumerate(exps):
        for i in range(d):
            raised = alpha[:i] + (alpha[i] + 1,) + alpha[i + 1:]
            target = rank_up[raised]
            for s in range(c_in):
                for t in np.flatnonzero(tensor[:, s, i]):
                    out[target * c_out + t, m * c_in + s] += tensor[t, s, i]
    out.setflags(write=False)
    return out


def star_poly_matrix(d: int, r: int, ell: int, inverse: bool = False) -> np.ndarray:
    """Pointwise ⋆ (or ⋆⁻¹) on flattened P_rΛ^ℓ coefficients."""
    star = star_inv_matrix(d, ell) if inverse else star_matrix(d, ell)
    return np.kron(np.eye(n_monomials(d, r)), star)


def embed_matrix(d: int, ell: int, r_from: int, r_to: int) -> np.ndarray:
    """Zero-padding (or truncation) of flattened coefficients between degree bounds."""
    c = alt_dim(d, ell)
    rows, cols = n_monomials(d, r_to) * c, n_monomials(d, r_from) * c
    out = np.zeros((rows, cols))
    k = min(rows, cols)
    out[:k, :k] = np.eye(k)
    return out


def substitution_matrix(A: np.ndarray, b: np.ndarray, r: int) -> np.ndarray:
    """Coefficients of ``y^α`` after the affine change ``y = b + A y'``.

    Returns S of shape (dim P_r(y'), dim P_r(y)) so that ``c' = S @ c``.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    d, dp = A.shape
    exps = monomial_exponents(d, r)
    rank = _exponent_rank(d, r)
    n_out = n_monomials(dp, r)
    S = np.zeros((n_out, len(exps)))
    if not exps:
        return S
    S[0, 0] = 1.0
    table = _product_table(dp, r, 1)
    # y_i as a polynomial of degree 1 in y'
    linear = [np.concatenate(([b[i]], A[i, :])) for i in range(d)]
    for m, alpha in enumerate(exps[1:], start=1):
        i = next(j for j, a in enumerate(alpha) if a > 0)
        prev = rank[alpha[:i] + (alpha[i] - 1,) + alpha[i + 1:]]
        product = np.zeros(n_monomials(dp, r + 1))
        np.add.at(product, table.ravel(), np.outer(S[:, prev], linear[i]).ravel())
        S[:, m] = product[:n_out]
    return S


# =============================================================================
# Local frames
# =============================================================================
@dataclass(frozen=True, eq=False)
class LocalFrame:
    """Chart of a cell: center ``x_f``, orthonormal axes ``Q`` (n × d) and diameter ``h_f``."""

    center: np.ndarray
    axes: np.ndarray
    diameter: float

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float).reshape(-1)
        axes = np.asarray(self.axes, dtype=float)
        if axes.size == 0:
            axes = np.zeros((center.size, 0))
        elif axes.ndim == 1:
            axes = axes.reshape(-1, 1)
        if axes.shape[0] != center.size:
            raise ValueError(f"axes of shape {axes.shape} do not match a center in R^{center.size}")
        if self.diameter <= 0:
            raise ValueError(f"cell diameter must be positive, got {self.diameter}")
        center.setflags(write=False)
        axes.setflags(write=False)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "diameter", float(self.diameter))

    @property
    def dim(self) -> int:
        return self.axes.shape[1]

    @property
    def ambient_dim(self) -> int:
        return self.axes.shape[0]

    def to_local(self, x: np.ndarray) -> np.ndarray:
        """Scaled local coordinates ``y`` of ambient points (N, n) → (N, d)."""
        x = np.asarray(x, dtype=float).reshape(-1, self.ambient_dim)
        return (x - self.center) @ self.axes / self.diameter

    def to_ambient(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if y.ndim == 1:
            y = y.reshape(1, self.dim)
        return self.center + self.diameter * y @ self.axes.T

    def contains(self, other: LocalFrame, tol: float = AFFINE_HULL_TOL) -> bool:
        """Whether the affine hull of ``other`` lies in the affine hull of this frame."""
        projector = np.eye(self.ambient_dim) - self.axes @ self.axes.T
        offset = projector @ (other.center - self.center)
        drift = projector @ other.axes
        scale = max(self.diameter, other.diameter)
        worst = max(np.linalg.norm(offset) / scale, np.max(np.abs(drift), initial=0.0))
        return worst <= tol


def trace_values(values: np.ndarray, axes: np.ndarray, degree: int) -> np.ndarray:
    """Pull ambient form values (N, C(n,k)) back to frame coordinates (N, C(d,k))."""
    return np.asarray(values, dtype=float) @ compound(axes, degree)


def pullback_matrix(frame: LocalFrame, subframe: LocalFrame, r: int, ell: int) -> np.ndarray:
    """Flattened trace P_rΛ^ℓ(f) → P_rΛ^ℓ(f') for a subcell chart ``subframe``."""
    M = frame.axes.T @ subframe.axes
    A = subframe.diameter / frame.diameter * M
    b = frame.axes.T @ (subframe.center - frame.center) / frame.diameter
    S = substitution_matrix(A, b, r)
    return np.kron(S, compound(M, ell).T)


# =============================================================================
# PolyForm
# =============================================================================
@dataclass(frozen=True, eq=False)
class PolyForm:
    """Polynomial ℓ-form of degree ≤ r on a d-cell; ``coeffs`` has shape (dim P_r, C(d, ℓ))."""

    cell_dim: int
    form_degree: int
    poly_degree: int
    coeffs: np.ndarray
    frame: LocalFrame | None = None

    def __post_init__(self):
        if self.poly_degree < 0:
            raise ValueError(f"polynomial degree bound must be non-negative, got {self.poly_degree}")
        if self.form_degree < 0:
            raise ValueError(f"form degree must be non-negative, got {self.form_degree}")
        shape = (n_monomials(self.cell_dim, self.poly_degree), alt_dim(self.cell_dim, self.form_degree))
        coeffs = np.asarray(self.coeffs, dtype=float).reshape(shape)
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)
        if self.frame is not None and self.frame.dim != self.cell_dim:
            raise ValueError(f"frame of dimension {self.frame.dim} cannot carry a form on a {self.cell_dim}-cell")

    @classmethod
    def zero(cls, d: int, ell: int, r: int, frame: LocalFrame | None = None) -> PolyForm:
        return cls(d, ell, r, np.zeros((n_monomials(d, r), alt_dim(d, ell))), frame)

    @classmethod
    def from_flat(cls, d: int, ell: int, r: int, flat: np.ndarray, frame: LocalFrame | None = None) -> PolyForm:
        return cls(d, ell, r, np.asarray(flat, dtype=float), frame)

    @property
    def flat(self) -> np.ndarray:
        return self.coeffs.reshape(-1)

    @property
    def scale(self) -> float:
        return self.frame.diameter if self.frame is not None else 1.0

    def with_degree(self, r: int) -> PolyForm:
        """Same form with degree bound ``r`` (padding, or truncating zero rows)."""
        n = n_monomials(self.cell_dim, r)
        coeffs = np.zeros((n, self.coeffs.shape[1]))
        k = min(n, self.coeffs.shape[0])
        coeffs[:k] = self.coeffs[:k]
        return PolyForm(self.cell_dim, self.form_degree, r, coeffs, self.frame)

    def _aligned(self, other: PolyForm) -> tuple[np.ndarray, np.ndarray, int]:
        if (self.cell_dim, self.form_degree) != (other.cell_dim, other.form_degree):
            raise ValueError("cannot combine polynomial forms of different cell or form degree")
        if self.frame is not other.frame:
            raise ValueError("cannot combine polynomial forms living on different charts")
        r = max(self.poly_degree, other.poly_degree)
        return self.with_degree(r).coeffs, other.with_degree(r).coeffs, r

    def __add__(self, other: PolyForm) -> PolyForm:
        a, b, r = self._aligned(other)
        return PolyForm(self.cell_dim, self.form_degree, r, a + b, self.frame)

    def __sub__(self, other: PolyForm) -> PolyForm:
        a, b, r = self._aligned(other)
        return PolyForm(self.cell_dim, self.form_degree, r, a - b, self.frame)

    def __neg__(self) -> PolyForm:
        return PolyForm(self.cell_dim, self.form_degree, self.poly_degree, -self.coeffs, self.frame)

    def __mul__(self, scalar: float) -> PolyForm:
        return PolyForm(self.cell_dim, self.form_degree, self.poly_degree, float(scalar) * self.coeffs, self.frame)

    __rmul__ = __mul__

    def values(self, y: np.ndarray) -> np.ndarray:
        """Coefficients at local points ``y`` (N, d) → (N, C(d, ℓ))."""
        return monomial_values(y, self.cell_dim, self.poly_degree) @ self.coeffs

    def d(self) -> PolyForm:
        return exterior_derivative(self)


def poly_form_basis(d: int, r: int, ell: int, frame: LocalFrame | None = None) -> list[PolyForm]:
    """Monomial-form basis ``y^α dz^σ`` of P_rΛ^ℓ, monomial-major; empty for r = -1 or ℓ > d."""
    n = n_monomials(d, r) * alt_dim(d, ell)
    if n == 0:
        return []
    eye = np.eye(n)
    return [PolyForm.from_flat(d, ell, r, eye[i], frame) for i in range(n)]


def exterior_derivative(p: PolyForm) -> PolyForm:
    """``dp``; the degree bound drops to ``max(r - 1, 0)``."""
    d, ell, r = p.cell_dim, p.form_degree, p.poly_degree
    flat = derivative_matrix(d, r, ell) @ p.flat / p.scale
    r_out = max(r - 1, 0)
    keep = n_monomials(d, r_out) * alt_dim(d, ell + 1)
    return PolyForm.from_flat(d, ell + 1, r_out, flat[:keep], p.frame)


def koszul(p: PolyForm) -> PolyForm:
    """``κp``, contraction with ``x - x_f``; on 0-forms this is the zero 0-form."""
    d, ell, r = p.cell_dim, p.form_degree, p.poly_degree
    if ell == 0:
        return PolyForm.zero(d, 0, r + 1, p.frame)
    flat = koszul_matrix(d, r, ell) @ p.flat * p.scale
    return PolyForm.from_flat(d, ell - 1, r + 1, flat, p.frame)


def hodge_star_poly(p: PolyForm, inverse: bool = False) -> PolyForm:
    """Pointwise ⋆ (or ⋆⁻¹) in the cell frame."""
    d, ell, r = p.cell_dim, p.form_degree, p.poly_degree
    flat = star_poly_matrix(d, r, ell, inverse) @ p.flat
    return PolyForm.from_flat(d, d - ell, r, flat, p.frame)


def codifferential(p: PolyForm) -> PolyForm:
    """``δp = (-1)^ℓ ⋆⁻¹ d ⋆ p``, the formal L²-adjoint of d."""
    if p.form_degree < 1:
        raise ValueError("the codifferential needs a form of degree at least 1")
    starred = exterior_derivative(hodge_star_poly(p))
    return (-1) ** p.form_degree * hodge_star_poly(starred, inverse=True)


def wedge_poly(p: PolyForm, q: PolyForm) -> PolyForm:
    if p.cell_dim != q.cell_dim:
        raise ValueError(f"cell dimension mismatch in wedge: {p.cell_dim} vs {q.cell_dim}")
    if p.frame is not q.frame:
        raise ValueError("cannot wedge polynomial forms living on different charts")
    d = p.cell_dim
    table = _product_table(d, p.poly_degree, q.poly_degree)
    W = wedge_tensor(d, p.form_degree, q.form_degree)
    r = p.poly_degree + q.poly_degree
    out = np.zeros((n_monomials(d, r), W.shape[0]))
    if W.shape[0]:
        contrib = np.einsum("tij,ai,bj->abt", W, p.coeffs, q.coeffs)
        np.add.at(out, table.ravel(), contrib.reshape(-1, W.shape[0]))
    return PolyForm(d, p.form_degree + q.form_degree, r, out, p.frame)


def evaluate(p: PolyForm, y) -> AltForm:
    """Value of ``p`` at one local point ``y`` as a form on the frame coordinates."""
    y = np.asarray(y, dtype=float).reshape(1, p.cell_dim)
    return AltForm(p.cell_dim, p.form_degree, p.values(y)[0])


def pullback_to_subcell(p: PolyForm, subframe: LocalFrame) -> PolyForm:
    """Trace of ``p`` on a subcell, expressed in the subcell's own chart."""
    if p.frame is None:
        raise ValueError("pullback needs a polynomial form attached to a cell frame")
    if not p.frame.contains(subframe):
        raise ValueError("subcell does not lie in the closure of the cell")
    flat = pullback_matrix(p.frame, subframe, p.poly_degree, p.form_degree) @ p.flat
    return PolyForm.from_flat(subframe.dim, p.form_degree, p.poly_degree, flat, subframe)


# =============================================================================
# FormField
# =============================================================================
def _zero_evaluator(n: int, degree: int) -> Evaluator:
    def evaluate_zero(points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, n)
        return np.zeros((points.shape[0], alt_dim(n, degree)))
    return evaluate_zero


@dataclass(frozen=True, eq=False)
class FormField:
    """Ambient k-form field on R^n with optional exact derivative and codifferential.

    Evaluators map points of shape (N, n) to coefficients of shape (N, C(n, k))
    and must be pure functions of the points.
    """

    dim: int
    degree: int
    evaluator: Evaluator
    derivative: Evaluator | None = None
    codifferential: Evaluator | None = None

    def __call__(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, self.dim)
        values = np.asarray(self.evaluator(points), dtype=float)
        return values.reshape(points.shape[0], alt_dim(self.dim, self.degree))

    @classmethod
    def zero(cls, dim: int, degree: int) -> FormField:
        return cls(dim, degree, _zero_evaluator(dim, degree), _zero_evaluator(dim, degree + 1),
                   _zero_evaluator(dim, degree - 1) if degree >= 1 else None)

    def d(self) -> FormField:
        """The field ``dω``; its own derivative is zero."""
        if self.derivative is None:
            raise ValueError(f"{self.degree}-form field has no derivative evaluator")
        return FormField(self.dim, self.degree + 1, self.derivative, _zero_evaluator(self.dim, self.degree + 2))

    def delta(self) -> FormField:
        """The field ``δω``; its own codifferential is zero."""
        if self.codifferential is None:
            raise ValueError(f"{self.degree}-form field has no codifferential evaluator")
        zero = _zero_evaluator(self.dim, self.degree - 2) if self.degree >= 2 else None
        return FormField(self.dim, self.degree - 1, self.codifferential, codifferential=zero)

    def __add__(self, other: FormField) -> FormField:
        return _combine(1.0, self, 1.0, other)

    def __sub__(self, other: FormField) -> FormField:
        return _combine(1.0, self, -1.0, other)

    def __mul__(self, scalar: float) -> FormField:
        return _combine(float(scalar), self, 0.0, FormField.zero(self.dim, self.degree))

    __rmul__ = __mul__

    @classmethod
    def from_poly(cls, p: PolyForm) -> FormField:
        """Ambient field given by ``p`` composed with the projection onto its chart.

        On a lower-dimensional chart the extension is constant along the normal
        directions and its trace on the chart is ``p``; the codifferential is
        only available for full-dimensional charts.
        """
        frame = p.frame
        if frame is None:
            raise ValueError("only forms attached to a cell frame extend to ambient fields")
        n = frame.ambient_dim

        def push(q: PolyForm) -> Evaluator:
            to_ambient = compound(frame.axes.T, q.form_degree)

            def evaluate_poly(points: np.ndarray) -> np.ndarray:
                return q.values(frame.to_local(points)) @ to_ambient
            return evaluate_poly

        full = frame.dim == n
        delta = push(codifferential(p)) if p.form_degree >= 1 and full else None
        return cls(n, p.form_degree, push(p), push(exterior_derivative(p)), delta)


def _combine(a: float, f: FormField, b: float, g: FormField) -> FormField:
    if (f.dim, f.degree) != (g.dim, g.degree):
        raise ValueError("cannot combine fields of different dimension or degree")

    def lin(e1: Evaluator | None, e2: Evaluator | None) -> Evaluator | None:
        if e1 is None or e2 is None:
            return None
        return lambda x: a * np.asarray(e1(x)) + b * np.asarray(e2(x))

    return FormField(f.dim, f.degree, lin(f.evaluator, g.evaluator),
                     lin(f.derivative, g.derivative), lin(f.codifferential, g.codifferential))
