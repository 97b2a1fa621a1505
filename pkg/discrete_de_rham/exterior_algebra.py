"""
Constant alternating forms on an oriented Euclidean space.

A k-form on R^d is stored as a dense coefficient vector over the basis
``dx^σ = dx^{σ_1} ∧ ... ∧ dx^{σ_k}``, σ running over strictly increasing
index tuples in lexicographic order.  Indices are 0-based throughout
(``alt_basis(3, 2) == ((0, 1), (0, 2), (1, 2))``).

Sign tables (wedge, Hodge star, contraction) are cached per
``(dim, degree)`` and shared by the polynomial-form layer, which applies
the same tables to arrays of coefficients at once.

This module is pure numpy; nothing here knows about meshes.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from functools import lru_cache
from itertools import combinations
from math import comb

import numpy as np

from discrete_de_rham.config import ORTHONORMAL_TOL

AltIndex = tuple[int, ...]


class Orientation(IntEnum):
    """Orientation of an ordered frame relative to the canonical one."""

    POSITIVE = 1
    NEGATIVE = -1


# =============================================================================
# Index bookkeeping
# =============================================================================
@lru_cache(maxsize=None)
def alt_basis(dim: int, degree: int) -> tuple[AltIndex, ...]:
    """Increasing index tuples of length ``degree`` in lexicographic order.

    Returns an empty tuple when ``degree > dim``; raises for negative degrees.
    """
    if degree < 0:
        raise ValueError(f"form degree must be non-negative, got {degree}")
    if degree > dim:
        return ()
    return tuple(combinations(range(dim), degree))


def alt_dim(dim: int, degree: int) -> int:
    """Dimension of Alt^degree(R^dim); zero outside ``[0, dim]``."""
    if degree < 0 or degree > dim:
        return 0
    return comb(dim, degree)


@lru_cache(maxsize=None)
def _rank(dim: int, degree: int) -> dict[AltIndex, int]:
    return {sigma: i for i, sigma in enumerate(alt_basis(dim, degree))}


def permutation_sign(seq) -> int:
    """Sign of the permutation sorting ``seq``; 0 if an entry repeats."""
    seq = list(seq)
    if len(set(seq)) != len(seq):
        return 0
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


# =============================================================================
# Sign tables
# =============================================================================
@lru_cache(maxsize=None)
def wedge_tensor(dim: int, i: int, j: int) -> np.ndarray:
    """Tensor W with ``(a ∧ b)_t = Σ W[t, s1, s2] a_{s1} b_{s2}``."""
    out = np.zeros((alt_dim(dim, i + j), alt_dim(dim, i), alt_dim(dim, j)))
    if i + j > dim:
        return out
    target = _rank(dim, i + j)
    for s1, sigma in enumerate(alt_basis(dim, i)):
        for s2, tau in enumerate(alt_basis(dim, j)):
            joined = sigma + tau
            sign = permutation_sign(joined)
            if sign:
                out[target[tuple(sorted(joined))], s1, s2] = sign
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def star_matrix(dim: int, degree: int) -> np.ndarray:
    """Matrix of ⋆ : Alt^k → Alt^{d-k} for the positive orientation.

    ``⋆dx^σ = sign(σ, τ) dx^τ`` with τ the increasing complement of σ.
    """
    out = np.zeros((alt_dim(dim, dim - degree), alt_dim(dim, degree)))
    if degree < 0 or degree > dim:
        return out
    target = _rank(dim, dim - degree)
    for s, sigma in enumerate(alt_basis(dim, degree)):
        tau = tuple(i for i in range(dim) if i not in sigma)
        out[target[tau], s] = permutation_sign(sigma + tau)
    out.setflags(write=False)
    return out


def star_inv_matrix(dim: int, degree: int) -> np.ndarray:
    """Matrix of ⋆⁻¹ acting on ``degree``-forms: ``(-1)^{m(d-m)} ⋆``."""
    return (-1) ** (degree * (dim - degree)) * star_matrix(dim, degree)


@lru_cache(maxsize=None)
def contraction_tensor(dim: int, degree: int) -> np.ndarray:
    """Tensor C with ``(a ⌟ v)_ρ = Σ C[ρ, σ, i] a_σ v_i``.

    Uses ``dx^σ ⌟ v = Σ_j (-1)^j v_{σ_j} dx^{σ without σ_j}``.
    """
    out = np.zeros((alt_dim(dim, degree - 1), alt_dim(dim, degree), dim))
    if degree < 1 or degree > dim:
        return out
    target = _rank(dim, degree - 1)
    for s, sigma in enumerate(alt_basis(dim, degree)):
        for j, i in enumerate(sigma):
            rest = sigma[:j] + sigma[j + 1:]
            out[target[rest], s, i] = (-1) ** j
    out.setflags(write=False)
    return out


def compound(matrix: np.ndarray, degree: int) -> np.ndarray:
    """k-th compound matrix: entry ``[σ, τ] = det(M[σ, τ])``.

    For a frame ``M`` (n × m, columns in ambient coordinates) the pullback of
    a k-form to the frame coordinates is ``compound(M, k).T @ coeffs``.
    """
    matrix = np.asarray(matrix, dtype=float)
    rows, cols = matrix.shape
    out = np.zeros((alt_dim(rows, degree), alt_dim(cols, degree)))
    if degree == 0:
        out[0, 0] = 1.0
        return out
    for a, sigma in enumerate(alt_basis(rows, degree)):
        for b, tau in enumerate(alt_basis(cols, degree)):
            out[a, b] = np.linalg.det(matrix[np.ix_(sigma, tau)])
    return out


# =============================================================================
# AltForm
# =============================================================================
@dataclass(frozen=True, eq=False)
class AltForm:
    """A constant alternating form; ``coeffs[i]`` multiplies ``alt_basis(dim, degree)[i]``."""

    dim: int
    degree: int
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=float).reshape(-1)
        expected = alt_dim(self.dim, self.degree)
        if self.degree < 0:
            raise ValueError(f"form degree must be non-negative, got {self.degree}")
        if coeffs.size != expected:
            raise ValueError(
                f"{self.degree}-form on R^{self.dim} needs {expected} coefficients, got {coeffs.size}"
            )
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def zero(cls, dim: int, degree: int) -> AltForm:
        return cls(dim, degree, np.zeros(alt_dim(dim, degree)))

    @classmethod
    def basis(cls, dim: int, subset: AltIndex) -> AltForm:
        """The basis form ``dx^subset``; ``subset`` must be increasing."""
        subset = tuple(subset)
        if any(i < 0 or i >= dim for i in subset) or list(subset) != sorted(set(subset)):
            raise ValueError(f"invalid increasing index subset {subset} for dimension {dim}")
        form = np.zeros(alt_dim(dim, len(subset)))
        form[_rank(dim, len(subset))[subset]] = 1.0
        return cls(dim, len(subset), form)

    @classmethod
    def from_dict(cls, dim: int, degree: int, values: dict[AltIndex, float]) -> AltForm:
        coeffs = np.zeros(alt_dim(dim, degree))
        rank = _rank(dim, degree)
        for subset, value in values.items():
            subset = tuple(subset)
            if subset not in rank:
                raise ValueError(f"{subset} is not an increasing {degree}-subset of range({dim})")
            coeffs[rank[subset]] = value
        return cls(dim, degree, coeffs)

    def as_dict(self) -> dict[AltIndex, float]:
        return {s: float(c) for s, c in zip(alt_basis(self.dim, self.degree), self.coeffs) if c != 0.0}

    def _check_same(self, other: AltForm) -> None:
        if (self.dim, self.degree) != (other.dim, other.degree):
            raise ValueError(
                f"incompatible forms: ({self.dim}, {self.degree}) vs ({other.dim}, {other.degree})"
            )

    def __add__(self, other: AltForm) -> AltForm:
        self._check_same(other)
        return AltForm(self.dim, self.degree, self.coeffs + other.coeffs)

    def __sub__(self, other: AltForm) -> AltForm:
        self._check_same(other)
        return AltForm(self.dim, self.degree, self.coeffs - other.coeffs)

    def __neg__(self) -> AltForm:
        return AltForm(self.dim, self.degree, -self.coeffs)

    def __mul__(self, scalar: float) -> AltForm:
        return AltForm(self.dim, self.degree, float(scalar) * self.coeffs)

    __rmul__ = __mul__

    def allclose(self, other: AltForm, atol: float = 1e-13) -> bool:
        self._check_same(other)
        return bool(np.allclose(self.coeffs, other.coeffs, rtol=0.0, atol=atol))


# =============================================================================
# Operations
# =============================================================================
def wedge(a: AltForm, b: AltForm) -> AltForm:
    """Exterior product; zero form of degree ``a.degree + b.degree`` past the dimension."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch in wedge: {a.dim} vs {b.dim}")
    table = wedge_tensor(a.dim, a.degree, b.degree)
    return AltForm(a.dim, a.degree + b.degree, np.einsum("tij,i,j->t", table, a.coeffs, b.coeffs))


def inner(a: AltForm, b: AltForm) -> float:
    """Euclidean inner product, for which the ``dx^σ`` are orthonormal."""
    a._check_same(b)
    return float(a.coeffs @ b.coeffs)


def hodge_star(a: AltForm, orientation: Orientation = Orientation.POSITIVE) -> AltForm:
    return AltForm(a.dim, a.dim - a.degree, int(orientation) * star_matrix(a.dim, a.degree) @ a.coeffs)


def hodge_star_inv(a: AltForm, orientation: Orientation = Orientation.POSITIVE) -> AltForm:
    return AltForm(a.dim, a.dim - a.degree, int(orientation) * star_inv_matrix(a.dim, a.degree) @ a.coeffs)


def contraction(a: AltForm, v) -> AltForm:
    """Interior product ``a ⌟ v``, i.e. ``v`` inserted as first argument."""
    v = np.asarray(v, dtype=float)
    if a.degree < 1:
        raise ValueError("contraction needs a form of degree at least 1")
    if v.shape != (a.dim,):
        raise ValueError(f"vector of shape {v.shape} cannot contract a form on R^{a.dim}")
    return AltForm(a.dim, a.degree - 1, np.einsum("rsi,s,i->r", contraction_tensor(a.dim, a.degree), a.coeffs, v))


def check_orthonormal(frame: np.ndarray, tol: float = ORTHONORMAL_TOL) -> None:
    """Raise ``ValueError`` if the columns of ``frame`` are not orthonormal."""
    frame = np.asarray(frame, dtype=float)
    gram = frame.T @ frame
    deviation = np.max(np.abs(gram - np.eye(frame.shape[1]))) if frame.size else 0.0
    if deviation > tol:
        raise ValueError(f"frame is not orthonormal (Gram deviation {deviation:.3e} > {tol:g})")


def trace_alt(a: AltForm, frame) -> AltForm:
    """Restriction of ``a`` to the subspace spanned by the columns of ``frame``.

    ``frame`` is ``dim × m`` with orthonormal columns; the result is expressed
    in the coordinates those columns define.
    """
    frame = np.asarray(frame, dtype=float)
    if frame.ndim != 2 or frame.shape[0] != a.dim:
        raise ValueError(f"frame of shape {frame.shape} does not live in R^{a.dim}")
    check_orthonormal(frame)
    return AltForm(frame.shape[1], a.degree, compound(frame, a.degree).T @ a.coeffs)


# =============================================================================
# Vector proxies
# =============================================================================
PROXY_CONVENTIONS = ("rotated", "identity")


def proxy_encode(value, degree: int, dim: int, convention: str = "rotated") -> AltForm:
    """Form whose proxy is ``value`` (scalar for degrees 0 and dim, vector otherwise).

    In 2D, 1-forms follow ``convention``: ``"identity"`` maps ``(a, b)`` to
    ``a dx¹ + b dx²``; ``"rotated"`` (default) identifies ``a dx¹ + b dx²``
    with its clockwise rotation ``(b, -a)``.
    """
    if dim not in (2, 3) or degree < 0 or degree > dim:
        raise ValueError(f"no vector proxy for {degree}-forms in dimension {dim}")
    if convention not in PROXY_CONVENTIONS:
        raise ValueError(f"unknown proxy convention {convention!r}")
    if degree in (0, dim):
        return AltForm(dim, degree, [float(np.asarray(value, dtype=float).reshape(()))])
    v = np.asarray(value, dtype=float)
    if v.shape != (dim,):
        raise ValueError(f"proxy of a {degree}-form in dimension {dim} must have shape ({dim},)")
    if dim == 2:
        if convention == "identity":
            return AltForm(2, 1, v)
        return AltForm(2, 1, [-v[1], v[0]])
    if degree == 1:
        return AltForm(3, 1, v)
    # basis order (0,1), (0,2), (1,2)
    return AltForm(3, 2, [v[2], -v[1], v[0]])


def proxy_decode(form: AltForm, convention: str = "rotated"):
    """Inverse of ``proxy_encode``: a float or a vector."""
    dim, degree = form.dim, form.degree
    if dim not in (2, 3):
        raise ValueError(f"no vector proxy for {degree}-forms in dimension {dim}")
    if convention not in PROXY_CONVENTIONS:
        raise ValueError(f"unknown proxy convention {convention!r}")
    c = form.coeffs
    if degree in (0, dim):
        return float(c[0])
    if dim == 2:
        if convention == "identity":
            return c.copy()
        return np.array([c[1], -c[0]])
    if degree == 1:
        return c.copy()
    return np.array([c[2], -c[1], c[0]])
