"""
Per-cell polynomial subspaces as explicit, L²-orthonormal bases.

A ``SubspaceBasis`` stores its elements as columns of monomial-flat
coefficients in an enclosing full space P_RΛ^ℓ(f).  The four families are

* ``full``     P_rΛ^ℓ(f)
* ``koszul``   K_r^ℓ(f) = κ P_{r-1}Λ^{ℓ+1}(f)
* ``image_d``  dP_rΛ^ℓ(f) = dK_r^ℓ(f), an (ℓ+1)-form space of degree r - 1
* ``trimmed``  P_r^-Λ^ℓ(f) = dP_rΛ^{ℓ-1}(f) ⊕ K_r^ℓ(f), and P_rΛ^0(f) for ℓ = 0

Bases are orthonormalized with a rank-revealing SVD in the L² geometry of
the cell, so exact rank deficiencies of the Koszul images are detected in
floating point.  ``LocalSpaces`` caches them per mesh, keyed by
(cell, tag, r, ℓ).
"""

from __future__ import annotations

import logging
import threading
import weakref
from dataclasses import dataclass
from math import comb
from typing import TYPE_CHECKING

import numpy as np
import scipy.linalg

from discrete_de_rham.config import COND_ERROR, COND_WARN, RANK_CUTOFF
from discrete_de_rham.exterior_algebra import alt_dim
from discrete_de_rham.polynomial_forms import (
    FormField,
    PolyForm,
    derivative_matrix,
    embed_matrix,
    koszul_matrix,
    n_monomials,
    star_poly_matrix,
)
from discrete_de_rham.quadrature import field_moments, form_mass, traced_field

if TYPE_CHECKING:
    from discrete_de_rham.mesh import CellId, PolytopalMesh

logger = logging.getLogger(__name__)

TAGS = ("full", "koszul", "image_d", "trimmed")


class ConditioningError(ArithmeticError):
    """A local solve or basis is too ill-conditioned to be trusted."""


def check_condition(cond: float, context: str) -> None:
    if not np.isfinite(cond) or cond > COND_ERROR:
        raise ConditioningError(f"{context}: condition number {cond:.3g} exceeds {COND_ERROR:.0e}")
    if cond > COND_WARN:
        logger.warning("%s: condition number %.3g exceeds %.0e", context, cond, COND_WARN)


def guarded_solve(A: np.ndarray, b: np.ndarray, context: str, assume_a: str = "gen") -> np.ndarray:
    """Dense local solve with the conditioning guard."""
    if A.shape[0] == 0:
        return np.zeros((0,) + b.shape[1:])
    check_condition(np.linalg.cond(A), context)
    return scipy.linalg.solve(A, b, assume_a=assume_a)


# =============================================================================
# Cell-level coordinate operators (scaled by the cell diameter)
# =============================================================================
def d_op(h: float, d: int, r: int, ell: int) -> np.ndarray:
    """d : P_rΛ^ℓ(f) → P_rΛ^{ℓ+1}(f), degree bound kept at r."""
    return derivative_matrix(d, r, ell) / h


def koszul_op(h: float, d: int, r: int, ell: int) -> np.ndarray:
    """κ : P_rΛ^ℓ(f) → P_{r+1}Λ^{ℓ-1}(f)."""
    return koszul_matrix(d, r, ell) * h


def star_op(d: int, r: int, ell: int, inverse: bool = False) -> np.ndarray:
    """Pointwise ⋆ (or ⋆⁻¹) on P_rΛ^ℓ(f)."""
    return star_poly_matrix(d, r, ell, inverse)


@dataclass(frozen=True, eq=False)
class SubspaceBasis:
    """L²-orthonormal basis of a polynomial subspace on one cell."""

    cell: CellId
    degree: int        # form degree ℓ
    tag: str
    r: int             # degree parameter of the family
    poly_degree: int   # degree R of the enclosing full space P_RΛ^ℓ
    columns: np.ndarray
    mass: np.ndarray
    condition: float

    @property
    def dim(self) -> int:
        return self.columns.shape[1]

    @property
    def cell_dim(self) -> int:
        return self.cell[0]

    def as_poly(self, coeffs: np.ndarray, frame=None) -> PolyForm:
        flat = self.columns @ np.asarray(coeffs, dtype=float)
        return PolyForm.from_flat(self.cell_dim, self.degree, self.poly_degree, flat, frame)

    def embedded(self, R: int) -> np.ndarray:
        """Columns re-expressed in P_RΛ^ℓ for R ≥ poly_degree."""
        return embed_matrix(self.cell_dim, self.degree, self.poly_degree, R) @ self.columns

    def label(self) -> str:
        return f"{self.tag}(r={self.r}, ℓ={self.degree}) on cell {self.cell[0]}-{self.cell[1]}"


def orthonormalize(mesh: PolytopalMesh, fid: CellId, ell: int, R: int, A: np.ndarray,
                   tag: str, r: int) -> SubspaceBasis:
    """Rank-revealing L²-orthonormal basis of the column span of ``A`` ⊂ P_RΛ^ℓ(f)."""
    N = n_monomials(fid[0], R) * alt_dim(fid[0], ell)
    A = np.asarray(A, dtype=float)
    if N == 0 or A.size == 0 or not np.any(A):
        empty = np.zeros((N, 0))
        return SubspaceBasis(fid, ell, tag, r, R, empty, np.zeros((0, 0)), 1.0)
    M = form_mass(mesh, fid, ell, R)
    L = scipy.linalg.cholesky(M, lower=True)
    U, s, Vt = scipy.linalg.svd(L.T @ A, full_matrices=False)
    keep = s > RANK_CUTOFF * s[0]
    columns = A @ Vt[keep].T / s[keep]
    mass = columns.T @ M @ columns
    condition = float(s[0] / s[keep][-1])
    return SubspaceBasis(fid, ell, tag, r, R, columns, mass, condition)


# =============================================================================
# Space cache
# =============================================================================
class LocalSpaces:
    """Per-mesh cache of subspace bases keyed by (cell, tag, r, ℓ)."""

    def __init__(self, mesh: PolytopalMesh):
        self.mesh = mesh
        self._bases: dict[tuple, SubspaceBasis] = {}
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._bases)

    def _get(self, key: tuple, build) -> SubspaceBasis:
        with self._lock:
            basis = self._bases.get(key)
        if basis is None:
            basis = build()
            with self._lock:
                basis = self._bases.setdefault(key, basis)
        return basis

    def _h(self, fid: CellId) -> float:
        return self.mesh.cell(fid).diameter

    # -------------------------------------------------------------------------
    # Families
    # -------------------------------------------------------------------------
    def full_space(self, fid: CellId, r: int, ell: int) -> SubspaceBasis:
        d = fid[0]

        def build():
            if r < 0 or not 0 <= ell <= d:
                return orthonormalize(self.mesh, fid, max(ell, 0), max(r, 0), np.zeros((0, 0)), "full", r)
            N = n_monomials(d, r) * alt_dim(d, ell)
            return orthonormalize(self.mesh, fid, ell, r, np.eye(N), "full", r)

        return self._get((fid, "full", r, ell), build)

    def koszul_space(self, fid: CellId, r: int, ell: int) -> SubspaceBasis:
        """K_r^ℓ(f); empty for r = 0, ℓ ≥ dim f or ℓ < 0."""
        d = fid[0]

        def build():
            if r <= 0 or ell < 0 or ell >= d:
                return orthonormalize(self.mesh, fid, min(max(ell, 0), d), max(r, 0), np.zeros((0, 0)), "koszul", r)
            A = koszul_op(self._h(fid), d, r - 1, ell + 1)
            return orthonormalize(self.mesh, fid, ell, r, A, "koszul", r)

        return self._get((fid, "koszul", r, ell), build)

    def image_d_space(self, fid: CellId, r: int, ell: int) -> SubspaceBasis:
        """dP_rΛ^ℓ(f) = dK_r^ℓ(f), stored as (ℓ+1)-forms of degree max(r - 1, 0)."""
        d = fid[0]
        R = max(r - 1, 0)

        def build():
            if ell < 0 or ell + 1 > d or r <= 0:
                return orthonormalize(self.mesh, fid, min(max(ell + 1, 0), d), R, np.zeros((0, 0)), "image_d", r)
            K = self.koszul_space(fid, r, ell)
            dK = d_op(self._h(fid), d, r, ell) @ K.columns
            keep = n_monomials(d, R) * alt_dim(d, ell + 1)
            return orthonormalize(self.mesh, fid, ell + 1, R, dK[:keep], "image_d", r)

        return self._get((fid, "image_d", r, ell), build)

    def trimmed_space(self, fid: CellId, r: int, ell: int) -> SubspaceBasis:
        """P_r^-Λ^ℓ(f) stored in P_rΛ^ℓ(f)."""
        d = fid[0]

        def build():
            if ell == 0:
                full = self.full_space(fid, r, 0)
                return SubspaceBasis(fid, 0, "trimmed", r, full.poly_degree, full.columns, full.mass, full.condition)
            if r <= 0 or not 0 < ell <= d:
                return orthonormalize(self.mesh, fid, min(max(ell, 0), d), max(r, 0), np.zeros((0, 0)), "trimmed", r)
            image = self.image_d_space(fid, r, ell - 1).embedded(r)
            kos = self.koszul_space(fid, r, ell).columns
            return orthonormalize(self.mesh, fid, ell, r, np.hstack((image, kos)), "trimmed", r)

        return self._get((fid, "trimmed", r, ell), build)

    def space(self, fid: CellId, tag: str, r: int, ell: int) -> SubspaceBasis:
        builders = {
            "full": self.full_space, "koszul": self.koszul_space,
            "image_d": self.image_d_space, "trimmed": self.trimmed_space,
        }
        if tag not in builders:
            raise ValueError(f"unknown space tag '{tag}' (expected one of {', '.join(TAGS)})")
        return builders[tag](fid, r, ell)

    # -------------------------------------------------------------------------
    # Projections and decompositions
    # -------------------------------------------------------------------------
    def projection_matrix(self, basis: SubspaceBasis, R: int) -> np.ndarray:
        """Matrix mapping monomial-flat P_RΛ^ℓ coefficients to coefficients in ``basis``."""
        cross = form_mass(self.mesh, basis.cell, basis.degree, basis.poly_degree, R)
        if basis.dim == 0:
            return np.zeros((0, cross.shape[1]))
        return scipy.linalg.solve(basis.mass, basis.columns.T @ cross, assume_a="pos")

    def l2_project(self, basis: SubspaceBasis, source: PolyForm | FormField, degree: int | None = None) -> np.ndarray:
        """Coefficients of the L² projection of ``source`` onto ``basis``.

        A ``FormField`` is traced onto the cell and integrated with a rule of
        exactness ``degree`` (default: twice the basis degree plus four).
        """
        if basis.dim == 0:
            return np.zeros(0)
        if isinstance(source, PolyForm):
            if source.form_degree != basis.degree or source.cell_dim != basis.cell_dim:
                raise ValueError(
                    f"cannot project a {source.form_degree}-form on a {source.cell_dim}-cell onto {basis.label()}"
                )
            return self.projection_matrix(basis, source.poly_degree) @ source.flat
        if source.degree != basis.degree:
            raise ValueError(f"cannot project a {source.degree}-form field onto {basis.label()}")
        degree = 2 * basis.poly_degree + 4 if degree is None else degree
        q, values = traced_field(self.mesh, basis.cell, source, degree)
        moments = field_moments(self.mesh, basis.cell, values, q, basis.poly_degree)
        return scipy.linalg.solve(basis.mass, basis.columns.T @ moments, assume_a="pos")

    def project_values(self, basis: SubspaceBasis, values: np.ndarray, q) -> np.ndarray:
        """Projection of pointwise local-coframe values sampled on the rule ``q``."""
        if basis.dim == 0:
            return np.zeros(0)
        moments = field_moments(self.mesh, basis.cell, values, q, basis.poly_degree)
        return scipy.linalg.solve(basis.mass, basis.columns.T @ moments, assume_a="pos")

    def _split(self, fid: CellId, omega: PolyForm, mu_space: SubspaceBasis, nu_space: SubspaceBasis):
        d, ell, r = fid[0], omega.form_degree, omega.poly_degree
        R = max(r, mu_space.poly_degree - 1, nu_space.poly_degree)
        dmu = d_op(self._h(fid), d, mu_space.poly_degree, ell - 1) @ mu_space.columns
        dmu = embed_matrix(d, ell, mu_space.poly_degree, R) @ dmu
        G = np.hstack((dmu, nu_space.embedded(R)))
        M = form_mass(self.mesh, fid, ell, R)
        rhs = G.T @ M @ (embed_matrix(d, ell, r, R) @ omega.flat)
        coeffs = guarded_solve(G.T @ M @ G, rhs, f"decomposition on cell {fid[0]}-{fid[1]}", assume_a="pos")
        a, b = coeffs[: mu_space.dim], coeffs[mu_space.dim:]
        frame = omega.frame
        return mu_space.as_poly(a, frame), nu_space.as_poly(b, frame)

    def decompose(self, fid: CellId, omega: PolyForm) -> tuple[PolyForm, PolyForm]:
        """ω ∈ P_rΛ^ℓ(f), ℓ ≥ 1 → (μ ∈ K_{r+1}^{ℓ-1}, ν ∈ K_r^ℓ) with dμ + ν = ω."""
        ell, r = omega.form_degree, omega.poly_degree
        if ell < 1:
            raise ValueError("decompose needs a form of degree at least 1")
        return self._split(fid, omega, self.koszul_space(fid, r + 1, ell - 1), self.koszul_space(fid, r, ell))

    def trimmed_decompose(self, fid: CellId, omega: PolyForm) -> tuple[PolyForm, PolyForm]:
        """ω ∈ P_r^-Λ^ℓ(f), ℓ ≥ 1 → (μ ∈ K_r^{ℓ-1}, ν ∈ K_r^ℓ) with dμ + ν = ω."""
        ell, r = omega.form_degree, omega.poly_degree
        if ell < 1:
            raise ValueError("trimmed_decompose needs a form of degree at least 1")
        return self._split(fid, omega, self.koszul_space(fid, r, ell - 1), self.koszul_space(fid, r, ell))

    def dimension_ledger(self, fid: CellId, r: int, ell: int) -> dict[str, int]:
        d = fid[0]
        return {
            "full": self.full_space(fid, r, ell).dim,
            "full_r_minus_1": self.full_space(fid, r - 1, ell).dim if r >= 1 else 0,
            "koszul": self.koszul_space(fid, r, ell).dim,
            "image_d_r_plus_1": self.image_d_space(fid, r + 1, ell - 1).dim if ell >= 1 else 1,
            "image_d_r": self.image_d_space(fid, r, ell - 1).dim if ell >= 1 else 0,
            "trimmed": self.trimmed_space(fid, r, ell).dim,
        }


_SPACES: "weakref.WeakKeyDictionary[PolytopalMesh, LocalSpaces]" = weakref.WeakKeyDictionary()
_SPACES_LOCK = threading.Lock()


def spaces_for(mesh: PolytopalMesh) -> LocalSpaces:
    """Shared ``LocalSpaces`` cache of a mesh."""
    with _SPACES_LOCK:
        spaces = _SPACES.get(mesh)
        if spaces is None:
            spaces = _SPACES[mesh] = LocalSpaces(mesh)
        return spaces


# =============================================================================
# Dimension ledger
# =============================================================================
def trimmed_dimension(d: int, r: int, ell: int) -> int:
    """Closed form dim P_r^-Λ^ℓ(R^d) = C(r+ℓ-1, ℓ) C(d+r, d-ℓ), with P_rΛ^0 for ℓ = 0."""
    if ell == 0:
        return n_monomials(d, r)
    if r <= 0 or not 0 < ell <= d:
        return 0
    return comb(r + ell - 1, ell) * comb(d + r, d - ell)


def dimension_ledger(mesh: PolytopalMesh, r_max: int, cells=None) -> list[dict]:
    """Per (cell, r, ℓ) the computed dimensions and the integer identities they satisfy.

    * full(r, ℓ) = image_d(r+1, ℓ-1) + koszul(r, ℓ) (constants stand in for the image when ℓ = 0)
    * trimmed(r, ℓ) = image_d(r, ℓ-1) + koszul(r, ℓ) for ℓ ≥ 1, trimmed = full for ℓ = 0
    * trimmed(r, d) = full(r-1, d)
    * trimmed(r, ℓ) matches the closed form
    """
    spaces = spaces_for(mesh)
    if cells is None:
        cells = [fid for d in range(1, mesh.ambient_dim + 1) for fid in mesh.cell_ids(d)]
    records = []
    for fid in cells:
        d = fid[0]
        for r in range(r_max + 1):
            for ell in range(d + 1):
                dims = spaces.dimension_ledger(fid, r, ell)
                split = dims["image_d_r"] + dims["koszul"] if ell >= 1 else dims["full"]
                checks = {
                    "decomposition": dims["full"] == dims["image_d_r_plus_1"] + dims["koszul"],
                    "trimmed_split": dims["trimmed"] == split,
                    "top_degree": ell != d or dims["trimmed"] == dims["full_r_minus_1"],
                    "closed_form": dims["trimmed"] == trimmed_dimension(d, r, ell),
                }
                records.append({"cell": list(fid), "r": r, "ell": ell, **dims, **checks})
    return records
