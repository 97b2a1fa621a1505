"""
The discrete de Rham complex X^0_{r,h} → X^1_{r,h} → ... → X^n_{r,h}.

A discrete k-form carries, on every d-cell f with d ≥ k, a component in the
trimmed space P_r^-Λ^{d-k}(f), stored as coefficients in the cell's
orthonormal trimmed basis.  Local operators are dense matrices acting on the
*local* coefficient vector of f, i.e. the components on all subcells of f of
dimensions k..d (ordered by dimension, then index; f's own component last):

* ``potential(k, f)``      P^k_{r,f}, monomial-flat coefficients of P_rΛ^k(f)
* ``local_derivative(k, f)`` d^k_{r,f}, monomial-flat coefficients of P_rΛ^{k+1}(f)

Both are built by increasing cell dimension since each cell's definitions use
the potentials of its boundary.  Global operators (the discrete exterior
derivative, the L² product, reduction and extension to the lowest-degree
complex) are assembled as scipy sparse matrices.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from discrete_de_rham.config import STAB_ROUNDOFF, STABILIZATION_CHOICES, TOL_FLAT, field_quadrature_degree
from discrete_de_rham.exterior_algebra import alt_dim, star_matrix
from discrete_de_rham.local_spaces import (
    LocalSpaces,
    SubspaceBasis,
    d_op,
    guarded_solve,
    spaces_for,
    star_op,
)
from discrete_de_rham.mesh import CellId, PolytopalMesh
from discrete_de_rham.polynomial_forms import (
    FormField,
    LocalFrame,
    PolyForm,
    embed_matrix,
    n_monomials,
    pullback_matrix,
)
from discrete_de_rham.quadrature import form_mass, traced_field, wedge_pairing

logger = logging.getLogger(__name__)


# =============================================================================
# Discrete spaces (shared with the VEM complex)
# =============================================================================
class DiscreteSpace:
    """Global indexing of per-cell components for cells of dimension k..n.

    ``components[f]`` is the list of bases whose coefficients make up the
    data attached to f, in storage order.
    """

    def __init__(self, mesh: PolytopalMesh, k: int, r: int,
                 components: dict[CellId, list[SubspaceBasis]], label: str):
        self.mesh = mesh
        self.k = k
        self.r = r
        self.label = label
        self.components = components
        self.cells = [fid for d in range(k, mesh.ambient_dim + 1) for fid in mesh.cell_ids(d)]
        self.offsets: dict[CellId, slice] = {}
        self.parts: dict[CellId, list[slice]] = {}
        start = 0
        for fid in self.cells:
            parts = []
            for basis in components[fid]:
                parts.append(slice(start, start + basis.dim))
                start += basis.dim
            self.offsets[fid] = slice(parts[0].start if parts else start, start)
            self.parts[fid] = parts
        self.dim = start
        self._local: dict[CellId, np.ndarray] = {}

    def cell_dim(self, fid: CellId) -> int:
        return self.offsets[fid].stop - self.offsets[fid].start

    def local_dofs(self, fid: CellId) -> np.ndarray:
        """Global indices of the components on Δ_{d'}(f), d' = k..dim f."""
        if fid not in self._local:
            idx = [
                np.arange(self.offsets[sub].start, self.offsets[sub].stop)
                for dd in range(self.k, fid[0] + 1)
                for sub in self.mesh.subcells(fid, dd)
            ]
            self._local[fid] = np.concatenate(idx) if idx else np.zeros(0, dtype=int)
        return self._local[fid]

    def lift(self, matrix: np.ndarray, sub: CellId, fid: CellId) -> np.ndarray:
        """Re-express a matrix acting on local dofs of ``sub`` on the local dofs of ``fid``."""
        position = {g: i for i, g in enumerate(self.local_dofs(fid))}
        cols = [position[g] for g in self.local_dofs(sub)]
        out = np.zeros((matrix.shape[0], len(position)))
        out[:, cols] = matrix
        return out

    def own(self, fid: CellId, part: int = 0) -> np.ndarray:
        """Selection of one component of f from its local dofs."""
        local = self.local_dofs(fid)
        sl = self.parts[fid][part]
        n_before = len(local) - (self.offsets[fid].stop - sl.start)
        out = np.zeros((sl.stop - sl.start, len(local)))
        out[:, n_before:n_before + out.shape[0]] = np.eye(out.shape[0])
        return out

    def zeros(self) -> np.ndarray:
        return np.zeros(self.dim)

    def random(self, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal(self.dim)

    def element(self, values: np.ndarray) -> DiscreteForm:
        return DiscreteForm(self, np.asarray(values, dtype=float))


@dataclass(frozen=True, eq=False)
class DiscreteForm:
    """An element of a discrete space: one global coefficient vector."""

    space: DiscreteSpace
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.space.dim,):
            raise ValueError(f"expected {self.space.dim} coefficients, got {self.values.shape}")

    def component(self, fid: CellId, part: int = 0) -> np.ndarray:
        return self.values[self.space.parts[fid][part]]

    def restrict(self, fid: CellId) -> np.ndarray:
        return self.values[self.space.local_dofs(fid)]

    def __add__(self, other: DiscreteForm) -> DiscreteForm:
        return DiscreteForm(self.space, self.values + other.values)

    def __sub__(self, other: DiscreteForm) -> DiscreteForm:
        return DiscreteForm(self.space, self.values - other.values)

    def __mul__(self, scalar: float) -> DiscreteForm:
        return DiscreteForm(self.space, float(scalar) * self.values)

    __rmul__ = __mul__


class CellGeometry:
    """Cached trace matrices and wedge pairings on one mesh."""

    def __init__(self, mesh: PolytopalMesh):
        self.mesh = mesh
        self._traces: dict[tuple, np.ndarray] = {}

    def h(self, fid: CellId) -> float:
        return self.mesh.cell(fid).diameter

    def trace(self, fid: CellId, sub: CellId, r: int, ell: int) -> np.ndarray:
        key = (fid, sub, r, ell)
        if key not in self._traces:
            self._traces[key] = pullback_matrix(
                self.mesh.cell(fid).frame, self.mesh.cell(sub).frame, r, ell
            )
        return self._traces[key]

    def wedge(self, fid: CellId, ell: int, r1: int, r2: int) -> np.ndarray:
        return wedge_pairing(self.mesh, fid, ell, r1, r2)

    def mass(self, fid: CellId, ell: int, r1: int, r2: int | None = None) -> np.ndarray:
        return form_mass(self.mesh, fid, ell, r1, r2)


def projector(spaces: LocalSpaces, basis: SubspaceBasis, R: int) -> np.ndarray:
    return spaces.projection_matrix(basis, R)


def sparse_from_blocks(shape: tuple[int, int], blocks) -> sp.csr_matrix:
    """Sum (rows, cols, dense block) contributions into a CSR matrix."""
    rows, cols, vals = [], [], []
    for r_idx, c_idx, block in blocks:
        if block.size == 0:
            continue
        rr, cc = np.meshgrid(r_idx, c_idx, indexing="ij")
        rows.append(rr.ravel())
        cols.append(cc.ravel())
        vals.append(block.ravel())
    if not rows:
        return sp.csr_matrix(shape)
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=shape
    ).tocsr()
    mat.eliminate_zeros()
    return mat


# =============================================================================
# The DDR complex
# =============================================================================
@dataclass
class DdrOperators:
    """Local operators of one form degree, keyed by cell."""

    potential: dict[CellId, np.ndarray]
    derivative: dict[CellId, np.ndarray]
    improved_potential: dict[CellId, np.ndarray]


class DdrComplex:
    """X^k_{r,h} spaces with interpolators, local and global operators, for k = 0..n."""

    def __init__(self, mesh: PolytopalMesh, r: int, stabilization: str = "trace",
                 quad_degree: int | None = None):
        if r < 0:
            raise ValueError(f"polynomial degree must be non-negative, got {r}")
        if stabilization not in STABILIZATION_CHOICES:
            raise ValueError(f"unknown stabilization '{stabilization}' (choices: {', '.join(STABILIZATION_CHOICES)})")
        self.mesh = mesh
        self.r = r
        self.n = mesh.ambient_dim
        self.stabilization = stabilization
        self.quad_degree = quad_degree if quad_degree is not None else field_quadrature_degree(r)
        self.spaces = spaces_for(mesh)
        self.geometry = CellGeometry(mesh)
        self._space: dict[int, DiscreteSpace] = {}
        self._ops: dict[int, DdrOperators] = {}
        self._global_d: dict[int, sp.csr_matrix] = {}
        self._l2: dict[int, sp.csr_matrix] = {}
        self._lowest: DdrComplex | None = self if r == 0 else None
        self._lock = threading.Lock()

    def _store(self, cache: dict, key, value):
        """Publish a lazily built operator; the first writer wins."""
        with self._lock:
            return cache.setdefault(key, value)

    @property
    def lowest(self) -> DdrComplex:
        """The r = 0 complex on the same mesh."""
        if self._lowest is None:
            self._lowest = DdrComplex(self.mesh, 0, self.stabilization, self.quad_degree)
        return self._lowest

    def _check_k(self, k: int) -> None:
        if not 0 <= k <= self.n:
            raise ValueError(f"form degree must be in [0, {self.n}], got {k}")

    def space(self, k: int) -> DiscreteSpace:
        self._check_k(k)
        if k not in self._space:
            components = {
                fid: [self.spaces.trimmed_space(fid, self.r, fid[0] - k)]
                for d in range(k, self.n + 1)
                for fid in self.mesh.cell_ids(d)
            }
            X = self._store(self._space, k, DiscreteSpace(self.mesh, k, self.r, components, f"DDR_{self.r}"))
            logger.debug("X^%d_%d has dimension %d", k, self.r, X.dim)
        return self._space[k]

    def dimensions(self) -> list[int]:
        return [self.space(k).dim for k in range(self.n + 1)]

    def basis(self, k: int, fid: CellId) -> SubspaceBasis:
        return self.space(k).components[fid][0]

    # -------------------------------------------------------------------------
    # Local operators
    # -------------------------------------------------------------------------
    def operators(self, k: int) -> DdrOperators:
        self._check_k(k)
        if k not in self._ops:
            ops = DdrOperators({}, {}, {})
            for d in range(k, self.n + 1):
                for fid in self.mesh.cell_ids(d):
                    self._build_cell(k, fid, ops)
            self._store(self._ops, k, ops)
        return self._ops[k]

    def potential(self, k: int, fid: CellId) -> np.ndarray:
        return self.operators(k).potential[fid]

    def local_derivative(self, k: int, fid: CellId) -> np.ndarray:
        if fid[0] < k + 1:
            raise ValueError(f"the local derivative of a {k}-form needs a cell of dimension ≥ {k + 1}")
        return self.operators(k).derivative[fid]

    def improved_potential(self, fid: CellId) -> np.ndarray:
        """P^{r+1}_f of discrete 0-forms (monomial-flat coefficients of P_{r+1}Λ^0(f))."""
        return self.operators(0).improved_potential[fid]

    def _build_cell(self, k: int, fid: CellId, ops: DdrOperators) -> None:
        d, r = fid[0], self.r
        X = self.space(k)
        geo = self.geometry
        h = geo.h(fid)
        B = self.basis(k, fid)
        where = f"cell {fid[0]}-{fid[1]}, k={k}"
        omega_star = star_op(d, r, d - k, inverse=True) @ B.columns @ X.own(fid)
        if d == k:
            ops.potential[fid] = omega_star
            if k == 0:
                ops.improved_potential[fid] = embed_matrix(d, 0, r, r + 1) @ omega_star
            return
        facets = self.mesh.facets(fid)

        # Riesz representation of d^k_{r,f} with tests ⋆β, β ∈ P_rΛ^{k+1}(f)
        star_tests = star_op(d, r, k + 1)
        d_tests = d_op(h, d, r, d - k - 1) @ star_tests
        rhs = (-1) ** (k + 1) * d_tests.T @ geo.wedge(fid, k, r, r).T @ omega_star
        for sub, eps in facets:
            tr = geo.trace(fid, sub, r, d - k - 1) @ star_tests
            rhs += eps * tr.T @ geo.wedge(sub, k, r, r).T @ X.lift(ops.potential[sub], sub, fid)
        mass = geo.mass(fid, k + 1, r)
        derivative = guarded_solve(mass, rhs, f"discrete derivative on {where}", assume_a="pos")
        ops.derivative[fid] = derivative

        # Potential: tests (μ, ν) ∈ K_{r+1}^{d-k-1} × K_r^{d-k}
        K_mu = self.spaces.koszul_space(fid, r + 1, d - k - 1)
        K_nu = self.spaces.koszul_space(fid, r, d - k)
        keep = n_monomials(d, r) * alt_dim(d, d - k)
        d_mu = (d_op(h, d, r + 1, d - k - 1) @ K_mu.columns)[:keep]
        tests = np.hstack((d_mu, K_nu.columns))
        W = geo.wedge(fid, k, r, r)
        A = (-1) ** (k + 1) * tests.T @ W.T
        rhs_mu = K_mu.columns.T @ geo.wedge(fid, k + 1, r, r + 1).T @ derivative
        for sub, eps in facets:
            tr = geo.trace(fid, sub, r + 1, d - k - 1) @ K_mu.columns
            rhs_mu -= eps * tr.T @ geo.wedge(sub, k, r, r + 1).T @ X.lift(ops.potential[sub], sub, fid)
        rhs_nu = (-1) ** (k + 1) * K_nu.columns.T @ W.T @ omega_star
        ops.potential[fid] = guarded_solve(A, np.vstack((rhs_mu, rhs_nu)), f"potential on {where}")

        if k == 0:
            ops.improved_potential[fid] = self._improved(fid, derivative, ops)

    def _improved(self, fid: CellId, derivative: np.ndarray, ops: DdrOperators) -> np.ndarray:
        """-∫ P∧dμ = ∫ d_f ω∧μ - ∫_∂f P^{r+1}_∂ ∧ tr μ for μ ∈ K_{r+2}^{d-1}."""
        d, r = fid[0], self.r
        X = self.space(0)
        geo = self.geometry
        K = self.spaces.koszul_space(fid, r + 2, d - 1)
        keep = n_monomials(d, r + 1)
        d_mu = (d_op(geo.h(fid), d, r + 2, d - 1) @ K.columns)[:keep]
        A = -d_mu.T @ geo.wedge(fid, 0, r + 1, r + 1).T
        rhs = K.columns.T @ geo.wedge(fid, 1, r, r + 2).T @ derivative
        for sub, eps in self.mesh.facets(fid):
            tr = geo.trace(fid, sub, r + 2, d - 1) @ K.columns
            rhs -= eps * tr.T @ geo.wedge(sub, 0, r + 1, r + 2).T @ X.lift(ops.improved_potential[sub], sub, fid)
        return guarded_solve(A, rhs, f"improved potential on cell {fid[0]}-{fid[1]}")

    # -------------------------------------------------------------------------
    # Interpolation
    # -------------------------------------------------------------------------
    def _interpolate_cell(self, k: int, fid: CellId, field: FormField) -> np.ndarray:
        d = fid[0]
        q, values = traced_field(self.mesh, fid, field, self.quad_degree)
        values = values @ star_matrix(d, k).T
        return self.spaces.project_values(self.basis(k, fid), values, q)

    def interpolate(self, k: int, field: FormField) -> np.ndarray:
        """I^k_{r,h} ω: trimmed projections of ⋆ tr_f ω on every cell of dimension ≥ k."""
        self._check_k(k)
        if field.degree != k or field.dim != self.n:
            raise ValueError(f"cannot interpolate a {field.degree}-form field on R^{field.dim} into X^{k} (n={self.n})")
        X = self.space(k)
        out = X.zeros()
        for fid in X.cells:
            out[X.offsets[fid]] = self._interpolate_cell(k, fid, field)
        return out

    def interpolate_local(self, k: int, fid: CellId, field: FormField) -> np.ndarray:
        """Interpolate on the closure of one cell, in its local dof ordering."""
        X = self.space(k)
        out = []
        for dd in range(k, fid[0] + 1):
            for sub in self.mesh.subcells(fid, dd):
                out.append(self._interpolate_cell(k, sub, field))
        return np.concatenate(out) if out else np.zeros(0)

    def interpolate_form(self, k: int, field: FormField) -> DiscreteForm:
        return self.space(k).element(self.interpolate(k, field))

    # -------------------------------------------------------------------------
    # Global operators
    # -------------------------------------------------------------------------
    def global_d(self, k: int) -> sp.csr_matrix:
        """Sparse D^k : X^k → X^{k+1}; an empty-row matrix for k = n."""
        self._check_k(k)
        if k not in self._global_d:
            X = self.space(k)
            if k == self.n:
                return self._store(self._global_d, k, sp.csr_matrix((0, X.dim)))
            Y = self.space(k + 1)
            ops = self.operators(k)
            blocks = []
            for d in range(k + 1, self.n + 1):
                for fid in self.mesh.cell_ids(d):
                    B = self.basis(k + 1, fid)
                    proj = projector(self.spaces, B, self.r)
                    block = proj @ star_op(d, self.r, k + 1) @ ops.derivative[fid]
                    rows = np.arange(Y.offsets[fid].start, Y.offsets[fid].stop)
                    blocks.append((rows, X.local_dofs(fid), block))
            self._store(self._global_d, k, sparse_from_blocks((Y.dim, X.dim), blocks))
        return self._global_d[k]

    def apply_d(self, k: int, omega: np.ndarray) -> np.ndarray:
        return self.global_d(k) @ omega

    def _stabilization_jumps(self, k: int, cell: CellId) -> list[tuple[float, np.ndarray, np.ndarray]]:
        """(weight, jump matrix J, metric M) so that s = Σ weight · (J ω)ᵀ M (J ω)."""
        X = self.space(k)
        ops = self.operators(k)
        r, n = self.r, self.n
        h = self.geometry.h(cell)
        P = ops.potential[cell]
        out = []
        for dd in range(k, n):
            for sub in self.mesh.subcells(cell, dd):
                traced = self.geometry.trace(cell, sub, r, k) @ P
                if self.stabilization == "trace":
                    J = traced - X.lift(ops.potential[sub], sub, cell)
                    M = self.geometry.mass(sub, k, r)
                else:
                    B = self.basis(k, sub)
                    proj = projector(self.spaces, B, r)
                    J = proj @ star_op(dd, r, k) @ traced - X.lift(X.own(sub), sub, cell)
                    M = B.mass
                out.append((h ** (n - dd), J, M))
        return out

    def local_l2_matrix(self, k: int, cell: CellId) -> tuple[np.ndarray, np.ndarray]:
        """(consistent part, stabilization) of (·,·)_{k,T} on an n-cell, over its local dofs."""
        P = self.potential(k, cell)
        consistent = P.T @ self.geometry.mass(cell, k, self.r) @ P
        stab = np.zeros_like(consistent)
        for weight, J, M in self._stabilization_jumps(k, cell):
            stab += weight * J.T @ M @ J
        return consistent, stab

    def l2_matrix(self, k: int) -> sp.csr_matrix:
        """Sparse Gram matrix of the discrete L² product (·,·)_{k,h}."""
        self._check_k(k)
        if k not in self._l2:
            X = self.space(k)
            blocks = []
            for cell in self.mesh.cell_ids(self.n):
                consistent, stab = self.local_l2_matrix(k, cell)
                dofs = X.local_dofs(cell)
                blocks.append((dofs, dofs, consistent + stab))
            self._store(self._l2, k, sparse_from_blocks((X.dim, X.dim), blocks))
        return self._l2[k]

    def stabilization_matrix(self, k: int) -> sp.csr_matrix:
        X = self.space(k)
        blocks = []
        for cell in self.mesh.cell_ids(self.n):
            _, stab = self.local_l2_matrix(k, cell)
            dofs = X.local_dofs(cell)
            blocks.append((dofs, dofs, stab))
        return sparse_from_blocks((X.dim, X.dim), blocks)

    def l2_product(self, k: int, omega: np.ndarray, mu: np.ndarray) -> float:
        return float(omega @ (self.l2_matrix(k) @ mu))

    def stab_form(self, k: int, omega: np.ndarray) -> float:
        """The stabilization quadratic form s(ω, ω), unclamped."""
        return float(omega @ (self.stabilization_matrix(k) @ omega))

    def stab_seminorm(self, k: int, omega: np.ndarray) -> float:
        """sqrt(s(ω, ω)), reported as 0 when the form is at roundoff level of |ω|ᵀ|S||ω|."""
        S = self.stabilization_matrix(k)
        value = float(omega @ (S @ omega))
        magnitude = np.abs(omega)
        floor = STAB_ROUNDOFF * float(magnitude @ (abs(S) @ magnitude))
        if value <= floor:
            return 0.0
        return float(np.sqrt(value))

    def global_potential(self, k: int, omega: np.ndarray) -> dict[CellId, PolyForm]:
        """Broken potential P_h ω: the cell potential on every n-cell."""
        X = self.space(k)
        return {
            cell: PolyForm.from_flat(self.n, k, self.r,
                                     self.potential(k, cell) @ omega[X.local_dofs(cell)],
                                     self.mesh.cell(cell).frame)
            for cell in self.mesh.cell_ids(self.n)
        }

    def potential_form(self, k: int, fid: CellId, omega_loc: np.ndarray) -> PolyForm:
        return PolyForm.from_flat(fid[0], k, self.r, self.potential(k, fid) @ omega_loc,
                                  self.mesh.cell(fid).frame)

    def derivative_form(self, k: int, fid: CellId, omega_loc: np.ndarray) -> PolyForm:
        return PolyForm.from_flat(fid[0], k + 1, self.r, self.local_derivative(k, fid) @ omega_loc,
                                  self.mesh.cell(fid).frame)

    # -------------------------------------------------------------------------
    # Residuals of the identities linking the local operators
    # -------------------------------------------------------------------------
    def projection_identity_residual(self, k: int, fid: CellId, omega_loc: np.ndarray) -> np.ndarray:
        """π^-(⋆ P ω_f) - ω_f in the component basis of f."""
        d = fid[0]
        proj = projector(self.spaces, self.basis(k, fid), self.r)
        X = self.space(k)
        return proj @ star_op(d, self.r, k) @ self.potential(k, fid) @ omega_loc - X.own(fid) @ omega_loc

    def pot_diff_link_residual(self, k: int, fid: CellId, omega: np.ndarray) -> np.ndarray:
        """P^{k+1}_f (D^k ω)|_f - d^k_f ω_f, monomial-flat."""
        if fid[0] < k + 1:
            raise ValueError(f"the link between potential and derivative needs a cell of dimension ≥ {k + 1}")
        X, Y = self.space(k), self.space(k + 1)
        d_omega = self.apply_d(k, omega)
        return (self.potential(k + 1, fid) @ d_omega[Y.local_dofs(fid)]
                - self.local_derivative(k, fid) @ omega[X.local_dofs(fid)])

    def subcell_derivative_link_check(self, k: int, fid: CellId, omega_loc: np.ndarray,
                                      alpha: np.ndarray) -> float:
        """|∫_f d_f ω ∧ dα - (-1)^{k+1} ∫_∂f d_∂f ω ∧ tr α| for α in P_{r+1}^-Λ^{d-k-2}(f).

        ``alpha`` holds coefficients in the trimmed basis of that space.
        """
        d, r = fid[0], self.r
        if d < k + 2:
            raise ValueError(f"the subcell derivative link needs a cell of dimension ≥ {k + 2}")
        X = self.space(k)
        geo = self.geometry
        B = self.spaces.trimmed_space(fid, r + 1, d - k - 2)
        a = B.columns @ alpha
        d_alpha = d_op(geo.h(fid), d, r + 1, d - k - 2) @ a
        lhs = (self.local_derivative(k, fid) @ omega_loc) @ geo.wedge(fid, k + 1, r, r + 1) @ d_alpha
        rhs = 0.0
        for sub, eps in self.mesh.facets(fid):
            d_sub = X.lift(self.local_derivative(k, sub), sub, fid) @ omega_loc
            rhs += eps * d_sub @ geo.wedge(sub, k + 1, r, r + 1) @ (geo.trace(fid, sub, r + 1, d - k - 2) @ a)
        return float(abs(lhs - (-1) ** (k + 1) * rhs))

    def potential_correction_residual(self, k: int, fid: CellId, omega_loc: np.ndarray,
                                      mu: np.ndarray, nu: np.ndarray) -> float:
        """Residual of the identity linking the potential of f to its component.

        For μ ∈ K_{r+1}^{d-k-1}(f), ν ∈ K_r^{d-k}(f) (coefficients in their
        bases) and π the L² projection onto P_r:

            (-1)^{k+1} ∫ P ω ∧ (dμ + ν)
              = (-1)^{k+1} ∫ ⋆⁻¹ω_f ∧ (dπμ + ν) + ∫ d_f ω ∧ (μ - πμ) - ∫_∂f P_∂ ω ∧ tr(μ - πμ)
        """
        d, r = fid[0], self.r
        if d < k + 1:
            raise ValueError(f"the potential correction identity needs a cell of dimension ≥ {k + 1}")
        X = self.space(k)
        geo = self.geometry
        h = geo.h(fid)
        ell = d - k - 1
        mu_flat = self.spaces.koszul_space(fid, r + 1, ell).columns @ mu
        nu_flat = embed_matrix(d, d - k, r, r + 1) @ (self.spaces.koszul_space(fid, r, d - k).columns @ nu)
        pi_mu = scipy.linalg.solve(geo.mass(fid, ell, r), geo.mass(fid, ell, r, r + 1) @ mu_flat, assume_a="pos")
        rest = mu_flat - embed_matrix(d, ell, r, r + 1) @ pi_mu
        d_mu = d_op(h, d, r + 1, ell) @ mu_flat
        d_pi_mu = embed_matrix(d, d - k, r, r + 1) @ (d_op(h, d, r, ell) @ pi_mu)
        sign = (-1) ** (k + 1)
        W = geo.wedge(fid, k, r, r + 1)
        star_component = star_op(d, r, d - k, inverse=True) @ self.basis(k, fid).columns @ X.own(fid) @ omega_loc
        lhs = sign * (self.potential(k, fid) @ omega_loc) @ W @ (d_mu + nu_flat)
        rhs = sign * star_component @ W @ (d_pi_mu + nu_flat)
        rhs += (self.local_derivative(k, fid) @ omega_loc) @ geo.wedge(fid, k + 1, r, r + 1) @ rest
        for sub, eps in self.mesh.facets(fid):
            p_sub = X.lift(self.potential(k, sub), sub, fid) @ omega_loc
            rhs -= eps * p_sub @ geo.wedge(sub, k, r, r + 1) @ (geo.trace(fid, sub, r + 1, ell) @ rest)
        return float(abs(lhs - rhs))

    # -------------------------------------------------------------------------
    # Flat subspace, reduction and extension
    # -------------------------------------------------------------------------
    def cell_averages(self, k: int, omega: np.ndarray) -> np.ndarray:
        """∫_f ω_f over k-cells (zero for elements of the flat subspace)."""
        X = self.space(k)
        out = []
        for fid in self.mesh.cell_ids(k):
            B = self.basis(k, fid)
            out.append(float(self.geometry.mass(fid, 0, 0, self.r)[0] @ (B.columns @ omega[X.offsets[fid]])))
        return np.asarray(out)

    def flat_preimage(self, k: int, eta: np.ndarray, tol: float = TOL_FLAT) -> np.ndarray:
        """ω ∈ X^{k-1}_♭ with D^{k-1} ω = η for η ∈ X^k_♭ ∩ ker D^k (empty vector for k = 0)."""
        self._check_k(k)
        scale = 1.0 + float(np.max(np.abs(eta), initial=0.0))
        averages = self.cell_averages(k, eta)
        if np.max(np.abs(averages), initial=0.0) > tol * scale:
            raise ValueError(f"input is not in the flat subspace: k-cell averages up to {np.max(np.abs(averages)):.3g}")
        residual = np.max(np.abs(self.apply_d(k, eta)), initial=0.0)
        if residual > tol * scale:
            raise ValueError(f"input is not in the kernel of the discrete derivative (residual {residual:.3g})")
        if k == 0:
            if np.max(np.abs(eta), initial=0.0) > tol * scale:
                raise ValueError("a flat kernel element of X^0 must vanish")
            return np.zeros(0)
        r = self.r
        geo = self.geometry
        X = self.space(k)
        Y = self.space(k - 1)
        pot_k, pot_km1 = self.operators(k).potential, self.operators(k - 1).potential
        omega = Y.zeros()
        for d in range(k, self.n + 1):
            for fid in self.mesh.cell_ids(d):
                h = geo.h(fid)
                K = self.spaces.koszul_space(fid, r, d - k)
                d_alpha = d_op(h, d, r, d - k) @ K.columns
                starred = star_op(d, r, d - k + 1, inverse=True) @ d_alpha
                A = (-1) ** k * d_alpha.T @ geo.wedge(fid, k - 1, r, r).T @ starred
                p_eta = pot_k[fid] @ eta[X.local_dofs(fid)]
                rhs = K.columns.T @ geo.wedge(fid, k, r, r).T @ p_eta
                for sub, eps in self.mesh.facets(fid):
                    tr = geo.trace(fid, sub, r, d - k) @ K.columns
                    p_omega = pot_km1[sub] @ omega[Y.local_dofs(sub)]
                    rhs -= eps * tr.T @ geo.wedge(sub, k - 1, r, r).T @ p_omega
                alpha = guarded_solve(A, rhs, f"flat preimage on cell {fid[0]}-{fid[1]}")
                proj = projector(self.spaces, self.basis(k - 1, fid), r)
                omega[Y.offsets[fid]] = proj @ (d_alpha @ alpha)
        residual = np.max(np.abs(self.apply_d(k - 1, omega) - eta), initial=0.0)
        if residual > tol * scale:
            raise ArithmeticError(f"flat preimage residual {residual:.3g} exceeds {tol:.0e}")
        return omega

    def reduction(self, k: int) -> sp.csr_matrix:
        """R^k : X^k_{r,h} → X^k_{0,h}, averaging components on k-cells."""
        low = self.lowest
        X, X0 = self.space(k), low.space(k)
        blocks = []
        for fid in self.mesh.cell_ids(k):
            B0, B = low.basis(k, fid), self.basis(k, fid)
            block = scipy.linalg.solve(B0.mass, B0.columns.T @ self.geometry.mass(fid, 0, 0, self.r) @ B.columns)
            blocks.append((np.arange(X0.offsets[fid].start, X0.offsets[fid].stop),
                           np.arange(X.offsets[fid].start, X.offsets[fid].stop), block))
        return sparse_from_blocks((X0.dim, X.dim), blocks)

    def extension(self, k: int) -> sp.csr_matrix:
        """E^k : X^k_{0,h} → X^k_{r,h}, built by induction on the cell dimension."""
        low = self.lowest
        r = self.r
        geo = self.geometry
        X, X0 = self.space(k), low.space(k)
        E = np.zeros((X.dim, X0.dim))
        pot = self.operators(k).potential
        low_ops = low.operators(k)
        for fid in self.mesh.cell_ids(k):
            B0, B = low.basis(k, fid), self.basis(k, fid)
            block = scipy.linalg.solve(B.mass, B.columns.T @ geo.mass(fid, 0, r, 0) @ B0.columns)
            E[X.offsets[fid], X0.offsets[fid]] = block
        for d in range(k + 1, self.n + 1):
            for fid in self.mesh.cell_ids(d):
                h = geo.h(fid)
                B = self.basis(k, fid)
                K_mu = self.spaces.koszul_space(fid, r, d - k - 1)
                K_nu = self.spaces.koszul_space(fid, r, d - k)
                d_mu = d_op(h, d, r, d - k - 1) @ K_mu.columns
                tests = np.hstack((d_mu, K_nu.columns))
                W = geo.wedge(fid, k, r, r)
                A = (-1) ** (k + 1) * tests.T @ W.T @ star_op(d, r, d - k, inverse=True) @ B.columns
                local0 = X0.local_dofs(fid)
                select = np.zeros((len(local0), X0.dim))
                select[np.arange(len(local0)), local0] = 1.0
                rhs_mu = K_mu.columns.T @ geo.wedge(fid, k + 1, 0, r).T @ low_ops.derivative[fid] @ select
                for sub, eps in self.mesh.facets(fid):
                    tr = geo.trace(fid, sub, r, d - k - 1) @ K_mu.columns
                    p_sub = pot[sub] @ E[X.local_dofs(sub)]
                    rhs_mu -= eps * tr.T @ geo.wedge(sub, k, r, r).T @ p_sub
                rhs_nu = ((-1) ** (k + 1) * K_nu.columns.T @ geo.wedge(fid, k, 0, r).T
                          @ low_ops.potential[fid] @ select)
                E[X.offsets[fid]] = guarded_solve(A, np.vstack((rhs_mu, rhs_nu)),
                                                  f"extension on cell {fid[0]}-{fid[1]}")
        return sp.csr_matrix(E)


def random_polynomial_field(n: int, k: int, degree: int, rng: np.random.Generator) -> FormField:
    """Global polynomial k-form of the given degree in the canonical chart of R^n."""
    frame = LocalFrame(np.zeros(n), np.eye(n), 1.0)
    coeffs = rng.standard_normal((n_monomials(n, degree), alt_dim(n, k)))
    return FormField.from_poly(PolyForm(n, k, degree, coeffs, frame))


def residual_norm(a: np.ndarray, b: np.ndarray) -> float:
    """max|a - b| relative to 1 + max|b|."""
    return float(np.max(np.abs(a - b), initial=0.0) / (1.0 + np.max(np.abs(b), initial=0.0)))

