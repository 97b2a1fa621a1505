"""
The VEM-inspired complex V^0_{r,h} → ... → V^n_{r,h}.

Components per cell f of dimension d for a k-form:

    d = k       ω_f ∈ P_rΛ^0(f)
    d = k + 1   (ω_f, D_{ω,f}) ∈ K_{r+1}^1(f) × K_r^0(f)
    d ≥ k + 2   (ω_f, D_{ω,f}) ∈ K_{r+1}^{d-k}(f) × K_{r+1}^{d-k-1}(f)

D_{ω,f} stands for the Hodge star of the exterior derivative.  The global
derivative only needs the Riesz-defined local derivative on (k+1)-cells; on
higher cells it moves D_{ω,f} into the first slot of the next space.
Potentials (values in P_{r+1}^-Λ^k) and the higher-cell local derivatives are
reconstructed by increasing cell dimension, with the potential of the image
of the global derivative supplying the derivative data on cells of dimension
k + 2 and more.
"""

from __future__ import annotations

import logging
import threading

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from discrete_de_rham.config import field_quadrature_degree
from discrete_de_rham.ddr import CellGeometry, DdrComplex, DiscreteSpace, projector, sparse_from_blocks
from discrete_de_rham.exterior_algebra import star_matrix
from discrete_de_rham.local_spaces import SubspaceBasis, check_condition, d_op, guarded_solve, spaces_for, star_op
from discrete_de_rham.mesh import CellId, PolytopalMesh
from discrete_de_rham.polynomial_forms import FormField, PolyForm, embed_matrix, n_monomials
from discrete_de_rham.quadrature import traced_field

logger = logging.getLogger(__name__)


class VemComplex:
    """V^k_{r,h} spaces with interpolators, local and global operators, for k = 0..n."""

    def __init__(self, mesh: PolytopalMesh, r: int, quad_degree: int | None = None):
        if r < 0:
            raise ValueError(f"polynomial degree must be non-negative, got {r}")
        self.mesh = mesh
        self.r = r
        self.n = mesh.ambient_dim
        self.quad_degree = quad_degree if quad_degree is not None else field_quadrature_degree(r + 1)
        self.spaces = spaces_for(mesh)
        self.geometry = CellGeometry(mesh)
        self._space: dict[int, DiscreteSpace] = {}
        self._riesz: dict[int, dict[CellId, np.ndarray]] = {}
        self._potential: dict[int, dict[CellId, np.ndarray]] = {}
        self._global_d: dict[int, sp.csr_matrix] = {}
        self._lowest: DdrComplex | None = None
        self._lock = threading.Lock()

    def _store(self, cache: dict, key, value):
        with self._lock:
            return cache.setdefault(key, value)

    @property
    def lowest(self) -> DdrComplex:
        """The r = 0 DDR complex on the same mesh, target of the reduction."""
        if self._lowest is None:
            self._lowest = DdrComplex(self.mesh, 0)
        return self._lowest

    def _check_k(self, k: int) -> None:
        if not 0 <= k <= self.n:
            raise ValueError(f"form degree must be in [0, {self.n}], got {k}")

    def _components(self, k: int, fid: CellId) -> list[SubspaceBasis]:
        d, r = fid[0], self.r
        if d == k:
            return [self.spaces.full_space(fid, r, 0)]
        if d == k + 1:
            return [self.spaces.koszul_space(fid, r + 1, 1), self.spaces.koszul_space(fid, r, 0)]
        return [self.spaces.koszul_space(fid, r + 1, d - k), self.spaces.koszul_space(fid, r + 1, d - k - 1)]

    def space(self, k: int) -> DiscreteSpace:
        self._check_k(k)
        if k not in self._space:
            components = {
                fid: self._components(k, fid)
                for d in range(k, self.n + 1)
                for fid in self.mesh.cell_ids(d)
            }
            V = self._store(self._space, k, DiscreteSpace(self.mesh, k, self.r, components, f"VEM_{self.r}"))
            logger.debug("V^%d_%d has dimension %d", k, self.r, V.dim)
        return self._space[k]

    def dimensions(self) -> list[int]:
        return [self.space(k).dim for k in range(self.n + 1)]

    # -------------------------------------------------------------------------
    # Interpolation
    # -------------------------------------------------------------------------
    def _project_trace(self, basis: SubspaceBasis, field: FormField) -> np.ndarray:
        fid = basis.cell
        q, values = traced_field(self.mesh, fid, field, self.quad_degree)
        values = values @ star_matrix(fid[0], field.degree).T
        return self.spaces.project_values(basis, values, q)

    def _interpolate_cell(self, k: int, fid: CellId, field: FormField, d_field: FormField | None) -> np.ndarray:
        parts = self.space(k).components[fid]
        out = [self._project_trace(parts[0], field)]
        if len(parts) == 2:
            out.append(self._project_trace(parts[1], d_field))
        return np.concatenate(out)

    def interpolate(self, k: int, field: FormField) -> np.ndarray:
        """I^k_{r,h} ω; needs the derivative evaluator of ω when k < n."""
        self._check_k(k)
        if field.degree != k or field.dim != self.n:
            raise ValueError(f"cannot interpolate a {field.degree}-form field on R^{field.dim} into V^{k} (n={self.n})")
        d_field = field.d() if k < self.n else None
        X = self.space(k)
        out = X.zeros()
        for fid in X.cells:
            out[X.offsets[fid]] = self._interpolate_cell(k, fid, field, d_field)
        return out

    def interpolate_local(self, k: int, fid: CellId, field: FormField) -> np.ndarray:
        d_field = field.d() if k < fid[0] else None
        return np.concatenate([
            self._interpolate_cell(k, sub, field, d_field)
            for dd in range(k, fid[0] + 1)
            for sub in self.mesh.subcells(fid, dd)
        ])

    # -------------------------------------------------------------------------
    # Local derivative on (k+1)-cells and the global derivative
    # -------------------------------------------------------------------------
    def _riesz_derivative(self, k: int, fid: CellId) -> np.ndarray:
        """∫ d ω ∧ (μ + ν) = ∫_∂f ⋆⁻¹ω_∂f ∧ tr μ + ∫ ⋆⁻¹D_ω ∧ ν, μ ∈ P_0Λ^0, ν ∈ K_r^0."""
        d, r = fid[0], self.r
        X = self.space(k)
        geo = self.geometry
        K = self.spaces.koszul_space(fid, r, 0)
        one = np.zeros((n_monomials(d, r), 1))
        one[0, 0] = 1.0
        tests = np.hstack((one, K.columns))
        A = tests.T @ geo.wedge(fid, d, r, r).T
        rhs_mu = np.zeros((1, len(X.local_dofs(fid))))
        for sub, eps in self.mesh.facets(fid):
            B = X.components[sub][0]
            omega_star = star_op(k, r, 0, inverse=True) @ B.columns @ X.own(sub)
            tr_one = geo.trace(fid, sub, 0, 0) @ one[:1]
            rhs_mu += eps * tr_one.T @ geo.wedge(sub, k, r, 0).T @ X.lift(omega_star, sub, fid)
        D_star = star_op(d, r, 0, inverse=True) @ X.components[fid][1].columns @ X.own(fid, 1)
        rhs_nu = K.columns.T @ geo.wedge(fid, d, r, r).T @ D_star
        return guarded_solve(A, np.vstack((rhs_mu, rhs_nu)), f"VEM derivative on cell {fid[0]}-{fid[1]}, k={k}")

    def riesz_derivatives(self, k: int) -> dict[CellId, np.ndarray]:
        self._check_k(k)
        if k not in self._riesz:
            cells = self.mesh.cell_ids(k + 1) if k < self.n else []
            self._store(self._riesz, k, {fid: self._riesz_derivative(k, fid) for fid in cells})
        return self._riesz[k]

    def global_d(self, k: int) -> sp.csr_matrix:
        """Sparse D^k: ⋆(local d) on (k+1)-cells, (D_{ω,f}, 0) on higher cells."""
        self._check_k(k)
        if k not in self._global_d:
            X = self.space(k)
            if k == self.n:
                return self._store(self._global_d, k, sp.csr_matrix((0, X.dim)))
            Y = self.space(k + 1)
            blocks = []
            for fid, derivative in self.riesz_derivatives(k).items():
                d = fid[0]
                block = projector(self.spaces, Y.components[fid][0], self.r) @ star_op(d, self.r, d) @ derivative
                blocks.append((np.arange(Y.offsets[fid].start, Y.offsets[fid].stop), X.local_dofs(fid), block))
            for d in range(k + 2, self.n + 1):
                for fid in self.mesh.cell_ids(d):
                    source, target = X.parts[fid][1], Y.parts[fid][0]
                    B_from, B_to = X.components[fid][1], Y.components[fid][0]
                    block = scipy.linalg.solve(B_to.mass, B_to.columns.T
                                               @ self.geometry.mass(fid, d - k - 1, self.r + 1) @ B_from.columns,
                                               assume_a="pos")
                    blocks.append((np.arange(target.start, target.stop), np.arange(source.start, source.stop), block))
            self._store(self._global_d, k, sparse_from_blocks((Y.dim, X.dim), blocks))
        return self._global_d[k]

    def apply_d(self, k: int, omega: np.ndarray) -> np.ndarray:
        return self.global_d(k) @ omega

    def _local_global_d(self, k: int, fid: CellId) -> np.ndarray:
        """Global derivative restricted to the closure of f, as a dense local matrix."""
        X, Y = self.space(k), self.space(k + 1)
        return self.global_d(k)[Y.local_dofs(fid)][:, X.local_dofs(fid)].toarray()

    # -------------------------------------------------------------------------
    # Potentials and higher-cell derivatives
    # -------------------------------------------------------------------------
    def potentials(self, k: int) -> dict[CellId, np.ndarray]:
        """P^k_f for every cell of dimension ≥ k, monomial-flat coefficients at degree r + 1."""
        self._check_k(k)
        if k not in self._potential:
            ops: dict[CellId, np.ndarray] = {}
            for d in range(k, self.n + 1):
                for fid in self.mesh.cell_ids(d):
                    ops[fid] = self._build_potential(k, fid, ops)
            self._store(self._potential, k, ops)
        return self._potential[k]

    def potential(self, k: int, fid: CellId) -> np.ndarray:
        return self.potentials(k)[fid]

    def local_derivative(self, k: int, fid: CellId) -> np.ndarray:
        """d^k_{r,f}: degree r on (k+1)-cells, degree r + 1 (as P^{k+1}_f D^k) above."""
        d = fid[0]
        if d < k + 1:
            raise ValueError(f"the local derivative of a {k}-form needs a cell of dimension ≥ {k + 1}")
        if d == k + 1:
            return self.riesz_derivatives(k)[fid]
        return self.potential(k + 1, fid) @ self._local_global_d(k, fid)

    def derivative_degree(self, k: int, fid: CellId) -> int:
        return self.r if fid[0] == k + 1 else self.r + 1

    def _build_potential(self, k: int, fid: CellId, ops: dict[CellId, np.ndarray]) -> np.ndarray:
        d, r = fid[0], self.r
        X = self.space(k)
        geo = self.geometry
        where = f"VEM potential on cell {fid[0]}-{fid[1]}, k={k}"
        first = X.components[fid][0]
        if d == k:
            return embed_matrix(d, d, r, r + 1) @ star_op(d, r, 0, inverse=True) @ first.columns @ X.own(fid)
        R = r + 1
        omega_star = star_op(d, R, d - k, inverse=True) @ first.columns @ X.own(fid)
        trimmed = self.spaces.trimmed_space(fid, R, k)

        # Tests μ ∈ K_{r+2}^{d-k-1}, ν ∈ K_{r+1}^{d-k}; the system is overdetermined and consistent
        K_mu = self.spaces.koszul_space(fid, R + 1, d - k - 1)
        K_nu = self.spaces.koszul_space(fid, R, d - k)
        keep = first.columns.shape[0]
        d_mu = (d_op(geo.h(fid), d, R + 1, d - k - 1) @ K_mu.columns)[:keep]
        tests = np.hstack((d_mu, K_nu.columns))
        W = geo.wedge(fid, k, R, R)
        A = (-1) ** (k + 1) * tests.T @ W.T @ trimmed.columns

        D_hat = self.local_derivative(k, fid)
        D_degree = self.derivative_degree(k, fid)
        rhs_mu = K_mu.columns.T @ geo.wedge(fid, k + 1, D_degree, R + 1).T @ D_hat
        for sub, eps in self.mesh.facets(fid):
            tr = geo.trace(fid, sub, R + 1, d - k - 1) @ K_mu.columns
            rhs_mu -= eps * tr.T @ geo.wedge(sub, k, R, R + 1).T @ X.lift(ops[sub], sub, fid)
        rhs_nu = (-1) ** (k + 1) * K_nu.columns.T @ W.T @ omega_star
        rhs = np.vstack((rhs_mu, rhs_nu))
        if trimmed.dim == 0:
            return np.zeros((trimmed.columns.shape[0], rhs.shape[1]))
        check_condition(np.linalg.cond(A), where)
        coeffs, residues, _, _ = scipy.linalg.lstsq(A, rhs)
        logger.debug("%s: least-squares residual %.3g", where, float(np.sum(residues)) if np.size(residues) else 0.0)
        return trimmed.columns @ coeffs

    def potential_form(self, k: int, fid: CellId, omega_loc: np.ndarray) -> PolyForm:
        return PolyForm.from_flat(fid[0], k, self.r + 1, self.potential(k, fid) @ omega_loc,
                                  self.mesh.cell(fid).frame)

    def derivative_form(self, k: int, fid: CellId, omega_loc: np.ndarray) -> PolyForm:
        return PolyForm.from_flat(fid[0], k + 1, self.derivative_degree(k, fid),
                                  self.local_derivative(k, fid) @ omega_loc, self.mesh.cell(fid).frame)

    # -------------------------------------------------------------------------
    # Flat subspace, reduction and extension to DDR_0
    # -------------------------------------------------------------------------
    def cell_averages(self, k: int, omega: np.ndarray) -> np.ndarray:
        """∫_f ⋆⁻¹ω_f over k-cells."""
        X = self.space(k)
        return np.asarray([
            float(self.geometry.mass(fid, 0, 0, self.r)[0] @ (X.components[fid][0].columns @ omega[X.offsets[fid]]))
            for fid in self.mesh.cell_ids(k)
        ])

    def flat_preimage(self, k: int, eta: np.ndarray, tol: float) -> np.ndarray:
        """Explicit preimage in V^{k-1}_♭ of a flat kernel element η ∈ V^k_♭."""
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
                raise ValueError("a flat kernel element of V^0 must vanish")
            return np.zeros(0)
        X, Y = self.space(k), self.space(k - 1)
        omega = Y.zeros()
        for fid in self.mesh.cell_ids(k):
            target = Y.components[fid][1]
            source = X.components[fid][0]
            proj = projector(self.spaces, target, self.r) @ source.columns
            omega[Y.parts[fid][1]] = proj @ eta[X.parts[fid][0]]
        for d in range(k + 1, self.n + 1):
            for fid in self.mesh.cell_ids(d):
                omega[Y.parts[fid][1]] = eta[X.parts[fid][0]]
        residual = np.max(np.abs(self.apply_d(k - 1, omega) - eta), initial=0.0)
        if residual > tol * scale:
            raise ArithmeticError(f"flat preimage residual {residual:.3g} exceeds {tol:.0e}")
        return omega

    def reduction(self, k: int) -> sp.csr_matrix:
        """R^k : V^k_{r,h} → X^k_{0,h}, cell averages on k-cells."""
        low = self.lowest
        X, X0 = self.space(k), low.space(k)
        blocks = []
        for fid in self.mesh.cell_ids(k):
            block = projector(self.spaces, low.basis(k, fid), self.r) @ X.components[fid][0].columns
            blocks.append((np.arange(X0.offsets[fid].start, X0.offsets[fid].stop),
                           np.arange(X.offsets[fid].start, X.offsets[fid].stop), block))
        return sparse_from_blocks((X0.dim, X.dim), blocks)

    def extension(self, k: int) -> sp.csr_matrix:
        """E^k : X^k_{0,h} → V^k_{r,h} from the DDR_0 potentials and derivatives."""
        low = self.lowest
        X, X0 = self.space(k), low.space(k)
        blocks = []
        for fid in self.mesh.cell_ids(k):
            block = projector(self.spaces, X.components[fid][0], 0) @ low.basis(k, fid).columns
            blocks.append((np.arange(X.offsets[fid].start, X.offsets[fid].stop),
                           np.arange(X0.offsets[fid].start, X0.offsets[fid].stop), block))
        for d in range(k + 1, self.n + 1):
            for fid in self.mesh.cell_ids(d):
                cols = X0.local_dofs(fid)
                first, second = X.components[fid]
                pot = projector(self.spaces, first, 0) @ star_op(d, 0, k) @ low.potential(k, fid)
                der = projector(self.spaces, second, 0) @ star_op(d, 0, k + 1) @ low.local_derivative(k, fid)
                for part, block in zip(X.parts[fid], (pot, der)):
                    blocks.append((np.arange(part.start, part.stop), cols, block))
        return sparse_from_blocks((X.dim, X0.dim), blocks)
