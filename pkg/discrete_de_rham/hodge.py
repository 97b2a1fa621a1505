"""
Mixed Hodge Laplacian on the DDR complex.

Unknowns (σ_h, u_h) ∈ X^{k-1}_{r,h} × X^k_{r,h}; with M_ℓ the Gram matrix of
(·,·)_{ℓ,h} and D^ℓ the discrete exterior derivative the scheme reads

    [ M_{k-1}         -D^{k-1}ᵀ M_k     ] [σ]   [    0     ]
    [ M_k D^{k-1}     D^kᵀ M_{k+1} D^k  ] [u] = [ M_k I g  ]

For k = 0 the σ block is empty and the constant kernel of D^0 is removed
by a bordering row fixing ∫_Ω P_h u_h to the mean of the exact solution.
Only domains with trivial topology are accepted, since otherwise u would
also have to be orthogonal to the discrete harmonic forms.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg

from discrete_de_rham.cohomology import betti_numbers
from discrete_de_rham.config import (
    INFSUP_COLLAPSE,
    SOURCE_CHOICES,
    TOL_SOLVE,
    TOL_SOLVE_FAIL,
)
from discrete_de_rham.ddr import DdrComplex
from discrete_de_rham.manufactured import ManufacturedSolution
from discrete_de_rham.mesh import PolytopalMesh
from discrete_de_rham.models import ERROR_COLUMNS, HodgeRun
from discrete_de_rham.polynomial_forms import FormField, PolyForm
from discrete_de_rham.quadrature import cell_rule, field_moments, traced_field

logger = logging.getLogger(__name__)


class TopologyError(ValueError):
    """The Hodge Laplacian was requested on a domain with non-trivial cohomology."""


# =============================================================================
# Problem and system
# =============================================================================
@dataclass(eq=False)
class HodgeProblem:
    mesh: PolytopalMesh
    k: int
    r: int
    solution: ManufacturedSolution
    source: str = "interpolate"          # or "weak": ∫ g ∧ ⋆P v
    stabilization: str = "trace"
    quad_degree: int | None = None
    improved_potential: bool = False     # k = 0 only: measure u with the degree r+1 potential
    ddr: DdrComplex = field(init=False, repr=False)

    def __post_init__(self):
        n = self.mesh.ambient_dim
        if not 0 <= self.k <= n:
            raise ValueError(f"form degree must be in [0, {n}], got {self.k}")
        if (self.solution.n, self.solution.k) != (n, self.k):
            raise ValueError(
                f"manufactured solution is a {self.solution.k}-form on R^{self.solution.n}, "
                f"problem needs a {self.k}-form on R^{n}"
            )
        if self.source not in SOURCE_CHOICES:
            raise ValueError(f"unknown source mode '{self.source}' (choices: {', '.join(SOURCE_CHOICES)})")
        if self.improved_potential and self.k != 0:
            raise ValueError("the improved potential only exists for 0-forms")
        betti = betti_numbers(self.mesh)
        trivial = (1,) + (0,) * n
        if betti != trivial:
            raise TopologyError(
                f"mesh has Betti numbers {betti}; the mixed Hodge Laplacian needs trivial topology "
                f"{trivial}, otherwise u must also be kept orthogonal to harmonic forms"
            )
        lo, hi = self.mesh.vertices.min(axis=0), self.mesh.vertices.max(axis=0)
        if not (np.allclose(lo, 0.0) and np.allclose(hi, 1.0)):
            logger.warning("Manufactured solutions satisfy the boundary conditions of the unit cube only; "
                           "mesh spans %s to %s", lo, hi)
        self.ddr = DdrComplex(self.mesh, self.r, self.stabilization, self.quad_degree)

    @property
    def n(self) -> int:
        return self.mesh.ambient_dim


@dataclass(eq=False)
class SaddleSystem:
    problem: HodgeProblem
    matrix: sp.csr_matrix
    rhs: np.ndarray
    n_sigma: int
    n_u: int
    bordered: bool = False   # k = 0: one extra row/column for the mean constraint

    @property
    def dofs(self) -> int:
        return self.n_sigma + self.n_u

    def split(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return x[:self.n_sigma], x[self.n_sigma:self.n_sigma + self.n_u]


@dataclass
class HodgeSolution:
    sigma: np.ndarray
    u: np.ndarray
    residual: float
    solve_time_s: float


# =============================================================================
# Assembly
# =============================================================================
def mean_functional(ddr: DdrComplex, k: int = 0) -> np.ndarray:
    """Row vector m with m · ω = ∫_Ω P_h ω for discrete 0-forms."""
    if k != 0:
        raise ValueError("the mean constraint is defined for 0-forms")
    X = ddr.space(0)
    m = np.zeros(X.dim)
    for cell in ddr.mesh.cell_ids(ddr.n):
        weights = ddr.geometry.mass(cell, 0, 0, ddr.r)[0]
        np.add.at(m, X.local_dofs(cell), weights @ ddr.potential(0, cell))
    return m


def integrate_field(mesh: PolytopalMesh, form: FormField, degree: int) -> np.ndarray:
    """∫_Ω of each component of an n-dimensional field, by cellwise quadrature."""
    total = np.zeros(form(mesh.vertices[:1]).shape[1])
    for cell in mesh.cell_ids(mesh.ambient_dim):
        q = cell_rule(mesh, cell, degree)
        total += q.weights @ form(q.x)
    return total


def source_vector(problem: HodgeProblem, mode: str | None = None) -> np.ndarray:
    """Right-hand side (g, v)_h for every basis v of X^k."""
    ddr, k = problem.ddr, problem.k
    g = problem.solution.source
    mode = problem.source if mode is None else mode
    if mode == "interpolate":
        return ddr.l2_matrix(k) @ ddr.interpolate(k, g)
    X = ddr.space(k)
    out = X.zeros()
    for cell in ddr.mesh.cell_ids(ddr.n):
        q, values = traced_field(ddr.mesh, cell, g, ddr.quad_degree)
        moments = field_moments(ddr.mesh, cell, values, q, ddr.r)
        np.add.at(out, X.local_dofs(cell), ddr.potential(k, cell).T @ moments)
    return out


def _dd_block(ddr: DdrComplex, k: int) -> sp.csr_matrix:
    """D^kᵀ M_{k+1} D^k, zero for k = n."""
    N = ddr.space(k).dim
    if k == ddr.n:
        return sp.csr_matrix((N, N))
    D = ddr.global_d(k)
    return (D.T @ ddr.l2_matrix(k + 1) @ D).tocsr()


def assemble(problem: HodgeProblem) -> SaddleSystem:
    ddr, k = problem.ddr, problem.k
    rhs_u = source_vector(problem)
    n_u = ddr.space(k).dim
    if k == 0:
        m = mean_functional(ddr)
        target = float(integrate_field(problem.mesh, problem.solution.u, ddr.quad_degree)[0])
        row = sp.csr_matrix(m.reshape(1, -1))
        A = sp.bmat([[_dd_block(ddr, 0), row.T], [row, None]], format="csr")
        rhs = np.concatenate((rhs_u, [target]))
        system = SaddleSystem(problem, A, rhs, 0, n_u, bordered=True)
    else:
        D = ddr.global_d(k - 1)
        M_prev, M_k = ddr.l2_matrix(k - 1), ddr.l2_matrix(k)
        A = sp.bmat([
            [M_prev, -(D.T @ M_k)],
            [M_k @ D, _dd_block(ddr, k)],
        ], format="csr")
        n_sigma = ddr.space(k - 1).dim
        rhs = np.concatenate((np.zeros(n_sigma), rhs_u))
        system = SaddleSystem(problem, A, rhs, n_sigma, n_u)
    logger.info("Assembled Hodge system k=%d r=%d: %d unknowns, %d nonzeros",
                k, problem.r, A.shape[0], A.nnz)
    return system


def symmetry_residual(system: SaddleSystem) -> float:
    """max|S - Sᵀ| / max|S| with S the matrix after negating the σ rows."""
    A = system.matrix.tocsr()
    signs = np.ones(A.shape[0])
    signs[:system.n_sigma] = -1.0
    S = sp.diags(signs) @ A
    diff = S - S.T
    scale = float(abs(S).max()) if S.nnz else 1.0
    return float(abs(diff).max()) / scale if diff.nnz else 0.0


# =============================================================================
# Solve and errors
# =============================================================================
def solve(system: SaddleSystem) -> HodgeSolution:
    """Direct sparse solve; raises ArithmeticError when the residual is not small."""
    A, b = system.matrix.tocsc(), system.rhs
    start = time.perf_counter()
    x = scipy.sparse.linalg.spsolve(A, b)
    elapsed = time.perf_counter() - start
    x = np.atleast_1d(x)
    if not np.all(np.isfinite(x)):
        raise ArithmeticError("sparse solver breakdown: non-finite solution")
    norm_b = float(np.linalg.norm(b))
    residual = float(np.linalg.norm(A @ x - b)) / (norm_b if norm_b > 0 else 1.0)
    if residual > TOL_SOLVE_FAIL:
        raise ArithmeticError(f"Hodge solve residual {residual:.3g} exceeds {TOL_SOLVE_FAIL:.0e}")
    if residual > TOL_SOLVE:
        logger.warning("Hodge solve residual %.3g above %.0e", residual, TOL_SOLVE)
    sigma, u = system.split(x)
    logger.info("Solved %d unknowns in %.3f s (relative residual %.2e)", system.dofs, elapsed, residual)
    return HodgeSolution(sigma, u, residual, elapsed)


def _l2_error_sq(mesh: PolytopalMesh, cell, exact: FormField, flat: np.ndarray, poly_degree: int,
                 quad_degree: int) -> float:
    q, values = traced_field(mesh, cell, exact, quad_degree)
    approx = PolyForm.from_flat(cell[0], exact.degree, poly_degree, flat).values(q.y)
    return float(q.weights @ np.sum((values - approx) ** 2, axis=1))


def errors(problem: HodgeProblem, solution: HodgeSolution) -> dict[str, float]:
    """The four L² errors of potentials and derivatives plus the four stabilization seminorms."""
    ddr, k, mesh = problem.ddr, problem.k, problem.mesh
    exact = problem.solution
    deg = ddr.quad_degree + (1 if problem.improved_potential else 0)
    sq = dict.fromkeys(("sigma_l2", "sigma_d", "u_l2", "u_d"), 0.0)
    X = ddr.space(k)
    for cell in mesh.cell_ids(ddr.n):
        u_loc = solution.u[X.local_dofs(cell)]
        if problem.improved_potential:
            sq["u_l2"] += _l2_error_sq(mesh, cell, exact.u, ddr.improved_potential(cell) @ u_loc, ddr.r + 1, deg)
        else:
            sq["u_l2"] += _l2_error_sq(mesh, cell, exact.u, ddr.potential(k, cell) @ u_loc, ddr.r, deg)
        if k < ddr.n:
            sq["u_d"] += _l2_error_sq(mesh, cell, exact.du, ddr.local_derivative(k, cell) @ u_loc, ddr.r, deg)
        if k >= 1:
            s_loc = solution.sigma[ddr.space(k - 1).local_dofs(cell)]
            sq["sigma_l2"] += _l2_error_sq(mesh, cell, exact.sigma, ddr.potential(k - 1, cell) @ s_loc, ddr.r, deg)
            sq["sigma_d"] += _l2_error_sq(mesh, cell, exact.sigma.d(),
                                          ddr.local_derivative(k - 1, cell) @ s_loc, ddr.r, deg)
    out = {key: float(np.sqrt(value)) for key, value in sq.items()}
    out["u_stab"] = ddr.stab_seminorm(k, solution.u)
    out["u_d_stab"] = ddr.stab_seminorm(k + 1, ddr.apply_d(k, solution.u)) if k < ddr.n else 0.0
    if k >= 1:
        out["sigma_stab"] = ddr.stab_seminorm(k - 1, solution.sigma)
        out["sigma_d_stab"] = ddr.stab_seminorm(k, ddr.apply_d(k - 1, solution.sigma))
    else:
        out["sigma_stab"] = out["sigma_d_stab"] = 0.0
    return {key: out[key] for key in ERROR_COLUMNS}


def run_hodge(problem: HodgeProblem, level: int = 0) -> HodgeRun:
    """Assemble, solve and measure one problem."""
    system = assemble(problem)
    solution = solve(system)
    return HodgeRun(
        level=level,
        mesh_h=float(problem.mesh.h),
        dofs=system.dofs,
        errors=errors(problem, solution),
        solve_time_s=solution.solve_time_s,
        residual=solution.residual,
    )


# =============================================================================
# Adjoint consistency
# =============================================================================
def adjoint_vector(ddr: DdrComplex, ell: int, omega: FormField) -> np.ndarray:
    """Vector e with e · μ = Ẽ^ℓ(ω; μ) = (I δω, μ)_{ℓ,h} - (I ω, D^ℓ μ)_{ℓ+1,h}."""
    if omega.degree != ell + 1:
        raise ValueError(f"the adjoint functional of degree {ell} needs an {ell + 1}-form, got a {omega.degree}-form")
    if ell + 1 > ddr.n:
        raise ValueError(f"no {ell + 1}-forms in dimension {ddr.n}")
    first = ddr.l2_matrix(ell) @ ddr.interpolate(ell, omega.delta())
    second = ddr.global_d(ell).T @ (ddr.l2_matrix(ell + 1) @ ddr.interpolate(ell + 1, omega))
    return first - second


def adjoint_error_functional(ddr: DdrComplex, ell: int, omega: FormField, mu: np.ndarray) -> float:
    return float(adjoint_vector(ddr, ell, omega) @ mu)


def graph_gram(ddr: DdrComplex, ell: int) -> sp.csr_matrix:
    """Gram matrix of |||μ|||² = ‖μ‖²_{ℓ,h} + ‖D^ℓ μ‖²_{ℓ+1,h}."""
    return (ddr.l2_matrix(ell) + _dd_block(ddr, ell)).tocsr()


def adjoint_dual_norm(ddr: DdrComplex, ell: int, omega: FormField) -> float:
    """sup over |||μ_h||| = 1 of Ẽ^ℓ(ω; μ_h), i.e. sqrt(eᵀ G⁻¹ e)."""
    e = adjoint_vector(ddr, ell, omega)
    if not np.any(e):
        return 0.0
    y = scipy.sparse.linalg.spsolve(graph_gram(ddr, ell).tocsc(), e)
    return float(np.sqrt(max(float(e @ y), 0.0)))


def eh_decomposition_residual(problem: HodgeProblem, rng: np.random.Generator, n_tests: int = 5) -> float:
    """Check E_h(τ, v) = Ẽ^k(du; v) - Ẽ^{k-1}(u; τ) on random test pairs.

    E_h(τ, v) = (I g, v)_h - A_h((I σ, I u), (τ, v)) is the consistency error
    of the scheme on the interpolated exact solution.
    """
    ddr, k = problem.ddr, problem.k
    exact = problem.solution
    system = assemble(problem)
    n_sigma, n_u = system.n_sigma, system.n_u
    x = np.zeros(n_sigma + n_u)
    x[n_sigma:] = ddr.interpolate(k, exact.u)
    if k >= 1:
        x[:n_sigma] = ddr.interpolate(k - 1, exact.sigma)
    b = np.concatenate((np.zeros(n_sigma), source_vector(problem, "interpolate")))
    E = b - (system.matrix[:n_sigma + n_u, :n_sigma + n_u] @ x)
    e_u = adjoint_vector(ddr, k, exact.du) if k < ddr.n else np.zeros(n_u)
    e_sigma = adjoint_vector(ddr, k - 1, exact.u) if k >= 1 else np.zeros(0)
    worst, scale = 0.0, 1.0
    for _ in range(n_tests):
        tau, v = rng.standard_normal(n_sigma), rng.standard_normal(n_u)
        lhs = float(E[:n_sigma] @ tau + E[n_sigma:] @ v)
        rhs = float(e_u @ v - e_sigma @ tau)
        worst = max(worst, abs(lhs - rhs))
        scale = max(scale, abs(lhs), abs(rhs), float(np.abs(E) @ np.abs(np.concatenate((tau, v)))))
    return worst / scale


# =============================================================================
# Stability and convergence diagnostics
# =============================================================================
def infsup_diagnostic(problem: HodgeProblem) -> float:
    """Smallest singular value of A_h in the |||·|||_h geometry (dense).

    For k = 0 the constant kernel is skipped and the smallest non-zero value
    is returned.
    """
    ddr, k = problem.ddr, problem.k
    if k == 0:
        A = _dd_block(ddr, 0).toarray()
        G = graph_gram(ddr, 0).toarray()
    else:
        A = assemble(problem).matrix.toarray()
        G = scipy.linalg.block_diag(graph_gram(ddr, k - 1).toarray(), graph_gram(ddr, k).toarray())
    L = scipy.linalg.cholesky(G, lower=True)
    left = scipy.linalg.solve_triangular(L, A, lower=True)
    scaled = scipy.linalg.solve_triangular(L, left.T, lower=True).T
    s = scipy.linalg.svdvals(scaled)
    value = float(s[-2] if k == 0 else s[-1])
    logger.info("Inf-sup constant k=%d r=%d h=%.4g: %.4g", k, problem.r, problem.mesh.h, value)
    return value


def infsup_report(values: list[float]) -> dict:
    """Ratios to the coarsest value and the collapse/monotonicity flags."""
    values = [float(v) for v in values]
    first = values[0] if values else 0.0
    ratios = [v / first if first > 0 else 0.0 for v in values]
    return {
        "values": values,
        "ratios": ratios,
        "monotone": all(b <= a for a, b in zip(values, values[1:])) or all(b >= a for a, b in zip(values, values[1:])),
        "collapsed": any(x < INFSUP_COLLAPSE for x in ratios),
    }


def fit_slope(h: list[float], values: list[float]) -> float | None:
    """Least-squares slope of log(value) against log(h); None without enough positive data."""
    pairs = [(a, b) for a, b in zip(h, values) if a > 0 and b > 0]
    if len(pairs) < 2:
        return None
    x, y = np.log([p[0] for p in pairs]), np.log([p[1] for p in pairs])
    return float(np.polyfit(x, y, 1)[0])


def convergence_slopes(runs: list[HodgeRun]) -> dict[str, float | None]:
    """Slope per error column and for the summed error."""
    runs = sorted(runs, key=lambda run: run.level)
    h = [run.mesh_h for run in runs]
    slopes = {c: fit_slope(h, [run.errors.get(c, 0.0) for run in runs]) for c in ERROR_COLUMNS}
    slopes["total"] = fit_slope(h, [run.total_error for run in runs])
    return slopes


def slope_ok(slope: float | None, r: int, margin: float) -> bool:
    return slope is not None and abs(slope - (r + 1)) <= margin


def slope_verdict(slope: float | None, r: int, margin: float) -> str:
    """'ok' inside r+1 -/+ margin, 'superconvergent' above it, 'slow' below, 'undetermined' without a fit.

    Only 'slow' contradicts the h^{r+1} bound. On the cartesian families the
    k=0 total carries an h^{r+2} part with a large constant, so its fitted
    slope sits above the band until the mesh is far finer than the shipped
    refinements.
    """
    if slope is None:
        return "undetermined"
    if slope_ok(slope, r, margin):
        return "ok"
    return "superconvergent" if slope > r + 1 else "slow"
