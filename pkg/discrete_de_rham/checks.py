"""
Property suites behind the ``check`` command.

Every suite takes a mesh, a polynomial degree and a seeded generator and
returns a ``SuiteResult`` listing residuals against their thresholds.  A
suite that raises a ValueError or ArithmeticError (invalid mesh, local
conditioning failure, ...) is recorded as aborted rather than propagated,
so one broken identity does not hide the others.
"""

from __future__ import annotations

import logging
from typing import Callable

import numpy as np

from discrete_de_rham.cohomology import ComplexMatrices, complex_residuals
from discrete_de_rham.config import (
    CHECK_QUAD_DEGREE,
    DEFAULT_CELLS_PER_DIM,
    DEFAULT_STOKES_PAIRS,
    LEDGER_R_MAX,
    TOL_EXACT,
    TOL_FLAT,
    TOL_QUADRATURE,
    TOL_RED_EXT,
)
from discrete_de_rham.ddr import DdrComplex, random_polynomial_field, residual_norm
from discrete_de_rham.exterior_algebra import alt_dim
from discrete_de_rham.local_spaces import dimension_ledger, spaces_for
from discrete_de_rham.manufactured import trigonometric_solution
from discrete_de_rham.mesh import CellId, PolytopalMesh, cell_label
from discrete_de_rham.models import SuiteResult
from discrete_de_rham.polynomial_forms import FormField, PolyForm, n_monomials, poly_form_basis
from discrete_de_rham.quadrature import field_moments, stokes_residual, traced_field
from discrete_de_rham.vem import VemComplex

logger = logging.getLogger(__name__)

Suite = Callable[..., SuiteResult]


def sample_cells(mesh: PolytopalMesh, d: int, limit: int = DEFAULT_CELLS_PER_DIM) -> list[CellId]:
    """Evenly spaced cells of dimension d; all of them when ``limit`` is 0."""
    ids = mesh.cell_ids(d)
    if limit <= 0 or len(ids) <= limit:
        return ids
    picks = np.unique(np.linspace(0, len(ids) - 1, limit).round().astype(int))
    return [ids[i] for i in picks]


def _random_poly(d: int, ell: int, r: int, frame, rng: np.random.Generator) -> PolyForm:
    return PolyForm(d, ell, r, rng.standard_normal((n_monomials(d, r), alt_dim(d, ell))), frame)


def _scale(*arrays) -> float:
    return 1.0 + max((float(np.max(np.abs(a), initial=0.0)) for a in arrays), default=0.0)


# =============================================================================
# Mesh and local spaces
# =============================================================================
def suite_stokes(mesh: PolytopalMesh, r: int, rng: np.random.Generator,
                 n_pairs: int = DEFAULT_STOKES_PAIRS, **_) -> SuiteResult:
    """∫ da ∧ b + (-1)^ℓ ∫ a ∧ db = ∫_∂ tr a ∧ tr b on every cell: orientation and sign master test."""
    result = SuiteResult("stokes")
    degree = r + 1
    for d in range(1, mesh.ambient_dim + 1):
        worst, where = 0.0, ""
        for fid in mesh.cell_ids(d):
            frame = mesh.cell(fid).frame
            for i in range(n_pairs):
                ell = i % d
                a = _random_poly(d, ell, degree, frame, rng)
                b = _random_poly(d, d - ell - 1, degree, frame, rng)
                value = stokes_residual(mesh, fid, a, b)
                if value > worst:
                    worst, where = value, f"{cell_label(fid)}, ℓ={ell}"
        result.add(f"stokes d={d}", worst, TOL_EXACT, where)
    return result


def suite_ledger(mesh: PolytopalMesh, r: int, rng: np.random.Generator,
                 cells_per_dim: int = DEFAULT_CELLS_PER_DIM, **_) -> SuiteResult:
    """Integer dimension identities of the polynomial families for r ≤ LEDGER_R_MAX."""
    result = SuiteResult("ledger")
    cells = [fid for d in range(1, mesh.ambient_dim + 1) for fid in sample_cells(mesh, d, cells_per_dim)]
    records = dimension_ledger(mesh, LEDGER_R_MAX, cells)
    for identity in ("decomposition", "trimmed_split", "top_degree", "closed_form"):
        failures = [rec for rec in records if not rec[identity]]
        detail = ""
        if failures:
            rec = failures[0]
            detail = f"cell {rec['cell'][0]}-{rec['cell'][1]}, r={rec['r']}, ℓ={rec['ell']}"
        result.add(f"ledger {identity}", len(failures), 0, detail)
    return result


# =============================================================================
# DDR
# =============================================================================
def suite_ddr_consistency(mesh: PolytopalMesh, r: int, rng: np.random.Generator,
                          cells_per_dim: int = DEFAULT_CELLS_PER_DIM, **_) -> SuiteResult:
    """P I ω = ω and d I ω = dω for a basis of P_rΛ^k on every sampled cell."""
    result = SuiteResult("ddr_consistency")
    ddr = DdrComplex(mesh, r)
    n = mesh.ambient_dim
    for k in range(n + 1):
        pot, der, proj = 0.0, 0.0, 0.0
        for d in range(k, n + 1):
            for fid in sample_cells(mesh, d, cells_per_dim):
                frame = mesh.cell(fid).frame
                for p in poly_form_basis(d, r, k, frame):
                    omega = ddr.interpolate_local(k, fid, FormField.from_poly(p))
                    pot = max(pot, residual_norm(ddr.potential(k, fid) @ omega, p.flat))
                    proj = max(proj, float(np.max(np.abs(ddr.projection_identity_residual(k, fid, omega)), initial=0.0)))
                    if d >= k + 1:
                        dp = p.d().with_degree(r)
                        der = max(der, residual_norm(ddr.local_derivative(k, fid) @ omega, dp.flat))
        result.add(f"potential k={k}", pot, TOL_EXACT)
        result.add(f"projection identity k={k}", proj, TOL_EXACT)
        if k < n:
            result.add(f"derivative k={k}", der, TOL_EXACT)
    improved = 0.0
    for d in range(1, n + 1):
        for fid in sample_cells(mesh, d, cells_per_dim):
            for p in poly_form_basis(d, r + 1, 0, mesh.cell(fid).frame):
                omega = ddr.interpolate_local(0, fid, FormField.from_poly(p))
                improved = max(improved, residual_norm(ddr.improved_potential(fid) @ omega, p.flat))
    result.add("improved potential k=0", improved, TOL_EXACT)
    return result


def suite_ddr_commutation(mesh: PolytopalMesh, r: int, rng: np.random.Generator, **_) -> SuiteResult:
    """D^k I ω = I dω for smooth trigonometric fields (quadrature-limited)."""
    result = SuiteResult("ddr_commutation")
    ddr = DdrComplex(mesh, r, quad_degree=max(CHECK_QUAD_DEGREE, 2 * r + 4))
    n = mesh.ambient_dim
    for k in range(n):
        field = trigonometric_solution(n, k).u
        lhs = ddr.apply_d(k, ddr.interpolate(k, field))
        rhs = ddr.interpolate(k + 1, field.d())
        result.add(f"commutation k={k}", residual_norm(lhs, rhs), TOL_QUADRATURE)
    return result


def suite_ddr_complex(mesh: PolytopalMesh, r: int, rng: np.random.Generator, **_) -> SuiteResult:
    """D^{k+1} D^k = 0, as matrices and on random vectors."""
    result = SuiteResult("ddr_complex")
    ddr = DdrComplex(mesh, r)
    for k, value in enumerate(complex_residuals(ComplexMatrices.from_ddr(ddr))):
        omega = ddr.space(k).random(rng)
        applied = ddr.apply_d(k + 1, ddr.apply_d(k, omega))
        result.add(f"D^{k + 1} D^{k} matrix", value, TOL_EXACT)
        result.add(f"D^{k + 1} D^{k} vector", float(np.max(np.abs(applied), initial=0.0)) / _scale(omega), TOL_EXACT)
    return result


def suite_ddr_links(mesh: PolytopalMesh, r: int, rng: np.random.Generator,
                    cells_per_dim: int = DEFAULT_CELLS_PER_DIM, **_) -> SuiteResult:
    """Identities linking potentials, local derivatives and subcell data, on random elements."""
    result = SuiteResult("ddr_links")
    ddr = DdrComplex(mesh, r)
    spaces = spaces_for(mesh)
    n = mesh.ambient_dim
    for k in range(n):
        X = ddr.space(k)
        omega = X.random(rng)
        link, subcell, correction = 0.0, 0.0, 0.0
        for d in range(k + 1, n + 1):
            for fid in sample_cells(mesh, d, cells_per_dim):
                local = omega[X.local_dofs(fid)]
                link = max(link, float(np.max(np.abs(ddr.pot_diff_link_residual(k, fid, omega)), initial=0.0)) / _scale(local))
                mu = rng.standard_normal(spaces.koszul_space(fid, r + 1, d - k - 1).dim)
                nu = rng.standard_normal(spaces.koszul_space(fid, r, d - k).dim)
                value = ddr.potential_correction_residual(k, fid, local, mu, nu)
                correction = max(correction, value / (_scale(local) * _scale(mu, nu)))
                if d >= k + 2:
                    alpha = rng.standard_normal(spaces.trimmed_space(fid, r + 1, d - k - 2).dim)
                    value = ddr.subcell_derivative_link_check(k, fid, local, alpha)
                    subcell = max(subcell, value / (_scale(local) * _scale(alpha)))
        result.add(f"potential/derivative link k={k}", link, TOL_EXACT)
        result.add(f"potential correction k={k}", correction, TOL_EXACT)
        if k + 2 <= n:
            result.add(f"subcell derivative link k={k}", subcell, TOL_EXACT)
    return result


def suite_ddr_l2(mesh: PolytopalMesh, r: int, rng: np.random.Generator, **_) -> SuiteResult:
    """(·,·)_{k,h} is an inner product, consistent on polynomials, with a stabilization vanishing on them."""
    result = SuiteResult("ddr_l2")
    ddr = DdrComplex(mesh, r)
    n = mesh.ambient_dim
    for k in range(n + 1):
        X = ddr.space(k)
        M = ddr.l2_matrix(k).toarray()
        scale = _scale(M)
        result.add(f"symmetry k={k}", float(np.max(np.abs(M - M.T), initial=0.0)) / scale, TOL_EXACT)
        eigenvalues = np.linalg.eigvalsh(0.5 * (M + M.T))
        result.add(f"positivity k={k}", 0.0 if eigenvalues.size == 0 or eigenvalues[0] > 0 else 1.0, 0.0,
                   f"smallest eigenvalue {eigenvalues[0]:.3g}" if eigenvalues.size else "")
        field = random_polynomial_field(n, k, r, rng)
        omega = ddr.interpolate(k, field)
        mu = X.random(rng)
        exact = 0.0
        for cell in mesh.cell_ids(n):
            q, values = traced_field(mesh, cell, field, ddr.quad_degree)
            exact += field_moments(mesh, cell, values, q, r) @ (ddr.potential(k, cell) @ mu[X.local_dofs(cell)])
        discrete = ddr.l2_product(k, omega, mu)
        result.add(f"polynomial consistency k={k}", abs(discrete - exact) / (1.0 + abs(exact)), TOL_EXACT)
        result.add(f"stabilization on polynomials k={k}", abs(ddr.stab_form(k, omega)) / _scale(omega) ** 2,
                   TOL_EXACT)
    return result


def suite_ddr_reduction(mesh: PolytopalMesh, r: int, rng: np.random.Generator, **_) -> SuiteResult:
    return _reduction_suite("ddr_reduction", DdrComplex(mesh, r), rng)


# =============================================================================
# VEM
# =============================================================================
def suite_vem_consistency(mesh: PolytopalMesh, r: int, rng: np.random.Generator,
                          cells_per_dim: int = DEFAULT_CELLS_PER_DIM, **_) -> SuiteResult:
    """P I ω = ω and d I ω = dω for a basis of P_{r+1}^-Λ^k on every sampled cell."""
    result = SuiteResult("vem_consistency")
    vem = VemComplex(mesh, r)
    spaces = spaces_for(mesh)
    n = mesh.ambient_dim
    for k in range(n + 1):
        pot, der = 0.0, 0.0
        for d in range(k, n + 1):
            for fid in sample_cells(mesh, d, cells_per_dim):
                frame = mesh.cell(fid).frame
                B = spaces.trimmed_space(fid, r + 1, k)
                for j in range(B.dim):
                    p = B.as_poly(np.eye(B.dim)[j], frame)
                    omega = vem.interpolate_local(k, fid, FormField.from_poly(p))
                    pot = max(pot, residual_norm(vem.potential(k, fid) @ omega, p.with_degree(r + 1).flat))
                    if d >= k + 1:
                        dp = p.d().with_degree(vem.derivative_degree(k, fid))
                        der = max(der, residual_norm(vem.local_derivative(k, fid) @ omega, dp.flat))
        result.add(f"potential k={k}", pot, TOL_EXACT)
        if k < n:
            result.add(f"derivative k={k}", der, TOL_EXACT)
    return result


def suite_vem_complex(mesh: PolytopalMesh, r: int, rng: np.random.Generator, **_) -> SuiteResult:
    """D^{k+1} D^k = 0 and dim V^k ≥ dim X^k."""
    result = SuiteResult("vem_complex")
    vem = VemComplex(mesh, r)
    for k, value in enumerate(complex_residuals(ComplexMatrices.from_vem(vem))):
        result.add(f"D^{k + 1} D^{k} matrix", value, TOL_EXACT)
    ddr_dims = DdrComplex(mesh, r).dimensions()
    for k, (v, x) in enumerate(zip(vem.dimensions(), ddr_dims)):
        result.add(f"dim V^{k} >= dim X^{k}", max(0, x - v), 0, f"{v} vs {x}")
    return result


def suite_vem_reduction(mesh: PolytopalMesh, r: int, rng: np.random.Generator, **_) -> SuiteResult:
    return _reduction_suite("vem_reduction", VemComplex(mesh, r), rng)


def _reduction_suite(name: str, complex_, rng: np.random.Generator) -> SuiteResult:
    """R E = Id, cochain property of R and E, and flat preimages of flat kernel elements."""
    result = SuiteResult(name)
    low = complex_.lowest
    n = complex_.n
    R = [complex_.reduction(k) for k in range(n + 1)]
    E = [complex_.extension(k) for k in range(n + 1)]
    for k in range(n + 1):
        RE = (R[k] @ E[k]).toarray()
        result.add(f"R E = Id k={k}", float(np.max(np.abs(RE - np.eye(RE.shape[0])), initial=0.0)), TOL_RED_EXT)
    for k in range(n):
        omega = complex_.space(k).random(rng)
        eta = low.space(k).random(rng)
        red = residual_norm(R[k + 1] @ complex_.apply_d(k, omega), low.apply_d(k, R[k] @ omega))
        ext = residual_norm(complex_.apply_d(k, E[k] @ eta), E[k + 1] @ low.apply_d(k, eta))
        result.add(f"R cochain k={k}", red, TOL_EXACT)
        result.add(f"E cochain k={k}", ext, TOL_EXACT)
    for k in range(1, n + 1):
        omega = complex_.space(k - 1).random(rng)
        flat = omega - E[k - 1] @ (R[k - 1] @ omega)
        eta = complex_.apply_d(k - 1, flat)
        preimage = complex_.flat_preimage(k, eta, TOL_FLAT)
        result.add(f"flat preimage k={k}", residual_norm(complex_.apply_d(k - 1, preimage), eta), TOL_FLAT)
    return result


# =============================================================================
# Registry
# =============================================================================
SUITES: dict[str, Suite] = {
    "stokes": suite_stokes,
    "ledger": suite_ledger,
    "ddr_consistency": suite_ddr_consistency,
    "ddr_commutation": suite_ddr_commutation,
    "ddr_complex": suite_ddr_complex,
    "ddr_links": suite_ddr_links,
    "ddr_l2": suite_ddr_l2,
    "ddr_reduction": suite_ddr_reduction,
    "vem_consistency": suite_vem_consistency,
    "vem_complex": suite_vem_complex,
    "vem_reduction": suite_vem_reduction,
}


def suites_for(complex_choice: str) -> list[str]:
    """Suite names for ``ddr``, ``vem`` or ``both``; the mesh suites always run."""
    names = []
    for name in SUITES:
        family = name.split("_", 1)[0]
        if family in ("ddr", "vem") and complex_choice not in (family, "both"):
            continue
        names.append(name)
    return names


def run_suite(name: str, mesh: PolytopalMesh, r: int, seed: int, **options) -> SuiteResult:
    """Run one suite with its own generator derived from ``seed``; failures become ``error``."""
    if name not in SUITES:
        raise ValueError(f"unknown suite '{name}' (choices: {', '.join(SUITES)})")
    rng = np.random.default_rng([seed, list(SUITES).index(name)])
    try:
        result = SUITES[name](mesh, r, rng, **options)
    except (ValueError, ArithmeticError) as exc:
        logger.error("Suite %s aborted: %s", name, exc)
        result = SuiteResult(name, error=str(exc))
    level = logging.INFO if result.passed else logging.WARNING
    logger.log(level, "Suite %s: %s", name, "passed" if result.passed else "FAILED")
    return result


def run_suites(mesh: PolytopalMesh, r: int, seed: int, names=None, **options) -> list[SuiteResult]:
    return [run_suite(name, mesh, r, seed, **options) for name in (names or list(SUITES))]
