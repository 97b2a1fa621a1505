"""
Cohomology of the discrete complexes.

Betti numbers come from exact ranks of the CW coboundary matrices of the
mesh (integer entries ε, fraction-free elimination).  The cohomology of a
floating-point complex is N_k - rank D^k - rank D^{k-1} with numerical ranks
from singular values; every rank carries the spectral gap at its cutoff and
is flagged ambiguous when a singular value sits within RANK_GAP_FACTOR of it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg

from discrete_de_rham.config import RANK_GAP_FACTOR, RANK_REL_TOL
from discrete_de_rham.ddr import DdrComplex
from discrete_de_rham.mesh import PolytopalMesh
from discrete_de_rham.models import CohomologyReport, DegreeCohomology
from discrete_de_rham.vem import VemComplex

logger = logging.getLogger(__name__)


# =============================================================================
# Exact ranks and Betti numbers
# =============================================================================
def exact_rank(matrix) -> int:
    """Rank over the rationals of an integer matrix (Bareiss elimination)."""
    rows = [[int(x) for x in row] for row in np.asarray(matrix)]
    if not rows or not rows[0]:
        return 0
    m, n = len(rows), len(rows[0])
    rank, prev = 0, 1
    for col in range(n):
        pivot = next((i for i in range(rank, m) if rows[i][col] != 0), None)
        if pivot is None:
            continue
        rows[rank], rows[pivot] = rows[pivot], rows[rank]
        p = rows[rank][col]
        for i in range(rank + 1, m):
            a = rows[i][col]
            rows[i] = [(p * rows[i][j] - a * rows[rank][j]) // prev for j in range(n)]
        prev = p
        rank += 1
        if rank == m:
            break
    return rank


def cw_coboundaries(mesh: PolytopalMesh) -> list[sp.csr_matrix]:
    """δ^k : C^k → C^{k+1} with entries ε_{f f'} for each facet f' of a (k+1)-cell f."""
    out = []
    for k in range(mesh.ambient_dim):
        rows, cols, vals = [], [], []
        for fid in mesh.cell_ids(k + 1):
            for (_, j), eps in mesh.facets(fid):
                rows.append(fid[1])
                cols.append(j)
                vals.append(eps)
        out.append(sp.csr_matrix((vals, (rows, cols)), shape=(mesh.n_cells(k + 1), mesh.n_cells(k)), dtype=np.int64))
    return out


def betti_numbers(mesh: PolytopalMesh) -> tuple[int, ...]:
    """b_k = N_k - rank δ^k - rank δ^{k-1}, ranks computed exactly."""
    ranks = [exact_rank(D.toarray()) for D in cw_coboundaries(mesh)]
    ranks = [0] + ranks + [0]
    return tuple(mesh.n_cells(k) - ranks[k + 1] - ranks[k] for k in range(mesh.ambient_dim + 1))


# =============================================================================
# Complexes as matrices
# =============================================================================
@dataclass(frozen=True, eq=False)
class ComplexMatrices:
    dims: tuple[int, ...]
    matrices: tuple[sp.csr_matrix, ...]   # D^0 .. D^{n-1}
    tag: str

    def __post_init__(self):
        if len(self.matrices) != len(self.dims) - 1:
            raise ValueError(f"{self.tag}: {len(self.dims)} spaces need {len(self.dims) - 1} matrices")
        for k, D in enumerate(self.matrices):
            if D.shape != (self.dims[k + 1], self.dims[k]):
                raise ValueError(f"{self.tag}: D^{k} has shape {D.shape}, expected {(self.dims[k + 1], self.dims[k])}")

    @classmethod
    def from_ddr(cls, ddr: DdrComplex) -> ComplexMatrices:
        return cls(tuple(ddr.dimensions()), tuple(ddr.global_d(k) for k in range(ddr.n)), f"DDR_{ddr.r}")

    @classmethod
    def from_vem(cls, vem: VemComplex) -> ComplexMatrices:
        return cls(tuple(vem.dimensions()), tuple(vem.global_d(k) for k in range(vem.n)), f"VEM_{vem.r}")

    @classmethod
    def from_mesh(cls, mesh: PolytopalMesh) -> ComplexMatrices:
        return cls(mesh.counts(), tuple(D.astype(float) for D in cw_coboundaries(mesh)), "CW")


def _norm(D) -> float:
    return float(scipy.sparse.linalg.norm(D)) if D.nnz else 0.0


def complex_residuals(C: ComplexMatrices) -> list[float]:
    """‖D^{k+1} D^k‖_max / (‖D^{k+1}‖ ‖D^k‖) per k (Frobenius norms in the scale)."""
    out = []
    for k in range(len(C.matrices) - 1):
        product = C.matrices[k + 1] @ C.matrices[k]
        scale = _norm(C.matrices[k + 1]) * _norm(C.matrices[k])
        worst = float(abs(product).max()) if product.nnz else 0.0
        out.append(worst / scale if scale > 0 else worst)
    return out


def verify_complex(C: ComplexMatrices) -> float:
    return max(complex_residuals(C), default=0.0)


@dataclass(frozen=True)
class NumericalRank:
    rank: int
    cutoff: float
    gap: float       # smallest kept / largest dropped singular value
    margin: float    # closest singular value to the cutoff, as a factor ≥ 1
    ambiguous: bool


def numerical_rank(D, rel_tol: float = RANK_REL_TOL) -> NumericalRank:
    """Rank by singular value thresholding at rel_tol · σ_max."""
    dense = D.toarray() if sp.issparse(D) else np.asarray(D, dtype=float)
    if dense.size == 0:
        return NumericalRank(0, 0.0, float("inf"), float("inf"), False)
    s = scipy.linalg.svdvals(dense)
    if s[0] == 0.0:
        return NumericalRank(0, 0.0, float("inf"), float("inf"), False)
    cutoff = rel_tol * s[0]
    kept, dropped = s[s > cutoff], s[s <= cutoff]
    gap = float(kept[-1] / dropped[0]) if dropped.size and dropped[0] > 0 else float("inf")
    margins = [kept[-1] / cutoff]
    if dropped.size and dropped[0] > 0:
        margins.append(cutoff / dropped[0])
    margin = float(min(margins))
    return NumericalRank(int(kept.size), float(cutoff), gap, margin, margin < RANK_GAP_FACTOR)


def cohomology_dims(C: ComplexMatrices, betti: tuple[int, ...], rel_tol: float = RANK_REL_TOL) -> CohomologyReport:
    """Ranks of every D^k and the resulting cohomology dimensions, compared with ``betti``."""
    if len(betti) != len(C.dims):
        raise ValueError(f"{len(betti)} Betti numbers for a complex of {len(C.dims)} spaces")
    ranks = [numerical_rank(D, rel_tol) for D in C.matrices]
    report = CohomologyReport(C.tag, complex_residual=verify_complex(C))
    for k, N in enumerate(C.dims):
        current = ranks[k] if k < len(ranks) else None
        previous = ranks[k - 1] if k >= 1 else None
        involved = [x for x in (current, previous) if x is not None]
        degree = DegreeCohomology(
            k=k,
            space_dim=N,
            rank_d=current.rank if current else 0,
            rank_prev=previous.rank if previous else 0,
            betti=betti[k],
            margin=min((x.margin for x in involved), default=float("inf")),
            gap=min((x.gap for x in involved), default=float("inf")),
            ambiguous=any(x.ambiguous for x in involved),
        )
        if degree.ambiguous:
            logger.warning("%s: rank near the cutoff in degree %d (margin %.3g)", C.tag, k, degree.margin)
        report.degrees.append(degree)
    logger.info("%s cohomology dims %s, Betti numbers %s", C.tag, report.dims, report.betti)
    return report


# =============================================================================
# De Rham map DDR_0 → CW cochains
# =============================================================================
def de_rham_map(ddr: DdrComplex, k: int) -> sp.csr_matrix:
    """ω ↦ (∫_f ⋆⁻¹ω_f)_{f ∈ Δ_k} on X^k_{0,h}."""
    if ddr.r != 0:
        raise ValueError("the de Rham map is defined on the lowest-degree complex")
    X = ddr.space(k)
    rows, cols, vals = [], [], []
    for fid in ddr.mesh.cell_ids(k):
        B = ddr.basis(k, fid)
        weights = ddr.geometry.mass(fid, 0, 0, 0)[0] @ B.columns
        for j, w in zip(range(X.offsets[fid].start, X.offsets[fid].stop), weights):
            rows.append(fid[1])
            cols.append(j)
            vals.append(w)
    return sp.csr_matrix((vals, (rows, cols)), shape=(ddr.mesh.n_cells(k), X.dim))


def de_rham_map_check(mesh: PolytopalMesh) -> float:
    """max_k ‖Φ_{k+1} D^k - δ^k Φ_k‖_max, relative to ‖δ^k Φ_k‖_max."""
    ddr = DdrComplex(mesh, 0)
    cw = cw_coboundaries(mesh)
    worst = 0.0
    for k in range(mesh.ambient_dim):
        phi_k, phi_next = de_rham_map(ddr, k), de_rham_map(ddr, k + 1)
        if phi_k.shape[0] != phi_k.shape[1]:
            raise ArithmeticError(f"X^{k}_0 has dimension {phi_k.shape[1]}, expected {phi_k.shape[0]}")
        lhs = phi_next @ ddr.global_d(k)
        rhs = cw[k].astype(float) @ phi_k
        diff = lhs - rhs
        scale = float(abs(rhs).max()) if rhs.nnz else 1.0
        if diff.nnz:
            worst = max(worst, float(abs(diff).max()) / max(scale, 1e-300))
    return worst
