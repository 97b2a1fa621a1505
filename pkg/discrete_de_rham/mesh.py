"""
Polytopal meshes as oriented CW complexes.

Cells are identified by ``(dim, index)`` pairs with dense 0-based indices
per dimension; 0-cells are the mesh vertices.  Each cell carries a
``LocalFrame`` (vertex centroid, orthonormal axes, vertex diameter) which
is the single source of truth for orientation: the relative orientation
ε_{ff'} of a facet is derived from the frames, using the outward-normal-first
convention, and validated against any stored signs.

Meshes are immutable after construction.  Construction validates the
boundary-of-boundary identity, dangling cells, frame geometry and the
simplicial subdivision used by the quadrature layer, and raises
``MeshError`` listing every problem found.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import combinations
from math import factorial
from typing import Sequence

import numpy as np

from discrete_de_rham.config import AFFINE_HULL_TOL, CHUNK_VOLUME_TOL, MAX_AMBIENT_DIM
from discrete_de_rham.polynomial_forms import LocalFrame

logger = logging.getLogger(__name__)

CellId = tuple[int, int]


class MeshError(ValueError):
    """Invalid mesh geometry, orientation or incidence."""


def cell_label(fid: CellId) -> str:
    return f"Cell {fid[0]}-{fid[1]}"


@dataclass(frozen=True, eq=False)
class Cell:
    """A relatively open d-cell with oriented facets ``(index, ε)``."""

    dim: int
    index: int
    vertices: tuple[int, ...]              # vertex indices of the closure, sorted
    boundary: tuple[tuple[int, int], ...]  # (facet index in dim - 1, ε_{ff'})
    frame: LocalFrame
    measure: float

    @property
    def id(self) -> CellId:
        return (self.dim, self.index)

    @property
    def center(self) -> np.ndarray:
        return self.frame.center

    @property
    def diameter(self) -> float:
        return self.frame.diameter


@dataclass(frozen=True, eq=False)
class SimplexChunk:
    """One simplex of a cell's subdivision; ``points`` has shape (d + 1, n)."""

    points: np.ndarray
    parent: CellId
    sign: int       # orientation of the ordered points relative to the parent frame
    volume: float


# =============================================================================
# Frame geometry
# =============================================================================
def _diameter(points: np.ndarray) -> float:
    if len(points) < 2:
        return 1.0
    diffs = points[:, None, :] - points[None, :, :]
    return float(np.sqrt(np.max(np.sum(diffs**2, axis=2))))


def _affine_axes(points: np.ndarray, d: int, h: float) -> np.ndarray:
    """Orthonormal basis of the affine hull of ``points``, checked to have dimension d."""
    centered = points - points.mean(axis=0)
    _, s, vt = np.linalg.svd(centered, full_matrices=True)
    s = np.concatenate((s, np.zeros(max(0, points.shape[1] - s.size))))
    if d > 0 and s[d - 1] <= AFFINE_HULL_TOL * h:
        raise MeshError(f"vertices span fewer than {d} dimensions")
    if d < points.shape[1] and s[d] > AFFINE_HULL_TOL * h * max(1.0, np.sqrt(len(points))):
        raise MeshError(f"vertices are not contained in a {d}-dimensional affine subspace")
    return vt[:d].T


def incidence_sign(frame: LocalFrame, facet: LocalFrame) -> int:
    """ε_{ff'}: +1 when (outward normal, facet axes) is positively oriented in f."""
    M = frame.axes.T @ facet.axes
    w = frame.axes.T @ (facet.center - frame.center)
    normal = w - M @ (M.T @ w)
    det = np.linalg.det(np.column_stack((normal, M)))
    if abs(det) <= AFFINE_HULL_TOL * frame.diameter:
        raise MeshError("cell center lies on the affine hull of a facet")
    return 1 if det > 0 else -1


def _flip(frame: LocalFrame) -> LocalFrame:
    axes = frame.axes.copy()
    axes[:, 0] = -axes[:, 0]
    return LocalFrame(frame.center, axes, frame.diameter)


# =============================================================================
# Mesh
# =============================================================================
class PolytopalMesh:
    """Cells of dimensions 0..n with oriented incidence, subcell lattice and subdivisions."""

    def __init__(self, vertices: np.ndarray, cells: Sequence[Sequence[Cell]]):
        self.vertices = np.asarray(vertices, dtype=float)
        self.vertices.setflags(write=False)
        self.ambient_dim = self.vertices.shape[1]
        self._cells = tuple(tuple(level) for level in cells)
        if len(self._cells) != self.ambient_dim + 1:
            raise MeshError(f"expected cells of dimensions 0..{self.ambient_dim}, got {len(self._cells)} levels")
        self._lattice: dict[CellId, tuple[tuple[CellId, ...], ...]] = {}
        self._chunks: dict[CellId, tuple[SimplexChunk, ...]] = {}
        self._cofacets: dict[CellId, list[CellId]] = {c.id: [] for level in self._cells for c in level}
        for level in self._cells[1:]:
            for cell in level:
                for j, _ in cell.boundary:
                    self._cofacets[(cell.dim - 1, j)].append(cell.id)
        errors = self.validate()
        if errors:
            raise MeshError("Invalid mesh:\n  " + "\n  ".join(errors))
        self._build_lattice()
        self._build_subdivisions()
        self.h = max((c.diameter for c in self._cells[-1]), default=0.0)
        logger.debug("Mesh built: %s cells per dimension, h = %.4g", self.counts(), self.h)

    # -------------------------------------------------------------------------
    # Queries
    # -------------------------------------------------------------------------
    def counts(self) -> tuple[int, ...]:
        return tuple(len(level) for level in self._cells)

    def n_cells(self, d: int) -> int:
        return len(self._cells[d])

    def cells(self, d: int) -> tuple[Cell, ...]:
        return self._cells[d]

    def cell(self, fid: CellId) -> Cell:
        d, i = fid
        if not 0 <= d <= self.ambient_dim or not 0 <= i < len(self._cells[d]):
            raise MeshError(f"unknown cell {fid}")
        return self._cells[d][i]

    def cell_ids(self, d: int) -> list[CellId]:
        return [(d, i) for i in range(len(self._cells[d]))]

    def facets(self, fid: CellId) -> tuple[tuple[CellId, int], ...]:
        cell = self.cell(fid)
        return tuple(((cell.dim - 1, j), s) for j, s in cell.boundary)

    def cofacets(self, fid: CellId) -> tuple[CellId, ...]:
        return tuple(self._cofacets[fid])

    def subcells(self, fid: CellId, d: int) -> tuple[CellId, ...]:
        """Δ_d(f), sorted by index; ``(f,)`` when ``d == dim f``."""
        if not 0 <= d <= fid[0]:
            raise MeshError(f"subcell dimension {d} out of range for {cell_label(fid)}")
        return self._lattice[fid][d]

    def relative_orientation(self, fid: CellId, sub: CellId) -> int:
        for facet, sign in self.facets(fid):
            if facet == sub:
                return sign
        raise MeshError(f"{cell_label(sub)} is not a boundary facet of {cell_label(fid)}")

    def simplicial_subdivision(self, fid: CellId) -> tuple[SimplexChunk, ...]:
        self.cell(fid)
        return self._chunks[fid]

    def incidence(self) -> tuple[list[list[list[int]]], list[list[list[int]]]]:
        """Facet lists and signs per dimension 1..n, in the layout of ``from_incidence``."""
        facets = [[[j for j, _ in c.boundary] for c in level] for level in self._cells[1:]]
        signs = [[[s for _, s in c.boundary] for c in level] for level in self._cells[1:]]
        return facets, signs

    def euler_characteristic(self) -> int:
        return sum((-1) ** d * n for d, n in enumerate(self.counts()))

    def boundary_of_boundary_residuals(self) -> dict[tuple[CellId, CellId], int]:
        """Non-zero sums Σ_{f'} ε_{ff'} ε_{f'f''}, keyed by (f, f'')."""
        return _boundary_of_boundary(self._cells)

    # -------------------------------------------------------------------------
    # Validation
    # -------------------------------------------------------------------------
    def validate(self) -> list[str]:
        """Return a list of human-readable problems; empty when the mesh is valid."""
        errors: list[str] = []
        n = self.ambient_dim
        if not 1 <= n <= MAX_AMBIENT_DIM:
            errors.append(f"ambient dimension must be in [1, {MAX_AMBIENT_DIM}], got {n}")
            return errors
        if len(self._cells[0]) != len(self.vertices):
            errors.append(f"expected one 0-cell per vertex ({len(self.vertices)}), got {len(self._cells[0])}")
        for d, level in enumerate(self._cells):
            for i, cell in enumerate(level):
                where = cell_label((d, i))
                if cell.id != (d, i):
                    errors.append(f"{where}: stored id {cell.id} does not match its position")
                for j, sign in cell.boundary:
                    if sign not in (-1, 1):
                        errors.append(f"{where}: facet {j} has sign {sign}, expected +1 or -1")
                    if not 0 <= j < len(self._cells[d - 1]):
                        errors.append(f"{where}: dangling subcell reference {d - 1}-{j}")
                if d >= 1 and not cell.boundary:
                    errors.append(f"{where}: empty boundary")
                frame = cell.frame
                gram = frame.axes.T @ frame.axes
                if frame.dim != d or np.max(np.abs(gram - np.eye(d)), initial=0.0) > 1e-12:
                    errors.append(f"{where}: frame is not an orthonormal {d}-frame")
        if errors:
            return errors
        for (f, f2), total in _boundary_of_boundary(self._cells).items():
            errors.append(
                f"orientation inconsistency: Σ ε ε = {total} for pair ({cell_label(f)}, {cell_label(f2)})"
            )
        for d in range(n):
            for cell in self._cells[d]:
                if not self._cofacets[cell.id]:
                    errors.append(f"dangling cell: {cell_label(cell.id)} is not on the boundary of any {d + 1}-cell")
        for d in range(1, n + 1):
            for cell in self._cells[d]:
                for j, _ in cell.boundary:
                    sub = self._cells[d - 1][j]
                    if not cell.frame.contains(sub.frame):
                        errors.append(f"{cell_label(cell.id)}: facet {d - 1}-{j} leaves the cell's affine hull")
        return errors

    # -------------------------------------------------------------------------
    # Construction helpers
    # -------------------------------------------------------------------------
    def _build_lattice(self) -> None:
        for d, level in enumerate(self._cells):
            for cell in level:
                layers: list[tuple[CellId, ...]] = [() for _ in range(d + 1)]
                layers[d] = (cell.id,)
                if d >= 1:
                    below: set[CellId] = {(d - 1, j) for j, _ in cell.boundary}
                    for dd in range(d - 1, -1, -1):
                        layers[dd] = tuple(sorted(below))
                        if dd > 0:
                            below = {sub for f in below for sub in self._lattice[f][dd - 1]}
                self._lattice[cell.id] = tuple(layers)

    def _build_subdivisions(self) -> None:
        problems: list[str] = []
        for d, level in enumerate(self._cells):
            for cell in level:
                chunks = self._subdivide(cell)
                floor = CHUNK_VOLUME_TOL * cell.diameter**d
                if any(c.volume <= floor for c in chunks):
                    problems.append(f"degenerate simplicial chunk in {cell_label(cell.id)} (cell not star-shaped w.r.t. its center?)")
                self._chunks[cell.id] = chunks
        if problems:
            raise MeshError("Invalid mesh:\n  " + "\n  ".join(problems))

    def _subdivide(self, cell: Cell) -> tuple[SimplexChunk, ...]:
        d = cell.dim
        if d == 0:
            return (SimplexChunk(self.vertices[[cell.vertices[0]]], cell.id, 1, 1.0),)
        if d == 1:
            point_sets = [self.vertices[list(cell.vertices)]]
        else:
            point_sets = [
                np.vstack((cell.center, sub.points))
                for j, _ in cell.boundary
                for sub in self._chunks[(d - 1, j)]
            ]
        chunks = []
        for points in point_sets:
            local = (points[1:] - points[0]) @ cell.frame.axes
            det = float(np.linalg.det(local))
            chunks.append(SimplexChunk(points, cell.id, 1 if det >= 0 else -1, abs(det) / factorial(d)))
        return tuple(chunks)

    # -------------------------------------------------------------------------
    # Builders
    # -------------------------------------------------------------------------
    @classmethod
    def from_incidence(
        cls,
        vertices,
        facets: Sequence[Sequence[Sequence[int]]],
        signs: Sequence[Sequence[Sequence[int]]] | None = None,
    ) -> PolytopalMesh:
        """Build a mesh from facet lists ``facets[d - 1][i]`` of each d-cell, d = 1..n.

        Edges list their vertices start first.  Without ``signs`` the frames
        fix the orientation (n-cells: canonical axes; edges: start → end;
        others: principal axes).  With ``signs`` (stored ±1 per facet) each
        cell's frame is oriented to match its first facet sign and all other
        signs are checked against the geometry.
        """
        vertices = np.asarray(vertices, dtype=float)
        if vertices.ndim != 2:
            raise MeshError("vertices must be a 2-D array of coordinates")
        n = vertices.shape[1]
        if len(facets) != n:
            raise MeshError(f"expected facet lists for dimensions 1..{n}, got {len(facets)}")
        if signs is not None:
            stored = [
                [[(j, s) for j, s in zip(fs, ss)] for fs, ss in zip(level_f, level_s)]
                for level_f, level_s in zip(facets, signs)
            ]
            problems = _boundary_of_boundary_from_lists(stored, [len(vertices)] + [len(x) for x in facets])
            if problems:
                raise MeshError("Invalid mesh:\n  " + "\n  ".join(
                    f"orientation inconsistency: Σ ε ε = {t} for pair ({cell_label(f)}, {cell_label(f2)})"
                    for (f, f2), t in problems.items()))

        cells: list[list[Cell]] = [[
            Cell(0, i, (i,), (), LocalFrame(vertices[i], np.zeros((n, 0)), 1.0), 1.0)
            for i in range(len(vertices))
        ]]
        errors: list[str] = []
        for d in range(1, n + 1):
            level: list[Cell] = []
            for i, facet_ids in enumerate(facets[d - 1]):
                where = cell_label((d, i))
                try:
                    if any(not 0 <= j < len(cells[d - 1]) for j in facet_ids):
                        raise MeshError(f"dangling subcell reference in facets {list(facet_ids)}")
                    verts = tuple(sorted({v for j in facet_ids for v in cells[d - 1][j].vertices}))
                    points = vertices[list(verts)]
                    h = _diameter(points)
                    center = points.mean(axis=0)
                    if d == n:
                        axes = np.eye(n)
                    elif d == 1:
                        a, b = (vertices[facet_ids[0]], vertices[facet_ids[1]]) if len(facet_ids) == 2 else (points[0], points[-1])
                        axes = ((b - a) / np.linalg.norm(b - a)).reshape(n, 1)
                    else:
                        axes = _affine_axes(points, d, h)
                    frame = LocalFrame(center, axes, h)
                    geometric = [incidence_sign(frame, cells[d - 1][j].frame) for j in facet_ids]
                    if signs is not None:
                        wanted = list(signs[d - 1][i])
                        if geometric[0] != wanted[0]:
                            frame = _flip(frame)
                            geometric = [-s for s in geometric]
                        for j, g, s in zip(facet_ids, geometric, wanted):
                            if g != s:
                                raise MeshError(
                                    f"stored orientation {s:+d} of facet {d - 1}-{j} disagrees with the geometry ({g:+d})"
                                )
                    boundary = tuple((int(j), int(s)) for j, s in zip(facet_ids, geometric))
                    level.append(Cell(d, i, verts, boundary, frame, 0.0))
                except MeshError as exc:
                    errors.append(f"{where}: {exc}")
            if errors:
                raise MeshError("Invalid mesh:\n  " + "\n  ".join(errors))
            cells.append(level)
        mesh = cls(vertices, cells)
        mesh._fill_measures()
        return mesh

    def _fill_measures(self) -> None:
        for level in self._cells[1:]:
            for cell in level:
                object.__setattr__(cell, "measure", sum(c.volume for c in self._chunks[cell.id]))


def _boundary_of_boundary(cells: Sequence[Sequence[Cell]]) -> dict[tuple[CellId, CellId], int]:
    lists = [[list(c.boundary) for c in level] for level in cells[1:]]
    return _boundary_of_boundary_from_lists(lists, [len(level) for level in cells])


def _boundary_of_boundary_from_lists(
    boundaries: Sequence[Sequence[Sequence[tuple[int, int]]]], counts: Sequence[int]
) -> dict[tuple[CellId, CellId], int]:
    """``boundaries[d - 1][i]`` lists (facet, sign) of d-cell i."""
    bad: dict[tuple[CellId, CellId], int] = {}
    for d in range(2, len(boundaries) + 1):
        for i, facets in enumerate(boundaries[d - 1]):
            totals: dict[int, int] = {}
            for j, s in facets:
                if not 0 <= j < counts[d - 1]:
                    continue
                for k, t in boundaries[d - 2][j]:
                    totals[k] = totals.get(k, 0) + s * t
            for k, total in totals.items():
                if total != 0:
                    bad[((d, i), (d - 2, k))] = total
    return bad


def simplex_faces(simplex: Sequence[int]) -> list[tuple[int, ...]]:
    """Facets of a sorted vertex tuple, each again sorted."""
    return [tuple(c) for c in combinations(simplex, len(simplex) - 1)]
