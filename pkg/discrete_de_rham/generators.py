"""
Mesh generators for the test geometries.

Generator specs are short strings so they fit on a command line and in a
run file::

    cartesian:2:4x4        # n = 2, 4 x 4 squares on the unit square
    cartesian:3:2          # n = 3, 2 x 2 x 2 cubes
    simplicial:3:2         # Kuhn triangulation of the same grid
    annulus:4:2            # 4 x 4 grid minus a central 2 x 2 hole
    frustum:2              # 2 x 2 x 2 grid mapped onto a truncated pyramid
    hexahedron             # single unit cube
    cartesian:2:4+distort:0.1:7   # perturb interior vertices, 0.1 x min edge, seed 7

Refinement regenerates the mesh with every division count doubled.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from itertools import permutations, product

import numpy as np

from discrete_de_rham.config import DEFAULT_SEED, MAX_AMBIENT_DIM
from discrete_de_rham.mesh import MeshError, PolytopalMesh, simplex_faces

logger = logging.getLogger(__name__)

MAX_DISTORTION = 0.3  # relative to the shortest edge

# Truncated pyramid: x-range and y-range shrink linearly from [0,1] at z=0
FRUSTUM_TOP_SCALE = 0.6
FRUSTUM_TOP_SHIFT = (0.2, 0.1)


# =============================================================================
# Cubical and simplicial builders
# =============================================================================
def _check_divisions(n: int, divisions) -> tuple[int, ...]:
    if not 1 <= n <= MAX_AMBIENT_DIM:
        raise ValueError(f"dimension must be in [1, {MAX_AMBIENT_DIM}], got {n}")
    if isinstance(divisions, int):
        divisions = (divisions,) * n
    divisions = tuple(int(x) for x in divisions)
    if len(divisions) != n:
        raise ValueError(f"expected {n} division counts, got {len(divisions)}")
    if any(x < 1 for x in divisions):
        raise ValueError(f"divisions must be >= 1, got {divisions}")
    return divisions


def _cubical(n: int, divisions: tuple[int, ...], keep=lambda base: True) -> PolytopalMesh:
    """Cubical complex of the unit box; cell = (base lattice point, free axes)."""
    top = [
        (base, tuple(range(n)))
        for base in product(*(range(N) for N in divisions))
        if keep(base)
    ]
    levels: list[list[tuple]] = [[] for _ in range(n + 1)]
    levels[n] = sorted(top)
    for d in range(n, 0, -1):
        below = set()
        for base, axes in levels[d]:
            for i in axes:
                rest = tuple(a for a in axes if a != i)
                shifted = tuple(b + (1 if a == i else 0) for a, b in enumerate(base))
                below.add((base, rest))
                below.add((shifted, rest))
        levels[d - 1] = sorted(below)
    index = [{cell: i for i, cell in enumerate(level)} for level in levels]

    vertices = np.array(
        [[b / N for b, N in zip(base, divisions)] for base, _ in levels[0]], dtype=float
    ).reshape(len(levels[0]), n)
    facets = []
    for d in range(1, n + 1):
        lists = []
        for base, axes in levels[d]:
            ids = []
            for i in axes:
                rest = tuple(a for a in axes if a != i)
                shifted = tuple(b + (1 if a == i else 0) for a, b in enumerate(base))
                ids += [index[d - 1][(base, rest)], index[d - 1][(shifted, rest)]]
            lists.append(ids)
        facets.append(lists)
    return PolytopalMesh.from_incidence(vertices, facets)


def _from_simplices(vertices: np.ndarray, simplices) -> PolytopalMesh:
    n = vertices.shape[1]
    levels: list[list[tuple[int, ...]]] = [[] for _ in range(n + 1)]
    levels[n] = sorted(tuple(sorted(s)) for s in simplices)
    for d in range(n, 0, -1):
        levels[d - 1] = sorted({f for s in levels[d] for f in simplex_faces(s)})
    used = [v for (v,) in levels[0]]
    renumber = {v: i for i, v in enumerate(used)}
    index = [{cell: i for i, cell in enumerate(level)} for level in levels]
    facets = [[[renumber[v] for v in edge] for edge in levels[1]]]
    for d in range(2, n + 1):
        facets.append([[index[d - 1][f] for f in simplex_faces(s)] for s in levels[d]])
    return PolytopalMesh.from_incidence(vertices[used], facets)


# =============================================================================
# Public generators
# =============================================================================
def cartesian_grid(n: int, divisions) -> PolytopalMesh:
    """Uniform grid of boxes on [0,1]^n."""
    divisions = _check_divisions(n, divisions)
    mesh = _cubical(n, divisions)
    logger.info("Generated cartesian grid n=%d divisions=%s", n, divisions)
    return mesh


def hexahedron() -> PolytopalMesh:
    return cartesian_grid(3, (1, 1, 1))


def simplicial_grid(n: int, divisions) -> PolytopalMesh:
    """Kuhn triangulation: every box split into n! simplices along its main diagonal."""
    divisions = _check_divisions(n, divisions)
    lattice = list(product(*(range(N + 1) for N in divisions)))
    number = {p: i for i, p in enumerate(lattice)}
    vertices = np.array([[b / N for b, N in zip(p, divisions)] for p in lattice], dtype=float)
    simplices = []
    for base in product(*(range(N) for N in divisions)):
        for perm in permutations(range(n)):
            point = list(base)
            chain = [number[tuple(point)]]
            for axis in perm:
                point[axis] += 1
                chain.append(number[tuple(point)])
            simplices.append(chain)
    mesh = _from_simplices(vertices, simplices)
    logger.info("Generated simplicial grid n=%d divisions=%s", n, divisions)
    return mesh


def annulus_2d(outer: int, hole: int) -> PolytopalMesh:
    """Unit square split into outer x outer squares with a central hole x hole block removed."""
    if hole < 1 or outer < hole + 2 or (outer - hole) % 2:
        raise ValueError(
            f"annulus needs hole >= 1 and outer - hole even and >= 2, got outer={outer}, hole={hole}"
        )
    lo = (outer - hole) // 2

    def keep(base):
        return not all(lo <= b < lo + hole for b in base)

    mesh = _cubical(2, (outer, outer), keep)
    logger.info("Generated annulus outer=%d hole=%d", outer, hole)
    return mesh


def frustum(divisions: int = 1) -> PolytopalMesh:
    """Grid of a truncated pyramid; cells are planar-faced but not affine images of cubes."""
    grid = cartesian_grid(3, divisions)
    x, y, z = grid.vertices.T
    width = 1.0 - (1.0 - FRUSTUM_TOP_SCALE) * z
    mapped = np.column_stack((
        FRUSTUM_TOP_SHIFT[0] * z + x * width,
        FRUSTUM_TOP_SHIFT[1] * z + y * width,
        z,
    ))
    facets, _ = grid.incidence()
    return PolytopalMesh.from_incidence(mapped, facets)


def min_edge_length(mesh: PolytopalMesh) -> float:
    return min(cell.diameter for cell in mesh.cells(1))


def boundary_vertices(mesh: PolytopalMesh) -> set[int]:
    n = mesh.ambient_dim
    out: set[int] = set()
    for cell in mesh.cells(n - 1):
        if len(mesh.cofacets(cell.id)) == 1:
            out.update(cell.vertices)
    return out


def distort(mesh: PolytopalMesh, magnitude: float, seed: int = DEFAULT_SEED) -> PolytopalMesh:
    """Move every interior vertex by a random vector of length at most ``magnitude``.

    In three dimensions only meshes with triangular faces can be perturbed,
    since moving a vertex of a quadrilateral face breaks its planarity.
    """
    limit = MAX_DISTORTION * min_edge_length(mesh)
    if not 0.0 <= magnitude < limit:
        raise ValueError(f"distortion magnitude must be in [0, {limit:.4g}), got {magnitude}")
    if mesh.ambient_dim == 3 and any(len(c.vertices) > 3 for c in mesh.cells(2)):
        raise ValueError("3D distortion requires triangular faces; use the frustum generator instead")
    rng = np.random.default_rng(seed)
    fixed = boundary_vertices(mesh)
    vertices = mesh.vertices.copy()
    for v in range(len(vertices)):
        direction = rng.normal(size=mesh.ambient_dim)
        radius = magnitude * rng.uniform()
        if v not in fixed:
            vertices[v] += radius * direction / np.linalg.norm(direction)
    facets, _ = mesh.incidence()
    return PolytopalMesh.from_incidence(vertices, facets)


# =============================================================================
# Generator specs
# =============================================================================
@dataclass(frozen=True)
class GeneratorSpec:
    kind: str
    dim: int
    divisions: tuple[int, ...]
    distortion: float = 0.0   # relative to the shortest edge
    seed: int = DEFAULT_SEED

    def refined(self, level: int) -> GeneratorSpec:
        return replace(self, divisions=tuple(x * 2**level for x in self.divisions))

    def label(self) -> str:
        text = f"{self.kind}:{self.dim}:" + "x".join(str(x) for x in self.divisions)
        if self.distortion:
            text += f"+distort:{self.distortion:g}:{self.seed}"
        return text

    def build(self) -> PolytopalMesh:
        if self.kind == "cartesian":
            mesh = cartesian_grid(self.dim, self.divisions)
        elif self.kind == "simplicial":
            mesh = simplicial_grid(self.dim, self.divisions)
        elif self.kind == "annulus":
            mesh = annulus_2d(*self.divisions)
        elif self.kind == "frustum":
            mesh = frustum(self.divisions[0])
        else:
            raise ValueError(f"unknown generator '{self.kind}'")
        if self.distortion:
            mesh = distort(mesh, self.distortion * min_edge_length(mesh), self.seed)
        return mesh


GENERATOR_KINDS = ("cartesian", "simplicial", "annulus", "frustum", "hexahedron")


def parse_generator(text: str, seed: int = DEFAULT_SEED) -> GeneratorSpec:
    """Parse a generator spec string (see module docstring); raise ValueError on bad input."""
    base, _, extra = text.strip().partition("+")
    parts = base.split(":")
    kind = parts[0]
    try:
        if kind == "hexahedron" and len(parts) == 1:
            spec = GeneratorSpec("cartesian", 3, (1, 1, 1), seed=seed)
        elif kind == "frustum" and len(parts) <= 2:
            spec = GeneratorSpec("frustum", 3, (int(parts[1]) if len(parts) == 2 else 1,), seed=seed)
        elif kind == "annulus" and len(parts) == 3:
            spec = GeneratorSpec("annulus", 2, (int(parts[1]), int(parts[2])), seed=seed)
        elif kind in ("cartesian", "simplicial") and len(parts) == 3:
            n = int(parts[1])
            counts = tuple(int(x) for x in parts[2].split("x"))
            spec = GeneratorSpec(kind, n, counts * n if len(counts) == 1 else counts, seed=seed)
        else:
            raise ValueError(f"cannot parse generator '{text}' (kinds: {', '.join(GENERATOR_KINDS)})")
        if extra:
            fields = extra.split(":")
            if fields[0] != "distort" or len(fields) not in (2, 3):
                raise ValueError(f"cannot parse modifier '+{extra}' (expected +distort:<fraction>[:<seed>])")
            fraction = float(fields[1])
            if not 0.0 <= fraction < MAX_DISTORTION:
                raise ValueError(f"cannot parse generator '{text}': distortion fraction must be in [0, {MAX_DISTORTION}), got {fraction}")
            spec = replace(spec, distortion=fraction, seed=int(fields[2]) if len(fields) == 3 else seed)
    except ValueError as exc:
        if str(exc).startswith("cannot parse"):
            raise
        raise ValueError(f"cannot parse generator '{text}': {exc}") from exc
    return spec


def generate(text: str, seed: int = DEFAULT_SEED, level: int = 0) -> PolytopalMesh:
    spec = parse_generator(text, seed).refined(level)
    try:
        return spec.build()
    except MeshError:
        logger.error("Generator %s produced an invalid mesh", spec.label())
        raise


# Convenience for combinatorial tests on single simplices
def reference_simplex(n: int) -> PolytopalMesh:
    vertices = np.vstack((np.zeros(n), np.eye(n)))
    return _from_simplices(vertices, [tuple(range(n + 1))])


__all__ = [
    "GeneratorSpec", "annulus_2d", "boundary_vertices", "cartesian_grid", "distort",
    "frustum", "generate", "hexahedron", "min_edge_length", "parse_generator",
    "reference_simplex", "simplicial_grid",
]
