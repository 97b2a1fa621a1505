"""
Mesh files: JSON documents in a versioned envelope::

    {
        "version": "ddrmesh-v1",
        "ambient_dim": 2,
        "vertices": [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
        "cells": [
            {"dim": 0, "vertex": 0},
            {"dim": 1, "boundary": [[0, -1], [1, 1]]},
            {"dim": 2, "boundary": [[0, 1], [1, 1], [2, -1]]}
        ]
    }

Cell ids are 0-based and dense per dimension, in listing order.  Edges list
their start vertex first.  Stored signs are checked against the geometry on
load: the boundary-of-boundary identity first (naming the offending pair),
then each frame against its stored signs.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

from discrete_de_rham.mesh import MeshError, PolytopalMesh

logger = logging.getLogger(__name__)

MESH_FORMAT_VERSION = "ddrmesh-v1"


# =============================================================================
# Validation
# =============================================================================
def validate_mesh_document(data) -> list[str]:
    """Schema check; returns a list of problems (empty when the document is well formed)."""
    if not isinstance(data, dict):
        return ["mesh document must be a JSON object"]
    errors: list[str] = []
    if data.get("version") != MESH_FORMAT_VERSION:
        errors.append(f"version must be '{MESH_FORMAT_VERSION}', got {data.get('version')!r}")
    n = data.get("ambient_dim")
    if not isinstance(n, int) or isinstance(n, bool) or not 1 <= n <= 3:
        errors.append(f"ambient_dim must be an integer in [1, 3], got {n!r}")
        return errors
    vertices = data.get("vertices")
    if not isinstance(vertices, list) or not vertices:
        errors.append("vertices must be a non-empty list")
    else:
        for i, v in enumerate(vertices):
            if (not isinstance(v, list) or len(v) != n
                    or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v)):
                errors.append(f"vertex {i}: expected {n} numbers, got {v!r}")
    cells = data.get("cells")
    if not isinstance(cells, list):
        errors.append("cells must be a list")
        return errors
    for pos, cell in enumerate(cells):
        where = f"cells[{pos}]"
        if not isinstance(cell, dict):
            errors.append(f"{where}: expected an object")
            continue
        d = cell.get("dim")
        if not isinstance(d, int) or isinstance(d, bool) or not 0 <= d <= n:
            errors.append(f"{where}: dim must be in [0, {n}], got {d!r}")
            continue
        if d == 0:
            if not isinstance(cell.get("vertex"), int):
                errors.append(f"{where}: 0-cell needs an integer 'vertex'")
            continue
        boundary = cell.get("boundary")
        if not isinstance(boundary, list) or not boundary:
            errors.append(f"{where}: boundary must be a non-empty list of [id, sign]")
            continue
        for entry in boundary:
            if (not isinstance(entry, list) or len(entry) != 2
                    or not isinstance(entry[0], int) or entry[1] not in (-1, 1)):
                errors.append(f"{where}: bad boundary entry {entry!r} (expected [id, ±1])")
        if d == 1 and len(boundary) != 2:
            errors.append(f"{where}: an edge needs exactly 2 boundary vertices")
    return errors


# =============================================================================
# Conversion
# =============================================================================
def mesh_to_dict(mesh: PolytopalMesh) -> dict:
    cells: list[dict] = [{"dim": 0, "vertex": c.vertices[0]} for c in mesh.cells(0)]
    for d in range(1, mesh.ambient_dim + 1):
        cells += [{"dim": d, "boundary": [[j, s] for j, s in c.boundary]} for c in mesh.cells(d)]
    return {
        "version": MESH_FORMAT_VERSION,
        "ambient_dim": mesh.ambient_dim,
        "vertices": mesh.vertices.tolist(),
        "cells": cells,
    }


def mesh_from_dict(data: dict) -> PolytopalMesh:
    errors = validate_mesh_document(data)
    if errors:
        raise MeshError("Invalid mesh file:\n  " + "\n  ".join(errors))
    n = data["ambient_dim"]
    by_dim: list[list[dict]] = [[] for _ in range(n + 1)]
    for cell in data["cells"]:
        by_dim[cell["dim"]].append(cell)
    order = [c["vertex"] for c in by_dim[0]]
    if sorted(order) != list(range(len(data["vertices"]))):
        raise MeshError("Invalid mesh file:\n  0-cells must reference every vertex exactly once")
    vertices = [data["vertices"][v] for v in order]
    position = {v: i for i, v in enumerate(order)}
    facets, signs = [], []
    for d in range(1, n + 1):
        ids = [[j for j, _ in c["boundary"]] for c in by_dim[d]]
        if d == 1:
            ids = [[position.get(j, -1) for j in pair] for pair in ids]
        facets.append(ids)
        signs.append([[s for _, s in c["boundary"]] for c in by_dim[d]])
    return PolytopalMesh.from_incidence(vertices, facets, signs)


# =============================================================================
# Load / Save
# =============================================================================
def load_mesh(path: str | Path) -> PolytopalMesh:
    """Read and fully validate a mesh file; raises MeshError with every problem found."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MeshError(f"Invalid mesh file {path}: {exc}") from exc
    mesh = mesh_from_dict(data)
    logger.info("Loaded mesh %s: cells per dimension %s", path, mesh.counts())
    return mesh


def save_mesh(mesh: PolytopalMesh, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(mesh_to_dict(mesh), indent=1), encoding="utf-8")
    logger.debug("Saved mesh to %s", path)
