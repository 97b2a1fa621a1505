"""
Worker function for parallel Hodge Laplacian refinement runs.

This module is imported in child processes spawned by
``concurrent.futures.ProcessPoolExecutor``.  Arguments and results are plain
dicts so they pickle cheaply; every failure is returned, never raised.
"""

from __future__ import annotations

from pathlib import Path

from discrete_de_rham.export import write_triplets
from discrete_de_rham.generators import generate
from discrete_de_rham.hodge import HodgeProblem, adjoint_dual_norm, infsup_diagnostic, run_hodge
from discrete_de_rham.manufactured import manufactured_solution
from discrete_de_rham.mesh_io import load_mesh


def hodge_worker(args: dict) -> dict:
    """Solve one (form degree, refinement level) pair. Runs in a separate process.

    ``args`` carries ``index``, ``k``, ``level``, ``r``, ``seed`` and either
    ``gen`` or ``mesh`` (a file path), plus the optional ``family``,
    ``source``, ``stabilization``, ``quad_degree``, ``infsup`` and
    ``export_dir`` settings.
    """
    idx = args["index"]
    k = args["k"]
    level = args["level"]
    try:
        if args.get("mesh"):
            mesh = load_mesh(args["mesh"])
        else:
            mesh = generate(args["gen"], args["seed"], level)
        problem = HodgeProblem(
            mesh, k, args["r"],
            manufactured_solution(args.get("family", "trigonometric"), mesh.ambient_dim, k),
            source=args.get("source", "interpolate"),
            stabilization=args.get("stabilization", "trace"),
            quad_degree=args.get("quad_degree"),
        )
        run = run_hodge(problem, level)

        exact = problem.solution
        adjoint = {}
        if k < problem.n:
            adjoint["du"] = adjoint_dual_norm(problem.ddr, k, exact.du)
        if k >= 1:
            adjoint["u"] = adjoint_dual_norm(problem.ddr, k - 1, exact.u)

        infsup = infsup_diagnostic(problem) if args.get("infsup") else None

        export_dir = args.get("export_dir")
        if export_dir:
            for j in (k - 1, k):
                if 0 <= j < problem.n:
                    write_triplets(problem.ddr.global_d(j), Path(export_dir) / f"k{k}_level{level}_D{j}.txt")

        row = run.row()
        row["k"] = k
        return {
            "index": idx,
            "success": True,
            "k": k,
            "level": level,
            "row": row,
            "adjoint": adjoint,
            "infsup": infsup,
        }
    except Exception as e:
        return {"index": idx, "success": False, "k": k, "level": level, "error": f"{type(e).__name__}: {e}"}
