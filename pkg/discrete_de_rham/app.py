"""
Command-line entry point.

Usage:
    python -m discrete_de_rham mesh --gen annulus:4:2 --out annulus.json
    ddr-complexes check --gen cartesian:2:2 --r 1          (after pip install)
    ddr-complexes cohomology --gen annulus:4:2 --complex both
    ddr-complexes hodge --gen cartesian:2:2 --k 0,1 --refinements 3 --threads 0

Exit codes: 0 success, 2 failed checks or invalid mesh / ill-conditioned
local problem, 3 configuration error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor, as_completed
from pathlib import Path

from discrete_de_rham import __version__
from discrete_de_rham.checks import run_suites, suites_for
from discrete_de_rham.cohomology import ComplexMatrices, betti_numbers, cohomology_dims, de_rham_map_check
from discrete_de_rham.config import (
    COMPLEX_CHOICES,
    RANK_REL_TOL,
    SLOPE_MARGIN,
    SOURCE_CHOICES,
    STABILIZATION_CHOICES,
    TOL_EXACT,
)
from discrete_de_rham.ddr import DdrComplex
from discrete_de_rham.export import report_envelope, write_errors_csv, write_report
from discrete_de_rham.generators import generate, parse_generator
from discrete_de_rham.hodge import (
    TopologyError,
    convergence_slopes,
    fit_slope,
    infsup_report,
    slope_ok,
    slope_verdict,
)
from discrete_de_rham.manufactured import FAMILIES
from discrete_de_rham.mesh import MeshError, PolytopalMesh
from discrete_de_rham.mesh_io import load_mesh, save_mesh
from discrete_de_rham.models import HodgeRun
from discrete_de_rham.run_config import COMMANDS, RunConfig, check_run_config, load_run_config
from discrete_de_rham.vem import VemComplex
from discrete_de_rham.worker import hodge_worker

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 2
EXIT_CONFIG = 3

_OVERRIDES = (
    "gen", "mesh", "r", "k", "tol", "quad_degree", "refinements", "out", "seed",
    "threads", "complex", "source", "stabilization", "family", "infsup", "export",
)


# =============================================================================
# Argument parsing
# =============================================================================
class _Parser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with the configuration error code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _degrees(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated form degrees, got '{text}'") from None


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="run file ({\"version\": 1, \"run\": {...}})")
    common.add_argument("--mesh", help="ddrmesh-v1 file (takes precedence over --gen)")
    common.add_argument("--gen", help="generator spec, e.g. cartesian:2:4, annulus:4:2, hexahedron")
    common.add_argument("--r", type=int, help="polynomial degree")
    common.add_argument("--k", type=_degrees, help="form degrees for hodge, e.g. 0,1")
    common.add_argument("--tol", type=float, help="scale applied to every threshold (default 1)")
    common.add_argument("--quad-degree", dest="quad_degree", type=int, help="quadrature exactness for smooth fields")
    common.add_argument("--refinements", type=int, help="number of refinement levels for hodge")
    common.add_argument("--out", help="output directory (mesh: output file or directory)")
    common.add_argument("--seed", type=int, help="seed for random fields and distortions")
    common.add_argument("--threads", type=int, help="worker processes for hodge (0 = one per core)")
    common.add_argument("--complex", choices=COMPLEX_CHOICES)
    common.add_argument("--source", choices=SOURCE_CHOICES, help="hodge right-hand side")
    common.add_argument("--stabilization", choices=STABILIZATION_CHOICES)
    common.add_argument("--family", choices=FAMILIES, help="manufactured solution for hodge")
    common.add_argument("--infsup", action="store_true", default=None, help="hodge: dense inf-sup diagnostic per level")
    common.add_argument("--export", action="store_true", default=None, help="hodge: write D^k as sparse triplets")
    common.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug")

    parser = _Parser(prog="ddr-complexes", description="Discrete de Rham and VEM-inspired complexes on polytopal meshes")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "mesh": "generate a mesh and write it as ddrmesh-v1",
        "check": "run the property suites",
        "cohomology": "cohomology dimensions against Betti numbers",
        "hodge": "Hodge Laplacian convergence study",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the user run.json, then --config, then flags; raises ValueError."""
    config = load_run_config(None, strict=False)
    if args.config:
        config = load_run_config(args.config, strict=True, base=config)
    overrides = {name: getattr(args, name, None) for name in _OVERRIDES}
    overrides["command"] = args.command
    return check_run_config(config.with_overrides(**overrides))


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity <= 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _mesh(config: RunConfig) -> PolytopalMesh:
    if config.mesh:
        return load_mesh(config.mesh)
    return generate(config.gen, config.seed)


def _mesh_info(mesh: PolytopalMesh, config: RunConfig) -> dict:
    return {
        "source": config.mesh or config.gen,
        "ambient_dim": mesh.ambient_dim,
        "counts": list(mesh.counts()),
        "h": float(mesh.h),
    }


# =============================================================================
# Commands
# =============================================================================
def cmd_mesh(config: RunConfig) -> int:
    mesh = _mesh(config)
    path = Path(config.out)
    if path.suffix.lower() != ".json":
        path = path / "mesh.json"
    save_mesh(mesh, path)
    print(f"Wrote {path} (cells per dimension {list(mesh.counts())})")
    return EXIT_OK


def cmd_check(config: RunConfig) -> int:
    mesh = _mesh(config)
    results = run_suites(mesh, config.r, config.seed, names=suites_for(config.complex))
    if config.tol != 1.0:
        for result in results:
            result.scale_thresholds(config.tol)
    passed = all(result.passed for result in results)

    for result in results:
        status = "PASS" if result.passed else "FAIL"
        print(f"{result.suite:<18} {status}")
        for check in result.checks:
            if not check.passed:
                where = f"  [{check.detail}]" if check.detail else ""
                print(f"    {check.name}: {check.residual:.3e} > {check.threshold:.1e}{where}")
        if result.error:
            print(f"    aborted: {result.error}")

    body = {
        "mesh": _mesh_info(mesh, config),
        "passed": passed,
        "suites": [result.to_dict() for result in results],
    }
    write_report(report_envelope("check", config.to_dict(), config.seed, body), Path(config.out) / "report.json")
    return EXIT_OK if passed else EXIT_FAILED


def cmd_cohomology(config: RunConfig) -> int:
    mesh = _mesh(config)
    betti = betti_numbers(mesh)
    rel_tol = RANK_REL_TOL * config.tol
    matrices = [ComplexMatrices.from_mesh(mesh)]
    if config.complex in ("ddr", "both"):
        matrices.append(ComplexMatrices.from_ddr(DdrComplex(mesh, config.r, config.stabilization, config.quad_degree)))
    if config.complex in ("vem", "both"):
        matrices.append(ComplexMatrices.from_vem(VemComplex(mesh, config.r, config.quad_degree)))
    reports = [cohomology_dims(C, betti, rel_tol) for C in matrices]
    de_rham = de_rham_map_check(mesh)
    de_rham_ok = de_rham <= TOL_EXACT * config.tol

    print(f"Betti numbers {betti}")
    for report in reports:
        print()
        print(report.to_table())
    print()
    print(f"de Rham map DDR_0 -> CW: residual {de_rham:.2e}")

    passed = de_rham_ok and all(report.match and report.complex_residual <= TOL_EXACT * config.tol for report in reports)
    body = {
        "mesh": _mesh_info(mesh, config),
        "betti": list(betti),
        "passed": passed,
        "de_rham_residual": de_rham,
        "reports": [report.to_dict() for report in reports],
    }
    write_report(report_envelope("cohomology", config.to_dict(), config.seed, body), Path(config.out) / "report.json")
    return EXIT_OK if passed else EXIT_FAILED


def _hodge_jobs(config: RunConfig) -> list[dict]:
    n = load_mesh(config.mesh).ambient_dim if config.mesh else parse_generator(config.gen, config.seed).dim
    bad = [k for k in config.degrees if k > n]
    if bad:
        raise ValueError(f"form degrees {bad} exceed the ambient dimension {n}")
    levels = config.refinements
    if config.mesh and levels > 1:
        logger.warning("A mesh file gives a single level; ignoring --refinements %d", levels)
        levels = 1
    export_dir = str(Path(config.out) / "operators") if config.export else None
    jobs = []
    for k in config.degrees:
        for level in range(levels):
            jobs.append({
                "index": len(jobs), "k": k, "level": level, "r": config.r, "seed": config.seed,
                "gen": config.gen, "mesh": config.mesh, "family": config.family,
                "source": config.source, "stabilization": config.stabilization,
                "quad_degree": config.quad_degree, "infsup": config.infsup, "export_dir": export_dir,
            })
    return jobs


def _run_jobs(jobs: list[dict], threads: int) -> list[dict]:
    workers = min(threads or os.cpu_count() or 1, len(jobs))
    if workers <= 1:
        return [hodge_worker(job) for job in jobs]
    results: list[dict | None] = [None] * len(jobs)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(hodge_worker, job) for job in jobs]
        for future in as_completed(futures):
            result = future.result()
            results[result["index"]] = result
            logger.info("Finished k=%d level %d", result["k"], result["level"])
    return results


def cmd_hodge(config: RunConfig) -> int:
    jobs = _hodge_jobs(config)
    logger.info("Hodge study: %d solve(s) with r=%d", len(jobs), config.r)
    results = _run_jobs(jobs, config.threads)

    failures = [res for res in results if not res["success"]]
    for res in failures:
        logger.error("k=%d level %d failed: %s", res["k"], res["level"], res["error"])
    done = [res for res in results if res["success"]]

    target = config.r + 1
    degrees = {}
    for k in config.degrees:
        mine = sorted((res for res in done if res["k"] == k), key=lambda res: res["level"])
        if not mine:
            continue
        runs = [HodgeRun.from_row(res["row"]) for res in mine]
        h = [run.mesh_h for run in runs]
        slopes = convergence_slopes(runs)
        adjoint_slopes = {
            name: fit_slope(h, [res["adjoint"][name] for res in mine])
            for name in mine[0]["adjoint"]
        }
        entry = {
            "target": target,
            "slopes": slopes,
            "slope_ok": slope_ok(slopes["total"], config.r, SLOPE_MARGIN),
            "slope_verdict": slope_verdict(slopes["total"], config.r, SLOPE_MARGIN),
            "adjoint": [res["adjoint"] for res in mine],
            "adjoint_slopes": adjoint_slopes,
        }
        if config.infsup:
            entry["infsup"] = infsup_report([res["infsup"] for res in mine])
        degrees[str(k)] = entry

        print(f"k={k}  r={config.r}  target slope {target}")
        print(f"  {'level':>5}  {'h':>10}  {'dofs':>7}  {'total error':>12}")
        for run in runs:
            print(f"  {run.level:>5}  {run.mesh_h:>10.4e}  {run.dofs:>7}  {run.total_error:>12.4e}")
        for column, slope in slopes.items():
            text = "n/a" if slope is None else f"{slope:.3f}"
            print(f"  slope {column:<13} {text}")
        if entry["slope_verdict"] == "slow":
            logger.warning("k=%d: total error slope %.3f below %d - %.2f", k, slopes["total"], target, SLOPE_MARGIN)
        elif entry["slope_verdict"] == "superconvergent":
            logger.info("k=%d: total error slope %.3f above %d + %.2f", k, slopes["total"], target, SLOPE_MARGIN)

    out = Path(config.out)
    rows = [res["row"] for res in done]
    write_errors_csv(rows, out / "errors.csv")
    # Timings vary between reruns; they stay in errors.csv only.
    deterministic_rows = [{key: value for key, value in row.items() if key != "solve_time_s"} for row in rows]
    body = {
        "passed": not failures,
        "runs": sorted(deterministic_rows, key=lambda row: (row["k"], row["level"])),
        "degrees": degrees,
        "failures": [{"k": res["k"], "level": res["level"], "error": res["error"]} for res in failures],
    }
    write_report(report_envelope("hodge", config.to_dict(), config.seed, body), out / "report.json")
    return EXIT_FAILED if failures else EXIT_OK


_COMMANDS = {
    "mesh": cmd_mesh,
    "check": cmd_check,
    "cohomology": cmd_cohomology,
    "hodge": cmd_hodge,
}


# =============================================================================
# Entry point
# =============================================================================
def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose)
    try:
        config = resolve_config(args)
    except ValueError as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG

    try:
        return _COMMANDS[config.command](config)
    except (MeshError, TopologyError, ArithmeticError) as exc:
        logger.error("%s", exc)
        return EXIT_FAILED
    except (ValueError, OSError) as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG


def main():
    try:
        sys.exit(run())
    except KeyboardInterrupt:
        sys.exit(130)


if __name__ == "__main__":
    main()
