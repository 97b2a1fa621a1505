"""
Writers for the machine-readable outputs.

* Sparse triplet text files for operator matrices::

      <rows> <cols> <nnz>
      <row> <col> <value>
      ...

  0-based indices, one nonzero per line in row-major order, values with 17
  significant digits.
* ``errors.csv`` for Hodge Laplacian runs (one row per form degree and
  refinement level).
* JSON reports with sorted keys and every float rounded to 12 significant
  digits, so reruns with the same config and seed are byte-identical.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from discrete_de_rham.config import tolerances
from discrete_de_rham.models import ERROR_COLUMNS

logger = logging.getLogger(__name__)

REPORT_FLOAT_DIGITS = 12
CSV_COLUMNS = ("k", "level", "mesh_h", "dofs", *ERROR_COLUMNS, "total", "solve_time_s", "residual")


# =============================================================================
# Sparse triplets
# =============================================================================
def triplet_lines(matrix) -> list[str]:
    coo = sp.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    lines = [f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}"]
    for i in order:
        lines.append(f"{coo.row[i]} {coo.col[i]} {coo.data[i]:.17g}")
    return lines


def write_triplets(matrix, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(triplet_lines(matrix)) + "\n", encoding="utf-8")
    logger.debug("Wrote %s", path)
    return path


def read_triplets(path: str | Path) -> sp.csr_matrix:
    """Inverse of ``write_triplets``; raises ValueError on a malformed file."""
    lines = Path(path).read_text(encoding="utf-8").split("\n")
    try:
        rows, cols, nnz = (int(x) for x in lines[0].split())
        entries = [line.split() for line in lines[1:1 + nnz]]
        i = [int(e[0]) for e in entries]
        j = [int(e[1]) for e in entries]
        v = [float(e[2]) for e in entries]
    except (ValueError, IndexError) as exc:
        raise ValueError(f"Invalid triplet file {path}: {exc}") from exc
    if len(entries) != nnz:
        raise ValueError(f"Invalid triplet file {path}: header announces {nnz} entries, found {len(entries)}")
    return sp.csr_matrix((v, (i, j)), shape=(rows, cols))


# =============================================================================
# JSON reports
# =============================================================================
def canonical(value):
    """Recursively convert to JSON builtins with rounded floats; non-finite floats become null."""
    if isinstance(value, dict):
        return {str(k): canonical(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [canonical(v) for v in value]
    if isinstance(value, np.ndarray):
        return [canonical(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        x = float(value)
        if not math.isfinite(x):
            return None
        return float(f"{x:.{REPORT_FLOAT_DIGITS}g}")
    return value


def dumps_report(data: dict) -> str:
    return json.dumps(canonical(data), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_report(data: dict, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_report(data), encoding="utf-8")
    logger.info("Wrote %s", path)
    return path


def report_envelope(command: str, config: dict, seed: int, body: dict) -> dict:
    """Wrap a command's results with the config, tolerances, library version and seed."""
    from discrete_de_rham import __version__

    return {
        "command": command,
        "version": __version__,
        "seed": seed,
        "config": config,
        "tolerances": tolerances(),
        **body,
    }


# =============================================================================
# CSV
# =============================================================================
def write_errors_csv(rows: list[dict], path: str | Path) -> Path:
    """One line per run; ``rows`` are ``HodgeRun.row()`` dicts carrying an extra ``k``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=CSV_COLUMNS, extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for row in sorted(rows, key=lambda r: (r["k"], r["level"])):
            writer.writerow({c: _csv_value(row.get(c, "")) for c in CSV_COLUMNS})
    logger.info("Wrote %d run(s) to %s", len(rows), path)
    return path


def _csv_value(value):
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.10e}"
    return value
