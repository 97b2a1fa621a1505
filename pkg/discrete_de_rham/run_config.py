"""
Run configuration: load, merge and validate the settings of one CLI run.

A run file uses a versioned envelope::

    {"version": 1, "run": {"command": "hodge", "gen": "cartesian:2:2", "r": 1, "k": [1]}}

Keys inside ``run`` mirror the ``RunConfig`` fields; missing keys keep their
defaults.  Precedence, lowest first: built-in defaults, the user default
``run.json`` in ``config.config_dir()`` (if present), an explicit
``--config`` file, command-line flags.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from discrete_de_rham.config import (
    COMPLEX_CHOICES,
    DEFAULT_GENERATOR,
    DEFAULT_OUT_DIR,
    DEFAULT_R,
    DEFAULT_REFINEMENTS,
    DEFAULT_SEED,
    QUADRATURE_MAX_DEGREE,
    R_MAX,
    R_MIN,
    SOURCE_CHOICES,
    STABILIZATION_CHOICES,
    config_dir,
)
from discrete_de_rham.generators import parse_generator
from discrete_de_rham.manufactured import FAMILIES

logger = logging.getLogger(__name__)

_RUN_FILENAME = "run.json"
_FORMAT_VERSION = 1

COMMANDS = ("mesh", "check", "cohomology", "hodge")


@dataclass
class RunConfig:
    command: str = "check"
    gen: str = DEFAULT_GENERATOR
    mesh: str | None = None          # mesh file; takes precedence over gen
    r: int = DEFAULT_R
    k: list[int] | None = None       # hodge: form degrees to solve (None = [1])
    tol: float = 1.0                 # scale applied to every check threshold and the rank cutoff
    quad_degree: int | None = None
    refinements: int = DEFAULT_REFINEMENTS
    out: str = DEFAULT_OUT_DIR
    seed: int = DEFAULT_SEED
    threads: int = 1                 # 0 = one worker per core
    complex: str = "both"
    source: str = "interpolate"
    stabilization: str = "trace"
    family: str = "trigonometric"
    infsup: bool = False
    export: bool = False

    @property
    def degrees(self) -> list[int]:
        return list(self.k) if self.k else [1]

    def to_dict(self) -> dict:
        return asdict(self)

    def with_overrides(self, **overrides) -> RunConfig:
        """Copy with every non-None override applied."""
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise ValueError(f"Unknown run settings: {', '.join(sorted(unknown))}")
        return replace(self, **{key: value for key, value in overrides.items() if value is not None})


# =============================================================================
# Validation
# =============================================================================
def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def validate_run_config(data: object) -> list[str]:
    """
    Validate a run mapping (the ``run`` part of the envelope, or ``RunConfig.to_dict()``).

    Returns a list of error strings (empty means valid).
    """
    if not isinstance(data, dict):
        return ["run must be an object"]

    errors: list[str] = []
    known = {f.name for f in fields(RunConfig)}
    for key in sorted(set(data) - known):
        errors.append(f"run.{key}: unknown setting")

    def choice(key, options):
        if key in data and data[key] not in options:
            errors.append(f"run.{key}: must be one of {', '.join(options)}, got {data[key]!r}")

    choice("command", COMMANDS)
    choice("complex", COMPLEX_CHOICES)
    choice("source", SOURCE_CHOICES)
    choice("stabilization", STABILIZATION_CHOICES)
    choice("family", FAMILIES)

    if "r" in data:
        r = data["r"]
        if not _is_int(r) or not R_MIN <= r <= R_MAX:
            errors.append(f"run.r: must be an integer in [{R_MIN}, {R_MAX}], got {r!r}")

    if data.get("k") is not None:
        k = data["k"]
        if not isinstance(k, list) or not k or not all(_is_int(x) and 0 <= x <= 3 for x in k):
            errors.append(f"run.k: must be a non-empty list of form degrees in [0, 3], got {k!r}")

    if "tol" in data:
        tol = data["tol"]
        if isinstance(tol, bool) or not isinstance(tol, (int, float)) or not tol > 0:
            errors.append(f"run.tol: must be a positive number, got {tol!r}")

    if data.get("quad_degree") is not None:
        q = data["quad_degree"]
        if not _is_int(q) or not 1 <= q <= QUADRATURE_MAX_DEGREE:
            errors.append(f"run.quad_degree: must be an integer in [1, {QUADRATURE_MAX_DEGREE}], got {q!r}")

    for key, low in (("refinements", 1), ("threads", 0), ("seed", 0)):
        if key in data and (not _is_int(data[key]) or data[key] < low):
            errors.append(f"run.{key}: must be an integer >= {low}, got {data[key]!r}")

    for key in ("infsup", "export"):
        if key in data and not isinstance(data[key], bool):
            errors.append(f"run.{key}: must be true or false, got {data[key]!r}")

    if "out" in data and (not isinstance(data["out"], str) or not data["out"].strip()):
        errors.append("run.out: must be a non-empty path")

    mesh = data.get("mesh")
    if mesh is not None and (not isinstance(mesh, str) or not mesh.strip()):
        errors.append("run.mesh: must be a non-empty path")

    if "gen" in data:
        gen = data["gen"]
        if not isinstance(gen, str):
            errors.append(f"run.gen: must be a generator string, got {gen!r}")
        else:
            try:
                parse_generator(gen)
            except ValueError as exc:
                errors.append(f"run.gen: {exc}")

    return errors


def check_run_config(config: RunConfig) -> RunConfig:
    """Raise ValueError listing every problem; return ``config`` unchanged otherwise."""
    errors = validate_run_config(config.to_dict())
    if errors:
        raise ValueError("Invalid run configuration:\n  " + "\n  ".join(errors))
    return config


# =============================================================================
# Load / Save
# =============================================================================
def user_run_path() -> Path:
    return config_dir() / _RUN_FILENAME


def _read_envelope(path: Path) -> dict:
    raw = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(raw, dict) or "version" not in raw or "run" not in raw:
        raise ValueError(f"{path}: missing version envelope")
    if raw["version"] != _FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported run file version {raw['version']!r}")
    data = raw["run"]
    errors = validate_run_config(data)
    if errors:
        raise ValueError(f"Invalid run file {path}:\n  " + "\n  ".join(errors))
    return data


def load_run_config(path: str | Path | None = None, strict: bool = True,
                    base: RunConfig | None = None) -> RunConfig:
    """
    Load a run file on top of ``base`` (defaults when None).

    With ``path`` None the user default ``run.json`` is used if it exists.
    A missing, corrupt or invalid file raises ValueError when ``strict``;
    otherwise it is logged and ``base`` is returned.
    """
    base = base or RunConfig()
    if path is None:
        path = user_run_path()
        if not path.exists():
            return base
    path = Path(path)
    try:
        data = _read_envelope(path)
    except (OSError, json.JSONDecodeError, ValueError) as exc:
        if strict:
            raise ValueError(f"Cannot load run file: {exc}") from exc
        logger.warning("Ignoring run file %s (%s), using defaults", path, exc)
        return base
    logger.info("Loaded run settings from %s", path)
    return replace(base, **data)


def save_run_config(config: RunConfig, path: str | Path) -> None:
    """Validate and write ``config`` in the versioned envelope; raises ValueError if invalid."""
    check_run_config(config)
    envelope = {"version": _FORMAT_VERSION, "run": config.to_dict()}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(envelope, indent=2, sort_keys=True), encoding="utf-8")
    logger.info("Saved run settings to %s", path)
