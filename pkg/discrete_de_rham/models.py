"""
Report records shared by the check suites, the cohomology analysis and the
Hodge Laplacian runs.

All records are plain dataclasses with a ``to_dict()`` that only produces
JSON-serializable builtins, so reports can be written with sorted keys and
compared byte for byte across reruns.
"""

from dataclasses import asdict, dataclass, field

# =============================================================================
# Check suites
# =============================================================================
ERROR_COLUMNS = (
    "sigma_l2", "sigma_d", "u_l2", "u_d",
    "sigma_stab", "sigma_d_stab", "u_stab", "u_d_stab",
)


@dataclass
class CheckResult:
    """One residual compared against its threshold."""
    name: str
    residual: float
    threshold: float
    passed: bool = False
    detail: str = ""

    def __post_init__(self):
        self.residual = float(self.residual)
        self.threshold = float(self.threshold)
        self.passed = bool(self.residual <= self.threshold)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SuiteResult:
    """Named group of checks run on one mesh/complex configuration."""
    suite: str
    checks: list = field(default_factory=list)  # list[CheckResult]
    error: str = ""  # set when the suite aborted before finishing

    @property
    def passed(self) -> bool:
        return not self.error and all(c.passed for c in self.checks)

    def add(self, name: str, residual: float, threshold: float, detail: str = "") -> CheckResult:
        result = CheckResult(name, residual, threshold, detail=detail)
        self.checks.append(result)
        return result

    def scale_thresholds(self, factor: float) -> None:
        """Multiply every threshold by ``factor`` (the run's ``tol``) and re-evaluate."""
        for check in self.checks:
            check.threshold = float(check.threshold * factor)
            check.passed = bool(check.residual <= check.threshold)

    def to_dict(self) -> dict:
        return {
            "suite": self.suite,
            "passed": self.passed,
            "error": self.error,
            "checks": [c.to_dict() for c in self.checks],
        }


# =============================================================================
# Cohomology
# =============================================================================
@dataclass
class DegreeCohomology:
    """Ranks and cohomology dimension for one form degree."""
    k: int
    space_dim: int
    rank_d: int          # rank of D^k
    rank_prev: int       # rank of D^{k-1}
    betti: int
    margin: float = float("inf")  # distance of the closest singular value to the cutoff, as a factor
    gap: float = float("inf")     # smallest kept over largest dropped singular value
    ambiguous: bool = False

    @property
    def dim(self) -> int:
        return self.space_dim - self.rank_d - self.rank_prev

    @property
    def match(self) -> bool:
        return self.dim == self.betti

    def to_dict(self) -> dict:
        out = asdict(self)
        out["cohomology"] = self.dim
        out["match"] = self.match
        for key in ("margin", "gap"):
            if out[key] == float("inf"):
                out[key] = None
        return out


@dataclass
class CohomologyReport:
    """Cohomology dimensions of one complex compared with the mesh Betti numbers."""
    tag: str
    degrees: list = field(default_factory=list)  # list[DegreeCohomology]
    complex_residual: float = 0.0

    @property
    def dims(self) -> tuple:
        return tuple(d.dim for d in self.degrees)

    @property
    def betti(self) -> tuple:
        return tuple(d.betti for d in self.degrees)

    @property
    def match(self) -> bool:
        return all(d.match for d in self.degrees)

    @property
    def ambiguous(self) -> bool:
        return any(d.ambiguous for d in self.degrees)

    def to_dict(self) -> dict:
        return {
            "tag": self.tag,
            "dims": list(self.dims),
            "betti": list(self.betti),
            "match": self.match,
            "ambiguous": self.ambiguous,
            "complex_residual": self.complex_residual,
            "degrees": [d.to_dict() for d in self.degrees],
        }

    def to_table(self) -> str:
        header = f"{'k':>2}  {'N_k':>7}  {'rank D^k':>8}  {'rank D^k-1':>10}  {'dim H^k':>7}  {'b_k':>3}  {'gap':>9}  match"
        lines = [f"{self.tag}  (complex residual {self.complex_residual:.2e})", header, "-" * len(header)]
        for d in self.degrees:
            gap = "inf" if d.gap == float("inf") else f"{d.gap:.2e}"
            flag = "yes" if d.match else "NO"
            if d.ambiguous:
                flag += " (ambiguous rank)"
            lines.append(
                f"{d.k:>2}  {d.space_dim:>7}  {d.rank_d:>8}  {d.rank_prev:>10}  {d.dim:>7}  {d.betti:>3}  {gap:>9}  {flag}"
            )
        return "\n".join(lines)


# =============================================================================
# Hodge Laplacian runs
# =============================================================================
@dataclass
class HodgeRun:
    """Errors of one Hodge Laplacian solve on one mesh of a refinement family."""
    level: int
    mesh_h: float
    dofs: int
    errors: dict = field(default_factory=dict)  # ERROR_COLUMNS -> value
    solve_time_s: float = 0.0
    residual: float = 0.0

    @classmethod
    def from_row(cls, row: dict) -> "HodgeRun":
        return cls(
            level=int(row["level"]),
            mesh_h=float(row["mesh_h"]),
            dofs=int(row["dofs"]),
            errors={c: float(row.get(c, 0.0)) for c in ERROR_COLUMNS},
            solve_time_s=float(row.get("solve_time_s", 0.0)),
            residual=float(row.get("residual", 0.0)),
        )

    @property
    def total_error(self) -> float:
        return float(sum(self.errors.get(c, 0.0) for c in ERROR_COLUMNS))

    def row(self) -> dict:
        out = {"level": self.level, "mesh_h": self.mesh_h, "dofs": self.dofs}
        out.update({c: self.errors.get(c, 0.0) for c in ERROR_COLUMNS})
        out["total"] = self.total_error
        out["solve_time_s"] = self.solve_time_s
        out["residual"] = self.residual
        return out
