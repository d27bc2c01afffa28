"""
Run Domain Model.

Configuration of an adaptive run, the per-iteration record written to
the CSV log and the run store, the run manifest, and ``RunOutcome``, the
value object returned by the adaptive service.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from typing import Any, Callable, Dict, List, Optional, Tuple

from app.exceptions import ConfigurationError

# ---------------------------------------------------------------------------
# Algorithm catalogue
# ---------------------------------------------------------------------------
CRITERIA = ["A", "B", "C"]
SOLVERS = ["minres", "cg"]

#: CLI algorithm name -> (marking criterion, single-level mode)
ALGORITHMS: Dict[str, Tuple[str, bool]] = {
    "ml-a": ("A", False),
    "ml-b": ("B", False),
    "ml-c": ("C", False),
    "sl-a": ("A", True),
    "sl-b": ("B", True),
}

CSV_COLUMNS = [
    "iter", "dofs", "error", "yp_one", "xq_one", "cardP", "degP", "suppP",
    "solver_iters", "branch", "effindices", "truerr",
]


@dataclass(frozen=True)
class MarkingConfig:
    criterion: str = "A"
    theta_x: float = 0.5
    theta_p: float = 0.5
    theta: float = 0.5
    vartheta: float = 1.0

    def __post_init__(self) -> None:
        if self.criterion not in CRITERIA:
            raise ConfigurationError(f"Unknown marking criterion '{self.criterion}'.")
        for name in ("theta_x", "theta_p", "theta"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ConfigurationError(f"{name} must lie in (0, 1], got {value}.")
        if self.vartheta <= 0.0:
            raise ConfigurationError(f"vartheta must be positive, got {self.vartheta}.")


@dataclass(frozen=True)
class IterationRecord:

    # ---------------------------------------------------------------------
    # Space
    # ---------------------------------------------------------------------
    iteration: int
    dofs: int
    card_p: int
    deg_p: int
    supp_p: int

    # ---------------------------------------------------------------------
    # Estimates
    # ---------------------------------------------------------------------
    est: float
    est_x: float
    est_p: float
    max_spatial: float = 0.0
    max_parametric: float = 0.0
    energy: float = 0.0

    # ---------------------------------------------------------------------
    # Solver / marking
    # ---------------------------------------------------------------------
    solver_iterations: int = 0
    branch: str = "none"
    n_spatial_marks: int = 0
    n_parametric_marks: int = 0
    activated: Tuple[str, ...] = ()
    wall_time: float = 0.0

    # ---------------------------------------------------------------------
    # Diagnostics (optional)
    # ---------------------------------------------------------------------
    true_error: Optional[float] = None
    effectivity: Optional[float] = None
    theorem_ratio: Optional[float] = None
    reduction_ratio: Optional[float] = None

    def csv_row(self) -> Dict[str, Any]:
        def opt(value: Optional[float]) -> str:
            return "" if value is None else repr(float(value))

        return {
            "iter": self.iteration,
            "dofs": self.dofs,
            "error": repr(self.est),
            "yp_one": repr(self.est_x),
            "xq_one": repr(self.est_p),
            "cardP": self.card_p,
            "degP": self.deg_p,
            "suppP": self.supp_p,
            "solver_iters": self.solver_iterations,
            "branch": self.branch,
            "effindices": opt(self.effectivity),
            "truerr": opt(self.true_error),
        }

    @classmethod
    def from_row(cls, row) -> "IterationRecord":
        """Construct a record from a sqlite3.Row of the iterations table."""
        activated = row["activated"]
        return cls(
            iteration=row["iteration"],
            dofs=row["dofs"],
            card_p=row["card_p"],
            deg_p=row["deg_p"],
            supp_p=row["supp_p"],
            est=row["est"],
            est_x=row["est_x"],
            est_p=row["est_p"],
            energy=row["energy"],
            solver_iterations=row["solver_iterations"],
            branch=row["branch"],
            n_spatial_marks=row["n_spatial_marks"],
            n_parametric_marks=row["n_parametric_marks"],
            activated=tuple(activated.split(";")) if activated else (),
            wall_time=row["wall_time"],
            true_error=row["true_error"],
            effectivity=row["effectivity"],
            theorem_ratio=row["theorem_ratio"],
            reduction_ratio=row["reduction_ratio"],
        )


RecordSink = Callable[[IterationRecord], None]


@dataclass(frozen=True)
class AdaptiveConfig:
    problem: str
    marking: MarkingConfig = field(default_factory=MarkingConfig)
    m_bar: int = 1
    tol: float = 6e-4
    solver_tol: float = 1e-9
    solver: str = "minres"
    max_iterations: int = 100
    max_solver_iterations: int = 200
    single_level: bool = False
    threads: int = 1
    grid: Optional[int] = None
    #: energy ``‖u_ref‖_B`` of a reference solution; enables effectivity
    reference_energy: Optional[float] = None
    #: run the enriched-space check while ``N̂`` stays below this size (0 = off)
    enriched_check_cap: int = 0
    reduction_check: bool = False
    sinks: Tuple[RecordSink, ...] = field(default=(), compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.tol <= 0.0:
            raise ConfigurationError(f"tol must be positive, got {self.tol}.")
        if self.m_bar < 1:
            raise ConfigurationError(f"M_bar must be at least 1, got {self.m_bar}.")
        if self.solver not in SOLVERS:
            raise ConfigurationError(f"Unknown solver '{self.solver}'. Choose from {SOLVERS}.")
        if self.max_iterations < 0:
            raise ConfigurationError("max_iterations cannot be negative.")
        if self.threads < 1:
            raise ConfigurationError("threads must be at least 1.")

    @classmethod
    def for_algorithm(cls, problem: str, algorithm: str, **kwargs: Any) -> "AdaptiveConfig":
        """Build a config from a CLI algorithm name such as ``ml-c``."""
        try:
            criterion, single_level = ALGORITHMS[algorithm]
        except KeyError:
            raise ConfigurationError(
                f"Unknown algorithm '{algorithm}'. Choose from {sorted(ALGORITHMS)}."
            ) from None
        marking = kwargs.pop("marking", None) or MarkingConfig()
        marking = MarkingConfig(
            criterion, marking.theta_x, marking.theta_p, marking.theta, marking.vartheta
        )
        return cls(problem=problem, marking=marking, single_level=single_level, **kwargs)

    @property
    def algorithm(self) -> str:
        prefix = "sl" if self.single_level else "ml"
        return f"{prefix}-{self.marking.criterion.lower()}"

    def echo(self) -> Dict[str, Any]:
        data = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "sinks"}
        data["marking"] = asdict(self.marking)
        data["algorithm"] = self.algorithm
        return data


@dataclass
class RunManifest:
    """Everything needed to reproduce a run."""
    config: Dict[str, Any]
    version: str
    started_at: str
    finished_at: Optional[str] = None
    outputs: Dict[str, str] = field(default_factory=dict)
    status: str = "running"
    deterministic: bool = True
    random_seed: Optional[int] = None
    threads: int = 1

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class RunResult:
    records: List[IterationRecord]
    space: Any
    solution: Any
    indicators: Any = None
    stop_reason: str = ""

    @property
    def final_energy(self) -> Optional[float]:
        return self.records[-1].energy if self.records else None


# ---------------------------------------------------------------------------
# Value object for run outcomes
# ---------------------------------------------------------------------------

@dataclass
class RunOutcome:
    """Carries the outcome of an adaptive run."""
    success: bool
    message: str
    data: Optional[RunResult] = None

    @classmethod
    def ok(cls, message: str = "Converged", data: Optional[RunResult] = None) -> "RunOutcome":
        return cls(success=True, message=message, data=data)

    @classmethod
    def fail(cls, message: str, data: Optional[RunResult] = None) -> "RunOutcome":
        return cls(success=False, message=message, data=data)
