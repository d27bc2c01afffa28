"""
Problem Domain Model.

A benchmark problem: domain, coefficient family, right-hand side and the
default run parameters it is usually solved with.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from app.exceptions import MeshError
from app.models.coefficient import CoefficientField

SpatialFunction = Callable[[np.ndarray], np.ndarray]

# ---------------------------------------------------------------------------
# Supported domains
# ---------------------------------------------------------------------------
DOMAIN_SQUARE = "square"     # (0, 1)^2
DOMAIN_LSHAPE = "lshape"     # (-1, 1)^2 minus (-1, 0]^2
DOMAINS = [DOMAIN_SQUARE, DOMAIN_LSHAPE]


@dataclass(frozen=True)
class DomainSpec:
    """Polygon plus grid parameter ``n`` (mesh width ``h = 1/n``)."""
    kind: str
    n: int

    def __post_init__(self) -> None:
        if self.kind not in DOMAINS:
            raise MeshError(f"Unsupported domain '{self.kind}'. Choose from {DOMAINS}.")
        if self.n < 1:
            raise MeshError(f"Grid parameter must be positive, got {self.n}.")

    @property
    def area(self) -> float:
        return 1.0 if self.kind == DOMAIN_SQUARE else 3.0


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    name: str
    domain: DomainSpec
    coefficient: CoefficientField
    f: Union[SpatialFunction, float]
    default_tol: float
    default_m_bar: int
    #: cap on parameter numbers (``I = N_0^cap``), ``None`` when unbounded
    max_parameter: Optional[int] = None
