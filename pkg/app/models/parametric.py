"""
Parametric Domain Model.

Finitely supported multi-indices, ordered index sets, the Legendre
recurrence table and the coupling matrices ``G_m``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, total_ordering
from typing import Dict, Iterable, Iterator, Mapping, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from app.exceptions import BasisError


@total_ordering
@dataclass(frozen=True)
class MultiIndex:
    """
    Multi-index ``ν`` stored as sorted ``(m, ν_m)`` pairs with ``ν_m >= 1``.

    Parameters are 1-based.  Ordering is graded lexicographic: total
    degree first, then the pair tuple.
    """

    entries: Tuple[Tuple[int, int], ...] = ()

    def __post_init__(self) -> None:
        cleaned = []
        for m, value in sorted(self.entries):
            if m < 1:
                raise BasisError(f"Parameter numbers are 1-based, got m={m}.")
            if value < 0:
                raise BasisError(f"Negative multi-index entry {value} at m={m}.")
            if value:
                cleaned.append((int(m), int(value)))
        if len({m for m, _ in cleaned}) != len(cleaned):
            raise BasisError(f"Duplicate parameter in {self.entries}.")
        object.__setattr__(self, "entries", tuple(cleaned))

    # ------------------------------------------------------------------
    # Constructors
    # ------------------------------------------------------------------

    @classmethod
    def zero(cls) -> "MultiIndex":
        return cls(())

    @classmethod
    def unit(cls, m: int, value: int = 1) -> "MultiIndex":
        return cls(((m, value),))

    @classmethod
    def from_mapping(cls, mapping: Mapping[int, int]) -> "MultiIndex":
        return cls(tuple(mapping.items()))

    @classmethod
    def from_dense(cls, values: Sequence[int]) -> "MultiIndex":
        """``(1, 0, 2)`` -> ``ε_1 + 2 ε_3``."""
        return cls(tuple((m + 1, int(v)) for m, v in enumerate(values)))

    @classmethod
    def parse(cls, text: str) -> "MultiIndex":
        """Inverse of :meth:`to_text`."""
        body = text.strip().strip("()")
        return cls.from_dense([int(tok) for tok in body.split()] if body else [])

    # ------------------------------------------------------------------
    # Queries
    # ------------------------------------------------------------------

    def __getitem__(self, m: int) -> int:
        for key, value in self.entries:
            if key == m:
                return value
        return 0

    @property
    def degree(self) -> int:
        return sum(v for _, v in self.entries)

    @property
    def support(self) -> Tuple[int, ...]:
        return tuple(m for m, _ in self.entries)

    @property
    def max_entry(self) -> int:
        return max((v for _, v in self.entries), default=0)

    @property
    def is_zero(self) -> bool:
        return not self.entries

    def shifted(self, m: int, step: int) -> Optional["MultiIndex"]:
        """``ν + step·ε_m`` or ``None`` when an entry would turn negative."""
        value = self[m] + step
        if value < 0:
            return None
        mapping = dict(self.entries)
        mapping[m] = value
        return MultiIndex.from_mapping(mapping)

    def sort_key(self) -> Tuple[int, Tuple[Tuple[int, int], ...]]:
        return (self.degree, self.entries)

    def __lt__(self, other: "MultiIndex") -> bool:
        if not isinstance(other, MultiIndex):
            return NotImplemented
        return self.sort_key() < other.sort_key()

    def to_text(self, width: Optional[int] = None) -> str:
        """Space separated dense form, e.g. ``(1 0 0 1)``."""
        top = max(self.support, default=0)
        width = max(width or 0, top, 1)
        return "(" + " ".join(str(self[m]) for m in range(1, width + 1)) + ")"

    def __str__(self) -> str:
        return self.to_text()


@dataclass(frozen=True)
class IndexSet:
    """Sorted collection of distinct multi-indices."""

    indices: Tuple[MultiIndex, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "indices", tuple(sorted(set(self.indices))))

    @classmethod
    def of(cls, indices: Iterable[MultiIndex]) -> "IndexSet":
        return cls(tuple(indices))

    @classmethod
    def initial(cls) -> "IndexSet":
        return cls((MultiIndex.zero(),))

    @classmethod
    def active(cls, indices: Iterable[MultiIndex]) -> "IndexSet":
        """An active set ``P``; the zero index is mandatory."""
        result = cls(tuple(indices))
        if MultiIndex.zero() not in result:
            raise BasisError("An active index set must contain the zero index.")
        return result

    def __iter__(self) -> Iterator[MultiIndex]:
        return iter(self.indices)

    def __len__(self) -> int:
        return len(self.indices)

    def __getitem__(self, position: int) -> MultiIndex:
        return self.indices[position]

    @cached_property
    def _positions(self) -> Dict[MultiIndex, int]:
        return {nu: i for i, nu in enumerate(self.indices)}

    def __contains__(self, nu: object) -> bool:
        return nu in self._positions

    def position(self, nu: MultiIndex) -> int:
        try:
            return self._positions[nu]
        except KeyError:
            raise BasisError(f"Index {nu} is not a member of the set.") from None

    def union(self, other: Iterable[MultiIndex]) -> "IndexSet":
        return IndexSet(self.indices + tuple(other))

    @property
    def support(self) -> Tuple[int, ...]:
        """``supp(P)``: parameters active in at least one member."""
        return tuple(sorted({m for nu in self.indices for m in nu.support}))

    @property
    def n_parameters(self) -> int:
        """``M_P = #supp(P)``."""
        return len(self.support)

    @property
    def max_parameter(self) -> int:
        return max(self.support, default=0)

    @property
    def degree(self) -> int:
        """``deg P``: largest total degree."""
        return max((nu.degree for nu in self.indices), default=0)

    @property
    def max_entry(self) -> int:
        return max((nu.max_entry for nu in self.indices), default=0)

    def to_text(self) -> str:
        width = self.max_parameter
        return " ".join(nu.to_text(width) for nu in self.indices)


@dataclass(frozen=True)
class RecurrenceTable:
    """
    Three-term recurrence coefficients ``β_0 .. β_{n_max}`` of the
    orthonormal Legendre family under ``dy/2`` on ``[-1, 1]``.
    """

    betas: np.ndarray

    @property
    def n_max(self) -> int:
        return int(self.betas.shape[0]) - 1

    def beta(self, n: int) -> float:
        if n < 0:
            return 0.0
        if n > self.n_max:
            raise BasisError(f"Recurrence table holds β up to n={self.n_max}, requested n={n}.")
        return float(self.betas[n])

    def evaluate(self, n: int, y: np.ndarray) -> np.ndarray:
        """Evaluate ``P_n(y)`` by running the recurrence forward."""
        y = np.asarray(y, dtype=float)
        if n > self.n_max + 1:
            raise BasisError(f"Cannot evaluate P_{n} with table n_max={self.n_max}.")
        previous = np.zeros_like(y)
        current = np.ones_like(y)
        for k in range(n):
            nxt = (y * current - self.beta(k - 1) * previous) / self.beta(k)
            previous, current = current, nxt
        return current


@dataclass(frozen=True)
class CouplingMatrix:
    """``G_m`` restricted to ``rows × cols``."""
    m: int
    rows: IndexSet
    cols: IndexSet
    matrix: sp.csr_matrix = field(repr=False)

    def entry(self, nu: MultiIndex, mu: MultiIndex) -> float:
        return float(self.matrix[self.rows.position(nu), self.cols.position(mu)])

    def nonzeros(self) -> Iterator[Tuple[MultiIndex, MultiIndex, float]]:
        coo = self.matrix.tocoo()
        for i, j, value in zip(coo.row, coo.col, coo.data):
            yield self.rows[int(i)], self.cols[int(j)], float(value)
