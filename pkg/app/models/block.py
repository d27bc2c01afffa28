"""
Block vectors and the matrix-free block Galerkin operator.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Tuple

import numpy as np
import scipy.sparse as sp

from app.exceptions import AssemblyError
from app.models.parametric import IndexSet, MultiIndex
from app.models.space import MultilevelSpace


@dataclass(frozen=True, eq=False)
class BlockVector:
    """Coefficient vectors ``(u_ν)_{ν ∈ P}`` ordered like the index set."""

    index_set: IndexSet
    blocks: Mapping[MultiIndex, np.ndarray]

    @classmethod
    def zeros(cls, space: MultilevelSpace) -> "BlockVector":
        return cls(space.index_set, {nu: np.zeros(n) for nu, n in zip(space.index_set, space.dof_counts)})

    @classmethod
    def from_array(cls, space: MultilevelSpace, values: np.ndarray) -> "BlockVector":
        values = np.asarray(values, dtype=float)
        if values.shape != (space.n_dofs,):
            raise AssemblyError(f"Expected {space.n_dofs} coefficients, got shape {values.shape}.")
        off = space.offsets
        return cls(
            space.index_set,
            {nu: values[off[i]:off[i + 1]].copy() for i, nu in enumerate(space.index_set)},
        )

    def __getitem__(self, nu: MultiIndex) -> np.ndarray:
        return self.blocks[nu]

    def to_array(self) -> np.ndarray:
        if not len(self.index_set):
            return np.zeros(0)
        return np.concatenate([self.blocks[nu] for nu in self.index_set])

    def dot(self, other: "BlockVector") -> float:
        return float(sum(self.blocks[nu] @ other.blocks[nu] for nu in self.index_set))

    def _check_layout(self, other: "BlockVector") -> None:
        if list(self.index_set) != list(other.index_set) or any(
            self.blocks[nu].shape != other.blocks[nu].shape for nu in self.index_set
        ):
            raise AssemblyError("Block vectors live on different spaces.")

    def __add__(self, other: "BlockVector") -> "BlockVector":
        self._check_layout(other)
        return BlockVector(self.index_set, {nu: self.blocks[nu] + other.blocks[nu] for nu in self.index_set})

    def __sub__(self, other: "BlockVector") -> "BlockVector":
        self._check_layout(other)
        return BlockVector(self.index_set, {nu: self.blocks[nu] - other.blocks[nu] for nu in self.index_set})


@dataclass(frozen=True)
class CouplingTerm:
    """``g · K`` coupling row block ``row`` to column block ``col`` (``row < col``)."""
    row: int
    col: int
    m: int
    g: float
    matrix: sp.spmatrix = field(repr=False)


@dataclass(eq=False)
class BlockOperator:
    """
    ``A_{νμ} = Σ_m [G_m]_{νμ} K_m^{νμ}`` stored as diagonal blocks
    ``K_0^{νν}`` and upper couplings; lower blocks are applied as
    transposes.
    """

    space: MultilevelSpace
    diagonal: List[sp.spmatrix]
    couplings: List[CouplingTerm]
    row_terms: List[List[Tuple[float, sp.spmatrix, int, bool]]] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.row_terms = [[] for _ in self.space.index_set]
        for term in self.couplings:
            self.row_terms[term.row].append((term.g, term.matrix, term.col, False))
            self.row_terms[term.col].append((term.g, term.matrix, term.row, True))

    @property
    def index_set(self) -> IndexSet:
        return self.space.index_set

    @property
    def shape(self) -> Tuple[int, int]:
        n = self.space.n_dofs
        return (n, n)

    @property
    def stored_matrix_count(self) -> int:
        """Distinct stiffness matrices referenced by the operator."""
        ids = {id(k) for k in self.diagonal}
        ids.update(id(t.matrix) for t in self.couplings)
        return len(ids)

    def apply_row(self, i: int, blocks: List[np.ndarray]) -> np.ndarray:
        out = self.diagonal[i] @ blocks[i]
        for g, matrix, j, transpose in self.row_terms[i]:
            out = out + g * (matrix.T @ blocks[j] if transpose else matrix @ blocks[j])
        return out

    def to_sparse(self) -> sp.csr_matrix:
        n = len(self.index_set)
        grid: List[List[object]] = [[None] * n for _ in range(n)]
        for i, block in enumerate(self.diagonal):
            grid[i][i] = block
        for term in self.couplings:
            upper = term.g * term.matrix
            grid[term.row][term.col] = upper if grid[term.row][term.col] is None else grid[term.row][term.col] + upper
            lower = upper.T
            grid[term.col][term.row] = lower if grid[term.col][term.row] is None else grid[term.col][term.row] + lower
        return sp.bmat(grid, format="csr")
