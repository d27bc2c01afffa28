"""
Block System Service – the Galerkin operator and its solvers.

Defines the IBlockSystemService interface and its implementation.  The
operator ``A = Σ_m G_m ⊗ K_m`` is applied blockwise and never
assembled; ``K_m^{νμ}`` is only requested for nonzero ``[G_m]_{νμ}`` and
lower blocks reuse the transposes of upper ones.  Systems are solved
with preconditioned MINRES (default) or CG, preconditioned by the
block-diagonal mean-based operator ``diag(K_0^{νν})``.
"""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, NamedTuple, Optional

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from app.exceptions import AssemblyError, SolverConvergenceError
from app.models.block import BlockOperator, BlockVector, CouplingTerm
from app.models.parametric import MultiIndex, RecurrenceTable
from app.models.space import MultilevelSpace
from app.services.assembly_service import IAssemblyService, RhsFunction
from app.services.mesh_service import prolongation
from app.services.parametric_basis import build_G, table_for

logger = logging.getLogger(__name__)

DENSE_ORACLE_LIMIT = 2000
DEFAULT_SOLVER_TOL = 1e-9
DEFAULT_MAX_ITERATIONS = 200


@dataclass
class SolveResult:
    solution: BlockVector
    iterations: int
    residual_history: List[float] = field(default_factory=list)


class KrylovResult(NamedTuple):
    x: np.ndarray
    iterations: int
    residual_history: List[float]


# ---------------------------------------------------------------------------
# Free helpers
# ---------------------------------------------------------------------------

def energy(b: BlockVector, u: BlockVector) -> float:
    """``‖u‖_B = sqrt(bᵀu)`` for a Galerkin solution ``u``."""
    return float(np.sqrt(max(b.dot(u), 0.0)))


def dense_matrix(op: BlockOperator) -> np.ndarray:
    """Dense ``A`` for small test instances."""
    if op.space.n_dofs > DENSE_ORACLE_LIMIT:
        raise AssemblyError(
            f"Dense oracle is limited to {DENSE_ORACLE_LIMIT} unknowns, space has {op.space.n_dofs}."
        )
    return op.to_sparse().toarray()


def warm_start(previous: MultilevelSpace, u: BlockVector, space: MultilevelSpace) -> BlockVector:
    """
    Prolong the previous iterate into a nested space: exact P1
    interpolation per retained index, zeros for new indices.
    """
    blocks = {}
    for nu, n in zip(space.index_set, space.dof_counts):
        if nu in previous.index_set:
            blocks[nu] = prolongation(previous.mesh_of(nu), space.mesh_of(nu)) @ u[nu]
        else:
            blocks[nu] = np.zeros(n)
    return BlockVector(space.index_set, blocks)


def preconditioned_minres(
    apply_a: Callable[[np.ndarray], np.ndarray],
    apply_m_inv: Callable[[np.ndarray], np.ndarray],
    b: np.ndarray,
    x0: Optional[np.ndarray] = None,
    tol: float = DEFAULT_SOLVER_TOL,
    maxiter: int = DEFAULT_MAX_ITERATIONS,
) -> KrylovResult:
    """
    MINRES with a symmetric positive definite preconditioner ``M``.

    Lanczos runs in the ``M^{-1}`` inner product; the iteration stops once
    ``‖b - A x‖_{M^{-1}} <= tol · ‖b‖_{M^{-1}}``.  The returned history holds
    these relative residuals, starting with the initial guess.
    """
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    b_norm = float(np.sqrt(max(b @ apply_m_inv(b), 0.0)))
    if b_norm == 0.0:
        return KrylovResult(np.zeros_like(b), 0, [0.0])

    v_old = np.zeros_like(b)
    v = b - apply_a(x)
    z = apply_m_inv(v)
    gamma = float(np.sqrt(max(v @ z, 0.0)))
    history = [gamma / b_norm]
    if gamma <= tol * b_norm:
        return KrylovResult(x, 0, history)

    eta = gamma
    gamma_old = 1.0
    s_old = s = 0.0
    c_old = c = 1.0
    w_old = np.zeros_like(b)
    w = np.zeros_like(b)

    for iteration in range(1, maxiter + 1):
        z = z / gamma
        az = apply_a(z)
        delta = float(az @ z)
        v_new = az - (delta / gamma) * v - (gamma / gamma_old) * v_old
        z_new = apply_m_inv(v_new)
        gamma_new = float(np.sqrt(max(v_new @ z_new, 0.0)))

        alpha0 = c * delta - c_old * s * gamma
        alpha1 = float(np.hypot(alpha0, gamma_new))
        alpha2 = s * delta + c_old * c * gamma
        alpha3 = s_old * gamma
        if alpha1 == 0.0:
            raise SolverConvergenceError("MINRES breakdown: singular Lanczos step.", history)
        c_new = alpha0 / alpha1
        s_new = gamma_new / alpha1

        w_new = (z - alpha3 * w_old - alpha2 * w) / alpha1
        x = x + c_new * eta * w_new
        eta = -s_new * eta
        history.append(abs(eta) / b_norm)
        if abs(eta) <= tol * b_norm or gamma_new == 0.0:
            return KrylovResult(x, iteration, history)

        v_old, v = v, v_new
        z = z_new
        w_old, w = w, w_new
        gamma_old, gamma = gamma, gamma_new
        c_old, c = c, c_new
        s_old, s = s, s_new

    raise SolverConvergenceError(
        f"MINRES did not reach tol={tol:g} within {maxiter} iterations "
        f"(last relative residual {history[-1]:.3e}).",
        history,
    )


# ---------------------------------------------------------------------------
# Abstract Interface
# ---------------------------------------------------------------------------

class IBlockSystemService(ABC):

    @abstractmethod
    def assemble_operator(self, space: MultilevelSpace,
                          table: Optional[RecurrenceTable] = None) -> BlockOperator:
        """Collect the stiffness matrices behind every nonzero block."""

    @abstractmethod
    def matvec(self, op: BlockOperator, x: BlockVector) -> BlockVector:
        """Blockwise ``A x``."""

    @abstractmethod
    def assemble_rhs(self, space: MultilevelSpace, f: RhsFunction) -> BlockVector:
        """Right-hand side for a deterministic load ``f``."""

    @abstractmethod
    def solve(self, op: BlockOperator, b: BlockVector, tol: float = DEFAULT_SOLVER_TOL,
              method: str = "minres", x0: Optional[BlockVector] = None,
              maxiter: int = DEFAULT_MAX_ITERATIONS) -> SolveResult:
        """Preconditioned Krylov solve of ``A u = b``."""


# ---------------------------------------------------------------------------
# Concrete Implementation
# ---------------------------------------------------------------------------

class BlockSystemService(IBlockSystemService):

    def __init__(self, assembly: IAssemblyService, threads: int = 1) -> None:
        self._assembly = assembly
        self._threads = max(1, int(threads))

    # ------------------------------------------------------------------
    # Operator
    # ------------------------------------------------------------------

    def assemble_operator(self, space: MultilevelSpace,
                          table: Optional[RecurrenceTable] = None) -> BlockOperator:
        P = space.index_set
        table = table or table_for(P)
        diagonal = [self._assembly.stiffness(space.mesh_of(nu), space.mesh_of(nu), 0) for nu in P]
        couplings = []
        for m in P.support:
            if self._assembly.coefficient.is_zero(m):
                continue
            for nu, mu, g in build_G(m, P, P, table).nonzeros():
                i, j = P.position(nu), P.position(mu)
                if i < j:
                    matrix = self._assembly.stiffness(space.mesh_of(nu), space.mesh_of(mu), m)
                    couplings.append(CouplingTerm(i, j, m, g, matrix))
        couplings.sort(key=lambda t: (t.row, t.col, t.m))
        op = BlockOperator(space, diagonal, couplings)
        logger.debug(
            "[BlockSystem] Operator over %d indices, %d dofs, %d stored matrices",
            len(P), space.n_dofs, op.stored_matrix_count,
        )
        return op

    def _split(self, op: BlockOperator, x: np.ndarray) -> List[np.ndarray]:
        off = op.space.offsets
        return [x[off[i]:off[i + 1]] for i in range(len(op.index_set))]

    def apply(self, op: BlockOperator, x: np.ndarray) -> np.ndarray:
        if x.shape != (op.space.n_dofs,):
            raise AssemblyError(f"Operator expects {op.space.n_dofs} entries, got shape {x.shape}.")
        blocks = self._split(op, x)
        rows = range(len(op.index_set))
        if self._threads > 1 and len(op.index_set) > 1:
            with ThreadPoolExecutor(max_workers=self._threads) as pool:
                out = list(pool.map(lambda i: op.apply_row(i, blocks), rows))
        else:
            out = [op.apply_row(i, blocks) for i in rows]
        return np.concatenate(out) if out else np.zeros(0)

    def matvec(self, op: BlockOperator, x: BlockVector) -> BlockVector:
        if x.index_set != op.index_set:
            raise AssemblyError("Block vector and operator are defined over different index sets.")
        for nu, n in zip(op.index_set, op.space.dof_counts):
            if x[nu].shape != (n,):
                raise AssemblyError(f"Block {nu} has shape {x[nu].shape}, expected ({n},).")
        return BlockVector.from_array(op.space, self.apply(op, x.to_array()))

    def assemble_rhs(self, space: MultilevelSpace, f: RhsFunction) -> BlockVector:
        zero = MultiIndex.zero()
        blocks = {nu: np.zeros(n) for nu, n in zip(space.index_set, space.dof_counts)}
        if zero in space.index_set:
            blocks[zero] = np.array(self._assembly.load(space.mesh_of(zero), f), dtype=float)
        return BlockVector(space.index_set, blocks)

    # ------------------------------------------------------------------
    # Preconditioner
    # ------------------------------------------------------------------

    def mean_based_preconditioner(self, op: BlockOperator) -> Callable[[np.ndarray], np.ndarray]:
        """``diag(K_0^{νν})^{-1}`` from cached sparse LU factors."""
        solvers = [self._assembly.factor(op.space.mesh_of(nu)) for nu in op.index_set]

        def apply(r: np.ndarray) -> np.ndarray:
            blocks = self._split(op, r)
            if self._threads > 1 and len(blocks) > 1:
                with ThreadPoolExecutor(max_workers=self._threads) as pool:
                    out = list(pool.map(lambda pair: pair[0](pair[1]), zip(solvers, blocks)))
            else:
                out = [solve(block) for solve, block in zip(solvers, blocks)]
            return np.concatenate(out) if out else np.zeros(0)

        return apply

    # ------------------------------------------------------------------
    # Solve
    # ------------------------------------------------------------------

    def solve(self, op: BlockOperator, b: BlockVector, tol: float = DEFAULT_SOLVER_TOL,
              method: str = "minres", x0: Optional[BlockVector] = None,
              maxiter: int = DEFAULT_MAX_ITERATIONS) -> SolveResult:
        rhs = b.to_array()
        guess = None if x0 is None else x0.to_array()
        precond = self.mean_based_preconditioner(op)

        if method == "minres":
            raw = preconditioned_minres(lambda v: self.apply(op, v), precond, rhs, guess, tol, maxiter)
        elif method == "cg":
            raw = self._solve_cg(op, precond, rhs, guess, tol, maxiter)
        else:
            raise AssemblyError(f"Unknown solver '{method}'.")

        logger.debug("[BlockSystem] %s residual history: %s", method, raw.residual_history)
        solution = BlockVector.from_array(op.space, raw.x)
        return SolveResult(solution, raw.iterations, raw.residual_history)

    def _solve_cg(self, op: BlockOperator, precond: Callable[[np.ndarray], np.ndarray],
                  rhs: np.ndarray, guess: Optional[np.ndarray], tol: float, maxiter: int) -> KrylovResult:
        n = op.space.n_dofs
        a_op = LinearOperator((n, n), matvec=lambda v: self.apply(op, np.ravel(v)), dtype=float)
        m_op = LinearOperator((n, n), matvec=lambda v: precond(np.ravel(v)), dtype=float)
        b_norm = float(np.linalg.norm(rhs)) or 1.0
        history: List[float] = []

        def record(xk: np.ndarray) -> None:
            history.append(float(np.linalg.norm(rhs - self.apply(op, xk))) / b_norm)

        x, info = cg(a_op, rhs, x0=guess, rtol=tol, atol=0.0, maxiter=maxiter, M=m_op, callback=record)
        if info != 0:
            raise SolverConvergenceError(
                f"CG did not reach tol={tol:g} within {maxiter} iterations (info={info}).", history
            )
        return KrylovResult(x, len(history), history)
