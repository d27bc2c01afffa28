"""
Adaptive Service – the SOLVE → ESTIMATE → MARK → REFINE loop.

Defines the IAdaptiveService interface and its implementation.  Every
run starts from ``P_0 = {0}`` on the initial mesh of the problem; newly
activated indices enter on that initial mesh (on the shared mesh in
single-level runs).  Records are streamed to the configured sinks after
each iteration so an aborted run keeps its data.
"""

from __future__ import annotations

import logging
import time
from abc import ABC, abstractmethod
from dataclasses import replace
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np

from app.exceptions import ConfigurationError, EstimatorError, MeshError, SolverConvergenceError
from app.models.block import BlockVector
from app.models.indicators import Indicators, MarkResult
from app.models.parametric import IndexSet
from app.models.problem import ProblemSpec
from app.models.run import AdaptiveConfig, IterationRecord, RunOutcome, RunResult
from app.models.space import MultilevelSpace
from app.services.assembly_service import IAssemblyService
from app.services.block_system import IBlockSystemService, energy, warm_start
from app.services.error_estimator import IErrorEstimator, reduction_check
from app.services.marking_service import mark, shared_marks
from app.services.mesh_service import initial_mesh, refine
from app.services.parametric_basis import detail_set

logger = logging.getLogger(__name__)

STOP_CONVERGED = "converged"
STOP_STALLED = "stalled"
STOP_CAP = "iteration cap reached"
STOP_SOLVER = "solver failure"


class LoopDecision(Enum):
    CONTINUE = "continue"
    STOP = "stop"


def stopping_check(record: IterationRecord, config: AdaptiveConfig) -> LoopDecision:
    """Stop once ``est <= tol`` or the iteration cap is hit."""
    if record.est <= config.tol or record.iteration >= config.max_iterations:
        return LoopDecision.STOP
    return LoopDecision.CONTINUE


def reference_error(reference_energy: Optional[float], energy_value: float,
                    est: float) -> Tuple[Optional[float], Optional[float]]:
    """
    ``(|||u_ref - u|||, est / |||u_ref - u|||)`` from energies, using
    ``|||u_ref - u|||² = ‖u_ref‖² - ‖u‖²`` for nested Galerkin solutions.
    """
    if reference_energy is None:
        return None, None
    error = float(np.sqrt(max(reference_energy ** 2 - energy_value ** 2, 0.0)))
    return error, (est / error if error > 0.0 else None)


def refine_space(space: MultilevelSpace, marks: MarkResult) -> MultilevelSpace:
    """
    Apply spatial marks per index and activate the marked detail indices.
    Single-level spaces refine their shared mesh with the union of marks.
    """
    if space.single_level:
        shared = space.detail_mesh
        union = shared_marks(marks)
        refined = refine(shared, union) if len(union) else shared
        meshes = {nu: refined for nu in space.index_set}
    else:
        meshes = {nu: refine(space.mesh_of(nu), marked) for nu, marked in marks.spatial_marks.items()}
    new_space = space.refined(meshes, marks.parametric_marks)

    entry_mesh = new_space.detail_mesh
    for nu in marks.parametric_marks:
        if new_space.mesh_of(nu).uid != entry_mesh.uid:
            raise MeshError(f"Newly activated index {nu} did not start on the entry mesh.")
    for nu in space.index_set:
        if new_space.mesh_of(nu).n_elements < space.mesh_of(nu).n_elements:
            raise MeshError(f"Mesh of {nu} was coarsened between iterations.")
    return new_space


# ---------------------------------------------------------------------------
# Abstract Interface
# ---------------------------------------------------------------------------

class IAdaptiveService(ABC):

    @abstractmethod
    def run(self, config: AdaptiveConfig, problem: ProblemSpec) -> RunOutcome:
        """Run the adaptive loop; ``data`` holds the records and final state."""


# ---------------------------------------------------------------------------
# Concrete Implementation
# ---------------------------------------------------------------------------

class AdaptiveService(IAdaptiveService):

    def __init__(self, assembly: IAssemblyService, block_system: IBlockSystemService,
                 estimator: IErrorEstimator) -> None:
        self._assembly = assembly
        self._block_system = block_system
        self._estimator = estimator

    def run(self, config: AdaptiveConfig, problem: ProblemSpec) -> RunOutcome:
        if problem.coefficient is not self._assembly.coefficient:
            raise ConfigurationError(
                f"Assembly service is bound to a different coefficient than problem '{problem.name}'."
            )
        logger.info(
            "[AdaptiveService] %s on %s: tol=%g, M_bar=%d, marking=%s",
            config.algorithm, problem.name, config.tol, config.m_bar, config.marking,
        )

        space = MultilevelSpace.initial(initial_mesh(problem.domain), config.single_level)
        records: List[IterationRecord] = []
        u: Optional[BlockVector] = None
        previous_space: Optional[MultilevelSpace] = None
        previous: Optional[Indicators] = None
        previous_energy: Optional[float] = None
        indicators: Optional[Indicators] = None

        for iteration in range(config.max_iterations + 1):
            started = time.perf_counter()

            # SOLVE
            op = self._block_system.assemble_operator(space)
            b = self._block_system.assemble_rhs(space, problem.f)
            x0 = warm_start(previous_space, u, space) if u is not None else None
            try:
                solved = self._block_system.solve(
                    op, b, tol=config.solver_tol, method=config.solver, x0=x0,
                    maxiter=config.max_solver_iterations,
                )
            except SolverConvergenceError as exc:
                logger.error("[AdaptiveService] iter %d: %s", iteration, exc)
                result = RunResult(records, space, u, indicators, STOP_SOLVER)
                return RunOutcome.fail(f"{STOP_SOLVER} at iteration {iteration}: {exc}", result)
            u = solved.solution
            energy_value = energy(b, u)
            if previous_energy is not None and energy_value < previous_energy * (1.0 - 1e-8):
                logger.warning(
                    "[AdaptiveService] iter %d: energy decreased from %.10e to %.10e",
                    iteration, previous_energy, energy_value,
                )

            # ESTIMATE
            Q = detail_set(space.index_set, config.m_bar, problem.max_parameter)
            indicators = self._estimator.estimate(space, u, problem.f, Q)
            theorem_ratio = self._theorem_ratio(config, space, u, problem, Q, indicators.est)
            reduction_ratio = None
            if config.reduction_check and previous is not None and previous_energy is not None:
                reduction_ratio = reduction_check(previous, previous_energy, space, energy_value)
                logger.debug("[AdaptiveService] iter %d: reduction ratio %s", iteration, reduction_ratio)
            true_error, effectivity = reference_error(config.reference_energy, energy_value, indicators.est)

            P = space.index_set
            record = IterationRecord(
                iteration=iteration,
                dofs=space.n_dofs,
                card_p=len(P),
                deg_p=P.degree,
                supp_p=P.n_parameters,
                est=indicators.est,
                est_x=indicators.est_x,
                est_p=indicators.est_p,
                max_spatial=indicators.max_spatial,
                max_parametric=indicators.max_parametric,
                energy=energy_value,
                solver_iterations=solved.iterations,
                true_error=true_error,
                effectivity=effectivity,
                theorem_ratio=theorem_ratio,
                reduction_ratio=reduction_ratio,
            )

            # MARK
            decision = stopping_check(record, config)
            marks = MarkResult()
            if decision is LoopDecision.CONTINUE:
                marks = mark(indicators, config.marking, space)
            record = replace(
                record,
                branch=marks.branch,
                n_spatial_marks=marks.n_spatial,
                n_parametric_marks=marks.n_parametric,
                activated=tuple(nu.to_text(Q.max_parameter) for nu in marks.parametric_marks),
                wall_time=time.perf_counter() - started,
            )
            records.append(record)
            self._emit(config, record)

            if decision is LoopDecision.STOP:
                if record.est <= config.tol:
                    return RunOutcome.ok(STOP_CONVERGED,
                                         RunResult(records, space, u, indicators, STOP_CONVERGED))
                logger.warning("[AdaptiveService] Stopped at the iteration cap with est=%.4e > tol=%g",
                               record.est, config.tol)
                return RunOutcome.fail(STOP_CAP, RunResult(records, space, u, indicators, STOP_CAP))
            if marks.is_empty:
                logger.info("[AdaptiveService] All indicators vanish; nothing left to refine.")
                return RunOutcome.ok(STOP_STALLED, RunResult(records, space, u, indicators, STOP_STALLED))

            # REFINE
            new_space = refine_space(space, marks)
            self._estimator.retain(new_space)
            previous_space, space = space, new_space
            previous, previous_energy = indicators, energy_value

        # max_iterations + 1 passes always end in STOP above
        return RunOutcome.fail(STOP_CAP, RunResult(records, space, u, indicators, STOP_CAP))

    # ------------------------------------------------------------------
    # Helpers
    # ------------------------------------------------------------------

    def _theorem_ratio(self, config: AdaptiveConfig, space: MultilevelSpace, u: BlockVector,
                       problem: ProblemSpec, Q: IndexSet, est: float) -> Optional[float]:
        if config.enriched_check_cap <= 0:
            return None
        try:
            return self._estimator.theorem_ratio_check(
                space, u, problem.f, Q, cap=config.enriched_check_cap, est=est
            )
        except EstimatorError as exc:
            logger.debug("[AdaptiveService] Enriched check skipped: %s", exc)
            return None
        except SolverConvergenceError as exc:
            logger.warning("[AdaptiveService] Enriched solve failed: %s", exc)
            return None

    @staticmethod
    def _emit(config: AdaptiveConfig, record: IterationRecord) -> None:
        logger.info(
            "[AdaptiveService] iter %d: dofs=%d est=%.4e (X %.4e, P %.4e) #P=%d deg=%d M=%d "
            "solver=%d branch=%s marks=%d/%d%s",
            record.iteration, record.dofs, record.est, record.est_x, record.est_p,
            record.card_p, record.deg_p, record.supp_p, record.solver_iterations,
            record.branch, record.n_spatial_marks, record.n_parametric_marks,
            f" activated={','.join(record.activated)}" if record.activated else "",
        )
        for sink in config.sinks:
            sink(record)
