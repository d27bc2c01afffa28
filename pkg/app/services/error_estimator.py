"""
Error Estimator – two-level spatial and hierarchical parametric
indicators.

Defines the IErrorEstimator interface and its implementation.

* spatial: for each ``ν ∈ P`` and each ``z ∈ N+`` of ``mesh_of(ν)`` the
  residual tested with the fine hat ``φ̂_z`` of the uniform refinement,
  divided by ``‖φ̂_z‖_D``;
* parametric: for each ``ν ∈ Q`` the ``K_0``-energy of the residual
  lifted into the detail mesh (``T_0``, or the shared mesh in
  single-level runs).
"""

from __future__ import annotations

import logging
import threading
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, Optional

import numpy as np

from app.exceptions import EstimatorError
from app.models.block import BlockVector
from app.models.indicators import Indicators
from app.models.mesh import Mesh
from app.models.parametric import IndexSet, MultiIndex
from app.models.space import MultilevelSpace
from app.services.assembly_service import IAssemblyService, RhsFunction
from app.services.block_system import IBlockSystemService, energy, warm_start
from app.services.mesh_service import realized_positions, uniform_refine
from app.services.parametric_basis import coupling_terms, table_for

logger = logging.getLogger(__name__)

ENRICHED_SOLVER_TOL = 1e-10
DEFAULT_ENRICHED_CAP = 50_000


# ---------------------------------------------------------------------------
# Abstract Interface
# ---------------------------------------------------------------------------

class IErrorEstimator(ABC):

    @abstractmethod
    def spatial_indicators(self, space: MultilevelSpace, u: BlockVector,
                           f: RhsFunction) -> Dict[MultiIndex, np.ndarray]:
        """Two-level indicators per active index, ordered like ``N+``."""

    @abstractmethod
    def parametric_indicators(self, space: MultilevelSpace, u: BlockVector,
                              Q: IndexSet) -> Dict[MultiIndex, float]:
        """Hierarchical indicators for every detail index."""

    @abstractmethod
    def estimate(self, space: MultilevelSpace, u: BlockVector, f: RhsFunction,
                 Q: IndexSet) -> Indicators:
        """Both indicator families for one iteration."""

    @abstractmethod
    def theorem_ratio_check(self, space: MultilevelSpace, u: BlockVector, f: RhsFunction,
                            Q: IndexSet, cap: int = DEFAULT_ENRICHED_CAP,
                            est: Optional[float] = None) -> Optional[float]:
        """``est / |||û - u|||_B`` on the enriched space, ``None`` if degenerate."""

    @abstractmethod
    def retain(self, space: MultilevelSpace) -> None:
        """Release cached data for meshes ``space`` no longer uses."""


# ---------------------------------------------------------------------------
# Concrete Implementation
# ---------------------------------------------------------------------------

class ErrorEstimator(IErrorEstimator):

    def __init__(self, assembly: IAssemblyService, block_system: IBlockSystemService,
                 threads: int = 1) -> None:
        self._assembly = assembly
        self._block_system = block_system
        self._threads = max(1, int(threads))
        self._fine: Dict[int, Mesh] = {}
        self._lock = threading.Lock()

    # ------------------------------------------------------------------
    # Uniform refinements (cached per mesh)
    # ------------------------------------------------------------------

    def fine_mesh(self, mesh: Mesh) -> Mesh:
        with self._lock:
            cached = self._fine.get(mesh.uid)
        if cached is not None:
            return cached
        fine = uniform_refine(mesh)
        with self._lock:
            return self._fine.setdefault(mesh.uid, fine)

    def retain(self, space: MultilevelSpace) -> None:
        """Drop cached data for meshes no longer used by ``space``."""
        live = {mesh.uid for mesh in space.distinct_meshes()}
        live.update({space.initial_mesh.uid, space.detail_mesh.uid})
        with self._lock:
            self._fine = {uid: mesh for uid, mesh in self._fine.items() if uid in live}
            live.update(mesh.uid for mesh in self._fine.values())
        self._assembly.retain(live)

    def _map(self, func, items):
        items = list(items)
        if self._threads > 1 and len(items) > 1:
            with ThreadPoolExecutor(max_workers=self._threads) as pool:
                return list(pool.map(func, items))
        return [func(item) for item in items]

    # ------------------------------------------------------------------
    # Spatial indicators
    # ------------------------------------------------------------------

    def spatial_indicators(self, space: MultilevelSpace, u: BlockVector,
                           f: RhsFunction) -> Dict[MultiIndex, np.ndarray]:
        P = space.index_set
        terms = coupling_terms(P, P, table_for(P))

        def indicator(nu: MultiIndex) -> np.ndarray:
            coarse = space.mesh_of(nu)
            fine = self.fine_mesh(coarse)
            rows = fine.interior_dof_numbering[coarse.n_vertices + coarse.interior_edge_ids]
            residual = np.zeros(fine.n_dofs)
            if nu.is_zero:
                residual += self._assembly.load(fine, f)
            for mu, m, g in terms[nu]:
                if self._assembly.coefficient.is_zero(m):
                    continue
                residual -= g * (self._assembly.stiffness(fine, space.mesh_of(mu), m) @ u[mu])
            hat_norms = np.sqrt(self._assembly.stiffness(fine, fine, 0).diagonal()[rows])
            return np.abs(residual[rows]) / hat_norms

        values = self._map(indicator, P)
        return dict(zip(P, values))

    # ------------------------------------------------------------------
    # Parametric indicators
    # ------------------------------------------------------------------

    def parametric_indicators(self, space: MultilevelSpace, u: BlockVector,
                              Q: IndexSet) -> Dict[MultiIndex, float]:
        P = space.index_set
        if not len(Q):
            return {}
        detail = space.detail_mesh
        terms = coupling_terms(Q, P, table_for(P, Q))
        solve = self._assembly.factor(detail)

        def indicator(nu: MultiIndex) -> float:
            residual = np.zeros(detail.n_dofs)
            for mu, m, g in terms[nu]:
                if self._assembly.coefficient.is_zero(m):
                    continue
                residual -= g * (self._assembly.stiffness(detail, space.mesh_of(mu), m) @ u[mu])
            if not np.any(residual):
                return 0.0
            lifted = solve(residual)
            return float(np.sqrt(max(lifted @ residual, 0.0)))

        values = self._map(indicator, Q)
        return dict(zip(Q, values))

    def estimate(self, space: MultilevelSpace, u: BlockVector, f: RhsFunction,
                 Q: IndexSet) -> Indicators:
        spatial = self.spatial_indicators(space, u, f)
        parametric = self.parametric_indicators(space, u, Q)
        indicators = Indicators(space, Q, spatial, parametric)
        logger.debug(
            "[ErrorEstimator] est=%.4e est_X=%.4e est_P=%.4e max_X=%.3e max_P=%.3e",
            indicators.est, indicators.est_x, indicators.est_p,
            indicators.max_spatial, indicators.max_parametric,
        )
        return indicators

    # ------------------------------------------------------------------
    # Enriched-space checks
    # ------------------------------------------------------------------

    def enriched_space(self, space: MultilevelSpace, Q: IndexSet) -> MultilevelSpace:
        """``V̂``: uniform refinements for ``ν ∈ P`` plus the detail mesh for ``ν ∈ Q``."""
        meshes = {nu: self.fine_mesh(space.mesh_of(nu)) for nu in space.index_set}
        meshes.update({nu: space.detail_mesh for nu in Q})
        return MultilevelSpace(space.index_set.union(Q), meshes, space.initial_mesh)

    def theorem_ratio_check(self, space: MultilevelSpace, u: BlockVector, f: RhsFunction,
                            Q: IndexSet, cap: int = DEFAULT_ENRICHED_CAP,
                            est: Optional[float] = None) -> Optional[float]:
        enriched = self.enriched_space(space, Q)
        if enriched.n_dofs > cap:
            raise EstimatorError(
                f"Enriched space has {enriched.n_dofs} unknowns, above the cap of {cap}."
            )
        op = self._block_system.assemble_operator(enriched)
        b = self._block_system.assemble_rhs(enriched, f)
        embedded = warm_start(space, u, enriched)
        u_hat = self._block_system.solve(op, b, tol=ENRICHED_SOLVER_TOL, x0=embedded).solution

        difference = u_hat - embedded
        error_sq = difference.dot(self._block_system.matvec(op, difference))
        scale = energy(b, u_hat)
        if error_sq <= (1e3 * ENRICHED_SOLVER_TOL * max(scale, 1.0)) ** 2:
            logger.debug("[ErrorEstimator] Enriched solution coincides with u; ratio skipped.")
            return None
        if est is None:
            est = self.estimate(space, u, f, Q).est
        ratio = est / float(np.sqrt(error_sq))
        logger.debug("[ErrorEstimator] est / |||u_hat - u||| = %.4f", ratio)
        return ratio


def reduction_check(
    previous: Indicators,
    previous_energy: float,
    space: MultilevelSpace,
    current_energy: float,
) -> Optional[float]:
    """
    Ratio of the indicators realised by the last refinement to the
    energy gain ``|||u_new - u_old|||_B``.  Galerkin orthogonality on
    nested spaces gives ``|||u_new - u_old|||² = ‖u_new‖² - ‖u_old‖²``.
    """
    old_space = previous.space
    realised_sq = 0.0
    for nu in old_space.index_set:
        positions = realized_positions(old_space.mesh_of(nu), space.mesh_of(nu))
        realised_sq += float(np.sum(previous.spatial[nu][positions] ** 2))
    for nu, value in previous.parametric.items():
        if nu in space.index_set:
            realised_sq += value ** 2
    gain_sq = current_energy ** 2 - previous_energy ** 2
    if gain_sq <= 0.0 or realised_sq == 0.0:
        return None
    return float(np.sqrt(realised_sq / gain_sq))
