"""
Assembly Service – P1 finite element matrices and vectors.

Defines the IAssemblyService interface and its caching implementation.
The module-level functions are pure; ``AssemblyService`` adds a
thread-safe cache of stiffness matrices keyed by ``(row mesh, column
mesh, m)``, overlays and sparse LU factors of ``K_0``.
"""

from __future__ import annotations

import logging
import threading
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Callable, Dict, Hashable, Iterable, NamedTuple, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from app.exceptions import AssemblyError
from app.models.coefficient import CoefficientField
from app.models.mesh import Mesh
from app.models.overlay import SIDE_FIRST, Overlay
from app.models.problem import SpatialFunction
from app.models.quadrature import QuadratureRule
from app.services.overlay_service import build_overlay
from app.services.quadrature import default_rule

logger = logging.getLogger(__name__)

RhsFunction = Union[SpatialFunction, float, None]


def rhs_key(f: RhsFunction) -> Hashable:
    """Load vectors are cached per right-hand side: constants by value, callables by identity."""
    if f is None or isinstance(f, (int, float)):
        return ("const", 0.0 if f is None else float(f))
    try:
        hash(f)
    except TypeError:
        return ("func", id(f))
    return ("func", f)


# ---------------------------------------------------------------------------
# Element quantities
# ---------------------------------------------------------------------------

_REFERENCE_GRADIENTS = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


def element_gradients(mesh: Mesh) -> np.ndarray:
    """(ne, 3, 2) constant gradients of the three hat functions per element."""
    p = mesh.corners
    jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)    # columns are edge vectors
    inv = np.linalg.inv(jac)
    return np.einsum("kr,nrd->nkd", _REFERENCE_GRADIENTS, inv)


def _restricted(rows: np.ndarray, cols: np.ndarray, vals: np.ndarray,
                row_dofs: np.ndarray, col_dofs: np.ndarray, shape: Tuple[int, int]) -> sp.csr_matrix:
    r = row_dofs[rows.ravel()]
    c = col_dofs[cols.ravel()]
    v = vals.ravel()
    keep = (r >= 0) & (c >= 0)
    matrix = sp.coo_matrix((v[keep], (r[keep], c[keep])), shape=shape).tocsr()
    matrix.sum_duplicates()
    matrix.eliminate_zeros()
    return matrix


# ---------------------------------------------------------------------------
# Stiffness matrices
# ---------------------------------------------------------------------------

def stiffness_same(mesh: Mesh, coeff: CoefficientField, m: int,
                   quad: Optional[QuadratureRule] = None) -> sp.csr_matrix:
    """``[K_m]_ij = ∫ a_m ∇φ_j · ∇φ_i`` over interior dofs of one mesh."""
    quad = quad or default_rule()
    shape = (mesh.n_dofs, mesh.n_dofs)
    if coeff.is_zero(m):
        return sp.csr_matrix(shape)
    weights = coeff.cell_integrals(m, mesh.corners, quad)
    grads = element_gradients(mesh)
    local = weights[:, None, None] * np.einsum("nid,njd->nij", grads, grads)
    tri = mesh.triangles
    rows = np.repeat(tri[:, :, None], 3, axis=2)
    cols = np.repeat(tri[:, None, :], 3, axis=1)
    dofs = mesh.interior_dof_numbering
    return _restricted(rows, cols, local, dofs, dofs, shape)


def stiffness_cross(mesh_row: Mesh, mesh_col: Mesh, coeff: CoefficientField, m: int,
                    quad: Optional[QuadratureRule] = None,
                    overlay: Optional[Overlay] = None) -> sp.csr_matrix:
    """
    ``[K_m]_ij = ∫ a_m ∇φ^col_j · ∇φ^row_i`` with hat functions from two
    meshes of the same initial mesh, integrated over overlay cells.  The
    matrix is always built with the lower-uid mesh as rows and transposed
    otherwise, so ``stiffness_cross(A, B) == stiffness_cross(B, A).T``
    holds exactly.
    """
    if mesh_row.uid == mesh_col.uid:
        return stiffness_same(mesh_row, coeff, m, quad)
    if mesh_row.uid > mesh_col.uid:
        flipped = overlay if overlay is None or overlay.mesh_a.uid == mesh_col.uid else None
        return stiffness_cross(mesh_col, mesh_row, coeff, m, quad, flipped).T.tocsr()

    quad = quad or default_rule()
    shape = (mesh_row.n_dofs, mesh_col.n_dofs)
    if coeff.is_zero(m):
        return sp.csr_matrix(shape)
    if overlay is None or overlay.mesh_a.uid != mesh_row.uid or overlay.mesh_b.uid != mesh_col.uid:
        overlay = build_overlay(mesh_row, mesh_col)

    weights = coeff.cell_integrals(m, overlay.corners, quad)
    g_row = element_gradients(mesh_row)[overlay.a_elements]
    g_col = element_gradients(mesh_col)[overlay.b_elements]
    local = weights[:, None, None] * np.einsum("nid,njd->nij", g_row, g_col)
    tri_row = mesh_row.triangles[overlay.a_elements]
    tri_col = mesh_col.triangles[overlay.b_elements]
    rows = np.repeat(tri_row[:, :, None], 3, axis=2)
    cols = np.repeat(tri_col[:, None, :], 3, axis=1)
    return _restricted(rows, cols, local, mesh_row.interior_dof_numbering,
                       mesh_col.interior_dof_numbering, shape)


# ---------------------------------------------------------------------------
# Load vector and norms
# ---------------------------------------------------------------------------

def _evaluate_rhs(f: RhsFunction, points: np.ndarray) -> np.ndarray:
    if f is None:
        return np.zeros(points.shape[:-1])
    if callable(f):
        return np.broadcast_to(np.asarray(f(points), dtype=float), points.shape[:-1])
    return np.full(points.shape[:-1], float(f))


def load_vector(mesh: Mesh, f: RhsFunction, quad: Optional[QuadratureRule] = None,
                interior_only: bool = True) -> np.ndarray:
    """``[b]_i = ∫ f φ_i``; with ``interior_only=False`` one entry per vertex."""
    quad = quad or default_rule()
    points, weights = quad.map_to(mesh.corners)
    values = _evaluate_rhs(f, points) * weights                 # (ne, k)
    local = values @ quad.shape_values()                         # (ne, 3)
    full = np.bincount(mesh.triangles.ravel(), weights=local.ravel(), minlength=mesh.n_vertices)
    if not interior_only:
        return full
    return full[mesh.interior_vertex_ids]


def energy_norm(mesh: Mesh, coeff: CoefficientField, dofs: np.ndarray,
                quad: Optional[QuadratureRule] = None) -> float:
    """``‖a_0^{1/2} ∇v‖_{L2}`` of the P1 function with interior values ``dofs``."""
    dofs = np.asarray(dofs, dtype=float)
    if dofs.shape != (mesh.n_dofs,):
        raise AssemblyError(f"Expected {mesh.n_dofs} interior values, got shape {dofs.shape}.")
    value = dofs @ (stiffness_same(mesh, coeff, 0, quad) @ dofs)
    return float(np.sqrt(max(value, 0.0)))


# ---------------------------------------------------------------------------
# Coefficient admissibility
# ---------------------------------------------------------------------------

class CoefficientBounds(NamedTuple):
    tau: float
    lower: float      # λ = 1 - τ
    upper: float      # Λ = 1 + τ

    @property
    def admissible(self) -> bool:
        return self.tau < 1.0


def validate_coefficient(coeff: CoefficientField,
                         sample_grid: Optional[np.ndarray] = None) -> CoefficientBounds:
    """
    ``τ = ‖Σ_m |a_m|‖_∞ / a_0^min``: the analytic bound of the family when
    it has one, otherwise the maximum of the truncated sum over
    ``sample_grid`` (default: 201 × 201 points of the unit square).
    """
    tau = coeff.tau_bound()
    if tau is None:
        if sample_grid is None:
            gx, gy = np.meshgrid(np.linspace(0.0, 1.0, 201), np.linspace(0.0, 1.0, 201))
            sample_grid = np.column_stack([gx.ravel(), gy.ravel()])
        total = np.zeros(sample_grid.shape[0])
        for m in range(1, coeff.truncation() + 1):
            if not coeff.is_zero(m):
                total += np.abs(coeff.evaluate(m, sample_grid))
        tau = float(total.max(initial=0.0)) / coeff.a0_min
    bounds = CoefficientBounds(float(tau), 1.0 - float(tau), 1.0 + float(tau))
    if not bounds.admissible:
        logger.warning(
            "[AssemblyService] Coefficient %s has tau=%.4f >= 1; the parametric form is not elliptic.",
            coeff.description or type(coeff).__name__, bounds.tau,
        )
    return bounds


def dump_matrix(path: Union[str, Path], matrix: sp.spmatrix) -> Path:
    """Coordinate text dump: one ``row col value`` line per stored entry."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    coo = sp.coo_matrix(matrix)
    with path.open("w", encoding="utf-8") as handle:
        handle.write(f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for i, j, v in zip(coo.row, coo.col, coo.data):
            handle.write(f"{int(i)} {int(j)} {v:.17g}\n")
    return path


# ---------------------------------------------------------------------------
# Abstract Interface
# ---------------------------------------------------------------------------

class IAssemblyService(ABC):

    @property
    @abstractmethod
    def coefficient(self) -> CoefficientField:
        """The coefficient family all matrices are assembled for."""

    @abstractmethod
    def stiffness(self, mesh_row: Mesh, mesh_col: Mesh, m: int) -> sp.spmatrix:
        """``K_m`` between two meshes (cached)."""

    @abstractmethod
    def load(self, mesh: Mesh, f: RhsFunction) -> np.ndarray:
        """Load vector over interior dofs (cached per mesh)."""

    @abstractmethod
    def factor(self, mesh: Mesh) -> Callable[[np.ndarray], np.ndarray]:
        """Solver for ``K_0`` on ``mesh`` backed by a cached sparse LU factor."""

    @abstractmethod
    def retain(self, live_uids: Iterable[int]) -> None:
        """Evict cache entries involving meshes not listed."""


# ---------------------------------------------------------------------------
# Concrete Implementation
# ---------------------------------------------------------------------------

class AssemblyService(IAssemblyService):
    """Caching assembler; safe for concurrent insert-or-get."""

    def __init__(self, coefficient: CoefficientField, quad: Optional[QuadratureRule] = None) -> None:
        self._coeff = coefficient
        self._quad = quad or default_rule()
        self._lock = threading.Lock()
        self._matrices: Dict[Tuple[int, int, int], sp.csr_matrix] = {}
        self._overlays: Dict[Tuple[int, int], Overlay] = {}
        self._loads: Dict[Tuple[int, Hashable], np.ndarray] = {}
        self._factors: Dict[int, Callable[[np.ndarray], np.ndarray]] = {}

    @property
    def coefficient(self) -> CoefficientField:
        return self._coeff

    @property
    def cached_matrix_count(self) -> int:
        return len(self._matrices)

    def _get_or_create(self, store: Dict, key, build: Callable[[], object]):
        with self._lock:
            if key in store:
                return store[key]
        value = build()
        with self._lock:
            return store.setdefault(key, value)

    def overlay(self, mesh_a: Mesh, mesh_b: Mesh) -> Overlay:
        return self._get_or_create(
            self._overlays, (mesh_a.uid, mesh_b.uid), lambda: build_overlay(mesh_a, mesh_b)
        )

    def stiffness(self, mesh_row: Mesh, mesh_col: Mesh, m: int) -> sp.spmatrix:
        if mesh_row.uid > mesh_col.uid:
            return self.stiffness(mesh_col, mesh_row, m).T

        def build() -> sp.csr_matrix:
            if mesh_row.uid == mesh_col.uid:
                return stiffness_same(mesh_row, self._coeff, m, self._quad)
            return stiffness_cross(mesh_row, mesh_col, self._coeff, m, self._quad,
                                   self.overlay(mesh_row, mesh_col))

        return self._get_or_create(self._matrices, (mesh_row.uid, mesh_col.uid, m), build)

    def load(self, mesh: Mesh, f: RhsFunction) -> np.ndarray:
        return self._get_or_create(self._loads, (mesh.uid, rhs_key(f)),
                                   lambda: load_vector(mesh, f, self._quad))

    def factor(self, mesh: Mesh) -> Callable[[np.ndarray], np.ndarray]:
        def build() -> Callable[[np.ndarray], np.ndarray]:
            if mesh.n_dofs == 0:
                return lambda rhs: np.zeros(0)
            lu = splu(sp.csc_matrix(self.stiffness(mesh, mesh, 0)))
            return lu.solve

        return self._get_or_create(self._factors, mesh.uid, build)

    def retain(self, live_uids: Iterable[int]) -> None:
        live = set(live_uids)
        with self._lock:
            before = len(self._matrices)
            self._matrices = {k: v for k, v in self._matrices.items() if k[0] in live and k[1] in live}
            self._overlays = {k: v for k, v in self._overlays.items() if k[0] in live and k[1] in live}
            self._loads = {k: v for k, v in self._loads.items() if k[0] in live}
            self._factors = {k: v for k, v in self._factors.items() if k in live}
            evicted = before - len(self._matrices)
        if evicted:
            logger.debug("[AssemblyService] Evicted %d cached matrices", evicted)
