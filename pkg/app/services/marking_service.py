"""
Marking Service – Dörfler selection and the three marking criteria.

Keys are ordered canonically: spatial keys ``(ν, k)`` by the position of
``ν`` in ``P`` and then by the position ``k`` in ``N+``; parametric keys
by their order in ``Q``; in joint selections spatial keys come first.
Equal indicator values are broken by this order (stable sort).
"""

from __future__ import annotations

import logging
from typing import Dict, Hashable, List, Sequence, Set, Tuple

import numpy as np

from app.exceptions import ConfigurationError
from app.models.indicators import Indicators, MarkResult
from app.models.mesh import MarkedVertexSet
from app.models.parametric import MultiIndex
from app.models.run import MarkingConfig
from app.models.space import MultilevelSpace
from app.services.mesh_service import marked_from_positions, n_plus_positions, refinement_closure

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Dörfler selection
# ---------------------------------------------------------------------------

def doerfler_select(values: np.ndarray, theta: float) -> np.ndarray:
    """
    Positions of a minimal set whose squared sum reaches ``theta`` times
    the total, in selection order.
    """
    if not 0.0 < theta <= 1.0:
        raise ConfigurationError(f"Dörfler parameter must lie in (0, 1], got {theta}.")
    values = np.asarray(values, dtype=float)
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        raise ValueError("Indicator values must be finite and non-negative.")
    squares = values ** 2
    order = np.argsort(-squares, kind="stable")
    if theta >= 1.0:
        return order[squares[order] > 0.0]
    cumulative = np.cumsum(squares[order])
    if cumulative.size == 0 or cumulative[-1] == 0.0:
        return np.zeros(0, dtype=np.int64)
    count = int(np.searchsorted(cumulative, theta * cumulative[-1], side="left")) + 1
    return order[:count]


def doerfler_min(indicator_values: Sequence[Tuple[Hashable, float]], theta: float) -> Set[Hashable]:
    """Minimal-cardinality key set with ``Σ_selected v² >= theta Σ_all v²``."""
    keys = [key for key, _ in indicator_values]
    picked = doerfler_select(np.array([v for _, v in indicator_values], dtype=float), theta)
    return {keys[i] for i in picked}


# ---------------------------------------------------------------------------
# Flattening helpers
# ---------------------------------------------------------------------------

def _spatial_flat(indicators: Indicators) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Values, owner position in ``P`` and ``N+`` position of every spatial key."""
    values, owners, positions = [], [], []
    for i, nu in enumerate(indicators.index_set):
        block = np.asarray(indicators.spatial.get(nu, np.zeros(0)), dtype=float)
        values.append(block)
        owners.append(np.full(block.size, i, dtype=np.int64))
        positions.append(np.arange(block.size, dtype=np.int64))
    if not values:
        empty = np.zeros(0, dtype=np.int64)
        return np.zeros(0), empty, empty
    return np.concatenate(values), np.concatenate(owners), np.concatenate(positions)


def _parametric_flat(indicators: Indicators) -> Tuple[List[MultiIndex], np.ndarray]:
    keys = [nu for nu in indicators.detail_set if nu in indicators.parametric]
    return keys, np.array([indicators.parametric[nu] for nu in keys], dtype=float)


def _group_spatial(indicators: Indicators, owners: np.ndarray, positions: np.ndarray,
                   picked: np.ndarray) -> Dict[MultiIndex, MarkedVertexSet]:
    marks: Dict[MultiIndex, MarkedVertexSet] = {}
    space = indicators.space
    for i, nu in enumerate(indicators.index_set):
        chosen = positions[picked[owners[picked] == i]]
        if chosen.size:
            marks[nu] = marked_from_positions(space.mesh_of(nu), np.sort(chosen))
    return marks


def _spatial_marks(indicators: Indicators, theta: float) -> Dict[MultiIndex, MarkedVertexSet]:
    values, owners, positions = _spatial_flat(indicators)
    return _group_spatial(indicators, owners, positions, doerfler_select(values, theta))


def _parametric_marks(indicators: Indicators, theta: float) -> Tuple[MultiIndex, ...]:
    keys, values = _parametric_flat(indicators)
    return tuple(sorted(keys[i] for i in doerfler_select(values, theta)))


# ---------------------------------------------------------------------------
# Marking criteria
# ---------------------------------------------------------------------------

def mark_criterion_A(indicators: Indicators, config: MarkingConfig) -> MarkResult:
    """Refine in space when ``ϑ Σ_Q est² <= Σ_P Σ_z est²``, else enrich ``P``."""
    if config.vartheta * indicators.parametric_sum_sq <= indicators.spatial_sum_sq:
        result = MarkResult(spatial_marks=_spatial_marks(indicators, config.theta_x))
    else:
        result = MarkResult(parametric_marks=_parametric_marks(indicators, config.theta_p))
    _log(result, "A")
    return result


def mark_criterion_B(indicators: Indicators, config: MarkingConfig,
                     space: MultilevelSpace) -> MarkResult:
    """
    Compare tentative parametric marks against the spatial indicators
    of every ``N+`` vertex the tentative spatial refinement would create.
    """
    spatial = _spatial_marks(indicators, config.theta_x)
    parametric = _parametric_marks(indicators, config.theta_p)

    realised_sq = 0.0
    for nu, marked in spatial.items():
        mesh = space.mesh_of(nu)
        positions = n_plus_positions(mesh, refinement_closure(mesh, marked))
        realised_sq += float(np.sum(indicators.spatial[nu][positions] ** 2))
    parametric_sq = float(sum(indicators.parametric[nu] ** 2 for nu in parametric))

    if not spatial and not parametric:
        result = MarkResult()
    elif config.vartheta * parametric_sq <= realised_sq:
        result = MarkResult(spatial_marks=spatial)
    else:
        result = MarkResult(parametric_marks=parametric)
    _log(result, "B")
    return result


def mark_criterion_C(indicators: Indicators, config: MarkingConfig) -> MarkResult:
    """One Dörfler selection over spatial and parametric indicators together."""
    values, owners, positions = _spatial_flat(indicators)
    keys, param_values = _parametric_flat(indicators)
    picked = doerfler_select(np.concatenate([values, param_values]), config.theta)
    n_spatial = values.size
    spatial = _group_spatial(indicators, owners, positions, picked[picked < n_spatial])
    parametric = tuple(sorted(keys[i - n_spatial] for i in picked[picked >= n_spatial]))
    result = MarkResult(spatial_marks=spatial, parametric_marks=parametric)
    _log(result, "C")
    return result


def mark(indicators: Indicators, config: MarkingConfig, space: MultilevelSpace) -> MarkResult:
    """Dispatch on ``config.criterion``."""
    if config.criterion == "A":
        return mark_criterion_A(indicators, config)
    if config.criterion == "B":
        return mark_criterion_B(indicators, config, space)
    return mark_criterion_C(indicators, config)


def shared_marks(result: MarkResult) -> MarkedVertexSet:
    """Union of spatial marks, for single-level runs on one shared mesh."""
    union = MarkedVertexSet.empty()
    for marked in result.spatial_marks.values():
        union = union.union(marked)
    return union


def _log(result: MarkResult, criterion: str) -> None:
    logger.debug(
        "[Marking] criterion %s -> %s (%d spatial, %d parametric)",
        criterion, result.branch, result.n_spatial, result.n_parametric,
    )
