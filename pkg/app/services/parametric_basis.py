"""
Parametric basis – Legendre recurrence, coupling matrices and the
detail index set.

Univariate polynomials are orthonormal under ``dy/2`` on ``[-1, 1]`` and
satisfy ``y P_n = β_n P_{n+1} + β_{n-1} P_{n-1}``.
"""

from __future__ import annotations

from typing import Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from app.exceptions import BasisError
from app.models.parametric import CouplingMatrix, IndexSet, MultiIndex, RecurrenceTable


def recurrence_table(n_max: int) -> RecurrenceTable:
    """``β_n = (n + 1) / sqrt((2n + 1)(2n + 3))`` for ``n = 0 .. n_max``."""
    if n_max < 0:
        raise BasisError(f"n_max must be non-negative, got {n_max}.")
    n = np.arange(n_max + 1, dtype=float)
    return RecurrenceTable((n + 1.0) / np.sqrt((2.0 * n + 1.0) * (2.0 * n + 3.0)))


def table_for(*sets: IndexSet) -> RecurrenceTable:
    """Smallest table covering every entry of the given sets."""
    return recurrence_table(max((s.max_entry for s in sets), default=0) + 1)


def build_G(m: int, rows: IndexSet, cols: IndexSet, table: RecurrenceTable) -> CouplingMatrix:
    """
    ``[G_m]_{νμ} = β_{μ_m} δ_{μ+ε_m, ν} + β_{μ_m - 1} δ_{μ-ε_m, ν}``;
    ``G_0`` is the identity pattern.
    """
    top = max(rows.max_entry, cols.max_entry)
    if top > table.n_max:
        raise BasisError(
            f"Multi-index entry {top} exceeds the recurrence table (n_max={table.n_max})."
        )
    r, c, v = [], [], []
    for j, mu in enumerate(cols):
        if m == 0:
            if mu in rows:
                r.append(rows.position(mu))
                c.append(j)
                v.append(1.0)
            continue
        up = mu.shifted(m, +1)
        if up in rows:
            r.append(rows.position(up))
            c.append(j)
            v.append(table.beta(mu[m]))
        down = mu.shifted(m, -1)
        if down is not None and down in rows:
            r.append(rows.position(down))
            c.append(j)
            v.append(table.beta(mu[m] - 1))
    matrix = sp.csr_matrix((v, (r, c)), shape=(len(rows), len(cols)))
    return CouplingMatrix(m, rows, cols, matrix)


def coupling_terms(
    rows: IndexSet, cols: IndexSet, table: RecurrenceTable
) -> Dict[MultiIndex, List[Tuple[MultiIndex, int, float]]]:
    """
    Nonzero ``(μ, m, [G_m]_{νμ})`` per row index ``ν``, including the
    ``m = 0`` diagonal.  Only parameters in ``supp(rows ∪ cols)`` can couple.
    """
    params = sorted(set(rows.support) | set(cols.support))
    terms: Dict[MultiIndex, List[Tuple[MultiIndex, int, float]]] = {nu: [] for nu in rows}
    for m in [0] + params:
        for nu, mu, value in build_G(m, rows, cols, table).nonzeros():
            terms[nu].append((mu, m, value))
    for nu in terms:
        terms[nu].sort(key=lambda t: (cols.position(t[0]), t[1]))
    return terms


def detail_set(P: IndexSet, m_bar: int, max_parameter: Optional[int] = None) -> IndexSet:
    """
    ``Q``: every ``ν ± ε_m`` with ``ν ∈ P`` and ``1 <= m <= M_P + M̄``
    (capped at ``max_parameter``) that is not in ``P`` and has no
    negative entry.
    """
    if m_bar < 1:
        raise BasisError(f"M_bar must be at least 1, got {m_bar}.")
    top = P.n_parameters + m_bar
    if max_parameter is not None:
        top = min(top, max_parameter)
    found = set()
    for nu in P:
        for m in range(1, top + 1):
            for step in (+1, -1):
                mu = nu.shifted(m, step)
                if mu is not None and mu not in P:
                    found.add(mu)
    return IndexSet(tuple(found))
