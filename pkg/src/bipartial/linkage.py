"""Classical hierarchical aggregation through the Lance-Williams update.

Used on its own and as the reference the additive bi-partial engine is
checked against (it must reproduce UPGMA).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import DissimilarityStore, MergeHistory, MergeRecord
from .exceptions import ConfigurationError, InputError


@dataclass(frozen=True)
class LWCoefficients:
    """Coefficients ``(a1, a2, b, c)`` as a function of cluster sizes.

    ``rule(n_q, n_1, n_2)`` receives the size of the third cluster and of
    the two clusters being merged.
    """

    name: str
    rule: Callable[[int, int, int], tuple]

    def at(self, n_q, n_1, n_2):
        return self.rule(n_q, n_1, n_2)


def _upgma(n_q, n_1, n_2):
    t = n_1 + n_2
    return n_1 / t, n_2 / t, 0.0, 0.0


def _upgmc(n_q, n_1, n_2):
    t = n_1 + n_2
    return n_1 / t, n_2 / t, -(n_1 * n_2) / (t * t), 0.0


SCHEMES = {
    "single": LWCoefficients("single", lambda n_q, n_1, n_2: (0.5, 0.5, 0.0, -0.5)),
    "complete": LWCoefficients("complete", lambda n_q, n_1, n_2: (0.5, 0.5, 0.0, 0.5)),
    "upgma": LWCoefficients("upgma", _upgma),
    "wpgma": LWCoefficients("wpgma", lambda n_q, n_1, n_2: (0.5, 0.5, 0.0, 0.0)),
    "centroid_upgmc": LWCoefficients("centroid_upgmc", _upgmc),
    "median_wpgmc": LWCoefficients("median_wpgmc", lambda n_q, n_1, n_2: (0.5, 0.5, -0.25, 0.0)),
}


def lw_update(d_1q, d_2q, d_12, coeffs: LWCoefficients, sizes):
    """Distance from the union of clusters 1 and 2 to a third cluster ``q``.

    ``sizes`` is ``(n_q, n_1, n_2)``. Works elementwise on arrays.
    """
    a1, a2, b, c = coeffs.at(*sizes)
    return a1 * d_1q + a2 * d_2q + b * d_12 + c * np.abs(d_1q - d_2q)


def run_linkage(store: DissimilarityStore, scheme: str = "single") -> MergeHistory:
    """Generic minimum-distance merger with Lance-Williams updating.

    Ties between equal minimum distances go to the smallest
    ``(smaller id, larger id)`` pair. Centroid and median schemes can
    produce height inversions; they are kept as computed (see
    :func:`height_inversions`).
    """
    try:
        coeffs = SCHEMES[scheme]
    except KeyError:
        raise ConfigurationError(f"unknown linkage scheme {scheme!r}; expected one of {tuple(SCHEMES)}") from None
    n = store.n
    if n < 2:
        raise InputError("linkage needs at least two objects")
    D = np.array(store.d, dtype=float, copy=True)
    active = np.ones(n, dtype=bool)
    sizes = np.ones(n, dtype=np.intp)
    ids = np.arange(n)
    records = []
    for t in range(1, n):
        act = np.flatnonzero(active)
        sub = D[np.ix_(act, act)]
        iu = np.triu_indices(act.size, 1)
        vals = sub[iu]
        m = vals.min()
        cand = np.flatnonzero(vals == m)
        if cand.size > 1:
            lo = np.minimum(ids[act[iu[0][cand]]], ids[act[iu[1][cand]]])
            hi = np.maximum(ids[act[iu[0][cand]]], ids[act[iu[1][cand]]])
            cand = cand[np.lexsort((hi, lo))]
        k = int(cand[0])
        a, b = int(act[iu[0][k]]), int(act[iu[1][k]])
        others = act[(act != a) & (act != b)]
        if others.size:
            new = lw_update(D[a, others], D[b, others], D[a, b], coeffs,
                            (sizes[others], sizes[a], sizes[b]))
            D[a, others] = new
            D[others, a] = new
        left, right = sorted((int(ids[a]), int(ids[b])))
        sizes[a] += sizes[b]
        active[b] = False
        ids[a] = n + t - 1
        records.append(MergeRecord(t, left, right, n + t - 1, int(sizes[a]), float(m)))
    return MergeHistory(records=tuple(records), leaves=n, method=f"linkage:{scheme}")


def height_inversions(history: MergeHistory) -> list[int]:
    """Steps whose merge height is below the previous one."""
    h = history.link_values
    return [int(t) + 2 for t in np.flatnonzero(np.diff(h) < 0)]
