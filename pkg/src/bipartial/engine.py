"""Generic merger procedure driven by the bi-partial switch threshold.

At every level the engine evaluates, for each pair of current clusters,
the gain ``dS`` of the cohesion term and the loss ``dD`` of the separation
term, and merges the pair with the smallest threshold

    r* = dD / (dD + dS),

i.e. the pair whose merger becomes worthwhile first as the weight ``r``
grows from 0. Objectives plug in through :class:`BipartialObjective`.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from .core import MergeHistory, MergeRecord, ObjectiveProfile, Partition, partition_at_step
from .exceptions import DegeneratePairError, ObjectiveContractError

# Negative deltas smaller than this (relative to the largest delta seen in
# the step) are rounding noise and are clamped to zero.
_NEG_TOL = 1e-12

# Thresholds lie in [0, 1]; differences below this are rounding noise and
# do not count as a change of direction.
R_TOL = 1e-12


class BipartialObjective(ABC):
    """State machine for one merger run over ``n_atoms`` initial clusters.

    Clusters live in slots ``0..n_atoms-1``. Merging slots ``a < b`` keeps
    the union in slot ``a`` and retires slot ``b``.

    Subclasses set ``orientation``: ``"maximize"`` for the form
    ``r*Q_S + (1-r)*Q^D`` and ``"minimize"`` for the dual form. In both
    cases ``deltas`` returns non-negative magnitudes: the improvement of the
    similarity-flavoured term and the deterioration of the distance-flavoured
    one. ``mirror_r`` marks objectives whose weight multiplies the distance
    term instead; their recorded thresholds are ``dS / (dS + dD)`` and
    decrease along the hierarchy.
    """

    orientation = "maximize"
    mirror_r = False
    name = "objective"

    def __init__(self, sizes):
        self.sizes = np.asarray(sizes, dtype=np.intp).copy()
        self.active = np.ones(self.sizes.size, dtype=bool)

    @property
    def n_atoms(self) -> int:
        return self.sizes.size

    @abstractmethod
    def qs_initial(self) -> float:
        """Similarity-flavoured term on the initial partition."""

    @abstractmethod
    def qd_initial(self) -> float:
        """Distance-flavoured term on the initial partition."""

    @abstractmethod
    def deltas(self, a: int, b: int) -> tuple[float, float]:
        """``(dS, dD)`` for merging slots ``a`` and ``b``."""

    @abstractmethod
    def _merge(self, a: int, b: int) -> None:
        """Fold slot ``b`` into slot ``a`` (``a < b``)."""

    def pair_deltas(self, act: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Delta matrices over the active slots ``act``.

        Only the strict upper triangle is read by the engine. Subclasses
        override this with vectorized versions.
        """
        k = act.size
        dS = np.zeros((k, k))
        dD = np.zeros((k, k))
        for i in range(k):
            for j in range(i + 1, k):
                dS[i, j], dD[i, j] = self.deltas(act[i], act[j])
        return dS, dD

    def delta_qs(self, a, b) -> float:
        return self.deltas(a, b)[0]

    def delta_qd(self, a, b) -> float:
        return self.deltas(a, b)[1]

    def link_value(self, a, b, dS, dD) -> float:
        """Merge height reported alongside ``r``; defaults to ``dD``."""
        return dD

    def on_merge(self, a: int, b: int) -> None:
        a, b = min(a, b), max(a, b)
        self._merge(a, b)
        self.sizes[a] += self.sizes[b]
        self.sizes[b] = 0
        self.active[b] = False


def merge_threshold(objective: BipartialObjective, a: int, b: int) -> float:
    """Switch threshold ``dD / (dD + dS)`` for merging slots ``a`` and ``b``.

    Raises
    ------
    ObjectiveContractError
        If either delta is negative.
    DegeneratePairError
        If both deltas are zero.
    """
    dS, dD = objective.deltas(a, b)
    if dS < 0 or dD < 0:
        raise ObjectiveContractError(
            f"negative delta for slots ({a}, {b}): dS={dS!r}, dD={dD!r}",
            left=a, right=b, delta_qs=dS, delta_qd=dD,
        )
    if dS + dD == 0:
        raise DegeneratePairError(f"slots ({a}, {b}) have dS = dD = 0")
    return dD / (dD + dS)


def _checked(values, name, act, iu, objective):
    scale = float(np.max(np.abs(values))) if values.size else 0.0
    bad = values < -_NEG_TOL * max(scale, 1.0)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        a, b = int(act[iu[0][k]]), int(act[iu[1][k]])
        raise ObjectiveContractError(
            f"{objective.name}: {name} = {values[k]!r} < 0 when merging slots {a} and {b}; "
            "the objective is not monotone along this hierarchy",
            left=a, right=b,
        )
    return np.maximum(values, 0.0)


def run_bipartial(objective: BipartialObjective, n: int | None = None,
                  initial_labels=None) -> MergeHistory:
    """Complete hierarchy by repeatedly merging the minimum-threshold pair.

    Parameters
    ----------
    objective : BipartialObjective
        Freshly constructed objective; it is mutated by the run.
    n : int, optional
        Expected number of atoms, checked against the objective.
    initial_labels : array-like, optional
        Object-to-atom map stored in the history (defaults to identity).

    Notes
    -----
    Pairs with ``dS = dD = 0`` (coincident objects) get threshold 0 and
    are therefore merged before everything else. Exact ties are broken by
    the lexicographically smallest ``(smaller id, larger id)`` pair.
    """
    L = objective.n_atoms
    if n is not None and n != L:
        raise ValueError(f"objective has {L} atoms, expected {n}")
    ids = np.arange(L)
    qs = [float(objective.qs_initial())]
    qd = [float(objective.qd_initial())]
    maximize = objective.orientation == "maximize"
    records = []
    for t in range(1, L):
        act = np.flatnonzero(objective.active)
        k = act.size
        iu = np.triu_indices(k, 1)
        dS_m, dD_m = objective.pair_deltas(act)
        dS = _checked(np.asarray(dS_m, dtype=float)[iu], "dS", act, iu, objective)
        dD = _checked(np.asarray(dD_m, dtype=float)[iu], "dD", act, iu, objective)
        tot = dS + dD
        with np.errstate(invalid="ignore", divide="ignore"):
            key = np.where(tot > 0, dD / tot, 0.0)
        cand = np.flatnonzero(key == key.min())
        if cand.size > 1:
            lo = np.minimum(ids[act[iu[0][cand]]], ids[act[iu[1][cand]]])
            hi = np.maximum(ids[act[iu[0][cand]]], ids[act[iu[1][cand]]])
            cand = cand[np.lexsort((hi, lo))]
        c = int(cand[0])
        a, b = int(act[iu[0][c]]), int(act[iu[1][c]])
        ds, dd = float(dS[c]), float(dD[c])
        if objective.mirror_r:
            r = ds / (ds + dd) if ds + dd > 0 else 1.0
        else:
            r = float(key[c])
        link = float(objective.link_value(a, b, ds, dd))
        left, right = sorted((int(ids[a]), int(ids[b])))
        size = int(objective.sizes[a] + objective.sizes[b])
        objective.on_merge(a, b)
        new_id = L + t - 1
        ids[min(a, b)] = new_id
        records.append(MergeRecord(t, left, right, new_id, size, link, r, ds, dd))
        if maximize:
            qs.append(qs[-1] + ds)
            qd.append(qd[-1] - dd)
        else:
            qs.append(qs[-1] - ds)
            qd.append(qd[-1] + dd)
    profile = ObjectiveProfile(np.array(qs), np.array(qd), objective.orientation)
    return MergeHistory(
        records=tuple(records),
        leaves=L,
        profile=profile,
        initial_labels=initial_labels,
        r_direction="decreasing" if objective.mirror_r else "increasing",
        method=objective.name,
    )


# ---------------------------------------------------------------------------
# Stop rule


@dataclass(frozen=True)
class StopDecision:
    selected_step: int
    rule: str
    r_sequence_monotone: bool

    def to_dict(self):
        return {
            "selected_step": self.selected_step,
            "rule": self.rule,
            "r_sequence_monotone": self.r_sequence_monotone,
        }


def r_monotone(history: MergeHistory) -> bool:
    """Whether thresholds move in the expected direction at every step."""
    r = history.r
    if r.size < 2:
        return True
    steps = np.diff(r)
    if history.r_direction == "increasing":
        return bool(np.all(steps >= -R_TOL))
    return bool(np.all(steps <= R_TOL))


def crossing_step(history: MergeHistory) -> int:
    """Number of leading mergers carried out by the time ``r`` reaches 1/2."""
    r = history.r
    ok = r <= 0.5 if history.r_direction == "increasing" else r >= 0.5
    return int(np.argmin(ok)) if not ok.all() else int(r.size)


def select_partition(history: MergeHistory, scores=None) -> tuple[Partition, StopDecision]:
    """Pick the level of the hierarchy to report as the clustering.

    With a monotone threshold sequence this is the level where ``r``
    crosses 1/2. Otherwise the level with the best objective value at
    ``r = 1/2`` (earliest on ties) is taken, which agrees with the crossing
    rule whenever the sequence is monotone.

    Parameters
    ----------
    history : MergeHistory
    scores : array-like, optional
        Per-level objective values to use instead of ``profile.q_half``
        in the fallback; optimized in the profile's orientation.
    """
    monotone = r_monotone(history)
    if monotone:
        t = crossing_step(history)
        rule = "r_crossing"
    else:
        if history.profile is None:
            raise ValueError("history has no objective profile to select from")
        q = history.profile.q_half if scores is None else np.asarray(scores, dtype=float)
        if q.size != len(history.records) + 1:
            raise ValueError(f"expected {len(history.records) + 1} level scores, got {q.size}")
        t = int(np.argmax(q) if history.profile.orientation == "maximize" else np.argmin(q))
        rule = "global_argmax_at_half"
    return partition_at_step(history, t), StopDecision(t, rule, monotone)


# ---------------------------------------------------------------------------
# Envelope diagnostics


@dataclass
class EnvelopeReport:
    """Gradient and threshold-order diagnostics for a history.

    ``gradient[t]`` is ``qs_t - qd_t``, the slope in ``r`` of the objective
    line of level ``t``. ``gradient_ok[t]`` (for ``t >= 1``) says whether the
    slope moved in the direction required for a convex (maximize) or concave
    (minimize) piecewise-linear envelope. ``inversions`` lists steps whose
    threshold moved against ``history.r_direction``.
    """

    gradient: np.ndarray
    gradient_ok: np.ndarray
    inversions: list = field(default_factory=list)
    r_direction: str = "increasing"

    @property
    def envelope_monotone(self) -> bool:
        return bool(np.all(self.gradient_ok))

    @property
    def inhomogeneous(self) -> bool:
        return bool(self.inversions)

    def to_dict(self):
        return {
            "gradient": [float(g) for g in self.gradient],
            "gradient_ok": [bool(x) for x in self.gradient_ok],
            "envelope_monotone": self.envelope_monotone,
            "r_direction": self.r_direction,
            "inversions": list(self.inversions),
        }


def envelope_report(history: MergeHistory) -> EnvelopeReport:
    prof = history.profile
    g = prof.qs - prof.qd
    dg = np.diff(g)
    slack = _NEG_TOL * max(float(np.max(np.abs(g))), 1.0)
    ok = dg >= -slack if prof.orientation == "maximize" else dg <= slack
    r = history.r
    dr = np.diff(r)
    bad = dr < -R_TOL if history.r_direction == "increasing" else dr > R_TOL
    inversions = [int(t) + 2 for t in np.flatnonzero(bad)]
    return EnvelopeReport(g, np.concatenate([[True], ok]), inversions, history.r_direction)
