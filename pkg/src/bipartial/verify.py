"""Cross-checks of merger histories against the exhaustive oracle."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import DataTable, DissimilarityStore, MergeHistory, partition_at_step
from .engine import run_bipartial
from .exceptions import IncomparablePartitionsError, InputError
from .objectives import make_objective
from .oracle import DEFAULT_MAX_N, ObjectiveSpec, evaluate, oracle_best, oracle_switch_point

TOL = 1e-9


@dataclass
class VerifyReport:
    """Findings of :func:`verify_history`.

    Each list holds human-readable descriptions of individual breaches;
    the gap fields are ``None`` when the instance was too large for the
    oracle.
    """

    n_records: int
    switch_point_mismatches: list = field(default_factory=list)
    profile_mismatches: list = field(default_factory=list)
    monotonicity_violations: list = field(default_factory=list)
    oracle_value: float | None = None
    engine_value: float | None = None
    gap: float | None = None
    relative_gap: float | None = None

    @property
    def ok(self) -> bool:
        return not (self.switch_point_mismatches or self.profile_mismatches
                    or self.monotonicity_violations or (self.gap is not None and self.gap < -TOL))

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "n_records": self.n_records,
            "switch_point_mismatches": list(self.switch_point_mismatches),
            "profile_mismatches": list(self.profile_mismatches),
            "monotonicity_violations": list(self.monotonicity_violations),
            "oracle_value_at_half": self.oracle_value,
            "engine_best_at_half": self.engine_value,
            "gap": self.gap,
            "relative_gap": self.relative_gap,
        }


def _close(a, b, tol=TOL):
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def verify_history(history: MergeHistory, spec: ObjectiveSpec, store: DissimilarityStore,
                   data: DataTable | None = None, max_n: int = DEFAULT_MAX_N) -> VerifyReport:
    """Check a history record by record against from-scratch evaluation.

    * every ``r_t`` must equal the oracle switch point between the levels
      before and after merger ``t`` (and lie in ``[0, 1]``, with
      non-negative deltas);
    * the stored profile must match the recomputed objective components;
    * the cohesion term must improve and the separation term deteriorate
      along the history;
    * for ``n <= max_n`` the best level at ``r = 1/2`` is compared with the
      global optimum; a negative gap is a violation.
    """
    if history.n_objects != store.n:
        raise InputError(f"history covers {history.n_objects} objects, data has {store.n}")
    rep = VerifyReport(len(history.records))
    maximize = spec.orientation == "maximize"
    levels = [partition_at_step(history, t) for t in range(len(history.records) + 1)]
    values = [evaluate(spec, store, P.labels, data) for P in levels]
    for k, rec in enumerate(history.records):
        t = k + 1
        if not 0.0 <= rec.r <= 1.0:
            rep.monotonicity_violations.append(f"t={t}: r_t={rec.r!r} outside [0, 1]")
        if rec.delta_qs < -TOL or rec.delta_qd < -TOL:
            rep.monotonicity_violations.append(
                f"t={t}: negative delta (delta_qs={rec.delta_qs!r}, delta_qd={rec.delta_qd!r})")
        try:
            expected = oracle_switch_point(spec, store, levels[t], levels[t - 1], data)
        except IncomparablePartitionsError as exc:
            rep.switch_point_mismatches.append(f"t={t}: {exc}")
            continue
        if not abs(expected - rec.r) <= TOL:
            rep.switch_point_mismatches.append(f"t={t}: r_t={rec.r!r}, oracle={expected!r}")
    prof = history.profile
    if prof is not None:
        for t, (qs, qd) in enumerate(values):
            if not (_close(qs, prof.qs[t]) and _close(qd, prof.qd[t])):
                rep.profile_mismatches.append(
                    f"t={t}: profile ({prof.qs[t]!r}, {prof.qd[t]!r}) vs recomputed ({qs!r}, {qd!r})")
    qs = np.array([v[0] for v in values])
    qd = np.array([v[1] for v in values])
    scale = TOL * max(1.0, float(np.abs(qs).max()), float(np.abs(qd).max()))
    if maximize:
        bad_s, bad_d = np.diff(qs) < -scale, np.diff(qd) > scale
    else:
        bad_s, bad_d = np.diff(qs) > scale, np.diff(qd) < -scale
    for k in np.flatnonzero(bad_s):
        rep.monotonicity_violations.append(f"t={k + 1}: cohesion term moved the wrong way")
    for k in np.flatnonzero(bad_d):
        rep.monotonicity_violations.append(f"t={k + 1}: separation term moved the wrong way")
    if store.n <= max_n:
        half = 0.5 * qs + 0.5 * qd
        engine = float(half.max() if maximize else half.min())
        _, best = oracle_best(spec, store, 0.5, data, max_n=max_n)
        gap = best - engine if maximize else engine - best
        rep.oracle_value, rep.engine_value, rep.gap = best, engine, gap
        rep.relative_gap = gap / abs(best) if best != 0 else 0.0
    return rep


def run_and_verify(spec: ObjectiveSpec, store: DissimilarityStore, data: DataTable | None = None,
                   max_n: int = DEFAULT_MAX_N) -> tuple[MergeHistory, VerifyReport]:
    obj = make_objective(spec.name, store, data, None, spec.facility_cost, spec.facility_scale)
    history = run_bipartial(obj)
    return history, verify_history(history, spec, store, data, max_n)


def gap_study(spec: ObjectiveSpec, make_instance, seeds, max_n: int = DEFAULT_MAX_N) -> dict:
    """Run :func:`run_and_verify` on ``make_instance(seed) -> (store, data)`` for each seed.

    Returns per-seed rows and summary statistics of the relative gap.
    """
    rows = []
    for seed in seeds:
        store, data = make_instance(seed)
        _, rep = run_and_verify(spec, store, data, max_n)
        rows.append({"seed": int(seed), "oracle": rep.oracle_value, "engine": rep.engine_value,
                     "gap": rep.gap, "relative_gap": rep.relative_gap, "ok": rep.ok})
    rel = np.array([r["relative_gap"] for r in rows], dtype=float)
    return {
        "rows": rows,
        "instances": len(rows),
        "zero_gap": int(np.sum(np.abs(rel) <= TOL)),
        "negative_gap": int(np.sum(rel < -TOL)),
        "median_relative_gap": float(np.median(rel)) if rel.size else 0.0,
        "max_relative_gap": float(rel.max()) if rel.size else 0.0,
        "all_ok": all(r["ok"] for r in rows),
    }
