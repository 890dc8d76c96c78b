import numpy as np
import pytest

from bipartial.core import (
    DataTable,
    MergeHistory,
    MergeRecord,
    ObjectiveProfile,
    ProximityTransform,
    build_store,
    partition_at_step,
)
from bipartial.datasets import four_tight_pairs
from bipartial.engine import (
    BipartialObjective,
    crossing_step,
    envelope_report,
    merge_threshold,
    r_monotone,
    run_bipartial,
    select_partition,
)
from bipartial.exceptions import DegeneratePairError, ObjectiveContractError
from bipartial.linkage import run_linkage
from bipartial.objectives import AdditiveObjective, make_objective
from bipartial.oracle import ObjectiveSpec, oracle_switch_point

from conftest import line, random_store

AFFINE10 = ProximityTransform("affine", c=10.0)


class FixedObjective(BipartialObjective):
    """Two atoms with prescribed deltas."""

    def __init__(self, dS, dD):
        super().__init__([1, 1])
        self._d = (dS, dD)

    def qs_initial(self):
        return 0.0

    def qd_initial(self):
        return 1.0

    def deltas(self, a, b):
        return self._d

    def _merge(self, a, b):
        pass


class TestMergeThreshold:
    def test_singletons(self):
        assert merge_threshold(FixedObjective(6.0, 2.0), 0, 1) == 0.25

    def test_equal_deltas_give_half(self):
        assert merge_threshold(FixedObjective(3.0, 3.0), 0, 1) == 0.5

    def test_singleton_against_pair(self):
        # a=0, b=1, c=2: d_ab = 1, d_ac = 2, s = 10 - d
        store = build_store(line(0, 1, 2), transform=AFFINE10)
        obj = AdditiveObjective(store, labels=[0, 1, 1])
        assert obj.deltas(0, 1) == (17.0, 3.0)
        assert merge_threshold(obj, 0, 1) == pytest.approx(0.15)

    def test_degenerate_pair(self):
        with pytest.raises(DegeneratePairError):
            merge_threshold(FixedObjective(0.0, 0.0), 0, 1)

    def test_negative_delta(self):
        with pytest.raises(ObjectiveContractError):
            merge_threshold(FixedObjective(-1.0, 2.0), 0, 1)


class TestRunBipartial:
    def test_two_objects(self):
        h = run_bipartial(FixedObjective(6.0, 2.0))
        assert len(h.records) == 1
        assert h.records[0].r == 0.25

    def test_contract_violation_aborts(self):
        with pytest.raises(ObjectiveContractError):
            run_bipartial(FixedObjective(-1.0, 2.0))

    def test_two_groups(self):
        store = build_store(line(0, 1, 10, 11), transform=ProximityTransform("affine", ratio=2.0))
        h = run_bipartial(AdditiveObjective(store))
        first = {(r.left, r.right) for r in h.records[:2]}
        assert first == {(0, 1), (2, 3)}
        assert max(h.r[:2]) < h.r[2]

    def test_zero_distance_merged_first_at_zero(self):
        h = run_bipartial(AdditiveObjective(build_store(line(0, 3, 0, 7))))
        assert (h.records[0].left, h.records[0].right, h.records[0].r) == (0, 2, 0.0)

    def test_reconstruction_identity(self):
        store, _ = random_store(12, 3)
        h = run_bipartial(AdditiveObjective(store))
        dqs = np.array([r.delta_qs for r in h.records])
        dqd = np.array([r.delta_qd for r in h.records])
        assert np.allclose(h.profile.qs[1:], h.profile.qs[0] + np.cumsum(dqs), rtol=1e-9)
        assert np.allclose(h.profile.qd[1:], h.profile.qd[0] - np.cumsum(dqd), rtol=1e-9, atol=1e-9)

    @pytest.mark.parametrize("name", ["additive", "minmax", "avg_additive"])
    def test_separation_vanishes_at_the_top(self, name):
        store, _ = random_store(10, 4)
        obj = make_objective(name, store)
        qd0 = obj.qd_initial()
        h = run_bipartial(obj)
        assert h.profile.qd[0] == qd0
        assert h.profile.qd[-1] == pytest.approx(0.0, abs=1e-9 * qd0)

    def test_records_carry_threshold_identity(self):
        store, _ = random_store(9, 5)
        for rec in run_bipartial(AdditiveObjective(store)).records:
            assert rec.r == pytest.approx(rec.delta_qd / (rec.delta_qd + rec.delta_qs), rel=1e-12)
            assert 0.0 <= rec.r <= 1.0

    def test_each_merge_minimizes_threshold(self):
        store, _ = random_store(8, 6)
        h = run_bipartial(AdditiveObjective(store))
        members = h.cluster_members()
        live = set(range(8))
        for rec in h.records:
            best = min(
                (store.d[np.ix_(members[a], members[b])].sum()
                 / (store.d[np.ix_(members[a], members[b])].sum() + store.s[np.ix_(members[a], members[b])].sum()))
                for a in live for b in live if a < b
            )
            assert rec.r == pytest.approx(best, rel=1e-12)
            live -= {rec.left, rec.right}
            live.add(rec.new_cluster)

    def test_scale_invariance_of_merge_order(self):
        _, data = random_store(15, 7)
        tr = ProximityTransform("affine", ratio=1.5)
        h1 = run_bipartial(AdditiveObjective(build_store(data, transform=tr)))
        h2 = run_bipartial(AdditiveObjective(build_store(DataTable(data.values * 37.5), transform=tr)))
        assert [(r.left, r.right) for r in h1.records] == [(r.left, r.right) for r in h2.records]

    def test_affine_additive_is_upgma(self):
        store, _ = random_store(20, 8, transform=ProximityTransform("affine", ratio=2.0))
        ours = run_bipartial(AdditiveObjective(store))
        ref = run_linkage(store, "upgma")
        assert [(r.left, r.right) for r in ours.records] == [(r.left, r.right) for r in ref.records]


def synthetic_history(r, qs=None, qd=None):
    n = len(r) + 1
    recs, ids = [], list(range(n))
    for t, rt in enumerate(r, start=1):
        a, b = ids[0], ids[1]
        recs.append(MergeRecord(t, a, b, n + t - 1, t + 1, 0.0, rt, 1.0, 1.0))
        ids = [n + t - 1] + ids[2:]
    prof = None
    if qs is not None:
        prof = ObjectiveProfile(np.asarray(qs, float), np.asarray(qd, float))
    else:
        prof = ObjectiveProfile(np.arange(n, dtype=float), -np.arange(n, dtype=float))
    return MergeHistory(tuple(recs), n, prof)


class TestSelectPartition:
    def test_crossing_rule(self):
        P, dec = select_partition(synthetic_history([0.1, 0.2, 0.7]))
        assert (dec.selected_step, dec.rule, P.p) == (2, "r_crossing", 2)

    def test_all_above_half(self):
        P, dec = select_partition(synthetic_history([0.6, 0.7, 0.8]))
        assert dec.selected_step == 0
        assert P.p == 4

    def test_all_below_half(self):
        assert crossing_step(synthetic_history([0.1, 0.2, 0.3])) == 3

    def test_fallback_takes_profile_peak(self):
        h = synthetic_history([0.1, 0.6, 0.3, 0.8], qs=[0, 1, 2, 9, 10], qd=[10, 8, 6, 4, 0])
        P, dec = select_partition(h)
        assert not dec.r_sequence_monotone
        assert (dec.selected_step, dec.rule, P.p) == (3, "global_argmax_at_half", 2)

    def test_fallback_agrees_with_crossing_when_monotone(self):
        store, _ = random_store(10, 11, transform=ProximityTransform("affine", ratio=2.0))
        h = run_bipartial(AdditiveObjective(store))
        assert r_monotone(h)
        t = crossing_step(h)
        assert t == int(np.argmax(h.profile.q_half))

    def test_crossing_invariant(self):
        store, _ = random_store(12, 12)
        h = run_bipartial(AdditiveObjective(store))
        _, dec = select_partition(h)
        if dec.rule == "r_crossing" and dec.selected_step > 0:
            assert h.r[dec.selected_step - 1] <= 0.5
            if dec.selected_step < len(h.records):
                assert h.r[dec.selected_step] > 0.5

    def test_scores_override(self):
        h = synthetic_history([0.1, 0.6, 0.3, 0.8])
        _, dec = select_partition(h, scores=[0, 5, 1, 0, 0])
        assert dec.selected_step == 1


class TestEnvelope:
    def test_two_objects(self):
        rep = envelope_report(run_bipartial(FixedObjective(6.0, 2.0)))
        assert rep.envelope_monotone
        assert rep.inversions == []

    def test_final_gradient_positive(self):
        store, _ = random_store(9, 13)
        rep = envelope_report(run_bipartial(AdditiveObjective(store)))
        assert rep.gradient[-1] > 0

    def test_additive_gradient_increases(self):
        store, _ = random_store(9, 14)
        assert envelope_report(run_bipartial(AdditiveObjective(store))).envelope_monotone

    def test_inversion_flagged(self):
        rep = envelope_report(synthetic_history([0.1, 0.6, 0.3, 0.8]))
        assert rep.inversions == [3]
        assert rep.inhomogeneous

    def test_four_tight_pairs(self):
        data = four_tight_pairs()
        store = build_store(data)
        h = run_bipartial(make_objective("minmax", store))
        # thresholds recomputed from the oracle, independent of the engine state
        spec = ObjectiveSpec("minmax")
        r = [oracle_switch_point(spec, store, partition_at_step(h, t), partition_at_step(h, t - 1))
             for t in range(1, 8)]
        drops = [t + 2 for t in np.flatnonzero(np.diff(r) < 0)]
        assert drops
        assert envelope_report(h).inversions == drops

    def test_four_tight_pairs_additive_has_no_inversion(self):
        h = run_bipartial(AdditiveObjective(build_store(four_tight_pairs())))
        assert r_monotone(h)
        assert envelope_report(h).inversions == []
