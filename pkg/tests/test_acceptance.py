"""Acceptance suite: one printed PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v`` to see the lines inline.
"""

import time

import numpy as np
import pytest
from scipy.sparse.csgraph import minimum_spanning_tree

from bipartial import cli
from bipartial.core import (
    DataTable,
    ProximityTransform,
    build_store,
    compute_distances,
    partition_at_step,
)
from bipartial.datasets import four_tight_pairs, make_nested_blobs, single_gaussian
from bipartial.engine import envelope_report, run_bipartial
from bipartial.kmeans import (
    kmeans_classic,
    kmeans_sweep,
    level_curve,
    resolve_offset,
    run_bipartial_kmeans,
)
from bipartial.linkage import run_linkage
from bipartial.objectives import AdditiveObjective, FacilityObjective, make_objective, run_facility
from bipartial.oracle import ObjectiveSpec, evaluate, oracle_switch_point
from bipartial.verify import gap_study

FAMILIES = ("additive", "minmax", "avg_additive", "facility")
AFFINE = ProximityTransform("affine", ratio=2.0)


@pytest.fixture
def report(capsys):
    def emit(criterion, ok, detail):
        with capsys.disabled():
            print(f"\n[acceptance {criterion}] {'PASS' if ok else 'FAIL'}: {detail}")
        return ok

    return emit


def uniform(n, seed, dim=2):
    return DataTable(np.random.default_rng(seed).uniform(size=(n, dim)))


def facility_for(store, data):
    return FacilityObjective(store, data, cost="centroid", scale=4.0)


def build(name, store, data):
    return facility_for(store, data) if name == "facility" else make_objective(name, store)


def spec_for(name):
    return ObjectiveSpec(name, facility_cost="centroid", facility_scale=4.0)


def test_c1_upgma_equivalence(report):
    start = time.perf_counter()
    matches = 0
    for seed in range(200):
        store = build_store(uniform(20, seed), transform=AFFINE)
        ours = [(r.left, r.right) for r in run_bipartial(AdditiveObjective(store)).records]
        ref = [(r.left, r.right) for r in run_linkage(store, "upgma").records]
        matches += ours == ref
    elapsed = time.perf_counter() - start
    ok = matches == 200 and elapsed < 10.0
    report(1, ok, f"UPGMA merge sequence identical on {matches}/200 datasets (n=20) in {elapsed:.2f} s")
    assert ok


def test_c2_oracle_switch_points(report):
    records = agree = 0
    worst = 0.0
    for k in range(100):
        n = 3 + k % 6
        data = uniform(n, 1000 + k)
        store = build_store(data)
        for name in FAMILIES:
            h = run_bipartial(build(name, store, data))
            spec = spec_for(name)
            for t, rec in enumerate(h.records, start=1):
                r = oracle_switch_point(spec, store, partition_at_step(h, t), partition_at_step(h, t - 1), data)
                err = abs(r - rec.r)
                worst = max(worst, err)
                records += 1
                agree += err <= 1e-9
    ok = agree == records
    report(2, ok, f"{agree}/{records} recorded r_t match the oracle (4 objectives, 100 instances, n=3..8); "
                  f"max error {worst:.1e}")
    assert ok


def _monotone_violations(qs, qd, maximize):
    scale = 1e-9 * max(1.0, np.abs(qs).max(), np.abs(qd).max())
    if maximize:
        return int(np.sum(np.diff(qs) < -scale) + np.sum(np.diff(qd) > scale))
    return int(np.sum(np.diff(qs) > scale) + np.sum(np.diff(qd) < -scale))


def test_c3a_monotonicity_engine_families(report):
    runs = violations = 0
    for seed in range(40):
        data = uniform(20, 2000 + seed)
        store = build_store(data)
        for name in FAMILIES:
            h = run_bipartial(build(name, store, data))
            spec = spec_for(name)
            vals = np.array([evaluate(spec, store, partition_at_step(h, t).labels, data)
                             for t in range(len(h.records) + 1)])
            violations += _monotone_violations(vals[:, 0], vals[:, 1], spec.orientation == "maximize")
            violations += sum(not (0.0 <= r.r <= 1.0) or r.delta_qs < 0 or r.delta_qd < 0 for r in h.records)
            runs += 1
    ok = violations == 0
    report("3a", ok, f"{violations} monotonicity / range violations over {runs} runs of the four "
                     f"objective families (exact recomputation, n=20)")
    assert ok


def _kmeans_runs():
    for seed in range(30):
        for metric in ("squared_euclidean", "manhattan"):
            yield f"uniform seed {seed} {metric}", uniform(25, 3000 + seed), metric
    for metric in ("squared_euclidean", "manhattan"):
        yield f"nested blobs {metric}", make_nested_blobs(), metric
        yield f"four pairs {metric}", four_tight_pairs(), metric


def test_c3b_kmeans_merger_deltas(report):
    runs = violations = 0
    for _, data, metric in _kmeans_runs():
        h = run_bipartial_kmeans(data, metric=metric)
        curve = level_curve(data, h, metric, resolve_offset(data, metric, ProximityTransform()))
        scale = 1e-9 * max(1.0, curve[:, 1].max())
        violations += int(np.sum(np.diff(curve[:, 1]) < -scale))
        violations += sum(not (0.0 <= r.r <= 1.0) or r.delta_qs < 0 or r.delta_qd < 0 for r in h.records)
        runs += 1
    ok = violations == 0
    report("3b", ok, f"{violations} violations over {runs} k-means merger runs "
                     f"(thresholds in [0,1], dS >= 0, dD >= 0, exact Q_D non-decreasing)")
    assert ok


@pytest.mark.xfail(strict=True, reason="exact outer similarity can rise when a merged centre moves "
                                       "closer to objects of a third cluster; see the decisions ledger")
def test_c3c_kmeans_merger_exact_outer_similarity(report):
    rises = []
    runs = 0
    for label, data, metric in _kmeans_runs():
        h = run_bipartial_kmeans(data, metric=metric)
        curve = level_curve(data, h, metric, resolve_offset(data, metric, ProximityTransform()))
        scale = 1e-9 * max(1.0, curve[:, 2].max())
        if np.any(np.diff(curve[:, 2]) > scale):
            rises.append(label)
        runs += 1
    ok = not rises
    report("3c", ok, f"exact Q^S non-increasing along the k-means merger on {runs - len(rises)}/{runs} runs"
                     + (f"; rises in: {', '.join(rises)}" if rises else ""))
    assert ok


def _two_blobs(seed, n=8):
    rng = np.random.default_rng(seed)
    h = n // 2
    data = DataTable(np.vstack([rng.normal(0.0, 1.0, (h, 2)), rng.normal(10.0, 1.0, (n - h, 2))]))
    return build_store(data), data


def test_c4_suboptimality_gap(report):
    spec = ObjectiveSpec("additive")
    blobs = gap_study(spec, _two_blobs, range(100), max_n=8)
    unif = gap_study(spec, lambda s: (build_store(uniform(8, 4000 + s)), None), range(100), max_n=8)
    negative = blobs["negative_gap"] + unif["negative_gap"]
    majority = blobs["zero_gap"] > 50
    ok = negative == 0 and majority and blobs["all_ok"] and unif["all_ok"]
    report(4, ok, f"negative gaps: {negative}; two blobs: zero gap {blobs['zero_gap']}/100, "
                  f"median/max relative gap {blobs['median_relative_gap']:.3g}/{blobs['max_relative_gap']:.3g}; "
                  f"uniform: zero gap {unif['zero_gap']}/100, median/max "
                  f"{unif['median_relative_gap']:.3g}/{unif['max_relative_gap']:.3g}")
    assert ok


def test_c5_facility_descent(report):
    problems = []
    spec = ObjectiveSpec("facility")
    for seed in range(30):
        data = DataTable(3.0 * uniform(15, 5000 + seed).values)
        store = build_store(data)
        P, h = run_facility(FacilityObjective(store, data))
        stop = h.leaves - P.p
        q = [sum(evaluate(spec, store, partition_at_step(h, t).labels, data)) for t in range(stop + 1)]
        if any(b >= a for a, b in zip(q, q[1:])):
            problems.append(f"seed {seed}: non-decreasing step")
        final = q[-1]
        for a in range(P.p):
            for b in range(a + 1, P.p):
                lab = np.where(P.labels == b, a, P.labels)
                if sum(evaluate(spec, store, lab, data)) < final:
                    problems.append(f"seed {seed}: improving pair left")
    fixture = DataTable(np.array([[0.0], [3.0], [7.0], [12.0], [20.0]]))
    P, _ = run_facility(FacilityObjective(build_store(fixture), fixture))
    q_fixture = sum(evaluate(spec, build_store(fixture), P.labels, fixture))
    ok = not problems and P.p == 5 and q_fixture == 5.0
    report(5, ok, f"30 random runs strictly descend with no improving pair left ({len(problems)} problems); "
                  f"all-costs>=1 fixture gives p={P.p}, Q={q_fixture}")
    assert ok


def test_c6_kmeans_contract_and_mst(report):
    trace_bad = 0
    runs = 0
    for seed in range(20):
        for metric in ("squared_euclidean", "manhattan"):
            for seeding in ("random", "farthest_point"):
                m = kmeans_classic(uniform(40, 6000 + seed), 6, seeding, restarts=3, metric=metric, seed=seed)
                tr = np.array(m.qd_trace)
                trace_bad += int(np.any(np.diff(tr) > 1e-12 * tr[0]))
                runs += 1
    full = kmeans_classic(uniform(12, 7), 12, restarts=2).qd
    mst_bad = 0
    rng = np.random.default_rng(6)
    for k in range(50):
        n = int(rng.integers(2, 51))
        store = compute_distances(uniform(n, 7000 + k))
        merges = np.sort(run_linkage(store, "single").link_values)
        edges = np.sort(minimum_spanning_tree(store.d).data)
        mst_bad += not (merges.size == edges.size and np.allclose(merges, edges, rtol=1e-12, atol=0))
    ok = trace_bad == 0 and full == 0.0 and mst_bad == 0
    report(6, ok, f"Q_D trace non-increasing on {runs - trace_bad}/{runs} runs; p=n gives Q_D={full}; "
                  f"single-linkage heights equal MST weights on {50 - mst_bad}/50 instances")
    assert ok


def test_c7_nested_blob_sweep(report):
    start = time.perf_counter()
    sw = kmeans_sweep(make_nested_blobs(), range(1, 11), restarts=20, seed=0, metric="manhattan")
    elapsed = time.perf_counter() - start
    decreasing = bool(np.all(np.diff(sw.qd) < 0))
    ok = decreasing and sw.qs[0] == 0.0 and sw.argmin_p == 4 and elapsed < 30.0
    report(7, ok, f"argmin_p Q_D^S = {sw.argmin_p}; Q_D strictly decreasing: {decreasing}; "
                  f"Q^S(1) = {sw.qs[0]}; {elapsed:.2f} s (manhattan, 20 restarts)")
    assert ok


def test_c8a_four_tight_pairs_flagged(report):
    h = run_bipartial_kmeans(four_tight_pairs())
    inv = envelope_report(h).inversions
    ok = len(inv) >= 1
    report("8a", ok, f"four tight pairs: k-means merger flags r inversions at steps {inv}")
    assert ok


@pytest.mark.xfail(strict=True, reason="a single Gaussian sample still yields r inversions under the "
                                       "k-means merger; see the decisions ledger")
def test_c8b_single_gaussian_not_flagged(report):
    h = run_bipartial_kmeans(single_gaussian())
    inv = envelope_report(h).inversions
    ok = not inv
    report("8b", ok, f"single Gaussian (n=40, seed 0): k-means merger flags inversions at steps {inv}")
    assert ok


def test_c9_byte_identical_reruns(report, tmp_path):
    data = tmp_path / "blobs.csv"
    assert cli.main(["gen", "--output", str(data)]) == 0
    configs = {
        "bipartial": [],
        "kmeans sweep": ["--algorithm", "kmeans", "--kmeans-metric", "manhattan", "--restarts", "8"],
        "hybrid": ["--algorithm", "hybrid", "--restarts", "8", "--seeding", "random"],
    }
    mismatched = []
    for label, extra in configs.items():
        outs = []
        for k, jobs in enumerate(("1", "1", "4")):
            out = tmp_path / f"{label.replace(' ', '_')}_{k}"
            assert cli.main(["cluster", "--input", str(data), "--out", str(out), "--n-jobs", jobs, *extra]) == 0
            outs.append(out)
        names = sorted(p.name for p in outs[0].iterdir())
        for other in outs[1:]:
            if sorted(p.name for p in other.iterdir()) != names:
                mismatched.append(f"{label}: file set")
            for name in names:
                if (outs[0] / name).read_bytes() != (other / name).read_bytes():
                    mismatched.append(f"{label}: {name}")
    ok = not mismatched
    report(9, ok, "artifacts byte-identical across reruns and --n-jobs 4 for "
                  f"{', '.join(configs)}" + (f"; differences: {mismatched}" if mismatched else ""))
    assert ok
