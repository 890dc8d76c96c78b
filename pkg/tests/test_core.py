import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bipartial.core import (
    DataTable,
    DissimilarityStore,
    MergeHistory,
    MergeRecord,
    ObjectiveProfile,
    Partition,
    ProximityTransform,
    apply_transform,
    build_store,
    canonical_labels,
    compute_distances,
    partition_at_step,
    read_data_csv,
    read_matrix_csv,
    write_data_csv,
)
from bipartial.exceptions import ConfigurationError, InputError

from conftest import line


def store_from_offdiag(values):
    """3x3 store with pair distances (d01, d02, d12)."""
    a, b, c = values
    return DissimilarityStore(np.array([[0, a, b], [a, 0, c], [b, c, 0]], dtype=float))


class TestComputeDistances:
    def test_euclidean_1d(self):
        assert compute_distances(line(0, 3)).d[0, 1] == 3.0

    def test_identical_points(self):
        assert compute_distances(line(2, 2)).d[0, 1] == 0.0

    def test_manhattan(self):
        data = DataTable(np.array([[0.0, 0.0], [1.0, 2.0]]))
        assert compute_distances(data, "manhattan").d[0, 1] == 3.0

    def test_squared_euclidean(self):
        data = DataTable(np.array([[0.0, 0.0], [1.0, 2.0]]))
        assert compute_distances(data, "squared_euclidean").d[0, 1] == pytest.approx(5.0)

    def test_non_finite_rejected(self):
        with pytest.raises(InputError, match="non-finite"):
            DataTable(np.array([[0.0], [np.nan]]))

    def test_unknown_metric(self):
        with pytest.raises(ConfigurationError):
            compute_distances(line(0, 1), "cosine")

    def test_symmetric_zero_diagonal(self, rng):
        d = compute_distances(DataTable(rng.normal(size=(9, 3)))).d
        assert np.array_equal(d, d.T)
        assert np.all(np.diag(d) == 0)


class TestTransforms:
    def test_average_preserving(self):
        store = apply_transform(store_from_offdiag((3, 5, 4)), ProximityTransform())
        assert (store.s[0, 1], store.s[0, 2], store.s[1, 2]) == (5.0, 3.0, 4.0)
        assert store.clamped == 0

    def test_max_complement_boundary(self):
        store = apply_transform(store_from_offdiag((10, 2, 4)), ProximityTransform("max_complement"))
        assert store.s[0, 1] == 0.0
        assert store.s[0, 2] == 8.0

    def test_average_preserving_clamps(self):
        # mean 4, so 2*mean = 8 < 10
        store = apply_transform(store_from_offdiag((10, 1, 1)), ProximityTransform())
        assert store.s[0, 1] == 0.0
        assert store.clamped >= 1

    def test_affine_below_max_rejected(self):
        with pytest.raises(ConfigurationError):
            apply_transform(store_from_offdiag((3, 5, 4)), ProximityTransform("affine", c=4.0))

    def test_affine_needs_one_parameter(self):
        with pytest.raises(ConfigurationError):
            ProximityTransform("affine")
        with pytest.raises(ConfigurationError):
            ProximityTransform("affine", c=3.0, ratio=2.0)

    def test_diagonal_stays_zero(self):
        store = apply_transform(store_from_offdiag((3, 5, 4)), ProximityTransform("affine", c=9.0))
        assert np.all(np.diag(store.s) == 0)

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, 3, elements=st.floats(0.0, 100.0)), st.floats(1.0, 5.0))
    def test_affine_sum_is_constant(self, d, ratio):
        store = apply_transform(store_from_offdiag(d), ProximityTransform("affine", ratio=ratio))
        iu = np.triu_indices(3, 1)
        c = ratio * d.max()
        assert np.all(store.s[iu] + store.d[iu] == pytest.approx(c, abs=1e-9))

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.int64, (6, 2), elements=st.integers(-50, 50)))
    def test_order_reversing_on_unclamped_pairs(self, X):
        store = build_store(DataTable(X.astype(float)), "manhattan")
        iu = np.triu_indices(6, 1)
        d, s = store.d[iu], store.s[iu]
        keep = s > 0
        d, s = d[keep], s[keep]
        for i in range(d.size):
            for j in range(d.size):
                if d[i] < d[j]:
                    assert s[i] > s[j]


class TestPartition:
    def test_canonical_relabelling(self):
        assert list(canonical_labels([5, 5, 2, 7, 2])) == [0, 0, 1, 2, 1]

    def test_equality_ignores_label_names(self):
        assert Partition([1, 1, 0]) == Partition([0, 0, 1])
        assert hash(Partition([1, 1, 0])) == hash(Partition([0, 0, 1]))

    def test_blocks(self):
        assert Partition([0, 1, 0, 2]).blocks() == [[0, 2], [1], [3]]

    def test_counts(self):
        P = Partition([3, 3, 1])
        assert (P.n, P.p) == (3, 2)


def chain_history():
    """n = 4: merge (0,1) then (2,3) then the two pairs."""
    recs = (
        MergeRecord(1, 0, 1, 4, 2, 1.0),
        MergeRecord(2, 2, 3, 5, 2, 1.0),
        MergeRecord(3, 4, 5, 6, 4, 5.0),
    )
    return MergeHistory(recs, 4)


class TestPartitionAtStep:
    def test_start_is_singletons(self):
        assert partition_at_step(chain_history(), 0) == Partition.singletons(4)

    def test_end_is_one_cluster(self):
        assert partition_at_step(chain_history(), 3).p == 1

    def test_after_first_merge(self):
        assert partition_at_step(chain_history(), 1) == Partition([0, 0, 1, 2])

    def test_p_equals_n_minus_t(self):
        h = chain_history()
        assert [partition_at_step(h, t).p for t in range(4)] == [4, 3, 2, 1]

    def test_out_of_range(self):
        with pytest.raises(InputError):
            partition_at_step(chain_history(), 4)

    def test_record_count_checked(self):
        with pytest.raises(InputError):
            MergeHistory(chain_history().records[:2], 4)

    def test_steps_must_be_consecutive(self):
        recs = list(chain_history().records)
        recs[1] = MergeRecord(5, 2, 3, 5, 2, 1.0)
        with pytest.raises(InputError):
            MergeHistory(tuple(recs), 4)


def test_profile_q_half():
    prof = ObjectiveProfile(np.array([0.0, 2.0]), np.array([4.0, 1.0]))
    assert list(prof.q_half) == [2.0, 1.5]


class TestCsv:
    def test_roundtrip_with_ids(self, tmp_path, rng):
        data = DataTable(rng.normal(size=(5, 2)))
        write_data_csv(tmp_path / "d.csv", data)
        back = read_data_csv(tmp_path / "d.csv")
        assert np.array_equal(back.values, data.values)
        assert back.object_ids == data.object_ids

    def test_no_header_numeric(self, tmp_path):
        (tmp_path / "d.csv").write_text("1,2\n3,4\n")
        data = read_data_csv(tmp_path / "d.csv")
        assert data.values.shape == (2, 2)
        assert data.object_ids == ("0", "1")

    def test_text_ids_without_header(self, tmp_path):
        (tmp_path / "d.csv").write_text("a,1\nb,2\n")
        assert read_data_csv(tmp_path / "d.csv").object_ids == ("a", "b")

    def test_ragged_rows(self, tmp_path):
        (tmp_path / "d.csv").write_text("1,2\n3\n")
        with pytest.raises(InputError, match="row 2"):
            read_data_csv(tmp_path / "d.csv")

    def test_matrix_symmetrized(self, tmp_path):
        (tmp_path / "m.csv").write_text("0,1,2\n1.0000000000001,0,3\n2,3,0\n")
        store, ids = read_matrix_csv(tmp_path / "m.csv")
        assert store.d[0, 1] == store.d[1, 0]
        assert ids == ("0", "1", "2")

    def test_matrix_asymmetry_rejected(self, tmp_path):
        (tmp_path / "m.csv").write_text("0,1\n1.1,0\n")
        with pytest.raises(InputError, match="symmetric"):
            read_matrix_csv(tmp_path / "m.csv")

    def test_matrix_not_square(self, tmp_path):
        (tmp_path / "m.csv").write_text("0,1,2\n1,0,3\n")
        with pytest.raises(InputError, match="square"):
            read_matrix_csv(tmp_path / "m.csv")
