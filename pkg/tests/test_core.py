import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from properpl.core import (CandidateSet, Dataset, DiscreteDistribution, LabelSpace,
                           candidate_set_from_members, complement, enumerate_candidate_sets,
                           masks_to_matrix, matrix_to_masks, popcount, read_dataset,
                           write_dataset)
from properpl.errors import (CapExceeded, EmptySet, FormatError, FullSet, OutOfRange,
                             TruncatedFile, UsageError)


class TestLabelSpace:
    def test_rejects_two_classes(self):
        with pytest.raises(UsageError):
            LabelSpace(2)

    def test_rejects_more_than_mask_width(self):
        with pytest.raises(UsageError):
            LabelSpace(65)

    def test_full_mask(self):
        assert LabelSpace(4).full_mask == 0b1111


class TestCandidateSet:
    def test_members_are_one_indexed(self, space3):
        s = candidate_set_from_members([1, 3], space3)
        assert s.mask == 0b101
        assert s.members == (1, 3)
        assert 3 in s and 2 not in s
        assert len(s) == 2

    def test_empty_and_full_rejected(self, space3):
        with pytest.raises(EmptySet):
            candidate_set_from_members([], space3)
        with pytest.raises(FullSet):
            candidate_set_from_members([1, 2, 3], space3)
        with pytest.raises(OutOfRange):
            candidate_set_from_members([4], space3)
        with pytest.raises(OutOfRange):
            CandidateSet(0b1000, 3)

    @given(st.integers(3, 12).flatmap(
        lambda K: st.tuples(st.just(K), st.integers(1, (1 << K) - 2))))
    def test_complement_involution(self, case):
        K, mask = case
        s = CandidateSet(mask, K)
        c = complement(s)
        assert complement(c) == s
        assert len(s) + len(c) == K
        assert set(s.members).isdisjoint(c.members)

    @given(st.integers(3, 10).flatmap(
        lambda K: st.tuples(st.just(K), st.sets(st.integers(1, K), min_size=1, max_size=K - 1))))
    def test_members_round_trip(self, case):
        K, members = case
        s = candidate_set_from_members(sorted(members), LabelSpace(K))
        assert set(s.members) == members
        assert CandidateSet(s.mask, K) == s


class TestEnumeration:
    def test_k10_containing_y_yields_511_sets(self):
        sets = list(enumerate_candidate_sets(LabelSpace(10), containing=4))
        assert len(sets) == 2 ** 9 - 1 == 511
        assert all(4 in s for s in sets)
        assert len({s.mask for s in sets}) == 511

    def test_all_sets_ordered_by_size_then_lexicographic(self):
        sets = list(enumerate_candidate_sets(LabelSpace(4)))
        assert len(sets) == 2 ** 4 - 2
        keys = [(len(s), s.members) for s in sets]
        assert keys == sorted(keys)

    def test_size_filter(self):
        sets = list(enumerate_candidate_sets(LabelSpace(6), size=2))
        assert len(sets) == math.comb(6, 2)

    def test_cap(self):
        with pytest.raises(CapExceeded):
            next(enumerate_candidate_sets(LabelSpace(21)))


class TestMatrices:
    @given(st.lists(st.integers(1, 2 ** 7 - 2), min_size=1, max_size=20))
    def test_mask_matrix_round_trip(self, masks):
        arr = np.array(masks, dtype=np.uint64)
        m = masks_to_matrix(arr, 7)
        assert m.shape == (len(masks), 7)
        assert np.array_equal(matrix_to_masks(m), arr)
        assert list(m.sum(axis=1)) == [popcount(v) for v in masks]


class TestDataset:
    def test_true_label_must_be_candidate(self, space3):
        with pytest.raises(UsageError):
            Dataset(np.zeros((1, 2)), [0b010], [1], space3)

    def test_rejects_full_mask(self, space3):
        with pytest.raises(UsageError):
            Dataset(np.zeros((1, 2)), [0b111], None, space3)

    def test_arrays_read_only(self, space3):
        ds = Dataset.fully_labeled(np.zeros((2, 2)), [1, 3], space3)
        with pytest.raises(ValueError):
            ds.masks[0] = 3

    def test_example_view(self, space3):
        ds = Dataset(np.ones((2, 2)), [0b011, 0b110], [2, 3], space3)
        ex = ds[1]
        assert ex.true_label == 3
        assert ex.candidates.members == (2, 3)
        assert list(ds.set_sizes()) == [2, 2]
        assert ds.strip_labels().labels is None

    @pytest.mark.parametrize("inline", [True, False])
    def test_file_round_trip_is_exact(self, tmp_path, inline):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((25, 4)) * 1e3
        labels = rng.integers(1, 6, 25)
        masks = np.left_shift(np.uint64(1), (labels - 1).astype(np.uint64)) | np.uint64(1)
        ds = Dataset(x, masks, labels, LabelSpace(5), {"note": "x"})
        path = tmp_path / "d.ppl"
        write_dataset(path, ds, inline=inline)
        back = read_dataset(path)
        assert np.array_equal(back.features, ds.features)
        assert np.array_equal(back.masks, ds.masks)
        assert np.array_equal(back.labels, ds.labels)
        assert back.provenance == {"note": "x"}

    def test_unlabelled_round_trip(self, tmp_path, space3):
        ds = Dataset(np.zeros((2, 1)), [1, 6], None, space3)
        write_dataset(tmp_path / "u.ppl", ds)
        assert read_dataset(tmp_path / "u.ppl").labels is None

    def test_bad_header(self, tmp_path):
        p = tmp_path / "bad.ppl"
        p.write_text("not json\n")
        with pytest.raises(FormatError, match=":1:"):
            read_dataset(p)

    def test_truncated_file(self, tmp_path, space3):
        ds = Dataset.fully_labeled(np.zeros((3, 1)), [1, 2, 3], space3)
        p = tmp_path / "t.ppl"
        write_dataset(p, ds)
        lines = p.read_text().splitlines()
        p.write_text("\n".join(lines[:-1]) + "\n")
        with pytest.raises(TruncatedFile):
            read_dataset(p)

    def test_bad_field_count_reports_line(self, tmp_path, space3):
        ds = Dataset.fully_labeled(np.zeros((2, 1)), [1, 2], space3)
        p = tmp_path / "f.ppl"
        write_dataset(p, ds)
        lines = p.read_text().splitlines()
        lines[2] = lines[2] + ",9"
        p.write_text("\n".join(lines) + "\n")
        with pytest.raises(FormatError, match=":3:"):
            read_dataset(p)


class TestDiscreteDistribution:
    def test_mean_and_lookup(self):
        d = DiscreteDistribution.from_pairs([(1, 0.25), (3, 0.75)])
        assert d.mean() == 2.5
        assert d[2] == 0.0

    def test_must_sum_to_one(self):
        with pytest.raises(UsageError):
            DiscreteDistribution((1, 2), (0.5, 0.4))
