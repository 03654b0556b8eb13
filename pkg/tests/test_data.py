import numpy as np
import pytest

from diggan.data import (
    dataset_views,
    filter_records,
    load_split,
    make_angle_pretrain_batch,
    n_views,
    sample_pair_batch,
    sample_triplet_batch,
    save_split,
    scan_dataset,
    split_train_test,
)
from diggan.errors import DatasetLayoutError, EmptyDatasetError, SamplingError
from diggan.synth import SynthDatasetSpec, generate_dataset


@pytest.fixture(scope="module")
def disk_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    spec = SynthDatasetSpec(n_subjects=4, views_deg=(0.0, 90.0),
                            seqs_per_view=1, frames_per_seq=10, seed=2)
    generate_dataset(spec, root, write_silhouettes=False)
    return root


class TestScan:
    def test_counts(self, disk_dataset):
        records = scan_dataset(disk_dataset)
        assert len(records) == 8

    def test_sorted(self, disk_dataset):
        records = scan_dataset(disk_dataset)
        keys = [(r.subject_id, r.view_index, r.seq_id) for r in records]
        assert keys == sorted(keys)

    def test_missing_layout(self, tmp_path):
        (tmp_path / "stuff").mkdir()
        with pytest.raises(DatasetLayoutError):
            scan_dataset(tmp_path)

    def test_layout_without_manifest(self, disk_dataset, tmp_path):
        import shutil

        root = tmp_path / "nomanifest"
        shutil.copytree(disk_dataset, root)
        (root / "manifest.csv").unlink()
        records = scan_dataset(root)
        assert len(records) == 8

    def test_empty_manifest(self, tmp_path):
        (tmp_path / "manifest.csv").write_text("subject_id,view_deg,seq_id,gei_path\n")
        with pytest.raises(EmptyDatasetError):
            scan_dataset(tmp_path)

    def test_lazy_loading(self, disk_dataset):
        records = scan_dataset(disk_dataset, lazy=True)
        assert records[0].gei is None
        px = records[0].pixels()
        assert px.shape == (128, 88)
        assert records[0].gei is not None

    def test_views_mapping(self, disk_dataset):
        records = scan_dataset(disk_dataset)
        assert dataset_views(records) == [0.0, 90.0]
        assert n_views(records) == 2


class TestSplit:
    def test_ten_subjects_half(self, toy_records):
        subjects = sorted({r.subject_id for r in toy_records})[:10]
        recs = filter_records(toy_records, subjects)
        split = split_train_test(recs, 0.5, seed=1)
        assert len(split.train_subjects) == 5
        assert len(split.test_subjects) == 5
        assert not split.train_subjects & split.test_subjects

    def test_deterministic(self, toy_records):
        a = split_train_test(toy_records, 0.5, seed=9)
        b = split_train_test(toy_records, 0.5, seed=9)
        assert a == b

    def test_partition_property(self, toy_records):
        split = split_train_test(toy_records, 0.3, seed=2)
        all_subjects = {r.subject_id for r in toy_records}
        assert split.train_subjects | split.test_subjects == all_subjects
        assert not split.train_subjects & split.test_subjects

    def test_single_subject_rejected(self, toy_records):
        one = filter_records(toy_records, [toy_records[0].subject_id])
        with pytest.raises(SamplingError):
            split_train_test(one, 0.5, seed=0)

    def test_round_trip_file(self, toy_records, tmp_path):
        split = split_train_test(toy_records, 0.5, seed=4)
        save_split(split, tmp_path / "split.csv")
        back = load_split(tmp_path / "split.csv", seed=4)
        assert back.train_subjects == split.train_subjects
        assert back.test_subjects == split.test_subjects


class TestPairSampler:
    def test_pairs_share_subject(self, toy_records):
        rng = np.random.default_rng(0)
        for s in sample_pair_batch(toy_records, 64, rng):
            assert s.source.subject_id == s.target.subject_id
            assert s.target_one_hot[s.target.view_index] == 1.0
            assert s.target_one_hot.sum() == 1.0

    def test_cross_view_preferred(self, toy_records):
        rng = np.random.default_rng(1)
        for s in sample_pair_batch(toy_records, 64, rng):
            assert s.source.view_index != s.target.view_index

    def test_forced_same_view_returns_identical_record(self, toy_records):
        rng = np.random.default_rng(2)
        for s in sample_pair_batch(toy_records, 32, rng, force_same_view=True):
            assert s.source is s.target
            assert s.target_one_hot[s.source.view_index] == 1.0

    def test_target_view_frequencies_uniform(self, toy_records):
        rng = np.random.default_rng(3)
        counts = np.zeros(4)
        for s in sample_pair_batch(toy_records, 1000, rng):
            counts[s.target.view_index] += 1
        freqs = counts / counts.sum()
        assert np.abs(freqs - 0.25).max() <= 0.05

    def test_single_view_dataset_rejected(self, toy_records):
        single = [r for r in toy_records if r.view_index == 0]
        rng = np.random.default_rng(0)
        with pytest.raises(SamplingError):
            sample_pair_batch(single, 4, rng)

    def test_reproducible_from_seed(self, toy_records):
        a = sample_pair_batch(toy_records, 16, np.random.default_rng(7))
        b = sample_pair_batch(toy_records, 16, np.random.default_rng(7))
        assert [(s.source.subject_id, s.source.view_index, s.source.seq_id)
                for s in a] == \
               [(s.source.subject_id, s.source.view_index, s.source.seq_id)
                for s in b]


class TestTripletSampler:
    def test_contract(self, toy_records):
        rng = np.random.default_rng(0)
        for t in sample_triplet_batch(toy_records, 64, rng):
            assert t.anchor.subject_id == t.positive.subject_id
            assert t.negative.subject_id != t.anchor.subject_id

    def test_single_subject_rejected(self, toy_records):
        one = filter_records(toy_records, [toy_records[0].subject_id])
        with pytest.raises(SamplingError):
            sample_triplet_batch(one, 4, np.random.default_rng(0))

    def test_negative_subjects_uniform(self, toy_records):
        subjects = sorted({r.subject_id for r in toy_records})[:10]
        recs = filter_records(toy_records, subjects)
        rng = np.random.default_rng(5)
        trips = sample_triplet_batch(recs, 1000, rng)
        anchors = np.array([t.anchor.subject_id for t in trips])
        negs = np.array([t.negative.subject_id for t in trips])
        # conditioned on each anchor, negatives spread over the other 9
        freqs = np.bincount(negs, minlength=10) / len(trips)
        assert np.abs(freqs - 0.1).max() <= 0.05
        assert (negs != anchors).all()

    def test_cross_view_positive_preferred(self, toy_records):
        rng = np.random.default_rng(6)
        for t in sample_triplet_batch(toy_records, 64, rng):
            assert t.positive.view_index != t.anchor.view_index


class TestAnglePretrainBatch:
    def test_half_true_half_false(self, toy_records):
        rng = np.random.default_rng(0)
        batch = make_angle_pretrain_batch(toy_records, 8, rng)
        bits = [s.truth_bit for s in batch]
        assert sum(bits) == 4 and len(bits) == 8

    def test_false_entries_carry_wrong_label(self, toy_records):
        rng = np.random.default_rng(1)
        for s in make_angle_pretrain_batch(toy_records, 200, rng):
            label = int(np.argmax(s.label_one_hot))
            if s.truth_bit:
                assert label == s.record.view_index
            else:
                assert label != s.record.view_index

    def test_odd_n_rejected(self, toy_records):
        with pytest.raises(SamplingError):
            make_angle_pretrain_batch(toy_records, 7, np.random.default_rng(0))

    def test_single_view_rejected(self, toy_records):
        single = [r for r in toy_records if r.view_index == 2]
        with pytest.raises(SamplingError):
            make_angle_pretrain_batch(single, 4, np.random.default_rng(0))

    def test_one_hot_shape(self, toy_records):
        rng = np.random.default_rng(2)
        for s in make_angle_pretrain_batch(toy_records, 16, rng):
            assert s.label_one_hot.shape == (4,)
            assert s.label_one_hot.sum() == 1.0
            assert set(np.unique(s.label_one_hot)) <= {0.0, 1.0}
