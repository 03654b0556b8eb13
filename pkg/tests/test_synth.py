import hashlib
import os

import numpy as np
import pytest

from diggan.errors import DigganError
from diggan.synth import (
    PARAM_BOUNDS,
    VIEWS_4,
    VIEWS_14,
    SynthDatasetSpec,
    build_records,
    generate_dataset,
    make_subject_params,
    render_silhouette_frame,
    render_sequence,
)


def _tree_digest(root):
    h = hashlib.sha256()
    for dirpath, dirnames, filenames in sorted(os.walk(root)):
        dirnames.sort()
        for name in sorted(filenames):
            p = os.path.join(dirpath, name)
            h.update(os.path.relpath(p, root).encode())
            h.update(open(p, "rb").read())
    return h.hexdigest()


class TestSubjectParams:
    def test_deterministic(self):
        assert make_subject_params(7, 3) == make_subject_params(7, 3)

    def test_distinct_subjects_differ(self):
        a, b = make_subject_params(7, 3), make_subject_params(7, 4)
        assert a != b

    def test_distinct_seeds_differ(self):
        a, b = make_subject_params(7, 3), make_subject_params(8, 3)
        assert a != b

    def test_within_documented_bounds(self):
        for sid in range(20):
            p = make_subject_params(1, sid)
            for name, (lo, hi) in PARAM_BOUNDS.items():
                v = getattr(p, name)
                assert lo <= v <= hi + 0.5, f"{name}={v} outside [{lo},{hi}]"
            assert p.cadence >= 8


class TestFrameRendering:
    def test_phase_zero_deterministic(self):
        p = make_subject_params(2, 0)
        a = render_silhouette_frame(p, 30.0, 0.0)
        b = render_silhouette_frame(p, 30.0, 0.0)
        assert np.array_equal(a, b)

    def test_side_view_half_cycle_differs(self):
        p = make_subject_params(2, 1)
        a = render_silhouette_frame(p, 90.0, 0.0)
        b = render_silhouette_frame(p, 90.0, 0.25)
        assert (a != b).sum() > 0

    def test_any_frame_nonempty(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            p = make_subject_params(3, int(rng.integers(100)))
            f = render_silhouette_frame(p, float(rng.integers(0, 360)),
                                        float(rng.random()))
            assert f.sum() > 0

    def test_frontal_vs_side_strongly_differ(self):
        p = make_subject_params(2, 5)
        front = render_silhouette_frame(p, 0.0, 0.25)
        side = render_silhouette_frame(p, 90.0, 0.25)
        overlap = (front & side).sum() / max(front.sum(), side.sum())
        assert (front != side).sum() > 0.1 * front.sum()
        assert overlap < 1.0

    def test_bad_view_rejected(self):
        p = make_subject_params(2, 5)
        with pytest.raises(DigganError):
            render_silhouette_frame(p, 370.0, 0.0)


class TestDatasetGeneration:
    def test_counts_4x2x1(self, tmp_path):
        spec = SynthDatasetSpec(n_subjects=4, views_deg=(0.0, 90.0),
                                seqs_per_view=1, frames_per_seq=12, seed=0)
        records = generate_dataset(spec, tmp_path / "d")
        assert len(records) == 8
        gei_files = [p for p, _, files in os.walk(tmp_path / "d" / "gei")
                     for p in files]
        assert len(gei_files) == 8

    def test_byte_identical_trees(self, tmp_path):
        spec = SynthDatasetSpec(n_subjects=2, views_deg=(0.0, 60.0),
                                seqs_per_view=1, frames_per_seq=10, seed=5)
        generate_dataset(spec, tmp_path / "a")
        generate_dataset(spec, tmp_path / "b")
        assert _tree_digest(tmp_path / "a") == _tree_digest(tmp_path / "b")

    def test_seed_change_alters_some_gei(self, tmp_path):
        kw = dict(n_subjects=2, views_deg=(0.0, 60.0), seqs_per_view=1,
                  frames_per_seq=10)
        generate_dataset(SynthDatasetSpec(seed=1, **kw), tmp_path / "a")
        generate_dataset(SynthDatasetSpec(seed=2, **kw), tmp_path / "b")
        assert _tree_digest(tmp_path / "a") != _tree_digest(tmp_path / "b")

    def test_spec_validation(self):
        with pytest.raises(DigganError):
            SynthDatasetSpec(n_subjects=1)
        with pytest.raises(DigganError):
            SynthDatasetSpec(n_subjects=4, views_deg=(30.0, 30.0))

    def test_view_presets(self):
        assert len(VIEWS_4) == 4 and len(VIEWS_14) == 14
        assert len(set(VIEWS_14)) == 14


class TestDatasetGeometry:
    def test_same_subject_same_view_sequences_are_close(self, toy_records):
        # distance between a subject's two sequences at one view should sit
        # below the median of all pairwise distances
        by_key = {}
        for r in toy_records:
            by_key.setdefault((r.subject_id, r.view_index), []).append(r)
        vecs = np.stack([r.gei.pixels.ravel() for r in toy_records])
        n = len(vecs)
        rng = np.random.default_rng(0)
        idx = rng.integers(0, n, size=(400, 2))
        all_pairs = np.linalg.norm(vecs[idx[:, 0]] - vecs[idx[:, 1]], axis=1)
        median = np.median(all_pairs[idx[:, 0] != idx[:, 1]])
        same_cell = []
        for (sid, vi), recs in by_key.items():
            if len(recs) >= 2:
                d = np.linalg.norm(recs[0].gei.pixels.ravel()
                                   - recs[1].gei.pixels.ravel())
                same_cell.append(d)
        assert np.mean(same_cell) < median

    def test_build_records_sorted_and_complete(self, toy_records):
        keys = [(r.subject_id, r.view_index, r.seq_id) for r in toy_records]
        assert keys == sorted(keys)
        assert len(toy_records) == 12 * 4 * 2
