import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diggan.errors import (
    EmptySequenceError,
    EmptySilhouetteError,
    FrameDimensionError,
    MissingDirectoryError,
    PgmFormatError,
)
from diggan.gei import (
    GEI_HEIGHT,
    GEI_WIDTH,
    GeiImage,
    SilhouetteSequence,
    average_frames,
    compute_gei,
    estimate_gait_cycle,
    load_gei,
    load_silhouette_sequence,
    normalize_template,
    save_gei,
)
from diggan.pgm import read_pgm, write_pgm


def _square_mask(h=16, w=16, top=4, left=4, size=8):
    m = np.zeros((h, w), dtype=np.uint8)
    m[top : top + size, left : left + size] = 1
    return m


def _write_sequence(tmp_path, frames):
    d = tmp_path / "seq"
    d.mkdir()
    for i, f in enumerate(frames):
        write_pgm(d / f"frame_{i:04d}.pgm", f * 255)
    return d


class TestPgm:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        img = rng.integers(0, 256, size=(37, 23), dtype=np.uint8)
        write_pgm(tmp_path / "x.pgm", img)
        assert np.array_equal(read_pgm(tmp_path / "x.pgm"), img)

    def test_truncated_raster_rejected(self, tmp_path):
        p = tmp_path / "bad.pgm"
        write_pgm(p, np.zeros((8, 8), dtype=np.uint8))
        data = p.read_bytes()
        p.write_bytes(data[:-5])
        with pytest.raises(PgmFormatError):
            read_pgm(p)

    def test_wrong_magic_rejected(self, tmp_path):
        p = tmp_path / "bad.pgm"
        p.write_bytes(b"P2\n2 2\n255\n0 0 0 0\n")
        with pytest.raises(PgmFormatError):
            read_pgm(p)


class TestLoadSequence:
    def test_three_identical_masks(self, tmp_path):
        m = _square_mask()
        d = _write_sequence(tmp_path, [m, m, m])
        seq = load_silhouette_sequence(d)
        assert len(seq) == 3
        assert np.array_equal(seq.frames[0], m)

    def test_mixed_sizes_raise(self, tmp_path):
        d = tmp_path / "seq"
        d.mkdir()
        write_pgm(d / "frame_0000.pgm", np.zeros((16, 16), dtype=np.uint8))
        write_pgm(d / "frame_0001.pgm", np.zeros((16, 18), dtype=np.uint8))
        with pytest.raises(FrameDimensionError):
            load_silhouette_sequence(d)

    def test_missing_directory(self, tmp_path):
        with pytest.raises(MissingDirectoryError):
            load_silhouette_sequence(tmp_path / "nope")

    def test_zero_frames(self, tmp_path):
        d = tmp_path / "seq"
        d.mkdir()
        with pytest.raises(EmptySequenceError):
            load_silhouette_sequence(d)

    def test_random_round_trip_bit_identical(self, tmp_path):
        rng = np.random.default_rng(42)
        frames = (rng.random((10, 20, 14)) < 0.4).astype(np.uint8)
        d = _write_sequence(tmp_path, frames)
        seq = load_silhouette_sequence(d)
        assert np.array_equal(seq.frames, frames)

    def test_grayscale_binarized_at_128(self, tmp_path):
        d = tmp_path / "seq"
        d.mkdir()
        img = np.array([[0, 127, 128, 255]], dtype=np.uint8)
        write_pgm(d / "frame_0000.pgm", img)
        seq = load_silhouette_sequence(d)
        assert seq.frames[0].tolist() == [[0, 0, 1, 1]]

    def test_frames_ordered_by_index(self, tmp_path):
        d = tmp_path / "seq"
        d.mkdir()
        a = _square_mask(size=2)
        b = _square_mask(size=6)
        write_pgm(d / "frame_0010.pgm", b * 255)
        write_pgm(d / "frame_0002.pgm", a * 255)
        seq = load_silhouette_sequence(d)
        assert seq.frames[0].sum() == a.sum() and seq.frames[1].sum() == b.sum()


def _autocorr_oracle(counts):
    """Brute-force normalized autocorrelation over every admissible lag."""
    s = counts - counts.mean()
    denom = (s * s).sum()
    n = len(counts)
    best_lag, best_r = 0, -np.inf
    for lag in range(4, n // 2 + 1):
        r = sum(s[t] * s[t + lag] for t in range(n - lag)) / denom
        if r > best_r:
            best_lag, best_r = lag, r
    return best_lag, best_r


class TestCycleEstimation:
    def _periodic_sequence(self, period=8, n=32):
        # foreground count varies periodically: a bar whose height cycles
        frames = []
        for t in range(n):
            size = 4 + int(3 * (1 + np.sin(2 * np.pi * t / period)))
            m = np.zeros((24, 24), dtype=np.uint8)
            m[2 : 2 + size, 4:12] = 1
            frames.append(m)
        return SilhouetteSequence(np.stack(frames))

    def test_period_8_over_32_frames(self):
        seq = self._periodic_sequence(period=8, n=32)
        counts = seq.frames.sum(axis=(1, 2)).astype(float)
        lag, r = _autocorr_oracle(counts)
        assert lag == 8 and r > 0.2  # oracle confirms the planted period
        est = estimate_gait_cycle(seq)
        assert est.period == 8 and not est.fallback and est.start == 0

    def test_flat_signal_falls_back(self):
        m = _square_mask()
        seq = SilhouetteSequence(np.stack([m] * 12))
        est = estimate_gait_cycle(seq)
        assert est.fallback and est.period == 12

    def test_three_frames_fall_back_with_flag(self):
        m = _square_mask()
        seq = SilhouetteSequence(np.stack([m, m, m]))
        est = estimate_gait_cycle(seq)
        assert est == (0, 3, True)

    def test_agrees_with_oracle_on_random_signals(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            n = int(rng.integers(12, 40))
            frames = []
            for t in range(n):
                k = int(rng.integers(1, 20))
                m = np.zeros((16, 16), dtype=np.uint8)
                m.flat[:k] = 1
                frames.append(m)
            seq = SilhouetteSequence(np.stack(frames))
            counts = seq.frames.sum(axis=(1, 2)).astype(float)
            lag, r = _autocorr_oracle(counts)
            est = estimate_gait_cycle(seq)
            if r < 0.2:
                assert est.fallback and est.period == n
            else:
                assert est.period == lag


class TestComputeGei:
    def test_identical_frames_equal_normalized_mask(self):
        m = _square_mask()
        seq = SilhouetteSequence(np.stack([m] * 5))
        gei = compute_gei(seq, cycle=(0, 5))
        expected = normalize_template(m.astype(float))
        assert np.array_equal(gei.pixels, expected)

    def test_half_on_pixel_before_normalization(self):
        a = _square_mask()
        b = a.copy()
        b[0, 0] = 1  # extra pixel on in frame 2 only
        seq = SilhouetteSequence(np.stack([a, b]))
        mean = average_frames(seq, (0, 2))
        assert mean[0, 0] == 0.5
        assert mean[6, 6] == 1.0

    def test_mean_matches_accumulation_oracle_exactly(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            n = int(rng.integers(2, 12))
            frames = (rng.random((n, 18, 14)) < 0.5).astype(np.uint8)
            frames[:, 8, 7] = 1  # keep foreground nonempty
            seq = SilhouetteSequence(frames)
            mean = average_frames(seq, (0, n))
            acc = np.zeros((18, 14))
            for f in frames:
                for i in range(18):
                    for j in range(14):
                        acc[i, j] += f[i, j]
            assert np.array_equal(mean, acc / n)

    def test_frame_order_invariance(self):
        rng = np.random.default_rng(5)
        frames = (rng.random((6, 20, 16)) < 0.5).astype(np.uint8)
        frames[:, 10, 8] = 1
        seq = SilhouetteSequence(frames)
        perm = SilhouetteSequence(frames[rng.permutation(6)])
        a = compute_gei(seq, cycle=(0, 6)).pixels
        b = compute_gei(perm, cycle=(0, 6)).pixels
        assert np.array_equal(a, b)

    def test_output_dims_and_range(self):
        rng = np.random.default_rng(9)
        frames = (rng.random((4, 40, 30)) < 0.3).astype(np.uint8)
        frames[:, 20, 15] = 1
        gei = compute_gei(SilhouetteSequence(frames))
        assert gei.pixels.shape == (GEI_HEIGHT, GEI_WIDTH)
        assert gei.pixels.min() >= 0.0 and gei.pixels.max() <= 1.0

    def test_empty_silhouette_raises(self):
        frames = np.zeros((3, 10, 10), dtype=np.uint8)
        with pytest.raises(EmptySilhouetteError):
            compute_gei(SilhouetteSequence(frames), cycle=(0, 3))

    def test_wide_foreground_cropped_to_width(self):
        m = np.ones((10, 40), dtype=np.uint8)
        gei = compute_gei(SilhouetteSequence(m[None]), cycle=(0, 1))
        assert gei.pixels.shape == (GEI_HEIGHT, GEI_WIDTH)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 6), st.integers(8, 24), st.integers(8, 24),
           st.integers(0, 2 ** 31 - 1))
    def test_every_gei_pixel_in_unit_interval(self, n, h, w, seed):
        rng = np.random.default_rng(seed)
        frames = (rng.random((n, h, w)) < 0.5).astype(np.uint8)
        frames[:, h // 2, w // 2] = 1
        gei = compute_gei(SilhouetteSequence(frames), cycle=(0, n))
        assert gei.pixels.shape == (GEI_HEIGHT, GEI_WIDTH)
        assert gei.pixels.min() >= 0.0 and gei.pixels.max() <= 1.0


class TestGeiIO:
    def test_quantized_round_trip_within_one_level(self, tmp_path):
        rng = np.random.default_rng(1)
        gei = GeiImage(rng.random((GEI_HEIGHT, GEI_WIDTH)))
        save_gei(gei, tmp_path / "g.pgm")
        back = load_gei(tmp_path / "g.pgm")
        assert np.abs(back.pixels - gei.pixels).max() <= 1.0 / 255.0

    def test_gei_invariants_enforced(self):
        with pytest.raises(ValueError):
            GeiImage(np.zeros((10, 10)))
        with pytest.raises(ValueError):
            GeiImage(np.full((GEI_HEIGHT, GEI_WIDTH), 1.5))
