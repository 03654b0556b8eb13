"""Gait Energy Image construction from binary silhouette sequences.

A GEI is the per-pixel mean of the silhouette masks over one gait cycle,
size-normalized to 128x88: crop to the foreground bounding box, scale
(preserving aspect ratio) to height 128, center horizontally on the
foreground centroid, and pad or crop to width 88.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy import ndimage

from .errors import (
    EmptySequenceError,
    EmptySilhouetteError,
    FrameDimensionError,
    MissingDirectoryError,
)
from .pgm import read_pgm, write_pgm

GEI_HEIGHT = 128
GEI_WIDTH = 88

# Grayscale silhouette inputs are binarized at this intensity.
BINARIZE_THRESHOLD = 128

_FRAME_RE = re.compile(r"(\d+)\.pgm$")


@dataclass
class SilhouetteSequence:
    """Ordered stack of binary masks, shape (n_frames, height, width)."""

    frames: np.ndarray
    frame_rate: float = 30.0

    def __post_init__(self):
        self.frames = np.asarray(self.frames)
        if self.frames.ndim != 3 or len(self.frames) == 0:
            raise EmptySequenceError("a sequence needs at least one 2-D frame")
        vals = np.unique(self.frames)
        if not np.isin(vals, (0, 1)).all():
            raise ValueError(f"frames must be exactly 0/1, found values {vals[:8]}")
        self.frames = self.frames.astype(np.uint8)

    def __len__(self) -> int:
        return len(self.frames)


@dataclass
class GeiImage:
    """Size-normalized gait template, pixels in [0,1], shape (128, 88)."""

    pixels: np.ndarray
    meta: Optional[str] = None

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.shape != (GEI_HEIGHT, GEI_WIDTH):
            raise ValueError(
                f"GEI must be {GEI_HEIGHT}x{GEI_WIDTH}, got {self.pixels.shape}"
            )
        if self.pixels.min() < 0.0 or self.pixels.max() > 1.0:
            raise ValueError("GEI pixels must lie in [0, 1]")


class CycleEstimate(NamedTuple):
    start: int
    period: int
    fallback: bool


def load_silhouette_sequence(path, frame_rate: float = 30.0) -> SilhouetteSequence:
    """Load the PGM frames of one sequence directory, ordered by frame index.

    Grayscale inputs are binarized at threshold 128/255.
    """
    if not os.path.isdir(path):
        raise MissingDirectoryError(f"silhouette directory not found: {path}")
    names = []
    for name in os.listdir(path):
        m = _FRAME_RE.search(name)
        if m:
            names.append((int(m.group(1)), name))
    if not names:
        raise EmptySequenceError(f"no frame .pgm files in {path}")
    names.sort()
    frames = []
    shape = None
    for _, name in names:
        img = read_pgm(os.path.join(path, name))
        if shape is None:
            shape = img.shape
        elif img.shape != shape:
            raise FrameDimensionError(
                f"{name} is {img.shape}, expected {shape} like the first frame"
            )
        frames.append((img >= BINARIZE_THRESHOLD).astype(np.uint8))
    return SilhouetteSequence(np.stack(frames), frame_rate=frame_rate)


def estimate_gait_cycle(
    seq: SilhouetteSequence, min_lag: int = 4, threshold: float = 0.2
) -> CycleEstimate:
    """Estimate the gait period from the foreground-pixel-count signal.

    The period is the lag in [min_lag, n/2] maximizing the normalized
    autocorrelation of the mean-removed count signal. If no lag reaches
    `threshold` (or the sequence is too short, or the signal is flat),
    falls back to the whole sequence length, flagged but never an error.
    """
    counts = seq.frames.sum(axis=(1, 2)).astype(np.float64)
    n = len(counts)
    if n < 2 * min_lag:
        return CycleEstimate(0, n, True)
    s = counts - counts.mean()
    denom = float(np.dot(s, s))
    if denom == 0.0:
        return CycleEstimate(0, n, True)
    best_lag, best_r = 0, -np.inf
    for lag in range(min_lag, n // 2 + 1):
        r = float(np.dot(s[:-lag], s[lag:])) / denom
        if r > best_r:
            best_lag, best_r = lag, r
    if best_r < threshold:
        return CycleEstimate(0, n, True)
    return CycleEstimate(0, best_lag, False)


def average_frames(seq: SilhouetteSequence, cycle: Optional[tuple] = None) -> np.ndarray:
    """Per-pixel arithmetic mean over the cycle window, at source resolution."""
    if cycle is None:
        est = estimate_gait_cycle(seq)
        start, period = est.start, est.period
    else:
        start, period = cycle[0], cycle[1]
    stop = min(start + period, len(seq.frames))
    window = seq.frames[start:stop]
    if len(window) == 0:
        raise EmptySequenceError("cycle window selects no frames")
    return window.mean(axis=0, dtype=np.float64)


def normalize_template(mean_image: np.ndarray) -> np.ndarray:
    """Size-normalize an averaged silhouette to the 128x88 canvas.

    Crops to the foreground bounding box, scales (aspect-preserving) to
    height 128, then places the result horizontally so the foreground
    centroid sits at the canvas center, padding or cropping to width 88.
    """
    mean_image = np.asarray(mean_image, dtype=np.float64)
    fg = mean_image > 0
    if not fg.any():
        raise EmptySilhouetteError("no foreground pixels to normalize")
    rows = np.flatnonzero(fg.any(axis=1))
    cols = np.flatnonzero(fg.any(axis=0))
    crop = mean_image[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1]
    scale = GEI_HEIGHT / crop.shape[0]
    scaled = ndimage.zoom(crop, scale, order=1)
    if scaled.shape[0] != GEI_HEIGHT:  # guard against rounding in zoom
        scaled = ndimage.zoom(
            crop, (GEI_HEIGHT / crop.shape[0], GEI_HEIGHT / crop.shape[0]), order=1
        )[:GEI_HEIGHT]
    scaled = np.clip(scaled, 0.0, 1.0)

    mass = scaled.sum()
    centroid_x = float((scaled.sum(axis=0) * np.arange(scaled.shape[1])).sum() / mass)
    out = np.zeros((GEI_HEIGHT, GEI_WIDTH), dtype=np.float64)
    # Column c of `scaled` lands at c + shift on the canvas.
    shift = GEI_WIDTH // 2 - int(round(centroid_x))
    src_lo = max(0, -shift)
    src_hi = min(scaled.shape[1], GEI_WIDTH - shift)
    if src_lo < src_hi:
        out[:, src_lo + shift : src_hi + shift] = scaled[:, src_lo:src_hi]
    return out


def compute_gei(
    seq: SilhouetteSequence,
    cycle: Optional[tuple] = None,
    meta: Optional[str] = None,
) -> GeiImage:
    """Average the cycle window and size-normalize to a 128x88 GEI."""
    return GeiImage(normalize_template(average_frames(seq, cycle)), meta=meta)


def save_gei(gei: GeiImage, path) -> None:
    """Quantize to 8 bits and write as PGM; in-memory precision is unchanged."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    write_pgm(path, np.round(gei.pixels * 255.0).astype(np.uint8))


def load_gei(path, meta: Optional[str] = None) -> GeiImage:
    img = read_pgm(path)
    if img.shape != (GEI_HEIGHT, GEI_WIDTH):
        raise ValueError(f"{path}: GEI file is {img.shape}, expected 128x88")
    return GeiImage(img.astype(np.float64) / 255.0, meta=meta)


def silhouette_dir(root, subject_id: int, view_deg, seq_id: int) -> str:
    return os.path.join(str(root), f"{subject_id:05d}", f"{_fmt_view(view_deg)}", f"{seq_id:02d}")


def gei_file(root, subject_id: int, view_deg, seq_id: int) -> str:
    return os.path.join(
        str(root), "gei", f"{subject_id:05d}", f"{_fmt_view(view_deg)}", f"{seq_id:02d}.pgm"
    )


def _fmt_view(view_deg) -> str:
    return f"{int(round(float(view_deg))):03d}"
