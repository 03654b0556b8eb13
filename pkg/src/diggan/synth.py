"""Procedural multi-view gait dataset with ground-truth identity and view.

Subjects are articulated stick-and-ellipse walkers. Identity lives in
body-shape ratios (head size, torso/leg proportions, width, stride,
cadence); the camera view enters as horizontal foreshortening of the limb
swing plus a width/depth modulation of the body, so frontal and side
silhouettes differ strongly while the underlying proportions stay
recoverable from any angle.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import SampleRecord
from .errors import DigganError
from .gei import (
    GeiImage,
    SilhouetteSequence,
    compute_gei,
    gei_file,
    save_gei,
    silhouette_dir,
)
from .pgm import write_pgm

VIEWS_4 = (0.0, 30.0, 60.0, 90.0)
# Every 15 degrees over the front and back half-arcs, 14 angles total.
VIEWS_14 = (0.0, 15.0, 30.0, 45.0, 60.0, 75.0, 90.0,
            180.0, 195.0, 210.0, 225.0, 240.0, 255.0, 270.0)

CANVAS_H = 160
CANVAS_W = 120

# All shape ratios are fractions of total body height; cadence is frames
# per gait cycle. Draws are uniform over these ranges.
PARAM_BOUNDS = {
    "torso_width": (0.16, 0.30),
    "torso_height": (0.28, 0.40),
    "leg_length": (0.42, 0.56),
    "head_radius": (0.048, 0.085),
    "stride_amplitude": (0.35, 0.72),
    "cadence": (12, 20),
}

# How much of the frontal body width survives when seen from the side.
_DEPTH_RATIO = 0.55


@dataclass(frozen=True)
class SubjectParams:
    subject_id: int
    torso_width: float
    torso_height: float
    leg_length: float
    head_radius: float
    stride_amplitude: float
    cadence: int


@dataclass(frozen=True)
class SynthDatasetSpec:
    n_subjects: int
    views_deg: Sequence[float] = VIEWS_4
    seqs_per_view: int = 2
    frames_per_seq: int = 30
    seed: int = 0

    def __post_init__(self):
        if self.n_subjects < 2:
            raise DigganError("need at least 2 subjects")
        if len(set(self.views_deg)) < 2:
            raise DigganError("need at least 2 distinct views")


def make_subject_params(seed: int, subject_id: int) -> SubjectParams:
    """Draw body-shape parameters, deterministic in (seed, subject_id)."""
    rng = np.random.default_rng([0xD166A0, int(seed), int(subject_id)])
    draws = {}
    for name, (lo, hi) in PARAM_BOUNDS.items():
        draws[name] = lo + (hi - lo) * rng.random()
    draws["cadence"] = int(round(draws["cadence"]))
    return SubjectParams(subject_id=int(subject_id), **draws)


def render_silhouette_frame(
    p: SubjectParams, view_deg: float, phase: float, stride_scale: float = 1.0
) -> np.ndarray:
    """Rasterize one binary walker mask at the given view and gait phase.

    phase is the fraction of the gait cycle in [0, 1); view 0 is frontal,
    90 is the full side profile. Pure function, no randomness.
    """
    if not 0.0 <= view_deg < 360.0:
        raise DigganError(f"view_deg must be in [0, 360), got {view_deg}")
    v = math.radians(view_deg)
    swing_vis = abs(math.sin(v))  # fore-aft swing projected into the image
    w_factor = abs(math.cos(v)) + _DEPTH_RATIO * abs(math.sin(v))

    unit = 120.0  # pixels per unit of body height
    cx = CANVAS_W / 2.0
    leg_l = p.leg_length * unit
    torso_h = p.torso_height * unit
    torso_w = p.torso_width * unit * w_factor
    head_r = p.head_radius * unit
    y_floor = 150.0
    y_pelvis = y_floor - leg_l
    y_shoulder = y_pelvis - torso_h
    y_head = y_shoulder - 0.03 * unit - head_r

    theta = stride_scale * p.stride_amplitude * math.sin(2.0 * math.pi * phase)

    Y, X = np.ogrid[0:CANVAS_H, 0:CANVAS_W]
    mask = np.zeros((CANVAS_H, CANVAS_W), dtype=bool)

    def ellipse(cxe, cye, a, b):
        nonlocal mask
        mask |= ((X - cxe) / a) ** 2 + ((Y - cye) / b) ** 2 <= 1.0

    def capsule(ax, ay, bx, by, r):
        nonlocal mask
        dx, dy = bx - ax, by - ay
        denom = dx * dx + dy * dy
        if denom == 0.0:
            mask |= (X - ax) ** 2 + (Y - ay) ** 2 <= r * r
            return
        t = np.clip(((X - ax) * dx + (Y - ay) * dy) / denom, 0.0, 1.0)
        mask |= (X - (ax + t * dx)) ** 2 + (Y - (ay + t * dy)) ** 2 <= r * r

    # Torso and head.
    ellipse(cx, (y_pelvis + y_shoulder) / 2.0, max(torso_w / 2.0, 2.0),
            torso_h / 2.0 + 0.03 * unit)
    ellipse(cx, y_head, head_r, head_r)
    capsule(cx, y_head, cx, y_shoulder, 0.030 * unit)  # neck

    hip_sep = 0.22 * torso_w / 2.0 + 1.0
    leg_r = (0.40 + 0.30 * w_factor) * 0.085 * unit
    for sign in (+1.0, -1.0):
        hx = cx + sign * hip_sep
        ang = sign * theta
        fx = hx + leg_l * math.sin(ang) * swing_vis
        fy = y_pelvis + leg_l * math.cos(ang)
        capsule(hx, y_pelvis, fx, fy, leg_r)

    sh_sep = 0.38 * torso_w / 2.0 + 1.0
    arm_l = 0.78 * torso_h
    arm_r = (0.40 + 0.30 * w_factor) * 0.050 * unit
    y_arm = y_shoulder + 0.02 * unit
    for sign in (+1.0, -1.0):
        sx = cx + sign * sh_sep
        ang = -sign * 0.7 * theta  # arms counter-swing the legs
        hx2 = sx + arm_l * math.sin(ang) * swing_vis
        hy2 = y_arm + arm_l * math.cos(ang)
        capsule(sx, y_arm, hx2, hy2, arm_r)

    return mask.astype(np.uint8)


def render_sequence(
    p: SubjectParams,
    view_deg: float,
    n_frames: int,
    phase0: float = 0.0,
    stride_scale: float = 1.0,
    frame_rate: float = 30.0,
) -> SilhouetteSequence:
    frames = [
        render_silhouette_frame(p, view_deg, (phase0 + t / p.cadence) % 1.0, stride_scale)
        for t in range(n_frames)
    ]
    return SilhouetteSequence(np.stack(frames), frame_rate=frame_rate)


def _seq_variation(spec: SynthDatasetSpec, subject_id: int, view_i: int, seq_id: int):
    """Per-sequence phase offset and stride jitter, keyed not shared state."""
    rng = np.random.default_rng([0x53C5, spec.seed, subject_id, view_i, seq_id])
    phase0 = float(rng.random())
    stride_scale = float(1.0 + 0.03 * (rng.random() - 0.5))
    return phase0, stride_scale


def build_records(spec: SynthDatasetSpec) -> list[SampleRecord]:
    """Render the whole dataset in memory, no disk I/O."""
    views = sorted(set(float(v) for v in spec.views_deg))
    records = []
    for sid in range(spec.n_subjects):
        p = make_subject_params(spec.seed, sid)
        for vi, view in enumerate(views):
            for seq in range(1, spec.seqs_per_view + 1):
                phase0, stride = _seq_variation(spec, sid, vi, seq)
                seq_frames = render_sequence(p, view, spec.frames_per_seq, phase0, stride)
                g = compute_gei(seq_frames, meta=f"synth:{sid}:{view:.0f}:{seq}")
                records.append(
                    SampleRecord(
                        subject_id=sid, view_index=vi, seq_id=seq, gei=g, view_deg=view
                    )
                )
    return records


def generate_dataset(
    spec: SynthDatasetSpec, out_root, write_silhouettes: bool = True
) -> list[SampleRecord]:
    """Write silhouettes, GEIs and a manifest CSV under out_root.

    Byte-identical across runs with the same spec; every random draw is
    keyed by (seed, subject, view, seq), never by shared generator state.
    """
    out_root = str(out_root)
    try:
        os.makedirs(out_root, exist_ok=True)
    except OSError as e:
        raise DigganError(f"cannot create dataset root {out_root}: {e}") from e
    views = sorted(set(float(v) for v in spec.views_deg))
    records = []
    for sid in range(spec.n_subjects):
        p = make_subject_params(spec.seed, sid)
        for vi, view in enumerate(views):
            for seq in range(1, spec.seqs_per_view + 1):
                phase0, stride = _seq_variation(spec, sid, vi, seq)
                seq_frames = render_sequence(p, view, spec.frames_per_seq, phase0, stride)
                if write_silhouettes:
                    d = silhouette_dir(out_root, sid, view, seq)
                    os.makedirs(d, exist_ok=True)
                    for t, frame in enumerate(seq_frames.frames):
                        write_pgm(os.path.join(d, f"frame_{t:04d}.pgm"), frame * 255)
                g = compute_gei(seq_frames, meta=f"synth:{sid}:{view:.0f}:{seq}")
                path = gei_file(out_root, sid, view, seq)
                save_gei(g, path)
                records.append(
                    SampleRecord(
                        subject_id=sid, view_index=vi, seq_id=seq, gei=g,
                        view_deg=view, path=path,
                    )
                )
    with open(os.path.join(out_root, "manifest.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["subject_id", "view_deg", "seq_id", "gei_path"])
        for r in records:
            w.writerow([r.subject_id, f"{r.view_deg:g}", r.seq_id,
                        os.path.relpath(r.path, out_root)])
    return records
