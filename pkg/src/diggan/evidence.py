"""Any-to-any view generation and retrieval-consistency grids.

These artifacts pair latent-space identification with generated images a
human can inspect: a probe re-rendered at every view, and per-retrieved-
subject rows showing how consistent the generated templates look.
"""

from __future__ import annotations

import csv
import os
from typing import Optional, Sequence

import numpy as np

from .data import SampleRecord, one_hot
from .errors import DigganError, UnknownViewError
from .evaluation import EmbeddingSet, extract_embeddings, rank_k_identify
from .gei import GeiImage
from .networks import ModelParams, encode, generate
from .pgm import write_pgm


def _pixels(probe) -> np.ndarray:
    if isinstance(probe, GeiImage):
        return probe.pixels
    if isinstance(probe, SampleRecord):
        return probe.pixels()
    return np.asarray(probe, dtype=np.float64)


def view_vector(target_view, views_deg: Sequence[float],
                experimental: bool = False) -> tuple[np.ndarray, bool]:
    """One-hot for a declared view; with experimental=True an undeclared
    angle becomes a convex blend of its two nearest declared views."""
    views = [float(v) for v in views_deg]
    target = float(target_view)
    if target in views:
        return one_hot(views.index(target), len(views)), False
    if not experimental:
        raise UnknownViewError(
            f"view {target:g} not in declared views {views}; "
            f"pass experimental=True to interpolate"
        )
    gaps = sorted(range(len(views)), key=lambda i: (abs(views[i] - target), views[i]))
    i, j = gaps[0], gaps[1]
    di, dj = abs(views[i] - target), abs(views[j] - target)
    v = np.zeros(len(views))
    if di + dj == 0:
        v[i] = 1.0
    else:
        v[i] = dj / (di + dj)
        v[j] = di / (di + dj)
    return v, True


def generate_view(params: ModelParams, probe, target_view,
                  views_deg: Sequence[float],
                  experimental: bool = False) -> np.ndarray:
    """Re-render the probe's identity at the target view."""
    v, _ = view_vector(target_view, views_deg, experimental)
    z = encode(params, _pixels(probe)[None])
    return generate(params, z, v[None])[0]


def generate_all_views(params: ModelParams, probe, view_list: Sequence[float],
                       views_deg: Sequence[float], out_path=None,
                       experimental: bool = False,
                       grid_columns: int = 7) -> list:
    """One generated image per requested view, in order; optionally tiled
    into a grid file with a sidecar CSV naming each tile."""
    images = []
    flags = []
    z = None
    for tv in view_list:
        v, interp = view_vector(tv, views_deg, experimental)
        if z is None:
            z = encode(params, _pixels(probe)[None])
        images.append(generate(params, z, v[None])[0])
        flags.append(interp)
    if out_path is not None and images:
        cols = min(grid_columns, len(images))
        rows = -(-len(images) // cols)
        h, w = images[0].shape
        grid = np.zeros((rows * h, cols * w))
        meta = []
        for i, img in enumerate(images):
            r, c = divmod(i, cols)
            grid[r * h : (r + 1) * h, c * w : (c + 1) * w] = img
            meta.append((r, c, "", f"{float(view_list[i]):g}",
                         "generated-experimental" if flags[i] else "generated"))
        write_pgm(out_path, np.round(grid * 255.0).astype(np.uint8))
        _write_sidecar(out_path + ".csv", meta)
    return images


def _write_sidecar(path, rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["row", "col", "subject", "view", "kind"])
        for r in rows:
            w.writerow(r)


def consistency_grid(params: ModelParams, probe: SampleRecord,
                     gallery_records: Sequence[SampleRecord], k: int = 5,
                     target_views: Optional[Sequence[float]] = None,
                     views_deg: Optional[Sequence[float]] = None,
                     out_path=None) -> tuple[np.ndarray, list]:
    """Probe row plus one row per rank-k retrieved subject, each rendered
    at the target views. Returns the grid and the ranked subject list."""
    if views_deg is None:
        vd = {}
        for r in gallery_records:
            vd[r.view_index] = r.view_deg
        views_deg = [vd[i] for i in sorted(vd)]
    if target_views is None:
        target_views = list(views_deg)
    subjects_avail = len({r.subject_id for r in gallery_records})
    if k > subjects_avail:
        raise DigganError(f"k={k} exceeds the {subjects_avail} gallery subjects")

    gallery_set = extract_embeddings(params, gallery_records)
    probe_code = encode(params, probe.pixels()[None])[0]
    ranked = rank_k_identify(gallery_set, probe_code, k)

    def row_for(source: SampleRecord):
        tiles = [source.pixels()]
        z = encode(params, source.pixels()[None])
        for tv in target_views:
            v, interp = view_vector(tv, views_deg, experimental=True)
            tiles.append(generate(params, z, v[None])[0])
        return tiles

    sources = [probe]
    by_subject = {}
    for r in sorted(gallery_records, key=lambda r: (r.subject_id, r.view_index, r.seq_id)):
        by_subject.setdefault(r.subject_id, r)
    sources += [by_subject[s] for s in ranked]

    rows = [row_for(s) for s in sources]
    h, w = rows[0][0].shape
    grid = np.concatenate(
        [np.concatenate(tiles, axis=1) for tiles in rows], axis=0
    )
    if out_path is not None:
        write_pgm(out_path, np.round(grid * 255.0).astype(np.uint8))
        meta = []
        for ri, (src, tiles) in enumerate(zip(sources, rows)):
            kind0 = "probe" if ri == 0 else "gallery"
            meta.append((ri, 0, src.subject_id, f"{src.view_deg:g}", kind0))
            for ci, tv in enumerate(target_views, start=1):
                declared = float(tv) in [float(v) for v in views_deg]
                meta.append((ri, ci, src.subject_id, f"{float(tv):g}",
                             "generated" if declared else "generated-experimental"))
        _write_sidecar(str(out_path) + ".csv", meta)
    return grid, ranked
