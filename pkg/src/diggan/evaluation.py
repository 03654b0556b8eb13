"""Latent-space nearest-neighbor identification and evaluation protocols.

Cooperative mode evaluates every (gallery view, probe view) pair with a
single-view gallery; uncooperative mode draws one random gallery view per
subject. Gallery templates come from each subject's first sequence, probes
from the second (one each, recorded in every report).
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .data import SampleRecord
from .errors import CoverageError, DigganError, EmptyGalleryError
from .networks import ModelParams, encode


@dataclass
class EmbeddingSet:
    subjects: np.ndarray
    view_indices: np.ndarray
    seq_ids: np.ndarray
    view_degs: np.ndarray
    codes: np.ndarray

    def __post_init__(self):
        self.subjects = np.asarray(self.subjects, dtype=np.int64)
        self.view_indices = np.asarray(self.view_indices, dtype=np.int64)
        self.seq_ids = np.asarray(self.seq_ids, dtype=np.int64)
        self.view_degs = np.asarray(self.view_degs, dtype=np.float64)
        self.codes = np.asarray(self.codes, dtype=np.float64)
        if not np.isfinite(self.codes).all():
            raise DigganError("embedding codes must be finite")

    def __len__(self):
        return len(self.subjects)

    def subset(self, mask) -> "EmbeddingSet":
        return EmbeddingSet(self.subjects[mask], self.view_indices[mask],
                            self.seq_ids[mask], self.view_degs[mask],
                            self.codes[mask])


def extract_embeddings(params: ModelParams, records: Sequence[SampleRecord],
                       batch_size: int = 128) -> EmbeddingSet:
    """Encode every record, order-preserving."""
    codes = []
    for i in range(0, len(records), batch_size):
        chunk = records[i : i + batch_size]
        x = np.stack([r.pixels() for r in chunk])
        codes.append(encode(params, x))
    return EmbeddingSet(
        subjects=[r.subject_id for r in records],
        view_indices=[r.view_index for r in records],
        seq_ids=[r.seq_id for r in records],
        view_degs=[r.view_deg for r in records],
        codes=np.concatenate(codes) if codes else np.zeros((0, params.d_z)),
    )


def pixel_embeddings(records: Sequence[SampleRecord]) -> EmbeddingSet:
    """Raw flattened GEI pixels as codes, for the direct-matching baseline."""
    return EmbeddingSet(
        subjects=[r.subject_id for r in records],
        view_indices=[r.view_index for r in records],
        seq_ids=[r.seq_id for r in records],
        view_degs=[r.view_deg for r in records],
        codes=np.stack([r.pixels().ravel() for r in records]),
    )


def rank_k_identify(gallery: EmbeddingSet, probe_code, k: int = 1) -> list:
    """Subjects of the k nearest gallery codes by Euclidean distance,
    deduplicated by subject; ties break on (distance, subject, seq)."""
    if len(gallery) == 0:
        raise EmptyGalleryError("cannot identify against an empty gallery")
    probe_code = np.asarray(probe_code, dtype=np.float64).ravel()
    d = np.sqrt(((gallery.codes - probe_code) ** 2).sum(axis=1))
    order = np.lexsort((gallery.seq_ids, gallery.subjects, d))
    out, seen = [], set()
    for i in order:
        s = int(gallery.subjects[i])
        if s not in seen:
            seen.add(s)
            out.append(s)
            if len(out) == k:
                break
    return out


def _rank1_batch(gallery: EmbeddingSet, probes: EmbeddingSet) -> np.ndarray:
    """Rank-1 subject for each probe row, with the deterministic tie-break."""
    d = np.sqrt(
        ((probes.codes[:, None, :] - gallery.codes[None, :, :]) ** 2).sum(axis=2)
    )
    winners = np.empty(len(probes), dtype=np.int64)
    for i in range(len(probes)):
        order = np.lexsort((gallery.seq_ids, gallery.subjects, d[i]))
        winners[i] = gallery.subjects[order[0]]
    return winners


@dataclass
class EvalReport:
    """Rank-1 percentages per (gallery view, probe view) plus means."""

    protocol: str
    seed: Optional[int]
    gallery_views: list
    probe_views: list
    matrix: np.ndarray
    n_evaluated: np.ndarray
    notes: list = field(default_factory=list)

    @property
    def probe_means(self) -> np.ndarray:
        return self.matrix.mean(axis=0)

    @property
    def overall_mean(self) -> float:
        return float(self.matrix.mean())

    def _off_diagonal_mask(self) -> Optional[np.ndarray]:
        if list(self.gallery_views) != list(self.probe_views):
            return None
        n = len(self.probe_views)
        return ~np.eye(n, dtype=bool)

    @property
    def excl_identical_probe_means(self) -> Optional[np.ndarray]:
        mask = self._off_diagonal_mask()
        if mask is None:
            return None
        out = np.empty(len(self.probe_views))
        for j in range(len(self.probe_views)):
            out[j] = self.matrix[mask[:, j], j].mean()
        return out

    @property
    def excl_identical_overall(self) -> Optional[float]:
        mask = self._off_diagonal_mask()
        if mask is None:
            return None
        return float(self.matrix[mask].mean())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["protocol", "seed", "gallery_view", "probe_view", "rank1_pct"])
            for gi, g in enumerate(self.gallery_views):
                for pi, p in enumerate(self.probe_views):
                    w.writerow([self.protocol,
                                "" if self.seed is None else self.seed,
                                _fmt_view_label(g), _fmt_view_label(p),
                                f"{self.matrix[gi, pi]:.4f}"])

    def summary_text(self) -> str:
        lines = [f"protocol = {self.protocol}",
                 f"seed = {'' if self.seed is None else self.seed}",
                 "probe_sequence_policy = gallery:first-seq probe:second-seq",
                 f"overall_mean = {self.overall_mean:.4f}"]
        for p, m in zip(self.probe_views, self.probe_means):
            lines.append(f"probe_mean[{_fmt_view_label(p)}] = {m:.4f}")
        if self.excl_identical_overall is not None:
            lines.append(f"excl_identical_overall = {self.excl_identical_overall:.4f}")
            for p, m in zip(self.probe_views, self.excl_identical_probe_means):
                lines.append(f"excl_identical_probe_mean[{_fmt_view_label(p)}] = {m:.4f}")
        for n in self.notes:
            lines.append(f"note = {n}")
        return "\n".join(lines) + "\n"


def _fmt_view_label(v) -> str:
    return v if isinstance(v, str) else f"{v:g}"


def split_gallery_probe(records: Sequence[SampleRecord]):
    """First sequence of each (subject, view) becomes gallery, second probe."""
    by_cell: dict = {}
    for r in records:
        by_cell.setdefault((r.subject_id, r.view_index), []).append(r)
    gallery, probe = [], []
    for cell in sorted(by_cell):
        seqs = sorted(by_cell[cell], key=lambda r: r.seq_id)
        gallery.append(seqs[0])
        if len(seqs) > 1:
            probe.append(seqs[1])
    return gallery, probe


def _cell_views(gallery: EmbeddingSet, probe: EmbeddingSet):
    idx = sorted(set(gallery.view_indices.tolist()) | set(probe.view_indices.tolist()))
    degs = {}
    for s in (gallery, probe):
        for vi, vd in zip(s.view_indices, s.view_degs):
            degs[int(vi)] = float(vd)
    return idx, [degs[i] for i in idx]


def eval_cooperative(gallery: EmbeddingSet, probe: EmbeddingSet,
                     strict: bool = False, seed: Optional[int] = None,
                     protocol: str = "cooperative") -> EvalReport:
    """Rank-1 matrix over every (gallery view, probe view) combination."""
    view_idx, view_degs = _cell_views(gallery, probe)
    n = len(view_idx)
    matrix = np.zeros((n, n))
    counts = np.zeros((n, n), dtype=np.int64)
    notes = []
    for gi, gv in enumerate(view_idx):
        gal = gallery.subset(gallery.view_indices == gv)
        for pi, pv in enumerate(view_idx):
            pr = probe.subset(probe.view_indices == pv)
            if len(gal) == 0 or len(pr) == 0:
                msg = f"no samples for gallery view {view_degs[gi]:g} / probe view {view_degs[pi]:g}"
                if strict:
                    raise CoverageError(msg)
                notes.append(msg + "; cell skipped")
                continue
            missing = sorted(set(pr.subjects.tolist()) - set(gal.subjects.tolist()))
            if missing:
                msg = (f"gallery view {view_degs[gi]:g} lacks subjects {missing}; "
                       f"their probes skipped")
                if strict:
                    raise CoverageError(msg)
                notes.append(msg)
                warnings.warn(msg)
                keep = np.isin(pr.subjects, gal.subjects)
                pr = pr.subset(keep)
                if len(pr) == 0:
                    continue
            winners = _rank1_batch(gal, pr)
            counts[gi, pi] = len(pr)
            matrix[gi, pi] = 100.0 * float((winners == pr.subjects).mean())
    return EvalReport(protocol=protocol, seed=seed,
                      gallery_views=list(view_degs), probe_views=list(view_degs),
                      matrix=matrix, n_evaluated=counts, notes=notes)


def eval_uncooperative(gallery: EmbeddingSet, probe: EmbeddingSet,
                       seed: int = 0) -> EvalReport:
    """One uniformly drawn gallery view per subject, then per-probe-view
    rank-1 against that mixed gallery. Deterministic given the seed."""
    subjects = sorted(set(gallery.subjects.tolist()))
    if not subjects:
        raise EmptyGalleryError("uncooperative evaluation needs gallery subjects")
    rng = np.random.default_rng(seed)
    keep = np.zeros(len(gallery), dtype=bool)
    for s in subjects:
        s_mask = gallery.subjects == s
        views = sorted(set(gallery.view_indices[s_mask].tolist()))
        if not views:
            raise EmptyGalleryError(f"subject {s} has no gallery views")
        pick = views[int(rng.integers(len(views)))]
        keep |= s_mask & (gallery.view_indices == pick)
    mixed = gallery.subset(keep)

    view_idx, view_degs = _cell_views(gallery, probe)
    matrix = np.zeros((1, len(view_idx)))
    counts = np.zeros((1, len(view_idx)), dtype=np.int64)
    notes = []
    for pi, pv in enumerate(view_idx):
        pr = probe.subset(probe.view_indices == pv)
        keep2 = np.isin(pr.subjects, mixed.subjects)
        if not keep2.all():
            notes.append(f"probe view {view_degs[pi]:g}: "
                         f"{int((~keep2).sum())} probes lack gallery subjects")
        pr = pr.subset(keep2)
        if len(pr) == 0:
            continue
        winners = _rank1_batch(mixed, pr)
        counts[0, pi] = len(pr)
        matrix[0, pi] = 100.0 * float((winners == pr.subjects).mean())
    return EvalReport(protocol="uncooperative", seed=seed,
                      gallery_views=["mixed"], probe_views=list(view_degs),
                      matrix=matrix, n_evaluated=counts, notes=notes)


def gallery_size_curve(gallery: EmbeddingSet, probe: EmbeddingSet,
                       sizes: Sequence[int], trials: int = 3,
                       seed: int = 0) -> list:
    """Mean and std of the cooperative overall rank-1 over random subject
    subsets of each requested gallery size."""
    subjects = np.array(sorted(set(gallery.subjects.tolist())))
    rng = np.random.default_rng(seed)
    out = []
    for size in sizes:
        if size > len(subjects):
            raise DigganError(f"gallery size {size} exceeds population {len(subjects)}")
        means = []
        for _ in range(trials):
            subset = rng.choice(subjects, size=size, replace=False)
            g = gallery.subset(np.isin(gallery.subjects, subset))
            p = probe.subset(np.isin(probe.subjects, subset))
            means.append(eval_cooperative(g, p, seed=seed).overall_mean)
        out.append((int(size), float(np.mean(means)), float(np.std(means))))
    return out


def dm_baseline(gallery_records: Sequence[SampleRecord],
                probe_records: Sequence[SampleRecord],
                strict: bool = False) -> EvalReport:
    """Direct matching on raw pixels, same report shape as eval_cooperative."""
    return eval_cooperative(pixel_embeddings(gallery_records),
                            pixel_embeddings(probe_records),
                            strict=strict, protocol="dm")


def write_curve_csv(curve, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["gallery_size", "mean_rank1_pct", "std_rank1_pct"])
        for size, mean, std in curve:
            w.writerow([size, f"{mean:.4f}", f"{std:.4f}"])


def plot_curve(curve, path) -> None:
    """Gallery-size sweep rendered as a PNG line plot."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    sizes = [c[0] for c in curve]
    means = [c[1] for c in curve]
    stds = [c[2] for c in curve]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.errorbar(sizes, means, yerr=stds, marker="o")
    ax.set_xlabel("gallery size (subjects)")
    ax.set_ylabel("mean rank-1 (%)")
    ax.set_ylim(0, 105)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
