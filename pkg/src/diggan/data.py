"""Sample indexing, subject-disjoint splits, and training batch samplers."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import DatasetLayoutError, EmptyDatasetError, SamplingError
from .gei import GeiImage, load_gei


@dataclass
class SampleRecord:
    """One GEI with its identity, view and sequence labels."""

    subject_id: int
    view_index: int
    seq_id: int
    gei: Optional[GeiImage]
    view_deg: float = 0.0
    path: Optional[str] = None

    def pixels(self) -> np.ndarray:
        if self.gei is None:
            if self.path is None:
                raise DatasetLayoutError("record has neither pixels nor a path")
            self.gei = load_gei(self.path)
        return self.gei.pixels


@dataclass(frozen=True)
class SplitSpec:
    train_subjects: frozenset
    test_subjects: frozenset
    seed: int

    def __post_init__(self):
        if self.train_subjects & self.test_subjects:
            raise ValueError("train and test subjects overlap")


def scan_dataset(root, lazy: bool = False) -> list[SampleRecord]:
    """Index a dataset root, via manifest.csv when present, else the layout.

    Records come back sorted by (subject, view, seq). With lazy=True the
    GEI pixels load on first access instead of up front.
    """
    root = str(root)
    manifest = os.path.join(root, "manifest.csv")
    rows = []
    if os.path.isfile(manifest):
        with open(manifest, newline="") as f:
            for row in csv.DictReader(f):
                try:
                    rows.append(
                        (int(row["subject_id"]), float(row["view_deg"]),
                         int(row["seq_id"]), os.path.join(root, row["gei_path"]))
                    )
                except (KeyError, ValueError) as e:
                    raise DatasetLayoutError(f"bad manifest row {row}: {e}") from e
    else:
        gei_root = os.path.join(root, "gei")
        if not os.path.isdir(gei_root):
            raise DatasetLayoutError(
                f"{root} has neither manifest.csv nor a gei/ directory"
            )
        for subj in sorted(os.listdir(gei_root)):
            for view in sorted(os.listdir(os.path.join(gei_root, subj))):
                vdir = os.path.join(gei_root, subj, view)
                for name in sorted(os.listdir(vdir)):
                    if name.endswith(".pgm"):
                        rows.append(
                            (int(subj), float(view), int(name[:-4]),
                             os.path.join(vdir, name))
                        )
    if not rows:
        raise EmptyDatasetError(f"no samples found under {root}")
    views = sorted({v for _, v, _, _ in rows})
    view_index = {v: i for i, v in enumerate(views)}
    records = [
        SampleRecord(
            subject_id=s, view_index=view_index[v], seq_id=q,
            gei=None if lazy else load_gei(p), view_deg=v, path=p,
        )
        for s, v, q, p in rows
    ]
    records.sort(key=lambda r: (r.subject_id, r.view_index, r.seq_id))
    return records


def dataset_views(records: Sequence[SampleRecord]) -> list[float]:
    """Declared view angles, ordered by view_index."""
    out = {}
    for r in records:
        out[r.view_index] = r.view_deg
    return [out[i] for i in sorted(out)]


def n_views(records: Sequence[SampleRecord]) -> int:
    return max(r.view_index for r in records) + 1


def one_hot(view_index: int, width: int) -> np.ndarray:
    v = np.zeros(width, dtype=np.float64)
    v[view_index] = 1.0
    return v


def split_train_test(
    records: Sequence[SampleRecord], fraction: float = 0.5, seed: int = 0
) -> SplitSpec:
    """Shuffle subjects by seed and split them into disjoint groups."""
    subjects = sorted({r.subject_id for r in records})
    if len(subjects) < 2:
        raise SamplingError("need at least 2 subjects to split")
    rng = np.random.default_rng(seed)
    order = [subjects[i] for i in rng.permutation(len(subjects))]
    n_train = int(round(len(order) * fraction))
    n_train = min(max(n_train, 1), len(order) - 1)
    return SplitSpec(frozenset(order[:n_train]), frozenset(order[n_train:]), seed)


def filter_records(records, subjects) -> list[SampleRecord]:
    subjects = set(subjects)
    return [r for r in records if r.subject_id in subjects]


def save_split(split: SplitSpec, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["subject_id", "role"])
        for s in sorted(split.train_subjects):
            w.writerow([s, "train"])
        for s in sorted(split.test_subjects):
            w.writerow([s, "test"])


def load_split(path, seed: int = 0) -> SplitSpec:
    train, test = set(), set()
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            (train if row["role"] == "train" else test).add(int(row["subject_id"]))
    return SplitSpec(frozenset(train), frozenset(test), seed)


class PairSample(NamedTuple):
    source: SampleRecord  # x at view p
    target: SampleRecord  # same subject at view k
    target_one_hot: np.ndarray


class TripletSample(NamedTuple):
    anchor: SampleRecord
    positive: SampleRecord
    negative: SampleRecord


class AngleSample(NamedTuple):
    record: SampleRecord
    label_one_hot: np.ndarray
    truth_bit: int


def _by_subject(records):
    groups: dict[int, list[SampleRecord]] = {}
    for r in records:
        groups.setdefault(r.subject_id, []).append(r)
    return groups


def sample_pair_batch(
    records: Sequence[SampleRecord],
    batch_size: int,
    rng: np.random.Generator,
    force_same_view: bool = False,
) -> list[PairSample]:
    """Draw (source, target) pairs sharing a subject, with the target's
    view one-hot.

    Cross-view targets are preferred: the target view is drawn uniformly
    among the subject's other views. force_same_view=True is the warm-up
    mode where the target IS the source record.
    """
    width = n_views(records)
    groups = _by_subject(records)
    if force_same_view:
        pool = sorted(groups)
    else:
        pool = sorted(s for s, recs in groups.items()
                      if len({r.view_index for r in recs}) >= 2)
        if not pool:
            raise SamplingError("no subject has two views; cannot draw cross-view pairs")
    out = []
    for _ in range(batch_size):
        subj = pool[rng.integers(len(pool))]
        recs = groups[subj]
        src = recs[rng.integers(len(recs))]
        if force_same_view:
            out.append(PairSample(src, src, one_hot(src.view_index, width)))
            continue
        others = [r for r in recs if r.view_index != src.view_index]
        views = sorted({r.view_index for r in others})
        k = views[rng.integers(len(views))]
        cands = [r for r in others if r.view_index == k]
        tgt = cands[rng.integers(len(cands))]
        out.append(PairSample(src, tgt, one_hot(k, width)))
    return out


def sample_triplet_batch(
    records: Sequence[SampleRecord], batch_size: int, rng: np.random.Generator
) -> list[TripletSample]:
    """Draw (anchor, positive, negative) with matching/differing subjects.

    Positives from a different view than the anchor are preferred when the
    subject has one; negatives come from a uniformly drawn other subject.
    """
    groups = _by_subject(records)
    subjects = sorted(groups)
    if len(subjects) < 2:
        raise SamplingError("triplets need at least 2 subjects")
    out = []
    for _ in range(batch_size):
        si = rng.integers(len(subjects))
        subj = subjects[si]
        recs = groups[subj]
        anchor = recs[rng.integers(len(recs))]
        cross = [r for r in recs if r.view_index != anchor.view_index]
        same = [r for r in recs if r is not anchor]
        pos_pool = cross or same or [anchor]
        positive = pos_pool[rng.integers(len(pos_pool))]
        oj = rng.integers(len(subjects) - 1)
        other = subjects[oj if oj < si else oj + 1]
        negs = groups[other]
        negative = negs[rng.integers(len(negs))]
        out.append(TripletSample(anchor, positive, negative))
    return out


def make_angle_pretrain_batch(
    records: Sequence[SampleRecord], n: int, rng: np.random.Generator
) -> list[AngleSample]:
    """Draw n records; half keep their true view label, half get a wrong one."""
    if n % 2 != 0:
        raise SamplingError(f"angle pretrain batch size must be even, got {n}")
    width = n_views(records)
    if len({r.view_index for r in records}) < 2:
        raise SamplingError("angle pretraining needs at least 2 views")
    idx = rng.integers(len(records), size=n)
    out = []
    for j, i in enumerate(idx):
        r = records[int(i)]
        if j < n // 2:
            out.append(AngleSample(r, one_hot(r.view_index, width), 1))
        else:
            wrong = int(rng.integers(width - 1))
            if wrong >= r.view_index:
                wrong += 1
            out.append(AngleSample(r, one_hot(wrong, width), 0))
    perm = rng.permutation(n)
    return [out[int(i)] for i in perm]
