"""Smoke-benchmark driver: train on the 32+32 synthetic set, report rank-1.

Usage: python scripts/bench_smoke.py [seed ...]
Tunables via env: BASE, DZ, SA, SB1, SB2, SC, BATCH, NPRE
"""
import os
import sys
import time

import numpy as np

from diggan.synth import SynthDatasetSpec, build_records
from diggan.data import split_train_test, filter_records
from diggan.training import TrainConfig, run_curriculum
from diggan.evaluation import (extract_embeddings, eval_cooperative,
                               split_gallery_probe, dm_baseline)

seeds = [int(a) for a in sys.argv[1:]] or [0]
base = int(os.environ.get("BASE", 8))
dz = int(os.environ.get("DZ", 64))
sa = int(os.environ.get("SA", 150))
sb1 = int(os.environ.get("SB1", 150))
sb2 = int(os.environ.get("SB2", 300))
sc = int(os.environ.get("SC", 600))
batch = int(os.environ.get("BATCH", 16))
npre = int(os.environ.get("NPRE", 32))

t0 = time.time()
spec = SynthDatasetSpec(n_subjects=64, seed=101)
recs = build_records(spec)
print(f"dataset: {len(recs)} records in {time.time()-t0:.1f}s", flush=True)

for seed in seeds:
    split = split_train_test(recs, 0.5, seed)
    train = filter_records(recs, split.train_subjects)
    test = filter_records(recs, split.test_subjects)
    cfg = TrainConfig(steps_a=sa, steps_b1=sb1, steps_b2=sb2, steps_c=sc,
                      batch_size=batch, pretrain_batch=npre,
                      base_channels=base, d_z=dz, seed=seed, n_views=4)
    t0 = time.time()
    ck = run_curriculum(cfg, train)
    dt = time.time() - t0
    gal_r, pro_r = split_gallery_probe(test)
    gal = extract_embeddings(ck.params, gal_r)
    pro = extract_embeddings(ck.params, pro_r)
    rep = eval_cooperative(gal, pro)
    dm = dm_baseline(gal_r, pro_r)
    print(f"seed {seed}: train {dt/60:.1f} min | "
          f"excl-identical {rep.excl_identical_overall:.1f}% "
          f"(overall {rep.overall_mean:.1f}%) | DM excl {dm.excl_identical_overall:.1f}%",
          flush=True)
    print(np.round(rep.matrix, 1), flush=True)
