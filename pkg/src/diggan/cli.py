"""Command-line entry point wiring all modules into reproducible runs.

Exit codes: 0 success, 1 runtime failure, 2 unknown command or bad usage,
3 config parse error. Every command writes a run manifest of the resolved
config and seed into its output directory, sufficient to replay the run.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import config as cfgmod
from .checkpoint import load_checkpoint, save_checkpoint
from .data import (
    dataset_views,
    filter_records,
    load_split,
    save_split,
    scan_dataset,
    split_train_test,
)
from .errors import ConfigError, DigganError
from .evaluation import (
    dm_baseline,
    eval_cooperative,
    eval_uncooperative,
    extract_embeddings,
    gallery_size_curve,
    plot_curve,
    split_gallery_probe,
    write_curve_csv,
)
from .evidence import consistency_grid, generate_all_views
from .gei import compute_gei, gei_file, load_gei, load_silhouette_sequence, save_gei
from .synth import VIEWS_14, SynthDatasetSpec, generate_dataset
from .training import TrainConfig, fine_tune, run_curriculum


def _write_manifest(out_dir, command: str, cfg: dict, seed: int) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "run_manifest.txt"), "w") as f:
        f.write(f"command = {command}\n")
        f.write(f"seed = {seed}\n")
        for k in sorted(cfg):
            f.write(f"{k} = {cfg[k]}\n")


def _resolved(args, **overrides) -> dict:
    file_values = cfgmod.load_config(args.config) if args.config else {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    return cfgmod.resolve(file_values, overrides)


def _train_config(cfg: dict, n_views: int) -> TrainConfig:
    m = dict(cfg)
    m["n_views"] = n_views
    return TrainConfig.from_mapping(m)


def _load_records(root):
    records = scan_dataset(root)
    return records


def _cmd_synth(args) -> int:
    cfg = _resolved(args)
    seed = cfgmod.get_int(cfg, "seed")
    spec = SynthDatasetSpec(
        n_subjects=cfgmod.get_int(cfg, "n_subjects"),
        views_deg=tuple(cfgmod.get_views(cfg)),
        seqs_per_view=cfgmod.get_int(cfg, "seqs_per_view"),
        frames_per_seq=cfgmod.get_int(cfg, "frames_per_seq"),
        seed=seed,
    )
    records = generate_dataset(spec, args.out)
    _write_manifest(args.out, "synth", cfg, seed)
    print(f"wrote {len(records)} GEIs under {args.out}")
    return 0


def _cmd_gei(args) -> int:
    cfg = _resolved(args)
    seed = cfgmod.get_int(cfg, "seed")
    in_root = args.data
    count = 0
    if not os.path.isdir(in_root):
        raise DigganError(f"silhouette root {in_root} does not exist")
    for subj in sorted(os.listdir(in_root)):
        sdir = os.path.join(in_root, subj)
        if not os.path.isdir(sdir) or subj == "gei":
            continue
        for view in sorted(os.listdir(sdir)):
            vdir = os.path.join(sdir, view)
            if not os.path.isdir(vdir):
                continue
            for seq in sorted(os.listdir(vdir)):
                qdir = os.path.join(vdir, seq)
                if not os.path.isdir(qdir):
                    continue
                seq_frames = load_silhouette_sequence(qdir)
                g = compute_gei(seq_frames, meta=f"{subj}:{view}:{seq}")
                save_gei(g, gei_file(args.out, int(subj), float(view), int(seq)))
                count += 1
    if count == 0:
        raise DigganError(f"no silhouette sequences under {in_root}")
    _write_manifest(args.out, "gei", cfg, seed)
    print(f"wrote {count} GEIs under {args.out}")
    return 0


def _cmd_train(args) -> int:
    cfg = _resolved(args)
    seed = cfgmod.get_int(cfg, "seed")
    records = _load_records(args.data)
    split = split_train_test(records, cfgmod.get_float(cfg, "train_fraction"), seed)
    train_records = filter_records(records, split.train_subjects)
    tc = _train_config(cfg, n_views=len(dataset_views(records)))
    os.makedirs(args.out, exist_ok=True)
    save_split(split, os.path.join(args.out, "split.csv"))
    _write_manifest(args.out, "train", cfg, seed)
    ck = run_curriculum(tc, train_records, out_dir=args.out)
    print(f"trained to stage {ck.stage} at step {ck.global_step}; "
          f"checkpoint at {os.path.join(args.out, 'final.ckpt')}")
    return 0


def _cmd_finetune(args) -> int:
    cfg = _resolved(args)
    seed = cfgmod.get_int(cfg, "seed")
    records = _load_records(args.data)
    ck = load_checkpoint(args.ckpt)
    split = split_train_test(records, cfgmod.get_float(cfg, "train_fraction"), seed)
    train_records = filter_records(records, split.train_subjects)
    tc = _train_config(cfg, n_views=len(dataset_views(records)))
    out = fine_tune(tc, train_records, ck)
    os.makedirs(args.out, exist_ok=True)
    save_split(split, os.path.join(args.out, "split.csv"))
    save_checkpoint(out, os.path.join(args.out, "final.ckpt"))
    _write_manifest(args.out, "finetune", cfg, seed)
    print(f"fine-tuned for {len(out.loss_log)} steps; "
          f"checkpoint at {os.path.join(args.out, 'final.ckpt')}")
    return 0


def _eval_records(args, cfg):
    records = _load_records(args.data)
    if args.split:
        split = load_split(args.split)
        records = filter_records(records, split.test_subjects)
    return records


def _cmd_eval(args) -> int:
    cfg = _resolved(args)
    seed = cfgmod.get_int(cfg, "seed")
    records = _eval_records(args, cfg)
    gallery_records, probe_records = split_gallery_probe(records)
    os.makedirs(args.out, exist_ok=True)

    if args.mode == "dm":
        report = dm_baseline(gallery_records, probe_records)
    else:
        ck = load_checkpoint(args.ckpt)
        gal = extract_embeddings(ck.params, gallery_records)
        pro = extract_embeddings(ck.params, probe_records)
        if args.mode == "cooperative":
            report = eval_cooperative(gal, pro, seed=seed)
        elif args.mode == "uncooperative":
            report = eval_uncooperative(gal, pro, seed=seed)
        else:  # curve
            sizes = cfgmod.get_int_list(cfg, "curve_sizes")
            trials = cfgmod.get_int(cfg, "curve_trials")
            curve = gallery_size_curve(gal, pro, sizes, trials, seed)
            write_curve_csv(curve, os.path.join(args.out, "curve.csv"))
            plot_curve(curve, os.path.join(args.out, "curve.png"))
            _write_manifest(args.out, f"eval {args.mode}", cfg, seed)
            print(f"gallery-size curve written to {args.out}")
            return 0
    report.to_csv(os.path.join(args.out, "report.csv"))
    with open(os.path.join(args.out, "summary.txt"), "w") as f:
        f.write(report.summary_text())
    _write_manifest(args.out, f"eval {args.mode}", cfg, seed)
    print(report.summary_text(), end="")
    return 0


def _cmd_generate(args) -> int:
    cfg = _resolved(args)
    seed = cfgmod.get_int(cfg, "seed")
    ck = load_checkpoint(args.ckpt)
    records = _load_records(args.data)
    views = dataset_views(records)
    probe = records[0]
    if args.subject is not None:
        matches = [r for r in records if r.subject_id == args.subject]
        if not matches:
            raise DigganError(f"subject {args.subject} not in dataset")
        probe = matches[0]
    os.makedirs(args.out, exist_ok=True)

    if args.mode == "all-views":
        targets = list(VIEWS_14) if args.views == "preset14" else views
        images = generate_all_views(
            ck.params, probe, targets, views,
            out_path=os.path.join(args.out, "all_views.pgm"),
            experimental=True,
        )
        print(f"generated {len(images)} views for subject {probe.subject_id}")
    else:  # consistency
        gallery_records, _ = split_gallery_probe(records)
        k = cfgmod.get_int(cfg, "rank_k")
        _, ranked = consistency_grid(
            ck.params, probe, gallery_records, k=k,
            out_path=os.path.join(args.out, "consistency.pgm"),
        )
        print(f"rank-{k} subjects for probe subject {probe.subject_id}: {ranked}")
    _write_manifest(args.out, f"generate {args.mode}", cfg, seed)
    return 0


def _cmd_report(args) -> int:
    import csv as _csv

    with open(args.infile, newline="") as f:
        rows = list(_csv.reader(f))
    if not rows:
        raise DigganError(f"{args.infile} is empty")
    header, body = rows[0], rows[1:]
    if header[:1] == ["gallery_size"]:
        curve = [(int(r[0]), float(r[1]), float(r[2])) for r in body]
        os.makedirs(args.out, exist_ok=True)
        plot_curve(curve, os.path.join(args.out, "curve.png"))
        print(f"plot written to {os.path.join(args.out, 'curve.png')}")
        return 0
    # rank-1 report: render as a gallery x probe table
    gal_views, probe_views = [], []
    cells = {}
    for r in body:
        g, p, val = r[2], r[3], float(r[4])
        if g not in gal_views:
            gal_views.append(g)
        if p not in probe_views:
            probe_views.append(p)
        cells[(g, p)] = val
    widths = max(8, max(len(v) for v in probe_views) + 2)
    lines = ["gallery\\probe".ljust(14)
             + "".join(p.rjust(widths) for p in probe_views) + "    mean".rjust(8)]
    for g in gal_views:
        vals = [cells[(g, p)] for p in probe_views]
        lines.append(g.ljust(14) + "".join(f"{v:{widths}.1f}" for v in vals)
                     + f"{np.mean(vals):8.1f}")
    means = [np.mean([cells[(g, p)] for g in gal_views]) for p in probe_views]
    lines.append("mean".ljust(14) + "".join(f"{v:{widths}.1f}" for v in means)
                 + f"{np.mean(means):8.1f}")
    table = "\n".join(lines) + "\n"
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "table.txt"), "w") as f:
        f.write(table)
    print(table, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="diggan",
        description="Cross-view gait identification: synthesis, training, "
                    "evaluation and evidence generation.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--out", required=out_required, help="output directory")

    p = sub.add_parser("synth", help="generate a synthetic multi-view dataset")
    common(p)

    p = sub.add_parser("gei", help="convert silhouette sequences to GEIs")
    p.add_argument("--data", required=True, help="silhouette root directory")
    common(p)

    p = sub.add_parser("train", help="run the full staged curriculum")
    p.add_argument("--data", required=True, help="dataset root")
    common(p)

    p = sub.add_parser("finetune", help="resume stage-C training on a new dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    common(p)

    p = sub.add_parser("eval", help="run an evaluation protocol")
    p.add_argument("mode", choices=["cooperative", "uncooperative", "curve", "dm"])
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", help="trained checkpoint (not needed for dm)")
    p.add_argument("--split", help="split.csv restricting to test subjects")
    common(p)

    p = sub.add_parser("generate", help="evidence artifacts from a checkpoint")
    p.add_argument("mode", choices=["all-views", "consistency"])
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--subject", type=int, help="probe subject id (default: first)")
    p.add_argument("--views", choices=["dataset", "preset14"], default="dataset")
    common(p)

    p = sub.add_parser("report", help="render a report CSV as table or plot")
    p.add_argument("infile")
    common(p)
    return ap


_COMMANDS = {
    "synth": _cmd_synth,
    "gei": _cmd_gei,
    "train": _cmd_train,
    "finetune": _cmd_finetune,
    "eval": _cmd_eval,
    "generate": _cmd_generate,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 3
    except DigganError as e:
        print(f"error: {e.__class__.__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
