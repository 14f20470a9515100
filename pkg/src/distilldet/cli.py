"""Command-line entry point: data generation, training, evaluation, ablation."""

import argparse
import csv
import glob
import os
import sys
from dataclasses import replace

from . import data as dat
from . import evaluate as ev
from . import gradcheck as gc
from . import model as md
from . import plots
from . import train as tr
from .config import load_run_config
from .errors import ConfigError, DistillError
from .losses import LossWeights

# Loss weights used for the "full" ablation configuration; the single-term
# rows reuse the matching component weight with the others set to zero.
FULL_WEIGHTS = (0.3, 0.015, 0.002)


def _thread_cap():
    raw = os.environ.get("DISTILL_SEQ_THREADS")
    if raw is None:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"DISTILL_SEQ_THREADS must be an integer, got {raw!r}")
    if n < 1:
        raise ConfigError("DISTILL_SEQ_THREADS must be >= 1")
    try:
        import numba

        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    except ImportError:
        pass
    return n


def _load_corpus(corpus_dir):
    paths = sorted(glob.glob(os.path.join(corpus_dir, "*.dsf")))
    if not paths:
        raise ConfigError(f"no feature files (*.dsf) found in {corpus_dir}")
    return [dat.load_features(p) for p in paths]


def _teacher_default(run):
    return os.path.join(run.checkpoint_dir, "teacher_motion.ckpt")


def cmd_gen_data(run, args):
    corpus = dat.generate_synthetic_corpus(run.synth)
    os.makedirs(run.corpus_dir, exist_ok=True)
    for video in corpus:
        dat.save_features(os.path.join(run.corpus_dir, f"video_{video.id:05d}.dsf"),
                          video)
    print(f"wrote {len(corpus)} feature files to {run.corpus_dir}")
    return 0


def cmd_train_teacher(run, args):
    corpus = _load_corpus(run.corpus_dir)
    params, log = tr.train_teacher(corpus, args.modality, run.train)
    os.makedirs(run.checkpoint_dir, exist_ok=True)
    ckpt = os.path.join(run.checkpoint_dir, f"teacher_{args.modality}.ckpt")
    md.save_checkpoint(ckpt, params)
    os.makedirs(run.report_dir, exist_ok=True)
    svg, csv_path = plots.plot_loss_curves(log, run.report_dir,
                                           stem=f"teacher_{args.modality}")
    print(f"teacher checkpoint: {ckpt}")
    print(f"training log: {csv_path} (plot: {svg})")
    return 0


def cmd_train_student(run, args):
    corpus = _load_corpus(run.corpus_dir)
    teacher_paths = args.teacher or [_teacher_default(run)]
    teachers = []
    for path in teacher_paths:
        modality = os.path.basename(path).replace("teacher_", "").split(".")[0]
        if modality not in dat.MODALITY_NAMES:
            modality = args.teacher_modality
        teachers.append((md.load_checkpoint(path, role="teacher"), modality))
    params, log = tr.train_student(corpus, teachers, run.train,
                                   student_modality=args.modality)
    os.makedirs(run.checkpoint_dir, exist_ok=True)
    ckpt = os.path.join(run.checkpoint_dir, f"student_{args.modality}.ckpt")
    md.save_checkpoint(ckpt, params)
    os.makedirs(run.report_dir, exist_ok=True)
    svg, csv_path = plots.plot_loss_curves(log, run.report_dir,
                                           stem=f"student_{args.modality}")
    print(f"student checkpoint: {ckpt}")
    print(f"training log: {csv_path} (plot: {svg})")
    return 0


def _select_split(corpus, run, split):
    if split == "all":
        return corpus
    train, val = tr.split_corpus(corpus, run.train.val_fraction, run.train.seed)
    return val if split == "val" else train


def cmd_evaluate(run, args):
    corpus = _load_corpus(run.corpus_dir)
    videos = _select_split(corpus, run, args.split)
    ckpt = args.checkpoint or os.path.join(run.checkpoint_dir,
                                           f"student_{args.modality}.ckpt")
    params = md.load_checkpoint(ckpt, role="student")
    report = ev.evaluate_model(params, videos, args.modality, run.eval)
    os.makedirs(run.report_dir, exist_ok=True)
    stem = os.path.join(run.report_dir, f"eval_{args.split}")
    report.to_json(stem + ".json")
    report.to_csv(stem + ".csv")
    print(f"frame mAP: {report.frame_map:.4f}")
    for theta in sorted(report.event_map):
        print(f"event mAP@{theta:g}: {report.event_map[theta]:.4f}")
    print(f"report: {stem}.json / {stem}.csv")
    return 0


def _ablation_rows():
    a, g, b = FULL_WEIGHTS
    return [
        ("vanilla", LossWeights(0.0, 0.0, 0.0)),
        ("atomic", LossWeights(a, 0.0, 0.0)),
        ("global", LossWeights(0.0, g, 0.0)),
        ("boundary", LossWeights(0.0, 0.0, b)),
        ("full", LossWeights(a, g, b)),
    ]


def run_ablation(run, seeds, teacher_modality="motion", student_modality="appearance"):
    """Five-configuration study averaged over seeds.

    Returns {config name: (mean frame mAP, mean event mAP@0.5)} in percent.
    """
    rows = _ablation_rows()
    sums = {name: [0.0, 0.0] for name, _ in rows}
    reports = {}
    for seed in seeds:
        corpus = dat.generate_synthetic_corpus(replace(run.synth, seed=seed))
        base = replace(run.train, seed=seed)
        teacher, _ = tr.train_teacher(corpus, teacher_modality, base)
        _, val = tr.split_corpus(corpus, base.val_fraction, seed)
        for name, weights in rows:
            cfg = replace(base, weights=weights)
            params, _ = tr.train_student(corpus, [(teacher, teacher_modality)], cfg)
            report = ev.evaluate_model(params, val, student_modality, run.eval)
            reports[(seed, name)] = report
            sums[name][0] += 100.0 * report.frame_map / len(seeds)
            sums[name][1] += 100.0 * report.event_map[0.5] / len(seeds)
    means = {name: tuple(v) for name, v in sums.items()}
    return means, reports


def cmd_ablate(run, args):
    seeds = [int(s) for s in args.seeds.split(",") if s.strip() != ""]
    if not seeds:
        raise ConfigError("--seeds must list at least one integer seed")
    if 0.5 not in run.eval.iou_thresholds:
        raise ConfigError("ablation reports event mAP@0.5; add 0.5 to eval.iou_thresholds")
    means, reports = run_ablation(run, seeds)
    os.makedirs(run.report_dir, exist_ok=True)
    table = os.path.join(run.report_dir, "ablation.csv")
    with open(table, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["config", "frame_map", "event_map_0.5"])
        for name, (f, e) in means.items():
            w.writerow([name, repr(f), repr(e)])
    print(f"{'config':<10} {'frame mAP':>10} {'event mAP@0.5':>14}")
    for name, (f, e) in means.items():
        print(f"{name:<10} {f:>10.2f} {e:>14.2f}")
    print(f"table: {table}")
    first = seeds[0]
    plots.plot_ap_difference(reports[(first, 'full')], reports[(first, 'vanilla')],
                             run.report_dir, stem="ablation_full_vs_vanilla",
                             label_a="full", label_b="vanilla")
    return 0


def cmd_gradcheck(run, args):
    results, ok = gc.run_suites(seeds=range(args.seeds), tol=args.tol)
    for name, err in results.items():
        status = "pass" if err < args.tol else "FAIL"
        print(f"{name:<24} max relative error {err:.3e}  [{status}]")
    if not ok:
        print("gradcheck FAILED", file=sys.stderr)
        return 1
    print("all gradient suites pass")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="distilldet",
        description="Cross-modal teacher-student distillation for frame-level "
                    "action detection on synthetic feature streams.")
    parser.add_argument("--config", default=None, help="INI configuration file")
    parser.add_argument("--set", action="append", default=[], metavar="SEC.KEY=VAL",
                        dest="overrides", help="override a config value")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gen-data", help="write the synthetic feature corpus to disk")

    p = sub.add_parser("train-teacher", help="train a teacher on one modality")
    p.add_argument("--modality", default="motion", choices=dat.MODALITY_NAMES)

    p = sub.add_parser("train-student", help="distill frozen teachers into a student")
    p.add_argument("--modality", default="appearance", choices=dat.MODALITY_NAMES)
    p.add_argument("--teacher", action="append", default=None,
                   help="teacher checkpoint path (repeatable)")
    p.add_argument("--teacher-modality", default="motion", choices=dat.MODALITY_NAMES,
                   help="modality for teacher files with non-standard names")

    p = sub.add_parser("evaluate", help="score a checkpoint and write a report")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--modality", default="appearance", choices=dat.MODALITY_NAMES)
    p.add_argument("--split", default="val", choices=("val", "train", "all"))

    p = sub.add_parser("ablate", help="five-configuration loss ablation study")
    p.add_argument("--seeds", default="0,1,2", help="comma-separated seeds")

    p = sub.add_parser("gradcheck", help="run the finite-difference suites")
    p.add_argument("--seeds", type=int, default=10, help="seeds per suite")
    p.add_argument("--tol", type=float, default=1e-6)
    return parser


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train-teacher": cmd_train_teacher,
    "train-student": cmd_train_student,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _thread_cap()
        run = load_run_config(args.config, args.overrides)
        return COMMANDS[args.command](run, args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DistillError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
