"""Static SVG plots (with backing CSVs) for training logs and eval reports."""

import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .errors import ConfigError


def plot_loss_curves(log, out_dir, stem="training"):
    """Loss / lr curves from a TrainLog; writes <stem>.svg and <stem>.csv."""
    if not log.rows:
        raise ConfigError("cannot plot an empty training log")
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f"{stem}.csv")
    log.to_csv(csv_path)

    epochs = [r["epoch"] for r in log.rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    for key in ("l_cls", "l_atomic", "l_global", "l_boundary", "l_total"):
        series = [r[key] for r in log.rows]
        if any(v != 0.0 for v in series):
            ax1.plot(epochs, series, marker="o" if len(epochs) == 1 else None, label=key)
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("loss")
    ax1.set_yscale("log")
    ax1.legend(fontsize=8)
    ax2.plot(epochs, [r["val_loss"] for r in log.rows], label="val_loss",
             marker="o" if len(epochs) == 1 else None)
    ax2.set_xlabel("epoch")
    ax2.legend(fontsize=8)
    fig.tight_layout()
    svg_path = os.path.join(out_dir, f"{stem}.svg")
    fig.savefig(svg_path)
    plt.close(fig)
    return svg_path, csv_path


def plot_ap_difference(report_a, report_b, out_dir, stem="ap_difference",
                       label_a="a", label_b="b"):
    """Per-class frame-AP difference (a - b) as a bar chart plus CSV."""
    os.makedirs(out_dir, exist_ok=True)
    classes = sorted(set(report_a.frame_ap) | set(report_b.frame_ap))
    diffs = [report_a.frame_ap.get(k, 0.0) - report_b.frame_ap.get(k, 0.0) for k in classes]

    csv_path = os.path.join(out_dir, f"{stem}.csv")
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["class", f"ap_{label_a}", f"ap_{label_b}", "difference"])
        for k, d in zip(classes, diffs):
            w.writerow([k, repr(report_a.frame_ap.get(k, 0.0)),
                        repr(report_b.frame_ap.get(k, 0.0)), repr(d)])

    fig, ax = plt.subplots(figsize=(max(4, 0.5 * len(classes)), 4))
    ax.bar([str(k) for k in classes], diffs)
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_xlabel("class")
    ax.set_ylabel(f"AP({label_a}) - AP({label_b})")
    fig.tight_layout()
    svg_path = os.path.join(out_dir, f"{stem}.svg")
    fig.savefig(svg_path)
    plt.close(fig)
    return svg_path, csv_path
