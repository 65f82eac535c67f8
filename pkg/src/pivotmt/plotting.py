"""Figure rendering for the report paths.

Training writes a loss-curve PNG next to its CSV log (train, validation
and, when a test oracle exists, test curves); evaluation can render the
n-gram precision profile next to its JSON report.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


def render_loss_curves(rows, out_path) -> None:
    """Plot every populated loss column of a LossLog against epoch."""
    series = {
        "train J^E": [(r.epoch, r.train_je) for r in rows if r.train_je is not None],
        "train J^D": [(r.epoch, r.train_jd) for r in rows if r.train_jd is not None],
        "train J^all": [(r.epoch, r.train_jall) for r in rows if r.train_jall is not None],
        "validation": [(r.epoch, r.val_loss) for r in rows if r.val_loss is not None],
        "test": [(r.epoch, r.test_loss) for r in rows if r.test_loss is not None],
    }
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for label, points in series.items():
        if points:
            xs, ys = zip(*points)
            ax.plot(xs, ys, label=label, linewidth=1.2)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def render_precisions(report, out_path) -> None:
    """Bar chart of p1..p4 with BLEU and BLEU+1 in the title."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    orders = [1, 2, 3, 4]
    ax.bar(orders, [p * 100.0 for p in report.precisions], color="#4878b0")
    ax.set_xticks(orders)
    ax.set_xlabel("n-gram order")
    ax.set_ylabel("precision (x100)")
    ax.set_title(
        f"BLEU {report.bleu * 100.0:.1f} (BLEU+1 {report.bleu_plus1 * 100.0:.1f}), "
        f"BP {report.brevity_penalty:.3f}"
    )
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
