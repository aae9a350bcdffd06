"""Figures written next to the CLI's text outputs."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_training_curves(history, path):
    epochs = [r[0] for r in history]
    fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax_loss.plot(epochs, [r[1] for r in history], marker="o", ms=3)
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("training loss")
    for col, label in ((2, "train acc"), (3, "test acc"), (4, "test MCC")):
        ax_acc.plot(epochs, [r[col] for r in history], label=label)
    ax_acc.set_xlabel("epoch")
    ax_acc.set_ylim(-0.05, 1.05)
    ax_acc.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_bench(records, path):
    names = [r["variant"] for r in records]
    med = np.array([r["median_s"] for r in records]) * 1e3
    err = np.array([[r["median_s"] - r["q1_s"], r["q3_s"] - r["median_s"]] for r in records]).T * 1e3
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.bar(names, med, yerr=err, capsize=3, color="tab:blue")
    ax.set_ylabel("forward time [ms] (median, IQR)")
    ax.tick_params(axis="x", rotation=30)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_embeddings(ball, labels, path):
    """Scatter the first two Poincare-ball coordinates, colored by label."""
    ball = np.asarray(ball)
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.add_patch(plt.Circle((0, 0), 1.0, fill=False, color="gray", lw=1))
    y = ball[:, 1] if ball.shape[1] > 1 else np.zeros(len(ball))
    ax.scatter(ball[:, 0], y, c=labels, cmap="tab20", s=8)
    ax.set_xlim(-1.05, 1.05)
    ax.set_ylim(-1.05, 1.05)
    ax.set_aspect("equal")
    ax.set_title("penultimate embeddings (Poincare ball, first two axes)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
