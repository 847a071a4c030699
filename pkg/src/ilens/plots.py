"""Figure rendering for the reporting commands.

All figures are written as SVG next to the delimited outputs they
illustrate.  Rendering is deterministic: the SVG id salt is pinned and the
creation date can be suppressed so that reruns produce byte-identical
files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "ilens"

_POS_COLOR = "#c23b22"
_NEG_COLOR = "#1f77b4"


def save_svg(fig, path, no_timestamp: bool = False) -> None:
    metadata = {"Date": None} if no_timestamp else None
    fig.savefig(path, format="svg", metadata=metadata)
    plt.close(fig)


def _orders(n: int) -> np.ndarray:
    return np.arange(1, n + 1)


def distribution_figure(dist, title: str = "interaction strength by order"):
    fig, ax = plt.subplots(figsize=(6, 4))
    m = _orders(dist.n)
    width = 0.4
    ax.bar(m - width / 2, dist.pos[1:], width, label="positive", color=_POS_COLOR)
    ax.bar(m + width / 2, dist.neg[1:], width, label="negative", color=_NEG_COLOR)
    ax.set_xlabel("order m")
    ax.set_ylabel("strength")
    ax.set_title(title)
    ax.set_xticks(m)
    ax.legend()
    fig.tight_layout()
    return fig


def fit_figure(dist, result, title: str = "spindle + decay disentanglement"):
    from .parametric import SpindleParams, spindle_curve

    n = dist.n
    m = _orders(n)
    spindle = result.spindle.beta * spindle_curve(
        SpindleParams(result.spindle.alpha, 1.0), n
    )
    fig, axes = plt.subplots(1, 2, figsize=(10, 4), sharex=True)
    for ax, measured, theory, resid, sign in (
        (axes[0], dist.pos, result.theory_pos, result.residual_pos, "positive"),
        (axes[1], dist.neg, result.theory_neg, result.residual_neg, "negative"),
    ):
        decay = theory - spindle
        ax.plot(m, measured[1:], "o-", color="black", label="measured")
        ax.plot(m, theory[1:], "-", color="#7a28cb", label="theory")
        ax.plot(m, spindle[1:], "--", color=_POS_COLOR, label="spindle part")
        ax.plot(m, decay[1:], "--", color=_NEG_COLOR, label="decay part")
        ax.plot(m, resid[1:], ":", color="gray", label="residual")
        ax.set_title(f"{sign} curve")
        ax.set_xlabel("order m")
        ax.set_xticks(m)
    axes[0].set_ylabel("strength")
    axes[0].legend(fontsize=8)
    fig.suptitle(title)
    fig.tight_layout()
    return fig


def jaccard_figure(sims: np.ndarray, title: str = "generalization by order"):
    fig, ax = plt.subplots(figsize=(6, 4))
    m = np.arange(sims.size)
    keep = np.isfinite(sims)
    ax.plot(m[keep], sims[keep], "o-", color=_NEG_COLOR)
    ax.set_xlabel("order m")
    ax.set_ylabel("Jaccard similarity")
    ax.set_ylim(-0.05, 1.05)
    ax.set_title(title)
    fig.tight_layout()
    return fig


def timeline_figure(rows, title: str = "training timeline"):
    """rows: sequence of dicts with epoch, train/test loss and mass columns."""
    epochs = [r["epoch"] for r in rows]
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    axes[0].plot(epochs, [r["train_loss"] for r in rows], "o-", label="train loss")
    axes[0].plot(epochs, [r["test_loss"] for r in rows], "s-", label="test loss")
    axes[0].set_xlabel("epoch")
    axes[0].set_ylabel("logistic loss")
    axes[0].legend()
    axes[1].plot(
        epochs, [r["total_mass"] for r in rows], "o-", color=_POS_COLOR, label="mass"
    )
    twin = axes[1].twinx()
    twin.plot(
        epochs,
        [r["decay_fraction"] for r in rows],
        "s--",
        color=_NEG_COLOR,
        label="decay fraction",
    )
    twin.set_ylim(-0.05, 1.05)
    twin.set_ylabel("decay fraction")
    axes[1].set_xlabel("epoch")
    axes[1].set_ylabel("interaction mass")
    handles, labels = axes[1].get_legend_handles_labels()
    h2, l2 = twin.get_legend_handles_labels()
    axes[1].legend(handles + h2, labels + l2, fontsize=8)
    fig.suptitle(title)
    fig.tight_layout()
    return fig


def curves_figure(curves, title: str, ylabel: str = "strength"):
    """Overlaid per-order curves; curves is a list of (label, distribution)."""
    fig, ax = plt.subplots(figsize=(6.5, 4))
    cmap = plt.get_cmap("viridis")
    total = max(len(curves), 2)
    for pos_idx, (label, dist) in enumerate(curves):
        m = _orders(dist.n)
        color = cmap(pos_idx / (total - 1))
        ax.plot(m, dist.pos[1:], "o-", color=color, label=f"{label} (+)")
        ax.plot(m, dist.neg[1:], "s--", color=color, alpha=0.6, label=f"{label} (-)")
    ax.set_xlabel("order m")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend(fontsize=7)
    fig.tight_layout()
    return fig
