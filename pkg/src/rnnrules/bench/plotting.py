"""Matplotlib figures for sweep reports and concentric-ring language plots.

Figures are written as SVG with fixed ids and no timestamp so reruns produce
identical files.
"""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.patches import Wedge  # noqa: E402

from ..grammars import RingData  # noqa: E402

POSITIVE = "#ffffff"
NEGATIVE = "#1f3b73"

STYLE = {
    "svg.hashsalt": "rnnrules",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.fontsize": 7,
    "legend.frameon": False,
}


def _save(fig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return path


def accuracy_vs_size(rows, grammar: str, path) -> Path:
    """Mean +/- std test accuracy (bin 0) against hidden-size multiplier."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, figsize=(7.5, 3.0), sharey=True)
        series = defaultdict(list)
        for r in rows:
            if r.grammar == grammar and r.n_seeds:
                series[(r.cell, r.method)].append(r)
        for (cell, method), rs in sorted(series.items()):
            rs.sort(key=lambda r: r.hidden_mult)
            x = [r.hidden_mult for r in rs]
            for ax, mean, std in ((axes[0], "acc_mean_bin0", "acc_std_bin0"),
                                  (axes[1], "acc_mean_bin1", "acc_std_bin1")):
                ax.errorbar(x, [getattr(r, mean) for r in rs], yerr=[getattr(r, std) for r in rs],
                            marker="o", ms=3, capsize=2, label=f"{cell}/{method}")
        axes[0].set_title(f"{grammar}: test bin 0")
        axes[1].set_title(f"{grammar}: test bin 1")
        for ax in axes:
            ax.set_xlabel("hidden size multiplier")
            ax.set_ylim(0.0, 1.05)
        axes[0].set_ylabel("DFA accuracy")
        if series:
            axes[1].legend(loc="lower right")
        fig.tight_layout()
        return _save(fig, path)


def state_counts(rows, grammar: str, path) -> Path:
    """Min / mode / max extracted state counts per cell and method."""
    with plt.rc_context(STYLE):
        sel = sorted((r for r in rows if r.grammar == grammar and r.n_seeds),
                     key=lambda r: (r.hidden_mult, r.cell, r.method))
        fig, ax = plt.subplots(figsize=(max(3.0, 0.5 * len(sel) + 1.5), 3.0))
        labels = [f"{r.cell}/{r.method}\nx{r.hidden_mult}" for r in sel]
        for i, r in enumerate(sel):
            ax.vlines(i, r.states_min, r.states_max, color="0.4", lw=1.5)
            ax.plot([i], [r.states_mode], "o", color="C3", ms=4)
        ax.set_xticks(range(len(sel)))
        ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=6)
        ax.set_ylabel("states (min / mode / max)")
        if sel and max(r.states_max for r in sel) > 50:
            ax.set_yscale("log")
        ax.set_title(grammar)
        fig.tight_layout()
        return _save(fig, path)


def network_accuracy(rows, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.0))
        series = defaultdict(list)
        for r in rows:
            if r.n_seeds:
                series[(r.grammar, r.cell)].append(r)
        for (grammar, cell), rs in sorted(series.items()):
            rs.sort(key=lambda r: r.hidden_mult)
            ax.errorbar([r.hidden_mult for r in rs], [r.acc_mean_bin0 for r in rs],
                        yerr=[r.acc_std_bin0 for r in rs], marker="o", ms=3, capsize=2,
                        label=f"{grammar}/{cell}")
        ax.set_xlabel("hidden size multiplier")
        ax.set_ylabel("network accuracy (bin 0)")
        ax.set_ylim(0.0, 1.05)
        if series:
            ax.legend(loc="lower right")
        fig.tight_layout()
        return _save(fig, path)


def ring_figure(rings: RingData, path, title: str | None = None) -> Path:
    """Concentric rings, innermost = shortest length; white = accepted string.

    Each string is one wedge with SVG id ``ring<L>-<i>``.
    """
    lengths = sorted(rings.rings)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.0, 4.0))
        width = 1.0
        for depth, length in enumerate(lengths):
            labels, _ = rings.rings[length]
            n = len(labels)
            inner = 1.0 + depth * width
            for i, lab in enumerate(labels):
                theta1 = 90.0 - 360.0 * (i + 1) / n
                theta2 = 90.0 - 360.0 * i / n
                w = Wedge((0, 0), inner + width, theta1, theta2, width=width,
                          facecolor=POSITIVE if lab else NEGATIVE,
                          edgecolor="0.6" if n <= 64 else "none", linewidth=0.3)
                w.set_gid(f"ring{length}-{i}")
                ax.add_patch(w)
        outer = 1.0 + len(lengths) * width
        ax.set_xlim(-outer, outer)
        ax.set_ylim(-outer, outer)
        ax.set_aspect("equal")
        ax.axis("off")
        if title:
            ax.set_title(title)
        return _save(fig, path)


def safe_name(s: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in s)
