"""Matplotlib figures for run reports. Files are written with the Agg backend and no timestamp metadata."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# PNG text chunks carry the matplotlib version unless suppressed
_PNG_META = {"Software": None}

STYLE = {
    "figure.figsize": (5.0, 3.6),
    "figure.dpi": 100,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "svg.hashsalt": "mpqplan",
}


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, metadata=_PNG_META)
    plt.close(fig)


def frontier_figure(points, path, cost_kind: str = "size", selected=None) -> None:
    """Perturbation against one cost column for frontier points."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        xs = [p.cost.get(cost_kind) for p in points]
        ys = [p.perturbation for p in points]
        ax.plot(xs, ys, "o-", ms=3, lw=1, color="tab:blue", label="frontier")
        if selected is not None:
            ax.plot([selected[0]], [selected[1]], "*", ms=11, color="tab:red", label="selected")
        ax.set_xlabel({"size": "size (MB)", "bops": "GBOPs", "latency": "latency (rel.)"}[cost_kind])
        ax.set_ylabel("total sensitivity")
        if ys and min(ys) > 0:
            ax.set_yscale("log")
        ax.legend(frameon=False)
        _save(fig, path)


def sensitivity_figure(profile, path) -> None:
    """Per-layer delta for every bit option, log scale."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        idx = range(len(profile.layer_names))
        for j, b in enumerate(profile.bit_options):
            vals = [max(profile.delta[i, j], 1e-300) for i in idx]
            ax.plot(list(idx), vals, "o-", ms=3, lw=1, label=f"{b}-bit")
        ax.set_xticks(list(idx))
        ax.set_xticklabels(profile.layer_names, rotation=45, ha="right", fontsize=7)
        ax.set_yscale("log")
        ax.set_ylabel("delta")
        ax.legend(frameon=False)
        _save(fig, path)


def search_figure(entries, path) -> None:
    """Realized score per evaluation and the best-so-far curve over full evaluations."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        short = [(i, e.realized) for i, e in enumerate(entries) if e.fidelity == "short"]
        full = [(i, e.realized) for i, e in enumerate(entries) if e.fidelity == "full"]
        if short:
            ax.scatter(*zip(*short), s=12, color="tab:gray", label="short")
        if full:
            ax.scatter(*zip(*full), s=14, color="tab:blue", label="full")
            best, xs, ys = -1.0, [], []
            for i, s in full:
                best = max(best, s)
                xs.append(i)
                ys.append(best)
            ax.step(xs, ys, where="post", color="tab:red", lw=1, label="best full")
        ax.set_xlabel("evaluation")
        ax.set_ylabel("score")
        ax.legend(frameon=False)
        _save(fig, path)
