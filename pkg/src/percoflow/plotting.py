"""Static SVG renderings of result tables.

Plots only draw columns they are handed; no statistic is computed here.
Output is byte-stable: fixed hash salt, no date stamp.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_RC = {"svg.hashsalt": "percoflow", "svg.fonttype": "none", "path.simplify": False}


def _save(fig, path):
    with matplotlib.rc_context(_RC):
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def plot_series(path, x, y, yerr=None, xlabel="n", ylabel="value", title="",
                reference=None, reference_label="reference", logx=True):
    with matplotlib.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.errorbar(x, y, yerr=yerr, marker="o", capsize=3, label="mean")
        if reference is not None:
            ax.axhline(reference, color="k", lw=0.8, ls="--", label=reference_label)
        if logx and len(x) > 1:
            ax.set_xscale("log", base=2)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        ax.legend(frameon=False)
        fig.tight_layout()
        _save(fig, path)


def plot_bars(path, labels, heights, xlabel="", ylabel="frequency", title=""):
    with matplotlib.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.bar([str(s) for s in labels], heights)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        fig.tight_layout()
        _save(fig, path)


def plot_polygons(path, polygons, labels=None, title=""):
    """Closed outlines of 2-D polygons given as ordered vertex arrays."""
    with matplotlib.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.5, 4.5))
        for i, V in enumerate(polygons):
            xs = list(V[:, 0]) + [V[0, 0]]
            ys = list(V[:, 1]) + [V[0, 1]]
            ax.plot(xs, ys, marker=".", label=None if labels is None else labels[i])
        ax.set_aspect("equal")
        if labels is not None:
            ax.legend(frameon=False)
        if title:
            ax.set_title(title)
        fig.tight_layout()
        _save(fig, path)
