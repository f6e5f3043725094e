"""Deterministic matplotlib rendering for the report and plot paths.

Figures are written as static SVG with a fixed hash salt and no embedded
date, so identical inputs produce byte-identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_RC = {
    "svg.hashsalt": "fluxfno",
    "figure.figsize": (7.0, 4.5),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
}


def _save(fig, path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def render_profiles(path, x: np.ndarray, curves: list[tuple[str, np.ndarray, str]],
                    title: str = "", xlabel: str = "x", ylabel: str = "u") -> None:
    """Overlay solution profiles; curves are (label, values, style) with style
    'pred' (dashed, triangle markers) or 'ref' (solid)."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        for label, values, style in curves:
            if style == "pred":
                ax.plot(x, values, "--", marker="^", markevery=max(1, len(x) // 16), label=label)
            else:
                ax.plot(x, values, "-", label=label)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        ax.legend(loc="best")
        _save(fig, path)


def render_metrics(path, rows: list[tuple[str, float, float, float]], title: str = "") -> None:
    """Per-time error curves from report rows (label, time, rel_l2, linf);
    rows without a per-time reading (aggregates) are skipped."""
    per_time = [(t, r, li) for label, t, r, li in rows if label.startswith("t=") or " t=" in label]
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        if per_time:
            times = [t for t, _, _ in per_time]
            ax.plot(times, [r for _, r, _ in per_time], "o-", label="rel L2")
            ax.plot(times, [li for _, _, li in per_time], "s--", label="L-inf")
            if any(r > 0 or li > 0 for _, r, li in per_time):  # all-zero: keep linear
                ax.set_yscale("log")
        ax.set_xlabel("t")
        ax.set_ylabel("error")
        if title:
            ax.set_title(title)
        ax.legend(loc="best")
        _save(fig, path)
