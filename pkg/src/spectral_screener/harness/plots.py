"""Scree-plot rendering: a dependency-free standalone SVG plus matplotlib
figures written next to the delimited output.

The SVG writer keeps a rigid element vocabulary on purpose: one <circle> per
eigenvalue, one <line> per threshold, axes as <path>.  That makes the document
structurally checkable and byte-deterministic (matplotlib SVGs embed
timestamps, so they are unsuitable for the reproducibility contract).
"""

from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 420
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 64, 24, 28, 44


def scree_svg(eigenvalues, thresholds: list[tuple[str, float]] | None = None) -> str:
    """Log-scale scree plot as a standalone SVG document.

    ``thresholds`` is a list of (label, level) pairs drawn as horizontal lines.
    Nonpositive eigenvalues are clamped to half a decade below the smallest
    positive value so they stay visible on the log axis.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    if lam.size == 0:
        raise ValueError("cannot draw a scree plot of an empty spectrum")
    if not np.any(lam > 0):
        raise ValueError("cannot draw a log-scale scree plot of an all-zero spectrum")
    thresholds = list(thresholds or [])

    positive = lam[lam > 0]
    levels = [lvl for _, lvl in thresholds if lvl > 0]
    lo = min(float(positive.min()), *levels) if levels else float(positive.min())
    hi = max(float(positive.max()), *levels) if levels else float(positive.max())
    floor = lo / math.sqrt(10.0)
    y_lo, y_hi = math.log10(floor), math.log10(hi) + 0.1
    if y_hi <= y_lo:
        y_hi = y_lo + 1.0

    def x_pos(i: int) -> float:
        if lam.size == 1:
            return (MARGIN_L + WIDTH - MARGIN_R) / 2.0
        frac = i / (lam.size - 1)
        return MARGIN_L + frac * (WIDTH - MARGIN_L - MARGIN_R)

    def y_pos(value: float) -> float:
        v = math.log10(max(value, floor))
        frac = (v - y_lo) / (y_hi - y_lo)
        return HEIGHT - MARGIN_B - frac * (HEIGHT - MARGIN_T - MARGIN_B)

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<path d="M {MARGIN_L} {MARGIN_T} V {HEIGHT - MARGIN_B} H {WIDTH - MARGIN_R}" '
        'fill="none" stroke="#333" stroke-width="1"/>',
        f'<text x="{WIDTH // 2}" y="{HEIGHT - 10}" text-anchor="middle" '
        'font-family="sans-serif" font-size="12">eigenvalue index</text>',
        f'<text x="14" y="{HEIGHT // 2}" text-anchor="middle" font-family="sans-serif" '
        f'font-size="12" transform="rotate(-90 14 {HEIGHT // 2})">eigenvalue (log scale)</text>',
    ]
    for label, level in thresholds:
        y = y_pos(level)
        parts.append(
            f'<line x1="{MARGIN_L}" y1="{y:.2f}" x2="{WIDTH - MARGIN_R}" y2="{y:.2f}" '
            'stroke="#c0392b" stroke-width="1.5" stroke-dasharray="6 3"/>'
        )
        parts.append(
            f'<text x="{WIDTH - MARGIN_R - 4}" y="{y - 5:.2f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11" fill="#c0392b">{escape(label)}</text>'
        )
    for i, value in enumerate(lam):
        parts.append(
            f'<circle cx="{x_pos(i):.2f}" cy="{y_pos(float(value)):.2f}" r="3.5" '
            'fill="#2c3e50"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts)


def write_scree_svg(eigenvalues, thresholds, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(scree_svg(eigenvalues, thresholds))
    return path


def write_scree_png(eigenvalues, thresholds, path: str | Path, title: str = "") -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    lam = np.asarray(eigenvalues, dtype=float)
    floor = lam[lam > 0].min() / 10.0
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.semilogy(np.arange(1, lam.size + 1), np.maximum(lam, floor), "o", ms=4, color="#2c3e50")
    for label, level in thresholds or []:
        ax.axhline(level, color="#c0392b", ls="--", lw=1.2)
        ax.annotate(label, xy=(lam.size, level), ha="right", va="bottom", fontsize=9, color="#c0392b")
    ax.set_xlabel("eigenvalue index")
    ax.set_ylabel("eigenvalue")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def write_rate_png(
    xs, ys, slope: float, intercept: float, xlabel: str, ylabel: str, path: str | Path
) -> Path:
    """Log-log decay figure with the fitted power law overlaid."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.loglog(xs, ys, "o", color="#2c3e50", label="measured")
    fit = np.exp(intercept) * xs**slope
    ax.loglog(xs, fit, "--", color="#c0392b", label=f"fit slope {slope:.3f}")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend()
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
