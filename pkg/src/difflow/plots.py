"""Figure rendering for reports and fields (non-interactive backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .grid import TWO_PI, PeriodicField


def save_field_figure(f: PeriodicField, path, title=None, channel=0):
    """Render one channel of a field as an image over [0, 2*pi)^2."""
    fig, ax = plt.subplots(figsize=(5, 4.2))
    im = ax.imshow(
        f.data[channel],
        origin="lower",
        extent=(0, TWO_PI, 0, TWO_PI),
        cmap="RdBu_r",
        interpolation="nearest",
    )
    fig.colorbar(im, ax=ax)
    if title:
        ax.set_title(title)
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_series_figure(series: dict, path, title=None, logy=False):
    """Plot named (t, value) series on shared axes."""
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for name, pairs in series.items():
        if not pairs:
            continue
        ts, vs = zip(*pairs)
        ax.plot(ts, vs, marker=".", label=name)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_spectrum_figure(spectrum, path, title=None, slope=None):
    """Log-log energy spectrum plot; optionally overlay a power-law guide."""
    ks = np.array([k for k, _ in spectrum], dtype=float)
    es = np.array([e for _, e in spectrum], dtype=float)
    mask = es > 0
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.loglog(ks[mask], es[mask], marker=".", label="E(k)")
    if slope is not None and np.any(mask):
        k0 = ks[mask][0]
        e0 = es[mask][0]
        ax.loglog(
            ks[mask],
            e0 * (ks[mask] / k0) ** slope,
            "--",
            label=f"slope {slope:.2f}",
        )
    ax.set_xlabel("k")
    ax.set_ylabel("E(k)")
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
