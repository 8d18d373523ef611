"""Figure rendering for the CLI report path.

Every report command writes its delimited data first and then, unless
plotting is disabled, a PNG figure next to it.  Matplotlib is imported
lazily with the Agg backend so headless runs and non-plot commands stay
light.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


def _plt():
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    return plt


def distribution_bars(probabilities, path, title="outcome distribution",
                      meta=None):
    """Bar chart of a 64-entry triangle distribution, grouped by c."""
    plt = _plt()
    p = np.asarray(probabilities).reshape(64)
    fig, ax = plt.subplots(figsize=(10, 3.2))
    colors = plt.cm.viridis(np.linspace(0.15, 0.9, 4))
    c_vals = np.arange(64) % 4
    ax.bar(np.arange(64), p, color=colors[c_vals], width=0.85)
    ax.set_xlabel("outcome index (a,b,c)")
    ax.set_ylabel("probability")
    ax.set_title(title)
    ax.set_xlim(-1, 64)
    handles = [plt.Rectangle((0, 0), 1, 1, color=colors[c]) for c in range(4)]
    ax.legend(handles, [f"c={c}" for c in range(4)], ncol=4, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata=meta)
    plt.close(fig)
    return Path(path)


def certificate_heatmap(cert, path, meta=None):
    """64x64 coefficient map of a quadratic inequality."""
    plt = _plt()
    m = cert.pair_matrix
    fig, ax = plt.subplots(figsize=(6, 5))
    lim = np.abs(m).max() or 1.0
    im = ax.imshow(m, cmap="RdBu_r", vmin=-lim, vmax=lim, origin="lower")
    ax.set_xlabel("(a1, b1, c1) index")
    ax.set_ylabel("(a2, b2, c2) index")
    ax.set_title(f"inequality coefficients ({cert.mode} mode)")
    fig.colorbar(im, ax=ax, shrink=0.9)
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata=meta)
    plt.close(fig)
    return Path(path)


def sweep_figure(xs, ys, errs, path, xlabel, ylabel, logx=False, hline=0.0,
                 title=None, meta=None):
    plt = _plt()
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    fig, ax = plt.subplots(figsize=(6, 4))
    if errs is not None and np.any(np.asarray(errs) > 0):
        ax.errorbar(xs, ys, yerr=errs, fmt="o-", capsize=3, color="#1f4e9c")
        ax.fill_between(xs, ys - np.asarray(errs), ys + np.asarray(errs),
                        color="#d62728", alpha=0.25)
    else:
        ax.plot(xs, ys, "o-", color="#1f4e9c")
    if hline is not None:
        ax.axhline(hline, color="gray", lw=0.8, ls="--")
        ax.fill_between(ax.get_xlim(), hline, max(ys.max(), hline),
                        color="#9ecae1", alpha=0.15, label="classically attainable")
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata=meta)
    plt.close(fig)
    return Path(path)


def ml_sweep_figure(sweep, path, meta=None):
    """Minimum MSE versus visibility for the oracle ensemble."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = np.asarray(sweep.grid)
    ax.semilogy(xs, sweep.ensemble_min, "o-", color="#1f4e9c", label="ensemble min")
    for j, label in enumerate(sweep.arch_labels):
        ax.semilogy(xs, sweep.per_arch_mse[:, j], lw=0.6, alpha=0.35)
    ax.axvline(1 / np.sqrt(2), color="gray", ls="--", lw=0.8,
               label="1/sqrt(2)")
    if sweep.knee is not None:
        ax.axvline(sweep.knee, color="#d62728", ls=":", lw=1.2,
                   label=f"knee at v={sweep.knee:g}")
    ax.set_xlabel("visibility v")
    ax.set_ylabel("minimum MSE")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata=meta)
    plt.close(fig)
    return Path(path)
