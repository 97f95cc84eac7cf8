"""Render report figures from tidy plot-data rows.

Always writes files through the Agg backend; nothing here opens a window.
"""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def _as_dicts(header, rows):
    return [dict(zip(header, row)) for row in rows]


def _fig_gsd_vs_i(header, rows, extras):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    by_kind = defaultdict(list)
    for r in _as_dicts(header, rows):
        by_kind[r["kind"]].append((float(r["i"]), float(r["gsd"])))
    for kind, pts in sorted(by_kind.items()):
        pts.sort()
        ax.plot(*zip(*pts), "o-", label=kind)
    grid = np.linspace(0, 1, 11)
    ax.plot(grid, 1 - grid, "k--", lw=0.8, label="1 - i")
    ax.set_xlabel("interpolation factor i")
    ax.set_ylabel("derivative step at 0")
    ax.legend(fontsize=8)
    return fig


def _fig_accuracy_vs_i(header, rows, extras):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    by_lr = defaultdict(list)
    for r in _as_dicts(header, rows):
        by_lr[float(r["learning_rate"])].append((float(r["i"]), float(r["final_top1"])))
    for lr, pts in sorted(by_lr.items()):
        pts.sort()
        ax.plot(*zip(*pts), "o-", label=f"lr={lr:g}")
    ax.set_xlabel("interpolation factor i")
    ax.set_ylabel("final top-1 accuracy")
    ax.set_ylim(0, 1)
    if "spearman_rho" in extras and np.isfinite(extras["spearman_rho"]):
        ax.set_title(f"Spearman rho = {extras['spearman_rho']:.3f}", fontsize=9)
    ax.legend(fontsize=8)
    return fig


def _fig_surface(header, rows, extras):
    groups = defaultdict(list)
    for r in _as_dicts(header, rows):
        groups[(r["kind"], r["i"])].append((float(r["x_i"]), float(r["x_w"]),
                                            float(r["value"])))
    keys = sorted(groups, key=lambda k: (k[0], float(k[1])))[:6]
    fig, axes = plt.subplots(1, len(keys), figsize=(3.4 * len(keys), 3.2),
                             squeeze=False)
    for ax, key in zip(axes[0], keys):
        pts = groups[key]
        xi = np.array(sorted({p[0] for p in pts}))
        xw = np.array(sorted({p[1] for p in pts}))
        values = np.zeros((len(xi), len(xw)))
        ji = {v: j for j, v in enumerate(xi)}
        jw = {v: j for j, v in enumerate(xw)}
        for a, b, v in pts:
            values[ji[a], jw[b]] = v
        mesh = ax.pcolormesh(xw, xi, values, shading="nearest", cmap="magma")
        fig.colorbar(mesh, ax=ax, shrink=0.85)
        ax.set_title(f"{key[0]} (i={float(key[1]):g})", fontsize=9)
        ax.set_xlabel("weight value")
        ax.set_ylabel("input value")
    return fig


def _fig_accum_vs_n(header, rows, extras):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    by_key = defaultdict(list)
    for r in _as_dicts(header, rows):
        by_key[(r["kind"], float(r["x"]))].append(
            (int(r["n"]), float(r["mean_error"]), float(r["reference"])))
    for (kind, x), pts in sorted(by_key.items()):
        pts.sort()
        ns = [p[0] for p in pts]
        ax.plot(ns, [p[1] for p in pts], "o-", label=f"{kind} @ x={x:g}")
        ax.axhline(pts[0][2], ls=":", lw=0.7, color="gray")
    ax.set_xscale("log")
    ax.set_xlabel("mini-batch size n")
    ax.set_ylabel("mean derivative under noise")
    ax.legend(fontsize=7)
    return fig


def _fig_ebp_vs_s(header, rows, extras):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    pts = sorted((float(r["s"]), float(r["effective_bits"]))
                 for r in _as_dicts(header, rows))
    ax.plot(*zip(*pts), "o-")
    ax.set_xlabel("scaling factor s")
    ax.set_ylabel("effective bits of the derivative")
    return fig


_RENDERERS = {
    "gsd-vs-i": _fig_gsd_vs_i,
    "accuracy-vs-i": _fig_accuracy_vs_i,
    "surface": _fig_surface,
    "accum-vs-n": _fig_accum_vs_n,
    "ebp-vs-s": _fig_ebp_vs_s,
}


def render_figure(kind: str, header, rows, png_path, extras=None) -> Path:
    fig = _RENDERERS[kind](header, rows, extras or {})
    png_path = Path(png_path)
    png_path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(png_path, dpi=150)
    plt.close(fig)
    return png_path
