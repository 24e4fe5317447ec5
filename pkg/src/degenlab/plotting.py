"""Matplotlib renderings written next to the CSV artifacts."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# no timestamps or version strings, so reruns give identical files
_PNG_META = {"Software": None}


def plot_scan(grid, path, r0=None):
    """L and |Laplacian| side by side over the H window."""
    fig, axes = plt.subplots(1, 2, figsize=(10, 4.5))
    ext = [grid.H_min.real, grid.H_max.real, grid.H_min.imag, grid.H_max.imag]
    hx, hy = grid.spacing
    inner = [ext[0] + hx, ext[1] - hx, ext[2] + hy, ext[3] - hy]
    im0 = axes[0].imshow(grid.L_values, origin="lower", extent=ext, cmap="viridis")
    axes[0].set_title("L(H)")
    fig.colorbar(im0, ax=axes[0])
    im1 = axes[1].imshow(np.abs(grid.laplacian), origin="lower", extent=inner, cmap="magma")
    axes[1].set_title("|discrete Laplacian|")
    fig.colorbar(im1, ax=axes[1])
    if r0:
        s = np.linspace(0, 2 * np.pi, 200)
        for ax in axes:
            ax.plot(r0 * np.cos(s), r0 * np.sin(s), "w--", lw=0.8)
    for ax in axes:
        ax.set_xlabel("Re H")
        ax.set_ylabel("Im H")
    fig.suptitle(f"t = {grid.t:.3g}")
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_sweep(rows, targets, path):
    """Shifted exponents against |t| with the limit values as dashed lines."""
    ok = [r for r in rows if not r.failed]
    fig, ax = plt.subplots(figsize=(6, 4))
    if ok:
        at = np.array([r.abs_t for r in ok])
        for attr, label in (("L_shift", "L - log|t|^-1/2"), ("chi1_shift", "chi1 - log|t|^-1/2"),
                            ("chi2", "chi2")):
            y = np.array([getattr(r, attr) for r in ok])
            err = np.array([getattr(r, attr.replace("_shift", "") + "_stderr") for r in ok])
            ax.errorbar(at, y, yerr=3 * err, marker="o", capsize=3, label=label)
    if targets is not None:
        for val in (targets.L_limit, targets.chi1_limit, targets.chi2_limit):
            ax.axhline(val, color="grey", ls="--", lw=0.8)
    ax.set_xscale("log")
    ax.set_xlabel("|t|")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)
    return path
