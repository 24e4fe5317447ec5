"""Lyapunov landscape over the H-plane at fixed small t.

Every node of the grid evaluates L(f_{t,G,H}) as the cloud average of
log|det Df_t|.  All nodes reuse the same sheet choices (common random numbers),
so neighbouring nodes follow nearly the same backward branches and the noise
largely cancels in the 5-point Laplacian.  Grids are stored image-style with
shape (ny, nx): row j holds Im H = y_j, column i holds Re H = x_i.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientDataError, SamplingError
from .family import Coeffs, FamilyParams, HenonBase, QuadPoly2
from .io import format_float
from .measure import (DEFAULT_BURN_IN, MAX_DEGENERATE_RATE, MAX_EXCLUDED_RATE, STRAND_LENGTH,
                      backward_chains, box_center, log_integrand, strand_choices)
from .parallel import run_tasks
from .stats import JACKKNIFE_BLOCKS

log = logging.getLogger(__name__)

MAX_FAILED_RATE = 0.05
RING_FRACTION = 0.1
ROBUST_SIGMA = 1.4826
FLOOR_MULTIPLE = 3.0


@dataclass(frozen=True)
class ScanConfig:
    n_points: int = 2_000
    n_steps: int = 500  # kept for config compatibility; L comes from the cloud integral
    burn_in: int = DEFAULT_BURN_IN


@dataclass(frozen=True, eq=False)
class ScanGrid:
    base: HenonBase
    G: complex
    t: complex
    H_min: complex
    H_max: complex
    nx: int
    ny: int
    L_values: np.ndarray = field(repr=False)
    L_stderr: np.ndarray = field(repr=False)
    laplacian: np.ndarray = field(repr=False)
    block_means: np.ndarray = field(repr=False)
    exceptional: np.ndarray = field(repr=False)
    seed: int = 0
    config: ScanConfig = ScanConfig()

    @property
    def x(self):
        return np.linspace(self.H_min.real, self.H_max.real, self.nx)

    @property
    def y(self):
        return np.linspace(self.H_min.imag, self.H_max.imag, self.ny)

    @property
    def H(self):
        return self.x[None, :] + 1j * self.y[:, None]

    @property
    def spacing(self):
        return ((self.H_max.real - self.H_min.real) / (self.nx - 1),
                (self.H_max.imag - self.H_min.imag) / (self.ny - 1))

    @property
    def failed(self):
        return ~np.isfinite(self.L_values)

    @property
    def H_interior(self):
        return self.H[1:-1, 1:-1]

    def node_params(self, H):
        return FamilyParams(self.base, self.t, QuadPoly2(a20=self.G), QuadPoly2(a20=H))

    def meta_text(self):
        p = self.node_params(0).to_text()
        lines = [p.rstrip("\n"),
                 f"H_min_re={format_float(self.H_min.real)}", f"H_min_im={format_float(self.H_min.imag)}",
                 f"H_max_re={format_float(self.H_max.real)}", f"H_max_im={format_float(self.H_max.imag)}",
                 f"nx={self.nx}", f"ny={self.ny}", f"seed={self.seed}",
                 f"n_points={self.config.n_points}", f"n_steps={self.config.n_steps}",
                 f"burn_in={self.config.burn_in}", f"failed_nodes={int(self.failed.sum())}",
                 f"exceptional_nodes={int(self.exceptional.sum())}"]
        return "\n".join(lines) + "\n"


def grid_window(H_center, H_halfwidth, nx, ny):
    """Corners of a square window; a complex halfwidth sets the two axes separately."""
    c = complex(H_center)
    hw = complex(H_halfwidth)
    if hw.imag == 0:
        hw = complex(hw.real, hw.real)
    if hw.real <= 0 or hw.imag <= 0 or nx < 3 or ny < 3:
        raise ValueError("window needs positive halfwidth and at least 3x3 nodes")
    return c - hw, c + hw


def _node_row(base, G, t, H_row, seed, config: ScanConfig):
    """L, stderr and jackknife block means for one grid row."""
    n_nodes = len(H_row)
    n_strands = -(-config.n_points // STRAND_LENGTH)
    n_steps = config.burn_in + STRAND_LENGTH
    choices = strand_choices(seed, range(n_strands), n_steps)
    params = [FamilyParams(base, t, QuadPoly2(a20=G), QuadPoly2(a20=H)) for H in H_row]
    k = Coeffs.stack(params)
    k = Coeffs(*(np.repeat(f[:, 0], n_strands) for f in k))
    starts = [box_center(p) for p in params]
    z0 = np.repeat([s.z for s in starts], n_strands)
    w0 = np.repeat([s.w for s in starts], n_strands)
    zs, ws, used, ndeg = backward_chains(k, z0, w0, np.tile(choices, (n_nodes, 1)))
    vals = log_integrand(k.take((slice(None), None)), zs[:, config.burn_in:], ws[:, config.burn_in:],
                         "log_abs_det")
    vals = vals.reshape(n_nodes, -1)[:, :config.n_points]
    ndeg = ndeg.reshape(n_nodes, n_strands).sum(axis=1)

    bounds = np.linspace(0, config.n_points, JACKKNIFE_BLOCKS + 1).astype(int)
    L = np.full(n_nodes, np.nan)
    err = np.full(n_nodes, np.nan)
    blocks = np.full((n_nodes, JACKKNIFE_BLOCKS), np.nan)
    for i in range(n_nodes):
        v = vals[i]
        finite = np.isfinite(v)
        if ndeg[i] > MAX_DEGENERATE_RATE * n_strands * n_steps:
            continue
        if (~finite).sum() > MAX_EXCLUDED_RATE * v.size:
            continue
        v = np.where(finite, v, v[finite].mean())
        blocks[i] = np.add.reduceat(v, bounds[:-1]) / np.diff(bounds)
        L[i] = v.mean()
        err[i] = _jackknife_from_blocks(blocks[i], np.diff(bounds))
    return L, err, blocks


def _jackknife_from_blocks(means, counts):
    """Delete-one-block jackknife stderr of the overall mean from block means."""
    means = np.asarray(means)
    counts = np.asarray(counts, dtype=float)
    b = means.shape[-1]
    total = (means * counts).sum(axis=-1, keepdims=True)
    loo = (total - means * counts) / (counts.sum() - counts)
    return np.sqrt((b - 1) / b * np.sum((loo - loo.mean(axis=-1, keepdims=True)) ** 2, axis=-1))


def laplacian(values, hx, hy=None):
    """5-point Laplacian on interior nodes of a (ny, nx) array."""
    hy = hx if hy is None else hy
    v = np.asarray(values, dtype=float)
    return ((v[1:-1, 2:] - 2 * v[1:-1, 1:-1] + v[1:-1, :-2]) / hx ** 2
            + (v[2:, 1:-1] - 2 * v[1:-1, 1:-1] + v[:-2, 1:-1]) / hy ** 2)


def scan_H(base: HenonBase, G, t, H_center=0.0, H_halfwidth=1.5, nx=61, ny=61,
           config: ScanConfig = ScanConfig(), seed: int = 0, workers=1) -> ScanGrid:
    """Evaluate L on an nx-by-ny grid of H values; one task per grid row."""
    G, t = complex(G), complex(t)
    if t == 0:
        raise ValueError("scan_H needs t != 0")
    H_min, H_max = grid_window(H_center, H_halfwidth, nx, ny)
    xs = np.linspace(H_min.real, H_max.real, nx)
    ys = np.linspace(H_min.imag, H_max.imag, ny)
    tasks = [(base, G, t, xs + 1j * y, seed, config) for y in ys]
    rows = run_tasks(_node_row, tasks, workers)
    L = np.stack([r[0] for r in rows])
    err = np.stack([r[1] for r in rows])
    blocks = np.stack([r[2] for r in rows])
    n_failed = int((~np.isfinite(L)).sum())
    if n_failed > MAX_FAILED_RATE * L.size:
        raise SamplingError(f"{n_failed} of {L.size} scan nodes failed")
    if n_failed:
        log.warning("%d scan nodes failed and are masked", n_failed)
    H = xs[None, :] + 1j * ys[:, None]
    ratio = np.abs(H / G)
    exceptional = np.abs(ratio - abs(base.c)) <= 1e-9 * max(1.0, abs(base.c))
    hx, hy = (xs[-1] - xs[0]) / (nx - 1), (ys[-1] - ys[0]) / (ny - 1)
    return ScanGrid(base, G, t, H_min, H_max, nx, ny, L, err, laplacian(L, hx, hy), blocks,
                    exceptional, seed, config)


def ring_mask(shape, fraction=RING_FRACTION):
    """Nodes within ``fraction`` of the grid size from its edge (index distance)."""
    ny, nx = shape
    j, i = np.mgrid[0:ny, 0:nx]
    d = np.minimum(np.minimum(i, nx - 1 - i), np.minimum(j, ny - 1 - j))
    width = max(1, int(round(fraction * min(nx, ny))))
    return d < width


def noise_floor(grid: ScanGrid) -> float:
    """Robust sigma of the Laplacian over the outer ring of the interior."""
    lap = np.abs(grid.laplacian)
    ring = ring_mask(lap.shape) & np.isfinite(lap)
    if not ring.any():
        raise InsufficientDataError("no finite Laplacian values in the outer ring")
    return float(ROBUST_SIGMA * np.median(lap[ring]))


def laplacian_mass(grid: ScanGrid, floor=None):
    """|Laplacian| in excess of 3 noise floors, zero elsewhere and at masked nodes."""
    floor = noise_floor(grid) if floor is None else floor
    lap = np.abs(grid.laplacian)
    mass = np.maximum(lap - FLOOR_MULTIPLE * floor, 0.0)
    return np.where(np.isfinite(mass), mass, 0.0)


def annulus_concentration(grid: ScanGrid, r0: float, band: float, floor=None) -> float:
    """Share of above-floor |Laplacian| mass on nodes with r0(1-band) < |H| < r0(1+band)."""
    r = np.abs(grid.H_interior)
    inside = (r > r0 * (1 - band)) & (r < r0 * (1 + band))
    if not inside.any():
        raise InsufficientDataError("annulus does not meet the grid")
    mass = laplacian_mass(grid, floor)
    total = mass.sum()
    if total == 0:
        return 0.0
    return float(mass[inside].sum() / total)


def top_decile_fraction(grid: ScanGrid, r_lo: float, r_hi: float, top: float = 0.1) -> float:
    """Fraction of the largest-|Laplacian| nodes (top share `top`) with r_lo < |H| < r_hi."""
    lap = np.abs(grid.laplacian)
    ok = np.isfinite(lap)
    cut = np.quantile(lap[ok], 1 - top)
    top = ok & (lap >= cut)
    r = np.abs(grid.H_interior)
    return float(np.mean((r[top] > r_lo) & (r[top] < r_hi)))


def plaquette_deviations(grid: ScanGrid):
    """Mean-value deviation L(H) - mean of the 4 neighbours, with jackknife stderr.

    Nodes share random numbers, so the stderr is computed from the per-block
    differences and accounts for the correlation between neighbours.
    """
    b = grid.block_means
    comb = b[1:-1, 1:-1] - 0.25 * (b[1:-1, 2:] + b[1:-1, :-2] + b[2:, 1:-1] + b[:-2, 1:-1])
    L = grid.L_values
    dev = L[1:-1, 1:-1] - 0.25 * (L[1:-1, 2:] + L[1:-1, :-2] + L[2:, 1:-1] + L[:-2, 1:-1])
    bounds = np.linspace(0, grid.config.n_points, comb.shape[-1] + 1).astype(int)
    err = _jackknife_from_blocks(comb, np.diff(bounds))
    return dev, err


def offcircle_violation_rate(grid: ScanGrid, r0: float, rel: float = 0.3, k: float = 3.0):
    """Share of plaquettes with ||H| - r0| > rel*r0 whose deviation exceeds k stderr."""
    dev, err = plaquette_deviations(grid)
    r = np.abs(grid.H_interior)
    far = (np.abs(r - r0) > rel * r0) & np.isfinite(dev) & np.isfinite(err)
    if not far.any():
        raise InsufficientDataError("no off-circle plaquettes")
    return float(np.mean(np.abs(dev[far]) > k * err[far]))


def normalize_u8(values):
    """Affine map of the finite values onto 0..255; constant or masked data map to 0."""
    v = np.asarray(values, dtype=float)
    ok = np.isfinite(v)
    out = np.zeros(v.shape, dtype=np.uint8)
    if not ok.any():
        return out
    lo, hi = v[ok].min(), v[ok].max()
    if hi > lo:
        out[ok] = np.round((v[ok] - lo) / (hi - lo) * 255).astype(np.uint8)
    return out


def channel_data(grid: ScanGrid, channel: str):
    """(H values, data) for a channel; the Laplacian lives on interior nodes."""
    if channel == "L":
        return grid.H, grid.L_values
    if channel == "laplacian":
        return grid.H_interior, grid.laplacian
    raise ValueError("channel must be 'L' or 'laplacian'")


def emit_heatmap(grid: ScanGrid, channel: str, path):
    """Write ``path`` as a binary PGM and ``path`` with suffix .csv as its raw twin.

    Rows are written top to bottom with Im H decreasing, as usual for images.
    """
    from pathlib import Path

    H, data = channel_data(grid, channel)
    path = Path(path)
    img = normalize_u8(data)[::-1]
    ny, nx = img.shape
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(f"P5 {nx} {ny} 255\n".encode())
        fh.write(img.tobytes())
    lines = ["H_re,H_im,value"]
    for h, v in zip(H.ravel(), data.ravel()):
        lines.append(f"{format_float(h.real)},{format_float(h.imag)},{format_float(v)}")
    csv_path = path.with_suffix(".csv")
    csv_path.write_text("\n".join(lines) + "\n")
    return path, csv_path
