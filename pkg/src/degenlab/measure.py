"""Sampling the maximal-entropy measure by backward random iteration.

Starting from the centre of the localisation box, each step replaces the
current point by one of its four preimages chosen uniformly (duplicates
from multiple roots are kept, so the choice is weighted by multiplicity).
Backward branches contract towards the Julia set, so after a burn-in the
visited points are distributed approximately like mu_{f_t}.

Recording happens in strands of 64 points; every strand restarts from the box
centre with its own generator ``mix64(seed, strand_index)``.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sstats

from .errors import SamplingError
from .family import Coeffs, FamilyParams, PointC2, det_arrays, is_regular
from .io import format_float
from .parallel import run_tasks
from .preimage import RESIDUAL_RTOL, sheet_order, solve_fibers
from .seeding import rng_for
from .stats import jackknife_mean

log = logging.getLogger(__name__)

STRAND_LENGTH = 64
DEFAULT_BURN_IN = 50
START_BETA = 0.25
STRANDS_PER_TASK = 64
MAX_DEGENERATE_RATE = 0.01
MAX_EXCLUDED_RATE = 0.001
INTEGRANDS = ("log_abs_det", "log_abs_w", "log_abs_z", "log_abs_c_plus_tHz")


@dataclass(frozen=True)
class BoxVt:
    """Annulus x annulus box V_t(beta) and its companion U_t (annulus x disc)."""

    beta: float
    z_inner: float
    z_outer: float
    w_inner: float
    w_outer: float

    def contains(self, z, w):
        az, aw = np.abs(z), np.abs(w)
        return (az > self.z_inner) & (az < self.z_outer) & (aw > self.w_inner) & (aw < self.w_outer)

    def contains_u(self, z, w):
        az = np.abs(z)
        return (az > self.z_inner) & (az < self.z_outer) & (np.abs(w) < self.w_outer)


def box_vt(params: FamilyParams, beta: float) -> BoxVt:
    if params.t == 0:
        raise ValueError("box_vt needs t != 0")
    if not 0 < beta < 0.5:
        raise ValueError("beta must lie in (0, 1/2)")
    gt = abs(params.G * params.t)
    r, ac = params.ratio, abs(params.base.c)
    return BoxVt(
        beta=beta,
        z_inner=(1 - beta) / gt,
        z_outer=(1 + beta) / gt,
        w_inner=math.sqrt(abs(r - ac)) * (1 - 2 * beta) / math.sqrt(gt),
        w_outer=math.sqrt(r + ac) * (1 + 2 * beta) / math.sqrt(gt),
    )


def contains(box: BoxVt, p) -> bool:
    return bool(box.contains(complex(p[0]), complex(p[1])))


def box_center(params: FamilyParams, beta=START_BETA) -> PointC2:
    """|Z| = 1 and |w| at the geometric mean of the w-annulus radii."""
    box = box_vt(params, beta)
    rw = math.sqrt(box.w_inner * box.w_outer) if box.w_inner > 0 else 0.5 * box.w_outer
    return PointC2(1 / (params.G * params.t), complex(rw))


@dataclass(frozen=True, eq=False)
class SampleCloud:
    params: FamilyParams
    seed: int
    burn_in: int
    n_points: int
    z: np.ndarray = field(repr=False)
    w: np.ndarray = field(repr=False)
    branch_log_hash: int
    strand_length: int = STRAND_LENGTH
    degenerate_count: int = 0

    @property
    def points(self):
        return [PointC2(complex(a), complex(b)) for a, b in zip(self.z, self.w)]

    def to_csv(self):
        rows = ["z_re,z_im,w_re,w_im"]
        for a, b in zip(self.z, self.w):
            rows.append(",".join(format_float(x) for x in (a.real, a.imag, b.real, b.imag)))
        return "\n".join(rows) + "\n"

    def meta_text(self):
        return (self.params.to_text()
                + f"seed={self.seed}\nburn_in={self.burn_in}\nn_points={self.n_points}\n"
                + f"strand_length={self.strand_length}\n"
                + f"branch_log_hash={self.branch_log_hash:016x}\n")


def strand_choices(seed, strand_indices, n_steps):
    """Uniform sheet labels in {0,..,3} for each strand, shape (S, n_steps)."""
    return np.stack([rng_for(seed, int(j)).integers(0, 4, size=n_steps) for j in strand_indices])


def backward_chains(k: Coeffs, z0, w0, choices):
    """Run backward random iteration lane-wise.

    ``k`` holds scalars or per-lane arrays, ``z0``/``w0`` the starting points
    (one per lane) and ``choices`` the sheet labels, shape (L, n).  A sheet
    whose preimage failed is replaced by the next valid label.  Returns
    ``(z, w, used, n_degenerate)`` with point arrays of shape (L, n).
    """
    choices = np.asarray(choices)
    n_lanes, n_steps = choices.shape
    z = np.broadcast_to(np.asarray(z0, dtype=complex), (n_lanes,)).copy()
    w = np.broadcast_to(np.asarray(w0, dtype=complex), (n_lanes,)).copy()
    zs = np.empty((n_lanes, n_steps), dtype=complex)
    ws = np.empty((n_lanes, n_steps), dtype=complex)
    used = np.empty((n_lanes, n_steps), dtype=np.int8)
    n_degenerate = np.zeros(n_lanes, dtype=int)
    lanes = np.arange(n_lanes)
    for step in range(n_steps):
        pz, pw, res = solve_fibers(k, z, w)
        perm = sheet_order(pz, pw)
        pz = np.take_along_axis(pz, perm, axis=1)
        pw = np.take_along_axis(pw, perm, axis=1)
        res = np.take_along_axis(res, perm, axis=1)
        tol = RESIDUAL_RTOL * (1 + np.hypot(np.abs(z), np.abs(w)))
        ok = res <= tol[:, None]
        pick = choices[:, step].astype(int)
        bad = ~ok[lanes, pick]
        if bad.any():
            n_degenerate += bad
            for shift in range(1, 4):
                alt = (pick + shift) % 4
                fix = bad & ok[lanes, alt]
                pick = np.where(fix, alt, pick)
                bad &= ~fix
            # lanes with no valid sheet at all keep their point and stay counted
        z = np.where(bad, z, pz[lanes, pick])
        w = np.where(bad, w, pw[lanes, pick])
        zs[:, step] = z
        ws[:, step] = w
        used[:, step] = pick
    return zs, ws, used, n_degenerate


def _sample_task(params, seed, strand_ids, burn_in, strand_length):
    choices = strand_choices(seed, strand_ids, burn_in + strand_length)
    c = box_center(params)
    zs, ws, used, ndeg = backward_chains(params.coeffs(), c.z, c.w, choices)
    return zs[:, burn_in:], ws[:, burn_in:], used, int(ndeg.sum())


def sample_mu(params: FamilyParams, n_points: int, burn_in: int = DEFAULT_BURN_IN,
              seed: int = 0, workers=1, strand_length: int = STRAND_LENGTH) -> SampleCloud:
    """Approximate mu_{f_t} by ``n_points`` backward-iteration samples."""
    if params.t == 0 or not is_regular(params):
        raise ValueError("sample_mu needs t != 0 and regular params")
    if n_points <= 0:
        raise ValueError("n_points must be positive")
    n_strands = -(-n_points // strand_length)
    tasks = [(params, seed, list(range(a, min(a + STRANDS_PER_TASK, n_strands))), burn_in,
              strand_length) for a in range(0, n_strands, STRANDS_PER_TASK)]
    results = run_tasks(_sample_task, tasks, workers)
    z = np.concatenate([r[0] for r in results]).reshape(-1)[:n_points]
    w = np.concatenate([r[1] for r in results]).reshape(-1)[:n_points]
    used = np.concatenate([r[2] for r in results])
    ndeg = sum(r[3] for r in results)
    if ndeg > MAX_DEGENERATE_RATE * used.size:
        raise SamplingError("measure sampling unreliable")
    if ndeg:
        log.warning("%d degenerate fibres resampled during backward iteration", ndeg)
    digest = hashlib.blake2b(used.astype(np.uint8).tobytes(), digest_size=8).digest()
    return SampleCloud(params, seed, burn_in, n_points, z, w,
                       int.from_bytes(digest, "little"), strand_length, ndeg)


def containment_fraction(cloud: SampleCloud, box: BoxVt) -> float:
    return float(np.mean(box.contains(cloud.z, cloud.w)))


def log_integrand(k: Coeffs, z, w, kind):
    with np.errstate(all="ignore"):
        if kind == "log_abs_det":
            return np.log(np.abs(det_arrays(k, z, w)))
        if kind == "log_abs_w":
            return np.log(np.abs(w))
        if kind == "log_abs_z":
            return np.log(np.abs(z))
        if kind == "log_abs_c_plus_tHz":
            return np.log(np.abs(k.c + k.t * k.h20 * z))
    raise ValueError(f"unknown integrand {kind!r}; expected one of {INTEGRANDS}")


def integrate_log(cloud: SampleCloud, kind: str):
    """Cloud average of a log integrand with jackknife standard error."""
    if cloud.n_points == 0:
        raise ValueError("empty cloud")
    vals = log_integrand(cloud.params.coeffs(), cloud.z, cloud.w, kind)
    finite = np.isfinite(vals)
    n_bad = int((~finite).sum())
    if n_bad > MAX_EXCLUDED_RATE * vals.size:
        raise SamplingError(f"{n_bad} non-finite {kind} values in cloud")
    return jackknife_mean(vals[finite])


def angle_distribution(cloud: SampleCloud):
    """arg(G t z) / 2 pi in [0, 1) for every cloud point."""
    p = cloud.params
    if p.t == 0:
        raise ValueError("angle_distribution needs t != 0")
    return np.mod(np.angle(p.G * p.t * cloud.z) / (2 * np.pi), 1.0)


def ks_uniform(angles):
    return float(sstats.kstest(angles, "uniform").statistic)


def circular_moment(angles):
    return float(np.abs(np.mean(np.exp(2j * np.pi * np.asarray(angles)))))
