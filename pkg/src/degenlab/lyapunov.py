"""Individual Lyapunov exponents chi1 >= chi2.

Two routes:

* :func:`qr_exponents` records backward orbits (which stay on the Julia set)
  and traverses them forward, re-orthonormalising the tangent frame at every
  step.
* :func:`find_periodic` + :func:`bdm_estimate` average eigenvalue growth over
  repelling periodic points.

:func:`cone_check` tests the invariance of the cone {|y| > eta |x|} and the
(1 +- delta)|2w| expansion bound on sampled points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SamplingError
from .family import FamilyParams, PointC2, det_arrays, eval_arrays, is_regular, jacobian_arrays
from .io import format_float
from .measure import DEFAULT_BURN_IN, SampleCloud, backward_chains, box_center, box_vt, strand_choices
from .parallel import run_tasks
from .preimage import CLUSTER_RTOL, RESIDUAL_RTOL
from .seeding import rng_for
from .stats import KahanSum, jackknife_mean

ORBITS_PER_TASK = 64
MAX_DROP_RATE = 0.01


@dataclass(frozen=True, eq=False)
class LyapunovEstimate:
    chi1: float
    chi2: float
    L: float
    stderr1: float
    stderr2: float
    n_orbits: int
    n_steps: int
    method: str
    stderr_L: float = float("nan")
    dropped: int = 0
    chi1_orbits: np.ndarray = field(default=None, repr=False)
    chi2_orbits: np.ndarray = field(default=None, repr=False)

    def to_csv(self):
        rows = ["orbit_id,chi1,chi2"]
        for i, (a, b) in enumerate(zip(self.chi1_orbits, self.chi2_orbits)):
            rows.append(f"{i},{format_float(a)},{format_float(b)}")
        return "\n".join(rows) + "\n"


def qr_accumulate(m11, m12, m21, m22, det):
    """Finite-time exponents of the products M_n ... M_1, lane-wise.

    Inputs have shape (L, n) in forward order; ``det`` is det M_k computed
    independently (closed form).  The frame (q, q_perp) is re-orthonormalised
    every step; besides the usual diagonal sums the strictly upper part of
    the accumulated R is tracked in normalised form, so that chi1 is log of the
    top singular value of the whole product divided by n, not only the growth
    of the first frame vector.  Returns ``(chi1, chi2, ok)``.
    """
    n_lanes, n = m11.shape
    qx = np.ones(n_lanes, dtype=complex)
    qy = np.zeros(n_lanes, dtype=complex)
    s1 = KahanSum(n_lanes)
    sdet = KahanSum(n_lanes)
    beta = np.zeros(n_lanes, dtype=complex)
    rho = np.ones(n_lanes, dtype=complex)
    with np.errstate(all="ignore"):
        for k in range(n):
            a, b, c, d = m11[:, k], m12[:, k], m21[:, k], m22[:, k]
            px, py = -np.conj(qy), np.conj(qx)
            a1x, a1y = a * qx + b * qy, c * qx + d * qy
            a2x, a2y = a * px + b * py, c * px + d * py
            r11 = np.hypot(np.abs(a1x), np.abs(a1y))
            qx, qy = a1x / r11, a1y / r11
            r12 = np.conj(qx) * a2x + np.conj(qy) * a2y
            r22 = -qy * a2x + qx * a2y
            s1.add(np.log(r11))
            sdet.add(np.log(np.abs(det[:, k])))
            beta = beta + (r12 / r11) * rho
            rho = rho * (r22 / r11)
        frob = 1 + np.abs(beta) ** 2 + np.abs(rho) ** 2
        sig1 = np.sqrt(0.5 * (frob + np.sqrt(np.maximum(frob ** 2 - 4 * np.abs(rho) ** 2, 0))))
        chi1 = (s1.total + np.log(sig1)) / n
        chi2 = sdet.total / n - chi1
    ok = np.isfinite(chi1) & np.isfinite(chi2)
    return chi1, chi2, ok


def _orbit_task(params, seed, orbit_ids, burn_in, n_steps):
    choices = strand_choices(seed, orbit_ids, burn_in + n_steps)
    c = box_center(params)
    k = params.coeffs()
    zs, ws, _, ndeg = backward_chains(k, c.z, c.w, choices)
    # forward order along the recorded orbit: q_K, q_{K-1}, ..., q_{burn_in+1}
    z = zs[:, burn_in:][:, ::-1]
    w = ws[:, burn_in:][:, ::-1]
    m = jacobian_arrays(k, z, w)
    det = det_arrays(k, z, w)
    chi1, chi2, ok = qr_accumulate(*m, det)
    ok &= ndeg == 0
    return chi1, chi2, ok


def qr_exponents(params: FamilyParams, seed: int, n_orbits: int, n_steps: int,
                 burn_in: int = DEFAULT_BURN_IN, workers=1) -> LyapunovEstimate:
    if params.t == 0 or not is_regular(params):
        raise ValueError("qr_exponents needs t != 0 and regular params")
    tasks = [(params, seed, list(range(a, min(a + ORBITS_PER_TASK, n_orbits))), burn_in, n_steps)
             for a in range(0, n_orbits, ORBITS_PER_TASK)]
    res = run_tasks(_orbit_task, tasks, workers)
    chi1 = np.concatenate([r[0] for r in res])
    chi2 = np.concatenate([r[1] for r in res])
    ok = np.concatenate([r[2] for r in res])
    dropped = int((~ok).sum())
    if dropped > MAX_DROP_RATE * n_orbits:
        raise SamplingError(f"{dropped} of {n_orbits} orbits hit a critical point or degenerate fibre")
    chi1, chi2 = chi1[ok], chi2[ok]
    m1, e1 = jackknife_mean(chi1)
    m2, e2 = jackknife_mean(chi2)
    mL, eL = jackknife_mean(chi1 + chi2)
    return LyapunovEstimate(m1, m2, m1 + m2, e1, e2, len(chi1), n_steps, "qr_backward_orbit",
                            eL, dropped, chi1, chi2)


# -- cone estimates --------------------------------------------------------

@dataclass(frozen=True)
class ConeReport:
    eta0: float
    delta: float
    n_tested: int
    invariance_failures: int
    ratio_violations: int

    @property
    def violations(self):
        return self.invariance_failures + self.ratio_violations


def coupling_ratio(params: FamilyParams, z, w):
    """max(|m11|/|m12|, |m21|/|m22|): how strongly x feeds each image component."""
    m11, m12, m21, m22 = jacobian_arrays(params.coeffs(), z, w)
    return np.maximum(np.abs(m11) / np.abs(m12), np.abs(m21) / np.abs(m22))


def calibrate_eta0(params: FamilyParams, cloud: SampleCloud, n_scan=1000):
    """Cone aperture: 10 x the largest coupling ratio over a pre-scan of the cloud."""
    n = min(n_scan, cloud.n_points)
    return 10.0 * float(np.max(coupling_ratio(params, cloud.z[:n], cloud.w[:n])))


def cone_check(params: FamilyParams, cloud: SampleCloud, eta0: float, delta: float,
               vectors_per_point: int, seed: int) -> ConeReport:
    if cloud.params != params:
        raise ValueError("cloud was sampled from different params")
    rng = rng_for(seed, 0)
    z = np.repeat(cloud.z, vectors_per_point)
    w = np.repeat(cloud.w, vectors_per_point)
    n = z.size
    # 0 < |x| < |y| / eta0, uniform modulus ratio and phases
    y = np.exp(2j * np.pi * rng.random(n))
    x = rng.uniform(0, 1, n) * np.exp(2j * np.pi * rng.random(n)) / eta0
    x = np.where(x == 0, 0.5 / eta0, x)
    m11, m12, m21, m22 = jacobian_arrays(params.coeffs(), z, w)
    xi = m11 * x + m12 * y
    yi = m21 * x + m22 * y
    ax = np.abs(xi)
    invariant = (np.abs(yi) > eta0 * ax) & (ax > 0)
    ratio = np.hypot(ax, np.abs(yi)) / np.hypot(np.abs(x), np.abs(y))
    two_w = 2 * np.abs(w)
    in_band = (ratio >= (1 - delta) * two_w) & (ratio <= (1 + delta) * two_w)
    return ConeReport(eta0, delta, n, int((~invariant).sum()), int((~in_band).sum()))


# -- periodic points -------------------------------------------------------

@dataclass(frozen=True)
class PeriodicPoint:
    point: PointC2
    lambda1: complex
    lambda2: complex
    repelling: bool
    det: complex


@dataclass(frozen=True)
class PeriodicOrbitSet:
    period: int
    points: tuple
    coverage_estimate: float

    @property
    def low_coverage(self):
        return self.coverage_estimate < 0.5

    def to_csv(self):
        rows = ["period,z_re,z_im,w_re,w_im,abs_lambda1,abs_lambda2,repelling"]
        for pp in self.points:
            z, w = pp.point
            rows.append(",".join([str(self.period)] + [format_float(v) for v in (
                z.real, z.imag, w.real, w.imag, abs(pp.lambda1), abs(pp.lambda2))]
                + [str(int(pp.repelling))]))
        return "\n".join(rows) + "\n"


def iterate_with_jacobian(params: FamilyParams, z, w, n):
    """f_t^n and D(f_t^n) (shape (..., 2, 2)) and det D(f_t^n) via the chain rule."""
    k = params.coeffs()
    jac = None
    det = 1.0
    for _ in range(n):
        m11, m12, m21, m22 = jacobian_arrays(k, z, w)
        m = np.stack([np.stack([m11, m12], -1), np.stack([m21, m22], -1)], -2)
        jac = m if jac is None else m @ jac
        det = det * det_arrays(k, z, w)
        z, w = eval_arrays(k, z, w)
    return z, w, jac, det


def _eigen_split(jac, det):
    """Eigenvalues ordered |l1| >= |l2|; l2 = det / l1 keeps the small one accurate."""
    tr = jac[..., 0, 0] + jac[..., 1, 1]
    disc = np.sqrt(tr * tr - 4 * det + 0j)
    sgn = np.where((np.conj(tr) * disc).real >= 0, 1.0, -1.0)
    l1 = 0.5 * (tr + sgn * disc)
    l2 = det / l1
    return l1, l2


def find_periodic(params: FamilyParams, n: int, n_seeds: int, seed: int,
                  beta=0.3, max_iter=60) -> PeriodicOrbitSet:
    """Fixed points of f_t^n by Newton from seeds uniform in V_t(beta)."""
    if params.t == 0:
        raise ValueError("find_periodic needs t != 0")
    if not 1 <= n <= 4:
        raise ValueError("period must be in 1..4")
    box = box_vt(params, beta)
    rng = rng_for(seed, n)
    rz = np.sqrt(rng.uniform(box.z_inner ** 2, box.z_outer ** 2, n_seeds))
    rw = np.sqrt(rng.uniform(box.w_inner ** 2, box.w_outer ** 2, n_seeds))
    z = rz * np.exp(2j * np.pi * rng.random(n_seeds))
    w = rw * np.exp(2j * np.pi * rng.random(n_seeds))
    eye = np.eye(2)
    with np.errstate(all="ignore"):
        for _ in range(max_iter):
            fz, fw, jac, _ = iterate_with_jacobian(params, z, w, n)
            rhs = np.stack([fz - z, fw - w], -1)[..., None]
            a = jac - eye
            adet = a[:, 0, 0] * a[:, 1, 1] - a[:, 0, 1] * a[:, 1, 0]
            dz = (a[:, 1, 1] * rhs[:, 0, 0] - a[:, 0, 1] * rhs[:, 1, 0]) / adet
            dw = (a[:, 0, 0] * rhs[:, 1, 0] - a[:, 1, 0] * rhs[:, 0, 0]) / adet
            step_ok = np.isfinite(dz) & np.isfinite(dw)
            z = np.where(step_ok, z - dz, z)
            w = np.where(step_ok, w - dw, w)
        fz, fw, jac, det = iterate_with_jacobian(params, z, w, n)
        res = np.hypot(np.abs(fz - z), np.abs(fw - w))
        good = np.isfinite(res) & (res <= RESIDUAL_RTOL * (1 + np.hypot(np.abs(z), np.abs(w))))
    z, w, jac, det = z[good], w[good], jac[good], det[good]
    found = []
    if z.size:
        radius = CLUSTER_RTOL * (1 + float(np.max(np.hypot(np.abs(z), np.abs(w)))))
        found = [grp[0] for grp in _cluster_fast(z, w, radius)]
    l1, l2 = _eigen_split(jac[found], det[found]) if found else (np.array([]), np.array([]))
    points = []
    for j, i in enumerate(found):
        points.append(PeriodicPoint(PointC2(complex(z[i]), complex(w[i])), complex(l1[j]),
                                    complex(l2[j]), bool(abs(l2[j]) > 1), complex(det[i])))
    points.sort(key=lambda pp: (pp.point.z.real, pp.point.z.imag, pp.point.w.real, pp.point.w.imag))
    return PeriodicOrbitSet(n, tuple(points), len(points) / 4 ** n)


def _cluster_fast(z, w, radius):
    """Cluster many candidate points: sort by Re z, then link within ``radius``."""
    order = np.argsort(z.real, kind="stable")
    groups = []
    reps = []  # (z, w, group index)
    for i in order:
        placed = False
        for zr, wr, gi in reps:
            if abs(z[i] - zr) <= radius and abs(w[i] - wr) <= radius:
                groups[gi].append(int(i))
                placed = True
                break
        if not placed:
            reps.append((z[i], w[i], len(groups)))
            groups.append([int(i)])
    return groups


@dataclass(frozen=True)
class BDMEstimate:
    chi1_hat: float
    chi2_hat: float
    L_hat: float
    n_used: int
    unreliable: bool
    normalization: str


def bdm_estimate(params: FamilyParams, orbits: PeriodicOrbitSet, normalization="count",
                 beta=0.3) -> BDMEstimate:
    """Periodic-point averages of (1/n) log|lambda_i| over repelling points in V_t(beta).

    ``normalization="degree"`` weights each point by 4^-n; ``"count"`` divides
    by the number of points used.
    """
    if not orbits.points:
        raise ValueError("no periodic points")
    n = orbits.period
    box = box_vt(params, beta)
    used = [pp for pp in orbits.points
            if pp.repelling and box.contains(pp.point.z, pp.point.w)]
    if not used:
        raise ValueError("no repelling periodic points inside the box")
    s1 = math.fsum(math.log(abs(pp.lambda1)) / n for pp in used)
    s2 = math.fsum(math.log(abs(pp.lambda2)) / n for pp in used)
    if normalization == "degree":
        weight = 4.0 ** -n
    elif normalization == "count":
        weight = 1.0 / len(used)
    else:
        raise ValueError(f"unknown normalization {normalization!r}")
    c1, c2 = s1 * weight, s2 * weight
    return BDMEstimate(c1, c2, c1 + c2, len(used), orbits.low_coverage, normalization)
