"""Fibres of f_t: all solutions of f_t(z, w) = (u, v).

Both component equations are quadratic in w with coefficients polynomial in
z, so eliminating w with the Sylvester resultant leaves a quartic in z.  Its
roots come from companion-matrix eigenvalues (LAPACK balances by default),
get one Newton step on the quartic, are back-substituted for w and finally
polished with Newton on the full 2x2 system.

:func:`solve_fibers` is the vectorised kernel used by the samplers; it works
on many targets (and, through a stacked :class:`~degenlab.family.Coeffs`, many
parameter sets) at once.  :func:`preimages` is the single-fibre API.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import CriticalPointError, DegenerateFiberError, NewtonDivergenceError
from .family import (
    Coeffs,
    FamilyParams,
    HenonBase,
    PointC2,
    eval_arrays,
    is_regular,
    jacobian_arrays,
)

log = logging.getLogger(__name__)

CLUSTER_RTOL = 1e-6
RESIDUAL_RTOL = 1e-9
NEWTON_RTOL = 1e-12
SINGULAR_RTOL = 1e-14


class Solution(NamedTuple):
    point: PointC2
    multiplicity: int
    residual: float


@dataclass(frozen=True)
class PreimageSet:
    solutions: tuple
    target: PointC2
    degree_defect: int

    @property
    def total_multiplicity(self):
        return sum(s.multiplicity for s in self.solutions)

    def points(self):
        return [s.point for s in self.solutions]

    def to_csv(self):
        from .io import format_float as ff

        lines = ["z_re,z_im,w_re,w_im,mult,residual"]
        for s in self.solutions:
            z, w = s.point
            lines.append(",".join([ff(z.real), ff(z.imag), ff(w.real), ff(w.imag),
                                   str(s.multiplicity), ff(s.residual)]))
        return "\n".join(lines) + "\n"


def henon_inverse(base: HenonBase, target) -> PointC2:
    """Inverse of the t = 0 map (w, c z + p(w))."""
    u, v = complex(target[0]), complex(target[1])
    return PointC2((v - base.p(u)) / base.c, u)


# -- polynomial helpers (coefficient lists, ascending powers) --------------

def _pmul(a, b):
    out = [0j] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            out[i + j] = out[i + j] + x * y
    return out


def _psub(a, b):
    n = max(len(a), len(b))
    a = list(a) + [0j] * (n - len(a))
    b = list(b) + [0j] * (n - len(b))
    return [x - y for x, y in zip(a, b)]


def _pscale(a, s):
    return [s * x for x in a]


def _flat(k: Coeffs, shape):
    return Coeffs(*(np.reshape(f, shape) if isinstance(f, np.ndarray) else f for f in k))


def w_quadratics(k: Coeffs, u, v):
    """(A, B, C) coefficient polynomials in z of the two equations in w.

    Eq1: w + t g(z,w) - u = 0 and Eq2: c z + p(w) + t h(z,w) - v = 0, each written as
    A w^2 + B(z) w + C(z) = 0 with A constant, B linear and C quadratic in z.
    """
    t = k.t
    eq1 = ([t * k.g02], [1 + t * k.g01, t * k.g11], [t * k.g00 - u, t * k.g10, t * k.g20])
    eq2 = ([1 + t * k.h02], [k.c1 + t * k.h01, t * k.h11],
           [k.c2 + t * k.h00 - v, k.c + t * k.h10, t * k.h20])
    return eq1, eq2


def fiber_quartic(k: Coeffs, u, v):
    """Resultant in z of the fibre equations, ascending coefficients (5 entries).

    For quadratics A1 w^2 + B1 w + C1 and A2 w^2 + B2 w + C2 the Sylvester
    determinant equals (A1C2 - A2C1)^2 - (A1B2 - A2B1)(B1C2 - B2C1).
    """
    (A1, B1, C1), (A2, B2, C2) = w_quadratics(k, u, v)
    d1 = _psub(_pmul(A1, C2), _pmul(A2, C1))
    d2 = _psub(_pmul(A1, B2), _pmul(A2, B1))
    d3 = _psub(_pmul(B1, C2), _pmul(B2, C1))
    res = _psub(_pmul(d1, d1), _pmul(d2, d3))
    return (res + [0j] * 5)[:5]


def _quad_roots(A, B, C):
    """Both roots of A x^2 + B x + C, cancellation-free; A = 0 gives (inf, -C/B)."""
    with np.errstate(all="ignore"):
        disc = np.sqrt(B * B - 4 * A * C + 0j)
        sgn = np.where((np.conj(B) * disc).real >= 0, 1.0, -1.0)
        q = -0.5 * (B + sgn * disc)
        r1 = q / A
        r2 = C / q
    return r1, r2


def _quartic_roots(coeffs):
    """Roots of the batch of quartics ``coeffs`` (list of 5 arrays, ascending)."""
    a = np.stack(np.broadcast_arrays(*coeffs), axis=-1).astype(complex)  # (N, 5)
    n = a.shape[0]
    lead = a[:, 4]
    mag = np.abs(a)
    with np.errstate(all="ignore"):
        # Fujiwara-type root scale: every root satisfies |z| <= 2 s
        ratios = np.stack([(mag[:, j] / np.abs(lead)) ** (1.0 / (4 - j)) for j in range(4)],
                          axis=-1)
        s = np.max(ratios, axis=-1)
        s = np.where(np.isfinite(s) & (s > 0), s, 1.0)
        b = np.stack([a[:, j] / (lead * s ** (4 - j)) for j in range(4)], axis=-1)
    bad = ~np.all(np.isfinite(b), axis=-1)
    b[bad] = 0.0
    comp = np.zeros((n, 4, 4), dtype=complex)
    comp[:, 1, 0] = comp[:, 2, 1] = comp[:, 3, 2] = 1.0
    comp[:, :, 3] = -b
    zeta = np.linalg.eigvals(comp)
    # one Newton step on the scaled quartic
    with np.errstate(all="ignore"):
        bb = b[:, None, :]
        pz = (((zeta + bb[..., 3]) * zeta + bb[..., 2]) * zeta + bb[..., 1]) * zeta + bb[..., 0]
        dpz = ((4 * zeta + 3 * bb[..., 3]) * zeta + 2 * bb[..., 2]) * zeta + bb[..., 1]
        step = pz / dpz
        zeta = np.where(np.isfinite(step), zeta - step, zeta)
    z = zeta * s[:, None]
    z[bad] = np.nan
    return z


def _polish(k2: Coeffs, z, w, u, v, iters, tol):
    """Newton on f_t(z,w) = (u,v), lane-wise; lanes freeze once below ``tol``."""
    with np.errstate(all="ignore"):
        fu, fv = eval_arrays(k2, z, w)
        ru, rv = fu - u, fv - v
        res = np.hypot(np.abs(ru), np.abs(rv))
        for _ in range(iters):
            active = np.isfinite(res) & (res > tol)
            if not active.any():
                break
            m11, m12, m21, m22 = jacobian_arrays(k2, z, w)
            det = m11 * m22 - m12 * m21
            dz = (m22 * ru - m12 * rv) / det
            dw = (m11 * rv - m21 * ru) / det
            zn = z - dz
            wn = w - dw
            fu, fv = eval_arrays(k2, zn, wn)
            run, rvn = fu - u, fv - v
            resn = np.hypot(np.abs(run), np.abs(rvn))
            take = active & np.isfinite(resn) & (resn < res)
            z = np.where(take, zn, z)
            w = np.where(take, wn, w)
            ru = np.where(take, run, ru)
            rv = np.where(take, rvn, rv)
            res = np.where(take, resn, res)
    return z, w, res


def solve_fibers(k: Coeffs, u, v, polish_iters=8):
    """Four preimages of every target (u[i], v[i]).

    Coefficient fields of ``k`` are scalars or arrays with one entry per
    target.  Returns ``(z, w, residual)``, each of shape (N, 4); a sheet that
    could not be recovered has residual ``inf``.
    """
    u = np.atleast_1d(np.asarray(u, dtype=complex))
    v = np.atleast_1d(np.asarray(v, dtype=complex))
    n = u.shape[0]
    k1 = _flat(k, (-1,))
    k2 = _flat(k, (-1, 1))
    with np.errstate(all="ignore"):
        quartic = fiber_quartic(k1, u, v)
        quartic = [np.broadcast_to(np.asarray(q, dtype=complex), (n,)) for q in quartic]
        z = _quartic_roots(quartic)
        u2, v2 = u[:, None], v[:, None]
        (A1, B1, C1), (A2, B2, C2) = w_quadratics(k2, u2, v2)
        Bz1 = B1[0] + B1[1] * z
        Cz1 = C1[0] + C1[1] * z + C1[2] * z * z
        Bz2 = B2[0] + B2[1] * z
        Cz2 = C2[0] + C2[1] * z + C2[2] * z * z
        A1b = np.broadcast_to(A1[0], z.shape)
        A2b = np.broadcast_to(A2[0], z.shape)
        cands = np.stack(_quad_roots(A1b, Bz1, Cz1) + _quad_roots(A2b, Bz2, Cz2), axis=-1)
        zc = z[..., None]
        fu, fv = eval_arrays(_flat(k, (-1, 1, 1)), zc, cands)
        cres = np.hypot(np.abs(fu - u2[..., None]), np.abs(fv - v2[..., None]))
        cres = np.where(np.isfinite(cres), cres, np.inf)
        best = cres.min(axis=-1, keepdims=True)
        wabs = np.where(cres == best, np.abs(cands), np.inf)
        pick = np.argmin(wabs, axis=-1)
        w = np.take_along_axis(cands, pick[..., None], axis=-1)[..., 0]
        w = np.where(np.isfinite(w), w, 0.0)
        scale = 1.0 + np.hypot(np.abs(u2), np.abs(v2))
        z, w, res = _polish(k2, np.where(np.isfinite(z), z, 0.0), w, u2, v2,
                            polish_iters, NEWTON_RTOL * scale)
    res = np.where(np.isfinite(z) & np.isfinite(w), res, np.inf)
    res = np.where(np.isfinite(res), res, np.inf)
    return z, w, res


def sheet_order(z, w):
    """Permutation of the four sheets giving labels that vary continuously.

    Sheets are paired by proximity in z (for small t the fibre consists of two
    z-clusters related by z -> -z); the pair with larger Re(z) comes first and
    within a pair the sheet with larger Re(w) comes first.  Away from branch
    cuts the labelling is a continuous function of the target and of the
    parameters, which lets common random numbers produce smooth estimates.
    """
    pairings = np.array([[0, 1, 2, 3], [0, 2, 1, 3], [0, 3, 1, 2]])
    zz = np.where(np.isfinite(z), z, 0.0)
    cost = np.stack([np.abs(zz[:, p[0]] - zz[:, p[1]]) + np.abs(zz[:, p[2]] - zz[:, p[3]])
                     for p in pairings], axis=-1)
    perm = pairings[np.argmin(cost, axis=-1)]  # (N, 4)
    zp = np.take_along_axis(zz, perm, axis=-1)
    wp = np.take_along_axis(np.where(np.isfinite(w), w, 0.0), perm, axis=-1)
    swap_pairs = ((zp[:, 0] + zp[:, 1]) - (zp[:, 2] + zp[:, 3])).real < 0
    perm = np.where(swap_pairs[:, None], perm[:, [2, 3, 0, 1]], perm)
    wp = np.where(swap_pairs[:, None], wp[:, [2, 3, 0, 1]], wp)
    swap_a = (wp[:, 0] - wp[:, 1]).real < 0
    swap_b = (wp[:, 2] - wp[:, 3]).real < 0
    perm[swap_a, 0], perm[swap_a, 1] = perm[swap_a, 1].copy(), perm[swap_a, 0].copy()
    perm[swap_b, 2], perm[swap_b, 3] = perm[swap_b, 3].copy(), perm[swap_b, 2].copy()
    return perm


# -- single-fibre API ------------------------------------------------------

def _cluster(points, radius):
    """Greedy single-linkage clustering; returns list of index lists."""
    n = len(points)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            d = math.hypot(abs(points[i][0] - points[j][0]), abs(points[i][1] - points[j][1]))
            if d <= radius:
                parent[find(i)] = find(j)
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return list(groups.values())


def preimages(params: FamilyParams, target) -> PreimageSet:
    if params.t == 0:
        raise ValueError("preimages needs t != 0; use henon_inverse at t = 0")
    if not is_regular(params):
        raise ValueError("preimages needs regular params")
    u, v = complex(target[0]), complex(target[1])
    k = params.coeffs()
    quartic = fiber_quartic(k, u, v)
    qn = max(abs(q) for q in quartic)
    if qn == 0 or not np.isfinite(qn):
        raise DegenerateFiberError()
    tnorm = math.hypot(abs(u), abs(v))
    tol = RESIDUAL_RTOL * (1 + tnorm)
    z, w, res = solve_fibers(k, np.array([u]), np.array([v]))
    good = [(complex(z[0, i]), complex(w[0, i]), float(res[0, i]))
            for i in range(4) if res[0, i] <= tol]
    defect = 4 - len(good)
    if defect:
        log.warning("fibre over (%r, %r): %d sheet(s) failed to converge", u, v, defect)
    sols = []
    if good:
        radius = CLUSTER_RTOL * (1 + max(math.hypot(abs(a), abs(b)) for a, b, _ in good))
        for grp in _cluster([(a, b) for a, b, _ in good], radius):
            rep = min((good[i] for i in grp), key=lambda s: s[2])
            sols.append(Solution(PointC2(rep[0], rep[1]), len(grp), rep[2]))
    sols.sort(key=lambda s: (s.point.z.real, s.point.z.imag, s.point.w.real, s.point.w.imag))
    return PreimageSet(tuple(sols), PointC2(u, v), defect)


class NewtonResult(NamedTuple):
    point: PointC2
    iterations: int
    residual: float


def newton_refine(params: FamilyParams, target, guess, max_iter=20) -> NewtonResult:
    """Newton iteration for f_t(p) = target starting at ``guess``.

    Raises :class:`CriticalPointError` on a singular Jacobian and
    :class:`NewtonDivergenceError` when ``max_iter`` is exhausted.
    """
    k = params.coeffs()
    u, v = complex(target[0]), complex(target[1])
    z, w = complex(guess[0]), complex(guess[1])
    tol = NEWTON_RTOL * (1 + math.hypot(abs(u), abs(v)))
    for it in range(max_iter + 1):
        fu, fv = eval_arrays(k, z, w)
        ru, rv = fu - u, fv - v
        res = math.hypot(abs(ru), abs(rv))
        if not math.isfinite(res):
            break
        if res <= tol:
            return NewtonResult(PointC2(z, w), it, res)
        if it == max_iter:
            break
        m11, m12, m21, m22 = jacobian_arrays(k, z, w)
        det = m11 * m22 - m12 * m21
        if abs(det) <= SINGULAR_RTOL * (abs(m11 * m22) + abs(m12 * m21)):
            raise CriticalPointError()
        z -= (m22 * ru - m12 * rv) / det
        w -= (m11 * rv - m21 * ru) / det
    raise NewtonDivergenceError(f"Newton did not converge in {max_iter} iterations")
