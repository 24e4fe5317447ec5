"""The degenerating quadratic family on C^2.

    f_t(z, w) = (w + t g(z, w),  c z + p(w) + t h(z, w)),   p(w) = w^2 + c1 w + c2

with deg g = 2, g_zz != 0 and deg h <= 2.  At t = 0 this is the Henon map
(w, c z + p(w)); for small t != 0 it is a regular endomorphism of degree 4.

Scalar entry points (:func:`evaluate`, :func:`jacobian`, ...) take a
:class:`FamilyParams` and a :class:`PointC2`.  The hot loops elsewhere use the
array kernels (:func:`eval_arrays`, :func:`jacobian_arrays`, :func:`det_arrays`),
which take a :class:`Coeffs` pack whose fields may be scalars or numpy arrays
broadcastable against the point arrays; this is how parameter grids are
vectorised.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, NamedTuple

import numpy as np

from .errors import NotRegularError, OrbitEscapedError

# relative band inside which |H/G| and |c| count as equal
EXCEPTIONAL_RTOL = 1e-9
# threshold on the normalised resultant of the leading parts
REGULARITY_TOL = 1e-12

_MONOMIALS = ("a20", "a11", "a02", "a10", "a01", "a00")


def _as_complex(x, name):
    x = complex(x)
    if not (math.isfinite(x.real) and math.isfinite(x.imag)):
        raise ValueError(f"{name} must be finite, got {x!r}")
    return x


@dataclass(frozen=True)
class QuadPoly2:
    """q(z,w) = a20 z^2 + a11 zw + a02 w^2 + a10 z + a01 w + a00."""

    a20: complex = 0j
    a11: complex = 0j
    a02: complex = 0j
    a10: complex = 0j
    a01: complex = 0j
    a00: complex = 0j

    def __post_init__(self):
        for name in _MONOMIALS:
            object.__setattr__(self, name, _as_complex(getattr(self, name), name))

    @property
    def coefficients(self):
        return tuple(getattr(self, name) for name in _MONOMIALS)

    @property
    def degree(self):
        if any(self.coefficients[:3]):
            return 2
        if any(self.coefficients[3:5]):
            return 1
        return 0 if self.a00 else -1

    def __call__(self, z, w):
        return (self.a20 * z * z + self.a11 * z * w + self.a02 * w * w
                + self.a10 * z + self.a01 * w + self.a00)

    def dz(self, z, w):
        return 2 * self.a20 * z + self.a11 * w + self.a10

    def dw(self, z, w):
        return self.a11 * z + 2 * self.a02 * w + self.a01

    def leading(self):
        """Degree-2 homogeneous part as (a20, a11, a02)."""
        return self.a20, self.a11, self.a02

    def without_z2(self):
        """The polynomial with its z^2 coefficient zeroed (g - G z^2)."""
        return replace(self, a20=0j)

    def scaled(self, s):
        return QuadPoly2(*(s * a for a in self.coefficients))


@dataclass(frozen=True)
class HenonBase:
    """Henon data c != 0 and monic p(w) = w^2 + c1 w + c2."""

    c: complex
    c1: complex = 0j
    c2: complex = 0j

    def __post_init__(self):
        for name in ("c", "c1", "c2"):
            object.__setattr__(self, name, _as_complex(getattr(self, name), name))
        if self.c == 0:
            raise ValueError("Henon coefficient c must be nonzero")

    def p(self, w):
        return w * w + self.c1 * w + self.c2

    def dp(self, w):
        return 2 * w + self.c1


class PointC2(NamedTuple):
    z: complex
    w: complex

    def norm(self):
        return math.hypot(abs(self.z), abs(self.w))


class Jacobian2(NamedTuple):
    """Row-major 2x2 derivative, acting on column vectors (x, y)."""

    m11: complex
    m12: complex
    m21: complex
    m22: complex

    def det(self):
        return self.m11 * self.m22 - self.m12 * self.m21

    def matrix(self):
        return np.array([[self.m11, self.m12], [self.m21, self.m22]], dtype=complex)


class Coeffs(NamedTuple):
    """Flat coefficient pack consumed by the array kernels."""

    c: object
    c1: object
    c2: object
    t: object
    g20: object
    g11: object
    g02: object
    g10: object
    g01: object
    g00: object
    h20: object
    h11: object
    h02: object
    h10: object
    h01: object
    h00: object

    @classmethod
    def stack(cls, params_list):
        """Pack several parameter sets as column arrays of shape (n, 1)."""
        packs = [p.coeffs() for p in params_list]
        cols = zip(*packs)
        return cls(*(np.array(col, dtype=complex)[:, None] for col in cols))

    def take(self, index):
        """Sub-pack for lanes ``index`` of a stacked pack (scalars pass through)."""
        return Coeffs(*(f[index] if isinstance(f, np.ndarray) and f.ndim else f
                        for f in self))


@dataclass(frozen=True)
class FamilyParams:
    base: HenonBase
    t: complex
    g: QuadPoly2 = field(default_factory=lambda: QuadPoly2(a20=1))
    h: QuadPoly2 = field(default_factory=QuadPoly2)

    def __post_init__(self):
        object.__setattr__(self, "t", _as_complex(self.t, "t"))
        if self.g.degree != 2 or self.g.a20 == 0:
            raise ValueError("g must have degree 2 with nonzero z^2 coefficient")

    @classmethod
    def reference(cls, c=0.5, G=1.0, H=0.0, t=1e-4, c1=0.0, c2=0.0):
        """Instance of the (t, G, H) subfamily: g = G z^2, h = H z^2."""
        return cls(HenonBase(c, c1, c2), t, QuadPoly2(a20=G), QuadPoly2(a20=H))

    @property
    def G(self):
        return self.g.a20

    @property
    def H(self):
        return self.h.a20

    @property
    def ratio(self):
        return abs(self.H / self.G)

    @property
    def non_exceptional(self):
        r, ac = self.ratio, abs(self.base.c)
        return abs(r - ac) > EXCEPTIONAL_RTOL * max(r, ac)

    def with_t(self, t):
        return replace(self, t=t)

    def with_H(self, H):
        return replace(self, h=replace(self.h, a20=H))

    def coeffs(self):
        b = self.base
        return Coeffs(b.c, b.c1, b.c2, self.t, *self.g.coefficients, *self.h.coefficients)

    # -- serialisation ---------------------------------------------------
    def to_mapping(self):
        out = {}
        for key, val in (("c", self.base.c), ("c1", self.base.c1), ("c2", self.base.c2),
                         ("t", self.t)):
            out[f"{key}_re"], out[f"{key}_im"] = val.real, val.imag
        for poly_name, poly in (("g", self.g), ("h", self.h)):
            for mono, val in zip(_MONOMIALS, poly.coefficients):
                out[f"{poly_name}_{mono}_re"] = val.real
                out[f"{poly_name}_{mono}_im"] = val.imag
        return out

    def to_text(self):
        return "".join(f"{k}={format_float(v)}\n" for k, v in self.to_mapping().items())

    @classmethod
    def from_mapping(cls, m: Mapping[str, object]):
        def cx(key):
            return complex(float(m.get(f"{key}_re", 0.0)), float(m.get(f"{key}_im", 0.0)))

        if "c_re" not in m and "c_im" not in m:
            raise ValueError("params block needs c_re/c_im")
        polys = {
            name: QuadPoly2(*(cx(f"{name}_{mono}") for mono in _MONOMIALS))
            for name in ("g", "h")
        }
        return cls(HenonBase(cx("c"), cx("c1"), cx("c2")), cx("t"), polys["g"], polys["h"])

    @classmethod
    def from_text(cls, text):
        return cls.from_mapping(parse_kv(text))


PARAM_KEYS = tuple(FamilyParams.reference().to_mapping())


def format_float(x):
    """Shortest round-trip decimal; integral values drop the trailing '.0'."""
    s = repr(float(x))
    return s[:-2] if s.endswith(".0") else s


def parse_kv(text):
    """Parse a flat ``key=value`` block; '#' starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        out[key] = val
    return out


# -- array kernels ---------------------------------------------------------

def eval_arrays(k: Coeffs, z, w):
    g = k.g20 * z * z + k.g11 * z * w + k.g02 * w * w + k.g10 * z + k.g01 * w + k.g00
    h = k.h20 * z * z + k.h11 * z * w + k.h02 * w * w + k.h10 * z + k.h01 * w + k.h00
    u = w + k.t * g
    v = k.c * z + (w * w + k.c1 * w + k.c2) + k.t * h
    return u, v


def jacobian_arrays(k: Coeffs, z, w):
    t = k.t
    m11 = t * (2 * k.g20 * z + k.g11 * w + k.g10)
    m12 = 1 + t * (k.g11 * z + 2 * k.g02 * w + k.g01)
    m21 = k.c + t * (2 * k.h20 * z + k.h11 * w + k.h10)
    m22 = 2 * w + k.c1 + t * (k.h11 * z + 2 * k.h02 * w + k.h01)
    return m11, m12, m21, m22


def det_arrays(k: Coeffs, z, w):
    """Expanded determinant of Df_t, organised around the dominant 4tGzw term.

    With gt = g - G z^2:  4tGzw + 2tGz c1 + 2t^2 G z h_w + t gt_z (p'(w) + t h_w)
    - (1 + t g_w)(c + t h_z).
    """
    t, G = k.t, k.g20
    h_w = k.h11 * z + 2 * k.h02 * w + k.h01
    h_z = 2 * k.h20 * z + k.h11 * w + k.h10
    g_w = k.g11 * z + 2 * k.g02 * w + k.g01
    gt_z = k.g11 * w + k.g10
    tGz = t * G * z
    return (4 * tGz * w + 2 * tGz * k.c1 + 2 * tGz * t * h_w
            + t * gt_z * (2 * w + k.c1 + t * h_w)
            - (1 + t * g_w) * (k.c + t * h_z))


# -- scalar API ------------------------------------------------------------

def _check_finite(*vals):
    if not all(np.isfinite(v) for v in vals):
        raise OrbitEscapedError()


def evaluate(params: FamilyParams, p) -> PointC2:
    z, w = complex(p[0]), complex(p[1])
    with np.errstate(all="ignore"):
        u, v = eval_arrays(params.coeffs(), z, w)
    _check_finite(u, v)
    return PointC2(complex(u), complex(v))


def jacobian(params: FamilyParams, p) -> Jacobian2:
    z, w = complex(p[0]), complex(p[1])
    with np.errstate(all="ignore"):
        entries = jacobian_arrays(params.coeffs(), z, w)
    _check_finite(*entries)
    return Jacobian2(*(complex(e) for e in entries))


def det_jacobian_closed_form(params: FamilyParams, p) -> complex:
    return complex(det_arrays(params.coeffs(), complex(p[0]), complex(p[1])))


def binary_quadratic_resultant(a, b):
    """Resultant of a0 X^2 + a1 XY + a2 Y^2 and b0 X^2 + b1 XY + b2 Y^2."""
    a0, a1, a2 = a
    b0, b1, b2 = b
    return (a0 * b2 - a2 * b0) ** 2 - (a0 * b1 - a1 * b0) * (a1 * b2 - a2 * b1)


def leading_parts(params: FamilyParams):
    """Coefficients (z^2, zw, w^2) of the two degree-2 homogeneous components."""
    t = params.t
    g20, g11, g02 = params.g.leading()
    h20, h11, h02 = params.h.leading()
    return (t * g20, t * g11, t * g02), (t * h20, t * h11, 1 + t * h02)


def normalized_resultant(params: FamilyParams) -> float:
    a, b = leading_parts(params)
    na = sum(abs(x) ** 2 for x in a)
    nb = sum(abs(x) ** 2 for x in b)
    return abs(binary_quadratic_resultant(a, b)) / (na * nb)


def is_regular(params: FamilyParams) -> bool:
    if params.t == 0:
        raise NotRegularError("Henon map is not regular")
    return normalized_resultant(params) > REGULARITY_TOL


def rescale(params: FamilyParams, p) -> PointC2:
    """Chart (Z, W) = (G t z, t w) in which the Julia set sits near |Z| = 1."""
    if params.t == 0:
        raise ValueError("rescale needs t != 0")
    return PointC2(params.G * params.t * complex(p[0]), params.t * complex(p[1]))


def unrescale(params: FamilyParams, P) -> PointC2:
    if params.t == 0:
        raise ValueError("unrescale needs t != 0")
    return PointC2(complex(P[0]) / (params.G * params.t), complex(P[1]) / params.t)
