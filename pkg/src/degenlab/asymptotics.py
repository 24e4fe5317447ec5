"""Behaviour of the exponents as t -> 0.

Closed-form limits (:func:`limit_targets`), t-sweeps of the QR exponents
(:func:`sweep_t`), the slope of L against log|t|^-1 (:func:`alpha_fit`),
two-point Richardson extrapolation in |t|^(1/2) (:func:`extrapolate`), and a
mean-value harmonicity probe in t (:func:`harmonic_probe_t`).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .errors import DegenLabError, ExceptionalParamsError, InsufficientDataError
from .family import FamilyParams, is_regular
from .io import format_float
from .lyapunov import qr_exponents
from .measure import DEFAULT_BURN_IN, integrate_log, sample_mu
from .seeding import derive_seed


@dataclass(frozen=True)
class SamplingConfig:
    n_points: int = 20_000
    n_steps: int = 2_000
    n_orbits: int = 32
    burn_in: int = DEFAULT_BURN_IN


@dataclass(frozen=True)
class LimitTargets:
    L_limit: float
    chi1_limit: float
    chi2_limit: float
    lower_bound: float
    upper_bound: float
    beta: float


def limit_targets(params: FamilyParams, beta: float = 0.1) -> LimitTargets:
    if not params.non_exceptional:
        raise ExceptionalParamsError()
    r, ac, aG = params.ratio, abs(params.base.c), abs(params.G)
    m = max(ac, r)
    return LimitTargets(
        L_limit=math.log(4 * math.sqrt(m) / math.sqrt(aG)),
        chi1_limit=math.log(2 * math.sqrt(m) / math.sqrt(aG)),
        chi2_limit=math.log(2.0),
        lower_bound=math.log((1 - beta) * 4 * math.sqrt(abs(r - ac)) / math.sqrt(aG)),
        upper_bound=math.log((1 + beta) * 4 * math.sqrt(r + ac) / math.sqrt(aG)),
        beta=beta,
    )


@dataclass(frozen=True)
class SweepRow:
    t: complex
    L: float
    chi1: float
    chi2: float
    L_stderr: float
    chi1_stderr: float
    chi2_stderr: float
    wall_time: float = 0.0
    failed: str = ""

    @property
    def abs_t(self):
        return abs(self.t)

    @property
    def half_log(self):
        return 0.5 * math.log(1 / abs(self.t))

    @property
    def L_shift(self):
        return self.L - self.half_log

    @property
    def chi1_shift(self):
        return self.chi1 - self.half_log


SWEEP_COLUMNS = ("abs_t", "t_re", "t_im", "L", "chi1", "chi2", "L_shift", "chi1_shift",
                 "L_stderr", "chi1_stderr", "chi2_stderr", "status")


def sweep_csv(rows):
    # wall_time is deliberately absent: the table must be byte-reproducible
    lines = [",".join(SWEEP_COLUMNS)]
    for r in rows:
        vals = [r.abs_t, r.t.real, r.t.imag, r.L, r.chi1, r.chi2, r.L_shift, r.chi1_shift,
                r.L_stderr, r.chi1_stderr, r.chi2_stderr]
        lines.append(",".join(format_float(v) for v in vals) + "," + (r.failed or "ok"))
    return "\n".join(lines) + "\n"


def sweep_row(params: FamilyParams, config: SamplingConfig, seed: int, workers=1) -> SweepRow:
    start = time.perf_counter()
    est = qr_exponents(params, seed, config.n_orbits, config.n_steps, config.burn_in, workers)
    return SweepRow(params.t, est.L, est.chi1, est.chi2, est.stderr_L, est.stderr1, est.stderr2,
                    time.perf_counter() - start)


def sweep_t(template: FamilyParams, t_values, config: SamplingConfig = SamplingConfig(),
            seed: int = 0, workers=1):
    """One QR row per t, sorted by |t| descending; failing rows are marked, not fatal."""
    t_values = sorted((complex(t) for t in t_values), key=lambda t: (-abs(t), t.real, t.imag))
    rows = []
    for i, t in enumerate(t_values):
        if t == 0:
            raise ValueError("sweep values of t must be nonzero")
        params = template.with_t(t)
        try:
            if not is_regular(params):
                raise DegenLabError("params not regular")
            rows.append(sweep_row(params, config, derive_seed(seed, f"sweep/{i}"), workers))
        except DegenLabError as exc:
            nan = float("nan")
            rows.append(SweepRow(t, nan, nan, nan, nan, nan, nan, 0.0, f"failed: {exc}"))
    return rows


def _usable(rows):
    return [r for r in rows if not r.failed and math.isfinite(r.L)]


def alpha_fit(rows) -> float:
    """Least-squares slope of L against log|t|^-1."""
    rows = _usable(rows)
    if len(rows) < 3:
        raise InsufficientDataError("alpha_fit needs at least 3 rows")
    x = np.array([math.log(1 / r.abs_t) for r in rows])
    if (x.max() - x.min()) / math.log(10) < 2 - 1e-9:
        raise InsufficientDataError("alpha_fit needs rows spanning at least 2 decades of |t|")
    y = np.array([r.L for r in rows])
    return float(np.polyfit(x, y, 1)[0])


def extrapolate(rows, column="L_shift"):
    """Two-point Richardson extrapolation to t = 0 in the variable |t|^(1/2).

    Uses the two rows of smallest |t|; returns ``(value, stderr)``.
    """
    rows = sorted(_usable(rows), key=lambda r: r.abs_t)
    if len(rows) < 2:
        raise InsufficientDataError("extrapolation needs two rows")
    a, b = rows[0], rows[1]  # a has the smaller |t|
    sa, sb = math.sqrt(a.abs_t), math.sqrt(b.abs_t)
    ya, yb = getattr(a, column), getattr(b, column)
    err_col = {"L_shift": "L_stderr", "chi1_shift": "chi1_stderr", "chi2": "chi2_stderr"}[column]
    ea, eb = getattr(a, err_col), getattr(b, err_col)
    wa, wb = sb / (sb - sa), -sa / (sb - sa)
    return wa * ya + wb * yb, math.hypot(wa * ea, wb * eb)


def sweep_summary(rows, targets: LimitTargets | None):
    """(quantity, measured, stderr, target) tuples comparing a sweep to the closed forms."""
    out = []
    for col, name, attr in (("L_shift", "L_shift_limit", "L_limit"),
                            ("chi1_shift", "chi1_shift_limit", "chi1_limit"),
                            ("chi2", "chi2_limit", "chi2_limit")):
        val, err = extrapolate(rows, col)
        out.append((name, val, err, getattr(targets, attr) if targets else float("nan")))
    try:
        out.append(("alpha", alpha_fit(rows), float("nan"), 0.5))
    except InsufficientDataError:
        pass
    return out


def summary_csv(summary):
    lines = ["quantity,measured,stderr,target,difference"]
    for name, val, err, target in summary:
        lines.append(",".join([name] + [format_float(x) for x in (val, err, target, val - target)]))
    return "\n".join(lines) + "\n"


def shifted_L(params: FamilyParams, config: SamplingConfig, seed: int, workers=1):
    """L(f_t) - (1/2) log|t|^-1 as the cloud average of log|det Df_t|, with stderr."""
    cloud = sample_mu(params, config.n_points, config.burn_in, seed, workers)
    val, err = integrate_log(cloud, "log_abs_det")
    return val - 0.5 * math.log(1 / abs(params.t)), err


def harmonic_probe_t(template: FamilyParams, t0, radius: float, n_circle: int,
                     config: SamplingConfig = SamplingConfig(), seed: int = 0, workers=1):
    """Mean-value deviation of t -> L(f_t) - (1/2)log|t|^-1 on a circle about t0.

    Every evaluation uses an independent derived seed, so the combined
    standard error sqrt(s0^2 + sum s_i^2 / n^2) is honest.
    """
    t0 = complex(t0)
    if radius <= 0 or abs(t0) <= radius:
        raise ValueError("circle touches t = 0")
    if not template.non_exceptional:
        raise ExceptionalParamsError()
    centre, s0 = shifted_L(template.with_t(t0), config, derive_seed(seed, "probe/center"), workers)
    vals, errs = [], []
    for j in range(n_circle):
        t = t0 + radius * complex(math.cos(2 * math.pi * j / n_circle),
                                  math.sin(2 * math.pi * j / n_circle))
        v, e = shifted_L(template.with_t(t), config, derive_seed(seed, f"probe/{j}"), workers)
        vals.append(v)
        errs.append(e)
    mean = math.fsum(vals) / n_circle
    stderr = math.sqrt(s0 ** 2 + math.fsum(e * e for e in errs) / n_circle ** 2)
    return abs(centre - mean), stderr


def mean_value_deviation(fn, t0, radius, n_circle):
    """Deterministic mean-value deviation of a scalar function of t (used for checks)."""
    vals = [fn(t0 + radius * complex(math.cos(2 * math.pi * j / n_circle),
                                     math.sin(2 * math.pi * j / n_circle)))
            for j in range(n_circle)]
    return abs(fn(t0) - math.fsum(vals) / n_circle)
