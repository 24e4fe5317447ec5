"""Command-line entry point: ``degenlab <subcommand> [flags]``.

Exit status is 0 on success, 1 when a module rejects its input (the message
is printed verbatim on stderr) and 2 on usage errors.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

from . import __version__
from .errors import DegenLabError
from .family import FamilyParams, evaluate, format_float
from .io import RunConfig, load_config, write_artifact
from .parallel import resolve_workers

COMMANDS = ("eval", "preimage", "sample", "lyapunov", "sweep", "probe-harmonic", "scan",
            "cone-check", "periodic")


def _floats(text, n):
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != n:
        raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers")
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _point(text):
    a, b, c, d = _floats(text, 4)
    return complex(a, b), complex(c, d)


def _complex(text):
    if "," in text:
        a, b = _floats(text, 2)
        return complex(a, b)
    try:
        return complex(text.replace(" ", ""))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _decades(text):
    try:
        a, b = (int(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError("expected a:b, e.g. 2:5") from None
    if a > b or a < 0:
        raise argparse.ArgumentTypeError("need 0 <= a <= b")
    return a, b


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat key=value config file")
    common.add_argument("--seed", type=int, help="master seed (overrides config)")
    common.add_argument("--out-dir", type=Path, help="artifact directory (overrides config)")
    common.add_argument("--threads", type=int, help="worker processes, 0 = all cores")
    common.add_argument("--name", help="artifact basename (default: the subcommand)")

    parser = argparse.ArgumentParser(prog="degenlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", parents=[common], help="evaluate f_t at a point")
    p.add_argument("--point", type=_point, required=True, help="z_re,z_im,w_re,w_im")

    p = sub.add_parser("preimage", parents=[common], help="solve one fibre f_t^-1(point)")
    p.add_argument("--point", type=_point, required=True, help="z_re,z_im,w_re,w_im")

    p = sub.add_parser("sample", parents=[common], help="sample the measure mu_{f_t}")
    p.add_argument("--n-points", type=int)
    p.add_argument("--burn-in", type=int)
    p.add_argument("--beta", type=float, help="box parameter for the containment report")

    p = sub.add_parser("lyapunov", parents=[common], help="QR exponents along backward orbits")
    p.add_argument("--n-orbits", type=int)
    p.add_argument("--n-steps", type=int)
    p.add_argument("--burn-in", type=int)

    p = sub.add_parser("sweep", parents=[common], help="exponents over |t| = 10^-a .. 10^-b")
    p.add_argument("--t-decades", type=_decades, required=True, metavar="A:B")
    p.add_argument("--phase", type=float, default=0.0, help="arg t in radians")
    p.add_argument("--n-orbits", type=int)
    p.add_argument("--n-steps", type=int)
    p.add_argument("--burn-in", type=int)

    p = sub.add_parser("probe-harmonic", parents=[common], help="mean-value test in t")
    p.add_argument("--t0", type=_complex)
    p.add_argument("--radius", type=float)
    p.add_argument("--n-circle", type=int)
    p.add_argument("--n-points", type=int)
    p.add_argument("--burn-in", type=int)

    p = sub.add_parser("scan", parents=[common], help="L and its Laplacian over the H-plane")
    p.add_argument("--H-center", type=_complex)
    p.add_argument("--H-halfwidth", type=float)
    p.add_argument("--nx", type=int)
    p.add_argument("--ny", type=int)
    p.add_argument("--n-points", type=int)
    p.add_argument("--burn-in", type=int)
    p.add_argument("--band", type=float, default=0.2)

    p = sub.add_parser("cone-check", parents=[common], help="cone invariance on cloud samples")
    p.add_argument("--eta0", type=float, help="cone width (default: calibrated)")
    p.add_argument("--delta", type=float)
    p.add_argument("--n-points", type=int)
    p.add_argument("--vectors-per-point", type=int)

    p = sub.add_parser("periodic", parents=[common], help="periodic points and BDM exponents")
    p.add_argument("--period", type=int)
    p.add_argument("--n-seeds", type=int)
    return parser


class _Run:
    """Resolved settings for one invocation: flag > config > default."""

    def __init__(self, args):
        self.args = args
        if args.config is not None:
            self.cfg = load_config(args.config)
        else:
            self.cfg = RunConfig(FamilyParams.reference())
        if args.seed is not None:
            self.cfg.master_seed = args.seed
        if args.out_dir is not None:
            self.cfg.output_dir = args.out_dir
        threads = args.threads if args.threads is not None else self.cfg.thread_count
        self.workers = resolve_workers(threads)
        self.name = args.name or args.command
        self.params = self.cfg.params
        self.seed = self.cfg.master_seed

    def opt(self, flag, key, default, kind=float):
        val = getattr(self.args, flag, None)
        if val is not None:
            return val
        return self.cfg.get(key, default, kind)

    def path(self, suffix):
        return self.cfg.output_dir / f"{self.name}{suffix}"

    def meta(self, **extra):
        lines = [self.cfg.params.to_text().rstrip("\n"), f"command={self.args.command}",
                 f"seed={self.seed}"]
        lines += [f"{k}={format_float(v) if isinstance(v, float) else v}" for k, v in extra.items()]
        return "\n".join(lines) + "\n"


def _pm(val, err):
    return f"{val:.6f} +- {err:.2g}"


def cmd_eval(run):
    u, v = evaluate(run.params, run.args.point)
    return ",".join(format_float(x) for x in (u.real, u.imag, v.real, v.imag))


def cmd_preimage(run):
    from .preimage import preimages

    ps = preimages(run.params, run.args.point)
    z, w = run.args.point
    point = ",".join(format_float(x) for x in (z.real, z.imag, w.real, w.imag))
    write_artifact(run.path(".csv"), ps.to_csv(), run.meta(point=point))
    worst = max((s.residual for s in ps.solutions), default=float("nan"))
    return (f"preimages={len(ps.solutions)} total_multiplicity={ps.total_multiplicity} "
            f"degree_defect={ps.degree_defect} max_residual={worst:.3g}")


def cmd_sample(run):
    from .measure import box_vt, containment_fraction, integrate_log, sample_mu

    n = run.opt("n_points", "n_points", 20_000, int)
    burn = run.opt("burn_in", "burn_in", 50, int)
    beta = run.opt("beta", "beta", 0.3)
    cloud = sample_mu(run.params, n, burn, run.seed, run.workers)
    write_artifact(run.path(".csv"), cloud.to_csv(), cloud.meta_text())
    frac = containment_fraction(cloud, box_vt(run.params, beta))
    L, err = integrate_log(cloud, "log_abs_det")
    return f"L={_pm(L, err)} containment(beta={beta:g})={frac:.6f} n_points={n}"


def cmd_lyapunov(run):
    from .lyapunov import qr_exponents

    n_orbits = run.opt("n_orbits", "n_orbits", 32, int)
    n_steps = run.opt("n_steps", "n_steps", 2000, int)
    burn = run.opt("burn_in", "burn_in", 50, int)
    est = qr_exponents(run.params, run.seed, n_orbits, n_steps, burn, run.workers)
    write_artifact(run.path(".csv"), est.to_csv(),
                   run.meta(n_orbits=n_orbits, n_steps=n_steps, burn_in=burn))
    return f"L={_pm(est.L, est.stderr_L)} chi1={_pm(est.chi1, est.stderr1)} chi2={_pm(est.chi2, est.stderr2)}"


def cmd_sweep(run):
    from .asymptotics import (SamplingConfig, limit_targets, summary_csv, sweep_csv,
                              sweep_summary, sweep_t)
    from .errors import ExceptionalParamsError
    from .plotting import plot_sweep

    a, b = run.args.t_decades
    phase = run.args.phase
    ts = [10.0 ** -d * complex(math.cos(phase), math.sin(phase)) for d in range(a, b + 1)]
    config = SamplingConfig(n_steps=run.opt("n_steps", "n_steps", 2000, int),
                            n_orbits=run.opt("n_orbits", "n_orbits", 32, int),
                            burn_in=run.opt("burn_in", "burn_in", 50, int))
    rows = sweep_t(run.params, ts, config, run.seed, run.workers)
    try:
        targets = limit_targets(run.params)
    except ExceptionalParamsError:
        targets = None
    meta = run.meta(t_decades=f"{a}:{b}", phase=phase, n_orbits=config.n_orbits,
                    n_steps=config.n_steps, burn_in=config.burn_in)
    write_artifact(run.path(".csv"), sweep_csv(rows), meta)
    summary = sweep_summary(rows, targets) if len([r for r in rows if not r.failed]) >= 2 else []
    write_artifact(run.path("_summary.csv"), summary_csv(summary))
    plot_sweep(rows, targets, run.path(".png"))
    failed = sum(1 for r in rows if r.failed)
    if not summary:
        return f"rows={len(rows)} failed={failed}"
    _, val, err, target = summary[0]
    return f"L_shift_limit={_pm(val, err)} target={target:.5f} rows={len(rows)} failed={failed}"


def cmd_probe(run):
    from .asymptotics import SamplingConfig, harmonic_probe_t

    t0 = run.opt("t0", "t0_re", 1e-3, complex)
    if run.args.t0 is None and "t0_im" in run.cfg.settings:
        t0 = complex(t0.real, float(run.cfg.settings["t0_im"]))
    radius = run.opt("radius", "radius", 2e-4)
    n_circle = run.opt("n_circle", "n_circle", 16, int)
    config = SamplingConfig(n_points=run.opt("n_points", "n_points", 20_000, int),
                            burn_in=run.opt("burn_in", "burn_in", 50, int))
    dev, err = harmonic_probe_t(run.params, t0, radius, n_circle, config, run.seed, run.workers)
    text = (f"deviation,stderr,ratio\n{format_float(dev)},{format_float(err)},"
            f"{format_float(dev / err)}\n")
    write_artifact(run.path(".csv"), text,
                   run.meta(t0=repr(t0), radius=radius, n_circle=n_circle,
                            n_points=config.n_points, burn_in=config.burn_in))
    return f"deviation={_pm(dev, err)} ratio={dev / err:.3f}"


def cmd_scan(run):
    from .bifscan import ScanConfig, annulus_concentration, emit_heatmap, noise_floor, scan_H
    from .plotting import plot_scan

    p = run.params
    center = run.args.H_center
    if center is None:
        center = complex(float(run.cfg.settings.get("H_center_re", 0)),
                         float(run.cfg.settings.get("H_center_im", 0)))
    hw = run.opt("H_halfwidth", "H_halfwidth", 1.5)
    nx = run.opt("nx", "nx", 61, int)
    ny = run.opt("ny", "ny", 61, int)
    config = ScanConfig(n_points=run.opt("n_points", "n_points", 2000, int),
                        burn_in=run.opt("burn_in", "burn_in", 50, int))
    grid = scan_H(p.base, p.G, p.t, center, hw, nx, ny, config, run.seed, run.workers)
    emit_heatmap(grid, "L", run.path(".pgm"))
    emit_heatmap(grid, "laplacian", run.path("_laplacian.pgm"))
    run.path(".meta").write_text(grid.meta_text())
    run.path("_laplacian.meta").write_text(grid.meta_text())
    r0 = abs(p.base.c) * abs(p.G)
    plot_scan(grid, run.path(".png"), r0)
    conc = annulus_concentration(grid, r0, run.args.band)
    return (f"concentration(r0={r0:g},band={run.args.band:g})={conc:.4f} "
            f"noise_floor={noise_floor(grid):.4g} failed_nodes={int(grid.failed.sum())}")


def cmd_cone(run):
    from .lyapunov import calibrate_eta0, cone_check
    from .measure import sample_mu

    n = run.opt("n_points", "n_points", 10_000, int)
    vpp = run.opt("vectors_per_point", "vectors_per_point", 10, int)
    delta = run.opt("delta", "delta", 0.1)
    cloud = sample_mu(run.params, n, 50, run.seed, run.workers)
    eta0 = run.args.eta0 if run.args.eta0 is not None else calibrate_eta0(run.params, cloud)
    rep = cone_check(run.params, cloud, eta0, delta, vpp, run.seed)
    text = ("eta0,delta,n_tested,invariance_failures,ratio_violations\n"
            f"{format_float(rep.eta0)},{format_float(rep.delta)},{rep.n_tested},"
            f"{rep.invariance_failures},{rep.ratio_violations}\n")
    write_artifact(run.path(".csv"), text, run.meta(n_points=n, vectors_per_point=vpp))
    return f"violations={rep.violations} of {rep.n_tested} eta0={rep.eta0:.4g} delta={delta:g}"


def cmd_periodic(run):
    from .lyapunov import bdm_estimate, find_periodic

    n = run.opt("period", "period", 3, int)
    n_seeds = run.opt("n_seeds", "n_seeds", 3000, int)
    orbits = find_periodic(run.params, n, n_seeds, run.seed)
    write_artifact(run.path(".csv"), orbits.to_csv(), run.meta(period=n, n_seeds=n_seeds))
    est = bdm_estimate(run.params, orbits)
    flag = " low_coverage" if orbits.low_coverage else ""
    return (f"points={len(orbits.points)} coverage={orbits.coverage_estimate:.3f} "
            f"L_hat={est.L_hat:.6f} chi1_hat={est.chi1_hat:.6f} chi2_hat={est.chi2_hat:.6f}{flag}")


HANDLERS = {"eval": cmd_eval, "preimage": cmd_preimage, "sample": cmd_sample,
            "lyapunov": cmd_lyapunov, "sweep": cmd_sweep, "probe-harmonic": cmd_probe,
            "scan": cmd_scan, "cone-check": cmd_cone, "periodic": cmd_periodic}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        r = _Run(args)
        line = HANDLERS[args.command](r)
    except (DegenLabError, ValueError, OSError) as exc:
        print(str(exc), file=sys.stderr)
        return 1
    print(line)
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
