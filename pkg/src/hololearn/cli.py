"""Command line entry point: ``hololearn {run,emulate,minimizer,probe,rates}``."""
from __future__ import annotations

import argparse
import sys

import numpy as np

from .harness import load_spec, manifest_hash, run_convergence, theory_overlay
from .multiindex import MultiIndex, hyperbolic_cross
from .neural import CalibrationError, NonFiniteLossError, build_interpolating_minimizer, build_legendre_emulator
from .operators import ConfigError, generate_training_set, oracle_from_config, parse_config_text
from .polyfit import assemble_design, least_squares_fit, predicted_rates
from .probes import LowerBoundSequence, nullspace_spikiness, rate_floor, sigma_s_closed_forms, subgaussian_sigma_min

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _header(tag: str) -> str:
    import hashlib

    return f"# manifest {hashlib.sha1(tag.encode()).hexdigest()}\n"


def cmd_run(args):
    spec = load_spec(args.config, fast=args.fast)
    table = run_convergence(spec, jobs=args.jobs)
    _write(args.out, table.to_csv())
    if args.trials_out:
        _write(args.trials_out, table.trials_csv())
    if args.overlay_p is not None:
        ov = theory_overlay(table, None, args.overlay_p, hilbert=not args.banach)
        _write(args.overlay_out, ov.to_csv(manifest_hash(spec)))
    for m, t, msg in table.failures:
        print(f"trial m={m} t={t} excluded: {msg}", file=sys.stderr)
    return EXIT_OK


def cmd_emulate(args):
    nu = MultiIndex.from_text(args.nu)
    d = args.d or max(nu.max_dim, 1)
    em = build_legendre_emulator(nu, args.delta, d, n_cert=args.n_cert, seed=args.seed)
    print(f"nu={nu.to_text()!r} d={d} width={em.width} depth={em.depth} "
          f"error={em.measured_error:.3e} delta={args.delta:.3e}")
    if args.out:
        _write(args.out, em.net.to_text())
    return EXIT_OK


def cmd_minimizer(args):
    if args.config:
        with open(args.config) as fh:
            cfg = parse_config_text(fh.read())
    else:
        cfg = {"family": "affine-a1", "d": 4, "K": 257, "noise": 0.0, "norm": "weighted-euclidean", "source": 10.0}
    oracle = oracle_from_config(cfg)
    m = args.m
    r = args.r or 2 * m + 2
    data = generate_training_set(oracle, m, 0.0, args.seed, d_eff=max(r, oracle.d))
    Lam = hyperbolic_cross(args.index_n, oracle.d)
    fit = least_squares_fit(assemble_design(Lam, data.X), data.Y)
    lines = ["z_scale,residual,sigma_min,param_norm"]
    for zs in args.z_scale:
        mini = build_interpolating_minimizer(fit, data, r, zs, args.seed, args.delta, oracle.output_norm)
        lines.append(f"{zs:.17g},{mini.residual:.17g},{mini.sigma_min:.17g},{np.linalg.norm(mini.net.theta):.17g}")
    _write(args.out, _header(f"minimizer {cfg} m={m} r={r} seed={args.seed}") + "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_probe(args):
    if args.kind == "spikiness":
        rep = nullspace_spikiness(args.m_values, args.trials, args.seed)
        tag = f"spikiness {args.m_values} {args.trials} {args.seed}"
        _write(args.out, _header(tag) + rep.to_csv())
        _write(args.summary_out, _header(tag) + rep.summary_csv())
    elif args.kind == "sigma-min":
        lines = ["m,r,fraction,q10,q50,q90"]
        for m in args.m_values:
            rep = subgaussian_sigma_min(m, args.r_factor * m, args.trials, args.seed)
            q = rep.quantiles
            lines.append(f"{m},{args.r_factor * m},{rep.fraction:.17g},{q[0.1]:.17g},{q[0.5]:.17g},{q[0.9]:.17g}")
        _write(args.out, _header(f"sigma-min {args.m_values} {args.trials} {args.seed}") + "\n".join(lines) + "\n")
    else:
        lines = ["kind,p,m,numeric,closed_form"]
        for m in args.m_values:
            for kind in ("flat-2m", "log-damped"):
                num, closed = sigma_s_closed_forms(LowerBoundSequence(kind, args.p, m), m, 2)
                lines.append(f"{kind},{args.p:g},{m},{num:.17g},{'' if closed is None else f'{closed:.17g}'}")
        _write(args.out, _header(f"sigma-s {args.p} {args.m_values}") + "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_rates(args):
    m = np.asarray(args.m_values, dtype=float)
    up = predicted_rates(None, args.p, m, hilbert=not args.banach, include_log=not args.no_log)
    lo = rate_floor(args.kind, args.p, args.m_values, float("inf") if args.banach else 2)
    lines = [f"# upper exponent {up.exponent:.17g} lower exponent {lo.exponent:.17g}",
             "m,upper,lower_floor,sigma_based"]
    for i in range(m.size):
        lines.append(f"{int(m[i])},{up.values[i]:.17g},{lo.floor[i]:.17g},{lo.sigma_based[i]:.17g}")
    _write(args.out, _header(f"rates {args.p} {args.banach} {args.m_values}") + "\n".join(lines) + "\n")
    return EXIT_OK


def _ints(text):
    return [int(v) for v in text.split(",")]


def _floats(text):
    return [float(v) for v in text.split(",")]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hololearn", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="convergence experiment from a key = value config file")
    p.add_argument("config")
    p.add_argument("--out", default="-")
    p.add_argument("--trials-out")
    p.add_argument("--fast", action="store_true", help="10000 epochs, 3 trials")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--overlay-p", type=float)
    p.add_argument("--overlay-out")
    p.add_argument("--banach", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("emulate", help="build and certify a Legendre emulator")
    p.add_argument("--nu", required=True, help='sparse index, e.g. "1:2 3:1"')
    p.add_argument("--d", type=int)
    p.add_argument("--delta", type=float, default=1e-3)
    p.add_argument("--n-cert", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_emulate)

    p = sub.add_parser("minimizer", help="zero-loss interpolating network demo")
    p.add_argument("--config")
    p.add_argument("--m", type=int, default=20)
    p.add_argument("--r", type=int)
    p.add_argument("--index-n", type=int, default=8)
    p.add_argument("--z-scale", type=_floats, default=[0.0, 2.0**-24, 2.0**-20])
    p.add_argument("--delta", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_minimizer)

    p = sub.add_parser("probe", help="lower-bound and random-matrix probes")
    p.add_argument("kind", choices=["spikiness", "sigma-min", "sigma-s"])
    p.add_argument("--m-values", type=_ints, default=[10, 20, 40, 80])
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--r-factor", type=int, default=8)
    p.add_argument("--p", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    p.add_argument("--summary-out", default="-")
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("rates", help="theoretical rate curves")
    p.add_argument("--p", type=float, default=2 / 3)
    p.add_argument("--m-values", type=_ints, default=[10, 20, 30, 40, 50, 60, 70, 80, 90, 100, 200, 300, 400, 500])
    p.add_argument("--banach", action="store_true")
    p.add_argument("--no-log", action="store_true")
    p.add_argument("--kind", choices=["flat-2m", "log-damped"], default="flat-2m")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_rates)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, KeyError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CalibrationError, NonFiniteLossError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
