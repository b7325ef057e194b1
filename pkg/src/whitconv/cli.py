"""Command-line front end: ``whitconv <command> [options]``.

Exit codes: 0 success, 1 a verification check failed, 2 invalid input,
3 numerical failure. Diagnostics go to stderr.
"""

import argparse
import json
import os
import sys
from contextlib import nullcontext

import numpy as np

from . import __version__
from . import io as wio
from .convolve import convolve_measures
from .errors import DomainError, NumericalError, WhitconvError
from .infdiv import ExponentFn, build_exponent, semigroup_density
from .processes import SCHEMES, random_walk, simulate_diffusion, simulate_levy
from .specfun import Order, Params, QuadConfig, bW
from .spectral import BumpFunction, DiscreteMeasure, forward_transform, inverse_transform, transform_of_measure
from .verify import SUITES, run_suite


class UsageError(DomainError):
    pass


# ------------------------------------------------------------ flag parsers

def parse_order(text):
    kind, _, val = text.partition(":")
    try:
        v = float(val)
    except ValueError:
        raise UsageError(f"bad order {text!r}; use real:v or imag:tau") from None
    if kind == "real":
        return Order.real(v)
    if kind == "imag":
        return Order.imag(v)
    raise UsageError(f"bad order {text!r}; use real:v or imag:tau")


def parse_grid(text, geometric=False):
    """lo:hi:n, linear unless geometric is asked for (or 'geom:lo:hi:n')."""
    parts = text.split(":")
    if parts[0] == "geom":
        geometric, parts = True, parts[1:]
    if len(parts) != 3:
        raise UsageError(f"bad grid {text!r}; use lo:hi:n")
    try:
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise UsageError(f"bad grid {text!r}; use lo:hi:n") from None
    if n < 1 or hi < lo:
        raise UsageError("grid needs n >= 1 and hi >= lo")
    if geometric:
        if lo <= 0:
            raise UsageError("geometric grids need lo > 0")
        return np.geomspace(lo, hi, n)
    return np.linspace(lo, hi, n)


def parse_measure(text):
    """dirac:x, dirac:x:w, or file:path (.json or .csv)."""
    kind, _, rest = text.partition(":")
    if kind == "dirac":
        parts = rest.split(":")
        try:
            vals = [float(v) for v in parts]
        except ValueError:
            raise UsageError(f"bad measure {text!r}") from None
        return DiscreteMeasure.dirac(vals[0], vals[1] if len(vals) > 1 else 1.0)
    if kind == "file":
        if not os.path.exists(rest):
            raise UsageError(f"no such file: {rest}")
        return wio.read_measure(rest)
    raise UsageError(f"bad measure {text!r}; use dirac:x or file:path")


def parse_exponent(p, text):
    """gaussian:b, poisson:rate:x, or file:path.json (ExponentFn JSON)."""
    kind, _, rest = text.partition(":")
    try:
        if kind == "gaussian":
            return build_exponent(p, float(rest))
        if kind == "poisson":
            rate, x = (float(v) for v in rest.split(":"))
            return build_exponent(p, 0.0, DiscreteMeasure.dirac(x, rate))
    except ValueError:
        raise UsageError(f"bad exponent {text!r}") from None
    if kind == "file":
        with open(rest, encoding="utf-8") as fh:
            return ExponentFn.from_json(p, fh.read())
    raise UsageError(f"bad exponent {text!r}; use gaussian:b, poisson:rate:x or file:path")


def parse_function(text):
    """bump:center:half_width[:height]."""
    kind, _, rest = text.partition(":")
    if kind != "bump":
        raise UsageError(f"bad function {text!r}; use bump:center:half_width")
    try:
        vals = [float(v) for v in rest.split(":")]
        return BumpFunction(*vals)
    except (TypeError, ValueError):
        raise UsageError(f"bad function {text!r}") from None


def _threads(args):
    n = args.threads if args.threads is not None else os.environ.get("WHITCONV_THREADS")
    if n is None:
        return None
    try:
        n = int(n)
    except ValueError:
        raise UsageError("--threads / WHITCONV_THREADS must be an integer") from None
    if n < 1:
        raise UsageError("--threads must be >= 1")
    return n


def _thread_limit(n):
    if n is None:
        return nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


# --------------------------------------------------------------- commands

def _emit(outs, args, csv_text, json_obj, manifest):
    text = wio.dumps(json_obj) if args.format == "json" else csv_text
    if args.out:
        outs.write(args.out, text)
    else:
        sys.stdout.write(text)
    _write_manifest(outs, args, manifest)


def _write_manifest(outs, args, manifest):
    if args.out:
        outs.write(args.out + ".manifest.json", wio.dumps(manifest))


def _base_manifest(args, command):
    return {"command": command, "version": __version__, "alpha": args.alpha,
            "abs_tol": args.abs_tol, "rel_tol": args.rel_tol}


def cmd_eval(args, outs):
    p = Params(args.alpha)
    nu = parse_order(args.nu)
    x = parse_grid(args.x_grid)
    vals = np.atleast_1d(bW(p, nu, x, route=args.route))
    _emit(outs, args, wio.table_csv(["x", "bW"], [x, vals]),
          {"alpha": args.alpha, "nu": str(nu), "route": args.route, "x": x.tolist(), "bW": vals.tolist()},
          dict(_base_manifest(args, "eval"), nu=args.nu, x_grid=args.x_grid, route=args.route))
    return 0


def cmd_transform(args, outs):
    p = Params(args.alpha)
    lams = parse_grid(args.lambda_grid)
    if (args.f is None) == (args.measure is None):
        raise UsageError("give exactly one of --f or --measure")
    if args.f is not None:
        vals = np.atleast_1d(forward_transform(p, parse_function(args.f), lams))
    else:
        vals = np.atleast_1d(transform_of_measure(p, parse_measure(args.measure), lams))
    _emit(outs, args, wio.table_csv(["lambda", "value"], [lams, vals]),
          {"alpha": args.alpha, "lambda": lams.tolist(), "value": vals.tolist()},
          dict(_base_manifest(args, "transform"), f=args.f, measure=args.measure, lambda_grid=args.lambda_grid))
    return 0


def _fhat_from(args, p):
    kind, _, rest = args.fhat.partition(":")
    if kind == "heat":
        t = float(rest)
        if t <= 0:
            raise UsageError("heat:t needs t > 0")
        return lambda lam: np.exp(-t * np.asarray(lam, dtype=float))
    if kind == "file":
        _, rows = wio.read_table(open(rest, encoding="utf-8").read())
        tab = np.asarray(rows, dtype=float)
        lam, val = tab[:, 0], tab[:, 1]
        if np.any(np.diff(lam) <= 0):
            raise UsageError("transform table must have increasing lambda")
        return lambda l: np.interp(l, lam, val, right=0.0)
    raise UsageError(f"bad --fhat {args.fhat!r}; use heat:t or file:path.csv")


def cmd_invert(args, outs):
    p = Params(args.alpha)
    x = parse_grid(args.x_grid)
    if np.any(x <= 0):
        raise UsageError("inversion needs x > 0")
    vals = np.atleast_1d(inverse_transform(p, _fhat_from(args, p), x, _quad(args)))
    _emit(outs, args, wio.table_csv(["x", "value"], [x, vals]),
          {"alpha": args.alpha, "x": x.tolist(), "value": vals.tolist()},
          dict(_base_manifest(args, "invert"), fhat=args.fhat, x_grid=args.x_grid))
    return 0


def cmd_convolve(args, outs):
    p = Params(args.alpha)
    a, b = parse_measure(args.a), parse_measure(args.b)
    grid = parse_grid(args.out_grid, geometric=True) if args.out_grid else None
    res = convolve_measures(p, a, b, out_grid=grid)
    obj = wio.measure_to_json(res)
    text = wio.dumps(obj) if args.format == "json" or len(res.atoms) else wio.measure_to_csv(res)
    if args.out:
        outs.write(args.out, text)
    else:
        sys.stdout.write(text)
    _write_manifest(outs, args, dict(_base_manifest(args, "convolve"), a=args.a, b=args.b))
    return 0


def cmd_semigroup(args, outs):
    p = Params(args.alpha)
    psi = parse_exponent(p, args.exponent)
    grid = parse_grid(args.x_grid, geometric=True) if args.x_grid else None
    res = semigroup_density(p, psi, args.t, out_grid=grid, cfg=_quad(args))
    text = wio.dumps(wio.measure_to_json(res)) if args.format == "json" else wio.measure_to_csv(res)
    if args.out:
        outs.write(args.out, text)
    else:
        sys.stdout.write(text)
    _write_manifest(outs, args, dict(_base_manifest(args, "semigroup"), exponent=psi.to_json(), t=args.t))
    return 0


def _times(args):
    if args.times:
        try:
            return [float(v) for v in args.times.split(",")]
        except ValueError:
            raise UsageError("--times is a comma-separated list") from None
    if args.t is None:
        raise UsageError("give --t or --times")
    return list(np.linspace(0.0, args.t, args.steps + 1)[1:])


def cmd_simulate(args, outs):
    p = Params(args.alpha)
    psi = parse_exponent(p, args.exponent)
    times = _times(args)
    if psi.is_gaussian:
        scheme = args.scheme or "ExactExpFunctional"
        ens = simulate_diffusion(p, args.x0, times, args.paths, args.seed, scheme=scheme, b=psi.gaussian_coef)
    else:
        if args.scheme not in (None, "SemigroupChain"):
            raise UsageError("processes with jumps use the SemigroupChain scheme")
        ens = simulate_levy(p, psi, times, args.paths, args.seed, cfg=_quad(args), x0=args.x0)
    _emit_ensemble(outs, args, ens, "simulate")
    return 0


def cmd_walk(args, outs):
    p = Params(args.alpha)
    mu = parse_measure(args.step)
    ens = random_walk(p, mu, args.n, args.chains, args.seed)
    _emit_ensemble(outs, args, ens, "walk", step=wio.measure_to_json(mu))
    return 0


def _emit_ensemble(outs, args, ens, command, **extra):
    text = wio.ensemble_csv(ens)
    if args.out:
        outs.write(args.out, text)
    else:
        sys.stdout.write(text)
    _write_manifest(outs, args, wio.ensemble_manifest(ens, dict(command=command, version=__version__, **extra)))


def cmd_verify(args, outs):
    rep = run_suite(args.suite, alpha=args.alpha, n_paths=args.paths, seed=args.seed)
    text = wio.dumps(rep)
    if args.out:
        outs.write(args.out, text)
    else:
        sys.stdout.write(text)
    for c in rep["checks"]:
        if not c["pass"]:
            print(f"FAIL {c['name']}: {c['value']} (tol {c['tol']})", file=sys.stderr)
    return 0 if rep["pass"] else 1


def _quad(args):
    return QuadConfig(abs_tol=args.abs_tol, rel_tol=args.rel_tol)


# ------------------------------------------------------------------ parser

def build_parser():
    ap = argparse.ArgumentParser(prog="whitconv", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"whitconv {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, seed=False, seed_required=False):
        sp.add_argument("--alpha", type=float, default=0.0, help="alpha < 1/2 (default 0)")
        sp.add_argument("--out", help="output file (default stdout)")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
        sp.add_argument("--threads", type=int, help="cap on worker threads (env WHITCONV_THREADS)")
        sp.add_argument("--abs-tol", type=float, default=1e-13)
        sp.add_argument("--rel-tol", type=float, default=1e-11)
        if seed:
            sp.add_argument("--seed", type=int, required=seed_required)

    sp = sub.add_parser("eval", help="tabulate the kernel W_{alpha,nu}(x)")
    common(sp)
    sp.add_argument("--nu", required=True, help="real:v or imag:tau")
    sp.add_argument("--x-grid", required=True, help="lo:hi:n")
    sp.add_argument("--route", choices=("auto", "tricomi", "laplace"), default="auto")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("transform", help="forward transform of a bump or a measure")
    common(sp)
    sp.add_argument("--f", help="bump:center:half_width[:height]")
    sp.add_argument("--measure", help="dirac:x[:w] or file:path")
    sp.add_argument("--lambda-grid", required=True, help="lo:hi:n")
    sp.set_defaults(func=cmd_transform)

    sp = sub.add_parser("invert", help="inverse transform on an x grid")
    common(sp)
    sp.add_argument("--fhat", required=True, help="heat:t or file:table.csv (lambda, value)")
    sp.add_argument("--x-grid", required=True, help="lo:hi:n with lo > 0")
    sp.set_defaults(func=cmd_invert)

    sp = sub.add_parser("convolve", help="convolution of two measures")
    common(sp)
    sp.add_argument("--a", required=True, help="dirac:x[:w] or file:path")
    sp.add_argument("--b", required=True, help="dirac:x[:w] or file:path")
    sp.add_argument("--out-grid", help="lo:hi:n (geometric)")
    sp.set_defaults(func=cmd_convolve)

    sp = sub.add_parser("semigroup", help="density of mu_t for an exponent with a Gaussian part")
    common(sp)
    sp.add_argument("--exponent", required=True, help="gaussian:b, poisson:rate:x or file:path.json")
    sp.add_argument("--t", type=float, required=True)
    sp.add_argument("--x-grid", help="lo:hi:n (geometric)")
    sp.set_defaults(func=cmd_semigroup)

    sp = sub.add_parser("simulate", help="simulate a Levy process or the diffusion")
    common(sp, seed=True, seed_required=True)
    sp.add_argument("--exponent", required=True, help="gaussian:b, poisson:rate:x or file:path.json")
    sp.add_argument("--t", type=float, help="horizon, split into --steps equal steps")
    sp.add_argument("--steps", type=int, default=1)
    sp.add_argument("--times", help="comma-separated observation times (overrides --t)")
    sp.add_argument("--paths", type=int, default=1000)
    sp.add_argument("--x0", type=float, default=0.0)
    sp.add_argument("--scheme", choices=SCHEMES)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("walk", help="random walk S_n = S_{n-1} oplus X_n")
    common(sp, seed=True, seed_required=True)
    sp.add_argument("--step", required=True, help="dirac:x or file:path")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--chains", type=int, default=500)
    sp.set_defaults(func=cmd_walk)

    sp = sub.add_parser("verify", help="run a verification suite; exit 1 if any check fails")
    common(sp, seed=True)
    sp.add_argument("suite", choices=SUITES)
    sp.add_argument("--paths", type=int)
    sp.set_defaults(func=cmd_verify, seed=0)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if getattr(args, "paths", None) is not None and args.paths < 1:
            raise UsageError("--paths must be >= 1")
        Params(args.alpha)
        with _thread_limit(_threads(args)), wio.output_set() as outs:
            return args.func(args, outs)
    except DomainError as e:
        print(f"whitconv: error: {e}", file=sys.stderr)
        return 2
    except (NumericalError, WhitconvError) as e:
        print(f"whitconv: numerical failure: {type(e).__name__}: {e}", file=sys.stderr)
        return 3
    except (OSError, json.JSONDecodeError) as e:
        print(f"whitconv: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
