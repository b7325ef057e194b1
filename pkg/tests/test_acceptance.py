"""Acceptance criteria 1-13, one printed PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -s`` or directly with
``python3 tests/test_acceptance.py``. Seeds are fixed; nothing is retried.
"""

import math
import sys
import time
import warnings

import numpy as np
import pytest
from scipy import special

from whitconv import BumpFunction, Params, build_exponent, gaussian_criterion, inverse_transform, kernel_mass
from whitconv import moments as mom
from whitconv.convolve import product_formula_rhs
from whitconv.spectral import DiscreteMeasure, forward_transform, kernel_matrix, plancherel_pair
from whitconv.verify import (compound_poisson_report, diffusion_martingale, log_grid_pairs, moment_martingales,
                             oplus_ks, quadratic_variation, route_agreement, semigroup_closure, taylor_ratios)

ALPHAS = (-0.5, 0.0, 0.25)
SEED = 0


def _result(value, tol, ok=None, note=""):
    ok = bool(value <= tol) if ok is None else bool(ok)
    return {"value": float(value), "tol": tol, "ok": ok, "note": note}


def crit_kernel_mass():
    X, Y = log_grid_pairs(0.2, 5.0, 5)
    err = max(float(np.max(np.abs(np.asarray(kernel_mass(Params(a), X, Y)) - 1))) for a in ALPHAS)
    return _result(err, 1e-6, note="max |mass - 1| over 3 alphas x 25 pairs")


def crit_product_formula():
    X, Y = log_grid_pairs(0.2, 5.0, 5)
    err = 0.0
    for al in ALPHAS:
        p = Params(al)
        lams = [0.0, p.a ** 2 + 0.5, 2.0]
        for x, y in zip(X, Y):
            lhs = kernel_matrix(p, [x], lams)[0] * kernel_matrix(p, [y], lams)[0]
            err = max(err, float(np.max(np.abs(product_formula_rhs(p, lams, x, y) - lhs))))
    return _result(err, 1e-6, note="max abs error over 3 alphas x 25 pairs x 3 lambdas")


def crit_routes():
    xs = np.geomspace(0.05, 20.0, 15)
    taus = np.linspace(0.0, 10.0, 11)[1:]
    err = 0.0
    for al in ALPHAS:
        p = Params(al)
        err = max(err, route_agreement(p, xs, list(np.linspace(0.0, p.a, 5)), list(taus)))
    return _result(err, 1e-8, note="relative; imaginary orders against the kernel envelope")


def crit_inversion():
    bumps = [BumpFunction(1.0, 0.5), BumpFunction(2.5, 1.2, height=0.7)]
    worst = 0.0
    for al in (0.0, 0.25):
        p = Params(al)
        for f in bumps:
            lo, hi = f.support
            x = np.linspace(lo * 1.05, hi / 1.05, 41)
            back = inverse_transform(p, lambda lam, f=f: forward_transform(p, f, lam), x)
            worst = max(worst, float(np.max(np.abs(back - f(x)))))
    p = Params(0.25)
    a, b = plancherel_pair(p, bumps[0])
    planch = abs(a - b) / abs(a)
    ok = worst <= 1e-3 and planch <= 1e-3
    return _result(worst, 1e-3, ok, note=f"roundtrip sup-err at alpha 0, 0.25; Plancherel rel err {planch:.2e} "
                                         "(alpha=0.25 only)")


def crit_closure():
    return _result(semigroup_closure(Params(0.0), 0.3, 0.4), 1e-2, note="L1(m) distance")


def crit_spectral_martingale():
    rows = diffusion_martingale(Params(0.0), 10_000, SEED)
    z = max(abs(r["z"]) for r in rows)
    return _result(z, 3.0, all(r["pass"] for r in rows), note=f"max |z| over {len(rows)} (lambda, t) points")


def crit_moment_martingales():
    m1, m2 = moment_martingales(Params(0.0), 10_000, SEED)
    z = max(abs(r["estimate"]) / r["se"] for m in (m1, m2) for r in m["rows"])
    return _result(z, 3.0, m1["pass"] and m2["pass"], note="max |z| for phi1 - t and phi2 - 2t phi1 + t^2")


def crit_quadratic_variation():
    rep = quadratic_variation(Params(0.0), 2000, SEED)
    return _result(rep["gap"], 0.05, note=f"t=1, mean realised {rep['mean_realised']:.4f} vs "
                                          f"integral {rep['mean_integral']:.4f}")


def crit_phi1_closed_form():
    p = Params(0.0)
    xs = np.geomspace(0.1, 10.0, 41)
    w = 0.5 / xs ** 2
    ref = np.exp(w) * special.exp1(w)
    return _result(float(np.max(np.abs(mom.phi_tilde(p, 1, xs) / ref - 1))), 1e-6, note="relative")


def crit_taylor():
    worst = max(abs(r - 1) for al in ALPHAS for r in taylor_ratios(Params(al), 0.02).values())
    return _result(worst, 0.02, note="max |ratio - 1| at x=0.02 over 3 alphas")


def crit_oplus_ks():
    D, crit = oplus_ks(Params(0.0), 1.0, 1.0, 10_000, SEED)
    return _result(D, crit, note="KS statistic vs 1% critical value")


def crit_compound_poisson():
    series, div = 0.0, 0.0
    for al in ALPHAS:
        s, d = compound_poisson_report(Params(al), a=2.0, K=40, n_max=10)
        series, div = max(series, s), max(div, d)
    # "exact" is read as agreement to a few ulps of the transform values
    return _result(series, 1e-10, series <= 1e-10 and div <= 1e-13,
                   note=f"series gap; divisibility gap {div:.1e} for n <= 10")


def crit_gaussian_criterion():
    p = Params(0.0)
    ts = [0.1, 0.01, 0.001]
    g = gaussian_criterion(p, build_exponent(p, 1.0), 0.5, ts)
    vals = [r["value"] for r in g["rows"]]
    cp = gaussian_criterion(p, build_exponent(p, 0.0, DiscreteMeasure.dirac(1.0, 2.0)), 0.5, ts)
    cvals = [r["value"] for r in cp["rows"]]
    ok = g["decreasing"] and vals[-1] < 1e-3 and cp["bounded_away"]
    return _result(vals[-1], 1e-3, ok, note="gaussian " + ", ".join(f"{v:.2e}" for v in vals)
                   + "; compound Poisson " + ", ".join(f"{v:.3f}" for v in cvals))


CRITERIA = [
    (1, "kernel mass", crit_kernel_mass, 120),
    (2, "product formula", crit_product_formula, 180),
    (3, "Tricomi vs Laplace routes", crit_routes, None),
    (4, "transform inversion and Plancherel", crit_inversion, None),
    (5, "semigroup closure", crit_closure, None),
    (6, "diffusion spectral martingale", crit_spectral_martingale, 180),
    (7, "moment martingales", crit_moment_martingales, None),
    (8, "quadratic variation", crit_quadratic_variation, None),
    (9, "phi1 closed form at alpha=0", crit_phi1_closed_form, None),
    (10, "Taylor coefficients", crit_taylor, None),
    (11, "oplus sampler KS", crit_oplus_ks, None),
    (12, "compound Poisson", crit_compound_poisson, None),
    (13, "Gaussian criterion", crit_gaussian_criterion, None),
]


def evaluate(num, name, fn, budget):
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = fn()
    secs = time.perf_counter() - t0
    ok = res["ok"] and (budget is None or secs <= budget)
    limit = f", budget {budget}s" if budget else ""
    line = (f"criterion {num:2d} {'PASS' if ok else 'FAIL'}  {name}: value={res['value']:.3e} tol={res['tol']:.3g}"
            f"  [{res['note']}] ({secs:.1f}s{limit})")
    return ok, line


@pytest.mark.parametrize("num,name,fn,budget", CRITERIA, ids=[f"c{c[0]:02d}" for c in CRITERIA])
def test_criterion(num, name, fn, budget, capsys):
    ok, line = evaluate(num, name, fn, budget)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


if __name__ == "__main__":
    failed = 0
    for c in CRITERIA:
        ok, line = evaluate(*c)
        print(line, flush=True)
        failed += not ok
    sys.exit(1 if failed else 0)
