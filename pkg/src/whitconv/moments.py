"""Moment functions of the Whittaker convolution.

phi~_k solves L phi~_k = -k(1-2a) phi~_{k-1} - k(k-1) phi~_{k-2} with
phi~_k(0) = 0, where a = alpha. All of them come out of one operator,

    D[g](x) = int_0^x (y^2 m(y))^{-1} int_0^y m(xi) g(xi) dxi dy,

for which L D[g] = -g/4. With w = 1/(2 xi^2) the inner integral becomes

    J[g](y) = (2 w_y)^{3/2 - 2a} int_0^inf e^{-u} (2(w_y + u))^{2a - 2} g(xi(w_y + u)) du,

a well-behaved Laplace-type integral for every y > 0.
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from ._quad import PanelPoly, gauss_legendre, panel_rule
from .errors import CalibrationError, CostCapError, DivergenceError, DomainError, QuadratureError
from .specfun import (DEFAULT_QUAD, Order, Params, _cutoff_real, _eta_real, _trapezoid_converged, bW,
                      scaled_upper_gamma)
from .spectral import DiscreteMeasure, GridDensity

K_MAX = 4
_Y_MIN = 1e-5  # below this the leading Taylor term is exact to ~1e-20
_PANEL = 0.25  # panel width in log y
_U_TAIL = 50.0  # e^{-50} ~ 2e-22


# ------------------------------------------------------------------ engine

def _inner(p, g, y):
    """J[g](y) for a single y."""
    w = 0.5 / (y * y)
    c0 = (1.5 - 2.0 * p.alpha) * math.log(2.0 * w)
    e = 2.0 * p.alpha - 2.0
    u_far, wt_far = panel_rule(np.linspace(1.0 if w < 1.0 else 0.0, _U_TAIL, 11))
    s_far = w + u_far
    vals = wt_far * np.exp(c0 + e * np.log(2.0 * s_far) - u_far)
    total = vals @ g(1.0 / np.sqrt(2.0 * s_far))
    if w < 1.0:
        # near part u in [0, 1] in v = log(w + u); the integrand varies on the scale of w
        lo, hi = math.log(w), math.log(w + 1.0)
        npan = max(2, int(math.ceil((hi - lo) / 0.5)))
        v, wt = panel_rule(np.linspace(lo, hi, npan + 1))
        s = np.exp(v)
        k = wt * np.exp(c0 + e * np.log(2.0 * s) + (w - s) + v)
        total += k @ g(1.0 / np.sqrt(2.0 * s))
    return float(total)


class _Profile:
    """D[g] and its derivative J[g] on [0, y_max], tabulated on Gauss panels in log y."""

    def __init__(self, p, g, g0, y_max):
        self.g0 = float(g0)
        self.y_max = float(y_max)
        lo, hi = math.log(_Y_MIN), math.log(y_max)
        npan = int(math.ceil((hi - lo) / _PANEL))
        edges = np.linspace(lo, hi, npan + 1)
        g16, _ = gauss_legendre(16)
        a, b = edges[:-1, None], edges[1:, None]
        u = 0.5 * (b - a) * g16 + 0.5 * (a + b)
        y = np.exp(u)
        J = np.array([_inner(p, g, yi) for yi in y.ravel()]).reshape(y.shape)
        if not np.all(np.isfinite(J)):
            raise QuadratureError("moment profile produced non-finite values")
        self.J = PanelPoly(edges, J)
        self.D = PanelPoly(edges, J * y)
        self.D0 = 0.5 * self.g0 * _Y_MIN ** 2

    def _check(self, x):
        if np.any(x < 0):
            raise DomainError("moment functions need x >= 0")
        if np.any(x > self.y_max * (1 + 1e-12)):
            raise DomainError(f"x beyond the tabulated range (max {self.y_max:g})")

    def value(self, x):
        x = np.asarray(x, dtype=float)
        self._check(x)
        small = x < _Y_MIN
        with np.errstate(divide="ignore"):
            big = self.D0 + self.D.integral(np.log(np.maximum(x, _Y_MIN)))
        return np.where(small, 0.5 * self.g0 * x * x, big)

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        self._check(x)
        small = x < _Y_MIN
        big = self.J.value(np.log(np.maximum(x, _Y_MIN)))
        return np.where(small, self.g0 * x, big)


def _range_for(x_max):
    """Tabulation limit: a power of ten at or above x_max (at least 1e3)."""
    e = max(3, int(math.ceil(math.log10(max(x_max, 1.0)) - 1e-12)))
    if e > 12:
        raise CostCapError("moment functions are tabulated up to x = 1e12")
    return 10.0 ** e


@lru_cache(maxsize=64)
def _tilde_profile(alpha, k, y_max):
    """Profile P with phi~_k = 4k P.value, memoised per (alpha, k, range)."""
    p = Params(alpha)
    c = 1.0 - 2.0 * alpha
    if k == 1:
        return _Profile(p, lambda xi: np.full_like(xi, c), c, y_max)
    prev = _tilde_profile(alpha, k - 1, y_max)
    prev2 = _tilde_profile(alpha, k - 2, y_max) if k > 2 else None

    def g(xi):
        out = c * 4 * (k - 1) * prev.value(xi)
        if k == 2:
            return out + 1.0
        return out + (k - 1) * 4 * (k - 2) * prev2.value(xi)

    return _Profile(p, g, 1.0 if k == 2 else 0.0, y_max)


def _check_k(k):
    if int(k) != k or k < 0:
        raise DomainError("k must be a non-negative integer")
    if k > K_MAX:
        raise CostCapError(f"moment functions are limited to k <= {K_MAX}")
    return int(k)


def phi_tilde(p, k, x, cfg=DEFAULT_QUAD):
    """phi~_k(x) by the nested-integral recursion (x scalar or array)."""
    k = _check_k(k)
    xa = np.asarray(x, dtype=float)
    if np.any(~(xa >= 0)):
        raise DomainError("phi_tilde requires x >= 0")
    if k == 0:
        out = np.ones_like(xa)
    else:
        prof = _tilde_profile(float(p.alpha), k, _range_for(float(np.max(xa, initial=0.0))))
        out = 4.0 * k * prof.value(xa)
    return float(out) if out.ndim == 0 else out


def phi_tilde_dx(p, k, x):
    """d/dx phi~_k(x)."""
    k = _check_k(k)
    xa = np.asarray(x, dtype=float)
    if k == 0:
        out = np.zeros_like(xa)
    else:
        prof = _tilde_profile(float(p.alpha), k, _range_for(float(np.max(xa, initial=0.0))))
        out = 4.0 * k * prof.deriv(xa)
    return float(out) if out.ndim == 0 else out


def phi_tilde1_closed(p, x):
    """phi~_1 from the single integral (1-2a) int_{1/(2x^2)}^inf v^{-2a} e^v Gamma(2a-1, v) dv."""
    x = float(x)
    if not x > 0:
        raise DomainError("phi_tilde1_closed requires x > 0")
    al = p.alpha
    w0 = 0.5 / (x * x)
    b = 2.0 * al - 1.0

    def f(v):
        return v ** (-2.0 * al) * scaled_upper_gamma(b, v)

    pieces = [w0]
    if w0 < 1.0:
        pieces.append(1.0)
    total, err = 0.0, 0.0
    for lo, hi in zip(pieces, pieces[1:] + [np.inf]):
        val, e = integrate.quad(f, lo, hi, epsabs=0.0, epsrel=1e-12, limit=200)
        total += val
        err += e
    if err > 1e-9 * abs(total):
        raise QuadratureError(f"closed-form phi~_1 quadrature did not converge at x={x}")
    return (1.0 - 2.0 * al) * total


def laplace_moment_rep(p, k, x):
    """int s^k e^{(1/2 - a) s} eta_x(s) ds over the real line, by the trapezoid rule."""
    k = _check_k(k)
    x = float(x)
    if x == 0.0:
        return 1.0 if k == 0 else 0.0
    a = p.a
    S = _cutoff_real(p, x, a) + 2.0 * k
    h0 = min(0.25, 0.5 * x)
    # fold the negative half-line: s^k (e^{as} + (-1)^k e^{-as})
    if k % 2:
        f = lambda s: 2.0 * s ** k * np.sinh(a * s) * _eta_real(p, x, s)
    else:
        f = lambda s: 2.0 * s ** k * np.cosh(a * s) * _eta_real(p, x, s)
    val, _ = _trapezoid_converged(f, h0, S)
    return float(val)


def laplace_moment_rep_check(p, k, x, tol=1e-6):
    """Recursion against the Laplace-density representation at one point."""
    lap = laplace_moment_rep(p, k, x)
    rec = phi_tilde(p, k, x)
    gap = abs(lap - rec) / max(abs(rec), 1e-300)
    return {"k": int(k), "x": float(x), "laplace": lap, "recursive": rec, "gap": gap, "tol": tol,
            "pass": gap <= tol}


# ------------------------------------------------------------------ tables

@dataclass(frozen=True)
class MomentTable:
    k_max: int
    grid: np.ndarray
    values: np.ndarray  # row j holds phi~_j, row 0 is identically 1

    def __post_init__(self):
        if self.values.shape != (self.k_max + 1, self.grid.size):
            raise DomainError("values must have shape (k_max + 1, len(grid))")

    @classmethod
    def build(cls, p, k_max, grid):
        grid = np.asarray(grid, dtype=float)
        if np.any(~(grid > 0)) or np.any(np.diff(grid) <= 0):
            raise DomainError("grid must be increasing and positive")
        rows = [np.ones_like(grid)] + [phi_tilde(p, k, grid) for k in range(1, _check_k(k_max) + 1)]
        return cls(int(k_max), grid, np.vstack(rows))

    def to_csv(self):
        from .io import table_csv
        header = ["x"] + [f"phi_tilde_{k}" for k in range(1, self.k_max + 1)]
        return table_csv(header, [self.grid] + list(self.values[1:]))


# ---------------------------------------------------------------- operator

def apply_L(p, f, x, h=None):
    """L f(x) = -1/4 (x^2 f'' + (1/x + (3 - 4a) x) f') by Richardson-extrapolated central differences."""
    x = float(x)
    if not x > 0:
        raise DomainError("apply_L requires x > 0")
    if h is None:
        h = 0.01 * x
    if not 0 < h <= x / 10:
        raise DomainError(f"finite-difference step h={h:g} must lie in (0, x/10]")

    def diffs(hh):
        fm, f0, fp = (float(f(x - hh)), float(f(x)), float(f(x + hh)))
        return (fp - fm) / (2 * hh), (fp - 2 * f0 + fm) / (hh * hh)

    d1a, d2a = diffs(h)
    d1b, d2b = diffs(h / 2)
    d1 = (4 * d1b - d1a) / 3
    d2 = (4 * d2b - d2a) / 3
    drift = 1.0 / x + (3.0 - 4.0 * p.alpha) * x
    return -0.25 * (x * x * d2 + drift * d1)


# -------------------------------------------------------- normalized pair

@dataclass(frozen=True)
class NormalizedPair:
    """phi_1 and phi_2 with L phi_1 = -1 and L phi_2 = -2 phi_1.

    phi_1 = c D[1] and phi_2 = 2c D[phi_1]; c is fixed by calibration and
    both candidate constants are kept for the record.
    """

    p: Params
    normalization_factor: float
    candidates: dict = field(default_factory=dict)
    calibration: dict = field(default_factory=dict)
    lambda1: float = -1.0
    lambda2: float = 0.0

    @property
    def _scale(self):
        return 1.0 - 2.0 * self.p.alpha

    def _ratio(self):
        # phi_1 = c D[1] and phi~_1 = 4 (1-2a) D[1]
        return self.normalization_factor / (4.0 * self._scale)

    def phi1(self, x):
        return self._ratio() * phi_tilde(self.p, 1, x)

    def dphi1(self, x):
        return self._ratio() * phi_tilde_dx(self.p, 1, x)

    def phi2(self, x):
        # phi~_2 = 8 D[(1-2a) phi~_1 + 1]; D is linear, so phi_2 is a combination
        c, s = self.normalization_factor, self._scale
        D_phi_tilde1 = (phi_tilde(self.p, 2, x) - 2.0 * phi_tilde(self.p, 1, x) / s) / (8.0 * s)
        return 2.0 * c * (c / (4.0 * s)) * D_phi_tilde1


_PROBES = (0.3, 1.0, 3.0)


def normalized_pair(p, probes=_PROBES, tol=1e-3):
    """Calibrate c so that L phi_1 = -1, choosing between the bare constant 1 and 4."""
    s = 1.0 - 2.0 * p.alpha
    bare = lambda x: phi_tilde(p, 1, x) / (4.0 * s)
    Lvals = np.array([apply_L(p, bare, x) for x in probes])
    if np.any(Lvals >= 0):
        raise CalibrationError("L of the bare double integral is not negative")
    cs = -1.0 / Lvals
    c_num = float(np.mean(cs))
    if np.max(np.abs(cs - c_num)) > tol * abs(c_num):
        raise CalibrationError(f"no single constant gives L phi_1 = -1 at all probes: {cs}")
    candidates = {"bare_integral": 1.0, "quarter_corrected": 4.0}
    chosen = min(candidates.values(), key=lambda c: abs(c - c_num))
    if abs(chosen - c_num) > tol * chosen:
        raise CalibrationError(f"calibrated constant {c_num:.6g} matches neither candidate")
    calib = {"probes": list(map(float, probes)), "L_bare": Lvals.tolist(), "c_numeric": c_num}
    return NormalizedPair(p, chosen, candidates, calib)


# ------------------------------------------------------- modified moments

def _sigma_function(p, mu):
    """sigma -> int W_{alpha, sigma} d mu for sigma in [0, a]."""
    a = p.a
    if isinstance(mu, tuple) and len(mu) == 2 and hasattr(mu[0], "gaussian_coef"):
        psi, t = mu
        return lambda sig: math.exp(-t * float(psi(a * a - sig * sig)))
    if isinstance(mu, GridDensity):
        mu = mu.as_discrete(p)
    if not isinstance(mu, DiscreteMeasure):
        raise DomainError("mu must be a DiscreteMeasure, GridDensity or (ExponentFn, t)")
    locs, wts = mu.locations, mu.weights
    return lambda sig: float(wts @ np.asarray(bW(p, Order.real(sig), locs), dtype=float)) if len(mu) else 0.0


def modified_moment(p, mu, k, h0=None, levels=6, tol=1e-6):
    """d^k/dsigma^k int W_{alpha, sigma} d mu at sigma = 1/2 - alpha, k in {1, 2}.

    One-sided differences into the strip, Richardson-extrapolated. ``mu`` is a
    discrete measure, a grid density or a pair (exponent, t) for mu_t.
    """
    if k not in (1, 2):
        raise DomainError("modified_moment supports k = 1, 2")
    a = p.a
    if h0 is None:
        h0 = 1e-2 * a
    F = _sigma_function(p, mu)
    Fa = F(a)
    T = []
    for i in range(levels):
        h = h0 / 2 ** i
        if k == 1:
            d = (Fa - F(a - h)) / h
        else:
            d = (Fa - 2.0 * F(a - h) + F(a - 2.0 * h)) / (h * h)
        row = [d]
        for j in range(1, i + 1):
            row.append((2 ** j * row[j - 1] - T[i - 1][j - 1]) / (2 ** j - 1))
        T.append(row)
        if i >= 2:
            cur, prev = T[i][i], T[i - 1][i - 1]
            if abs(cur - prev) <= tol * max(1.0, abs(cur)):
                return float(cur)
    raise DivergenceError("Richardson table for the sigma-derivative did not stabilise")


def modified_moment_check(p, mu, k, tol=1e-4):
    """For a discrete mu, compare the sigma-derivative with sum w_i phi~_k(x_i)."""
    got = modified_moment(p, mu, k)
    direct = float(mu.weights @ np.atleast_1d(phi_tilde(p, k, mu.locations))) if len(mu) else 0.0
    gap = abs(got - direct)
    return {"k": int(k), "derivative": got, "direct": direct, "gap": gap,
            "pass": gap <= tol * max(1.0, abs(direct))}


# ------------------------------------------------------------------ growth

def growth_check(p, k, x_grid=None, eps=0.2):
    """Least-squares slope of log phi~_k against log x.

    The slope of a power of a logarithm decays only like k / log x, so the
    report also gives the slope on the upper half of the grid.
    """
    if x_grid is None:
        x_grid = np.geomspace(10.0, 1e3, 21)
    x = np.asarray(x_grid, dtype=float)
    if x.size < 3 or np.any(x <= 0):
        raise DomainError("x_grid needs at least three positive points")
    y = np.log(phi_tilde(p, k, x))
    lx = np.log(x)
    slope = float(np.polyfit(lx, y, 1)[0])
    half = x.size // 2
    upper = float(np.polyfit(lx[half:], y[half:], 1)[0])
    return {"k": int(k), "range": [float(x[0]), float(x[-1])], "slope": slope, "upper_half_slope": upper,
            "eps": eps, "flattening": upper < slope, "pass": slope <= eps}
