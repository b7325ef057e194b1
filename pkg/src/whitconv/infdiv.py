"""Infinitely divisible laws for the Whittaker convolution.

Exponents are psi(lambda) = b lambda + sum_i w_i (1 - W_{Delta_lambda}(x_i))
with a finite discrete Levy measure. Semigroups mu_t have transform
exp(-t psi) and, when b > 0, a density obtained by spectral inversion.
"""

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import stats

from ._kolmogorov import backward_value
from ._quad import gauss_legendre
from .convolve import convolve_measures
from .errors import DomainError, TailEstimateError
from .specfun import DEFAULT_QUAD, Params
from .spectral import (DiscreteMeasure, GridDensity, forward_transform, inverse_transform,
                       kernel_matrix, m_weight, transform_of_measure)


@dataclass(frozen=True, eq=False)
class ExponentFn:
    """A *-exponent with Gaussian coefficient b and a finite Levy measure."""

    p: Params
    gaussian_coef: float = 0.0
    levy_measure: DiscreteMeasure = field(default_factory=DiscreteMeasure.empty)

    def __post_init__(self):
        if not self.gaussian_coef >= 0:
            raise DomainError("gaussian_coef must be >= 0")
        if np.any(self.levy_measure.locations <= 0) and len(self.levy_measure):
            raise DomainError("the Levy measure lives on (0, inf)")

    def __call__(self, lam):
        lam_a = np.atleast_1d(np.asarray(lam, dtype=float))
        out = self.gaussian_coef * lam_a
        if len(self.levy_measure):
            K = kernel_matrix(self.p, self.levy_measure.locations, lam_a)
            out = out + self.levy_measure.weights @ (1.0 - K)
        out = np.where(lam_a == 0, 0.0, out)
        return float(out[0]) if np.ndim(lam) == 0 else out

    @property
    def is_gaussian(self):
        return len(self.levy_measure) == 0

    @property
    def jump_rate(self):
        return self.levy_measure.mass

    @cached_property
    def growth_constant(self):
        """C with psi(lambda) <= C (1 + lambda), fitted on [0, 50] and then frozen."""
        lams = np.linspace(0.0, 50.0, 201)
        return float(np.max(self(lams) / (1.0 + lams)))

    def to_json(self):
        return {"gaussian_coef": self.gaussian_coef,
                "levy": [{"x": float(x), "w": float(w)}
                         for x, w in zip(self.levy_measure.locations, self.levy_measure.weights)]}

    @classmethod
    def from_json(cls, p, obj):
        if isinstance(obj, str):
            obj = json.loads(obj)
        levy = obj.get("levy", [])
        lm = DiscreteMeasure([a["x"] for a in levy], [a["w"] for a in levy]) if levy else DiscreteMeasure.empty()
        return cls(p, float(obj.get("gaussian_coef", 0.0)), lm)


def build_exponent(p, gaussian_coef=0.0, levy=None):
    """psi(lambda) = gaussian_coef * lambda + int (1 - W_{Delta_lambda}(x)) levy(dx)."""
    if levy is None:
        levy = DiscreteMeasure.empty()
    return ExponentFn(p, float(gaussian_coef), levy)


# ------------------------------------------------------- compound Poisson

def compound_poisson_transform(p, a, mu, lam):
    """Transform of the *-compound Poisson measure e(a mu): exp(a (mu^ - 1))."""
    if a <= 0:
        raise DomainError("rate a must be > 0")
    m = transform_of_measure(p, mu, lam)
    return np.exp(a * (m - 1.0))


def compound_poisson_series(p, a, mu, lam, K=40):
    """Truncated series sum_{k<=K} e^{-a} a^k/k! mu^(lambda)^k."""
    m = np.asarray(transform_of_measure(p, mu, lam), dtype=float)
    k = np.arange(K + 1)
    logc = -a + k * math.log(a) - np.array([math.lgamma(j + 1) for j in k])
    return np.sum(np.exp(logc)[:, None] * m.reshape(1, -1) ** k[:, None], axis=0).reshape(m.shape)


def compound_poisson_divisibility(p, a, mu, lam, n_max=10):
    """max over n <= n_max of |e(a mu)^ - (e((a/n) mu)^)^n| at the given lambdas."""
    full = compound_poisson_transform(p, a, mu, lam)
    gaps = []
    for n in range(1, n_max + 1):
        part = compound_poisson_transform(p, a / n, mu, lam) ** n
        gaps.append(float(np.max(np.abs(full - part))))
    return gaps


# ------------------------------------------------------------ semigroups

def _expected_z(p, s):
    """E[Y_s^2] for the diffusion started at 0 (first moment of the Z equation)."""
    c = 2.0 * (1.0 - p.alpha)
    return math.expm1(c * s) / (2.0 * c)


def default_semigroup_grid(p, psi, t, n=300):
    s = psi.gaussian_coef * t
    ez = max(_expected_z(p, s), 1e-4)
    lo = min(0.05, 0.2 * math.sqrt(ez))
    hi = math.sqrt(ez) * math.exp(4.0 * math.sqrt(2.0 * s) + 2.0) + 1.0
    return np.geomspace(lo, hi, n)


def semigroup_density(p, psi, t, out_grid=None, cfg=DEFAULT_QUAD, min_mass=1 - 1e-3):
    """mu_t (transform exp(-t psi)) as a density against m on out_grid.

    Needs a Gaussian part: otherwise exp(-t psi) does not decay and mu_t has
    an atom at 0 of weight >= exp(-t * levy mass), which no density can carry.
    """
    if t <= 0:
        raise DomainError("t must be > 0")
    if psi.gaussian_coef == 0:
        atom = math.exp(-t * psi.jump_rate)
        raise TailEstimateError(
            f"exp(-t psi) does not decay without a Gaussian part; mu_t has an atom at 0 of weight >= {atom:.6g}")
    grid = default_semigroup_grid(p, psi, t) if out_grid is None else np.asarray(out_grid, dtype=float)
    vals = inverse_transform(p, lambda lam: np.exp(-t * psi(lam)), grid, cfg)
    vals = np.clip(np.atleast_1d(vals), 0.0, None)
    gd = GridDensity(grid, vals)
    mass = gd.density_mass(p)
    if out_grid is None and abs(mass - 1.0) > 1 - min_mass:
        from .errors import CoverageError
        raise CoverageError(f"semigroup density carries mass {mass:.6f} on the default grid")
    return gd


def l1_distance(p, a, b, grid=None):
    """int |f_a - f_b| m dx for two GridDensity objects (interpolated in log x)."""
    if grid is None:
        lo = max(a.grid[0], b.grid[0])
        hi = min(a.grid[-1], b.grid[-1])
        grid = np.geomspace(lo, hi, 2000)
    fa = np.interp(np.log(grid), np.log(a.grid), a.values)
    fb = np.interp(np.log(grid), np.log(b.grid), b.values)
    from .spectral import log_trapezoid_weights
    w = log_trapezoid_weights(grid) * m_weight(p, grid)
    # mass outside the common grid counts fully
    outside = abs(a.mass(p) - float(np.sum(fa * w))) + abs(b.mass(p) - float(np.sum(fb * w)))
    return float(np.sum(np.abs(fa - fb) * w)) + outside


# ------------------------------------------------------ Gaussian criterion

def _log_panels(lo, hi, panels=40):
    g0, w0 = gauss_legendre(16)
    e = np.linspace(math.log(lo), math.log(hi), panels + 1)
    a, b = e[:-1, None], e[1:, None]
    u = (0.5 * (b - a) * g0 + 0.5 * (a + b)).ravel()
    w = (0.5 * (b - a) * w0).ravel()
    x = np.exp(u)
    return x, w * x


def diffusion_tail_spectral(p, b, t, eps, cfg=DEFAULT_QUAD):
    """mu_t[eps, inf) for psi = b lambda, integrating the inverted density."""
    psi = build_exponent(p, b)
    s = b * t
    hi = math.sqrt(max(_expected_z(p, s), 1e-4)) * math.exp(5.0 * math.sqrt(2.0 * s) + 2.0) + 2 * eps
    x, w = _log_panels(eps, hi)
    f = inverse_transform(p, lambda lam: np.exp(-t * psi(lam)), x, cfg)
    return float(np.sum(f * m_weight(p, x) * w))


def diffusion_tail_pde(p, b, t, eps):
    """mu_t[eps, inf) = P_0(Y_{bt} >= eps) from the backward equation in z = y^2."""
    z_star = eps * eps
    g = lambda z: (z >= z_star).astype(float)
    zmax = max(400.0, 100.0 * z_star)
    return float(max(backward_value(p, g, t, 0.0, b=b, zmax=zmax, n=4000, steps=800), 0.0))


def _cp_tail_terms(p, nu1, eps, k_max=3):
    """nu1^{*k}[eps, inf) for k = 1..k_max (nu1 a probability measure)."""
    out = []
    cur = nu1
    for k in range(1, k_max + 1):
        if k > 1:
            cur = convolve_measures(p, cur, nu1)
        if isinstance(cur, GridDensity):
            below = float(cur.cdf(p, np.nextafter(eps, 0)))
            out.append(max(cur.mass(p) - below, 0.0))
        else:
            out.append(float(cur.weights[cur.locations >= eps].sum()))
    return out


def gaussian_criterion(p, psi, eps, t_seq, spectral_min_t=0.05, cfg=DEFAULT_QUAD):
    """Report (1/t) mu_t[eps, inf) along t_seq.

    Pure Gaussian exponents use the spectral density when b t >= spectral_min_t
    and the backward equation below that. Pure compound Poisson exponents use
    the series e^{-at} sum (at)^k/k! nu1^{*k}[eps, inf) with k <= 3 evaluated
    and the remaining Poisson tail reported as an upper bound.
    """
    t_seq = [float(t) for t in t_seq]
    if any(t <= 0 for t in t_seq):
        raise DomainError("times must be > 0")
    rows = []
    if psi.is_gaussian:
        b = psi.gaussian_coef
        for t in t_seq:
            if b == 0:
                tail, route = 0.0, "trivial"
            elif b * t >= spectral_min_t:
                tail, route = diffusion_tail_spectral(p, b, t, eps, cfg), "spectral"
            else:
                tail, route = diffusion_tail_pde(p, b, t, eps), "backward-equation"
            rows.append({"t": t, "value": tail / t, "upper": tail / t, "route": route})
        vals = [r["value"] for r in rows]
        order = np.argsort(t_seq)[::-1]
        seq = [vals[i] for i in order]
        decreasing = all(seq[i + 1] <= seq[i] for i in range(len(seq) - 1))
        return {"kind": "gaussian", "eps": eps, "rows": rows, "decreasing": decreasing,
                "limit_estimate": seq[-1], "gaussian": decreasing and seq[-1] < 1e-3}
    if psi.gaussian_coef != 0:
        raise DomainError("the criterion report handles pure Gaussian or pure compound Poisson exponents")
    a = psi.jump_rate
    nu1 = DiscreteMeasure(psi.levy_measure.locations, psi.levy_measure.weights / a)
    terms = _cp_tail_terms(p, nu1, eps)
    for t in t_seq:
        at = a * t
        pk = [stats.poisson.pmf(k, at) for k in range(1, len(terms) + 1)]
        val = float(np.dot(pk, terms))
        rest = float(stats.poisson.sf(len(terms), at))
        rows.append({"t": t, "value": val / t, "upper": (val + rest) / t, "route": "series"})
    limit = a * terms[0]
    smallest = min(r["value"] for r in rows)
    return {"kind": "compound_poisson", "eps": eps, "rows": rows, "limit_estimate": limit,
            "bounded_away": smallest >= 0.5 * limit > 0, "gaussian": False}


# ------------------------------------------------------- L2 semigroup action

def _transform_on_line(p, values_fn, x, w, lams):
    """int v(x) W_{Delta_lambda}(x) m(x) dx with a fixed node set."""
    v = values_fn(x) * m_weight(p, x) * w
    keep = np.abs(v) > 0
    return v[keep] @ kernel_matrix(p, x[keep], lams)


def semigroup_action(p, psi, t, f, x):
    """(T_t f)(x) = E_x f(Y_{bt}) for a Gaussian exponent, via the backward equation."""
    if not psi.is_gaussian:
        raise DomainError("x-space semigroup action is implemented for Gaussian exponents")
    x = np.asarray(x, dtype=float)
    if t == 0:
        return np.asarray(f(x), dtype=float)
    hi = f.support[1]
    zmax = (hi * _spread(psi.gaussian_coef * t) ** 2) ** 2
    g = lambda z: f(np.sqrt(z))
    # relative grid spacing near z ~ 1 is about stretch / n
    stretch = math.log(zmax / 0.01)
    return backward_value(p, g, t, x * x, b=psi.gaussian_coef, zmax=zmax, n=3000, steps=600, stretch=stretch)


def _spread(s):
    """Factor covering ~8 standard deviations of log Y over diffusion time s."""
    return math.exp(8.0 * math.sqrt(0.5 * s) + s)


def l2_semigroup_action_check(p, psi, t, f, lams=None, gen_ts=(0.1, 0.05, 0.025), tol=1e-4, gen_tol=0.05):
    """Compare (T_t f)^ computed in x-space with exp(-t psi) f^, and the generator limit."""
    if lams is None:
        lams = np.array([0.0, p.a ** 2 + 0.25, 1.0, 2.0, 4.0])
    lams = np.asarray(lams, dtype=float)
    fhat = forward_transform(p, f, lams)
    lo, hi = f.support
    s = psi.gaussian_coef * max(max(gen_ts), t)
    x, w = _log_panels(min(0.02, lo / 4), hi * _spread(s), panels=60)

    def tf_hat(tt):
        vals = semigroup_action(p, psi, tt, f, x)
        return _transform_on_line(p, lambda _x: vals, x, w, lams)

    lhs = tf_hat(t)
    rhs = np.exp(-t * psi(lams)) * fhat
    gap = float(np.max(np.abs(lhs - rhs)))
    D = [(tf_hat(tt) - fhat) / tt for tt in gen_ts]
    rich = [2 * D[i + 1] - D[i] for i in range(len(D) - 1)]
    target = -psi(lams) * fhat
    scale = max(float(np.max(np.abs(target))), 1e-300)
    gen_err = float(np.max(np.abs(rich[-1] - target))) / scale
    return {"t": t, "lambdas": lams.tolist(), "x_space": lhs.tolist(), "spectral": rhs.tolist(),
            "gap": gap, "tol": tol, "pass": gap <= tol,
            "generator_estimate": rich[-1].tolist(), "generator_target": target.tolist(),
            "generator_rel_err": gen_err, "generator_pass": gen_err <= gen_tol}
