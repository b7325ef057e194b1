"""Simulation of the index Whittaker diffusion and of *-Levy processes.

The diffusion is simulated through Z = Y^2, which solves the affine SDE
dZ = (1/2 + 2(1-alpha) Z) dt + sqrt(2) Z dW. With
G_t = exp(sqrt(2) W_t + (1 - 2 alpha) t) one has Z_t = G_t (Z_0 + 1/2 int_0^t G_s^{-1} ds),
so only the time integral needs discretising.
"""

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from ._quad import gauss_legendre, pairwise_sum
from .convolve import oplus_sample
from .errors import CostCapError, CoverageError, DomainError
from .infdiv import ExponentFn, _expected_z, build_exponent
from .specfun import DEFAULT_QUAD, Params
from .spectral import DiscreteMeasure, GridDensity, inverse_transform, kernel_matrix, m_weight

SCHEMES = ("ExactExpFunctional", "EulerFallback", "SemigroupChain")


# ------------------------------------------------------------------ paths

@dataclass
class Path:
    times: np.ndarray
    values: np.ndarray
    seed: int
    scheme: str

    def __post_init__(self):
        if len(self.times) != len(self.values):
            raise DomainError("times and values must have equal length")
        if self.times[0] != 0:
            raise DomainError("paths start at t = 0")


@dataclass
class PathEnsemble:
    """Paths sharing a time grid; values[i, k] is path i at times[k]."""

    times: np.ndarray
    values: np.ndarray
    params: Params
    seed: int
    scheme: str
    exponent: Optional[ExponentFn] = None
    path_seeds: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise DomainError(f"unknown scheme {self.scheme!r}")
        if self.path_seeds is None:
            self.path_seeds = np.arange(self.values.shape[0])

    @property
    def n_paths(self):
        return self.values.shape[0]

    @property
    def paths(self):
        return [Path(self.times, self.values[i], self.seed, self.scheme) for i in range(self.n_paths)]

    def at(self, t):
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-12 * max(1.0, t):
            raise DomainError(f"time {t} is not on the ensemble grid")
        return self.values[:, k]


def path_rng(seed, index):
    """Counter-based stream for one path: Philox keyed by (seed, path index)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index)])))


def _normals(seed, n_paths, n):
    out = np.empty((n_paths, n))
    for i in range(n_paths):
        out[i] = path_rng(seed, i).standard_normal(n)
    return out


def _uniforms(seed, n_paths, n, stream=0):
    out = np.empty((n_paths, n))
    for i in range(n_paths):
        g = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(i), 1 + stream])))
        out[i] = g.random(n)
    return out


def _check_times(times):
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 1:
        raise DomainError("times must be a 1-d sequence")
    if times[0] != 0:
        times = np.concatenate([[0.0], times])
    if np.any(np.diff(times) <= 0):
        raise DomainError("times must be strictly increasing")
    return times


# -------------------------------------------------------------- diffusion

_GL5 = gauss_legendre(5)


def _substeps(times, refine, h_max):
    dt = np.diff(times)
    r = np.maximum(refine, np.ceil(dt / h_max)).astype(int)
    return r


def simulate_diffusion(p, y0, times, n_paths, seed, scheme="ExactExpFunctional", refine=8,
                       h_max=1.0 / 64, b=1.0, max_steps=200_000):
    """Ensemble of index Whittaker diffusion paths Y on ``times`` (time scaled by b).

    ExactExpFunctional: Z_t = G_t (Z_0 + 1/2 I_t). On each sub-step the
    integral of G^{-1} is replaced by its conditional mean given the
    Brownian end points (a Brownian bridge), computed by 5-point
    Gauss-Legendre, so E[Z_t] carries no time-discretisation bias.
    EulerFallback: Euler on V = 2Z with full truncation at 0.
    """
    if y0 < 0:
        raise DomainError("y0 must be >= 0")
    if n_paths < 1:
        raise DomainError("n_paths must be >= 1")
    times = _check_times(times)
    if scheme not in ("ExactExpFunctional", "EulerFallback"):
        raise DomainError(f"unknown diffusion scheme {scheme!r}")
    if scheme == "EulerFallback":
        refine = max(refine, 32)
        h_max = min(h_max, 1.0 / 512)
    r = _substeps(times, refine, h_max)
    n_fine = int(r.sum())
    if n_fine > max_steps:
        raise CostCapError(f"{n_fine} internal steps exceed the cap {max_steps}")
    fine_dt = np.repeat(np.diff(times) / r, r) * b
    dW = _normals(seed, n_paths, n_fine) * np.sqrt(fine_dt)[None, :]
    out = np.empty((n_paths, times.size))
    out[:, 0] = y0
    idx = np.concatenate([[0], np.cumsum(r)])
    c = 1.0 - 2.0 * p.alpha
    if scheme == "ExactExpFunctional":
        W = np.concatenate([np.zeros((n_paths, 1)), np.cumsum(dW, axis=1)], axis=1)
        s = np.concatenate([[0.0], np.cumsum(fine_dt)])
        # log G^{-1} on the bridge: -sqrt2 (W_a + (W_b - W_a) v) - c (s_a + h v), variance h v (1 - v)
        g0, w0 = _GL5
        v = 0.5 * (g0 + 1.0)
        h = fine_dt
        Wa, Wb = W[:, :-1], W[:, 1:]
        expo = (-math.sqrt(2.0) * (Wa[:, :, None] + (Wb - Wa)[:, :, None] * v)
                - c * (s[:-1, None] + h[:, None] * v)[None, :, :]
                + (h[:, None] * v * (1.0 - v))[None, :, :])
        inc = np.exp(expo) @ (0.5 * w0) * h[None, :]
        I = np.concatenate([np.zeros((n_paths, 1)), np.cumsum(inc, axis=1)], axis=1)
        logG = math.sqrt(2.0) * W + c * s[None, :]
        Z = np.exp(logG[:, idx]) * (y0 * y0 + 0.5 * I[:, idx])
        out[:] = np.sqrt(Z)
    else:
        V = np.full(n_paths, 2.0 * y0 * y0)
        k = 1
        pos = 0
        kappa = 2.0 * (1.0 - p.alpha)
        for j in range(times.size - 1):
            for _ in range(r[j]):
                Vp = np.maximum(V, 0.0)
                V = V + (1.0 + kappa * Vp) * fine_dt[pos] + math.sqrt(2.0) * Vp * dW[:, pos]
                pos += 1
            out[:, k] = np.sqrt(np.maximum(V, 0.0) / 2.0)
            k += 1
    return PathEnsemble(times, out, p, int(seed), scheme, build_exponent(p, b))


# ------------------------------------------------------ transition density

class PanelCDF:
    """CDF built from a density known at Gauss nodes of panels in u = log x.

    Each panel's integrand is interpolated by its degree-15 Legendre
    polynomial and integrated exactly, so partial panel masses are cheap.
    """

    def __init__(self, u_edges, integrand_at_nodes):
        self.edges = np.asarray(u_edges, dtype=float)
        P = self.edges.size - 1
        vals = np.asarray(integrand_at_nodes, dtype=float).reshape(P, -1)
        n = vals.shape[1]
        g0, _ = gauss_legendre(n)
        V = np.polynomial.legendre.legvander(g0, n - 1)
        coef = np.linalg.solve(V, vals.T).T
        half = 0.5 * np.diff(self.edges)
        self.anti = np.array([np.polynomial.legendre.legint(c, lbnd=-1) for c in coef]) * half[:, None]
        mass = np.array([np.polynomial.legendre.legval(1.0, a) for a in self.anti])
        self.cum = np.concatenate([[0.0], np.cumsum(mass)])
        self.total = float(self.cum[-1])

    def _partial(self, j, u):
        a, b = self.edges[j], self.edges[j + 1]
        s = (2.0 * u - a - b) / (b - a)
        out = np.empty(u.shape)
        for jj in np.unique(j):
            m = j == jj
            out[m] = np.polynomial.legendre.legval(s[m], self.anti[jj])
        return out

    def cdf_u(self, u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        uc = np.clip(u, self.edges[0], self.edges[-1])
        j = np.clip(np.searchsorted(self.edges, uc, side="right") - 1, 0, self.edges.size - 2)
        return (self.cum[j] + self._partial(j, uc)) / self.total

    def cdf(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        with np.errstate(divide="ignore"):
            return np.where(x > 0, self.cdf_u(np.log(np.maximum(x, 1e-300))), 0.0)

    def quantile(self, q, xtol=1e-8):
        q = np.atleast_1d(np.asarray(q, dtype=float))
        target = q * self.total
        j = np.clip(np.searchsorted(self.cum, target, side="right") - 1, 0, self.edges.size - 2)
        lo, hi = self.edges[j].copy(), self.edges[j + 1].copy()
        need = target - self.cum[j]
        for _ in range(200):
            if np.all(np.exp(hi) - np.exp(lo) <= np.maximum(xtol, 1e-12 * np.exp(hi))):
                break
            mid = 0.5 * (lo + hi)
            below = self._partial(j, mid) < need
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return np.exp(0.5 * (lo + hi))


def _diffusion_range(p, s, x):
    """Log-x interval carrying all but ~1e-12 of the law of Y_s started at x.

    log Y_s has standard deviation about sqrt(s/2). Near 0 the law is
    suppressed like exp(-c/y^2), so a floor of 0.02 loses nothing measurable
    and keeps the kernel tables in their accurate range; the mass check in
    transition_law guards the assumption.
    """
    spread = math.exp(8.0 * math.sqrt(0.5 * s) + s)
    z_mean = x * x * math.exp(2.0 * (1.0 - p.alpha) * s) + _expected_z(p, s)
    hi = math.sqrt(z_mean) * spread + 1.0
    lo = max(_Y_FLOOR, 0.3 * min(max(x, 1e-300), math.sqrt(0.5 * s)) / spread)
    return lo, hi


_Y_FLOOR = 0.02


def _log_panels(lo, hi, panels):
    g0, w0 = gauss_legendre(16)
    edges = np.linspace(math.log(lo), math.log(hi), panels + 1)
    a, b = edges[:-1, None], edges[1:, None]
    u = (0.5 * (b - a) * g0 + 0.5 * (a + b)).ravel()
    w = (0.5 * (b - a) * w0).ravel()
    return edges, np.exp(u), w


def transition_density(p, t, x, y, cfg=DEFAULT_QUAD, b=1.0):
    """p_{t,x}(y) against dy: m(y) int e^{-t b lambda} W(x) W(y) rho d lambda."""
    if t <= 0:
        raise DomainError("t must be > 0")
    if x < 0:
        raise DomainError("x must be >= 0")
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))
    if np.any(y_arr <= 0):
        raise DomainError("y must be > 0")

    def fhat(lam):
        lam = np.atleast_1d(lam)
        kx = kernel_matrix(p, [x], lam)[0] if x > 0 else np.ones(lam.size)
        return np.exp(-t * b * lam) * kx

    dens = np.clip(np.atleast_1d(inverse_transform(p, fhat, y_arr, cfg)), 0.0, None) * m_weight(p, y_arr)
    return float(dens[0]) if np.ndim(y) == 0 else dens


@dataclass
class TransitionLaw:
    """Law of Y_t given Y_0 = x, tabulated once for sampling and CDFs."""

    cdf_table: PanelCDF
    t: float
    x: float

    def cdf(self, y):
        return self.cdf_table.cdf(y)

    def quantile(self, u, xtol=1e-8):
        return self.cdf_table.quantile(u, xtol)


def transition_law(p, t, x, cfg=DEFAULT_QUAD, b=1.0, panels=40, min_mass=1 - 1e-6):
    lo, hi = _diffusion_range(p, b * t, x)
    edges, nodes, _ = _log_panels(lo, hi, panels)
    dens = transition_density(p, t, x, nodes, cfg, b)
    table = PanelCDF(edges, dens * nodes)
    if abs(table.total - 1.0) > 1 - min_mass:
        raise CoverageError(f"transition law tabulated mass {table.total:.8f}")
    return TransitionLaw(table, t, x)


def sample_transition(p, t, x, u, cfg=DEFAULT_QUAD, b=1.0, law=None):
    """Inverse-CDF draw(s) from p_{t,x}; monotone in u."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if np.any((u <= 0) | (u >= 1)):
        raise DomainError("u must lie in (0, 1)")
    if law is None:
        law = transition_law(p, t, x, cfg, b)
    out = law.quantile(u)
    return out


# ----------------------------------------------------------- *-Levy chains

def _draw_discrete(mu, uni):
    cw = np.cumsum(mu.weights) / mu.mass
    k = np.minimum(np.searchsorted(cw, uni, side="right"), len(cw) - 1)
    return mu.locations[k]


def _oplus_fold(p, a, b, u):
    """a oplus_u b, elementwise; zero entries pass through."""
    out = np.maximum(a, b)
    live = (a > 0) & (b > 0)
    if np.any(live):
        out[live] = oplus_sample(p, a[live], b[live], u[live])
    return out


def simulate_levy(p, psi, times, n_paths, seed, cfg=DEFAULT_QUAD, x0=0.0, max_jumps=50):
    """*-Levy chain: X_{k+1} = X_k oplus_U J_k with J_k ~ mu_{dt_k}.

    J_k is the oplus-combination of a draw from the Gaussian part (the law of
    the diffusion at time b dt, by inverse CDF) and N ~ Poisson(a dt) jumps
    drawn from the normalised Levy measure.
    """
    times = _check_times(times)
    if x0 < 0:
        raise DomainError("x0 must be >= 0")
    nT = times.size - 1
    U = _uniforms(seed, n_paths, (3 + 2 * max_jumps) * nT, stream=0)
    col = 0

    def take(k=1):
        nonlocal col
        v = U[:, col:col + k]
        col += k
        return v

    a = psi.jump_rate
    nu1 = DiscreteMeasure(psi.levy_measure.locations, psi.levy_measure.weights / a) if a > 0 else None
    laws = {}
    X = np.full(n_paths, float(x0))
    out = np.empty((n_paths, times.size))
    out[:, 0] = X
    for k in range(nT):
        dt = times[k + 1] - times[k]
        J = np.zeros(n_paths)
        ug = take()[:, 0]
        un = take()[:, 0]
        jumps = take(2 * max_jumps)
        if psi.gaussian_coef > 0:
            key = round(dt, 14)
            if key not in laws:
                laws[key] = transition_law(p, dt, 0.0, cfg, psi.gaussian_coef)
            J = laws[key].quantile(np.clip(ug, 1e-15, 1 - 1e-15))
        if a > 0:
            N = stats.poisson.ppf(un, a * dt).astype(int)
            if np.any(N > max_jumps):
                raise CostCapError("more jumps in one step than max_jumps")
            for j in range(int(N.max())):
                active = N > j
                draw = np.zeros(n_paths)
                draw[active] = _draw_discrete(nu1, jumps[active, 2 * j])
                uj = np.clip(jumps[:, 2 * j + 1], 1e-15, 1 - 1e-15)
                J = np.where(active, _oplus_fold(p, J, draw, uj), J)
        uo = np.clip(take()[:, 0], 1e-15, 1 - 1e-15)
        X = _oplus_fold(p, X, J, uo)
        out[:, k + 1] = X
    return PathEnsemble(times, out, p, int(seed), "SemigroupChain", psi)


def _step_sampler(p, step_mu):
    if isinstance(step_mu, DiscreteMeasure):
        if not step_mu.is_probability(1e-9):
            raise DomainError("step measure must be a probability measure")
        return lambda u: _draw_discrete(step_mu, u)
    if isinstance(step_mu, GridDensity):
        if abs(step_mu.mass(p) - 1.0) > 1e-3:
            raise DomainError("step measure must be a probability measure")
        xs, ws = step_mu.as_discrete(p)
        order = np.argsort(xs)
        return lambda u: _draw_discrete(DiscreteMeasure(xs[order], ws[order]), u)
    raise DomainError("step measure must be a DiscreteMeasure or GridDensity")


def random_walk(p, step_mu, n_steps, n_chains, seed):
    """S_0 = 0, S_n = S_{n-1} oplus_{U_n} X_n with X_n ~ step_mu i.i.d."""
    if n_steps < 0 or n_chains < 1:
        raise DomainError("n_steps >= 0 and n_chains >= 1 required")
    draw = _step_sampler(p, step_mu)
    U = _uniforms(seed, n_chains, 2 * max(n_steps, 1), stream=1)
    S = np.zeros(n_chains)
    out = np.zeros((n_chains, n_steps + 1))
    for n in range(n_steps):
        X = draw(U[:, 2 * n])
        S = _oplus_fold(p, S, X, np.clip(U[:, 2 * n + 1], 1e-15, 1 - 1e-15))
        out[:, n + 1] = S
    return PathEnsemble(np.arange(n_steps + 1, dtype=float), out, p, int(seed), "SemigroupChain")


# ----------------------------------------------------------- MC harness

def _mean_se(v):
    v = np.asarray(v, dtype=float)
    n = v.size
    mean = pairwise_sum(v) / n
    se = float(np.std(v, ddof=1) / math.sqrt(n)) if n > 1 else float("inf")
    return float(mean), se


def martingale_check(ensemble, g, compensator=None, t_pairs=None, multiplicative=False, se_floor=None):
    """E[M_t - M_s] with its standard error for each (s, t).

    additive: M_t = g(X_t) - compensator(t, X_t) (compensator may be None).
    multiplicative: M_t = compensator(t) * g(X_t).
    """
    if t_pairs is None:
        t_pairs = [(ensemble.times[0], t) for t in ensemble.times[1:]]

    def M(t):
        x = ensemble.at(t)
        gx = np.asarray(g(x), dtype=float)
        if compensator is None:
            return gx
        if multiplicative:
            return compensator(t) * gx
        return gx - np.asarray(compensator(t, x), dtype=float)

    rows = []
    for s, t in t_pairs:
        d = M(t) - M(s)
        est, se = _mean_se(d)
        row = {"s": float(s), "t": float(t), "estimate": est, "se": se, "pass": abs(est) <= 3.0 * se}
        if se_floor is not None and se > se_floor:
            warnings.warn(f"standard error {se:.3g} exceeds floor {se_floor:.3g}; add paths", RuntimeWarning)
            row["insufficient_paths"] = True
        rows.append(row)
    return {"rows": rows, "pass": all(r["pass"] for r in rows)}


def quadratic_variation_check(ensemble, phi1, dphi1, t_end=None, tol=0.05, min_steps_per_unit=200):
    """Realised [phi1(Y) - t] against 1/2 int Y^2 phi1'(Y)^2 ds along each path.

    The gap is reported for the ensemble means (pathwise ratios carry
    O(1/sqrt(steps)) sampling noise of their own).
    """
    times = ensemble.times
    if t_end is None:
        t_end = times[-1]
    k_end = int(np.searchsorted(times, t_end + 1e-12))
    tt = times[:k_end]
    steps_per_unit = (tt.size - 1) / max(tt[-1] - tt[0], 1e-300)
    if steps_per_unit < min_steps_per_unit:
        warnings.warn("time grid is coarser than 200 steps per unit time", RuntimeWarning)
    Y = ensemble.values[:, :k_end]
    Zp = np.asarray(phi1(Y.ravel()), dtype=float).reshape(Y.shape) - tt[None, :]
    realised = np.sum(np.diff(Zp, axis=1) ** 2, axis=1)
    integrand = 0.5 * Y ** 2 * np.asarray(dphi1(Y.ravel()), dtype=float).reshape(Y.shape) ** 2
    integral = np.sum(0.5 * (integrand[:, 1:] + integrand[:, :-1]) * np.diff(tt)[None, :], axis=1)
    mr = float(np.mean(realised))
    mi = float(np.mean(integral))
    gap = abs(mr - mi) / max(mi, 1e-300)
    pathwise = float(np.mean(np.abs(realised - integral) / np.maximum(integral, 1e-300)))
    return {"t": float(tt[-1]), "mean_realised": mr, "mean_integral": mi, "gap": gap,
            "pathwise_mean_rel_gap": pathwise, "tol": tol, "pass": gap <= tol}
