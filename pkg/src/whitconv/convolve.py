"""Product-formula kernel q, the translation T^y, convolution and the oplus sampler.

Everything here is built on one vectorised rule: for a pair (x, y) the map
xi -> q(x, y, xi) m(xi) is a Gaussian-type bump in xi^2 centred near
x^2 + y^2, so its effective support can be written down in closed form and
covered by Gauss-Legendre panels in log xi.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ._quad import gauss_legendre
from .errors import BracketError, CostCapError, CoverageError, DomainError, QuadratureError
from .specfun import DEFAULT_QUAD, scaled_pcf
from .spectral import DiscreteMeasure, GridDensity, kernel_matrix, log_m, m_weight

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_NODES = 16
_RANGE_LOG = 60.0  # exp(-60) ~ 1e-26 relative cut at the ends of the support


@dataclass(frozen=True)
class GrowthEnvelope:
    """|f(x)| <= b1 exp(1/(2x^2) + b2 (x^-beta + x^beta)), 0 <= beta < 2."""

    b1: float = 1.0
    b2: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        if self.b1 < 0 or self.b2 < 0:
            raise DomainError("envelope constants must be >= 0")
        if not 0 <= self.beta < 2:
            raise DomainError("envelope exponent beta must lie in [0, 2)")

    def log_bound(self, x):
        x = np.asarray(x, dtype=float)
        return math.log(max(self.b1, 1e-300)) + 0.5 / (x * x) + self.b2 * (x ** -self.beta + x ** self.beta)

    def check(self, f, xs, slack=1e-9):
        """Indices of sample points where |f| exceeds the envelope."""
        xs = np.asarray(xs, dtype=float)
        vals = np.abs(np.asarray(f(xs), dtype=float))
        with np.errstate(divide="ignore"):
            bad = np.log(vals) > self.log_bound(xs) + slack
        return np.flatnonzero(bad)


BOUNDED = GrowthEnvelope(1.0, 0.0, 0.0)


# ------------------------------------------------------------------ kernel

def _log_q_parts(p, x, y, xi):
    """log q(x,y,xi) with the three 1/(2.^2) terms and -2R^2 merged exactly."""
    A, B, C = x * x, y * y, xi * xi
    E = (4.0 * A * B - (A + B - C) ** 2) / (8.0 * A * B * C)
    T = (A + B + C) / (2.0 * x * y * xi)
    return (-_LOG_SQRT_2PI + (2 * p.alpha - 1) * np.log(x * y * xi) + E
            + scaled_pcf(p.mu).log(T))


def log_q(p, x, y, xi):
    x, y, xi = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, y, xi)))
    if np.any(x <= 0) or np.any(y <= 0) or np.any(xi <= 0):
        raise DomainError("q_kernel requires x, y, xi > 0")
    return _log_q_parts(p, x, y, xi)


def q_kernel(p, x, y, xi):
    """Product-formula kernel q(x, y, xi) > 0, symmetric in its three arguments."""
    out = np.exp(log_q(p, x, y, xi))
    return float(out) if out.ndim == 0 else out


def log_qm(p, x, y, xi):
    """log of q(x,y,xi) m(xi), written without the cancelling exponentials."""
    A, B, C = x * x, y * y, xi * xi
    T = (A + B + C) / (2.0 * x * y * xi)
    return (-_LOG_SQRT_2PI + (2 * p.alpha - 1) * np.log(x * y) - 2 * p.alpha * np.log(xi)
            - (A + B - C) ** 2 / (8.0 * A * B * C) + scaled_pcf(p.mu).log(T))


@lru_cache(maxsize=64)
def kernel_bound_constant(alpha, M=10.0):
    """Smallest C making the closed-form kernel bound hold for y <= M.

    The bound and q share the same exponential, so q/bound reduces to
    (2 pi)^{-1/2} 2^{-2 alpha} Dsc(t)/t^{2 alpha} C^{-1} with t = 2R >= 1/M.
    The supremum is taken once on a dense log grid and cached (frozen).
    """
    mu = 2.0 * alpha
    t = np.geomspace(1.0 / M, 1e6, 4001)
    r = np.exp(scaled_pcf(mu).log(t) - mu * np.log(t))
    return float(np.max(r) * math.exp(-_LOG_SQRT_2PI) * 2.0 ** -mu * (1 + 1e-9))


def kernel_upper_bound(p, x, y, xi, M=10.0):
    """C/(x y xi) (x^2+y^2+xi^2)^{2 alpha} exp(1/(4x^2) + 1/(4xi^2) - y^2/(8x^2xi^2) - (x^2-xi^2)^2/(8x^2y^2xi^2))."""
    x, y, xi = (np.asarray(v, dtype=float) for v in (x, y, xi))
    if np.any(y > M):
        raise DomainError(f"the kernel bound is stated for y <= M = {M:g}")
    C = kernel_bound_constant(p.alpha, M)
    A, B, Z = x * x, y * y, xi * xi
    e = 0.25 / A + 0.25 / Z - B / (8 * A * Z) - (A - Z) ** 2 / (8 * A * B * Z)
    return C / (x * y * xi) * (A + B + Z) ** (2 * p.alpha) * np.exp(e)


# ------------------------------------------------------------ pair rule

def _support_bounds(x, y, extra=0.0):
    """[xi_lo^2, xi_hi^2] outside which exp(-(A+B-C)^2/(8ABC)) < e^{-L}."""
    A, B = x * x, y * y
    S = A + B
    L = _RANGE_LOG + extra
    k = S + 4.0 * A * B * L
    c_hi = k + np.sqrt(np.maximum(k * k - S * S, 0.0))
    c_lo = S * S / c_hi
    return c_lo, c_hi


def pair_rule(p, x, y, panels=12, envelope=None):
    """Nodes xi (n, P) and weights w with sum w g(xi) ~ int g(xi) q(x,y,xi) m(xi) dxi.

    ``x`` and ``y`` are broadcast 1-d arrays of positive reals.
    """
    x, y = np.broadcast_arrays(np.atleast_1d(np.asarray(x, dtype=float)),
                               np.atleast_1d(np.asarray(y, dtype=float)))
    extra = 0.0
    c_lo, c_hi = _support_bounds(x, y)
    if envelope is not None and envelope.b2 > 0:
        # widen until the envelope growth is absorbed by the Gaussian cut
        for _ in range(4):
            g = envelope.b2 * (c_hi ** (0.5 * envelope.beta) + c_lo ** (-0.5 * envelope.beta))
            extra = float(np.max(g))
            c_lo, c_hi = _support_bounds(x, y, extra)
    u_lo = 0.5 * np.log(c_lo)
    u_hi = 0.5 * np.log(c_hi)
    g0, w0 = gauss_legendre(_NODES)
    frac = (np.arange(panels)[:, None] + 0.5 * (g0[None, :] + 1.0)) / panels
    frac = frac.ravel()
    wfrac = np.tile(w0 * 0.5 / panels, panels)
    span = (u_hi - u_lo)[:, None]
    u = u_lo[:, None] + span * frac[None, :]
    xi = np.exp(u)
    lw = log_qm(p, x[:, None], y[:, None], xi) + u
    w = np.exp(lw) * span * wfrac[None, :]
    return xi, w


def _pair_integral(p, x, y, g, cfg, envelope=None, start=12):
    """int g(xi) q m dxi for arrays x, y, doubling panels to convergence."""
    P = start
    prev = None
    while True:
        xi, w = pair_rule(p, x, y, P, envelope)
        gv = np.asarray(g(xi), dtype=float)
        val = np.sum(gv * w, axis=-1)
        scale = np.sum(np.abs(gv) * w, axis=-1)
        if prev is not None and np.all(np.abs(val - prev) <= cfg.rel_tol * scale + cfg.abs_tol):
            return val
        if P > cfg.max_subdivisions:
            raise QuadratureError("translation quadrature did not converge")
        prev = val
        P *= 2


def kernel_mass(p, x, y, cfg=DEFAULT_QUAD):
    """int q(x,y,xi) m(xi) dxi, which should be 1."""
    val = _pair_integral(p, x, y, lambda xi: np.ones_like(xi), cfg)
    return float(val[0]) if np.ndim(x) == 0 and np.ndim(y) == 0 else val


def product_formula_rhs(p, lams, x, y, panels=12):
    """int W_{Delta_lambda}(xi) q(x,y,xi) m(xi) dxi for each lambda in ``lams``."""
    xi, w = pair_rule(p, x, y, panels)
    K = kernel_matrix(p, xi[0], lams)
    return w[0] @ K


# --------------------------------------------------------------- translate

def translate(p, f, y, x, envelope=BOUNDED, cfg=DEFAULT_QUAD, check_envelope=True):
    """(T^y f)(x) = int f(xi) q(x, y, xi) m(xi) dxi.

    ``x`` may be an array; ``y`` a scalar or array broadcastable with x.
    Zero arguments follow the convention (T^0 f)(x) = (T^x f)(0) = f(x).
    """
    xa, ya = np.broadcast_arrays(np.atleast_1d(np.asarray(x, dtype=float)),
                                 np.atleast_1d(np.asarray(y, dtype=float)))
    if np.any(xa < 0) or np.any(ya < 0):
        raise DomainError("translate requires x, y >= 0")
    out = np.empty(xa.shape)
    zx, zy = xa == 0, ya == 0
    out[zx] = np.asarray(f(ya[zx]), dtype=float) if np.any(zx) else 0.0
    rest = ~zx & zy
    out[rest] = np.asarray(f(xa[rest]), dtype=float) if np.any(rest) else 0.0
    live = ~zx & ~zy
    if np.any(live):
        if check_envelope and envelope is not None:
            probe = np.geomspace(1e-2, 1e2, 41)
            if envelope.check(f, probe).size:
                import warnings
                warnings.warn("f exceeds its declared growth envelope at sampled points",
                              RuntimeWarning, stacklevel=2)
        out[live] = _pair_integral(p, xa[live], ya[live], f, cfg, envelope)
    if np.ndim(x) == 0 and np.ndim(y) == 0:
        return float(out[0])
    return out


def _outer_rule(support, panels=24):
    lo, hi = support
    g0, w0 = gauss_legendre(_NODES)
    edges = np.linspace(math.log(lo), math.log(hi), panels + 1)
    a, b = edges[:-1, None], edges[1:, None]
    u = (0.5 * (b - a) * g0 + 0.5 * (a + b)).ravel()
    w = (0.5 * (b - a) * w0).ravel()
    xs = np.exp(u)
    return xs, w * xs


def translate_symmetry_check(p, f, g, y, f_support, g_support, cfg=DEFAULT_QUAD, tol=1e-6):
    """Compare int (T^y f) g m dx with int f (T^y g) m dx (each over the other's support)."""
    xs, ws = _outer_rule(g_support)
    lhs = float(np.sum(translate(p, f, y, xs, cfg=cfg, check_envelope=False) * g(xs) * m_weight(p, xs) * ws))
    xs, ws = _outer_rule(f_support)
    rhs = float(np.sum(f(xs) * translate(p, g, y, xs, cfg=cfg, check_envelope=False) * m_weight(p, xs) * ws))
    scale = max(abs(lhs), abs(rhs), 1e-300)
    gap = abs(lhs - rhs)
    return {"lhs": lhs, "rhs": rhs, "gap": gap, "tol": tol * max(scale, 1.0), "pass": gap <= tol * max(scale, 1.0)}


# ------------------------------------------------------------ convolution

class _PairCDF:
    """CDF of delta_x * delta_y for many pairs at once.

    Panel edges carry exact cumulative Gauss sums; inside a panel the CDF is
    a 16-node Gauss rule on [edge, z], so bisection is cheap and vectorised.
    """

    def __init__(self, p, x, y, panels=24):
        self.p = p
        self.x, self.y = np.broadcast_arrays(np.atleast_1d(np.asarray(x, dtype=float)),
                                             np.atleast_1d(np.asarray(y, dtype=float)))
        c_lo, c_hi = _support_bounds(self.x, self.y)
        self.u_lo = 0.5 * np.log(c_lo)
        self.u_hi = 0.5 * np.log(c_hi)
        self.P = panels
        xi, w = pair_rule(p, self.x, self.y, panels)
        per_panel = w.reshape(len(self.x), panels, _NODES).sum(axis=2)
        self.cum = np.concatenate([np.zeros((len(self.x), 1)), np.cumsum(per_panel, axis=1)], axis=1)
        self.total = self.cum[:, -1]
        if np.any(np.abs(self.total - 1.0) > 1e-8):
            raise QuadratureError("pair CDF mass differs from 1 by more than 1e-8")

    def _partial(self, idx, j, u):
        """Mass of panel j of pair idx between its left edge and log-xi = u."""
        g0, w0 = gauss_legendre(_NODES)
        a = self.u_lo[idx] + (self.u_hi[idx] - self.u_lo[idx]) * j / self.P
        half = 0.5 * (u - a)
        uu = a[:, None] + half[:, None] * (g0[None, :] + 1.0)
        xi = np.exp(uu)
        lw = log_qm(self.p, self.x[idx][:, None], self.y[idx][:, None], xi) + uu
        return np.sum(np.exp(lw) * (half[:, None] * w0[None, :]), axis=1)

    def cdf(self, z):
        z = np.broadcast_to(np.asarray(z, dtype=float), self.x.shape)
        out = np.zeros(self.x.shape)
        pos = z > 0
        with np.errstate(divide="ignore"):
            u = np.where(pos, np.log(np.where(pos, z, 1.0)), -np.inf)
        above = u >= self.u_hi
        out[above] = 1.0
        mid = pos & ~above & (u > self.u_lo)
        if np.any(mid):
            idx = np.flatnonzero(mid)
            t = (u[idx] - self.u_lo[idx]) / (self.u_hi[idx] - self.u_lo[idx]) * self.P
            j = np.minimum(t.astype(int), self.P - 1)
            out[idx] = self.cum[idx, j] + self._partial(idx, j, u[idx])
        return out / self.total

    def quantile(self, q, xtol=1e-8):
        """Smallest z with cdf(z) >= q, to accuracy max(xtol, 1e-12 z)."""
        q = np.broadcast_to(np.asarray(q, dtype=float), self.x.shape)
        n = len(self.x)
        target = q * self.total
        idx = np.arange(n)
        j = np.array([min(max(np.searchsorted(self.cum[i], target[i]) - 1, 0), self.P - 1) for i in idx])
        a = self.u_lo + (self.u_hi - self.u_lo) * j / self.P
        b = self.u_lo + (self.u_hi - self.u_lo) * (j + 1) / self.P
        need = target - self.cum[idx, j]
        lo, hi = a.copy(), b.copy()
        for _ in range(200):
            if np.all(np.exp(hi) - np.exp(lo) <= np.maximum(xtol, 1e-12 * np.exp(hi))):
                break
            mid = 0.5 * (lo + hi)
            below = self._partial(idx, j, mid) < need
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        else:
            raise BracketError("oplus bisection did not reach the requested accuracy")
        return np.exp(0.5 * (lo + hi))


def conv_cdf(p, x, y, z):
    """(delta_x * delta_y)[0, z] = (T^y 1_[0,z])(x)."""
    x, y, z = float(x), float(y), float(z)
    if x < 0 or y < 0:
        raise DomainError("conv_cdf requires x, y >= 0")
    if x == 0 or y == 0:
        return 1.0 if z >= max(x, y) else 0.0
    return float(_PairCDF(p, x, y).cdf(z)[0])


def oplus_sample(p, x, y, u, xtol=1e-8):
    """X oplus_U Y: the U-quantile of delta_x * delta_y (vectorised over x, y, u)."""
    x, y, u = np.broadcast_arrays(*(np.atleast_1d(np.asarray(v, dtype=float)) for v in (x, y, u)))
    if np.any(x < 0) or np.any(y < 0):
        raise DomainError("oplus_sample requires x, y >= 0")
    if np.any((u <= 0) | (u >= 1)):
        raise DomainError("u must lie in (0, 1)")
    out = np.maximum(x, y).astype(float)  # a zero argument is the identity
    live = (x > 0) & (y > 0)
    if np.any(live):
        out[live] = _PairCDF(p, x[live], y[live]).quantile(u[live], xtol)
    return out


def default_out_grid(p, pairs_x, pairs_y, weights=None, n=400, q_lo=1e-6, q_hi=1 - 1e-6):
    """Geometric grid between low/high quantiles of the mixture of delta_x * delta_y."""
    x = np.atleast_1d(np.asarray(pairs_x, dtype=float))
    y = np.atleast_1d(np.asarray(pairs_y, dtype=float))
    live = (x > 0) & (y > 0)
    if not np.any(live):
        raise DomainError("no pair with both arguments positive")
    pc = _PairCDF(p, x[live], y[live])
    lo = float(np.min(pc.quantile(np.full(live.sum(), q_lo), 1e-6 * float(np.min(x[live])))))
    hi = float(np.max(pc.quantile(np.full(live.sum(), q_hi), 1e-6)))
    return np.geomspace(lo, hi, n)


def convolve_point_masses(p, x, y, out_grid=None, n=400, min_mass=1 - 1e-4):
    """delta_x * delta_y as a GridDensity (density q(x, y, .) against m).

    A zero argument returns the other point as an atom.
    """
    x, y = float(x), float(y)
    if x < 0 or y < 0:
        raise DomainError("convolve_point_masses requires x, y >= 0")
    if x == 0 or y == 0:
        z = max(x, y)
        if z == 0:
            return GridDensity(np.zeros(0), np.zeros(0), atom_at_zero=1.0)
        return GridDensity(np.zeros(0), np.zeros(0), atoms=DiscreteMeasure.dirac(z))
    grid = default_out_grid(p, x, y, n=n) if out_grid is None else np.asarray(out_grid, dtype=float)
    vals = q_kernel(p, x, y, grid)
    gd = GridDensity(grid, np.atleast_1d(vals))
    mass = gd.density_mass(p)
    if mass < min_mass:
        raise CoverageError(f"out_grid carries mass {mass:.6f} < {min_mass}")
    return gd


def _atoms_of(p, mu):
    if isinstance(mu, GridDensity):
        return mu.as_discrete(p)
    return mu.locations, mu.weights


PAIR_CAP = 250_000


def convolve_measures(p, mu, nu, out_grid=None, n=400, pair_cap=PAIR_CAP, min_mass_fraction=1 - 1e-4):
    """mu * nu as a GridDensity; positive atoms and the atom at 0 are tracked separately.

    GridDensity inputs are replaced by their quadrature nodes, so the result
    is the mixture sum_ij w_i v_j q(x_i, y_j, .). ``pair_cap`` bounds the
    number of atom pairs (pass None to lift it).
    """
    xs, ws = _atoms_of(p, mu)
    ys, vs = _atoms_of(p, nu)
    if pair_cap is not None and len(xs) * len(ys) > pair_cap:
        raise CostCapError(f"{len(xs) * len(ys)} atom pairs exceed the cap {pair_cap}; pass pair_cap=None")
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    Wt = np.outer(ws, vs)
    X, Y, Wt = X.ravel(), Y.ravel(), Wt.ravel()
    live = (X > 0) & (Y > 0)
    zero = (X == 0) & (Y == 0)
    single = ~live & ~zero
    atom0 = float(Wt[zero].sum())
    # pairs with one zero factor pass the other point through as an atom
    locs = np.maximum(X[single], Y[single])
    if locs.size:
        uniq, inv = np.unique(locs, return_inverse=True)
        atoms = DiscreteMeasure(uniq, np.bincount(inv, weights=Wt[single]))
    else:
        atoms = DiscreteMeasure.empty()
    if not np.any(live):
        return GridDensity(np.zeros(0), np.zeros(0), atom_at_zero=atom0, atoms=atoms)
    if out_grid is None:
        out_grid = default_out_grid(p, X[live], Y[live], n=n)
    grid = np.asarray(out_grid, dtype=float)
    dens = np.zeros(grid.size)
    Xl, Yl, Wl = X[live], Y[live], Wt[live]
    # blocks keep the (pairs x grid) temporaries bounded
    block = max(1, 2_000_000 // grid.size)
    for s in range(0, Xl.size, block):
        sl = slice(s, s + block)
        lq = _log_q_parts(p, Xl[sl, None], Yl[sl, None], grid[None, :])
        dens += Wl[sl] @ np.exp(lq)
    out = GridDensity(grid, dens, atom_at_zero=atom0, atoms=atoms)
    want = float(Wl.sum())
    got = out.density_mass(p)
    if got < min_mass_fraction * want:
        raise CoverageError(f"out_grid carries {got:.6f} of the continuous mass {want:.6f}")
    return out
