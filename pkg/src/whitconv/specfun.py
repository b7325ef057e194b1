"""Kernel W_{alpha,nu}(x), the parabolic cylinder function and friends.

Notation used throughout the package:

* ``a = 1/2 - alpha`` (``Params.a``), ``mu = 2*alpha``.
* ``Dsc_mu(T) = exp(T^2/4) D_mu(T)``, the exponentially scaled parabolic
  cylinder function. It stays O(T^mu) for large T, so every formula that
  multiplies D_mu by a Gaussian is evaluated through it in log space.
"""

import logging
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import mpmath
import numpy as np
from scipy import integrate, special

from ._quad import exp_sinh_rule
from .errors import DomainError, PoleError, QuadratureError

log = logging.getLogger(__name__)

_ETA_CONST = 2.0 ** -1.5 / math.sqrt(math.pi)


@dataclass(frozen=True)
class Params:
    alpha: float

    def __post_init__(self):
        a = float(self.alpha)
        if not math.isfinite(a) or a >= 0.5:
            raise DomainError(f"alpha must be finite and < 1/2, got {self.alpha!r}")
        object.__setattr__(self, "alpha", a)

    @property
    def half_minus_alpha(self):
        return 0.5 - self.alpha

    a = half_minus_alpha

    @property
    def mu(self):
        return 2.0 * self.alpha


@dataclass(frozen=True)
class Order:
    """nu = value (kind 'real') or nu = i*value (kind 'imag')."""

    kind: str
    value: float

    def __post_init__(self):
        if self.kind not in ("real", "imag"):
            raise DomainError(f"order kind must be 'real' or 'imag', got {self.kind!r}")
        v = float(self.value)
        if not math.isfinite(v):
            raise DomainError("order value must be finite")
        # W is even in nu, so only the magnitude matters
        object.__setattr__(self, "value", abs(v))

    @classmethod
    def real(cls, v):
        return cls("real", v)

    @classmethod
    def imag(cls, tau):
        return cls("imag", tau)

    @classmethod
    def from_lambda(cls, p, lam):
        """Delta_lambda = sqrt(a^2 - lambda)."""
        d = p.a ** 2 - float(lam)
        if d >= 0:
            return cls("real", math.sqrt(d))
        return cls("imag", math.sqrt(-d))

    @property
    def nu_squared(self):
        return self.value ** 2 if self.kind == "real" else -self.value ** 2

    def eigenvalue(self, p):
        """lambda = a^2 - nu^2."""
        return p.a ** 2 - self.nu_squared

    def in_strip(self, p):
        return self.kind == "imag" or self.value <= p.a * (1 + 1e-14)

    def __str__(self):
        return f"{self.kind}:{self.value:g}"


@dataclass(frozen=True)
class QuadConfig:
    abs_tol: float = 1e-13
    rel_tol: float = 1e-11
    max_subdivisions: int = 400
    truncation_tail_tol: float = 1e-8

    def __post_init__(self):
        if min(self.abs_tol, self.rel_tol, self.truncation_tail_tol) <= 0:
            raise DomainError("tolerances must be positive")
        if self.max_subdivisions < 8:
            raise DomainError("max_subdivisions must be >= 8")


DEFAULT_QUAD = QuadConfig()


# --------------------------------------------------------------------- gamma

def _check_pole(z):
    if z.imag == 0 and z.real <= 0 and z.real == math.floor(z.real):
        raise PoleError(f"Gamma has a pole at {z.real:g}")


def gamma_complex(z):
    z = complex(z)
    _check_pole(z)
    if abs(z) < 140 and z.real < 170:
        return complex(special.gamma(z))
    return complex(np.exp(special.loggamma(z)))


def loggamma_complex(z):
    """Principal log Gamma; vectorised, used where |Gamma| under/overflows."""
    return special.loggamma(np.asarray(z, dtype=complex))


def upper_incomplete_gamma(a, x):
    """Gamma(a, x) for real a and x >= 0 (x > 0 when a <= 0)."""
    a = float(a)
    x = float(x)
    if x < 0:
        raise DomainError("x must be >= 0")
    if a <= 0 and x == 0:
        raise DomainError("Gamma(a, 0) diverges for a <= 0")
    if a > 0:
        if x == 0:
            return float(special.gamma(a))
        return float(special.gammaincc(a, x) * special.gamma(a))
    if a == 0:
        return float(special.exp1(x))
    return math.exp(-x) * scaled_upper_gamma(a, x)


def scaled_upper_gamma(a, x):
    """exp(x) Gamma(a, x) = int_0^inf e^{-u} (x+u)^{a-1} du, for x > 0."""
    if x <= 0:
        raise DomainError("x must be > 0")
    f = lambda u: math.exp(-u) * (x + u) ** (a - 1.0)
    brk = min(x, 1.0)
    v1, e1 = integrate.quad(f, 0.0, brk, epsabs=0, epsrel=1e-13, limit=200)
    v2, e2 = integrate.quad(f, brk, np.inf, epsabs=0, epsrel=1e-13, limit=200)
    if e1 + e2 > 1e-10 * abs(v1 + v2):
        raise QuadratureError(f"incomplete gamma quadrature did not converge (a={a}, x={x})")
    return v1 + v2


# ------------------------------------------------------ parabolic cylinder

def _de_nodes():
    s, w = exp_sinh_rule()
    keep = s > 1e-300
    return s[keep], w[keep]


@lru_cache(maxsize=64)
def _dsc_rule(mu):
    """DE nodes and weights for the Dsc integral, pruned where they cannot matter."""
    s, w = exp_sinh_rule(h=1.0 / 20)
    b = 0.5 * (1.0 - mu)
    with np.errstate(all="ignore"):
        k = s ** (b - 1.0) * np.exp(-s) * w / special.gamma(b)
        keep = np.isfinite(k) & (np.abs(k) * np.maximum(1.0, s) ** abs(0.5 * mu) > 1e-19)
    s, k = s[keep], k[keep]
    s.setflags(write=False)
    k.setflags(write=False)
    return s, k


def dsc_quadrature(mu, T2):
    """exp(T^2/4) D_mu(T) from the Laguerre-type integral representation.

    Dsc_mu(T) = 1/Gamma((1-mu)/2) int_0^inf s^{-(mu+1)/2} e^{-s} (T^2+2s)^{mu/2} ds,
    valid for mu < 1 and Re T^2 > 0 (principal branch). ``T2`` holds T^2 and
    may be complex. For mu > 0 the T^mu part is split off so the remaining
    integrand has no singularity at s = 0.
    """
    if mu >= 1:
        raise DomainError("integral representation requires mu < 1")
    s, kernel = _dsc_rule(float(mu))
    T2 = np.asarray(T2)
    half = 0.5 * mu
    if mu > 0:
        base = T2 ** half
        f = (T2[..., None] + 2.0 * s) ** half - base[..., None]
        return base + f @ kernel
    return ((T2[..., None] + 2.0 * s) ** half) @ kernel


class _ScaledPCF:
    """Chebyshev interpolant of Dsc_mu on [0, inf) for a fixed mu.

    Built from ``dsc_quadrature`` in the variable w = T/(T+2), after dividing
    out (1+T^2)^{mu/2}; the quotient is analytic on [0,1].
    """

    SCALE = 2.0

    def __init__(self, mu, deg=72):
        self.mu = mu
        c = self.SCALE

        def h(w):
            w = np.clip(w, 0.0, 1.0)
            inner = w < 1.0
            out = np.ones_like(w)
            T = c * w[inner] / (1.0 - w[inner])
            out[inner] = dsc_quadrature(mu, T * T) / (1.0 + T * T) ** (0.5 * mu)
            return out

        self.cheb = np.polynomial.chebyshev.Chebyshev.interpolate(h, deg, domain=[0.0, 1.0])
        probe = np.geomspace(1e-3, 1e3, 41)
        wp = probe / (probe + c)
        err = np.max(np.abs(self.cheb(wp) / h(wp) - 1.0))
        if err > 1e-11:
            raise QuadratureError(f"parabolic cylinder interpolant error {err:.2e} for mu={mu}")

    def __call__(self, T):
        T = np.asarray(T, dtype=float)
        w = T / (T + self.SCALE)
        return self.cheb(w) * (1.0 + T * T) ** (0.5 * self.mu)

    def log(self, T):
        T = np.asarray(T, dtype=float)
        w = T / (T + self.SCALE)
        return np.log(self.cheb(w)) + 0.5 * self.mu * np.log1p(T * T)


@lru_cache(maxsize=64)
def scaled_pcf(mu):
    """Cached fast evaluator of Dsc_mu for real T >= 0."""
    return _ScaledPCF(float(mu))


def parabolic_cylinder_D(mu, t):
    """D_mu(t) for mu < 1 and t > 0, by quadrature of its integral representation."""
    mu = float(mu)
    if mu >= 1:
        raise DomainError("parabolic_cylinder_D requires mu < 1")
    t_arr = np.asarray(t, dtype=float)
    if np.any(~(t_arr > 0)):
        raise DomainError("parabolic_cylinder_D requires t > 0")
    out = np.exp(-0.25 * t_arr * t_arr) * dsc_quadrature(mu, t_arr * t_arr)
    return float(out) if out.ndim == 0 else out


# ------------------------------------------------------- Laplace density eta

def _eta_real(p, x, s):
    """eta_x(s) for real s (vectorised in s), via the scaled PCF interpolant."""
    s = np.asarray(s, dtype=float)
    sh = np.sinh(0.5 * s)
    T = np.cosh(0.5 * s) / x
    logv = math.log(_ETA_CONST) + (2 * p.alpha - 1) * math.log(x) - sh * sh / (2 * x * x)
    return np.exp(logv + scaled_pcf(p.mu).log(T))


def eta_kernel(p, x, s):
    """Laplace-representation density eta_x(s) >= 0, even in s."""
    if not x > 0:
        raise DomainError("eta_kernel requires x > 0")
    out = _eta_real(p, float(x), s)
    return float(out) if np.ndim(out) == 0 else out


def _eta_complex_parts(p, x, z, order=0):
    """eta_x(z) and its x-derivatives for complex z (for contour shifts)."""
    z = np.asarray(z, dtype=complex)
    ch = np.cosh(z)
    S2 = 0.5 * (ch - 1.0)  # sinh(z/2)^2
    T2 = 0.5 * (ch + 1.0) / (x * x)  # (cosh(z/2)/x)^2
    mu = p.mu
    pref = _ETA_CONST * x ** (2 * p.alpha - 1) * np.exp(-S2 / (2 * x * x))
    f = dsc_quadrature(mu, T2)
    if order == 0:
        return pref * f
    T = np.sqrt(T2)
    L1 = (2 * p.alpha - 1) / x + S2 / x ** 3
    T1 = -T / x
    d1 = mu * dsc_quadrature(mu - 1, T2) if mu != 0 else 0.0
    f1 = d1 * T1
    if order == 1:
        return pref * (L1 * f + f1)
    L2 = -(2 * p.alpha - 1) / x ** 2 - 3 * S2 / x ** 4
    T2d = 2 * T / x ** 2
    d2 = mu * (mu - 1) * dsc_quadrature(mu - 2, T2) if mu != 0 else 0.0
    f2 = d2 * T1 * T1 + d1 * T2d
    return pref * ((L1 * L1 + L2) * f + 2 * L1 * f1 + f2)


def _eta_real_parts(p, x, s, order):
    """x-derivatives of eta_x(s) on the real line, using the interpolants."""
    s = np.asarray(s, dtype=float)
    sh = np.sinh(0.5 * s)
    S2 = sh * sh
    T = np.cosh(0.5 * s) / x
    mu = p.mu
    logpref = math.log(_ETA_CONST) + (2 * p.alpha - 1) * math.log(x) - S2 / (2 * x * x)
    pref = np.exp(logpref)
    f = scaled_pcf(mu)(T)
    if order == 0:
        return pref * f
    L1 = (2 * p.alpha - 1) / x + S2 / x ** 3
    T1 = -T / x
    d1 = mu * scaled_pcf(mu - 1)(T) if mu != 0 else 0.0
    f1 = d1 * T1
    if order == 1:
        return pref * (L1 * f + f1)
    L2 = -(2 * p.alpha - 1) / x ** 2 - 3 * S2 / x ** 4
    d2 = mu * (mu - 1) * scaled_pcf(mu - 2)(T) if mu != 0 else 0.0
    f2 = d2 * T1 * T1 + d1 * (2 * T / x ** 2)
    return pref * ((L1 * L1 + L2) * f + 2 * L1 * f1 + f2)


# ------------------------------------------------------------ Laplace route

_TAIL_LOG = 42.0  # exp(-42) ~ 6e-19


def _cutoff_real(p, x, nu_re):
    """S with eta_x(S) e^{nu S} below exp(-_TAIL_LOG) relative to O(1)."""
    S = 1.0
    for _ in range(30):
        need = _TAIL_LOG + nu_re * S + abs(p.mu) * max(0.0, math.log(max(math.cosh(S / 2) / x, 1.0))) \
            + max(0.0, (2 * p.alpha - 1) * math.log(x))
        S_new = 2.0 * math.asinh(x * math.sqrt(2.0 * need))
        if abs(S_new - S) < 1e-6:
            break
        S = S_new
    return S_new


def _trapezoid_converged(func, h0, S, max_halvings=14, tol=1e-15):
    """Trapezoid sum h*(f(0)/2 + sum f(kh)) on [0, S], halving h to convergence.

    ``func`` maps an array of s to an array of the same shape (possibly with an
    extra trailing axis of outputs). Returns (value, l1) where l1 is the sum of
    absolute contributions, used as the scale for relative error.
    """
    n = max(4, int(math.ceil(S / h0)))
    h = S / n
    s = np.arange(n + 1) * h
    vals = func(s)
    vals_w = vals.copy()
    vals_w[0] *= 0.5
    total = vals_w.sum(axis=0)
    l1 = np.abs(vals_w).sum(axis=0) * h
    est = total * h
    for _ in range(max_halvings):
        mids = (np.arange(n) + 0.5) * h
        mv = func(mids)
        total = total + mv.sum(axis=0)
        l1 = 0.5 * l1 + 0.5 * np.abs(mv).sum(axis=0) * h
        h *= 0.5
        n *= 2
        new = total * h
        if np.all(np.abs(new - est) <= tol * np.maximum(l1, 1e-300) + 1e-300):
            return new, l1
        est = new
    raise QuadratureError("Laplace-route trapezoid did not converge")


def _laplace_real_order(p, v, x):
    """2 int_0^inf cosh(v s) eta_x(s) ds for real v."""
    S = _cutoff_real(p, x, v)
    h0 = min(0.25, 0.5 * x)

    def f(s):
        return 2.0 * np.cosh(v * s) * _eta_real(p, x, s)

    val, _ = _trapezoid_converged(f, h0, S)
    return float(val)


def _shift_angle(x, tau):
    """Contour shift Im s = theta near the saddle of e^{i tau s} eta_x(s)."""
    if tau < 1.0:
        return 0.0
    return min(math.asin(min(1.0, 4.0 * tau * x * x)), 0.5 * math.pi - 0.3)


def _laplace_imag_order(p, tau, x, deriv=0):
    """int_R e^{i tau s} d^k/dx^k eta_x(s) ds, on the shifted line Im s = theta."""
    theta = _shift_angle(x, tau)
    if theta == 0.0:
        S = _cutoff_real(p, x, 0.0)
        h0 = min(0.25, 0.5 * x, 0.5 / max(tau, 1e-300))

        def f(s):
            return 2.0 * np.cos(tau * s) * _eta_real_parts(p, x, s, deriv)

        val, _ = _trapezoid_converged(f, h0, S)
        return float(val)
    c = math.cos(theta)
    # |exp(-sinh^2/(2x^2))| = exp(-(cosh(s)cos(theta) - 1)/(4x^2))
    need = _TAIL_LOG + abs(p.mu) * 20 + tau * theta
    S = math.acosh((1.0 + 4.0 * x * x * need) / c)
    h0 = min(0.25, 0.5 * x, 0.5 / tau)
    scale = math.exp(-tau * theta)

    def f(s):
        z = s + 1j * theta
        return 2.0 * np.real(np.exp(1j * tau * s) * _eta_complex_parts(p, x, z, deriv))

    val, _ = _trapezoid_converged(f, h0, S)
    return float(val * scale)


# ------------------------------------------------------------ Tricomi route

def _tricomi_real_order(p, v, x):
    """Kummer-transformed Tricomi form, real nu = v in [0, a].

    W = (2x^2)^{-a-v} Psi(a+v, 1+2v; 1/(2x^2))
      = 1/Gamma(a') int_0^inf e^{-u} u^{a'-1} (1 + 2x^2 u)^{v-a} du,  a' = a+v.
    """
    ap = p.a + v
    c = v - p.a
    if c == 0.0:
        return 1.0
    k = 2.0 * x * x
    s, w = _de_nodes()
    if ap < 0.5:
        kern = s ** (ap - 1.0) * np.exp(-s) * w / special.gamma(ap)
        return float(1.0 + np.expm1(c * np.log1p(k * s)) @ kern)
    logk = (ap - 1.0) * np.log(s) - s - special.gammaln(ap) + c * np.log1p(k * s)
    return float(np.exp(logk) @ w)


def _tricomi_imag_order(p, tau, x):
    """(2x^2)^{-a+nu} Psi(a-nu, 1-2nu; 1/(2x^2)) with nu = i tau, via mpmath."""
    dps = 30 + int(1.5 * tau)
    with mpmath.workdps(dps):
        nu = mpmath.mpc(0, tau)
        a = mpmath.mpf(p.a)
        z = 1 / (2 * mpmath.mpf(x) ** 2)
        val = (2 * mpmath.mpf(x) ** 2) ** (-a + nu) * mpmath.hyperu(a - nu, 1 - 2 * nu, z)
        return float(mpmath.re(val))


# ------------------------------------------------------- asymptotics/public

def bW_asymptotic_itau(p, tau, x):
    """Leading large-tau term of W_{alpha, i tau}(x)."""
    if not (tau > 0 and x > 0):
        raise DomainError("bW_asymptotic_itau requires tau > 0, x > 0")
    al = p.alpha
    amp = 2 ** al * x ** (2 * al - 1) * tau ** (al - 0.5) * math.exp(1 / (4 * x * x) - 0.5 * math.pi * tau)
    phase = tau * math.log(8 * tau * x * x) - tau - 0.5 * math.pi * p.a
    return amp * math.cos(phase)


def _bW_scalar(p, nu, x, route):
    if x == 0.0:
        return 1.0
    if nu.kind == "real":
        if nu.value == p.a:
            return 1.0
        if route == "laplace":
            return _laplace_real_order(p, nu.value, x)
        return _tricomi_real_order(p, nu.value, x)
    tau = nu.value
    if tau == 0.0:
        return bW_route(p, Order.real(0.0), x, route)
    if route == "laplace":
        return _laplace_imag_order(p, tau, x)
    if route == "tricomi":
        return _tricomi_imag_order(p, tau, x)
    if tau > 50:
        log.info("bW: tau=%g > 50, using the asymptotic formula (reduced accuracy)", tau)
        return bW_asymptotic_itau(p, tau, x)
    if x < 0.1:
        return _tricomi_imag_order(p, tau, x)
    return _laplace_imag_order(p, tau, x)


def bW_route(p, nu, x, route):
    return _bW_scalar(p, nu, float(x), route)


def bW(p, nu, x, route="auto"):
    """Kernel W_{alpha,nu}(x); ``x`` may be a scalar or an array.

    route: 'tricomi', 'laplace' or 'auto'.
    """
    route = route.lower()
    if route not in ("tricomi", "laplace", "auto"):
        raise DomainError(f"unknown route {route!r}")
    if not nu.in_strip(p):
        warnings.warn(f"order {nu} lies outside the strip |Re nu| <= {p.a:g}; |W| <= 1 does not apply",
                      RuntimeWarning, stacklevel=2)
    xa = np.asarray(x, dtype=float)
    if np.any(~(xa >= 0)):
        raise DomainError("bW requires x >= 0")
    if xa.ndim == 0:
        return _bW_scalar(p, nu, float(xa), route)
    return np.array([_bW_scalar(p, nu, float(xi), route) for xi in xa.ravel()]).reshape(xa.shape)


def bW_dx(p, nu, x, order=1):
    """First or second x-derivative of W_{alpha,nu}, differentiating under the Laplace integral."""
    if order not in (1, 2):
        raise DomainError("order must be 1 or 2")
    x = float(x)
    if not x > 0:
        raise DomainError("bW_dx requires x > 0 (the value at 0 is a limit, see bW_dx_limit_at_zero)")
    if nu.kind == "real" and nu.value == p.a:
        return 0.0
    if nu.kind == "imag" and nu.value > 0:
        return _laplace_imag_order(p, nu.value, x, deriv=order)
    v = nu.value if nu.kind == "real" else 0.0
    S = _cutoff_real(p, x, v) + 1.0
    h0 = min(0.25, 0.5 * x)

    def f(s):
        return 2.0 * np.cosh(v * s) * _eta_real_parts(p, x, s, order)

    val, _ = _trapezoid_converged(f, h0, S)
    return float(val)


def bW_dx_limit_at_zero(p, nu, order):
    """lim_{x->0} of the first (0) or second (-4 lambda) derivative."""
    if order == 1:
        return 0.0
    if order == 2:
        lam = nu.eigenvalue(p)
        return -8.0 * lam * special.gamma(1.5) / math.sqrt(math.pi)
    raise DomainError("only orders 1 and 2 are provided")


# ------------------------------------------------- bulk tables (spectral use)

def bW_imag_table(p, x, taus):
    """W_{alpha, i tau}(x) for many tau at one x.

    tau <= 2 uses a cosine transform of eta_x on the real line. Larger tau
    uses one shifted line Im s = theta shared by the whole batch, which keeps
    the relative accuracy near 1e-11 although W decays like e^{-pi tau/2}.
    The spectral integrals weight W by rho ~ e^{pi tau}, so relative accuracy
    is what they need.
    """
    taus = np.asarray(taus, dtype=float)
    out = np.empty_like(taus)
    if x == 0.0:
        out[:] = 1.0
        return out
    low = taus <= _TABLE_SWITCH
    if np.any(low):
        tl = taus[low]
        S = _cutoff_real(p, x, 0.0)
        h0 = min(0.25, 0.5 * x, 0.5 / max(float(tl.max()), 1e-300))

        def f(s):
            return 2.0 * np.cos(np.multiply.outer(s, tl)) * _eta_real(p, x, s)[:, None]

        out[low], _ = _trapezoid_converged(f, h0, S, tol=1e-14)
    if np.any(~low):
        th_taus = taus[~low]
        theta = _shift_angle(x, _TABLE_SWITCH)
        tmax = float(th_taus.max())
        need = _TAIL_LOG + abs(p.mu) * 20 + tmax * theta
        S = math.acosh((1.0 + 4.0 * x * x * need) / math.cos(theta))
        h0 = min(0.25, 0.5 * x, 0.5 / tmax)

        def g(s):
            eta = _eta_complex_parts(p, x, s + 1j * theta, 0)
            return 2.0 * np.real(np.exp(1j * np.multiply.outer(s, th_taus)) * eta[:, None])

        val, _ = _trapezoid_converged(g, h0, S, tol=1e-14)
        out[~low] = val * np.exp(-th_taus * theta)
    return out


_TABLE_SWITCH = 2.0


def bW_real_table(p, x, vs):
    """W_{alpha, v}(x) for many real v at one x (Tricomi integral, vectorised)."""
    vs = np.asarray(vs, dtype=float)
    return np.array([_tricomi_real_order(p, float(v), x) if x > 0 else 1.0 for v in vs])
