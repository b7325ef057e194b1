"""Fixed quadrature rules shared by the special-function and transform code."""

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def exp_sinh_rule(t_lo=-9.5, t_hi=3.4, h=1.0 / 24):
    """Nodes and weights for integrals over (0, inf).

    Substitution s = exp(pi/2 * sinh(t)) with the trapezoid rule in t. It copes
    with integrable power singularities at 0 and exponential decay at infinity.
    """
    t = np.arange(t_lo, t_hi + h / 2, h)
    u = 0.5 * np.pi * np.sinh(t)
    s = np.exp(u)
    w = h * 0.5 * np.pi * np.cosh(t) * s
    s.setflags(write=False)
    w.setflags(write=False)
    return s, w


@lru_cache(maxsize=None)
def gauss_legendre(n):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def panel_rule(edges, n=16):
    """Composite Gauss-Legendre nodes/weights on consecutive panels."""
    edges = np.asarray(edges, dtype=float)
    x0, w0 = gauss_legendre(n)
    a = edges[:-1, None]
    b = edges[1:, None]
    nodes = 0.5 * (b - a) * x0[None, :] + 0.5 * (b + a)
    weights = 0.5 * (b - a) * w0[None, :]
    return nodes.ravel(), weights.ravel()


def pairwise_sum(values):
    """Deterministic pairwise reduction along the first axis."""
    v = np.asarray(values, dtype=float)
    while v.shape[0] > 1:
        if v.shape[0] % 2:
            v = np.concatenate([v[:-1:2] + v[1::2], v[-1:]])
        else:
            v = v[0::2] + v[1::2]
    return v[0]


def legendre_rows(coef, s):
    """sum_k coef[i, k] P_k(s[i]) for each row i (forward recurrence, |s| <= 1)."""
    n = coef.shape[1]
    p0 = np.ones_like(s)
    out = coef[:, 0] * p0
    if n == 1:
        return out
    p1 = s.copy()
    out = out + coef[:, 1] * p1
    for k in range(1, n - 1):
        p0, p1 = p1, ((2 * k + 1) * s * p1 - k * p0) / (k + 1)
        out = out + coef[:, k + 1] * p1
    return out


class PanelPoly:
    """Piecewise Legendre interpolant through Gauss-node values, with its antiderivative.

    ``vals`` has shape (panels, n) and holds the function at the n-point Gauss
    nodes of each panel in ``edges``.
    """

    def __init__(self, edges, vals):
        self.edges = np.asarray(edges, dtype=float)
        P = self.edges.size - 1
        vals = np.asarray(vals, dtype=float).reshape(P, -1)
        n = vals.shape[1]
        g0, _ = gauss_legendre(n)
        V = np.polynomial.legendre.legvander(g0, n - 1)
        self.coef = np.linalg.solve(V, vals.T).T
        half = 0.5 * np.diff(self.edges)
        self.anti = np.array([np.polynomial.legendre.legint(c, lbnd=-1) for c in self.coef]) * half[:, None]
        mass = self.anti @ np.ones(self.anti.shape[1])  # P_k(1) = 1
        self.cum = np.concatenate([[0.0], np.cumsum(mass)])

    def _locate(self, u):
        u = np.clip(np.asarray(u, dtype=float), self.edges[0], self.edges[-1])
        j = np.clip(np.searchsorted(self.edges, u, side="right") - 1, 0, self.edges.size - 2)
        a, b = self.edges[j], self.edges[j + 1]
        return j, (2.0 * u - a - b) / (b - a)

    def value(self, u):
        shape = np.shape(u)
        j, s = self._locate(np.ravel(u))
        return legendre_rows(self.coef[j], s).reshape(shape)

    def integral(self, u):
        """Integral from edges[0] to u."""
        shape = np.shape(u)
        j, s = self._locate(np.ravel(u))
        return (self.cum[j] + legendre_rows(self.anti[j], s)).reshape(shape)
