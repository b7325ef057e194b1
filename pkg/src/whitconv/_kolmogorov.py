"""Finite-difference backward equation for Z = Y^2 of the index Whittaker diffusion.

u(t, z) = E_z[g(Z_t)] solves u_t = (1/2 + 2(1-alpha) z) u_z + z^2 u_zz.
Used where the spectral route is hopeless (very small t) and as a check on
it that shares no code with the transform machinery.
"""

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_banded

from .errors import DomainError


def _grid(zmax, n, stretch):
    s = np.linspace(0.0, 1.0, n + 1)
    return zmax * np.expm1(stretch * s) / np.expm1(stretch)


def _operator(p, z, b):
    """Tridiagonal (lower, diag, upper) of the generator on a nonuniform grid."""
    n = z.size
    lo = np.zeros(n)
    di = np.zeros(n)
    up = np.zeros(n)
    hm = z[1:-1] - z[:-2]
    hp = z[2:] - z[1:-1]
    drift = b * (0.5 + 2.0 * (1.0 - p.alpha) * z[1:-1])
    diff = b * z[1:-1] ** 2
    # second-order three-point formulas on an uneven mesh
    lo[1:-1] = -drift * hp / (hm * (hm + hp)) + 2.0 * diff / (hm * (hm + hp))
    di[1:-1] = drift * (hp - hm) / (hm * hp) - 2.0 * diff / (hm * hp)
    up[1:-1] = drift * hm / (hp * (hm + hp)) + 2.0 * diff / (hp * (hm + hp))
    # z = 0 is an entrance point: u_t = (b/2) u_z there, one-sided second order
    h1, h2 = z[1] - z[0], z[2] - z[0]
    c0 = -(h1 + h2) / (h1 * h2)
    c1 = h2 / (h1 * (h2 - h1))
    c2 = -h1 / (h2 * (h2 - h1))
    return lo, di, up, 0.5 * b * np.array([c0, c1, c2])


def backward_solve(p, g, t, b=1.0, zmax=None, n=2000, steps=400, stretch=None):
    """Grid z and u(t, z) = E_z[g(Z_{b t})], with g given as a function of z.

    Crank-Nicolson after four implicit Euler start-up steps (Rannacher), so
    discontinuous data such as indicators do not ring. The far boundary keeps
    its initial value.
    """
    if t < 0 or b < 0:
        raise DomainError("t and b must be >= 0")
    if zmax is None:
        zmax = 400.0
    if stretch is None:
        stretch = 8.0
    z = _grid(zmax, n, stretch)
    u = np.asarray(g(z), dtype=float).copy()
    if t == 0 or b == 0:
        return z, u
    lo, di, up, bc = _operator(p, z, b)
    dt = t / steps

    def matvec(v):
        out = di * v
        out[1:] += lo[1:] * v[:-1]
        out[:-1] += up[:-1] * v[1:]
        out[0] = bc[0] * v[0] + bc[1] * v[1] + bc[2] * v[2]
        out[-1] = 0.0
        return out

    def solve(theta, rhs, k):
        # (I - theta k A) u_new = rhs; first row has three entries, fold z[2] out
        ab = np.zeros((3, z.size))
        ab[0, 1:] = -theta * k * up[:-1]
        ab[1] = 1.0 - theta * k * di
        ab[2, :-1] = -theta * k * lo[1:]
        ab[1, 0] = 1.0 - theta * k * bc[0]
        ab[0, 1] = -theta * k * bc[1]
        ab[1, -1] = 1.0
        ab[2, -2] = 0.0
        r = rhs.copy()
        # eliminate the z[2] coupling of row 0 using row 1
        c = -theta * k * bc[2]
        if c != 0.0:
            f = c / ab[0, 2]  # row 1 entry on column 2
            ab[1, 0] -= f * ab[2, 0]
            ab[0, 1] -= f * ab[1, 1]
            r[0] -= f * r[1]
        return solve_banded((1, 1), ab, r)

    half = dt / 2.0
    for _ in range(4):
        u = solve(1.0, u, half)
    for _ in range(steps - 2):
        rhs = u + 0.5 * dt * matvec(u)
        rhs[-1] = u[-1]
        u = solve(0.5, rhs, dt)
    return z, u


def backward_value(p, g, t, z0, b=1.0, zmax=None, n=2000, steps=400, richardson=True, stretch=None):
    """u(t, z0) by backward_solve, with one Richardson step in (n, steps)."""
    z1, u1 = backward_solve(p, g, t, b, zmax, n, steps, stretch)
    v1 = CubicSpline(z1, u1)(z0)
    if not richardson:
        return v1
    z2, u2 = backward_solve(p, g, t, b, zmax, 2 * n, 2 * steps, stretch)
    v2 = CubicSpline(z2, u2)(z0)
    return (4.0 * v2 - v1) / 3.0
