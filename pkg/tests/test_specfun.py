import math

import mpmath
import numpy as np
import pytest
from scipy import integrate

from whitconv import DomainError, Order, Params, bW, bW_dx, eta_kernel, parabolic_cylinder_D
from whitconv.specfun import (bW_asymptotic_itau, bW_dx_limit_at_zero, bW_route, gamma_complex,
                              upper_incomplete_gamma)


def test_params_rejects_alpha_at_or_above_half():
    for bad in (0.5, 0.6, float("nan")):
        with pytest.raises(DomainError):
            Params(bad)
    assert Params(-0.3).half_minus_alpha == pytest.approx(0.8)


def test_order_from_lambda_kinds():
    p = Params(0.0)
    lo = Order.from_lambda(p, 0.2)
    hi = Order.from_lambda(p, 1.25)
    assert lo.kind == "real" and lo.value == pytest.approx(math.sqrt(0.05))
    assert hi.kind == "imag" and hi.value == pytest.approx(1.0)


def test_gamma_values():
    assert gamma_complex(1) == pytest.approx(1.0)
    assert gamma_complex(0.5) == pytest.approx(math.sqrt(math.pi))
    g = gamma_complex(0.5 + 2j)
    assert abs(g) ** 2 == pytest.approx(math.pi / math.cosh(2 * math.pi), rel=1e-12)


def test_upper_incomplete_gamma():
    assert upper_incomplete_gamma(1, 2) == pytest.approx(math.exp(-2), rel=1e-14)
    assert upper_incomplete_gamma(2, 0) == pytest.approx(1.0)
    assert upper_incomplete_gamma(0, 1) == pytest.approx(float(mpmath.gammainc(0, 1)), rel=1e-12)
    assert upper_incomplete_gamma(-0.5, 0.7) == pytest.approx(float(mpmath.gammainc(-0.5, 0.7)), rel=1e-10)


def test_parabolic_cylinder():
    assert parabolic_cylinder_D(0, 1.5) == pytest.approx(math.exp(-0.5625), rel=1e-13)
    ref = math.exp(0.25) * math.sqrt(math.pi / 2) * math.erfc(1 / math.sqrt(2))
    assert parabolic_cylinder_D(-1, 1.0) == pytest.approx(ref, rel=1e-12)
    v = parabolic_cylinder_D(0.5, 2.0)
    assert v > 0
    assert v == pytest.approx(float(mpmath.pcfd(0.5, 2.0)), rel=1e-12)


def test_eta_even_normalised_positive():
    p = Params(0.0)
    assert eta_kernel(p, 1.0, 0.7) == pytest.approx(eta_kernel(p, 1.0, -0.7), rel=1e-15)
    val, _ = integrate.quad(lambda s: math.exp(0.5 * s) * eta_kernel(p, 1.0, s), -40, 40, limit=400,
                            epsabs=0, epsrel=1e-12)
    assert val == pytest.approx(1.0, abs=1e-10)
    assert eta_kernel(Params(0.25), 0.8, 1.0) > 0
    s = np.linspace(-20, 20, 401)
    assert np.all(eta_kernel(Params(-0.5), 0.3, s) >= 0)


def test_bW_special_values(p_any):
    a = p_any.a
    assert bW(p_any, Order.real(a), np.array([0.0, 0.3, 7.0])) == pytest.approx([1, 1, 1], abs=1e-15)
    for nu in (Order.real(0.5 * a), Order.imag(2.0)):
        assert bW(p_any, nu, 0.0) == 1.0


def test_bW_against_mpmath_tricomi():
    # W = (2x^2)^{-a-v} U(a+v, 1+2v, 1/(2x^2)), with mpmath as an outside oracle
    for al, v, x in ((0.0, 0.3, 0.7), (0.25, 0.1, 2.0), (-0.5, 0.0, 0.4)):
        p = Params(al)
        a = p.a
        with mpmath.workdps(30):
            z = 1 / (2 * mpmath.mpf(x) ** 2)
            ref = (2 * mpmath.mpf(x) ** 2) ** (-a - v) * mpmath.hyperu(a + v, 1 + 2 * v, z)
        assert bW(p, Order.real(v), x) == pytest.approx(float(ref), rel=1e-11)


def test_routes_agree_at_spec_point():
    p = Params(0.0)
    t = bW_route(p, Order.imag(1.0), 1.0, "tricomi")
    l = bW_route(p, Order.imag(1.0), 1.0, "laplace")
    assert abs(t - l) <= 1e-8 * abs(t)


def test_even_in_nu():
    p = Params(0.1)
    x = np.array([0.2, 1.0, 4.0])
    assert bW(p, Order.real(0.25), x, route="laplace") == pytest.approx(
        bW(p, Order.real(0.25), x, route="tricomi"), rel=1e-12)


def test_strip_bound_and_small_x_inequality(p_any):
    a = p_any.a
    xs = np.geomspace(1e-3, 10, 25)
    for nu in (Order.real(0.0), Order.real(0.5 * a), Order.imag(0.7), Order.imag(3.0)):
        w = bW(p_any, nu, xs)
        assert np.all(np.abs(w) <= 1 + 1e-10)
        bound = 2 * (a * a - nu.nu_squared) * xs ** 2
        assert np.all(1 - w >= -1e-12)
        assert np.all(1 - w <= bound + 1e-12)
    assert np.all(np.abs(bW(p_any, Order.imag(1.5), np.linspace(0, 100, 11))) <= 1 + 1e-10)


def test_derivatives():
    p = Params(0.0)
    nu = Order.from_lambda(p, 1.0)
    x, h = 0.5, 1e-4
    f = lambda z: bW(p, nu, z)
    d1 = lambda hh: (f(x + hh) - f(x - hh)) / (2 * hh)
    fd = (4 * d1(h / 2) - d1(h)) / 3
    assert bW_dx(p, nu, x) == pytest.approx(fd, abs=1e-5)
    d2 = lambda hh: (f(x + hh) - 2 * f(x) + f(x - hh)) / hh ** 2
    fd2 = (4 * d2(1e-3) - d2(2e-3)) / 3
    assert bW_dx(p, nu, x, order=2) == pytest.approx(fd2, abs=1e-5)
    assert bW_dx(p, Order.real(p.a), 0.7) == 0.0
    assert bW_dx_limit_at_zero(p, nu, 1) == 0.0
    assert abs(bW_dx(p, nu, 1e-2)) < 1e-1


def test_asymptotic_formula():
    p = Params(0.0)
    direct = bW(p, Order.imag(20.0), 1.0)
    approx = bW_asymptotic_itau(p, 20.0, 1.0)
    assert abs(approx - direct) <= 0.1 * abs(direct)
    assert np.sign(bW_asymptotic_itau(p, 25.0, 1.0)) == np.sign(bW(p, Order.imag(25.0), 1.0))
    # amplitude ratio tau^{alpha-1/2} e^{-pi tau/2} between tau = 20 and 40
    env = lambda t: t ** (-0.5) * math.exp(-0.5 * math.pi * t)
    amp = lambda t: max(abs(bW(p, Order.imag(t + d), 1.0)) for d in np.linspace(0, 1, 21))
    ratio = (amp(40.0) / env(40.0)) / (amp(20.0) / env(20.0))
    assert 0.5 < ratio < 2.0


def test_bad_inputs():
    p = Params(0.0)
    with pytest.raises(DomainError):
        bW(p, Order.real(0.2), -1.0)
    with pytest.raises(DomainError):
        bW(p, Order.real(0.2), 1.0, route="series")
    with pytest.warns(RuntimeWarning):
        bW(p, Order.real(0.9), 1.0)
