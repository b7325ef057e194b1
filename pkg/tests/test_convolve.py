import math

import numpy as np
import pytest

from whitconv import (BumpFunction, CostCapError, DiscreteMeasure, DomainError, GrowthEnvelope, Params,
                      conv_cdf, convolve_measures, convolve_point_masses, kernel_mass, kernel_matrix, oplus_sample,
                      q_kernel, transform_of_measure, translate)
from whitconv.convolve import kernel_upper_bound, product_formula_rhs, translate_symmetry_check
from whitconv.spectral import log_trapezoid_weights


def test_q_symmetric_and_positive(p_any):
    x, y, z = 0.7, 1.3, 2.1
    vals = [q_kernel(p_any, *perm) for perm in ((x, y, z), (y, x, z), (z, y, x), (x, z, y))]
    assert vals[0] > 0
    assert vals == pytest.approx([vals[0]] * 4, rel=1e-12)


def test_kernel_mass_is_one(p_any):
    g = np.geomspace(0.2, 5, 4)
    X, Y = np.meshgrid(g, g)
    assert np.max(np.abs(kernel_mass(p_any, X.ravel(), Y.ravel()) - 1)) < 1e-9


def test_kernel_below_upper_bound(p_any):
    x = np.geomspace(0.1, 8, 9)[:, None, None]
    y = np.geomspace(0.1, 8, 7)[None, :, None]
    xi = np.geomspace(0.1, 12, 11)[None, None, :]
    assert np.all(q_kernel(p_any, x, y, xi) <= kernel_upper_bound(p_any, x, y, xi) * (1 + 1e-9))
    with pytest.raises(DomainError):
        kernel_upper_bound(p_any, 1.0, 11.0, 1.0)


def test_product_formula(p_any):
    lams = np.array([0.0, p_any.a ** 2 + 0.5, 2.0])
    for x, y in ((0.5, 0.9), (1.2, 3.0)):
        lhs = kernel_matrix(p_any, [x], lams)[0] * kernel_matrix(p_any, [y], lams)[0]
        assert np.max(np.abs(product_formula_rhs(p_any, lams, x, y, panels=24) - lhs)) < 1e-8


def test_translate_constant_and_zero_conventions(p0):
    one = lambda xi: np.ones_like(xi)
    assert translate(p0, one, 1.5, np.array([0.3, 1.0, 4.0])) == pytest.approx(np.ones(3), abs=1e-10)
    f = BumpFunction(1.0, 0.5)
    assert translate(p0, f, 0.0, 1.1) == f(1.1)
    assert translate(p0, f, 1.1, 0.0) == f(1.1)
    with pytest.raises(DomainError):
        translate(p0, f, -1.0, 1.0)


def test_translate_small_shift_approaches_f(p0):
    f = BumpFunction(1.0, 0.5)
    x = 1.1
    errs = [abs(translate(p0, f, y, x) - f(x)) for y in (0.1, 0.03, 0.01)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-3


def test_translate_symmetry(p0):
    f = BumpFunction(1.0, 0.5)
    g = BumpFunction(1.8, 0.6)
    rep = translate_symmetry_check(p0, f, g, 0.8, f.support, g.support)
    assert rep["pass"], rep


def test_translations_commute(p0):
    f = BumpFunction(1.4, 0.5)
    x = np.array([0.9, 1.6])
    a = translate(p0, lambda xi: translate(p0, f, 0.5, xi, check_envelope=False), 0.9, x, check_envelope=False)
    b = translate(p0, lambda xi: translate(p0, f, 0.9, xi, check_envelope=False), 0.5, x, check_envelope=False)
    assert a == pytest.approx(b, abs=1e-8)


def test_growth_envelope_warning(p0):
    env = GrowthEnvelope(1.0, 0.0, 0.0)
    big = lambda xi: np.exp(1.0 / xi ** 2)
    assert env.check(big, np.geomspace(0.1, 1, 5)).size > 0
    with pytest.warns(RuntimeWarning):
        translate(p0, lambda xi: np.exp(2 * xi), 0.5, 1.0)
    with pytest.raises(DomainError):
        GrowthEnvelope(1.0, 1.0, 2.0)


def test_point_masses_identity_and_mass(p0):
    assert convolve_point_masses(p0, 0.0, 2.0).atoms.locations.tolist() == [2.0]
    assert convolve_point_masses(p0, 0.0, 0.0).atom_at_zero == 1.0
    gd = convolve_point_masses(p0, 1.0, 1.5)
    assert gd.mass(p0) == pytest.approx(1.0, abs=1e-4)
    assert conv_cdf(p0, 1.0, 1.5, 1e6) == pytest.approx(1.0, abs=1e-12)
    assert conv_cdf(p0, 1.0, 1.5, 1e-3) == 0.0


def test_convolution_transform_multiplies(p0):
    mu = DiscreteMeasure([0.0, 0.7, 1.6], [0.2, 0.3, 0.5])
    nu = DiscreteMeasure([0.5, 2.2], [0.5, 0.5])
    conv = convolve_measures(p0, mu, nu)
    assert conv.atom_at_zero == 0.0
    assert conv.atoms.locations.tolist() == [0.5, 2.2]
    lams = np.array([0.1, 1.0, 2.5])
    lhs = transform_of_measure(p0, conv, lams)
    rhs = transform_of_measure(p0, mu, lams) * transform_of_measure(p0, nu, lams)
    assert np.max(np.abs(lhs - rhs)) < 1e-4


def test_convolution_associative(p0):
    d = DiscreteMeasure.dirac
    left = convolve_measures(p0, convolve_point_masses(p0, 0.8, 1.2), d(1.5))
    right = convolve_measures(p0, d(0.8), convolve_point_masses(p0, 1.2, 1.5))
    for z in (1.5, 2.2, 3.0):
        assert left.cdf(p0, z) == pytest.approx(right.cdf(p0, z), abs=2e-4)


def test_pair_cap():
    mu = DiscreteMeasure(np.linspace(0.5, 2, 600), np.full(600, 1 / 600))
    with pytest.raises(CostCapError):
        convolve_measures(Params(0.0), mu, mu)


def test_oplus_identity_median_and_monotone(p0):
    u = np.array([0.1, 0.5, 0.9])
    assert oplus_sample(p0, 1.3, 0.0, u) == pytest.approx([1.3] * 3)
    s = oplus_sample(p0, 1.0, 1.5, u)
    assert np.all(np.diff(s) > 0)
    assert conv_cdf(p0, 1.0, 1.5, s[1]) == pytest.approx(0.5, abs=1e-7)
    assert oplus_sample(p0, 1.5, 1.0, u) == pytest.approx(s, rel=1e-9)
    with pytest.raises(DomainError):
        oplus_sample(p0, 1.0, 1.0, 1.0)


def test_oplus_law_matches_density(p0):
    # histogram mass of sampled points against the quadrature CDF
    rng = np.random.default_rng(4)
    n = 4000
    s = oplus_sample(p0, np.full(n, 0.9), np.full(n, 1.1), rng.random(n))
    z = np.array([1.0, 1.5, 2.0, 3.0])
    emp = np.array([np.mean(s <= zz) for zz in z])
    ref = np.array([conv_cdf(p0, 0.9, 1.1, zz) for zz in z])
    se = np.sqrt(ref * (1 - ref) / n) + 1e-12
    assert np.all(np.abs(emp - ref) <= 4 * se)


def test_log_trapezoid_weights_integrate_x():
    g = np.geomspace(0.5, 2.0, 200)
    w = log_trapezoid_weights(g)
    assert np.sum(w * g) == pytest.approx(0.5 * (4 - 0.25), rel=1e-4)
    assert math.isfinite(np.sum(w))
