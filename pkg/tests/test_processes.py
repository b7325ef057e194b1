import math

import numpy as np
import pytest
from scipy import special, stats

from whitconv import (CostCapError, DiscreteMeasure, DomainError, Params, build_exponent, kernel_matrix,
                      martingale_check, quadratic_variation_check, random_walk, simulate_diffusion, simulate_levy,
                      transform_of_measure, transition_law)
from whitconv.moments import normalized_pair
from whitconv.processes import _log_panels, m_weight, path_rng, sample_transition, transition_density
from whitconv.verify import kernel_values_at

from conftest import ks_crit


def _mean_se(v):
    return float(np.mean(v)), float(np.std(v, ddof=1) / math.sqrt(len(v)))


def test_spectral_martingale_single_point(p0):
    lam, t, x = 1.0, 0.5, 1.0
    ens = simulate_diffusion(p0, x, [t], 10_000, seed=21)
    mean, se = _mean_se(kernel_values_at(p0, lam, ens.at(t)))
    target = math.exp(-t * lam) * float(kernel_matrix(p0, [x], [lam])[0, 0])
    assert abs(mean - target) <= 3 * se


def test_shiryaev_drift(p_any):
    # V = 2Y^2 has dV = (1 + kappa V) dt + ..., so E[V_{t+h} | V_t] = (V_t + 1/kappa) e^{kappa h} - 1/kappa
    kappa = 2 * (1 - p_any.alpha)
    t, h = 0.5, 0.1
    ens = simulate_diffusion(p_any, 0.8, [t, t + h], 10_000, seed=22)
    V0, V1 = 2 * ens.at(t) ** 2, 2 * ens.at(t + h) ** 2
    mean, se = _mean_se(V1 - (V0 + 1 / kappa) * math.exp(kappa * h) + 1 / kappa)
    assert abs(mean) <= 3 * se


def test_exact_and_euler_agree_in_law(p0):
    a = simulate_diffusion(p0, 1.0, [0.5], 10_000, seed=23).at(0.5)
    b = simulate_diffusion(p0, 1.0, [0.5], 10_000, seed=24, scheme="EulerFallback").at(0.5)
    assert stats.ks_2samp(a, b).statistic < ks_crit(10_000, 10_000)


def test_determinism_and_counter_streams(p0):
    a = simulate_diffusion(p0, 1.0, [0.25, 0.5], 50, seed=5)
    b = simulate_diffusion(p0, 1.0, [0.25, 0.5], 50, seed=5)
    assert np.array_equal(a.values, b.values)
    # path i does not depend on how many paths were requested
    c = simulate_diffusion(p0, 1.0, [0.25, 0.5], 20, seed=5)
    assert np.array_equal(a.values[:20], c.values)
    assert not np.array_equal(a.values, simulate_diffusion(p0, 1.0, [0.25, 0.5], 50, seed=6).values)
    assert path_rng(5, 3).random() == path_rng(5, 3).random()


def test_simulation_rejects_bad_input(p0):
    with pytest.raises(DomainError):
        simulate_diffusion(p0, -1.0, [1.0], 10, 0)
    with pytest.raises(DomainError):
        simulate_diffusion(p0, 1.0, [0.5, 0.2], 10, 0)
    with pytest.raises(CostCapError):
        simulate_diffusion(p0, 1.0, [1e4], 2, 0)


def test_restart_is_markov(p0):
    # continuing from the time-0.5 values gives the same law at t = 1 as one run
    full = simulate_diffusion(p0, 1.0, [0.5, 1.0], 8000, seed=31)
    mid = full.at(0.5)
    restarted = np.array([simulate_diffusion(p0, float(y), [0.5], 1, seed=32 + i).values[0, -1]
                          for i, y in enumerate(mid[:2000])])
    assert stats.ks_2samp(full.at(1.0)[2000:], restarted).statistic < ks_crit(6000, 2000)


def test_transition_density_spectral_identity(p0):
    t, x, lam = 0.4, 0.9, 2.0
    _, ys, ws = _log_panels(0.02, 60.0, 40)
    dens = transition_density(p0, t, x, ys)
    assert float(np.sum(dens * ys * ws)) == pytest.approx(1.0, abs=1e-5)
    val = float(np.sum(dens * ys * ws * kernel_matrix(p0, ys, [lam])[:, 0]))
    assert val == pytest.approx(math.exp(-t * lam) * float(kernel_matrix(p0, [x], [lam])[0, 0]), abs=1e-5)


def test_chapman_kolmogorov(p0):
    s, t, x, y = 0.3, 0.4, 1.0, 1.5
    _, zs, ws = _log_panels(0.02, 40.0, 40)
    first = transition_density(p0, s, x, zs)
    # p_{t,z}(y) m(z) = p_{t,y}(z) m(y): the generator is symmetric in L2(m)
    mz = m_weight(p0, zs)
    live = mz > 0  # where m underflows the first factor is exactly 0 too
    second = transition_density(p0, t, y, zs[live]) * m_weight(p0, y) / mz[live]
    lhs = float(np.sum((first * zs * ws)[live] * second))
    assert lhs == pytest.approx(transition_density(p0, s + t, x, y), rel=1e-3)


@pytest.mark.slow
def test_histogram_chi_square(p0):
    t, x, n = 0.5, 1.0, 100_000
    law = transition_law(p0, t, x)
    sample = simulate_diffusion(p0, x, [t], n, seed=41).at(t)
    edges = np.concatenate([[0.0], law.quantile(np.linspace(0.05, 0.95, 19)), [np.inf]])
    counts = np.histogram(sample, edges)[0]
    probs = np.diff(np.concatenate([[0.0], law.cdf(edges[1:-1]), [1.0]]))
    chi2 = float(np.sum((counts - n * probs) ** 2 / (n * probs)))
    assert chi2 < stats.chi2.ppf(0.99, len(counts) - 1)


def test_sample_transition_shape(p0):
    t, x = 0.5, 1.0
    law = transition_law(p0, t, x)
    u = np.array([1e-12, 1e-6, 0.1, 0.5, 0.9, 1 - 1e-9])
    y = sample_transition(p0, t, x, u, law=law)
    assert np.all(np.diff(y) > 0)
    assert y[0] < 0.2 * y[3]
    with pytest.raises(DomainError):
        sample_transition(p0, t, x, 0.0, law=law)
    mc = simulate_diffusion(p0, x, [t], 10_000, seed=42).at(t)
    med = np.median(mc)
    # binomial standard error of the median, through the density at the median
    f = transition_density(p0, t, x, y[3])
    se = 0.5 / math.sqrt(mc.size) / f
    assert abs(med - y[3]) <= 3 * se


def test_levy_gaussian_matches_diffusion(p0):
    psi = build_exponent(p0, 1.0)
    lev = simulate_levy(p0, psi, [0.25, 0.5], 10_000, seed=51).at(0.5)
    dif = simulate_diffusion(p0, 0.0, [0.5], 10_000, seed=52).at(0.5)
    assert stats.ks_2samp(lev, dif).statistic < ks_crit(10_000, 10_000)


def test_levy_spectral_martingale(p0):
    lam = 1.0
    psi = build_exponent(p0, 0.5, DiscreteMeasure.dirac(1.0, 1.0))
    ens = simulate_levy(p0, psi, [0.25, 0.5], 10_000, seed=53, x0=0.7)
    g = lambda x: kernel_values_at(p0, lam, x)
    rep = martingale_check(ens, g, lambda t: math.exp(t * float(psi(lam))), multiplicative=True)
    assert rep["pass"], rep["rows"]


def test_compound_poisson_chain_atom(p0):
    a, t, n = 1.5, 0.4, 10_000
    psi = build_exponent(p0, 0.0, DiscreteMeasure.dirac(1.0, a))
    X = simulate_levy(p0, psi, [t], n, seed=54, x0=0.8).at(t)
    stay = (X == 0.8).astype(float)
    mean, se = _mean_se(stay)
    assert abs(mean - math.exp(-a * t)) <= 3 * se


def test_walk_first_steps(p0):
    step = DiscreteMeasure([0.5, 1.5], [0.3, 0.7])
    ens = random_walk(p0, step, 2, 10_000, seed=61)
    S1 = ens.values[:, 1]
    assert set(np.unique(S1)) == {0.5, 1.5}
    mean, se = _mean_se(S1 == 1.5)
    assert abs(mean - 0.7) <= 3 * se
    v = kernel_values_at(p0, 1.0, ens.values[:, 2])
    mean, se = _mean_se(v)
    assert abs(mean - float(transform_of_measure(p0, step, 1.0)) ** 2) <= 3 * se
    with pytest.raises(DomainError):
        random_walk(p0, DiscreteMeasure([1.0], [0.5]), 2, 10, 0)


@pytest.mark.slow
def test_walk_law_of_large_numbers(p0):
    # alpha = 0: phi1 has the closed form e^w E1(w), w = 1/(2x^2), valid far out
    phi1 = lambda x: np.exp(0.5 / x ** 2) * special.exp1(0.5 / x ** 2)
    ens = random_walk(p0, DiscreteMeasure([0.5, 1.0], [0.5, 0.5]), 256, 400, seed=62)
    var = [float(np.var(phi1(ens.values[:, n]) / n)) for n in (16, 64, 256)]
    assert var[0] > var[1] > var[2]
    ratios = [var[0] / var[1], var[1] / var[2]]
    assert all(2.5 < r < 6.5 for r in ratios), ratios


def test_moment_martingales_short(p0):
    pair = normalized_pair(p0)
    ens = simulate_diffusion(p0, 0.0, [0.25, 1.0], 10_000, seed=71)
    m1 = martingale_check(ens, pair.phi1, lambda t, x: np.full_like(x, t))
    m2 = martingale_check(ens, pair.phi2, lambda t, x: 2 * t * pair.phi1(x) - t * t)
    assert m1["pass"] and m2["pass"]


def test_quadratic_variation_short_horizon_and_schemes(p0):
    pair = normalized_pair(p0)
    times = np.linspace(0, 0.01, 201)[1:]
    ens = simulate_diffusion(p0, 0.0, times, 1000, seed=81)
    rep = quadratic_variation_check(ens, pair.phi1, pair.dphi1)
    assert rep["mean_integral"] < 1e-3 and rep["mean_realised"] < 1e-3
    assert rep["pass"]
    times = np.linspace(0, 0.5, 201)[1:]
    gaps = []
    for scheme in ("ExactExpFunctional", "EulerFallback"):
        e = simulate_diffusion(p0, 0.0, times, 1000, seed=82, scheme=scheme)
        gaps.append(quadratic_variation_check(e, pair.phi1, pair.dphi1)["gap"])
    assert max(gaps) <= 0.05
    with pytest.warns(RuntimeWarning):
        coarse = simulate_diffusion(p0, 0.0, [0.5, 1.0], 50, seed=83)
        quadratic_variation_check(coarse, pair.phi1, pair.dphi1)
