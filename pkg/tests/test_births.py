import math

import numpy as np
import pytest
from scipy import integrate, stats

from nhfa.births import GaussianBirth, PoissonBirth
from nhfa.rng import RngStream


def _quad_ratio(x, base, w, a, b):
    tot = 0.0
    for xi, mi in zip(x, base):
        f = lambda p: stats.poisson.pmf(xi, mi + w * p) * stats.gamma.pdf(p, a, scale=1 / b)
        v = integrate.quad(f, 0, np.inf, epsabs=0, epsrel=1e-12, limit=200)[0]
        tot += math.log(v / stats.poisson.pmf(xi, mi))
    return tot


@pytest.mark.parametrize("a,b,w", [(1.3, 0.7, 1.7), (0.5, 2.0, 0.2), (3.0, 1.0, 4.0)])
def test_poisson_ratio_matches_quadrature(a, b, w):
    x = np.array([0, 3, 1, 7, 0, 2.0])
    base = np.array([0.5, 1.2, 0.3, 2.0, 0.1, 0.9])
    lr, _ = PoissonBirth(a, b, RngStream(0)).log_ratio(x, w, base)
    assert lr == pytest.approx(_quad_ratio(x, base, w, a, b), rel=1e-9, abs=1e-10)


def test_poisson_ratio_zero_weight():
    assert PoissonBirth(1.0, 1.0, RngStream(0)).log_ratio(np.ones(3), 0.0, np.ones(3))[0] == 0.0


def test_gaussian_ratio_matches_normal_densities():
    r = np.array([0.5, -1.2, 2.0])
    w, vp, vn = 1.7, 0.8, 0.3
    lr, _ = GaussianBirth(vp, vn, RngStream(0)).log_ratio(None, w, r)
    ref = np.sum(stats.norm.logpdf(r, 0, math.sqrt(vn + w * w * vp)) - stats.norm.logpdf(r, 0, math.sqrt(vn)))
    assert lr == pytest.approx(ref, rel=1e-12)


def test_poisson_phi_posterior_mean():
    # a single cell: compare the sampled phi mean with the quadrature posterior mean
    x, base, w, a, b = np.array([4.0]), np.array([0.6]), 1.5, 1.2, 0.8
    bs = PoissonBirth(a, b, RngStream(1))
    _, seg = bs.log_ratio(x, w, base)
    draws = np.array([bs.draw_phi(1, x, w, base, seg)[0] for _ in range(20_000)])
    f = lambda p: stats.poisson.pmf(4, 0.6 + w * p) * stats.gamma.pdf(p, a, scale=1 / b)
    z = integrate.quad(f, 0, np.inf)[0]
    m = integrate.quad(lambda p: p * f(p), 0, np.inf)[0] / z
    assert abs(draws.mean() - m) < 4 * draws.std() / math.sqrt(draws.size)


def test_gaussian_phi_posterior():
    r, w, vp, vn = np.array([1.0, -2.0]), 2.0, 0.5, 0.25
    bs = GaussianBirth(vp, vn, RngStream(2))
    d = np.array([bs.draw_phi(1, None, w, r, None) for _ in range(20_000)])
    prec = 1 / vp + w * w / vn
    assert np.allclose(d.mean(axis=0), (w / vn) * r / prec, atol=4 / math.sqrt(prec * d.shape[0]))
    assert np.allclose(d.var(axis=0), 1 / prec, rtol=0.05)


def test_birth_frequency_matches_odds():
    # with u uniform the decision rate equals expit(prior_lo + lr)
    rng = RngStream(3)
    bs = GaussianBirth(1.0, 1.0, rng)
    r = np.array([0.3, 0.1])
    lr, _ = bs.log_ratio(None, 1.0, r)
    phi = np.zeros(2)
    n = 20_000
    hits = sum(bs(None, 1.0, r, -0.4, u, phi) for u in rng.uniform(size=n))
    p = 1 / (1 + math.exp(0.4 - lr))
    assert abs(hits / n - p) < 4 * math.sqrt(p * (1 - p) / n)
    assert bs.calls == n and bs.births == hits
