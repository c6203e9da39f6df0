"""Reference computations that share no code path with the samplers.

They back the ``diagnose`` command and the test-suite.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import integrate, stats

from .ars import ArsSampler, ArsTarget, sample_truncated_beta


def log_zero_column_prob(b: float, alpha: float, N: int) -> float:
    """log P(N draws from Bernoulli(pi) are all 0), pi ~ beta(alpha b, alpha (1 - b)).

    Written as the finite product ``prod_i (alpha (1 - b) + i) / (alpha + i)``,
    which keeps full precision for tiny ``b``.
    """
    if b <= 0.0 or N == 0:
        return 0.0
    if b >= 1.0:
        return -math.inf
    i = np.arange(N)
    return float(np.sum(np.log1p(-alpha * b / (alpha + i))))


def finite_k_tail_log_prob(beta: float, alpha: float, N: int, tau0: float, K: int = 100_000) -> float:
    """log P(all K - 1 sticks below ``beta`` stay inactive) in the K-atom approximation.

    With K atoms each weight has density ``s b**(s - 1)`` (``s = tau0 / K``);
    conditioned to lie below ``beta`` an atom is active with probability
    ``s beta**-s int_0^beta b**(s - 1) (1 - q(b)) db``, ``q`` the zero-column
    probability.  The K - 1 atoms are independent.
    """
    s = tau0 / K

    def f(b):
        return b ** (s - 1.0) * -math.expm1(log_zero_column_prob(b, alpha, N))

    # the integrand is ~ b**s near zero; split the range so quad sees the curvature
    pts = [x for x in (1e-6, 1e-3, 0.1) if x < beta]
    edges = [0.0] + pts + [beta]
    total = sum(integrate.quad(f, lo, hi, epsabs=0.0, epsrel=1e-10, limit=400)[0]
                for lo, hi in zip(edges[:-1], edges[1:]))
    p_active = s * beta ** (-s) * total
    return (K - 1) * math.log1p(-p_active)


def mc_zero_column_prob(beta: float, alpha: float, N: int, n: int, rng) -> tuple[float, float]:
    """Monte Carlo estimate of E[(1 - pi)**N] and its standard error."""
    pi = rng.beta(alpha * beta, alpha * (1.0 - beta), size=n)
    x = (1.0 - pi) ** N
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(n))


def ars_ks_checks(rng, n: int = 10_000) -> dict:
    """Two-sample KS p-values of ARS (and the truncated-beta sampler) against inverse-CDF draws."""
    out = {}
    exp_t = ArsTarget(lambda x: -x, lambda x: -1.0, 0.0, math.inf)
    xs = ArsSampler(exp_t, [0.5, 2.0]).sample_many(rng, n)
    ref = stats.expon.ppf(rng.uniform(size=n))
    out["exp1"] = float(stats.ks_2samp(xs, ref).pvalue)

    b23 = ArsTarget(lambda x: math.log(x) + 2 * math.log1p(-x),
                    lambda x: 1 / x - 2 / (1 - x), 0.0, 1.0)
    xs = ArsSampler(b23, [0.1, 0.9]).sample_many(rng, n)
    ref = stats.beta(2, 3).ppf(rng.uniform(size=n))
    out["beta23"] = float(stats.ks_2samp(xs, ref).pvalue)

    tb = ArsTarget(lambda x: 2 * math.log(x) + math.log1p(-x),
                   lambda x: 2 / x - 1 / (1 - x), 0.2, 0.7)
    xs = ArsSampler(tb, [0.3, 0.6]).sample_many(rng, n)
    d = stats.beta(3, 2)
    lo, hi = d.cdf(0.2), d.cdf(0.7)
    ref = d.ppf(lo + (hi - lo) * rng.uniform(size=n))
    out["trunc_beta32"] = float(stats.ks_2samp(xs, ref).pvalue)
    xs = np.array([sample_truncated_beta(3.0, 2.0, 0.2, 0.7, rng) for _ in range(n)])
    out["trunc_beta32_icdf"] = float(stats.ks_2samp(xs, ref).pvalue)
    return out
