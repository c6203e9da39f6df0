"""Restricted hierarchical beta process: stick state, assignment matrices and
their conditional updates.

Sticks are kept in decreasing order ``beta[0] >= beta[1] >= ... > 0``.  The
last represented stick (index ``K - 1``, i.e. K-dagger in 1-based terms) is
always inactive; every stick beyond it is integrated out.  Source-level
weights ``pi_jk`` are never stored.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammaln, logsumexp

from .ars import ArsSampler, ArsTarget, sample_truncated_beta
from .special import log_beta_draw, sample_discrete_log, stirling_table, table_count_log_pmf

BETA_CLAMP = 1.0 - 1e-12
MAX_EXTENSION = 10_000


class ExtensionError(RuntimeError):
    """Stick extension ran away, which means the slice variable underflowed."""


@dataclass
class StickState:
    betas: np.ndarray
    tau0: float = 1.0
    rho: float = 1.0

    def __post_init__(self):
        self.betas = np.asarray(self.betas, dtype=float)
        if self.tau0 <= 0:
            raise ValueError("tau0 must be positive")

    @property
    def k_dagger(self) -> int:
        """1-based index of the represented inactive stick."""
        return len(self.betas)

    def check(self):
        b = self.betas
        if b.size == 0 or np.any(b <= 0) or np.any(b > 1):
            raise AssertionError("stick weights must lie in (0, 1]")
        if np.any(np.diff(b) > 1e-12):
            raise AssertionError("stick weights must be non-increasing")


class Assignments:
    """Binary matrices ``Z_j`` (``N_j x K``) with cached column counts."""

    def __init__(self, Z: list[np.ndarray]):
        self.Z = [np.ascontiguousarray(z, dtype=np.int8) for z in Z]
        if len({z.shape[1] for z in self.Z}) > 1:
            raise ValueError("all Z_j must have the same number of columns")
        self.recount()

    @classmethod
    def empty(cls, sizes, K: int) -> "Assignments":
        return cls([np.zeros((n, K), dtype=np.int8) for n in sizes])

    @property
    def J(self) -> int:
        return len(self.Z)

    @property
    def K(self) -> int:
        return self.Z[0].shape[1] if self.Z else 0

    @property
    def sizes(self) -> np.ndarray:
        return np.array([z.shape[0] for z in self.Z], dtype=np.int64)

    def recount(self):
        self.n = [z.sum(axis=0, dtype=np.int64) for z in self.Z]
        self.totals = np.sum(self.n, axis=0) if self.n else np.zeros(0, np.int64)

    def nbar(self, j: int) -> np.ndarray:
        return self.Z[j].shape[0] - self.n[j]

    def active(self) -> np.ndarray:
        return self.totals > 0

    def add_columns(self, count: int):
        self.Z = [np.ascontiguousarray(np.hstack([z, np.zeros((z.shape[0], count), np.int8)])) for z in self.Z]
        self.recount()

    def keep_columns(self, K: int):
        self.Z = [np.ascontiguousarray(z[:, :K]) for z in self.Z]
        self.recount()

    def check(self):
        for z, n in zip(self.Z, self.n):
            if not np.array_equal(z.sum(axis=0), n):
                raise AssertionError("cached column counts are stale")
        if self.K and self.totals[-1] != 0:
            raise AssertionError("the last represented column must be inactive")


# --- slice variable -------------------------------------------------------

def beta_star(betas, active_mask) -> float:
    """Stick weight of the smallest active feature; 1.0 if nothing is active."""
    active_mask = np.asarray(active_mask, dtype=bool)
    if not active_mask.any():
        return 1.0
    return float(np.min(np.asarray(betas)[active_mask]))


def sample_slice(bstar: float, rng) -> float:
    """rho ~ Uniform(0, bstar], never exactly zero."""
    return float((1.0 - rng.uniform()) * bstar)


# --- stick-breaking prior --------------------------------------------------

def stick_log_density(beta_k: float, prev: float, tau0: float) -> float:
    """log p(beta_k | beta_{k-1} = prev) for the ordered stick-breaking chain."""
    if not 0.0 < beta_k <= prev:
        return -math.inf
    return math.log(tau0) - tau0 * math.log(prev) + (tau0 - 1.0) * math.log(beta_k)


def stick_prior_sample(prev: float, tau0: float, rng) -> tuple[float, float]:
    """Draw ``beta_k = prev * v`` with ``v ~ beta(tau0, 1)``; return it with its log-density."""
    b = prev * rng.beta(tau0, 1.0)
    return b, stick_log_density(b, prev, tau0)


# --- column marginals and the infinite tail ---------------------------------

def marginal_inactive_col_log_prob(beta_k: float, alpha: float, N: int) -> float:
    """log p(all N entries of a column are zero | beta_k), with pi integrated out."""
    if N == 0 or beta_k <= 0.0:
        return 0.0
    bbar = 1.0 - min(beta_k, BETA_CLAMP)
    return float(gammaln(alpha) + gammaln(alpha * bbar + N) - gammaln(alpha * bbar) - gammaln(alpha + N))


def column_log_marginal(n: int, N: int, beta_k: float, alpha: float) -> float:
    """log probability of one specific binary column with ``n`` ones out of ``N``."""
    b = min(max(beta_k, 1e-300), BETA_CLAMP)
    ab, abb = alpha * b, alpha * (1.0 - b)
    return float(gammaln(alpha) - gammaln(alpha + N) + gammaln(ab + n) - gammaln(ab)
                 + gammaln(abb + N - n) - gammaln(abb))


def _tail_terms(bbar: float, umax: int) -> np.ndarray:
    """``T_u - H_u`` for ``u = 0..umax``, written as sum_p expm1(p log bbar) / p."""
    p = np.arange(1, umax + 1, dtype=float)
    lb = math.log(bbar) if bbar > 0 else -math.inf
    terms = np.expm1(p * lb) / p
    return np.concatenate([[0.0], np.cumsum(terms)])


def tail_inactive_log_prob(beta_k: float, alpha: float, N: int, tau0: float) -> float:
    """log p(source's columns beyond k are all zero | beta_k) in the infinite limit.

    Equals ``tau0 * sum_u w_u (T_u - H_u)`` with ``w_u`` proportional to
    ``c(N, u) alpha**u`` and ``T_u``, ``H_u`` evaluated at ``1 - beta_k``.
    """
    if tau0 == 0 or N == 0:
        return 0.0
    w = np.exp(table_count_log_pmf(N, alpha))
    return float(tau0 * np.dot(w, _tail_terms(1.0 - beta_k, N)))


def table_count_pmf(alphas, sizes) -> np.ndarray:
    """pmf of the total table count over independent sources (a convolution)."""
    pmf = np.ones(1)
    for a, n in zip(alphas, sizes):
        if n > 0:
            pmf = np.convolve(pmf, np.exp(table_count_log_pmf(int(n), float(a))))
    return pmf


class InactiveTail:
    """Joint zero-column quantities for all sources at fixed ``alpha``.

    For a stick of weight ``x`` the probability that its column is zero in
    every source is ``Q(x) = E[(1 - x)**U]`` where ``U`` is the total table
    count; the probability that every stick below ``x`` is inactive is
    ``exp(-tau0 * G(x))`` with ``G(x) = int_0^x (1 - Q(b)) / b db``.
    """

    def __init__(self, alphas, sizes, tau0: float):
        self.tau0 = float(tau0)
        self.pmf = table_count_pmf(alphas, sizes)
        self.umax = len(self.pmf) - 1
        # survival P(U >= p) for p = 1..umax
        self.surv = (np.cumsum(self.pmf[::-1])[::-1])[1:] if self.umax > 0 else np.zeros(0)
        self._p = np.arange(1, self.umax + 1, dtype=float)

    def G(self, x: float) -> float:
        if self.umax == 0 or x <= 0:
            return 0.0
        lb = math.log1p(-min(x, 1.0)) if x < 1.0 else -math.inf
        return float(np.dot(self.surv, -np.expm1(self._p * lb) / self._p))

    def log_Q(self, x: float) -> float:
        if self.umax == 0:
            return 0.0
        bbar = 1.0 - min(x, BETA_CLAMP)
        with np.errstate(divide="ignore"):
            lp = np.log(self.pmf)
        return float(logsumexp(lp + np.arange(self.umax + 1) * math.log(bbar)))

    def log_tail(self, x: float) -> float:
        return -self.tau0 * self.G(x)

    def log_density(self, x: float, prev: float) -> float:
        """Unnormalized log-density of an inactive stick given its predecessor."""
        if not 0 < x <= prev:
            return -math.inf
        return (self.tau0 - 1.0) * math.log(x) + self.log_Q(x) + self.log_tail(x)

    def draw(self, prev: float, rng) -> float:
        """Exact draw of the next inactive stick below ``prev``.

        The inactive sticks below ``prev`` form a Poisson process with
        intensity ``tau0 Q(b) / b``; the next stick is its largest point, so
        ``P(beta < x) = exp(-tau0 * (log(prev / x) - G(prev) + G(x)))``.
        """
        e = rng.exponential()
        gp = self.G(prev)
        lp = math.log(prev)
        tau = self.tau0

        def f(y):
            return tau * (lp - y + self.G(math.exp(y)) - gp) - e

        y_lo = lp - gp - e / tau - 1.0
        while f(y_lo) <= 0:
            y_lo -= 10.0
        if f(lp) >= 0:
            return prev
        y = brentq(f, y_lo, lp, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
        return float(min(max(math.exp(y), 1e-300), prev))


def joint_tail_log_prob(beta_k: float, alphas, sizes, tau0: float) -> float:
    """log p(every source's columns beyond k are zero | beta_k) for J sources jointly."""
    return InactiveTail(alphas, sizes, tau0).log_tail(beta_k)


# --- single Z entry ---------------------------------------------------------------

def z_entry_log_odds(n_minus: int, N: int, alpha: float, beta_k: float, bstar1: float, bstar0: float,
                     ll1: float, ll0: float) -> float:
    """log P(z = 1) - log P(z = 0) for one entry given the rest of its column.

    ``bstar1`` / ``bstar0`` are the smallest active stick weights with the entry
    set to 1 / 0 and ``ll1`` / ``ll0`` the row log-likelihoods.  The compiled
    sweeps implement the same conditional; this scalar form is the reference.
    """
    bbar = 1.0 - min(beta_k, BETA_CLAMP)
    if ll1 == -math.inf:
        return -math.inf
    return (math.log(n_minus + alpha * beta_k) - math.log(bstar1) + ll1
            - math.log(N - 1 - n_minus + alpha * bbar) + math.log(bstar0) - ll0)


def sample_z_entry(n_minus, N, alpha, beta_k, bstar1, bstar0, ll1, ll0, rng) -> int:
    lo = z_entry_log_odds(n_minus, N, alpha, beta_k, bstar1, bstar0, ll1, ll0)
    if lo == -math.inf:
        return 0
    return int(rng.uniform() < 1.0 / (1.0 + math.exp(-lo)) if lo > -700 else 0)


# --- auxiliary integers -------------------------------------------------------

def _stirling_aux(n: int, theta: float, rng) -> int:
    if n == 0:
        return 0
    if theta <= 0:
        return 1  # lowest surviving power as theta -> 0+
    tab = stirling_table(n)
    lw = tab.row(n) + np.arange(n + 1) * math.log(theta)
    return sample_discrete_log(lw, rng)


def sample_v(alpha: float, beta_k: float, N: int, rng) -> int:
    """Auxiliary table count for a zero column: weights c(N, v) (alpha (1 - beta))**v."""
    return _stirling_aux(N, alpha * (1.0 - min(beta_k, BETA_CLAMP)), rng)


def sample_m(n: int, alpha: float, beta_k: float, rng) -> int:
    return _stirling_aux(n, alpha * beta_k, rng)


def sample_l(nbar: int, alpha: float, beta_k: float, rng) -> int:
    return _stirling_aux(nbar, alpha * (1.0 - min(beta_k, BETA_CLAMP)), rng)


def sample_ml(assign: Assignments, betas, alphas, rng) -> tuple[np.ndarray, np.ndarray]:
    """m and l auxiliaries for every source and represented column."""
    J, K = assign.J, assign.K
    m = np.zeros((J, K), dtype=np.int64)
    l = np.zeros((J, K), dtype=np.int64)
    for j in range(J):
        nbar = assign.nbar(j)
        for k in range(K):
            m[j, k] = sample_m(int(assign.n[j][k]), alphas[j], betas[k], rng)
            l[j, k] = sample_l(int(nbar[k]), alphas[j], betas[k], rng)
    return m, l


# --- stick updates ------------------------------------------------------------

def sample_new_stick(prev_beta: float, v, sources, tau0: float, rng, x_current: float | None = None) -> float:
    """Draw a stick below ``prev_beta`` given zero-column auxiliaries ``v``.

    Target density on ``(0, prev_beta]``::

        beta**(tau0 - 1) (1 - beta)**sum(v) exp(tau0 * sum_u w_u T_u(1 - beta))

    where ``w_u`` is the total-table pmf over ``sources = [(alpha_j, N_j), ...]``
    (for a single source this is the per-source weight).  Sampled by ARS; a
    non-concave target falls back to a slice step from ``x_current``.
    """
    if prev_beta <= np.finfo(float).eps:
        return prev_beta
    vsum = float(np.sum(v)) if len(v) else 0.0
    alphas = [a for a, _ in sources]
    sizes = [n for _, n in sources]
    pmf = table_count_pmf(alphas, sizes)
    umax = len(pmf) - 1
    surv = np.cumsum(pmf[::-1])[::-1][1:] if umax > 0 else np.zeros(0)
    p = np.arange(1, umax + 1, dtype=float)

    # sum_u w_u T_u(bbar) = sum_p P(U >= p) bbar**p / p, and its derivative
    def h(x):
        bbar = 1.0 - x
        t = float(np.dot(surv, bbar ** p / p)) if umax else 0.0
        return (tau0 - 1.0) * math.log(x) + (vsum * math.log(bbar) if vsum else 0.0) + tau0 * t

    def dh(x):
        bbar = 1.0 - x
        dt = -float(np.dot(surv, bbar ** (p - 1))) if umax else 0.0
        return (tau0 - 1.0) / x - (vsum / bbar if vsum else 0.0) + tau0 * dt

    hi = min(prev_beta, BETA_CLAMP)
    if tau0 == 1.0 and vsum == 0 and umax == 0:
        return float((1.0 - rng.uniform()) * hi)
    target = ArsTarget(h, dh, 0.0, hi)
    pts = [hi * f for f in (0.05, 0.25, 0.5, 0.75, 0.95)]
    x = ArsSampler(target, pts).sample(rng, x_current=x_current)
    return float(min(max(x, 1e-300), prev_beta))


def sample_beta_active(k: int, betas, m_k: int, l_k: int, rng) -> float:
    """Resample stick ``k`` (0-based, not the last) from truncated beta(m_k, l_k + 1)."""
    K = len(betas)
    if k >= K - 1:
        raise ValueError("the last stick is resampled with InactiveTail.draw")
    lo = float(betas[k + 1])
    hi = min(float(betas[k - 1]) if k > 0 else 1.0, BETA_CLAMP)
    if not hi - lo > 1e-15 * hi:
        return float(betas[k])
    return sample_truncated_beta(float(m_k), float(l_k) + 1.0, lo, hi, rng)


# --- concentration -------------------------------------------------------------

def alpha_posterior_params(m_row, l_row, log_w, prior) -> tuple[float, float]:
    """Gamma (shape, rate) for alpha_j given the auxiliaries."""
    a, b = prior
    return a + float(np.sum(m_row) + np.sum(l_row)), b - float(np.sum(log_w))


def sample_alpha(alpha: float, m_row, l_row, N: int, prior, rng, log_tail=None) -> float:
    """Update alpha_j with beta(alpha, N) auxiliaries, one per column in ``m_row``.

    ``log_tail`` (a function of alpha) is the contribution of the sticks that
    are integrated out; when given, the conjugate gamma draw becomes an
    independence proposal corrected by a Metropolis-Hastings step.
    """
    m_row = np.asarray(m_row)
    if N > 0 and m_row.size:
        log_w = log_beta_draw(alpha, N, rng, size=m_row.size)
    else:
        log_w = np.zeros(0)
    shape, rate = alpha_posterior_params(m_row, l_row if N > 0 else np.zeros(0), log_w, prior)
    prop = float(rng.gamma(shape, rate))
    if not prop > 0.0:
        return alpha  # underflow; a zero concentration is outside the support
    if log_tail is None:
        return prop
    if math.log(rng.uniform()) < log_tail(prop) - log_tail(alpha):
        return prop
    return alpha


@dataclass
class AuxState:
    """Auxiliary integers from the most recent sweep (kept for diagnostics)."""
    v: list = field(default_factory=list)
    m: np.ndarray | None = None
    l: np.ndarray | None = None
