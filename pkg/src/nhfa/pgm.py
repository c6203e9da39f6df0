"""Linear Poisson-gamma factor model.

``X_j[:, l] ~ Poisson(Phi @ (Z_j[l] * W_j[l]) + lambda_j)`` with gamma priors on
``Phi``, ``W_j`` and ``lambda_j``.  Conjugacy is restored by splitting every
nonzero count into per-factor parts plus a noise part.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from . import _kernels
from .births import PoissonBirth

LAMBDA_FLOOR = 1e-12


class ImpossibleLikelihoodError(RuntimeError):
    """A positive count has zero total rate."""


@dataclass
class PgmParams:
    Phi: np.ndarray                   # M x K
    W: list                           # per source, N_j x K
    lam: np.ndarray                   # per source
    a_phi: float = 1.0
    b_phi: float = 1.0
    a_w: np.ndarray = None
    b_w: np.ndarray = None
    a_lam: float = 1.0
    b_lam: float = 1.0
    resample_scales: bool = True

    kind = "pgm"

    def __post_init__(self):
        J = len(self.W)
        self.a_w = np.ones(J) if self.a_w is None else np.asarray(self.a_w, float)
        self.b_w = np.ones(J) if self.b_w is None else np.asarray(self.b_w, float)
        self.lam = np.asarray(self.lam, float)

    @classmethod
    def from_prior(cls, M, sizes, K, rng, **hyper) -> "PgmParams":
        p = cls(Phi=np.zeros((M, 0)), W=[np.zeros((n, 0)) for n in sizes],
                lam=np.zeros(len(sizes)), **hyper)
        p.lam = np.maximum(rng.gamma(p.a_lam, p.b_lam, size=len(sizes)), LAMBDA_FLOOR)
        p.append_columns(K, rng)
        return p

    @property
    def K(self) -> int:
        return self.Phi.shape[1]

    def H(self, j, Z) -> np.ndarray:
        return Z[j] * self.W[j]

    def append_columns(self, count: int, rng):
        """New factor columns drawn from their priors."""
        M = self.Phi.shape[0]
        self.Phi = np.hstack([self.Phi, rng.gamma(self.a_phi, self.b_phi, size=(M, count))])
        self.W = [np.hstack([w, rng.gamma(a, b, size=(w.shape[0], count))])
                  for w, a, b in zip(self.W, self.a_w, self.b_w)]

    def keep_columns(self, K: int):
        self.Phi = np.ascontiguousarray(self.Phi[:, :K])
        self.W = [np.ascontiguousarray(w[:, :K]) for w in self.W]

    def copy(self) -> "PgmParams":
        return PgmParams(self.Phi.copy(), [w.copy() for w in self.W], self.lam.copy(),
                         self.a_phi, self.b_phi, self.a_w.copy(), self.b_w.copy(),
                         self.a_lam, self.b_lam, self.resample_scales)

    def nuisance(self) -> dict:
        return {"lambda": [float(v) for v in self.lam]}


@dataclass
class CountDecomposition:
    """Split of every nonzero count of one source.

    ``cells`` holds (row i, data point l) pairs; ``parts[c, :K]`` are the
    per-factor parts of cell c and ``parts[c, K]`` the noise part.
    """
    cells: np.ndarray
    parts: np.ndarray
    counts: np.ndarray = field(default=None)

    @property
    def K(self) -> int:
        return self.parts.shape[1] - 1

    def check(self):
        if not np.array_equal(self.parts.sum(axis=1), self.counts):
            raise AssertionError("count decomposition does not conserve counts")


def decompose_counts(X, Phi, Z, W, lam, rng) -> CountDecomposition:
    """Multinomial split of each nonzero ``X[i, l]`` with weights ``(Phi[i] * H[l], lam)``."""
    X = np.asarray(X)
    ii, ll = np.nonzero(X)
    counts = X[ii, ll].astype(np.int64)
    K = Phi.shape[1]
    if counts.size == 0:
        return CountDecomposition(np.zeros((0, 2), np.int64), np.zeros((0, K + 1), np.int64), counts)
    H = Z * W
    rates = np.empty((counts.size, K + 1))
    rates[:, :K] = Phi[ii] * H[ll]
    rates[:, K] = lam
    tot = rates.sum(axis=1)
    if np.any(tot <= 0):
        raise ImpossibleLikelihoodError("positive count with zero rate")
    probs = rates / tot[:, None]
    # renormalize so that numpy's multinomial sum check never trips on rounding
    probs[:, K] = np.maximum(1.0 - probs[:, :K].sum(axis=1), 0.0)
    probs /= probs.sum(axis=1, keepdims=True)
    parts = rng.gen.multinomial(counts, probs)
    dec = CountDecomposition(np.column_stack([ii, ll]), parts.astype(np.int64), counts)
    dec.check()
    return dec


def sample_phi(S, G, a_phi, b_phi, rng) -> np.ndarray:
    """``Phi[i, k] ~ gamma(a + S[i, k], b + G[k])``."""
    return rng.gamma(a_phi + S, b_phi + np.broadcast_to(G, S.shape))


def sample_w(T, C, Z, a_w, b_w, rng) -> np.ndarray:
    """``W[l, k] ~ gamma(a + T[l, k], b + Z[l, k] C[k])``; inactive entries redraw from the prior."""
    return rng.gamma(a_w + T, b_w + Z * C[None, :])


def sample_lambda(R, M, N, a_lam, b_lam, rng) -> float:
    return max(float(rng.gamma(a_lam + R, b_lam + M * N)), LAMBDA_FLOOR)


def resample_hyper_scales(params: PgmParams, rng, Z_list=None):
    """Rate hyperparameters drawn as gamma(1, rate = grand mean).

    With ``Z_list`` the means only cover entries tied to data (active columns
    of Phi, weights whose Z entry is 1); a scale with no such entries is kept.
    Prior-only entries would otherwise feed back into their own scale and the
    pair drifts off geometrically.
    """
    if Z_list is None:
        mu_phi = float(params.Phi.mean()) if params.Phi.size else None
        mu_w = [float(w.mean()) if w.size else None for w in params.W]
    else:
        act = np.sum([z.sum(axis=0) for z in Z_list], axis=0) > 0
        mu_phi = float(params.Phi[:, act].mean()) if act.any() else None
        mu_w = [float(w[z.astype(bool)].mean()) if z.any() else None for w, z in zip(params.W, Z_list)]
    if mu_phi is not None:
        params.b_phi = float(rng.gamma(1.0, mu_phi))
    for j, mu in enumerate(mu_w):
        if mu is not None:
            params.b_w[j] = float(rng.gamma(1.0, mu))


def row_log_likelihood(x, Phi, z, w, lam) -> float:
    """Poisson log-likelihood of one data point ``x`` (length M)."""
    x = np.asarray(x, float)
    mu = Phi @ (np.asarray(z) * np.asarray(w)) + lam
    pos = x > 0
    if np.any(mu[pos] <= 0):
        return -np.inf
    return float(np.sum(x[pos] * np.log(mu[pos])) - mu.sum() - gammaln(x + 1).sum())


def log_likelihood(X, Phi, Z, W, lam) -> float:
    """Poisson log-likelihood of one source's ``M x N`` matrix."""
    mu = Phi @ (Z * W).T + lam
    X = np.asarray(X, float)
    pos = X > 0
    return float(np.sum(X[pos] * np.log(mu[pos])) - mu.sum() - gammaln(X + 1).sum())


def gamma_logpdf(x, a, b) -> float:
    x = np.asarray(x)
    return float(np.sum(a * np.log(b) - gammaln(a) + (a - 1) * np.log(x) - b * x))


def log_prior(params: PgmParams) -> float:
    lp = gamma_logpdf(params.Phi, params.a_phi, params.b_phi)
    for w, a, b in zip(params.W, params.a_w, params.b_w):
        lp += gamma_logpdf(w, a, b)
    lp += gamma_logpdf(params.lam, params.a_lam, params.b_lam)
    return lp


def z_sweep(j, X, assign, params: PgmParams, betas, alpha, k_elig, rng, births=True):
    """Sequential Gibbs scan over the eligible columns of source ``j``.

    With ``births`` an entry whose column is otherwise empty is updated
    jointly with that column of ``Phi`` (see :mod:`nhfa.births`).
    """
    Z = assign.Z[j]
    N = Z.shape[0]
    u = rng.uniform(size=(N, assign.K))
    Xt = np.ascontiguousarray(np.asarray(X, float).T)
    Phi_t = np.ascontiguousarray(params.Phi.T)
    birth = PoissonBirth(params.a_phi, params.b_phi, rng) if births else None
    _kernels.pgm_z_sweep(Xt, Phi_t, np.ascontiguousarray(params.W[j]), Z,
                         float(params.lam[j]), np.ascontiguousarray(betas, float), assign.n[j],
                         assign.totals, float(alpha), int(k_elig), u, 0, True, birth)
    if births:
        params.Phi = np.ascontiguousarray(Phi_t.T)


def update(X_list, assign, params: PgmParams, rng, freeze_phi=False, sources=None):
    """Decompose counts, then Phi, W, lambda and (optionally) hyper scales.

    Returns the per-source decompositions so callers can audit conservation.
    """
    M, K = params.Phi.shape
    J = len(X_list)
    sources = range(J) if sources is None else sources
    decs = {}
    S = np.zeros((M, K))
    G = np.zeros(K)
    for j in sources:
        dec = decompose_counts(X_list[j], params.Phi, assign.Z[j], params.W[j], params.lam[j], rng)
        decs[j] = dec
        if dec.parts.size:
            np.add.at(S, dec.cells[:, 0], dec.parts[:, :K])
        G += (assign.Z[j] * params.W[j]).sum(axis=0)
    if not freeze_phi:
        params.Phi = sample_phi(S, G, params.a_phi, params.b_phi, rng)
    C = params.Phi.sum(axis=0)
    for j in sources:
        dec = decs[j]
        N = assign.Z[j].shape[0]
        T = np.zeros((N, K))
        if dec.parts.size:
            np.add.at(T, dec.cells[:, 1], dec.parts[:, :K])
        params.W[j] = sample_w(T, C, assign.Z[j], params.a_w[j], params.b_w[j], rng)
        R = float(dec.parts[:, K].sum()) if dec.parts.size else 0.0
        params.lam[j] = sample_lambda(R, M, N, params.a_lam, params.b_lam, rng)
    if params.resample_scales and not freeze_phi:
        resample_hyper_scales(params, rng, assign.Z)
    return decs
