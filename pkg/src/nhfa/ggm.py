"""Linear Gaussian factor model for real-valued sources.

``X_j[:, l] ~ N(Phi @ (Z_j[l] * W_j[l]), var_n[j] I)`` with zero-mean Gaussian
priors on ``Phi`` and ``W_j`` and gamma priors on all three precisions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.special import gammaln

from . import _kernels
from .births import GaussianBirth

LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class GgmParams:
    Phi: np.ndarray
    W: list
    var_phi: float = 1.0
    var_w: np.ndarray = None
    var_n: np.ndarray = None
    prec_prior: tuple = (1.0, 1.0)   # gamma(shape, rate) on every precision

    kind = "ggm"

    def __post_init__(self):
        J = len(self.W)
        self.var_w = np.ones(J) if self.var_w is None else np.asarray(self.var_w, float)
        self.var_n = np.ones(J) if self.var_n is None else np.asarray(self.var_n, float)
        self.prec_prior = tuple(float(v) for v in self.prec_prior)

    @classmethod
    def from_prior(cls, M, sizes, K, rng, prec_prior=(1.0, 1.0)) -> "GgmParams":
        a, b = prec_prior
        J = len(sizes)
        p = cls(Phi=np.zeros((M, 0)), W=[np.zeros((n, 0)) for n in sizes],
                var_phi=1.0 / float(rng.gamma(a, b)),
                var_w=1.0 / rng.gamma(a, b, size=J),
                var_n=1.0 / rng.gamma(a, b, size=J),
                prec_prior=prec_prior)
        p.append_columns(K, rng)
        return p

    @property
    def K(self) -> int:
        return self.Phi.shape[1]

    def append_columns(self, count: int, rng):
        M = self.Phi.shape[0]
        self.Phi = np.hstack([self.Phi, math.sqrt(self.var_phi) * rng.normal(size=(M, count))])
        self.W = [np.hstack([w, math.sqrt(v) * rng.normal(size=(w.shape[0], count))])
                  for w, v in zip(self.W, self.var_w)]

    def keep_columns(self, K: int):
        self.Phi = np.ascontiguousarray(self.Phi[:, :K])
        self.W = [np.ascontiguousarray(w[:, :K]) for w in self.W]

    def copy(self) -> "GgmParams":
        return GgmParams(self.Phi.copy(), [w.copy() for w in self.W], self.var_phi,
                         self.var_w.copy(), self.var_n.copy(), self.prec_prior)

    def nuisance(self) -> dict:
        return {"var_n": [float(v) for v in self.var_n]}


def sample_phi_rows(X_list, Z_list, W_list, var_phi, var_n, rng) -> np.ndarray:
    """Row-blocked draw of Phi; every row shares one posterior precision."""
    M = X_list[0].shape[0]
    K = W_list[0].shape[1]
    prec = np.eye(K) / var_phi
    B = np.zeros((M, K))
    for X, Z, W, v in zip(X_list, Z_list, W_list, var_n):
        H = Z * W
        prec += H.T @ H / v
        B += np.asarray(X, float) @ H / v
    L = np.linalg.cholesky(prec)
    mean = cho_solve((L, True), B.T).T
    noise = solve_triangular(L, rng.normal(size=(K, M)), lower=True, trans="T").T
    return mean + noise


def phi_posterior_mean(X_list, Z_list, W_list, var_phi, var_n) -> np.ndarray:
    M = X_list[0].shape[0]
    K = W_list[0].shape[1]
    prec = np.eye(K) / var_phi
    B = np.zeros((M, K))
    for X, Z, W, v in zip(X_list, Z_list, W_list, var_n):
        H = Z * W
        prec += H.T @ H / v
        B += np.asarray(X, float) @ H / v
    return cho_solve(cho_factor(prec), B.T).T


def sample_w_rows(X, Z, Phi, var_w, var_n, rng) -> np.ndarray:
    """Per data point, the active coordinates are drawn jointly; the rest from the prior."""
    X = np.asarray(X, float)
    N, K = Z.shape
    W = math.sqrt(var_w) * rng.normal(size=(N, K))
    G = Phi.T @ Phi
    PX = Phi.T @ X          # K x N
    for l in range(N):
        A = np.flatnonzero(Z[l])
        if A.size == 0:
            continue
        prec = G[np.ix_(A, A)] / var_n + np.eye(A.size) / var_w
        L = np.linalg.cholesky(prec)
        mean = cho_solve((L, True), PX[A, l] / var_n)
        W[l, A] = mean + solve_triangular(L, W[l, A] / math.sqrt(var_w), lower=True, trans="T")
    return W


def _precision_draw(shape_add, sq, prior, rng) -> float:
    a, b = prior
    return float(rng.gamma(a + shape_add, b + 0.5 * sq))


def sample_variances(X_list, Z_list, params: GgmParams, rng, freeze_phi=False, sources=None):
    """Conjugate precision updates; variances are stored as reciprocals."""
    pr = params.prec_prior
    J = len(X_list)
    sources = range(J) if sources is None else sources
    if not freeze_phi:
        params.var_phi = 1.0 / _precision_draw(0.5 * params.Phi.size, float(np.sum(params.Phi ** 2)), pr, rng)
    for j in sources:
        W = params.W[j]
        params.var_w[j] = 1.0 / _precision_draw(0.5 * W.size, float(np.sum(W ** 2)), pr, rng)
        X = np.asarray(X_list[j], float)
        res = X - params.Phi @ (Z_list[j] * W).T
        params.var_n[j] = 1.0 / _precision_draw(0.5 * X.size, float(np.sum(res ** 2)), pr, rng)


def row_log_likelihood(x, Phi, z, w, var_n) -> float:
    r = np.asarray(x, float) - Phi @ (np.asarray(z) * np.asarray(w))
    return float(-0.5 * r.size * (LOG_2PI + math.log(var_n)) - 0.5 * np.dot(r, r) / var_n)


def log_likelihood(X, Phi, Z, W, var_n) -> float:
    r = np.asarray(X, float) - Phi @ (Z * W).T
    return float(-0.5 * r.size * (LOG_2PI + math.log(var_n)) - 0.5 * np.sum(r * r) / var_n)


def _normal_logpdf(x, var) -> float:
    x = np.asarray(x)
    return float(-0.5 * x.size * (LOG_2PI + math.log(var)) - 0.5 * np.sum(x * x) / var)


def _log_gamma_prec(var, prior) -> float:
    a, b = prior
    t = 1.0 / var
    return float(a * math.log(b) - gammaln(a) + (a - 1) * math.log(t) - b * t)


def log_prior(params: GgmParams) -> float:
    """Density of (Phi, W, precisions); the precisions are the coordinates used."""
    pr = params.prec_prior
    lp = _normal_logpdf(params.Phi, params.var_phi) + _log_gamma_prec(params.var_phi, pr)
    for w, vw, vn in zip(params.W, params.var_w, params.var_n):
        lp += _normal_logpdf(w, vw) + _log_gamma_prec(vw, pr) + _log_gamma_prec(vn, pr)
    return lp


def z_sweep(j, X, assign, params: GgmParams, betas, alpha, k_elig, rng, births=True):
    Z = assign.Z[j]
    u = rng.uniform(size=(Z.shape[0], assign.K))
    Xt = np.ascontiguousarray(np.asarray(X, float).T)
    Phi_t = np.ascontiguousarray(params.Phi.T)
    birth = GaussianBirth(params.var_phi, params.var_n[j], rng) if births else None
    _kernels.ggm_z_sweep(Xt, Phi_t, np.ascontiguousarray(params.W[j]), Z,
                         float(params.var_n[j]), np.ascontiguousarray(betas, float), assign.n[j],
                         assign.totals, float(alpha), int(k_elig), u, 0, True, birth)
    if births:
        params.Phi = np.ascontiguousarray(Phi_t.T)


def update(X_list, assign, params: GgmParams, rng, freeze_phi=False, sources=None):
    J = len(X_list)
    sources = list(range(J)) if sources is None else list(sources)
    if not freeze_phi:
        params.Phi = sample_phi_rows(X_list, assign.Z, params.W, params.var_phi, params.var_n, rng)
    for j in sources:
        params.W[j] = sample_w_rows(X_list[j], assign.Z[j], params.Phi, params.var_w[j], params.var_n[j], rng)
    sample_variances(X_list, assign.Z, params, rng, freeze_phi=freeze_phi, sources=sources)
    return None
