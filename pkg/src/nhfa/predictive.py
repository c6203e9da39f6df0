"""Held-out inference with frozen factors and the Monte Carlo predictive likelihood.

For each stored training state the test documents of one source are treated
as extra rows of that source: their Z entries use the beta-Bernoulli
predictive that includes the training counts, sticks, concentrations and
``Phi`` stay fixed, and only the test weights and the noise level move.  No
new features are opened for test documents.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import _kernels, ggm, pgm


@dataclass
class PredictiveConfig:
    L: int = 10
    R: int = 10
    burn_in: int = 20

    def validate(self):
        if self.L < 1 or self.R < 1 or self.burn_in < 0:
            raise ValueError("L and R must be >= 1 and burn_in >= 0")
        return self


@dataclass
class HeldoutSample:
    phi_index: int
    Z: np.ndarray
    W: np.ndarray
    nuisance: float      # lambda (counts) or noise variance (reals)


def _sweep_pgm(Xt, X, Phi, Z, W, lam, betas, n_comb, alpha, n_train, a_w, b_w, a_lam, b_lam, rng):
    K = Phi.shape[1]
    u = rng.uniform(size=Z.shape)
    _kernels.pgm_z_sweep(Xt, np.ascontiguousarray(Phi.T), np.ascontiguousarray(W), Z, lam, betas,
                         n_comb, n_comb.copy(), alpha, K, u, n_train, False)
    dec = pgm.decompose_counts(X, Phi, Z, W, lam, rng)
    T = np.zeros(W.shape)
    if dec.parts.size:
        np.add.at(T, dec.cells[:, 1], dec.parts[:, :K])
    W = pgm.sample_w(T, Phi.sum(axis=0), Z, a_w, b_w, rng)
    R = float(dec.parts[:, K].sum()) if dec.parts.size else 0.0
    lam = pgm.sample_lambda(R, X.shape[0], X.shape[1], a_lam, b_lam, rng)
    return W, lam


def _sweep_ggm(Xt, X, Phi, Z, W, var_n, betas, n_comb, alpha, n_train, var_w, prec_prior, rng):
    K = Phi.shape[1]
    u = rng.uniform(size=Z.shape)
    _kernels.ggm_z_sweep(Xt, np.ascontiguousarray(Phi.T), np.ascontiguousarray(W), Z, var_n, betas,
                         n_comb, n_comb.copy(), alpha, K, u, n_train, False)
    W = ggm.sample_w_rows(X, Z, Phi, var_w, var_n, rng)
    res = X - Phi @ (Z * W).T
    a, b = prec_prior
    var_n = 1.0 / float(rng.gamma(a + 0.5 * X.size, b + 0.5 * float(np.sum(res * res))))
    return W, var_n


def heldout_infer(X_test, snapshots, source: int, cfg: PredictiveConfig, rng) -> list[HeldoutSample]:
    """Run a frozen-``Phi`` chain on ``X_test`` for each of the last ``cfg.L`` snapshots."""
    cfg.validate()
    if not snapshots:
        raise ValueError("no training snapshots")
    X = np.asarray(X_test, float)
    chosen = list(range(len(snapshots)))[-cfg.L:]
    out = []
    for li in chosen:
        st = snapshots[li]
        p = st.params
        if X.shape[0] != p.Phi.shape[0]:
            raise ValueError(f"test matrix has {X.shape[0]} rows, factors have {p.Phi.shape[0]}")
        if not 0 <= source < st.assign.J:
            raise ValueError("source index out of range")
        Phi = p.Phi
        K = Phi.shape[1]
        N = X.shape[1]
        Xt = np.ascontiguousarray(X.T)
        betas = np.ascontiguousarray(st.sticks.betas, float)
        alpha = float(st.conc.alphas[source])
        n_train = int(st.assign.Z[source].shape[0])
        n_comb = np.ascontiguousarray(st.assign.n[source], dtype=np.int64).copy()
        Z = np.zeros((N, K), dtype=np.int8)
        if st.kind == "pgm":
            a_w, b_w = float(p.a_w[source]), float(p.b_w[source])
            W = rng.gamma(a_w, b_w, size=(N, K))
            nuis = float(p.lam[source])
        else:
            W = math.sqrt(p.var_w[source]) * rng.normal(size=(N, K))
            nuis = float(p.var_n[source])
        for t in range(cfg.burn_in + cfg.R):
            if st.kind == "pgm":
                W, nuis = _sweep_pgm(Xt, X, Phi, Z, W, nuis, betas, n_comb, alpha, n_train,
                                     a_w, b_w, p.a_lam, p.b_lam, rng)
            else:
                W, nuis = _sweep_ggm(Xt, X, Phi, Z, W, nuis, betas, n_comb, alpha, n_train,
                                     float(p.var_w[source]), p.prec_prior, rng)
            if t >= cfg.burn_in:
                out.append(HeldoutSample(li, Z.copy(), W.copy(), nuis))
    return out


def pair_log_likelihoods(X_test, snapshots, samples, kind: str) -> np.ndarray:
    """``log p(X_test | Phi[l], Z_r, W_r)`` for every held-out sample, paired with its own ``Phi``."""
    X = np.asarray(X_test, float)
    ll = np.empty(len(samples))
    for i, s in enumerate(samples):
        Phi = snapshots[s.phi_index].params.Phi
        f = pgm.log_likelihood if kind == "pgm" else ggm.log_likelihood
        ll[i] = f(X, Phi, s.Z, s.W, s.nuisance)
    return ll


def predictive_log_likelihood(pair_ll) -> float:
    """Log of the average predictive density over sample pairs (log-sum-exp)."""
    pair_ll = np.asarray(pair_ll, float)
    if pair_ll.size == 0:
        raise ValueError("no held-out samples")
    return float(logsumexp(pair_ll) - math.log(pair_ll.size))
