import math

import numpy as np
import pytest
from scipy import stats

from nhfa import ggm, pgm
from nhfa.rng import RngStream


def _pgm_setup(seed=0, M=6, N=5, K=3):
    r = RngStream(seed)
    Phi = r.gamma(1.0, 1.0, size=(M, K))
    Z = (r.uniform(size=(N, K)) < 0.6).astype(np.int8)
    W = r.gamma(1.0, 1.0, size=(N, K))
    X = r.poisson(Phi @ (Z * W).T + 0.2)
    return r, X, Phi, Z, W


# --- counts ------------------------------------------------------------------------

def test_decomposition_conserves_counts():
    r, X, Phi, Z, W = _pgm_setup()
    for _ in range(50):
        dec = pgm.decompose_counts(X, Phi, Z, W, 0.2, r)
        assert np.array_equal(dec.parts.sum(axis=1), X[dec.cells[:, 0], dec.cells[:, 1]])
        # inactive factors never receive counts
        assert np.all(dec.parts[:, :3][Z[dec.cells[:, 1]] == 0] == 0)


def test_decomposition_expected_shares():
    r, X, Phi, Z, W = _pgm_setup(1)
    i, l = np.argwhere(X > 0)[0]
    rates = np.append(Phi[i] * Z[l] * W[l], 0.2)
    n = 4000
    acc = np.zeros(4)
    for _ in range(n):
        dec = pgm.decompose_counts(X, Phi, Z, W, 0.2, r)
        acc += dec.parts[0]
    p = rates / rates.sum()
    se = np.sqrt(X[i, l] * p * (1 - p) / n)
    assert np.all(np.abs(acc / n - X[i, l] * p) < 4 * se + 1e-12)


def test_decomposition_rejects_impossible_count():
    X = np.array([[1]])
    with pytest.raises(pgm.ImpossibleLikelihoodError):
        pgm.decompose_counts(X, np.zeros((1, 1)), np.zeros((1, 1), np.int8), np.ones((1, 1)), 0.0, RngStream(0))


def test_poisson_log_likelihood_matches_scipy():
    _, X, Phi, Z, W = _pgm_setup(2)
    mu = Phi @ (Z * W).T + 0.2
    assert pgm.log_likelihood(X, Phi, Z, W, 0.2) == pytest.approx(stats.poisson.logpmf(X, mu).sum(), rel=1e-12)
    assert pgm.row_log_likelihood(X[:, 1], Phi, Z[1], W[1], 0.2) == pytest.approx(
        stats.poisson.logpmf(X[:, 1], mu[:, 1]).sum(), rel=1e-12)


def test_gamma_updates_are_conjugate():
    r = RngStream(3)
    S = np.full((2, 2), 4.0)
    G = np.array([2.0, 0.5])
    d = np.array([pgm.sample_phi(S, G, 1.0, 1.0, r) for _ in range(20_000)])
    want = (1 + 4.0) / (1 + G)
    assert np.allclose(d.mean(axis=0), np.broadcast_to(want, (2, 2)), rtol=0.03)
    lam = np.array([pgm.sample_lambda(10, 3, 4, 1.0, 2.0, r) for _ in range(20_000)])
    assert lam.mean() == pytest.approx(11 / 14, rel=0.03)


def test_hyper_scales_ignore_prior_only_entries():
    r, X, Phi, Z, W = _pgm_setup(4)
    p = pgm.PgmParams(Phi.copy(), [W.copy()], np.array([0.2]))
    Zs = [np.zeros_like(Z)]
    b_phi, b_w = p.b_phi, p.b_w.copy()
    pgm.resample_hyper_scales(p, r, Zs)
    assert p.b_phi == b_phi and np.array_equal(p.b_w, b_w)
    pgm.resample_hyper_scales(p, r, [Z])
    assert p.b_phi != b_phi


def test_pgm_columns_append_and_keep():
    r = RngStream(5)
    p = pgm.PgmParams.from_prior(4, [3, 2], 2, r)
    p.append_columns(3, r)
    assert p.K == 5 and all(w.shape[1] == 5 for w in p.W)
    p.keep_columns(1)
    assert p.Phi.shape == (4, 1) and p.W[1].shape == (2, 1)


# --- reals -------------------------------------------------------------------------

def test_gaussian_log_likelihood_matches_scipy():
    r = RngStream(6)
    Phi, Z, W = r.normal(size=(4, 2)), np.ones((3, 2), np.int8), r.normal(size=(3, 2))
    X = r.normal(size=(4, 3))
    want = stats.norm.logpdf(X, Phi @ W.T, math.sqrt(0.7)).sum()
    assert ggm.log_likelihood(X, Phi, Z, W, 0.7) == pytest.approx(want, rel=1e-12)
    assert ggm.row_log_likelihood(X[:, 0], Phi, Z[0], W[0], 0.7) == pytest.approx(
        stats.norm.logpdf(X[:, 0], Phi @ W[0], math.sqrt(0.7)).sum(), rel=1e-12)


def test_phi_rows_posterior_moments():
    r = RngStream(7)
    M, N, K = 3, 6, 2
    Z = [np.ones((N, K), np.int8)]
    W = [r.normal(size=(N, K))]
    X = [r.normal(size=(M, N))]
    mean = ggm.phi_posterior_mean(X, Z, W, 1.0, [0.5])
    d = np.array([ggm.sample_phi_rows(X, Z, W, 1.0, [0.5], r) for _ in range(20_000)])
    H = W[0]
    cov = np.linalg.inv(np.eye(K) + H.T @ H / 0.5)
    assert np.allclose(d.mean(axis=0), mean, atol=4 * math.sqrt(cov.max() / d.shape[0]))
    assert np.allclose(np.cov(d[:, 0, :].T), cov, atol=0.02)


def test_w_rows_posterior_mean_and_inactive_prior():
    r = RngStream(8)
    Phi = r.normal(size=(5, 3))
    Z = np.array([[1, 0, 1]], np.int8)
    X = r.normal(size=(5, 1))
    d = np.array([ggm.sample_w_rows(X, Z, Phi, 2.0, 0.3, r)[0] for _ in range(20_000)])
    A = [0, 2]
    prec = Phi[:, A].T @ Phi[:, A] / 0.3 + np.eye(2) / 2.0
    assert np.allclose(d[:, A].mean(axis=0), np.linalg.solve(prec, Phi[:, A].T @ X[:, 0] / 0.3), atol=0.02)
    assert d[:, 1].var() == pytest.approx(2.0, rel=0.05)


def test_ggm_log_prior_uses_precision_coordinates():
    p = ggm.GgmParams(np.zeros((1, 1)), [np.zeros((1, 1))], 0.5, [2.0], [4.0], (2.0, 3.0))
    g = stats.gamma(2.0, scale=1 / 3.0)
    want = (stats.norm.logpdf(0, 0, math.sqrt(0.5)) + g.logpdf(2.0) + stats.norm.logpdf(0, 0, math.sqrt(2.0))
            + g.logpdf(0.5) + g.logpdf(0.25))
    assert ggm.log_prior(p) == pytest.approx(want, rel=1e-12)
