"""Pure-numpy Z sweeps.  Same algorithm and random-number consumption as the
compiled kernels in ``_zsweep.pyx``."""
import math

import numpy as np


def _bstar_index(totals, k, zk):
    """Largest active column index after removing one entry from column k."""
    for kk in range(totals.shape[0] - 1, -1, -1):
        c = totals[kk] - (zk if kk == k else 0)
        if c > 0:
            return kk
    return -1


def _prior_log_odds(n_minus, N, alpha, beta_k, betas, totals, k, zk, slice_terms):
    bbar = 1.0 - beta_k
    lo = math.log(n_minus + alpha * beta_k) - math.log(N - 1 - n_minus + alpha * bbar)
    if slice_terms:
        kk = _bstar_index(totals, k, zk)
        bstar0 = betas[kk] if kk >= 0 else 1.0
        lo += math.log(bstar0) - math.log(betas[max(kk, k)])
    return lo


def _accept(log_odds, u):
    if log_odds >= 0:
        p1 = 1.0 / (1.0 + math.exp(-log_odds))
    else:
        e = math.exp(log_odds)
        p1 = e / (1.0 + e)
    return 1 if u < p1 else 0


def pgm_z_sweep(Xt, Phi_t, W, Z, lam, betas, n_j, totals, alpha, k_elig, u, n_offset=0, slice_terms=True,
                birth=None):
    """Gibbs-scan ``Z`` for one Poisson-gamma source, in place.

    Xt: (N, M) counts as float; Phi_t: (K, M); W, Z, u: (N, K).
    ``n_j`` and ``totals`` (all-source column counts) are updated in place.
    ``n_offset`` extra rows (already counted in ``n_j``) join the column
    predictive; ``slice_terms=False`` drops the slice normalizers.
    ``birth(x, w, mu, prior_lo, u, phi_row) -> z`` handles entries whose
    column is otherwise empty and may rewrite ``Phi_t[k]``.
    """
    N, M = Xt.shape
    Ntot = N + n_offset
    colsum = Phi_t.sum(axis=1)
    for i in range(N):
        x = Xt[i]
        nz = x > 0
        xs = x[nz]
        mu = lam + (Z[i] * W[i]) @ Phi_t
        for k in range(k_elig):
            zk = int(Z[i, k])
            w = W[i, k]
            phik = Phi_t[k]
            if zk:
                mu = mu - w * phik
            n_minus = n_j[k] - zk
            lo = _prior_log_odds(n_minus, Ntot, alpha, betas[k], betas, totals, k, zk, slice_terms)
            if birth is not None and totals[k] == zk:
                znew = birth(x, w, mu, lo, u[i, k], phik)
                colsum[k] = phik.sum()
            else:
                if w > 0:
                    dll = float(np.sum(xs * np.log1p(w * phik[nz] / mu[nz]))) - w * colsum[k]
                else:
                    dll = 0.0
                znew = _accept(lo + dll, u[i, k])
            if znew:
                mu = mu + w * phik
            if znew != zk:
                Z[i, k] = znew
                n_j[k] += znew - zk
                totals[k] += znew - zk


def ggm_z_sweep(Xt, Phi_t, W, Z, var_n, betas, n_j, totals, alpha, k_elig, u, n_offset=0, slice_terms=True,
                birth=None):
    """Gibbs-scan ``Z`` for one Gaussian source, in place (shapes as above).

    ``birth`` receives the residual without column ``k`` in place of ``mu``.
    """
    N, M = Xt.shape
    Ntot = N + n_offset
    sq = np.einsum("km,km->k", Phi_t, Phi_t)
    inv2 = 0.5 / var_n
    for i in range(N):
        r = Xt[i] - (Z[i] * W[i]) @ Phi_t
        for k in range(k_elig):
            zk = int(Z[i, k])
            w = W[i, k]
            phik = Phi_t[k]
            if zk:
                r = r + w * phik
            n_minus = n_j[k] - zk
            lo = _prior_log_odds(n_minus, Ntot, alpha, betas[k], betas, totals, k, zk, slice_terms)
            if birth is not None and totals[k] == zk:
                znew = birth(Xt[i], w, r, lo, u[i, k], phik)
                sq[k] = float(np.dot(phik, phik))
            else:
                dll = -inv2 * (w * w * sq[k] - 2.0 * w * float(np.dot(phik, r)))
                znew = _accept(lo + dll, u[i, k])
            if znew:
                r = r - w * phik
            if znew != zk:
                Z[i, k] = znew
                n_j[k] += znew - zk
                totals[k] += znew - zk
