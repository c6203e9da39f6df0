# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Z sweeps.  Mirrors ``_fallback.py`` step for step."""
from libc.math cimport exp, log, log1p

cimport numpy as cnp

cnp.import_array()


cdef inline Py_ssize_t _bstar_index(const cnp.int64_t[::1] totals, Py_ssize_t k, int zk) noexcept nogil:
    cdef Py_ssize_t kk
    cdef cnp.int64_t c
    for kk in range(totals.shape[0] - 1, -1, -1):
        c = totals[kk]
        if kk == k:
            c -= zk
        if c > 0:
            return kk
    return -1


cdef inline double _prior_log_odds(long n_minus, Py_ssize_t N, double alpha, double beta_k,
                                   const double[::1] betas, const cnp.int64_t[::1] totals,
                                   Py_ssize_t k, int zk, bint slice_terms) noexcept nogil:
    cdef Py_ssize_t kk
    cdef double bbar = 1.0 - beta_k
    cdef double lo = log(n_minus + alpha * beta_k) - log(N - 1 - n_minus + alpha * bbar)
    if slice_terms:
        kk = _bstar_index(totals, k, zk)
        lo += (log(betas[kk]) if kk >= 0 else 0.0) - log(betas[kk if kk > k else k])
    return lo


cdef inline int _accept(double log_odds, double u) noexcept nogil:
    cdef double p1, e
    if log_odds >= 0:
        p1 = 1.0 / (1.0 + exp(-log_odds))
    else:
        e = exp(log_odds)
        p1 = e / (1.0 + e)
    return 1 if u < p1 else 0


def pgm_z_sweep(const double[:, ::1] Xt, double[:, ::1] Phi_t, const double[:, ::1] W,
                cnp.int8_t[:, ::1] Z, double lam, const double[::1] betas,
                cnp.int64_t[::1] n_j, cnp.int64_t[::1] totals, double alpha,
                Py_ssize_t k_elig, const double[:, ::1] u,
                Py_ssize_t n_offset=0, bint slice_terms=True, birth=None):
    cdef Py_ssize_t N = Xt.shape[0], M = Xt.shape[1], K = Phi_t.shape[0]
    cdef Py_ssize_t i, k, m
    cdef int zk, znew
    cdef long n_minus
    cdef double w, lo, dll, s
    cdef double[::1] mu
    cdef double[::1] colsum
    cdef bint has_birth = birth is not None
    import numpy as np
    mu = np.empty(M)
    colsum = np.empty(K)
    with nogil:
        for k in range(K):
            s = 0.0
            for m in range(M):
                s = s + Phi_t[k, m]
            colsum[k] = s
        for i in range(N):
            for m in range(M):
                mu[m] = lam
            for k in range(K):
                if Z[i, k]:
                    w = W[i, k]
                    for m in range(M):
                        mu[m] = mu[m] + w * Phi_t[k, m]
            for k in range(k_elig):
                zk = Z[i, k]
                w = W[i, k]
                if zk:
                    for m in range(M):
                        mu[m] = mu[m] - w * Phi_t[k, m]
                n_minus = n_j[k] - zk
                lo = _prior_log_odds(n_minus, N + n_offset, alpha, betas[k], betas, totals, k, zk, slice_terms)
                if has_birth and totals[k] == zk:
                    with gil:
                        znew = birth(np.asarray(Xt[i]), w, np.asarray(mu), lo, u[i, k], np.asarray(Phi_t[k]))
                    s = 0.0
                    for m in range(M):
                        s = s + Phi_t[k, m]
                    colsum[k] = s
                else:
                    dll = 0.0
                    if w > 0:
                        for m in range(M):
                            if Xt[i, m] > 0:
                                dll = dll + Xt[i, m] * log1p(w * Phi_t[k, m] / mu[m])
                        dll = dll - w * colsum[k]
                    znew = _accept(lo + dll, u[i, k])
                if znew:
                    for m in range(M):
                        mu[m] = mu[m] + w * Phi_t[k, m]
                if znew != zk:
                    Z[i, k] = znew
                    n_j[k] += znew - zk
                    totals[k] += znew - zk


def ggm_z_sweep(const double[:, ::1] Xt, double[:, ::1] Phi_t, const double[:, ::1] W,
                cnp.int8_t[:, ::1] Z, double var_n, const double[::1] betas,
                cnp.int64_t[::1] n_j, cnp.int64_t[::1] totals, double alpha,
                Py_ssize_t k_elig, const double[:, ::1] u,
                Py_ssize_t n_offset=0, bint slice_terms=True, birth=None):
    cdef Py_ssize_t N = Xt.shape[0], M = Xt.shape[1], K = Phi_t.shape[0]
    cdef Py_ssize_t i, k, m
    cdef int zk, znew
    cdef long n_minus
    cdef double w, lo, dll, s, dot
    cdef double inv2 = 0.5 / var_n
    cdef double[::1] r
    cdef double[::1] sq
    cdef bint has_birth = birth is not None
    import numpy as np
    r = np.empty(M)
    sq = np.empty(K)
    with nogil:
        for k in range(K):
            s = 0.0
            for m in range(M):
                s = s + Phi_t[k, m] * Phi_t[k, m]
            sq[k] = s
        for i in range(N):
            for m in range(M):
                r[m] = Xt[i, m]
            for k in range(K):
                if Z[i, k]:
                    w = W[i, k]
                    for m in range(M):
                        r[m] = r[m] - w * Phi_t[k, m]
            for k in range(k_elig):
                zk = Z[i, k]
                w = W[i, k]
                if zk:
                    for m in range(M):
                        r[m] = r[m] + w * Phi_t[k, m]
                n_minus = n_j[k] - zk
                lo = _prior_log_odds(n_minus, N + n_offset, alpha, betas[k], betas, totals, k, zk, slice_terms)
                if has_birth and totals[k] == zk:
                    with gil:
                        znew = birth(np.asarray(Xt[i]), w, np.asarray(r), lo, u[i, k], np.asarray(Phi_t[k]))
                    s = 0.0
                    for m in range(M):
                        s = s + Phi_t[k, m] * Phi_t[k, m]
                    sq[k] = s
                else:
                    dot = 0.0
                    for m in range(M):
                        dot = dot + Phi_t[k, m] * r[m]
                    dll = -inv2 * (w * w * sq[k] - 2.0 * w * dot)
                    znew = _accept(lo + dll, u[i, k])
                if znew:
                    for m in range(M):
                        r[m] = r[m] - w * Phi_t[k, m]
                if znew != zk:
                    Z[i, k] = znew
                    n_j[k] += znew - zk
                    totals[k] += znew - zk
