"""Blocked update of ``(z_lk, Phi[:, k])`` for a column that no other row uses.

When every other entry of column ``k`` is zero (in all sources), ``Phi[:, k]``
enters only the likelihood of row ``l``.  The pair can then be drawn exactly:
``z`` from its conditional with ``Phi[:, k]`` integrated out, then
``Phi[:, k]`` from its conditional given ``z``.  With ``z = 0`` that is the
prior.  Feature births then follow the data instead of waiting for a prior
draw that happens to fit.

The Z-sweep kernels call a :class:`BirthStep` for such entries; both backends
make identical calls, so random-number use does not depend on the backend.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import expit, gammaln


class BirthStep:
    def __init__(self, rng):
        self.rng = rng
        self.calls = 0
        self.births = 0

    def __call__(self, x, w, base, prior_lo, u, phi_row) -> int:
        """Decide ``z`` with uniform ``u``, overwrite ``phi_row`` in place, return ``z``."""
        self.calls += 1
        lr, aux = self.log_ratio(np.asarray(x), float(w), np.asarray(base))
        z = 1 if u < float(expit(prior_lo + lr)) else 0
        phi_row[:] = self.draw_phi(z, np.asarray(x), float(w), np.asarray(base), aux)
        self.births += z
        return z


class PoissonBirth(BirthStep):
    """Counts ``x ~ Poisson(base + w phi)``, ``phi_i ~ gamma(a, rate b)``.

    Integrating ``phi_i`` gives a Poisson/negative-binomial convolution over
    the factor's share ``c_i`` of each count.
    """

    def __init__(self, a: float, b: float, rng):
        super().__init__(rng)
        self.a, self.b = float(a), float(b)

    def _segments(self, x, w, base):
        pos = np.flatnonzero(x > 0)
        xs = x[pos].astype(np.int64)
        if xs.size == 0:
            return pos, xs, None, None
        lens = xs + 1
        starts = np.concatenate([[0], np.cumsum(lens)[:-1]])
        c = np.arange(lens.sum()) - np.repeat(starts, lens)
        xr = np.repeat(xs, lens)
        a, b = self.a, self.b
        lw = (gammaln(xr + 1) - gammaln(xr - c + 1) - gammaln(c + 1) + gammaln(a + c) - gammaln(a)
              + c * (math.log(w / (b + w)) - np.repeat(np.log(base[pos]), lens)))
        return pos, xs, lw, starts

    def log_ratio(self, x, w, base):
        if w <= 0.0:
            return 0.0, None
        a, b = self.a, self.b
        seg = self._segments(x, w, base)
        pos, xs, lw, starts = seg
        lr = x.size * a * math.log(b / (b + w))
        if lw is not None:
            top = np.maximum.reduceat(lw, starts)
            lens = xs + 1
            lr += float(np.sum(top + np.log(np.add.reduceat(np.exp(lw - np.repeat(top, lens)), starts))))
        return lr, seg

    def draw_phi(self, z, x, w, base, seg):
        a, b, rng = self.a, self.b, self.rng
        if not z or w <= 0.0:
            return rng.gamma(a, b, size=x.size)
        c = np.zeros(x.size)
        pos, xs, lw, starts = seg
        if lw is not None:
            lens = xs + 1
            top = np.repeat(np.maximum.reduceat(lw, starts), lens)
            p = np.exp(lw - top)
            cum = np.cumsum(p)
            seg_end = cum[starts + lens - 1]
            seg_start = np.where(starts > 0, cum[starts - 1], 0.0)
            target = seg_start + rng.uniform(size=xs.size) * (seg_end - seg_start)
            idx = np.searchsorted(cum, target, side="right")
            idx = np.minimum(idx, starts + lens - 1)
            c[pos] = idx - starts
        return rng.gamma(a + c, b + w)


class GaussianBirth(BirthStep):
    """Residual ``r = x - rest ~ N(w phi, var_n I)``, ``phi ~ N(0, var_phi I)``."""

    def __init__(self, var_phi: float, var_n: float, rng):
        super().__init__(rng)
        self.var_phi, self.var_n = float(var_phi), float(var_n)

    def log_ratio(self, x, w, r):
        s2, v = self.var_n, w * w * self.var_phi
        lr = -0.5 * r.size * math.log1p(v / s2) + 0.5 * float(np.dot(r, r)) * v / (s2 * (s2 + v))
        return lr, None

    def draw_phi(self, z, x, w, r, _aux):
        rng = self.rng
        if not z:
            return math.sqrt(self.var_phi) * rng.normal(size=r.size)
        prec = 1.0 / self.var_phi + w * w / self.var_n
        return (w / self.var_n) * r / prec + rng.normal(size=r.size) / math.sqrt(prec)
