"""Adaptive rejection sampling for log-concave univariate densities.

The envelope is the tangent-line upper hull of Gilks & Wild with a chord
squeeze.  When the log-density turns out not to be concave, the sampler
falls back to one shrinkage slice-sampling step on the bounded support and
records the event in ``ArsSampler.fallbacks`` and the module counter
:data:`diagnostics`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import betainc, betaincc, betaincinv, betainccinv, logsumexp

MAX_SEGMENTS = 64
N_INIT = 5
CONCAVITY_TOL = 1e-8
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

diagnostics = {"ars_fallback": 0, "ars_samples": 0}


class ConcavityError(RuntimeError):
    pass


@dataclass
class ArsTarget:
    """A univariate log-density on ``(lower, upper)`` with ``lower >= 0``.

    ``derivative`` may be omitted, in which case a central finite difference
    is used.  Support bounds may be shifted/transformed by the caller, so
    only ``lower < upper`` is enforced here; the non-negativity of the
    original support is the caller's concern.
    """

    log_density: Callable[[float], float]
    derivative: Optional[Callable[[float], float]] = None
    lower: float = 0.0
    upper: float = math.inf

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError("ArsTarget needs lower < upper")
        if math.isinf(self.lower):
            raise ValueError("ArsTarget lower bound must be finite")

    def h(self, x: float) -> float:
        return float(self.log_density(x))

    def dh(self, x: float) -> float:
        if self.derivative is not None:
            return float(self.derivative(x))
        step = 1e-6 * max(1.0, abs(x))
        a = max(x - step, self.lower + 0.5 * (x - self.lower))
        b = min(x + step, x + 0.5 * (self.upper - x)) if math.isfinite(self.upper) else x + step
        return (self.h(b) - self.h(a)) / (b - a)


def _golden_max(f, a, b, iters=40):
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return c if fc >= fd else d


def _working_upper(target: ArsTarget) -> float:
    """Finite right end for the unbounded case: a point with negative slope."""
    if math.isfinite(target.upper):
        return target.upper
    x = target.lower + 1.0
    for _ in range(200):
        if target.dh(x) < 0:
            return x
        x = target.lower + 2.0 * (x - target.lower)
    raise ValueError("log-density does not decrease on the unbounded side")


def default_abscissae(target: ArsTarget) -> list[float]:
    """Five interior points around the golden-section mode estimate."""
    a = target.lower
    b = _working_upper(target)

    def f(x):
        v = target.h(x)
        return v if math.isfinite(v) else -math.inf

    mode = _golden_max(f, a, b)
    pts = [
        mode - 0.618 * (mode - a),
        mode - 0.236 * (mode - a),
        mode,
        mode + 0.236 * (b - mode),
        mode + 0.618 * (b - mode),
    ]
    if not math.isfinite(target.upper):
        pts.append(b)
    out = sorted({p for p in pts if a < p < target.upper and math.isfinite(f(p))})
    if len(out) < 2:
        mid = 0.5 * (a + b)
        out = sorted({a + 0.25 * (b - a), mid, a + 0.75 * (b - a)})
    return out


class ArsSampler:
    """Reusable ARS sampler; the envelope keeps its refinements across draws."""

    def __init__(self, target: ArsTarget, abscissae=None):
        self.target = target
        pts = sorted(set(float(p) for p in (abscissae if abscissae is not None else default_abscissae(target))))
        pts = [p for p in pts if target.lower < p < target.upper]
        if len(pts) < 2:
            raise ValueError("ARS needs at least two interior abscissae")
        self.x = np.array(pts)
        self.hx = np.array([target.h(p) for p in pts])
        self.dhx = np.array([target.dh(p) for p in pts])
        self.fallbacks = 0
        self.concave = self._check_concave()
        if self.concave and not math.isfinite(target.upper) and self.dhx[-1] >= 0:
            raise ValueError("unbounded support needs an abscissa with negative slope")
        if self.concave:
            self._build()

    def _check_concave(self) -> bool:
        if not np.all(np.isfinite(self.hx)) or not np.all(np.isfinite(self.dhx)):
            return False
        scale = 1.0 + np.abs(self.dhx[:-1])
        if np.any(np.diff(self.dhx) > CONCAVITY_TOL * scale):
            return False
        # every point must lie below its neighbours' tangents
        for i in range(len(self.x) - 1):
            t = self.hx[i] + self.dhx[i] * (self.x[i + 1] - self.x[i])
            if self.hx[i + 1] > t + CONCAVITY_TOL * (1 + abs(t)):
                return False
            t = self.hx[i + 1] + self.dhx[i + 1] * (self.x[i] - self.x[i + 1])
            if self.hx[i] > t + CONCAVITY_TOL * (1 + abs(t)):
                return False
        return True

    def _build(self):
        x, h, dh = self.x, self.hx, self.dhx
        n = len(x)
        z = np.empty(n + 1)
        z[0], z[-1] = self.target.lower, self.target.upper
        for i in range(n - 1):
            dd = dh[i] - dh[i + 1]
            if dd > 1e-12 * (1 + abs(dh[i])):
                zi = (h[i + 1] - h[i] - x[i + 1] * dh[i + 1] + x[i] * dh[i]) / dd
                z[i + 1] = min(max(zi, x[i]), x[i + 1])
            else:
                z[i + 1] = 0.5 * (x[i] + x[i + 1])
        self.z = z
        logm = np.empty(n)
        for i in range(n):
            z0, z1, s = z[i], z[i + 1], dh[i]
            w = z1 - z0
            if w <= 0:
                logm[i] = -math.inf
            elif abs(s) * (w if math.isfinite(w) else 1.0) < 1e-10:
                logm[i] = h[i] + s * (0.5 * (z0 + z1) - x[i]) + math.log(w)
            elif s > 0:
                logm[i] = h[i] + s * (z1 - x[i]) + math.log(-math.expm1(-s * w)) - math.log(s)
            else:
                logm[i] = h[i] + s * (z0 - x[i]) + math.log(-math.expm1(s * w)) - math.log(-s)
        self.logm = logm
        self.cum = np.cumsum(np.exp(logm - logsumexp(logm)))

    def upper_hull(self, v: float) -> float:
        j = int(np.searchsorted(self.z[1:-1], v, side="right"))
        return self.hx[j] + self.dhx[j] * (v - self.x[j])

    def squeeze(self, v: float) -> float:
        j = int(np.searchsorted(self.x, v, side="right"))
        if j == 0 or j == len(self.x):
            return -math.inf
        x0, x1 = self.x[j - 1], self.x[j]
        return ((x1 - v) * self.hx[j - 1] + (v - x0) * self.hx[j]) / (x1 - x0)

    def _draw_envelope(self, rng) -> float:
        j = int(np.searchsorted(self.cum, rng.uniform() * self.cum[-1], side="right"))
        j = min(j, len(self.x) - 1)
        z0, z1, s = self.z[j], self.z[j + 1], self.dhx[j]
        w = z1 - z0
        u = rng.uniform()
        if abs(s) * (w if math.isfinite(w) else 1.0) < 1e-10:
            v = z0 + u * w
        elif s < 0:
            v = z0 + math.log1p(u * math.expm1(s * w)) / s
        else:
            v = z1 + math.log1p(u * math.expm1(-s * w)) / s
        return min(max(v, z0), z1)

    def _insert(self, v, hv, dv):
        j = int(np.searchsorted(self.x, v))
        if j < len(self.x) and self.x[j] == v:
            return
        self.x = np.insert(self.x, j, v)
        self.hx = np.insert(self.hx, j, hv)
        self.dhx = np.insert(self.dhx, j, dv)
        self.concave = self._check_concave()
        if self.concave:
            self._build()

    def _fallback(self, rng, x_current):
        self.fallbacks += 1
        diagnostics["ars_fallback"] += 1
        hi = self.target.upper
        if not math.isfinite(hi):
            hi = max(float(self.x[-1]), _working_upper(self.target)) * 4.0
        x0 = x_current
        if x0 is None or not (self.target.lower < x0 < hi):
            x0 = float(self.x[int(np.argmax(self.hx))])
        return slice_step(self.target.h, x0, self.target.lower, hi, rng)

    def sample(self, rng, x_current: float | None = None, max_iter: int = 10000) -> float:
        """One exact draw (or one slice step from ``x_current`` on fallback)."""
        diagnostics["ars_samples"] += 1
        for _ in range(max_iter):
            if not self.concave:
                return self._fallback(rng, x_current)
            v = self._draw_envelope(rng)
            uv = self.upper_hull(v)
            logw = math.log(rng.uniform())
            if logw <= self.squeeze(v) - uv:
                return v
            hv = self.target.h(v)
            if hv > uv + CONCAVITY_TOL * (1 + abs(uv)):
                self.concave = False
                return self._fallback(rng, x_current)
            if logw <= hv - uv:
                if len(self.x) < MAX_SEGMENTS:
                    self._insert(v, hv, self.target.dh(v))
                return v
            if len(self.x) < MAX_SEGMENTS:
                self._insert(v, hv, self.target.dh(v))
        raise RuntimeError("ARS exceeded max_iter without acceptance")

    def sample_many(self, rng, size: int) -> np.ndarray:
        return np.array([self.sample(rng) for _ in range(size)])


def ars_sample(target: ArsTarget, init_abscissae, rng, x_current: float | None = None) -> float:
    """Draw one sample from ``target`` by adaptive rejection sampling."""
    return ArsSampler(target, init_abscissae).sample(rng, x_current=x_current)


def slice_step(log_density, x0: float, lower: float, upper: float, rng, max_shrink: int = 10) -> float:
    """One shrinkage slice-sampling step on the bounded interval ``[lower, upper]``.

    No stepping out: the initial bracket is the full interval.  If no point is
    accepted within ``max_shrink`` shrinks the current point is returned,
    which keeps the move reversible.
    """
    y = log_density(x0) + math.log(rng.uniform())
    lo, hi = lower, upper
    for _ in range(max_shrink):
        v = rng.uniform(lo, hi)
        if v <= lower or v >= upper:
            continue
        if log_density(v) > y:
            return v
        if v < x0:
            lo = v
        else:
            hi = v
    return x0


def _beta_in_logspace(a: float, b: float, lo: float, hi: float, rng) -> float:
    """Truncated beta draw via ARS on ``y = log x``; requires ``b >= 1``."""
    bm1 = b - 1.0

    def h(y):
        return a * y + (bm1 * math.log(-math.expm1(y)) if bm1 > 0 else 0.0)

    def dh(y):
        return a - (bm1 * math.exp(y) / -math.expm1(y) if bm1 > 0 else 0.0)

    ylo, yhi = math.log(lo), math.log(hi)
    target = ArsTarget(h, dh, ylo, yhi)
    pts = [ylo + f * (yhi - ylo) for f in (0.1, 0.3, 0.5, 0.7, 0.9)]
    y = ArsSampler(target, pts).sample(rng)
    return min(max(math.exp(y), lo), hi)


def sample_truncated_beta(a: float, b: float, lo: float, hi: float, rng) -> float:
    """Draw from beta(a, b) restricted to ``[lo, hi]``.

    Inverse CDF through the regularized incomplete beta function, using the
    lower or upper tail whichever keeps precision.  ``a = 0`` (an improper
    beta made proper by ``lo > 0``) and intervals whose mass underflows go
    through ARS on the log scale, which needs ``b >= 1``.
    """
    if not 0.0 <= lo < hi <= 1.0:
        raise ValueError(f"bad truncation interval [{lo}, {hi}]")
    if a < 0 or b <= 0:
        raise ValueError("need a >= 0 and b > 0")
    if a > 0:
        p_lo, p_hi = betainc(a, b, lo), betainc(a, b, hi)
        if p_hi <= 0.5:
            mass = p_hi - p_lo
            if mass > 1e-9 * p_hi and mass > 0:
                x = float(betaincinv(a, b, p_lo + rng.uniform() * mass))
                return min(max(x, lo), hi)
        else:
            q_lo, q_hi = betaincc(a, b, lo), betaincc(a, b, hi)
            mass = q_lo - q_hi
            if mass > 1e-9 * q_lo and mass > 0:
                x = float(betainccinv(a, b, q_hi + rng.uniform() * mass))
                return min(max(x, lo), hi)
    if lo <= 0.0:
        if a == 0:
            raise ValueError("beta(0, b) needs a positive lower truncation bound")
        lo = min(hi * 1e-300, 1e-300)
    if b < 1:
        raise ValueError("log-scale fallback needs b >= 1")
    return _beta_in_logspace(a, b, lo, hi, rng)
