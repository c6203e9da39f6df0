"""Special functions: log-space Stirling numbers, harmonic/tail sums and
log-weight discrete sampling."""
from __future__ import annotations

import math
import threading

import numpy as np
from scipy.special import logsumexp


class DegenerateDistributionError(ValueError):
    """Raised when every log-weight is -inf."""


class StirlingTable:
    """Triangular table of log unsigned Stirling numbers of the first kind.

    ``table.log_c(n, k)`` is ``log c(n, k)`` for ``0 <= k <= n <= max_n``,
    ``-inf`` where ``c(n, k) = 0``.  Rows are built with the recurrence
    ``c(n+1, k) = n c(n, k) + c(n, k-1)`` evaluated with ``logaddexp``.
    The table is immutable once built.
    """

    def __init__(self, max_n: int):
        if max_n < 0:
            raise ValueError("max_n must be non-negative")
        self.max_n = int(max_n)
        rows = [np.zeros(1)]
        prev = rows[0]
        for n in range(self.max_n):
            row = np.full(n + 2, -np.inf)
            if n > 0:
                row[1:n + 1] = np.logaddexp(math.log(n) + prev[1:], prev[:-1])
            row[n + 1] = 0.0
            row.flags.writeable = False
            rows.append(row)
            prev = row
        rows[0].flags.writeable = False
        self._rows = rows

    def row(self, n: int) -> np.ndarray:
        """Read-only view of ``log c(n, 0..n)``."""
        if not 0 <= n <= self.max_n:
            raise ValueError(f"n={n} outside table range [0, {self.max_n}]")
        return self._rows[n]

    def log_c(self, n: int, k: int) -> float:
        if not 0 <= k <= n <= self.max_n:
            raise ValueError(f"(n={n}, k={k}) outside table range (max_n={self.max_n})")
        return float(self._rows[n][k])


_lock = threading.Lock()
_shared = StirlingTable(64)


def stirling_table(max_n: int) -> StirlingTable:
    """Shared table covering at least ``max_n``; grows by doubling."""
    global _shared
    tab = _shared
    if tab.max_n >= max_n:
        return tab
    with _lock:
        if _shared.max_n < max_n:
            _shared = StirlingTable(max(max_n, 2 * _shared.max_n))
        return _shared


def log_stirling1(n: int, k: int, table: StirlingTable | None = None) -> float:
    """log of the unsigned Stirling number of the first kind c(n, k)."""
    if not (isinstance(n, (int, np.integer)) and isinstance(k, (int, np.integer))):
        raise TypeError("n and k must be integers")
    if not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n, got n={n}, k={k}")
    tab = table if table is not None else stirling_table(n)
    return tab.log_c(n, k)


def sample_discrete_log(log_weights, rng) -> int:
    """Draw an index with probability proportional to ``exp(log_weights)``."""
    lw = np.asarray(log_weights, dtype=float)
    if lw.ndim != 1 or lw.size == 0:
        raise ValueError("log_weights must be a non-empty 1-d sequence")
    top = lw.max()
    if not np.isfinite(top):
        if top == np.inf:
            raise ValueError("log-weights must not contain +inf")
        raise DegenerateDistributionError("all log-weights are -inf")
    p = np.exp(lw - top)
    c = np.cumsum(p)
    u = rng.uniform() * c[-1]
    idx = int(np.searchsorted(c, u, side="right"))
    # guard against u landing exactly on the total
    return min(idx, lw.size - 1)


def harmonic_and_tail_sums(u: int, beta_bar: float) -> tuple[float, float]:
    """Return ``(H_u, T_u)`` with ``H_u = sum 1/h`` and ``T_u = sum beta_bar**p / p``."""
    if u < 0:
        raise ValueError("u must be non-negative")
    if u == 0:
        return 0.0, 0.0
    p = np.arange(1, u + 1, dtype=float)
    return float(np.sum(1.0 / p)), float(np.sum(beta_bar ** p / p))


def table_count_log_pmf(n: int, theta: float, table: StirlingTable | None = None) -> np.ndarray:
    """Normalized log pmf of ``u`` with weights ``c(n, u) theta**u``, ``u = 0..n``.

    This is the distribution of the number of occupied tables after ``n``
    customers in a Chinese restaurant with concentration ``theta``.
    """
    if n == 0:
        return np.zeros(1)
    if theta <= 0:
        raise ValueError("theta must be positive")
    tab = table if table is not None else stirling_table(n)
    lw = tab.row(n) + np.arange(n + 1) * math.log(theta)
    return lw - logsumexp(lw)


def log_rising_factorial(x: float, n: int) -> float:
    """log of x (x+1) ... (x+n-1) via log-gamma."""
    if n == 0:
        return 0.0
    return math.lgamma(x + n) - math.lgamma(x)


def log_beta_draw(a: float, b: float, rng, size=None):
    """``log w`` for ``w ~ beta(a, b)`` without underflow when ``a`` is tiny.

    Uses ``G_a = G_{a+1} U**(1/a)`` so the log of the small gamma variate is
    formed directly.
    """
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        lg1 = np.log(rng.gamma(a + 1.0, 1.0, size=size)) + np.log1p(-rng.uniform(size=size)) / a
        lg2 = np.log(rng.gamma(b, 1.0, size=size))
        return lg1 - np.logaddexp(lg1, lg2)
