"""Joint-distribution ("getting it right") test of the full sweep.

Two estimates of the same prior expectations are compared:

* marginal-conditional: independent forward draws of (state, data);
* successive-conditional: a chain that alternates one Gibbs sweep with a
  fresh draw of the data given the state.

A correct transition operator leaves the joint invariant, so the two means of
every statistic agree.  Standard errors of the chain use batch means.
"""
from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from . import ggm, pgm, rhbp
from .engine import Concentrations, ModelState, SweepConfig, gibbs_sweep
from .rhbp import Assignments, StickState
from .rng import RngStream
from .special import sample_discrete_log, stirling_table

STATS = ("active_k", "beta_1", "mean_alpha", "mean_phi", "noise")


@dataclass
class GewekeConfig:
    kind: str = "pgm"
    M: int = 3
    sizes: tuple = (4, 4)
    tau0: float = 1.0
    alpha_prior: tuple = (2.0, 2.0)
    hyper: dict = field(default_factory=dict)
    n_samples: int = 10_000
    n_batches: int = 50
    stick_floor: float = 1e-12


def default_hyper(kind: str) -> dict:
    if kind == "pgm":
        return {"a_phi": 2.0, "b_phi": 2.0, "a_w": [2.0, 2.0], "b_w": [2.0, 2.0], "a_lam": 2.0, "b_lam": 2.0,
                "resample_scales": False}
    return {"prec_prior": (3.0, 3.0)}


def _column(alpha, beta, N, rng) -> np.ndarray:
    """One binary column with pi integrated out (sequential urn)."""
    z = np.zeros(N, dtype=np.int8)
    n = 0
    for i in range(N):
        if rng.uniform() < (n + alpha * beta) / (i + alpha):
            z[i] = 1
            n += 1
    return z


def forward_state(cfg: GewekeConfig, rng) -> ModelState:
    """Exact prior draw in the sampler's representation (one trailing inactive stick)."""
    a, b = cfg.alpha_prior
    J = len(cfg.sizes)
    alphas = rng.gamma(a, b, size=J)
    betas, cols = [], []
    prev = 1.0
    last_active = -1
    while prev > cfg.stick_floor:
        prev = prev * float(rng.beta(cfg.tau0, 1.0))
        col = [_column(alphas[j], prev, cfg.sizes[j], rng) for j in range(J)]
        betas.append(prev)
        cols.append(col)
        if any(c.any() for c in col):
            last_active = len(betas) - 1
    K = last_active + 2
    Z = [np.column_stack([cols[k][j] for k in range(K)]) for j in range(J)]
    cls = pgm.PgmParams if cfg.kind == "pgm" else ggm.GgmParams
    hyper = cfg.hyper or default_hyper(cfg.kind)
    params = cls.from_prior(cfg.M, list(cfg.sizes), K, rng, **hyper)
    return ModelState(StickState(np.asarray(betas[:K]), cfg.tau0, 1.0), Assignments(Z),
                      Concentrations(alphas, cfg.alpha_prior), params)


def simulate_data(state: ModelState, rng) -> list:
    p = state.params
    out = []
    for j, Z in enumerate(state.assign.Z):
        mean = p.Phi @ (Z * p.W[j]).T
        if state.kind == "pgm":
            out.append(rng.poisson(mean + p.lam[j]).astype(float))
        else:
            out.append(mean + math.sqrt(p.var_n[j]) * rng.normal(size=mean.shape))
    return out


def statistics(state: ModelState) -> np.ndarray:
    p = state.params
    noise = float(np.mean(p.lam)) if state.kind == "pgm" else float(np.mean(np.log(p.var_n)))
    return np.array([state.active_k(), state.sticks.betas[0], float(np.mean(state.conc.alphas)),
                     float(np.mean(p.Phi)), noise])


def _batch_se(x: np.ndarray, n_batches: int) -> float:
    n = len(x) // n_batches
    means = x[: n * n_batches].reshape(n_batches, n).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))


@contextmanager
def corrupted_stirling():
    """Mutation used to show the test has power: m is drawn with c(n, m + 1) weights."""
    original = rhbp.sample_m

    def bad_sample_m(n, alpha, beta_k, rng):
        if n == 0:
            return 0
        lw = stirling_table(n).row(n)[1:] + np.arange(n) * math.log(alpha * beta_k)
        return sample_discrete_log(lw, rng)

    rhbp.sample_m = bad_sample_m
    try:
        yield
    finally:
        rhbp.sample_m = original


def geweke_check(cfg: GewekeConfig | None = None, seed: int = 0, mutate: bool = False) -> dict:
    """Return ``{stat: z}`` plus the two sets of means under key ``"_means"``."""
    cfg = cfg or GewekeConfig()
    fwd_rng = RngStream(seed, 0)
    forward = np.array([statistics(forward_state(cfg, fwd_rng)) for _ in range(cfg.n_samples)])

    chain_rng = RngStream(seed, 1)
    sweep_cfg = SweepConfig(model=cfg.kind, tau0=cfg.tau0, alpha_prior=cfg.alpha_prior, resample_scales=False)
    state = forward_state(cfg, chain_rng)
    X = simulate_data(state, chain_rng)
    succ = np.empty_like(forward)
    ctx = corrupted_stirling() if mutate else _null()
    # the corrupted chain wanders into overflow territory; that is the point
    with ctx, np.errstate(over="ignore"):
        for t in range(cfg.n_samples):
            gibbs_sweep(state, X, chain_rng, sweep_cfg)
            X = simulate_data(state, chain_rng)
            succ[t] = statistics(state)

    out = {}
    for i, name in enumerate(STATS):
        se_f = forward[:, i].std(ddof=1) / math.sqrt(cfg.n_samples)
        se_s = _batch_se(succ[:, i], cfg.n_batches)
        den = math.hypot(se_f, se_s)
        diff = succ[:, i].mean() - forward[:, i].mean()
        out[name] = float(diff / den) if den > 0 else (0.0 if diff == 0 else math.inf)
    out["_means"] = {"forward": forward.mean(axis=0).tolist(), "chain": succ.mean(axis=0).tolist()}
    return out


@contextmanager
def _null():
    yield
