"""Full Gibbs sweeps, chains and the log joint."""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import gammaln

from . import ggm, pgm, rhbp
from .rhbp import Assignments, AuxState, InactiveTail, StickState
from .rng import RngStream

MODELS = {"pgm": pgm, "ggm": ggm}


class StateCorruptionError(RuntimeError):
    pass


@dataclass
class Concentrations:
    alphas: np.ndarray
    prior: tuple = (1.0, 1.0)

    def __post_init__(self):
        self.alphas = np.asarray(self.alphas, dtype=float)
        if np.any(self.alphas <= 0):
            raise ValueError("concentrations must be positive")


@dataclass
class SweepConfig:
    iterations: int = 100
    burn_in: int = 0
    thin: int = 1
    seed: int = 0
    model: str = "pgm"
    freeze_phi: bool = False
    resample_scales: bool = True
    collapsed_births: bool = True
    tau0: float = 1.0
    alpha_prior: tuple = (1.0, 1.0)
    check_invariants: bool = False
    record_timing: bool = False

    def validate(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model kind {self.model!r}")
        if self.iterations < 1 or self.thin < 1:
            raise ValueError("iterations and thin must be at least 1")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("burn_in must satisfy 0 <= burn_in < iterations")
        if self.tau0 <= 0:
            raise ValueError("tau0 must be positive")
        return self


@dataclass
class TraceRecord:
    iteration: int
    active_k: int
    k_dagger: int
    rho: float
    log_joint: float
    alpha: list
    nuisance: dict
    wall_ms: float | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["wall_ms"] is None:
            del d["wall_ms"]
        return d


@dataclass
class ModelState:
    sticks: StickState
    assign: Assignments
    conc: Concentrations
    params: object
    aux: AuxState = field(default_factory=AuxState)

    @property
    def kind(self) -> str:
        return self.params.kind

    @property
    def K(self) -> int:
        return len(self.sticks.betas)

    def active_k(self) -> int:
        return int(np.count_nonzero(self.assign.totals))

    def tail(self) -> InactiveTail:
        return InactiveTail(self.conc.alphas, self.assign.sizes, self.sticks.tau0)

    def copy(self) -> "ModelState":
        return ModelState(
            StickState(self.sticks.betas.copy(), self.sticks.tau0, self.sticks.rho),
            Assignments([z.copy() for z in self.assign.Z]),
            Concentrations(self.conc.alphas.copy(), self.conc.prior),
            self.params.copy(),
        )

    def check(self):
        self.sticks.check()
        self.assign.check()
        K = self.K
        if self.assign.K != K or self.params.Phi.shape[1] != K or any(w.shape[1] != K for w in self.params.W):
            raise AssertionError("column counts disagree")
        if np.any(self.conc.alphas <= 0):
            raise AssertionError("non-positive concentration")


def init_state(X_list, kind: str, rng, tau0=1.0, alpha_prior=(1.0, 1.0), **hyper) -> ModelState:
    """One inactive stick drawn from its prior, empty Z, parameters from the priors."""
    M = X_list[0].shape[0]
    sizes = [X.shape[1] for X in X_list]
    beta1 = float(rng.beta(tau0, 1.0))
    cls = pgm.PgmParams if kind == "pgm" else ggm.GgmParams
    params = cls.from_prior(M, sizes, 1, rng, **hyper)
    a, b = alpha_prior
    return ModelState(StickState([beta1], tau0, 1.0), Assignments.empty(sizes, 1),
                      Concentrations(np.full(len(sizes), a / b), alpha_prior), params)


# --- sweep steps ---------------------------------------------------------------

def extend_representation(state: ModelState, rng, tail: InactiveTail | None = None) -> int:
    """Append sticks below the last one until it falls under rho; returns how many."""
    rho = state.sticks.rho
    betas = list(state.sticks.betas)
    tail = state.tail() if tail is None else tail
    new = []
    while betas[-1] >= rho:
        if len(new) >= rhbp.MAX_EXTENSION:
            raise rhbp.ExtensionError(f"more than {rhbp.MAX_EXTENSION} new sticks (rho={rho:g})")
        b = tail.draw(betas[-1], rng)
        betas.append(b)
        new.append(b)
    if new:
        state.sticks.betas = np.asarray(betas)
        state.assign.add_columns(len(new))
        state.params.append_columns(len(new), rng)
        state.aux.v = [[rhbp.sample_v(a, b, int(n), rng) for a, n in zip(state.conc.alphas, state.assign.sizes)]
                       for b in new]
    else:
        state.aux.v = []
    return len(new)


def compact_state(state: ModelState):
    """Keep every active column plus exactly one trailing inactive one."""
    act = np.flatnonzero(state.assign.totals)
    K = int(act[-1]) + 2 if act.size else 1
    if K < state.K:
        state.sticks.betas = state.sticks.betas[:K].copy()
        state.assign.keep_columns(K)
        state.params.keep_columns(K)


def update_sticks(state: ModelState, m, l, rng, tail: InactiveTail):
    betas = state.sticks.betas
    K = len(betas)
    ms, ls = m.sum(axis=0), l.sum(axis=0)
    for k in range(K - 1):
        betas[k] = rhbp.sample_beta_active(k, betas, int(ms[k]), int(ls[k]), rng)
    prev = float(betas[K - 2]) if K >= 2 else 1.0
    betas[K - 1] = tail.draw(prev, rng)


def update_alphas(state: ModelState, rng):
    """Auxiliary-variable gamma proposal per source, corrected for the integrated tail."""
    betas = state.sticks.betas
    m, l = rhbp.sample_ml(state.assign, betas, state.conc.alphas, rng)
    sizes = state.assign.sizes
    tau0 = state.sticks.tau0
    blast = float(betas[-1])
    for j in range(state.assign.J):
        def log_tail(a, j=j):
            alphas = state.conc.alphas.copy()
            alphas[j] = a
            return InactiveTail(alphas, sizes, tau0).log_tail(blast)

        state.conc.alphas[j] = rhbp.sample_alpha(float(state.conc.alphas[j]), m[j], l[j], int(sizes[j]),
                                                 state.conc.prior, rng, log_tail=log_tail)
    return m, l


def gibbs_sweep(state: ModelState, X_list, rng, cfg: SweepConfig | None = None) -> ModelState:
    cfg = cfg or SweepConfig(model=state.kind)
    model = MODELS[state.kind]
    sticks, assign = state.sticks, state.assign

    sticks.rho = rhbp.sample_slice(rhbp.beta_star(sticks.betas, assign.active()), rng)
    tail = state.tail()
    extend_representation(state, rng, tail)
    k_elig = int(np.count_nonzero(sticks.betas >= sticks.rho))
    for j, X in enumerate(X_list):
        model.z_sweep(j, X, state.assign, state.params, sticks.betas, state.conc.alphas[j], k_elig, rng,
                      births=cfg.collapsed_births and not cfg.freeze_phi)
    compact_state(state)

    m, l = rhbp.sample_ml(state.assign, sticks.betas, state.conc.alphas, rng)
    update_sticks(state, m, l, rng, tail)

    if state.kind == "pgm":
        state.params.resample_scales = cfg.resample_scales
    model.update(X_list, state.assign, state.params, rng, freeze_phi=cfg.freeze_phi)

    m, l = update_alphas(state, rng)
    state.aux.m, state.aux.l = m, l
    if cfg.check_invariants:
        state.check()
    return state


# --- log joint ---------------------------------------------------------------------

def log_joint(state: ModelState, X_list=None) -> float:
    """Sticks, Z columns (pi integrated), integrated tail, alpha prior, parameter priors, data."""
    betas = state.sticks.betas
    tau0 = state.sticks.tau0
    lj = 0.0
    prev = 1.0
    for b in betas:
        lj += rhbp.stick_log_density(float(b), prev, tau0)
        prev = float(b)
    for j, z in enumerate(state.assign.Z):
        N = z.shape[0]
        a = float(state.conc.alphas[j])
        for k, n in enumerate(state.assign.n[j]):
            lj += rhbp.column_log_marginal(int(n), N, float(betas[k]), a)
    lj += state.tail().log_tail(float(betas[-1]))
    ap, bp = state.conc.prior
    al = state.conc.alphas
    lj += float(np.sum(ap * math.log(bp) - gammaln(ap) + (ap - 1) * np.log(al) - bp * al))
    model = MODELS[state.kind]
    lj += model.log_prior(state.params)
    if X_list is not None:
        lj += data_log_likelihood(state, X_list)
    return lj


def data_log_likelihood(state: ModelState, X_list) -> float:
    p = state.params
    if state.kind == "pgm":
        return sum(pgm.log_likelihood(X, p.Phi, Z, W, lam) for X, Z, W, lam in zip(X_list, state.assign.Z, p.W, p.lam))
    return sum(ggm.log_likelihood(X, p.Phi, Z, W, v) for X, Z, W, v in zip(X_list, state.assign.Z, p.W, p.var_n))


# --- chains ---------------------------------------------------------------------------

def iteration_rng(seed: int, t: int) -> RngStream:
    """Sweep ``t`` (0-based) draws from its own substream, so a chain can resume anywhere."""
    return RngStream(seed, t + 1)


def run_chain(X_list, cfg: SweepConfig, state: ModelState | None = None, start: int = 0,
              on_record=None, on_snapshot=None, hyper: dict | None = None):
    """Run sweeps ``start .. cfg.iterations - 1``.

    Returns ``(snapshots, trace)`` where snapshots are ``(iteration, state copy)``
    pairs.  ``on_record`` / ``on_snapshot`` are optional streaming callbacks.
    """
    cfg.validate()
    X_list = [np.asarray(X) for X in X_list]
    if len({X.shape[0] for X in X_list}) != 1:
        raise ValueError("all sources must share the same number of rows")
    if state is None:
        state = init_state(X_list, cfg.model, RngStream(cfg.seed, 0), cfg.tau0, cfg.alpha_prior, **(hyper or {}))
    snapshots, trace = [], []
    for t in range(start, cfg.iterations):
        t0 = time.perf_counter()
        gibbs_sweep(state, X_list, iteration_rng(cfg.seed, t), cfg)
        lj = log_joint(state, X_list)
        if not math.isfinite(lj):
            raise StateCorruptionError(f"log joint is {lj} after sweep {t}")
        rec = TraceRecord(t, state.active_k(), state.K, float(state.sticks.rho), lj,
                          [float(a) for a in state.conc.alphas], state.params.nuisance(),
                          (time.perf_counter() - t0) * 1e3 if cfg.record_timing else None)
        trace.append(rec)
        if on_record:
            on_record(rec)
        if t >= cfg.burn_in and (t - cfg.burn_in + 1) % cfg.thin == 0:
            snap = state.copy()
            snapshots.append((t, snap))
            if on_snapshot:
                on_snapshot(t, snap)
    return snapshots, trace
