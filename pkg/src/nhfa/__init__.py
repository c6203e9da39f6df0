"""Nonparametric hierarchical factor analysis with a restricted hierarchical
beta process prior, fitted by a slice-augmented Gibbs sampler."""
from .engine import ModelState, SweepConfig, TraceRecord, gibbs_sweep, init_state, log_joint, run_chain
from .rng import RngStream

__version__ = "0.1.0"

__all__ = [
    "ModelState",
    "RngStream",
    "SweepConfig",
    "TraceRecord",
    "gibbs_sweep",
    "init_state",
    "log_joint",
    "run_chain",
]
