"""Snapshot and trace files.

Snapshots are JSON documents; dense float arrays are stored as base64 of their
little-endian float64 bytes in row-major order together with the shape, so a
round trip is bit-exact.  Binary matrices ``Z_j`` are stored as per-row lists
of active column indices.
"""
from __future__ import annotations

import base64
import json
import os
import tempfile
from contextlib import contextmanager

import numpy as np

from .engine import Concentrations, ModelState
from .ggm import GgmParams
from .pgm import PgmParams
from .rhbp import Assignments, StickState

FORMAT_VERSION = 1


class SnapshotFormatError(ValueError):
    pass


def encode_array(a) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "dtype": "float64",
            "data": base64.b64encode(a.tobytes()).decode("ascii")}


def decode_array(d) -> np.ndarray:
    if d.get("dtype") != "float64":
        raise SnapshotFormatError("only float64 arrays are supported")
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(d["shape"]).astype(float)


def encode_z(Z) -> dict:
    return {"shape": list(Z.shape), "rows": [np.flatnonzero(r).tolist() for r in Z]}


def decode_z(d) -> np.ndarray:
    Z = np.zeros(d["shape"], dtype=np.int8)
    for i, cols in enumerate(d["rows"]):
        Z[i, cols] = 1
    return Z


def _params_to_dict(p) -> dict:
    if p.kind == "pgm":
        return {"Phi": encode_array(p.Phi), "W": [encode_array(w) for w in p.W],
                "lambda": encode_array(p.lam), "a_phi": p.a_phi, "b_phi": p.b_phi,
                "a_w": encode_array(p.a_w), "b_w": encode_array(p.b_w),
                "a_lambda": p.a_lam, "b_lambda": p.b_lam, "resample_scales": p.resample_scales}
    return {"Phi": encode_array(p.Phi), "W": [encode_array(w) for w in p.W],
            "var_phi": p.var_phi, "var_w": encode_array(p.var_w), "var_n": encode_array(p.var_n),
            "prec_prior": list(p.prec_prior)}


def _params_from_dict(kind, d):
    W = [decode_array(w) for w in d["W"]]
    if kind == "pgm":
        return PgmParams(decode_array(d["Phi"]), W, decode_array(d["lambda"]), d["a_phi"], d["b_phi"],
                         decode_array(d["a_w"]), decode_array(d["b_w"]), d["a_lambda"], d["b_lambda"],
                         d["resample_scales"])
    if kind == "ggm":
        return GgmParams(decode_array(d["Phi"]), W, d["var_phi"], decode_array(d["var_w"]),
                         decode_array(d["var_n"]), tuple(d["prec_prior"]))
    raise SnapshotFormatError(f"unknown model kind {kind!r}")


def state_to_dict(state: ModelState, seed: int, iteration: int) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "model": state.kind,
        "seed": int(seed),
        "iteration": int(iteration),
        "sticks": {"betas": encode_array(state.sticks.betas), "k_dagger": state.K,
                   "rho": state.sticks.rho, "tau0": state.sticks.tau0},
        "alpha": encode_array(state.conc.alphas),
        "alpha_prior": list(state.conc.prior),
        "Z": [encode_z(z) for z in state.assign.Z],
        "params": _params_to_dict(state.params),
    }


def state_from_dict(d: dict) -> tuple[ModelState, dict]:
    if d.get("format_version") != FORMAT_VERSION:
        raise SnapshotFormatError(f"unsupported snapshot format {d.get('format_version')!r}")
    s = d["sticks"]
    state = ModelState(
        StickState(decode_array(s["betas"]), s["tau0"], s["rho"]),
        Assignments([decode_z(z) for z in d["Z"]]),
        Concentrations(decode_array(d["alpha"]), tuple(d["alpha_prior"])),
        _params_from_dict(d["model"], d["params"]),
    )
    if state.K != s["k_dagger"]:
        raise SnapshotFormatError("k_dagger does not match the stick count")
    meta = {k: d[k] for k in ("model", "seed", "iteration")}
    return state, meta


@contextmanager
def atomic_write(path, mode="w"):
    """Write to a temporary file next to ``path`` and rename it into place on success."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, mode) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def save_snapshot(path, state: ModelState, seed: int, iteration: int):
    with atomic_write(path) as fh:
        fh.write(dumps(state_to_dict(state, seed, iteration)))
        fh.write("\n")


def load_snapshot(path) -> tuple[ModelState, dict]:
    with open(path) as fh:
        return state_from_dict(json.load(fh))


def trace_line(record, seed: int, model: str) -> str:
    d = record.to_dict()
    d.update(seed=int(seed), model=model, format_version=FORMAT_VERSION)
    return dumps(d)


def read_trace(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
