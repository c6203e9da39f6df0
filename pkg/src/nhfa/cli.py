"""Command-line front end: ``nhfa synth|fit|perplexity|retrieve|diagnose``.

Options may also come from a JSON file given with ``--config``; explicit flags
override it and unknown keys are rejected.  ``NHFA_SEED`` supplies the default
seed.  Exit codes: 0 success, 2 configuration error, 3 runtime error,
4 diagnostic failure.
"""
from __future__ import annotations

import argparse
import csv
import glob
import json
import logging
import os
import shutil
import sys
import tempfile

import numpy as np

from . import data as data_mod
from . import evaluation, io
from .engine import SweepConfig, run_chain
from .predictive import PredictiveConfig, heldout_infer, pair_log_likelihoods, predictive_log_likelihood
from .rng import RngStream

log = logging.getLogger("nhfa")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_DIAGNOSTIC = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


def _default_seed() -> int:
    v = os.environ.get("NHFA_SEED")
    if v is None:
        return 0
    try:
        return int(v)
    except ValueError:
        raise ConfigError(f"NHFA_SEED must be an integer, got {v!r}") from None


DEFAULTS = {
    "synth": {"out": None, "M": 100, "J": 2, "exclusive": 4, "shared": 4, "N": [100, 100],
              "w_shape": 1.0, "w_rate": 0.5, "noise_rate": 0.1, "z_density": 0.5,
              "factor_density": 0.5, "noise_sd": 0.0, "model": "pgm", "format": "csv"},
    "fit": {"data": None, "out": None, "format": "csv", "model": "pgm", "iters": 500, "burn": 0,
            "thin": 10, "tau0": 1.0, "alpha_prior": [1.0, 1.0], "hyper_scales": True,
            "timing": False, "resume": None},
    "perplexity": {"snapshots": None, "test": None, "source": 0, "format": "csv", "L": 10, "R": 10,
                   "heldout_burn": 20, "out": None, "dump_pairs": None},
    "retrieve": {"snapshots": None, "test": None, "test_labels": None, "train_labels": None,
                 "format": "csv", "n_list": [10, 20, 50], "out": None},
    "diagnose": {"samples": 10_000, "models": ["pgm", "ggm"], "mutate": False, "out": None},
}


def _csv_ints(s):
    return [int(x) for x in s.split(",") if x]


def _csv_floats(s):
    return [float(x) for x in s.split(",") if x]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nhfa", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON file with option values (flags win)")
        sp.add_argument("--seed", type=int)
        return sp

    S = argparse.SUPPRESS
    s = common(sub.add_parser("synth", help="generate synthetic multi-source data", argument_default=S))
    s.add_argument("--out")
    s.add_argument("--M", type=int)
    s.add_argument("--J", type=int)
    s.add_argument("--exclusive", type=int)
    s.add_argument("--shared", type=int)
    s.add_argument("--N", type=_csv_ints, help="comma-separated documents per source")
    s.add_argument("--w-shape", dest="w_shape", type=float)
    s.add_argument("--w-rate", dest="w_rate", type=float)
    s.add_argument("--noise-rate", dest="noise_rate", type=float)
    s.add_argument("--noise-sd", dest="noise_sd", type=float)
    s.add_argument("--z-density", dest="z_density", type=float)
    s.add_argument("--factor-density", dest="factor_density", type=float)
    s.add_argument("--model", choices=["pgm", "ggm"])
    s.add_argument("--format", choices=["csv", "mm"])

    f = common(sub.add_parser("fit", help="run the Gibbs sampler", argument_default=S))
    f.add_argument("--data", nargs="+")
    f.add_argument("--out")
    f.add_argument("--format", choices=["csv", "mm"])
    f.add_argument("--model", choices=["pgm", "ggm"])
    f.add_argument("--iters", type=int)
    f.add_argument("--burn", type=int)
    f.add_argument("--thin", type=int)
    f.add_argument("--tau0", type=float)
    f.add_argument("--alpha-prior", dest="alpha_prior", type=_csv_floats)
    f.add_argument("--no-hyper-scales", dest="hyper_scales", action="store_false")
    f.add_argument("--timing", action="store_true", help="record wall-clock time in the trace")
    f.add_argument("--resume", help="continue from this snapshot file")

    q = common(sub.add_parser("perplexity", help="held-out perplexity per document", argument_default=S))
    q.add_argument("--snapshots", help="fit output directory")
    q.add_argument("--test")
    q.add_argument("--source", type=int, help="0-based source index of the test documents")
    q.add_argument("--format", choices=["csv", "mm"])
    q.add_argument("--L", type=int)
    q.add_argument("--R", type=int)
    q.add_argument("--heldout-burn", dest="heldout_burn", type=int)
    q.add_argument("--out")
    q.add_argument("--dump-pairs", dest="dump_pairs", help="CSV of per-sample log-likelihoods")

    r = common(sub.add_parser("retrieve", help="cosine-similarity retrieval metrics", argument_default=S))
    r.add_argument("--snapshots")
    r.add_argument("--test")
    r.add_argument("--test-labels", dest="test_labels")
    r.add_argument("--train-labels", dest="train_labels", nargs="+")
    r.add_argument("--format", choices=["csv", "mm"])
    r.add_argument("--n-list", dest="n_list", type=_csv_ints)
    r.add_argument("--out")

    d = common(sub.add_parser("diagnose", help="sampler self-checks", argument_default=S))
    d.add_argument("--samples", type=int)
    d.add_argument("--models", type=lambda s: s.split(","))
    d.add_argument("--mutate", action="store_true", help="inject the corrupted Stirling index")
    d.add_argument("--out")
    return p


def resolve(command: str, ns: argparse.Namespace) -> dict:
    opts = dict(DEFAULTS[command])
    opts["seed"] = None
    given = {k: v for k, v in vars(ns).items() if k not in ("command", "verbose", "config")}
    cfg_path = getattr(ns, "config", None)
    if cfg_path:
        try:
            with open(cfg_path) as fh:
                file_opts = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {cfg_path}: {e}") from None
        if not isinstance(file_opts, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(file_opts) - set(opts)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        opts.update(file_opts)
    opts.update(given)
    if opts["seed"] is None:
        opts["seed"] = _default_seed()
    if not isinstance(opts["seed"], int) or opts["seed"] < 0:
        raise ConfigError("seed must be a non-negative integer")
    return opts


def _require(opts, *keys):
    missing = [k for k in keys if opts.get(k) in (None, [], "")]
    if missing:
        raise ConfigError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


class _StagedDir:
    """Collect outputs in a temporary directory and move them into place only on success."""

    def __init__(self, out):
        self.out = out
        os.makedirs(out, exist_ok=True)
        self.tmp = tempfile.mkdtemp(dir=out, prefix=".staging-")

    def path(self, *parts):
        p = os.path.join(self.tmp, *parts)
        os.makedirs(os.path.dirname(p), exist_ok=True)
        return p

    def commit(self):
        for root, _, files in os.walk(self.tmp):
            rel = os.path.relpath(root, self.tmp)
            dest = os.path.normpath(os.path.join(self.out, rel))
            os.makedirs(dest, exist_ok=True)
            for f in files:
                os.replace(os.path.join(root, f), os.path.join(dest, f))
        shutil.rmtree(self.tmp, ignore_errors=True)

    def abort(self):
        shutil.rmtree(self.tmp, ignore_errors=True)


def _write_json(path, obj):
    with io.atomic_write(path) as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# --- commands -------------------------------------------------------------------

def cmd_synth(o) -> int:
    _require(o, "out")
    spec = data_mod.SynthSpec(M=o["M"], J=o["J"], exclusive=o["exclusive"], shared=o["shared"],
                              N=tuple(o["N"]), w_shape=o["w_shape"], w_rate=o["w_rate"],
                              noise_rate=o["noise_rate"], z_density=o["z_density"],
                              factor_density=o["factor_density"], noise_sd=o["noise_sd"], model=o["model"])
    try:
        spec.validate()
    except ValueError as e:
        raise ConfigError(str(e)) from None
    ds, truth = data_mod.synth_generate(spec, RngStream(o["seed"], 0))
    stage = _StagedDir(o["out"])
    try:
        for name, X, cols in zip(ds.names, ds.matrices, ds.col_ids):
            if o["format"] == "csv":
                data_mod.write_csv(stage.path(f"{name}.csv"), X, ds.row_labels, cols)
            else:
                data_mod.write_matrix_market(stage.path(f"{name}.mtx"), X, ds.row_labels)
        data_mod.write_csv(stage.path("truth", "phi.csv"), truth.Phi, ds.row_labels,
                           [f"f{k}" for k in range(spec.K)])
        for name, Z, W, cols in zip(ds.names, truth.Z, truth.W, ds.col_ids):
            fl = [f"f{k}" for k in range(spec.K)]
            data_mod.write_csv(stage.path("truth", f"Z_{name}.csv"), Z, cols, fl)
            data_mod.write_csv(stage.path("truth", f"W_{name}.csv"), W, cols, fl)
        _write_json(stage.path("synth.json"), {"seed": o["seed"], **{k: o[k] for k in DEFAULTS["synth"] if k != "out"}})
        stage.commit()
    except BaseException:
        stage.abort()
        raise
    print(f"wrote {spec.J} sources to {o['out']}")
    return EXIT_OK


def _load_training(paths, fmt, model):
    ds = data_mod.load_sources(paths, fmt=fmt, mode="counts" if model == "pgm" else "reals")
    return ds


def cmd_fit(o) -> int:
    _require(o, "data", "out")
    model = o["model"]
    cfg = SweepConfig(iterations=o["iters"], burn_in=o["burn"], thin=o["thin"], seed=o["seed"], model=model,
                      resample_scales=bool(o["hyper_scales"]), tau0=float(o["tau0"]),
                      alpha_prior=tuple(o["alpha_prior"]), record_timing=bool(o["timing"]))
    try:
        cfg.validate()
    except ValueError as e:
        raise ConfigError(str(e)) from None
    ds = _load_training(o["data"], o["format"], model)
    out = o["out"]
    state, start = None, 0
    if o["resume"]:
        state, meta = io.load_snapshot(o["resume"])
        if meta["model"] != model or meta["seed"] != cfg.seed:
            raise ConfigError("resume snapshot has a different model kind or seed")
        start = meta["iteration"] + 1
    hyper = {"resample_scales": cfg.resample_scales} if model == "pgm" else {}

    stage = _StagedDir(out)
    try:
        trace_path = stage.path("trace.jsonl")
        if o["resume"] and os.path.exists(os.path.join(out, "trace.jsonl")):
            with open(os.path.join(out, "trace.jsonl")) as src:
                kept = [ln for ln in src if json.loads(ln)["iteration"] < start]
            with open(trace_path, "w") as fh:
                fh.writelines(kept)
        with open(trace_path, "a") as trace_fh, open(stage.path("active_k.csv"), "w", newline="") as kfh:
            kw = csv.writer(kfh, lineterminator="\n")
            kw.writerow(["iteration", "active_k", "log_joint"])

            def on_record(rec):
                trace_fh.write(io.trace_line(rec, cfg.seed, model) + "\n")
                kw.writerow([rec.iteration, rec.active_k, format(rec.log_joint, ".17g")])
                if rec.iteration % 50 == 0:
                    log.info("sweep %d active K %d", rec.iteration, rec.active_k)

            def on_snapshot(t, snap):
                io.save_snapshot(stage.path("snapshots", f"snap_{t:06d}.json"), snap, cfg.seed, t)

            run_chain(ds.matrices, cfg, state=state, start=start, on_record=on_record,
                      on_snapshot=on_snapshot, hyper=hyper)
        _write_json(stage.path("dataset.json"), {"row_labels": ds.row_labels, "sources": ds.names,
                                                 "sizes": [int(X.shape[1]) for X in ds.matrices]})
        stage.commit()
    except BaseException:
        stage.abort()
        raise
    print(f"fit complete: {cfg.iterations - start} sweeps, output in {out}")
    return EXIT_OK


def _snapshot_files(d):
    files = sorted(glob.glob(os.path.join(d, "snapshots", "snap_*.json")))
    if not files:
        raise ConfigError(f"no snapshots under {d}")
    return files


def _load_test(path, fmt, fit_dir, model):
    """Read a test matrix and re-index it onto the training dictionary."""
    X, labels, cols = data_mod.read_csv(path) if fmt == "csv" else data_mod.read_matrix_market(path)
    with open(os.path.join(fit_dir, "dataset.json")) as fh:
        train_labels = json.load(fh)["row_labels"]
    pos = {t: i for i, t in enumerate(train_labels)}
    Y = np.zeros((len(train_labels), X.shape[1]))
    dropped = 0
    for r, lab in enumerate(labels):
        if lab in pos:
            Y[pos[lab]] = X[r]
        else:
            dropped += 1
    if model == "pgm" and (np.any(Y < 0) or np.any(Y != np.round(Y))):
        raise data_mod.DataFormatError("test counts must be non-negative integers")
    return Y, cols, dropped


def cmd_perplexity(o) -> int:
    _require(o, "snapshots", "test")
    files = _snapshot_files(o["snapshots"])
    snaps = [io.load_snapshot(f)[0] for f in files]
    kind = snaps[0].kind
    X, _, dropped = _load_test(o["test"], o["format"], o["snapshots"], kind)
    pcfg = PredictiveConfig(L=o["L"], R=o["R"], burn_in=o["heldout_burn"])
    try:
        pcfg.validate()
    except ValueError as e:
        raise ConfigError(str(e)) from None
    samples = heldout_infer(X, snaps, o["source"], pcfg, RngStream(o["seed"], 0))
    ll = pair_log_likelihoods(X, snaps, samples, kind)
    logp = predictive_log_likelihood(ll)
    n_docs = X.shape[1]
    report = {"seed": o["seed"], "L": min(pcfg.L, len(snaps)), "R": pcfg.R, "heldout_burn": pcfg.burn_in,
              "source": o["source"], "n_docs": n_docs, "log_predictive": logp,
              "log_ppd": evaluation.log_perplexity_per_doc(logp, n_docs),
              "ppd": evaluation.perplexity_per_doc(logp, n_docs), "dropped_terms": dropped}
    if o["dump_pairs"]:
        with io.atomic_write(o["dump_pairs"]) as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["snapshot", "log_likelihood"])
            for s, v in zip(samples, ll):
                w.writerow([s.phi_index, format(v, ".17g")])
    text = json.dumps(report, indent=2, sort_keys=True)
    if o["out"]:
        _write_json(o["out"], report)
    print(text)
    return EXIT_OK


def _read_labels(path):
    with open(path) as fh:
        return [ln.strip() for ln in fh if ln.strip()]


def cmd_retrieve(o) -> int:
    _require(o, "snapshots", "test", "test_labels", "train_labels", "out")
    files = _snapshot_files(o["snapshots"])
    state, _ = io.load_snapshot(files[-1])
    X, _, _ = _load_test(o["test"], o["format"], o["snapshots"], state.kind)
    act = np.flatnonzero(state.assign.totals)
    if act.size == 0:
        raise RuntimeError("the final snapshot has no active factors")
    Phi = state.params.Phi[:, act]
    Hq = evaluation.infer_test_coefficients(X, Phi).T
    Ht = np.vstack([(Z * W)[:, act] for Z, W in zip(state.assign.Z, state.params.W)])
    train_labels = sum((_read_labels(p) for p in o["train_labels"]), [])
    test_labels = _read_labels(o["test_labels"])
    if len(train_labels) != Ht.shape[0] or len(test_labels) != Hq.shape[0]:
        raise ConfigError("label files do not match the number of documents")
    res = evaluation.retrieval_eval(Hq, Ht, test_labels, train_labels, o["n_list"])
    os.makedirs(o["out"], exist_ok=True)
    with io.atomic_write(os.path.join(o["out"], "precision_at_n.csv")) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["N", "precision"])
        for n, v in res["precision_at"].items():
            w.writerow([n, format(v, ".17g")])
    report = {"seed": o["seed"], "map": res["map"], "n_queries": len(test_labels),
              "precision_at": {str(k): v for k, v in res["precision_at"].items()}}
    _write_json(os.path.join(o["out"], "retrieval.json"), report)
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_diagnose(o) -> int:
    import itertools

    from .geweke import GewekeConfig, geweke_check
    from .oracles import ars_ks_checks, finite_k_tail_log_prob
    from .rhbp import tail_inactive_log_prob

    ok = True
    report = {"seed": o["seed"], "geweke": {}, "tail_rel_err": None, "ars_ks": None}
    for i, kind in enumerate(o["models"]):
        if kind not in ("pgm", "ggm"):
            raise ConfigError(f"unknown model {kind!r}")
        z = geweke_check(GewekeConfig(kind=kind, n_samples=o["samples"]), seed=o["seed"] + i, mutate=o["mutate"])
        z.pop("_means")
        report["geweke"][kind] = z
        bad = [k for k, v in z.items() if not abs(v) < 4.0]
        ok &= not bad
        for k, v in z.items():
            print(f"geweke {kind:3s} {k:11s} z={v:+.2f} {'FAIL' if k in bad else 'ok'}")
    worst = 0.0
    for N, a, b, t in itertools.product([1, 3, 10], [0.5, 1.0, 2.0], [0.2, 0.5, 0.9], [0.5, 1.0]):
        ref = finite_k_tail_log_prob(b, a, N, t)
        worst = max(worst, abs(tail_inactive_log_prob(b, a, N, t) - ref) / abs(ref))
    report["tail_rel_err"] = worst
    ok &= worst <= 1e-3
    print(f"tail oracle worst relative error {worst:.2e} {'ok' if worst <= 1e-3 else 'FAIL'}")
    ks = ars_ks_checks(RngStream(o["seed"], 99), n=10_000)
    report["ars_ks"] = ks
    for k, p in ks.items():
        print(f"ars {k:18s} p={p:.3f} {'ok' if p > 0.01 else 'FAIL'}")
        ok &= p > 0.01
    report["passed"] = bool(ok)
    if o["out"]:
        _write_json(o["out"], report)
    return EXIT_OK if ok else EXIT_DIAGNOSTIC


COMMANDS = {"synth": cmd_synth, "fit": cmd_fit, "perplexity": cmd_perplexity,
            "retrieve": cmd_retrieve, "diagnose": cmd_diagnose}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="%(message)s")
    try:
        opts = resolve(ns.command, ns)
        return COMMANDS[ns.command](opts)
    except ConfigError as e:
        print(f"nhfa: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (data_mod.DataFormatError, io.SnapshotFormatError) as e:
        print(f"nhfa: input error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # noqa: BLE001 - reported as a runtime failure
        print(f"nhfa: error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
