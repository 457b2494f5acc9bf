"""Config-driven experiment runner.

Subcommands: ``run`` executes a case pipeline (pool, training, estimates,
optional design search) into an output directory; ``validate`` checks a
config and prints the fully resolved key=value view; ``compare`` diffs two
results files; ``report`` renders figures from a run directory.

Configs are flat ``key = value`` text. Every hyperparameter defaults to the
published table values for its case, so a two-line file (case + out) is a
complete run. ``VOED_SEED`` and ``VOED_OUT`` override the config.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .estimators import (
    generate_pool,
    lower_bound_estimate,
    nmc_estimate,
    nmc_reuse_estimate,
    upper_bound_estimate,
)
from .flows import SummarySpec, save_checkpoint
from .models import (
    Design,
    case1_model,
    case2_initial_design,
    case2_model,
    case3_designs,
    case3_model,
    case4_model,
    augment_model_theta,
    augment_model_y,
    augment_prior,
    lingauss_model,
)
from .optimize import (
    SpsaGains,
    TrainConfig,
    flow_from_config,
    joint_optimize,
    spsa_optimize,
    train_lower,
    train_upper,
)

RESULTS_HEADER = "case,design_id,design_json,estimator,value,std_error,N,seed,runtime_s"
ESTIMATOR_NAMES = ("nmc", "nmc_reuse", "lower", "upper")
MODES = ("fixed", "grid", "joint", "spsa")


class ConfigError(ValueError):
    """Invalid configuration; maps to exit code 2."""


# one entry per legal key: parse function plus a short description
def _parse_bool(s: str) -> bool:
    if s.lower() in ("true", "1", "yes"):
        return True
    if s.lower() in ("false", "0", "no"):
        return False
    raise ValueError("expected true/false")


def _parse_floats(s: str) -> tuple:
    return tuple(float(x) for x in s.split(",") if x.strip())


def _parse_ints(s: str) -> tuple:
    return tuple(int(x) for x in s.split(",") if x.strip())


KEY_PARSERS = {
    "case": str,
    "mode": str,
    "out": str,
    "seed": int,
    "estimators": str,
    "design": _parse_floats,
    "design_grid": str,
    "budget": int,
    "record_runtime": _parse_bool,
    "train.n_opt": int,
    "train.n_eval": int,
    "train.n_batch": int,
    "train.epochs": int,
    "train.lr0": float,
    "train.decay": float,
    "train.T": int,
    "train.widths": _parse_ints,
    "train.activation": str,
    "train.lr_design": float,
    "train.design_epochs": int,
    "summary.variant": str,
    "summary.n_out": int,
    "summary.widths": _parse_ints,
    "summary.n_feature": int,
    "summary.hidden": int,
    "summary.emb_widths": _parse_ints,
    "nmc.n_out": int,
    "nmc.n_in": int,
    "nmc.n": int,
    "case2.p": int,
    "case2.n": int,
    "case3.variant": str,
    "case4.k": int,
    "case4.dt": float,
    "spsa.iters": int,
    "spsa.a": float,
    "spsa.c": float,
}

# published per-case table defaults; a config file overrides any of them
CASE_DEFAULTS = {
    "case1": {
        "mode": "grid",
        "design_grid": "linspace:0:1:11",
        "estimators": "lower,nmc_reuse",
        "train.n_opt": 20000,
        "train.n_eval": 10000,
        "train.n_batch": 1000,
        "train.epochs": 301,
        "train.lr0": 1e-2,
        "train.T": 5,
        "train.widths": (32, 32),
        "nmc.n": 20000,
        "nmc.n_out": 2000,
        "nmc.n_in": 2000,
    },
    "case2": {
        "mode": "joint",
        "estimators": "lower,nmc_reuse",
        "budget": 1_000_000,
        "case2.p": 20,
        "case2.n": 20,
        "train.n_opt": 50000,
        "train.n_eval": 10000,
        "train.n_batch": 2048,
        "train.epochs": 201,
        "train.lr0": 5e-3,
        "train.T": 4,
        "train.widths": (32, 32),
        "train.design_epochs": 20,
        "nmc.n": 10000,
        "nmc.n_out": 2000,
        "nmc.n_in": 2000,
    },
    "case3": {
        "mode": "fixed",
        "case3.variant": "a",
        "estimators": "lower,upper,nmc_reuse",
        "train.n_opt": 10000,
        "train.n_eval": 10000,
        "train.n_batch": 512,
        "train.epochs": 301,
        "train.lr0": 5e-3,
        "train.T": 5,
        "train.widths": (16, 16),
        "nmc.n": 10000,
        "nmc.n_out": 2000,
        "nmc.n_in": 2000,
    },
    "case4": {
        "mode": "grid",
        "design_grid": "ints:0:50",
        "estimators": "lower",
        "case4.k": 1,
        "case4.dt": 1e-3,
        "train.n_opt": 20000,
        "train.n_eval": 10000,
        "train.n_batch": 2048,
        "train.epochs": 51,
        "train.lr0": 1e-2,
        "train.T": 4,
        "train.widths": (16, 16),
        "spsa.iters": 60,
        "spsa.a": 3.0,
        "spsa.c": 2.0,
    },
    "lingauss": {
        "mode": "fixed",
        "design": (1.0,),
        "estimators": "nmc_reuse,lower,upper",
        "train.n_opt": 20000,
        "train.n_eval": 10000,
        "train.n_batch": 500,
        "train.epochs": 120,
        "train.lr0": 5e-3,
        "train.T": 4,
        "train.widths": (16, 16),
        "nmc.n": 5000,
        "nmc.n_out": 5000,
        "nmc.n_in": 5000,
    },
}

GLOBAL_DEFAULTS = {
    "mode": "fixed",
    "out": "voed_out",
    "seed": 0,
    "record_runtime": False,
    "train.n_opt": 10000,
    "train.n_eval": 10000,
    "train.n_batch": 500,
    "train.epochs": 301,
    "train.lr0": 5e-3,
    "train.decay": 0.99,
    "train.T": 4,
    "train.widths": (32, 32),
    "train.activation": "elu",
    "train.lr_design": None,
    "train.design_epochs": 20,
    "nmc.n": 5000,
    "nmc.n_out": 2000,
    "nmc.n_in": 2000,
    "budget": 100_000,
}


@dataclass
class RunConfig:
    case: str
    mode: str
    out: str
    seed: int
    estimators: tuple
    resolved: dict  # echo of every key actually in force
    train: TrainConfig
    design: tuple | None
    design_grid: str | None
    budget: int
    nmc_n: int
    nmc_n_out: int
    nmc_n_in: int
    record_runtime: bool
    extras: dict  # case-specific keys


def parse_config_text(text: str) -> dict:
    """Flat key = value lines; '#' starts a comment."""
    out = {}
    for i, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {i}: expected key = value, got {raw!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        if key in out:
            raise ConfigError(f"line {i}: duplicate key '{key}'")
        out[key] = val
    return out


def _typed(key: str, value):
    if key not in KEY_PARSERS:
        raise ConfigError(f"unknown config key '{key}'")
    if not isinstance(value, str):
        return value
    try:
        return KEY_PARSERS[key](value)
    except (ValueError, TypeError) as e:
        raise ConfigError(f"invalid value for '{key}': {e}") from e


def resolve_config(file_keys: dict) -> RunConfig:
    """Overlay file keys on per-case defaults, then env overrides; validate."""
    if "case" not in file_keys:
        raise ConfigError("missing required key 'case'")
    case = file_keys["case"]
    if case not in CASE_DEFAULTS:
        raise ConfigError(f"invalid value for 'case': {case!r} not one of {sorted(CASE_DEFAULTS)}")
    merged: dict = dict(GLOBAL_DEFAULTS)
    merged.update(CASE_DEFAULTS[case])
    for k, v in file_keys.items():
        merged[k] = _typed(k, v)
    if os.environ.get("VOED_SEED"):
        merged["seed"] = _typed("seed", os.environ["VOED_SEED"])
    if os.environ.get("VOED_OUT"):
        merged["out"] = os.environ["VOED_OUT"]

    mode = merged["mode"]
    if mode not in MODES:
        raise ConfigError(f"invalid value for 'mode': {mode!r} not one of {MODES}")
    estimators = tuple(e.strip() for e in str(merged.get("estimators", "lower")).split(",") if e.strip())
    if not estimators:
        raise ConfigError("invalid value for 'estimators': empty")
    for e in estimators:
        if e not in ESTIMATOR_NAMES:
            raise ConfigError(f"invalid value for 'estimators': {e!r} not one of {ESTIMATOR_NAMES}")
    if case == "case4":
        bad = [e for e in estimators if e in ("nmc", "nmc_reuse", "upper")]
        if bad:
            raise ConfigError(
                f"invalid value for 'estimators': {bad[0]} needs an explicit likelihood, "
                "which case4 does not have"
            )
    if mode == "joint" and case != "case2":
        raise ConfigError("invalid value for 'mode': joint optimization is wired for case2 only")
    if mode == "spsa" and case != "case4":
        raise ConfigError("invalid value for 'mode': spsa is wired for case4 only")
    if mode == "grid" and not merged.get("design_grid"):
        raise ConfigError("missing required key 'design_grid' for grid mode")
    # case3's design (current schedule + times) is implied by its variant key
    if mode == "fixed" and not merged.get("design") and case != "case3":
        raise ConfigError("missing required key 'design' for fixed mode")
    if case == "case3" and merged.get("case3.variant", "a") not in ("a", "b", "c"):
        raise ConfigError(
            f"invalid value for 'case3.variant': {merged['case3.variant']!r} not in a/b/c"
        )
    for key in ("nmc.n", "nmc.n_out", "nmc.n_in", "budget", "spsa.iters",
                "case2.p", "case2.n", "case4.k"):
        if key in merged and merged[key] < 1:
            raise ConfigError(f"invalid value for '{key}': must be positive")
    if merged["seed"] < 0:
        raise ConfigError("invalid value for 'seed': must be non-negative")

    summary = None
    if merged.get("summary.variant"):
        variant = merged["summary.variant"]
        if variant not in ("identity", "mlp", "sequence"):
            raise ConfigError(
                f"invalid value for 'summary.variant': {variant!r} not one of identity/mlp/sequence"
            )
        if variant != "identity" and not merged.get("summary.n_out"):
            raise ConfigError(f"missing required key 'summary.n_out' for {variant} summary")
        summary = SummarySpec(
            variant=variant,
            n_out=merged.get("summary.n_out"),
            widths=list(merged.get("summary.widths", ()) or ()),
            n_feature=merged.get("summary.n_feature", 1),
            hidden=merged.get("summary.hidden", 20),
            emb_widths=list(merged.get("summary.emb_widths", (40, 20))),
        )
    try:
        train = TrainConfig(
            n_opt=merged["train.n_opt"],
            n_eval=merged["train.n_eval"],
            n_batch=merged["train.n_batch"],
            epochs=merged["train.epochs"],
            lr0=merged["train.lr0"],
            decay=merged["train.decay"],
            T=merged["train.T"],
            widths=tuple(merged["train.widths"]),
            activation=merged["train.activation"],
            summary=summary,
            seed=merged["seed"],
            lr_design=merged["train.lr_design"],
            design_epochs=merged["train.design_epochs"],
        )
    except ValueError as e:
        raise ConfigError(f"invalid training configuration: {e}") from e

    extras = {
        k: merged[k]
        for k in ("case2.p", "case2.n", "case3.variant", "case4.k", "case4.dt",
                  "spsa.iters", "spsa.a", "spsa.c")
        if k in merged
    }
    design = tuple(merged["design"]) if merged.get("design") else None
    resolved = {k: merged[k] for k in sorted(merged) if merged[k] is not None}
    resolved["estimators"] = ",".join(estimators)
    return RunConfig(
        case=case,
        mode=mode,
        out=str(merged["out"]),
        seed=int(merged["seed"]),
        estimators=estimators,
        resolved=resolved,
        train=train,
        design=design,
        design_grid=merged.get("design_grid"),
        budget=int(merged["budget"]),
        nmc_n=int(merged["nmc.n"]),
        nmc_n_out=int(merged["nmc.n_out"]),
        nmc_n_in=int(merged["nmc.n_in"]),
        record_runtime=bool(merged["record_runtime"]),
        extras=extras,
    )


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from e
    return resolve_config(parse_config_text(text))


def parse_design_grid(spec: str) -> list[np.ndarray]:
    """'linspace:a:b:n', 'ints:a:b', or a comma list of scalar designs."""
    if spec.startswith("linspace:"):
        _, a, b, n = spec.split(":")
        return [np.array([v]) for v in np.linspace(float(a), float(b), int(n))]
    if spec.startswith("ints:"):
        _, a, b = spec.split(":")
        return [np.array([float(v)]) for v in range(int(a), int(b) + 1)]
    return [np.array([float(v)]) for v in spec.split(",") if v.strip()]


def _build_case(cfg: RunConfig):
    """Returns (prior, model, case metadata dict)."""
    if cfg.case == "case1":
        prior, model = case1_model()
    elif cfg.case == "case2":
        prior, model = case2_model(cfg.extras["case2.p"], cfg.extras["case2.n"])
    elif cfg.case == "case3":
        variants = dict(zip("abc", case3_designs()))
        v = cfg.extras.get("case3.variant", "a")
        if v not in variants:
            raise ConfigError(f"invalid value for 'case3.variant': {v!r} not in a/b/c")
        j0, times = variants[v]
        prior, model = case3_model(j0, times)
        return prior, model, {"design": np.array([j0]), "times": times}
    elif cfg.case == "case4":
        prior, model = case4_model(cfg.extras["case4.k"], dt=cfg.extras["case4.dt"])
    else:
        prior, model = lingauss_model()
    return prior, model, {}


def _derived_seed(master: int, *indices: int) -> int:
    return int(np.random.SeedSequence((master, *indices)).generate_state(1)[0])


def _fmt(x: float) -> str:
    return "%.17g" % float(x)


@dataclass
class _RowSink:
    rows: list

    def add(self, cfg, design_id, d_vals, rep, record_runtime):
        self.rows.append(
            [
                cfg.case,
                design_id,
                json.dumps(list(np.asarray(d_vals, float).ravel())),
                rep.estimator,
                _fmt(rep.value),
                _fmt(rep.std_error),
                str(rep.n_used),
                str(rep.seed if rep.seed is not None else 0),
                _fmt(rep.runtime_s if record_runtime else 0.0),
            ]
        )


def _train_and_estimate(cfg, prior, model, d_vals, est, seed, out_dir, tag):
    """Lower/upper bound path: pool, flow, training, eval estimate, artifacts."""
    tc = dataclasses.replace(cfg.train, seed=seed)
    if est == "lower":
        n_aug = max(0, 2 - prior.n_theta)
        prior_t = augment_prior(prior, n_aug) if n_aug else prior
        model_t = augment_model_theta(model, n_aug) if n_aug else model
        pool = generate_pool(model_t, prior_t, d_vals, tc.n_opt, tc.n_eval, seed)
        flow = flow_from_config(tc, prior_t.n_theta, model_t.n_y)
        _, hist = train_lower(pool, flow, prior_t, tc)
        rep = lower_bound_estimate(flow, prior_t, pool)
    else:
        n_aug = max(0, 2 - model.n_y)
        model_u = augment_model_y(model, n_aug) if n_aug else model
        pool = generate_pool(model_u, prior, d_vals, tc.n_opt, tc.n_eval, seed)
        flow = flow_from_config(tc, model_u.n_y, 0)
        _, hist = train_upper(pool, flow, model_u, tc)
        rep = upper_bound_estimate(model_u, flow, pool)
    hist.to_csv(out_dir / f"history_{tag}.csv")
    save_checkpoint(flow, out_dir / f"flow_{tag}.json")
    return rep


def _run_designs(cfg, prior, model, designs, out_dir, sink):
    for di, d_vals in enumerate(designs):
        design_id = f"d{di:03d}"
        for ei, est in enumerate(cfg.estimators):
            seed = _derived_seed(cfg.seed, di, ei)
            if est == "nmc":
                rep = nmc_estimate(model, prior, d_vals, cfg.nmc_n_out, cfg.nmc_n_in, seed)
            elif est == "nmc_reuse":
                rep = nmc_reuse_estimate(model, prior, d_vals, cfg.nmc_n, seed)
            else:
                rep = _train_and_estimate(
                    cfg, prior, model, d_vals, est, seed, out_dir, f"{design_id}_{est}"
                )
            sink.add(cfg, design_id, d_vals, rep, cfg.record_runtime)


def _run_joint(cfg, prior, model, out_dir, sink):
    p = cfg.extras["case2.p"]
    n = cfg.extras["case2.n"]
    if cfg.design is not None:
        d0 = Design(np.asarray(cfg.design, float).reshape(n, p), "l1_rows").project()
    else:
        d0 = case2_initial_design(p, n, rng=_derived_seed(cfg.seed, 0))
    flow = flow_from_config(cfg.train, prior.n_theta, model.n_y)
    d_star, _, hist = joint_optimize(model, prior, flow, d0, cfg.train, cfg.budget)
    with open(out_dir / "history_joint.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["design_epoch", "bound_value", "std_error", "design_json"])
        for de, val, se, dv in zip(hist.design_epoch, hist.value, hist.std_error, hist.designs):
            w.writerow([de, _fmt(val), _fmt(se), json.dumps(list(dv.ravel()))])
    save_checkpoint(flow, out_dir / "flow_joint.json")

    seed = _derived_seed(cfg.seed, 9999)
    pool = generate_pool(model, prior, d_star.values, cfg.train.n_opt, cfg.train.n_eval, seed)
    rep = lower_bound_estimate(flow, prior, pool)
    sink.add(cfg, "joint_final", d_star.values, rep, cfg.record_runtime)
    if "nmc_reuse" in cfg.estimators:
        rep2 = nmc_reuse_estimate(model, prior, d_star.values, cfg.nmc_n, _derived_seed(cfg.seed, 9998))
        sink.add(cfg, "joint_final", d_star.values, rep2, cfg.record_runtime)


def _run_spsa(cfg, prior, model, out_dir, sink):
    k = cfg.extras["case4.k"]
    d0 = np.asarray(cfg.design, float) if cfg.design else np.linspace(10.0, 40.0, k)

    def objective(d, it):
        seed = _derived_seed(cfg.seed, 7000, it)
        rep = _train_and_estimate(cfg, prior, model, d, "lower", seed, out_dir, "spsa_probe")
        return rep.value

    res = spsa_optimize(
        objective,
        d0,
        (0.0, 50.0),
        cfg.extras["spsa.iters"],
        gains=SpsaGains(a=cfg.extras["spsa.a"], c=cfg.extras["spsa.c"]),
        seed=cfg.seed,
    )
    rep = _train_and_estimate(
        cfg, prior, model, res.d, "lower", _derived_seed(cfg.seed, 7999), out_dir, "spsa_final"
    )
    sink.add(cfg, "spsa_final", res.d, rep, cfg.record_runtime)


def run(config_path, out_override=None) -> int:
    """Execute a config; returns the process exit code."""
    try:
        cfg = load_config(config_path)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    out_dir = Path(out_override or cfg.out)
    stage = "setup"
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        prior, model, meta = _build_case(cfg)
        sink = _RowSink([])
        stage = f"{cfg.mode} pipeline"
        if cfg.mode == "grid":
            _run_designs(cfg, prior, model, parse_design_grid(cfg.design_grid), out_dir, sink)
        elif cfg.mode == "fixed":
            d_vals = meta.get("design")
            if d_vals is None:
                d_vals = np.asarray(cfg.design, float)
            _run_designs(cfg, prior, model, [d_vals], out_dir, sink)
        elif cfg.mode == "joint":
            _run_joint(cfg, prior, model, out_dir, sink)
        else:
            _run_spsa(cfg, prior, model, out_dir, sink)
        stage = "writing outputs"
        results = out_dir / "results.csv"
        with open(results, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(RESULTS_HEADER.split(","))
            w.writerows(sink.rows)
        digest = hashlib.sha256(results.read_bytes()).hexdigest()
        manifest = {
            "package_version": __version__,
            "seed": cfg.seed,
            "config": {k: _config_echo_value(v) for k, v in cfg.resolved.items()},
            "results_sha256": digest,
        }
        (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    except Exception as e:  # noqa: BLE001 - map any pipeline failure to exit 1
        print(f"run failed during {stage}: {e}", file=sys.stderr)
        return 1
    print(f"wrote {len(sink.rows)} result rows to {results}")
    return 0


def _config_echo_value(v):
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    return v


def replay(manifest_path, out_dir) -> bool:
    """Re-run from a manifest; True when results.csv hashes match."""
    m = json.loads(Path(manifest_path).read_text())
    lines = []
    for k, v in m["config"].items():
        if k == "out":
            continue
        lines.append(f"{k} = {v}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg_path = out_dir / "replay.config"
    cfg_path.write_text("\n".join(lines) + "\n")
    code = run(cfg_path, out_override=out_dir)
    if code != 0:
        raise RuntimeError(f"replay run exited with {code}")
    digest = hashlib.sha256((out_dir / "results.csv").read_bytes()).hexdigest()
    return digest == m["results_sha256"]


def validate(config_path) -> int:
    try:
        cfg = load_config(config_path)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    for k in sorted(cfg.resolved):
        print(f"{k} = {_config_echo_value(cfg.resolved[k])}")
    return 0


def _read_results(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != RESULTS_HEADER.split(","):
        raise ConfigError(f"{path}: schema mismatch, expected header {RESULTS_HEADER}")
    return {(r[0], r[1], r[3]): r for r in rows[1:]}


def compare(path_a, path_b) -> int:
    """Per-(case, design, estimator) deltas and z-scores between two runs."""
    try:
        a = _read_results(path_a)
        b = _read_results(path_b)
    except (OSError, ConfigError) as e:
        print(f"compare error: {e}", file=sys.stderr)
        return 2
    keys = sorted(set(a) | set(b))
    print("case,design_id,estimator,value_a,value_b,delta,z")
    max_z = 0.0
    n_missing = 0
    for k in keys:
        if k not in a or k not in b:
            n_missing += 1
            side = "only_b" if k not in a else "only_a"
            print(f"{k[0]},{k[1]},{k[2]},{side},,,")
            continue
        va, sa = float(a[k][4]), float(a[k][5])
        vb, sb = float(b[k][4]), float(b[k][5])
        delta = va - vb
        denom = np.hypot(sa, sb)
        z = delta / denom if denom > 0 else (0.0 if delta == 0 else np.inf)
        max_z = max(max_z, abs(z))
        print(f"{k[0]},{k[1]},{k[2]},{_fmt(va)},{_fmt(vb)},{_fmt(delta)},{_fmt(z)}")
    print(f"# max |z| = {_fmt(max_z)}; unmatched rows = {n_missing}")
    return 0


def report(run_dir, out_dir=None) -> int:
    """Render figures for a completed run: estimates by design, training curves."""
    run_dir = Path(run_dir)
    results = run_dir / "results.csv"
    if not results.exists():
        print(f"report error: {results} not found", file=sys.stderr)
        return 2
    out_dir = Path(out_dir) if out_dir else run_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with open(results, newline="") as fh:
        rows = list(csv.DictReader(fh))
    written = []
    if rows:
        by_est: dict[str, list] = {}
        for r in rows:
            d = json.loads(r["design_json"])
            x = d[0] if len(d) == 1 else None
            by_est.setdefault(r["estimator"], []).append(
                (x, float(r["value"]), float(r["std_error"]), r["design_id"])
            )
        fig, ax = plt.subplots(figsize=(7, 4.5))
        for est, pts in sorted(by_est.items()):
            if all(p[0] is not None for p in pts):
                pts = sorted(pts)
                xs = [p[0] for p in pts]
            else:
                xs = list(range(len(pts)))
            ax.errorbar(
                xs,
                [p[1] for p in pts],
                yerr=[p[2] for p in pts],
                marker="o",
                capsize=3,
                label=est,
            )
        ax.set_xlabel("design")
        ax.set_ylabel("EIG estimate (nats)")
        ax.set_title(rows[0]["case"])
        ax.legend()
        fig.tight_layout()
        path = out_dir / "bounds.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

    hist_files = sorted(run_dir.glob("history_*.csv"))
    if hist_files:
        fig, ax = plt.subplots(figsize=(7, 4.5))
        for hf in hist_files[:12]:
            with open(hf, newline="") as fh:
                hrows = list(csv.DictReader(fh))
            if not hrows or "bound_value" not in hrows[0]:
                continue
            xcol = list(hrows[0].keys())[0]
            ax.plot(
                [float(r[xcol]) for r in hrows],
                [float(r["bound_value"]) for r in hrows],
                label=hf.stem.replace("history_", ""),
            )
        ax.set_xlabel("epoch")
        ax.set_ylabel("eval bound (nats)")
        ax.legend(fontsize=7)
        fig.tight_layout()
        path = out_dir / "training.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    for p in written:
        print(f"wrote {p}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="voed", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute a config")
    p_run.add_argument("config")
    p_val = sub.add_parser("validate", help="check a config and print the resolved view")
    p_val.add_argument("config")
    p_cmp = sub.add_parser("compare", help="diff two results.csv files")
    p_cmp.add_argument("results_a")
    p_cmp.add_argument("results_b")
    p_rep = sub.add_parser("report", help="render figures for a run directory")
    p_rep.add_argument("run_dir")
    p_rep.add_argument("--out", default=None)
    args = parser.parse_args(argv)
    if args.command == "run":
        return run(args.config)
    if args.command == "validate":
        return validate(args.config)
    if args.command == "compare":
        return compare(args.results_a, args.results_b)
    return report(args.run_dir, args.out)


if __name__ == "__main__":
    raise SystemExit(main())
