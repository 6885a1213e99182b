"""Batch command-line front end.

One command per process: ``simulate``, ``evaluate``, ``verify-stationarity``,
``sweep``, ``closed-form``, ``bsde-solve``.  Exit status 0 on success/PASS,
1 when verification fails, 2 on configuration errors.  Artifacts are CSV
(17 significant digits) and JSON records stamped with the resolved-config
hash; identical configurations produce byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import config as config_mod
from ._backend import set_num_threads
from .bsde import solve_bsde
from .bundles import generate_bundles, make_grid
from .errors import ConfigError, RsjdError
from .mc import PerformanceEvaluator, control_scaling_sweep, estimate_performance
from .model import ControlPolicy, scale_policy
from .principle import (
    GammaCoefficients,
    LqAnalyticAdjoints,
    gamma,
    optimal_control_lq,
    optimal_policy,
    stationarity_check,
)
from .forward import simulate_forward_set
from .report import write_csv, write_json

_COMMANDS = ("simulate", "evaluate", "verify-stationarity", "sweep", "closed-form", "bsde-solve")
_THREADS_ENV = "RSJD_NUM_THREADS"


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rsjd", description=__doc__)
    parser.add_argument("command", choices=_COMMANDS)
    parser.add_argument("--config", required=True, help="TOML experiment configuration")
    parser.add_argument("--out", default="out", help="artifact output directory")
    parser.add_argument("--paths", type=int, default=None, help="override run.n_paths")
    parser.add_argument("--seed", type=int, default=None, help="override run.master_seed")
    parser.add_argument("--threads", type=int, default=None, help="override run.threads")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = config_mod.load(args.config)
        env_threads = os.environ.get(_THREADS_ENV)
        threads = args.threads if args.threads is not None else (
            int(env_threads) if env_threads else None
        )
        cfg = config_mod.override(cfg, n_paths=args.paths, seed=args.seed, threads=threads)
        set_num_threads(cfg.threads)
        return run(args.command, cfg, Path(args.out))
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 2
    except RsjdError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


def run(command: str, cfg: config_mod.ExperimentConfig, out_dir: Path) -> int:
    """Dispatch one batch command and write its artifacts under ``out_dir``."""
    if command not in _COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    handler = {
        "simulate": _cmd_simulate,
        "evaluate": _cmd_evaluate,
        "verify-stationarity": _cmd_verify,
        "sweep": _cmd_sweep,
        "closed-form": _cmd_closed_form,
        "bsde-solve": _cmd_bsde_solve,
    }[command]
    return handler(cfg, Path(out_dir))


# ---------------------------------------------------------------------------
# shared assembly
# ---------------------------------------------------------------------------


def _bundles(cfg: config_mod.ExperimentConfig):
    grid = make_grid(cfg.horizon, cfg.n_steps)
    return generate_bundles(
        grid, cfg.generator(), cfg.jump_measure(), cfg.seed, cfg.n_paths, init=cfg.initial_state
    )


def _policy(cfg: config_mod.ExperimentConfig, spec) -> ControlPolicy:
    pol = cfg.section("policy")
    kind = pol["kind"]
    if kind == "constant":
        return ControlPolicy.constant(pol["value"])
    if spec is None:
        raise ConfigError(f"policy.kind={kind!r} needs the closed-form preset 'application1'")
    base = optimal_policy(spec)
    if kind == "optimal":
        return base
    return scale_policy(base, pol["scale"])


def _lq_context(cfg):
    spec = cfg.lq_spec()
    forward, perf, _ = cfg.models()
    return spec, forward, perf


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _cmd_simulate(cfg, out_dir: Path) -> int:
    forward = cfg.models()[0]
    spec = cfg.lq_spec() if cfg.preset == "application1" else None
    policy = _policy(cfg, spec)
    bundles = _bundles(cfg)
    traj = simulate_forward_set(forward, policy, bundles, cfg.x0())
    n_export = min(cfg.section("simulate")["n_export"], len(bundles))
    for p in range(n_export):
        rows = zip(bundles.grid, traj.values[p], bundles.alpha_left[p])
        write_csv(out_dir / f"trajectory_{p:04d}.csv", ("t", "X", "regime"), rows, cfg.hash)
    print(f"wrote {n_export} trajectory files to {out_dir}")
    return 0


def _cmd_evaluate(cfg, out_dir: Path) -> int:
    bundles = _bundles(cfg)
    if cfg.preset == "application1":
        spec, forward, perf = _lq_context(cfg)
        policy = _policy(cfg, spec)
        est = estimate_performance(perf, None, forward, policy, bundles, cfg.x0())
    else:
        forward, _, bsde_model = cfg.models()
        policy = _policy(cfg, None)
        solution = solve_bsde(
            bsde_model, forward, policy, bundles, cfg.x0(), scheme=cfg.section("bsde")["scheme"]
        )
        est = solution.y0
    write_json(out_dir / "evaluate.json", est.to_record("J", cfg.seed, cfg.hash))
    print(f"J = {est.mean:.6g} (se {est.std_error:.3g}); wrote {out_dir / 'evaluate.json'}")
    return 0


def _cmd_verify(cfg, out_dir: Path) -> int:
    spec, forward, _ = _lq_context(cfg)
    policy = _policy(cfg, spec)
    bundles = _bundles(cfg)
    verify = cfg.section("verify")
    report = stationarity_check(
        policy, LqAnalyticAdjoints(spec), forward, bundles, cfg.x0(),
        n_buckets=verify["n_buckets"],
    )
    ok = report.passed(verify["se_multiplier"], verify["abs_tolerance"])
    payload = {
        "name": "stationarity",
        "seed": cfg.seed,
        "config_hash": cfg.hash,
        "policy": policy.name,
        "verdict": "PASS" if ok else "FAIL",
        "se_multiplier": verify["se_multiplier"],
        "abs_tolerance": verify["abs_tolerance"],
        "buckets": [
            {
                "bucket": b.bucket,
                "t_lo": b.t_lo,
                "t_hi": b.t_hi,
                "regime": b.regime,
                "mean": b.mean,
                "se": b.std_error,
                "n": b.n_paths,
                "ok": b.within(verify["se_multiplier"], verify["abs_tolerance"]),
            }
            for b in report.buckets
        ],
    }
    write_json(out_dir / "stationarity.json", payload)
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


def _cmd_sweep(cfg, out_dir: Path) -> int:
    spec, forward, perf = _lq_context(cfg)
    policy = _policy(cfg, spec)
    bundles = _bundles(cfg)
    evaluator = PerformanceEvaluator(perf, forward, cfg.x0())
    records = control_scaling_sweep(evaluator, policy, cfg.section("sweep")["deltas"], bundles)
    rows = [
        (r["delta"], r["estimate"].mean, r["estimate"].std_error)
        for r in records
    ]
    write_csv(out_dir / "sweep.csv", ("delta", "J", "se"), rows, cfg.hash)
    print(f"wrote {out_dir / 'sweep.csv'}")
    return 0


def _cmd_closed_form(cfg, out_dir: Path) -> int:
    spec, _, _ = _lq_context(cfg)
    coeffs = GammaCoefficients.from_spec(spec)
    n_times = cfg.section("closed_form")["n_times"]
    times = np.linspace(0.0, spec.horizon, n_times)
    rows = []
    for t in times:
        for regime in (1, 2):
            rows.append(
                (
                    t,
                    regime,
                    gamma(float(t), spec.horizon, regime, coeffs),
                    optimal_control_lq(float(t), regime, spec),
                )
            )
    write_csv(out_dir / "closed_form.csv", ("t", "regime", "gamma", "u_star"), rows, cfg.hash)
    print(f"wrote {out_dir / 'closed_form.csv'}")
    return 0


def _cmd_bsde_solve(cfg, out_dir: Path) -> int:
    forward, _, bsde_model = cfg.models()
    spec = cfg.lq_spec() if cfg.preset == "application1" else None
    policy = _policy(cfg, spec)
    bundles = _bundles(cfg)
    solution = solve_bsde(
        bsde_model, forward, policy, bundles, cfg.x0(), scheme=cfg.section("bsde")["scheme"]
    )
    r2_values = [r2 for step in solution.r_squared if isinstance(step, dict) for r2 in step.values()]
    payload = solution.y0.to_record("Y0", cfg.seed, cfg.hash)
    payload["scheme"] = cfg.section("bsde")["scheme"]
    payload["regression_r2_min"] = min(r2_values) if r2_values else None
    payload["regression_r2_mean"] = float(np.mean(r2_values)) if r2_values else None
    write_json(out_dir / "bsde.json", payload)
    n_export = min(cfg.section("simulate")["n_export"], len(bundles))
    forward_vals = simulate_forward_set(forward, policy, bundles, cfg.x0()).values
    rows = []
    for p in range(n_export):
        for k, t in enumerate(bundles.grid):
            rows.append((t, forward_vals[p, k], bundles.alpha_left[p, k], solution.values[p, k]))
    write_csv(out_dir / "y_surface.csv", ("t", "X", "regime", "Y"), rows, cfg.hash)
    print(f"Y0 = {solution.y0.mean:.6g} (se {solution.y0.std_error:.3g}); wrote {out_dir / 'bsde.json'}")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
