"""Command-line front end.

    adprec run   --config cfg.json --out results/
    adprec audit --suite all --trials 1000 --seed 0 --out results/
    adprec sweep --config cfg.json --alphas 0.5,1.0,2.0 --out results/

Configuration is a single JSON document (see `example_config`).  All CSV
output uses '.' decimals and 17 significant digits, so reruns of the same
config are byte-identical.  ADPREC_THREADS caps the worker count used for
replicates and Monte Carlo audits.

Exit codes: 0 ok, 1 audit failures, 2 config error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from dataclasses import replace as _replace

from .audit import (
    KAPPA_CIRC,
    audit_rate_regimes,
    bound_constants,
    compute_theta_m2,
    m1_noise_constants,
    m2_constants,
    m2_theta_noise_curve,
    theta_curve,
)
from .block_space import BlockShape, Geometry
from .errors import AdprecError, InvalidConfig, NonFiniteIterate
from .optimizer import MomentumMode, OptimizerConfig, run_replicates
from .problems import NoiseKind, NoiseModel, make_problem, nu_curve_analytic
from .suites import run_suite

CSV_COLUMNS = (
    "k",
    "f_value",
    "grad_dual_norm",
    "gtilde_dual_norm",
    "z_dual_norm_sq",
    "trace_sqrt_total",
    "delta_k",
    "theta_k",
    "bound_curve",
    "resid_ineq1",
    "resid_ineq2",
    "step_dual_norm",
)


def example_config():
    return {
        "schema_version": 1,
        "problem": {"kind": "quadratic", "condition": 10.0, "seed": 7},
        "blocks": [{"rows": 8, "cols": 1, "geometry": "DiagAdaGrad"}],
        "optimizer": {
            "eta": 1.0,
            "varsigma": 1.0,
            "iterations": 200,
            "seed": 1,
            "momentum": "None",
            "mu_max": 0.0,
            "beta": 0.0,
            "eval_objective": True,
        },
        "noise": {"kind": "Exact"},
        "replicates": 1,
    }


@dataclass
class Experiment:
    raw: dict
    problem: object
    noise: NoiseModel
    config: OptimizerConfig
    replicates: int

    @property
    def digest(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _need(d, key, kind, where):
    if key not in d:
        raise InvalidConfig(f"{where}: missing required key {key!r}")
    v = d[key]
    if kind is float and isinstance(v, (int, float)) and not isinstance(v, bool):
        return float(v)
    if kind is int and isinstance(v, int) and not isinstance(v, bool):
        return v
    if not isinstance(v, kind):
        raise InvalidConfig(f"{where}: key {key!r} must be {kind.__name__}, got {type(v).__name__}")
    return v


def parse_experiment(raw: dict) -> Experiment:
    if not isinstance(raw, dict):
        raise InvalidConfig("config must be a JSON object")
    if raw.get("schema_version") != 1:
        raise InvalidConfig("config needs schema_version = 1")

    blocks_raw = _need(raw, "blocks", list, "config")
    if not blocks_raw:
        raise InvalidConfig("config: blocks must be a nonempty list")
    shapes = []
    for i, b in enumerate(blocks_raw):
        where = f"blocks[{i}]"
        gname = _need(b, "geometry", str, where)
        try:
            geometry = Geometry(gname)
        except ValueError:
            raise InvalidConfig(f"{where}: unknown geometry {gname!r}")
        shapes.append(
            BlockShape(_need(b, "rows", int, where), _need(b, "cols", int, where), geometry)
        )

    prob_raw = dict(_need(raw, "problem", dict, "config"))
    kind = _need(prob_raw, "kind", str, "problem")
    prob_raw.pop("kind")
    try:
        problem = make_problem(kind, shapes, **prob_raw)
    except TypeError as err:
        raise InvalidConfig(f"problem: bad parameters for {kind!r}: {err}")

    opt = _need(raw, "optimizer", dict, "config")
    mom_name = opt.get("momentum", "None")
    try:
        mode = MomentumMode(mom_name)
    except ValueError:
        raise InvalidConfig(f"optimizer: unknown momentum mode {mom_name!r}")
    config = OptimizerConfig(
        eta=_need(opt, "eta", float, "optimizer"),
        varsigma=_need(opt, "varsigma", float, "optimizer"),
        max_iters=_need(opt, "iterations", int, "optimizer"),
        seed=int(opt.get("seed", 0)),
        momentum_mode=mode,
        mu_max=float(opt.get("mu_max", 0.0)),
        beta=float(opt.get("beta", 0.0)),
        eval_objective=bool(opt.get("eval_objective", True)),
    )

    noise_raw = raw.get("noise", {"kind": "Exact"})
    nk = noise_raw.get("kind", "Exact")
    try:
        noise_kind = NoiseKind(nk)
    except ValueError:
        raise InvalidConfig(f"noise: unknown kind {nk!r}")
    sigma = noise_raw.get("sigma", 0.0)
    if isinstance(sigma, (int, float)):
        sigma = (float(sigma),) * len(shapes)
    else:
        sigma = tuple(float(s) for s in sigma)
    noise = NoiseModel(
        kind=noise_kind,
        sigma=sigma,
        alpha=float(noise_raw.get("alpha", 1.0)),
        omega=float(noise_raw.get("omega", 0.0)),
        batch=int(noise_raw.get("batch", 1)),
    )
    for s in sigma:
        if s < 0:
            raise InvalidConfig("noise: sigma entries must be nonnegative")
    if noise.alpha <= 0:
        raise InvalidConfig("noise: alpha must be positive")

    replicates = int(raw.get("replicates", 1))
    if replicates < 1:
        raise InvalidConfig("replicates must be >= 1")
    return Experiment(raw, problem, noise, config, replicates)


def load_experiment(path) -> Experiment:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as err:
        raise InvalidConfig(f"cannot read config {path}: {err}")
    except json.JSONDecodeError as err:
        raise InvalidConfig(f"config {path} is not valid JSON: {err}")
    return parse_experiment(raw)


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("ADPREC_THREADS", "1")))
    except ValueError:
        return 1


def bound_curves(exp: Experiment) -> tuple[np.ndarray, np.ndarray, str]:
    """Per-iteration Theta envelope and rate bound for the configured run;
    NaN (with an explanatory note) when no Lipschitz bound, no analytic
    noise budget, or no verified momentum stepsize hypothesis is available."""
    K = exp.config.max_iters
    nan = np.full(K, math.nan)
    if exp.problem.lipschitz is None:
        return nan, nan, "no Lipschitz bound for this problem; bound columns are NaN"
    if exp.noise.kind is NoiseKind.MINI_BATCH:
        return nan, nan, "mini-batch oracle has no analytic noise budget; bound columns are NaN"
    try:
        constants = bound_constants(exp.problem, exp.config, omega=exp.noise.omega)
        mode = exp.config.momentum_mode
        if mode is MomentumMode.M1:
            mult, omega_m1 = m1_noise_constants(constants, exp.config.mu_max)
            theta = theta_curve(
                _replace(constants, omega=omega_m1), mult * nu_curve_analytic(exp.noise, K)
            )
        elif mode is MomentumMode.M2:
            m2 = m2_constants(constants, exp.config.mu_max)
            th = m2_theta_noise_curve(exp.noise, exp.config, K)
            theta = np.array([compute_theta_m2(constants, m2, float(t)) for t in th])
        else:
            theta = theta_curve(constants, nu_curve_analytic(exp.noise, K))
    except InvalidConfig as err:
        return nan, nan, f"bound hypothesis unverified ({err}); bound columns are NaN"
    bound = KAPPA_CIRC * theta / np.sqrt(np.arange(K, dtype=float) + 1.0)
    return theta, bound, ""


def cmd_run(config_path, out_dir) -> int:
    start = time.monotonic()
    exp = load_experiment(config_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        res = run_replicates(
            exp.problem, exp.noise, exp.config, exp.replicates, threads=_threads()
        )
    except NonFiniteIterate as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 3

    K = exp.config.max_iters
    theta, bound, bound_note = bound_curves(exp)

    def rows(fields):
        for k in range(K):
            yield (
                k,
                fields["f_value"][k],
                fields["grad_dual_norm"][k],
                fields["gtilde_dual_norm"][k],
                fields["z_dual_norm_sq"][k],
                fields["trace_sqrt_total"][k],
                fields["delta_k"][k],
                theta[k],
                bound[k],
                fields["resid_ineq1"][k],
                fields["resid_ineq2"][k],
                fields["step_dual_norm"][k],
            )

    write_csv(out / "records.csv", CSV_COLUMNS, rows(res.mean))
    for r in range(exp.replicates):
        fields = {name: arr[r] for name, arr in res.arrays.items()}
        write_csv(out / f"records_rep{r:03d}.csv", CSV_COLUMNS, rows(fields))

    summary = {
        "final_min_grad": float(res.min_grad_curve[-1]) if K else None,
        "config_digest": exp.digest,
        "seed": exp.config.seed,
        "replicates": exp.replicates,
        "iterations": K,
        "problem": exp.problem.name,
        "wall_time_s": time.monotonic() - start,
    }
    if bound_note:
        summary["bound_note"] = bound_note
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


def cmd_audit(suite, trials, seed, out_dir) -> int:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reports = run_suite(suite, trials=trials, seed=seed, threads=_threads())
    with open(out / "audit_report.json", "w") as fh:
        json.dump([r.to_dict() for r in reports], fh, indent=2)
        fh.write("\n")
    ok = True
    for r in reports:
        status = "pass" if r.passed else "FAIL"
        print(f"[{status}] {r.check_name}: worst={r.worst_violation:.3e} {r.context}")
        ok = ok and r.passed
    return 0 if ok else 1


def cmd_sweep(config_path, alphas, out_dir) -> int:
    exp = load_experiment(config_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    columns = ("alpha", "fitted_slope", "theoretical_exponent", "bound_dominates")
    rows = []
    ok = True
    if alphas:
        sigma = max(exp.noise.sigma) if exp.noise.sigma else 0.0
        try:
            results = audit_rate_regimes(
                exp.problem,
                exp.config,
                alphas=alphas,
                sigma=sigma,
                replicates=exp.replicates,
                threads=_threads(),
            )
        except NonFiniteIterate as err:
            print(f"numerical failure: {err}", file=sys.stderr)
            return 3
        for r in results:
            rows.append((r.alpha, r.fitted_slope, r.theory_slope, int(r.bound_dominates)))
            ok = ok and r.report.passed
    write_csv(out / "sweep.csv", columns, rows)
    return 0 if ok else 1


def build_parser():
    p = argparse.ArgumentParser(prog="adprec", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    pr = sub.add_parser("run", help="run one experiment and write record CSVs")
    pr.add_argument("--config", required=True)
    pr.add_argument("--out", required=True)

    pa = sub.add_parser("audit", help="run a named audit suite")
    pa.add_argument(
        "--suite",
        required=True,
        choices=["trace", "identities", "potentials", "bounds", "momentum", "rates", "all"],
    )
    pa.add_argument("--trials", type=int, default=1000)
    pa.add_argument("--seed", type=int, default=0)
    pa.add_argument("--out", required=True)

    ps = sub.add_parser("sweep", help="rate-regime sweep over noise exponents")
    ps.add_argument("--config", required=True)
    ps.add_argument("--alphas", required=True, help="comma-separated list, may be empty")
    ps.add_argument("--out", required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args.config, args.out)
        if args.command == "audit":
            return cmd_audit(args.suite, args.trials, args.seed, args.out)
        if args.command == "sweep":
            try:
                alphas = [float(a) for a in args.alphas.split(",") if a.strip()]
            except ValueError as err:
                raise InvalidConfig(f"bad --alphas list: {err}")
            return cmd_sweep(args.config, alphas, args.out)
    except InvalidConfig as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except NonFiniteIterate as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 3
    except AdprecError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
