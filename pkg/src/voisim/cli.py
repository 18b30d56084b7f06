"""Command-line interface.

Subcommands: run (one seeded simulation, exports a step table and optionally
a plot), batch (many seeds, one or more policies), compare (paired policy
comparison on common seeds), validate (built-in correctness checks), and
show-scenario. Scenarios are referenced by built-in name or file path;
policies by the mini-grammar voi | periodic:<period>[:<phase>] | random:<p> |
always | never.

Exit codes: 0 success, 1 failed validation or simulation fault, 2 usage or
configuration error. The default output directory comes from --out, then the
scenario file, then $VOISIM_OUTPUT_DIR, then the working directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .channels import ConstantRate
from .engine import RunMetrics, run_batch, run_once
from .errors import ConfigurationError, SimulationError
from .policies import parse_policy
from .scenario_io import (
    ExportBundle,
    builtin_scenarios,
    dump_scenario,
    export_batch,
    export_run,
    load_config,
)
from .validate import run_validation

OUTPUT_ENV = "VOISIM_OUTPUT_DIR"


def _out_dir(flag_value, cfg_output) -> Path:
    chosen = flag_value or cfg_output or os.environ.get(OUTPUT_ENV) or "."
    path = Path(chosen)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _safe_label(label: str) -> str:
    return label.replace(":", "-")


def _parse_seed_list(args, cfg_seeds) -> list:
    if args.seeds is not None:
        text = args.seeds
        try:
            if ":" in text:
                lo, hi = text.split(":")
                seeds = list(range(int(lo), int(hi)))
            else:
                seeds = [int(s) for s in text.split(",")]
        except ValueError:
            raise ConfigurationError(
                f"--seeds takes start:stop or a comma list of integers, got {text!r}"
            ) from None
    elif args.seed_count is not None:
        seeds = list(range(args.seed_start, args.seed_start + args.seed_count))
    elif cfg_seeds:
        seeds = list(cfg_seeds)
    else:
        seeds = [0]
    if not seeds:
        raise ConfigurationError("empty seed list")
    if any(s < 0 for s in seeds):
        raise ConfigurationError("seeds must be >= 0")
    return seeds


def _fmt(x: float) -> str:
    return f"{x:.10g}"


def _fmt_pm(mean: float, se: float) -> str:
    if np.isnan(se):
        return f"{mean:.6g} (se n/a)"
    return f"{mean:.6g} +/- {se:.2g}"


def _print_run_summary(metrics: RunMetrics) -> None:
    L = metrics.total_mse.shape[0]
    for i in range(L):
        print(
            f"station {i + 1}: MSE={_fmt(metrics.total_mse[i])} "
            f"TX={metrics.transmissions[i]} PL={metrics.losses[i]}"
        )
    if metrics.kind == "broadcast":
        total = int(metrics.transmissions[0])
    else:
        total = int(metrics.transmissions.sum())
    print(f"TX={total} total  Phi={_fmt(metrics.phi)}")


def cmd_run(args) -> int:
    cfg = load_config(args.scenario)
    scenario = cfg.scenario
    policy = parse_policy(args.policy or scenario.default_policy)
    metrics = run_once(scenario, policy, args.seed)
    out = _out_dir(args.out, cfg.output)
    stem = f"{scenario.name or scenario.kind}_{_safe_label(policy.label)}_seed{args.seed}"
    bundle = ExportBundle(table=out / f"{stem}.csv")
    export_run(metrics, "table", bundle.table)
    if args.plot:
        bundle.plot = out / f"{stem}.svg"
        export_run(metrics, "plot", bundle.plot)
    if args.verbose:
        print(
            f"scenario={scenario.name} kind={scenario.kind} policy={policy.label} "
            f"seed={args.seed} horizon={scenario.horizon}"
        )
    _print_run_summary(metrics)
    print(f"table: {bundle.table}")
    if bundle.plot:
        print(f"plot: {bundle.plot}")
    return 0


def _batch_common(args, policies) -> int:
    cfg = load_config(args.scenario)
    scenario = cfg.scenario
    if not policies:
        policies = [scenario.default_policy]
    parsed = [parse_policy(p) for p in policies]
    seeds = _parse_seed_list(args, cfg.seeds)
    summary = run_batch(scenario, parsed, seeds, threads=args.threads)
    out = _out_dir(args.out, cfg.output)
    table = out / f"{scenario.name or scenario.kind}_batch.csv"
    export_batch(summary, table)

    base = summary.policies[0]
    L = base.total_mse.shape[1]
    print(f"scenario={scenario.name} kind={scenario.kind} runs={len(seeds)} per policy")
    for runs in summary.policies:
        s = runs.summary()
        mse = "  ".join(
            f"MSE_{i + 1}={_fmt_pm(s['mse_mean'][i], s['mse_se'][i])}" for i in range(L)
        )
        tx = "  ".join(
            f"TX_{i + 1}={_fmt_pm(s['tx_mean'][i], s['tx_se'][i])}" for i in range(L)
        )
        pl = "  ".join(
            f"PL_{i + 1}={_fmt_pm(s['loss_mean'][i], s['loss_se'][i])}" for i in range(L)
        )
        print(f"policy {runs.label}: Phi={_fmt_pm(s['phi_mean'], s['phi_se'])}  {mse}  {tx}  {pl}")
    if len(summary.policies) > 1:
        print(f"paired differences vs {base.label} (same seeds):")
        for j, runs in enumerate(summary.policies[1:], start=1):
            d = summary.paired_phi(j, 0)
            parts = [f"dPhi={_fmt_pm(d.mean, d.se)} t={d.t:.3g}" if not np.isnan(d.se) else f"dPhi={d.mean:.6g} (se n/a)"]
            for i in range(L):
                dm = summary.paired_mse(j, 0, i)
                parts.append(
                    f"dMSE_{i + 1}={_fmt_pm(dm.mean, dm.se)}"
                    if not np.isnan(dm.se)
                    else f"dMSE_{i + 1}={dm.mean:.6g} (se n/a)"
                )
            print(f"  {runs.label} - {base.label}: " + "  ".join(parts))
    print(f"batch table: {table}")
    return 0


def cmd_batch(args) -> int:
    return _batch_common(args, args.policy or [])


def cmd_compare(args) -> int:
    if len(args.policies) < 2:
        raise ConfigurationError("compare needs at least two policy specs")
    return _batch_common(args, args.policies)


def cmd_validate(args) -> int:
    if args.runs < 1:
        raise ConfigurationError(f"--runs must be >= 1, got {args.runs}")
    scale = args.runs / 50.0
    results = run_validation(scale, seed_offset=args.seed)
    failed = [r for r in results if not r.passed]
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


def cmd_show(args) -> int:
    cfg = load_config(args.scenario)
    scenario = cfg.scenario
    if args.json:
        print(json.dumps(dump_scenario(scenario), indent=2))
        return 0
    print(f"name: {scenario.name}")
    print(f"kind: {scenario.kind}")
    print(f"horizon: {scenario.horizon}")
    print(f"default policy: {scenario.default_policy}")
    for j, src in enumerate(scenario.sources):
        print(f"source {j + 1}: n={src.n} m={src.m}")
    for i, proc in enumerate(scenario.links):
        if isinstance(proc, ConstantRate):
            print(f"link {i + 1}: erasure rate {proc.value}")
        else:
            print(
                f"link {i + 1}: chain rates {proc.values.tolist()} "
                f"(initial state {proc.initial})"
            )
    for label, rows in (("price", scenario.price), ("weight", scenario.weight)):
        if np.all(rows == rows.flat[0]):
            print(f"{label}: {rows.flat[0]:g} (constant)")
        else:
            print(f"{label}: per-step schedule, rows {rows.shape[0]}")
    if cfg.seeds:
        print(f"seeds: {list(cfg.seeds)}")
    if cfg.output:
        print(f"output: {cfg.output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voisim",
        description="Remote state estimation over lossy links with value-of-information scheduling.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_scenario(p):
        p.add_argument("--scenario", required=True, help="built-in name or scenario file path")

    def add_out(p):
        p.add_argument("--out", help=f"output directory (default: scenario file, then ${OUTPUT_ENV}, then .)")

    def add_seeds(p):
        g = p.add_mutually_exclusive_group()
        g.add_argument("--seeds", help="seed range start:stop or comma list")
        g.add_argument("--seed-count", type=int, help="use seeds seed-start .. seed-start+count-1")
        p.add_argument("--seed-start", type=int, default=0, help="first seed for --seed-count (default 0)")
        p.add_argument("--threads", type=int, default=1, help="worker threads for the batch (default 1)")

    p_run = sub.add_parser("run", help="one seeded run, exports a step table")
    add_scenario(p_run)
    p_run.add_argument("--policy", help="policy spec (default: the scenario's)")
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--plot", action="store_true", help="also export a vector plot")
    p_run.add_argument("--verbose", "-v", action="store_true")
    add_out(p_run)
    p_run.set_defaults(func=cmd_run)

    p_batch = sub.add_parser("batch", help="many seeds, one or more policies")
    add_scenario(p_batch)
    p_batch.add_argument("--policy", action="append", help="policy spec (repeatable)")
    add_seeds(p_batch)
    add_out(p_batch)
    p_batch.set_defaults(func=cmd_batch)

    p_cmp = sub.add_parser("compare", help="paired comparison of >= 2 policies on common seeds")
    add_scenario(p_cmp)
    p_cmp.add_argument("--policies", nargs="+", required=True, help="two or more policy specs")
    add_seeds(p_cmp)
    add_out(p_cmp)
    p_cmp.set_defaults(func=cmd_compare)

    p_val = sub.add_parser("validate", help="built-in correctness checks")
    p_val.add_argument("--runs", type=int, default=50, help="sample-size knob; 50 = full size")
    p_val.add_argument("--seed", type=int, default=0, help="offset applied to every check seed")
    p_val.set_defaults(func=cmd_validate)

    p_show = sub.add_parser("show-scenario", help="print a scenario summary")
    p_show.add_argument("scenario", help="built-in name or scenario file path")
    p_show.add_argument("--json", action="store_true", help="print the full document instead")
    p_show.set_defaults(func=cmd_show)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SimulationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
