"""Command-line experiment runner.

    harvestsim run <config> [--seed N] [--horizon N] [--out DIR]
    harvestsim list
    harvestsim validate <config>
    harvestsim mdp-solve <config> [--out DIR]

Configs may be file paths or bundled experiment names (see `list`).
The default output directory is ./results, overridable with the
HARVESTSIM_OUT environment variable or --out.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .experiments import (ConfigError, bundled_config_path, list_experiments,
                          parse_config, run_experiment, _mdp_config,
                          OUTPUT_ENV_VAR)


def _resolve_config(arg: str) -> Path:
    path = Path(arg)
    if path.exists():
        return path
    try:
        bundled = bundled_config_path(arg)
        if bundled.exists():
            return bundled
    except (FileNotFoundError, ModuleNotFoundError):
        pass
    raise ConfigError(f"no such config file or bundled experiment: {arg}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="harvestsim",
        description="Energy-harvesting node and MAC policy experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--horizon", type=int, default=None)
    p_run.add_argument("--out", default=None,
                       help=f"output dir (default ./results or "
                            f"${OUTPUT_ENV_VAR})")

    sub.add_parser("list", help="show the bundled experiment catalog")

    p_val = sub.add_parser("validate", help="parse and check a config")
    p_val.add_argument("config")

    p_mdp = sub.add_parser(
        "mdp-solve",
        help="solve the quantized decision problem of a config and export "
             "the policy table as CSV")
    p_mdp.add_argument("config")
    p_mdp.add_argument("--out", default=None)

    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    if args.command == "list":
        for name, desc, note in list_experiments():
            print(f"{name:8s} {desc}")
            print(f"{'':8s}   acceptance: {note}")
        return 0

    cfg = parse_config(_resolve_config(args.config))

    if args.command == "validate":
        print(f"ok: {cfg.experiment_id} ({cfg.scenario}, "
              f"{len(cfg.policies)} policies, {len(cfg.sweep)} sweep points, "
              f"{cfg.replications} replication(s))")
        return 0

    if args.command == "run":
        paths = run_experiment(cfg, out_dir=args.out, seed=args.seed,
                               horizon=args.horizon)
        print(f"wrote {paths['csv']}")
        print(f"wrote {paths['manifest']}")
        return 0

    if args.command == "mdp-solve":
        import os
        from .mdp import (build_transition, export_policy_csv,
                          relative_value_iteration)
        if cfg.x_spec.kind != "truncated-poisson" or not cfg.quantize_step:
            raise ConfigError(
                "mdp-solve needs truncated-poisson arrivals and a quantize "
                "grid (see fig2.cfg)")
        out_root = Path(args.out or os.environ.get(OUTPUT_ENV_VAR, "results"))
        out_root.mkdir(parents=True, exist_ok=True)
        mdp_cfg = _mdp_config(cfg, cfg.x_spec.mean)
        kernel = build_transition(mdp_cfg)
        sol = relative_value_iteration(mdp_cfg, kernel, tol=1e-6)
        path = out_root / f"{cfg.experiment_id}.policy.csv"
        export_policy_csv(path, sol, mdp_cfg, kernel)
        print(f"average queue length {sol.avg_cost:.6f} "
              f"({sol.iterations} sweeps)")
        print(f"wrote {path}")
        return 0

    raise AssertionError(args.command)


if __name__ == "__main__":
    sys.exit(main())
