"""Command line entry point: gdse train | se | figure | verify."""
import argparse
import json
import os
import sys

from . import checks
from .experiments import (ConfigError, ExperimentConfig, reproduce_figure, run_experiment,
                          run_se_curves)

FLAG_FIELDS = {"m": int, "n": int, "q": int, "L": int, "sigma_xi": float, "iters": int,
               "reps": int, "seed": int, "mc_samples": int}


def _parser():
    p = argparse.ArgumentParser(prog="gdse", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("train", "replicated GD runs with test-error estimates"),
                        ("se", "state evolution predictions"),
                        ("figure", "reproduce a figure at desk scale"),
                        ("verify", "run the verification suite")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", help="JSON config file; flags override it")
        s.add_argument("--m", type=int)
        s.add_argument("--n", type=int)
        s.add_argument("--q", type=int)
        s.add_argument("--L", type=int)
        s.add_argument("--eta", type=float, nargs="+", help="one rate or one per layer")
        s.add_argument("--sigma-xi", dest="sigma_xi", type=float)
        s.add_argument("--iters", type=int)
        s.add_argument("--reps", type=int)
        s.add_argument("--dist", help="gaussian, t10 or student_t:<df>")
        s.add_argument("--seed", type=int)
        s.add_argument("--mc-samples", dest="mc_samples", type=int)
        s.add_argument("--out-dir", dest="out_dir", default=".")
        if name == "figure":
            s.add_argument("--fig", type=int, required=True, choices=range(1, 6))
            s.add_argument("--scale", type=float, default=0.5)
        if name == "verify":
            s.add_argument("--quick", action="store_true",
                           help="skip the desk-scale Monte Carlo checks")
    return p


def build_config(args, mode):
    d = {}
    if args.config:
        try:
            with open(args.config) as fh:
                d = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"config: cannot read {args.config} ({e})") from None
        if not isinstance(d, dict):
            raise ConfigError("config: top level must be an object")
    for k in FLAG_FIELDS:
        v = getattr(args, k)
        if v is not None:
            d[k] = v
    if args.eta is not None:
        d["eta"] = list(args.eta)
    if args.dist is not None:
        d["feature_dist"] = args.dist
    d["mode"] = mode
    return ExperimentConfig.from_dict(d)


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        cfg = build_config(args, args.command)
        if args.command == "figure" and not args.scale > 0:
            raise ConfigError("scale: must be positive")
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    os.makedirs(args.out_dir, exist_ok=True)
    if args.command == "train":
        path = os.path.join(args.out_dir, "train.csv")
        run_experiment(cfg, path)
        print(path)
    elif args.command == "se":
        try:
            run_se_curves(cfg, os.path.join(args.out_dir, "se.csv"),
                          os.path.join(args.out_dir, "se_params.csv"))
        except ConfigError as e:
            print(f"config error: {e}", file=sys.stderr)
            return 1
        print(os.path.join(args.out_dir, "se.csv"))
    elif args.command == "figure":
        for p in reproduce_figure(args.fig, args.scale, args.out_dir, cfg.seed):
            print(p)
    else:
        results = checks.run_all(cfg.seed, quick=args.quick, log=print)
        failed = [r for r in results if not r.ok]
        print(f"{len(results) - len(failed)} of {len(results)} checks passed or flagged")
        return 2 if failed else 0
    return 0


if __name__ == "__main__":
    sys.exit(main())
