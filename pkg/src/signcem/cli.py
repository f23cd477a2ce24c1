"""Command-line entry point: ``signcem run [config.json] [--flags]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import ConfigurationError
from .experiments import ExperimentConfig, run


def _ints(s):
    return [int(x) for x in s.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="signcem")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment sweep")
    r.add_argument("config", nargs="?", help="JSON config file")
    r.add_argument("--model", choices=["flat", "square", "cross", "random"])
    r.add_argument("--fine-n", type=int)
    r.add_argument("--coarse-n", type=_ints, help="comma-separated, e.g. 10,20,40")
    r.add_argument("--layers", type=_ints, help="comma-separated oversampling layers m")
    r.add_argument("--eigs", type=int, help="eigenfunctions per element (l_star)")
    r.add_argument("--sigma-plus", type=float)
    r.add_argument("--sigma-minus", type=float)
    r.add_argument("--gamma", type=float)
    r.add_argument("--n-cells", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--out")
    r.add_argument("--threads", type=int)
    r.add_argument("--no-cache", action="store_true")
    r.add_argument("--baseline", action="store_true", help="also write baseline.csv")
    r.add_argument("--no-dump", action="store_true", help="skip VTK/CSV field dumps")
    r.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args) -> ExperimentConfig:
    d = json.loads(open(args.config).read()) if args.config else {}
    for key in ("model", "fine_n", "coarse_n", "layers", "eigs", "sigma_plus", "sigma_minus",
                "gamma", "n_cells", "seed", "out", "threads"):
        val = getattr(args, key)
        if val is not None:
            d[key] = val
    if args.no_cache:
        d["cache"] = False
    if args.baseline:
        d["baseline"] = True
    if args.no_dump:
        d["dump_fields"] = False
    return ExperimentConfig.from_dict(d)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
    except (ConfigurationError, TypeError, ValueError, OSError) as exc:
        print(f"signcem: invalid configuration: {exc}", file=sys.stderr)
        return 1
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
