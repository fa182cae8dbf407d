"""Command line entry point.

    randwave <experiment> --config run.json [--set key=value ...] --out DIR
    randwave classify A.json B.json
    randwave make-base power_decay --sigma 3 --n-max 8 --s 1 --out base.json

Exit codes: 0 success, 2 invalid configuration or input, 3 numerical
instability, 4 I/O failure.
"""
from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigError, InstabilityError, InvalidInputError
from .harness import EXPERIMENTS, PROFILES, describe_base, load_config, make_base, run
from .kakutani import classify
from .spectral import load_spectrum, save_spectrum

EXIT_OK, EXIT_CONFIG, EXIT_UNSTABLE, EXIT_IO = 0, 2, 3, 4


def _parser():
    p = argparse.ArgumentParser(prog="randwave", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name, help=f"run the {name} experiment")
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (value parsed as JSON if possible)")
        sp.add_argument("--out", help="output directory (overrides the config)")
        sp.add_argument("--workers", type=int, help="worker processes")
    cp = sub.add_parser("classify", help="gaussian equivalence verdict for two spectra")
    cp.add_argument("first")
    cp.add_argument("second")
    mp = sub.add_parser("make-base", help="write a base spectrum file")
    mp.add_argument("profile", choices=PROFILES)
    mp.add_argument("--n-max", type=int, default=8)
    mp.add_argument("--s", type=float, default=0.0)
    mp.add_argument("--sigma", type=float, default=3.0)
    mp.add_argument("--amplitude", type=float, default=1.0)
    mp.add_argument("--mode", type=int, nargs=3, default=(1, 0, 0))
    mp.add_argument("--path", help="source file for the custom profile")
    mp.add_argument("--out", required=True)
    return p


def _run_experiment(args):
    cfg = load_config(args.config, args.set, experiment=args.command, out=args.out,
                      workers=args.workers)
    man = run(cfg)
    print(json.dumps({"out": cfg.out, "run_hash": man.run_hash,
                      "outputs": [o["path"] for o in man.outputs]}, indent=2))


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        if args.command == "classify":
            rep = classify(load_spectrum(args.first), load_spectrum(args.second))
            print(rep.to_json())
        elif args.command == "make-base":
            S = make_base(args.profile, n_max=args.n_max, s=args.s, sigma=args.sigma,
                          amplitude=args.amplitude, n=args.mode, path=args.path)
            save_spectrum(S, args.out)
            print(json.dumps(describe_base(S)))
        else:
            _run_experiment(args)
    except (ConfigError, InvalidInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InstabilityError as exc:
        print(f"instability: {exc}", file=sys.stderr)
        print(json.dumps(exc.diagnostics, default=str), file=sys.stderr)
        return EXIT_UNSTABLE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
