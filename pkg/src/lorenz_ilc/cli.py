"""Command line entry point: ``lorenz-ilc run|validate``."""
from __future__ import annotations

import argparse
import logging
import sys

import yaml

from .experiments import ManifestError, coverage_table, load_manifest, run_manifest, validate_file


def _parser():
    parser = argparse.ArgumentParser(prog="lorenz-ilc",
                                     description="Run manifest-driven ILC experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment manifest")
    run.add_argument("manifest", nargs="?", help="manifest (YAML) or a metadata record to re-run")
    run.add_argument("--list", action="store_true", help="print the experiment/figure coverage matrix")
    run.add_argument("--seed", type=int, default=None, help="override the manifest seed")
    run.add_argument("--out", default=".", help="output directory (default: current directory)")
    run.add_argument("-v", "--verbose", action="store_true")

    val = sub.add_parser("validate", help="check a manifest without running it")
    val.add_argument("manifest")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "validate":
        errors = validate_file(args.manifest)
        if errors:
            for e in errors:
                print(f"error: {e}", file=sys.stderr)
            return 1
        print("ok")
        return 0

    if args.list:
        print(coverage_table())
        return 0
    if args.manifest is None:
        print("error: a manifest path is required (or use --list)", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    try:
        manifest = load_manifest(args.manifest)
        meta = run_manifest(manifest, args.out, seed=args.seed)
    except ManifestError as exc:
        for e in exc.errors:
            print(f"error: {e}", file=sys.stderr)
        return 1
    except (OSError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - report any execution failure as exit status
        print(f"error: {args.manifest} failed: {exc}", file=sys.stderr)
        return 1
    for fname in meta["outputs"]:
        print(fname)
    return 0


if __name__ == "__main__":
    sys.exit(main())
