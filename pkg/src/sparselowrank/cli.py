"""Command-line entry point for the benchmark harness.

Subcommands mirror the experiment kinds; every run is driven by a JSON
manifest, with output directory, worker count, and algorithm list
overridable from the command line. Exit codes: 0 on a completed run, 2 on a
manifest problem, 3 on an internal failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import traceback

from .bench import KINDS, ExperimentManifest, ManifestError, run_experiment

__all__ = ["main", "build_parser"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slr-bench",
        description="Benchmarks for simultaneously row-sparse and low-rank recovery",
    )
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run a {kind} experiment")
        p.add_argument("--manifest", required=True, help="path to a JSON manifest")
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--threads", type=int, default=None, help="worker count")
        p.add_argument(
            "--algorithms", default=None,
            help="comma-separated algorithm list override (irls,iht)",
        )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        manifest = ExperimentManifest.from_json(args.manifest)
        overrides = {}
        if manifest.kind != args.kind:
            raise ManifestError(
                f"manifest kind {manifest.kind!r} does not match subcommand {args.kind!r}"
            )
        if args.out is not None:
            overrides["out_dir"] = args.out
        if args.threads is not None:
            overrides["threads"] = args.threads
        if args.algorithms is not None:
            overrides["algorithms"] = [a for a in args.algorithms.split(",") if a]
        if overrides:
            manifest = dataclasses.replace(manifest, **overrides)
    except (ManifestError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"manifest error: {exc}", file=sys.stderr)
        return 2
    try:
        run_experiment(manifest)
    except ManifestError as exc:
        # inconsistencies only detectable by the specific runner
        print(f"manifest error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
