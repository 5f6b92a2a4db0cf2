"""Command line entry point: ``fieldsim {run,expand,bench,version}``."""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .errors import FieldSimError


def _parser():
    p = argparse.ArgumentParser(prog="fieldsim", description="Field simulation engine")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a simulation file")
    run.add_argument("config")
    run.add_argument("--output-dir", help="overrides output.dir from the config")
    run.add_argument("--trace-deps", action="store_true", help="print every executed dependency rule")
    run.add_argument("--dump-kernel", action="store_true", help="print the expanded kernels before running")

    exp = sub.add_parser("expand", help="print the kernel IR of a DSL equation file")
    exp.add_argument("dsl_file")
    exp.add_argument("--dump-kernel", action="store_true", help="accepted for symmetry; expand always dumps")

    bench = sub.add_parser("bench", help="time interpreted vs compiled dmdt kernel")
    bench.add_argument("config")
    bench.add_argument("--sites", type=int, default=100_000)
    bench.add_argument("--repetitions", type=int, default=5)
    bench.add_argument("--seed", type=int, default=0)

    sub.add_parser("version", help="print the version")
    return p


def _run(args):
    from .config import load_config
    from .runner import run_simulation

    cfg = load_config(args.config)
    return run_simulation(
        cfg,
        output_dir=args.output_dir,
        trace=sys.stdout if args.trace_deps else None,
        dump=sys.stdout if args.dump_kernel else None,
    )


def _expand(args):
    from .kernels import dump_kernel, expand

    with open(args.dsl_file) as fh:
        source = fh.read()
    sys.stdout.write(dump_kernel(expand(source)))
    return 0


def _bench(args):
    from .config import load_config
    from .kernels import benchmark_backends, fill_random
    from .llg import DMDT_SOURCE
    from .mesh import FieldSet, Mesh

    cfg = load_config(args.config)
    coeffs = cfg.material.coefficients()
    fields = FieldSet(Mesh(args.sites))
    fields.new("m", 1)
    fields.new("H", 1, "A/m")
    fields.new("dmdt", 1, "s^-1")
    fill_random(fields, ["m", "H"], seed=args.seed)
    res = benchmark_backends(DMDT_SOURCE, {"c1": coeffs.c1, "c2": coeffs.c2}, fields, args.repetitions)
    print(f"sites={args.sites} repetitions={args.repetitions}")
    print(f"interpreted_ns_per_site={res.interpreted_ns_per_site:.3f}")
    print(f"compiled_ns_per_site={res.compiled_ns_per_site:.3f}")
    print(f"speedup={res.speedup:.2f}")
    return 0


def cli_main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    if args.command == "version":
        print(f"fieldsim {__version__}")
        return 0
    handler = {"run": _run, "expand": _expand, "bench": _bench}[args.command]
    try:
        return handler(args)
    except (FieldSimError, ValueError, OSError) as exc:
        msg = " ".join(str(exc).split())
        print(f"fieldsim: error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
