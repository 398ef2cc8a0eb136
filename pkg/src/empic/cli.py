"""Command-line entry point.

Exit codes: 0 success, 2 configuration errors, 3 runtime errors,
4 output/file-format errors.
"""
from __future__ import annotations

import argparse
import json
import signal
import sys
import threading
import time
from dataclasses import replace

import numpy as np

from . import instrument, kernels, output, runner
from .config import ConfigError, IoSpec, parse_config, validate
from .output import OutputFormatError, OutputWriteError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_IO = 4


def _parse_triple(text):
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(
            f"expected Px,Py,Pz, got {text!r}")
    return tuple(int(p) for p in parts)


def _parse_counts(text):
    return [int(p) for p in text.split(",") if p]


def _load(args):
    with open(args.config, "r", encoding="utf-8") as fh:
        cfg = parse_config(fh.read())
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, rng_seed=args.seed)
    if getattr(args, "layout", None) is not None:
        cfg = replace(cfg, layout={"aos": "AoS", "soa": "SoA"}[args.layout])
    if getattr(args, "steps", None) is not None:
        cfg = replace(cfg, n_steps=args.steps)
    io_g = getattr(args, "io_group_size", None)
    io_f = getattr(args, "io_files", None)
    if io_g is not None or io_f is not None:
        cfg = replace(cfg, io=IoSpec(
            group_size=io_g if io_g is not None else cfg.io.group_size,
            files=io_f if io_f is not None else cfg.io.files))
    return cfg


def _plan_dict(cfg, plan):
    io = output.plan_io_topology(plan.n_ranks, plan.io_group_size,
                                 plan.io_files)
    return {
        "dt": plan.dt,
        "rank_grid": list(plan.rank_grid),
        "n_ranks": plan.n_ranks,
        "ghost_width": plan.ghost_width,
        "cell_sizes": list(cfg.cell_sizes),
        "io": {"N": io.n_ranks, "G": io.group_size, "M": io.n_masters,
               "F": io.n_files, "writers_per_file": io.masters_per_file},
        "outputs": [o.name for o in cfg.outputs],
    }


def cmd_validate(args):
    cfg = _load(args)
    plan = validate(cfg, rank_grid_override=args.ranks)
    print(json.dumps(_plan_dict(cfg, plan), indent=2))
    return EXIT_OK


def _write_report(report, path):
    if path.endswith(".csv"):
        text = instrument.report_to_csv(report)
    else:
        text = instrument.report_to_json(report)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def cmd_run(args):
    cfg = _load(args)
    if args.validate_only or args.dry_run:
        return cmd_validate(args)

    stop = threading.Event()
    previous = signal.signal(signal.SIGINT, lambda *a: stop.set())
    try:
        result = runner.run_simulation(
            cfg, rank_grid=args.ranks, out_dir=args.out_dir,
            io_strategy=args.io_strategy, transport=args.transport,
            debug=args.debug_checks, backend=args.kernels,
            stop_event=stop, quiet=False)
    finally:
        signal.signal(signal.SIGINT, previous)
    if args.report:
        report = dict(result.report)
        report["energy_history"] = result.energy_history
        report["filesets"] = result.filesets
        _write_report(report, args.report)
        print(f"report written to {args.report}")
    for p in result.filesets:
        print(f"fileset: {p}")
    if result.aborted:
        print("aborted by signal; partial results flushed", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_bench_scaling(args):
    cfg = _load(args)
    suite = instrument.run_scaling_suite(cfg, args.ranks, args.mode,
                                         io_compare=not args.no_io_compare)
    print(instrument.format_scaling_table(suite))
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(suite, fh, indent=2)
        print(f"scaling tables written to {args.report}")
    return EXIT_OK


def cmd_bench_layout(args):
    cfg = _load(args)
    results = {}
    for layout in ("AoS", "SoA"):
        lcfg = replace(cfg, layout=layout)
        t0 = time.perf_counter()
        res = runner.run_simulation(lcfg, rank_grid=args.ranks,
                                    collect_state=True, energy_every=10 ** 9)
        wall = time.perf_counter() - t0
        recs = {name: runner.sort_records(
            runner.gather_global_records(res.rank_states, name))
            for name in (s.name for s in lcfg.species)}
        results[layout] = {"wall": wall, "records": recs,
                           "steps": lcfg.n_steps}
    for layout, r in results.items():
        per = r["wall"] / max(r["steps"], 1)
        print(f"{layout}: {r['wall']:.3f} s total, {per * 1e3:.2f} ms/step")
    a, b = results["AoS"]["records"], results["SoA"]["records"]
    for name in a:
        if not (a[name].shape == b[name].shape
                and np.array_equal(a[name], b[name])):
            print(f"FATAL: layouts disagree on species {name!r}",
                  file=sys.stderr)
            return EXIT_RUNTIME
    print("layouts agree bitwise")
    return EXIT_OK


def cmd_bench_kernels(args):
    cfg = _load(args)
    timings = {}
    for name in kernels.available_backends():
        kern = kernels.get_backend(name)
        kernels.warmup(kern)
        t0 = time.perf_counter()
        runner.run_simulation(cfg, rank_grid=args.ranks, backend=name,
                              energy_every=10 ** 9)
        timings[name] = time.perf_counter() - t0
    steps = max(cfg.n_steps, 1)
    for name, wall in timings.items():
        print(f"{name:6s}: {wall:.3f} s total, "
              f"{wall / steps * 1e3:.2f} ms/step")
    if "numba" in timings and "numpy" in timings:
        print(f"numpy/numba time ratio: "
              f"{timings['numpy'] / timings['numba']:.2f}x")
    return EXIT_OK


def cmd_inspect(args):
    summary = output.fileset_summary(args.path)
    if args.verify_scan:
        by_index = output.read_fileset(args.path, use_index=True)
        by_scan = output.read_fileset(args.path, use_index=False)
        if isinstance(by_index, output.GridData):
            same = np.array_equal(by_index.data, by_scan.data)
        else:
            same = (set(by_index.species) == set(by_scan.species)
                    and all(np.array_equal(by_index.species[k],
                                           by_scan.species[k])
                            for k in by_index.species))
        summary["scan_matches_index"] = bool(same)
        if not same:
            raise OutputFormatError(
                f"{args.path}: sequential scan disagrees with the index")
    if args.json:
        print(json.dumps(summary, indent=2))
    else:
        print(f"{summary['kind']} fileset {summary['index']}")
        print(f"  quantity {summary['quantity']!r}  step {summary['step']}"
              f"  time {summary['time']:.6g}")
        print(f"  global cells {summary['global_cells']}  "
              f"io N={summary['io']['N']} G={summary['io']['G']} "
              f"F={summary['io']['F']} ({summary['io']['strategy']})")
        print(f"  {summary['n_blocks']} blocks in {len(summary['files'])} "
              f"data files")
        if "components" in summary:
            for i, comp in enumerate(summary["components"]):
                print(f"  component {i}: min {comp['min']:.6g} "
                      f"max {comp['max']:.6g} sha256 {comp['sha256'][:16]}…")
        else:
            for sid, rec in summary["species"].items():
                print(f"  species {sid}: {rec['count']} records "
                      f"sha256 {rec['sha256'][:16]}…")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="empic",
        description="electromagnetic particle-in-cell engine")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, ranks=True):
        p.add_argument("--config", required=True, help="JSON run description")
        if ranks:
            p.add_argument("--ranks", type=_parse_triple, default=None,
                           metavar="Px,Py,Pz")
        p.add_argument("--steps", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--layout", choices=("aos", "soa"), default=None)
        p.add_argument("--io-group-size", type=int, default=None,
                       metavar="G")
        p.add_argument("--io-files", type=int, default=None, metavar="F")

    p = sub.add_parser("run", help="run a simulation")
    add_common(p)
    p.add_argument("--io-strategy", choices=output.STRATEGIES,
                   default="aggregated")
    p.add_argument("--transport", choices=("threads", "loopback"),
                   default="threads")
    p.add_argument("--kernels", choices=("auto", "numba", "numpy"),
                   default=None)
    p.add_argument("--out-dir", default="empic-out")
    p.add_argument("--report", default=None,
                   help="write region report (.json or .csv)")
    p.add_argument("--dry-run", action="store_true",
                   help="print the resolved plan; no writes")
    p.add_argument("--validate-only", action="store_true")
    p.add_argument("--debug-checks", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate-config", help="validate and print the plan")
    add_common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("bench-scaling", help="strong/weak scaling harness")
    add_common(p, ranks=False)
    p.add_argument("--mode", choices=("strong", "weak"), required=True)
    p.add_argument("--ranks", type=_parse_counts, required=True,
                   metavar="N1,N2,...")
    p.add_argument("--no-io-compare", action="store_true")
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_bench_scaling)

    p = sub.add_parser("bench-layout", help="AoS vs SoA comparison")
    add_common(p)
    p.set_defaults(func=cmd_bench_layout)

    p = sub.add_parser("bench-kernels",
                       help="numba vs numpy kernel comparison")
    add_common(p)
    p.set_defaults(func=cmd_bench_kernels)

    p = sub.add_parser("inspect", help="summarize a PICB fileset")
    p.add_argument("path", help="index sidecar path")
    p.add_argument("--json", action="store_true")
    p.add_argument("--verify-scan", action="store_true",
                   help="cross-check index against a sequential scan")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (OutputFormatError, OutputWriteError, FileNotFoundError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (runner.WorkerError, RuntimeError, ValueError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
