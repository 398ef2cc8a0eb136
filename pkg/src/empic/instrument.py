"""Region-based wall-clock attribution and the scaling harness.

Every region is declared at the call site with one of three classes:
COMM (transport operations), USR (purely local compute) or COM
(call-tree glue). Attribution is self-time: a region's time excludes
enclosed regions, so summing the three classes reproduces the total
wall-clock time of the outermost region to timer resolution.
"""
from __future__ import annotations

import csv
import io
import json
import time

COMM = "COMM"
USR = "USR"
COM = "COM"
CLASSES = (COMM, USR, COM)


class _NullRegion:
    __slots__ = ()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


_NULL_REGION = _NullRegion()


class NullTimer:
    """Disabled timer; used to measure instrumentation overhead."""

    enabled = False

    def region(self, name, cls):
        return _NULL_REGION

    def report(self):
        return {"all": 0.0, "classes": {c: 0.0 for c in CLASSES},
                "regions": {}}


class _Region:
    __slots__ = ("timer", "name", "cls", "start", "child")

    def __init__(self, timer, name, cls):
        self.timer = timer
        self.name = name
        self.cls = cls

    def __enter__(self):
        self.child = 0
        self.start = time.perf_counter_ns()
        self.timer._stack.append(self)
        return self

    def __exit__(self, *exc):
        timer = self.timer
        dur = time.perf_counter_ns() - self.start
        popped = timer._stack.pop()
        if popped is not self:
            raise RuntimeError(
                f"unbalanced regions: exited {self.name!r} but "
                f"{popped.name!r} was innermost")
        rec = timer._regions.get(self.name)
        if rec is None:
            rec = timer._regions[self.name] = [0, 0, self.cls]
        elif rec[2] != self.cls:
            raise RuntimeError(
                f"region {self.name!r} declared with class {self.cls!r} "
                f"but recorded as {rec[2]!r}")
        rec[0] += dur - self.child
        rec[1] += 1
        if timer._stack:
            timer._stack[-1].child += dur
        else:
            timer._root_total += dur
        return False


class RegionTimer:
    """Per-rank region accumulator (no cross-rank synchronization)."""

    enabled = True

    def __init__(self):
        self._regions = {}
        self._stack = []
        self._root_total = 0

    def region(self, name: str, cls: str):
        if cls not in CLASSES:
            raise ValueError(f"unknown region class {cls!r}")
        return _Region(self, name, cls)

    def report(self) -> dict:
        if self._stack:
            raise RuntimeError(
                f"report requested with open regions: "
                f"{[r.name for r in self._stack]}")
        classes = {c: 0.0 for c in CLASSES}
        regions = {}
        for name, (ns, calls, cls) in sorted(self._regions.items()):
            secs = ns * 1e-9
            classes[cls] += secs
            regions[name] = {"time": secs, "calls": calls, "class": cls}
        return {"all": self._root_total * 1e-9,
                "classes": classes, "regions": regions}


def merge_reports(per_rank: list[dict], top_k: int = 3) -> dict:
    """Fixed-rank-order aggregation of per-rank reports."""
    n = len(per_rank)
    agg_classes = {}
    for c in CLASSES:
        vals = [r["classes"][c] for r in per_rank]
        agg_classes[c] = {"sum": sum(vals), "max": max(vals),
                          "mean": sum(vals) / n}
    alls = [r["all"] for r in per_rank]
    region_totals = {}
    for r in per_rank:
        for name, rec in r["regions"].items():
            tot = region_totals.setdefault(
                name, {"time": 0.0, "calls": 0, "class": rec["class"]})
            tot["time"] += rec["time"]
            tot["calls"] += rec["calls"]
    top = sorted(region_totals.items(), key=lambda kv: -kv[1]["time"])
    return {
        "ranks": n,
        "all": {"sum": sum(alls), "max": max(alls), "mean": sum(alls) / n},
        "classes": agg_classes,
        "regions": region_totals,
        "top_regions": [{"name": k, **v} for k, v in top[:top_k]],
        "per_rank": per_rank,
    }


def closure_error(report: dict) -> float:
    """Relative gap between ALL and COMM+USR+COM for one rank's report."""
    total = sum(report["classes"].values())
    if report["all"] == 0.0:
        return 0.0
    return abs(report["all"] - total) / report["all"]


def report_to_json(merged: dict, indent=2) -> str:
    return json.dumps(merged, indent=indent)


def report_to_csv(merged: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["rank", "region", "class", "time_s", "calls"])
    for rank, rep in enumerate(merged["per_rank"]):
        writer.writerow([rank, "ALL", "ALL", f"{rep['all']:.6f}", ""])
        for c in CLASSES:
            writer.writerow([rank, c, c, f"{rep['classes'][c]:.6f}", ""])
        for name, rec in sorted(rep["regions"].items()):
            writer.writerow([rank, name, rec["class"],
                             f"{rec['time']:.6f}", rec["calls"]])
    return buf.getvalue()


def format_report(merged: dict) -> str:
    lines = [f"ranks: {merged['ranks']}",
             f"wall clock (max over ranks): {merged['all']['max']:.4f} s",
             "class breakdown (max over ranks):"]
    for c in CLASSES:
        lines.append(f"  {c:5s} {merged['classes'][c]['max']:.4f} s")
    lines.append("top regions (summed over ranks):")
    for rec in merged["top_regions"]:
        lines.append(f"  {rec['name']:32s} {rec['class']:5s} "
                     f"{rec['time']:.4f} s  ({rec['calls']} calls)")
    return "\n".join(lines)


# --- scaling harness --------------------------------------------------------

def run_scaling_suite(base_config, rank_counts, mode: str,
                      io_compare: bool = True, quiet: bool = True) -> dict:
    """Strong/weak scaling over in-process rank counts.

    Strong mode keeps the global box fixed and reports speedup relative
    to the smallest rank count; weak mode grows the cell counts with the
    rank grid (constant cells per rank, constant cell size) and reports
    absolute times. Optionally times an aggregated vs legacy-shared
    output of the E field at every rank count.
    """
    import os
    from dataclasses import replace

    from . import runner
    from .config import IoSpec
    from .grid import choose_rank_grid

    if mode not in ("strong", "weak"):
        raise ValueError(f"mode must be strong|weak, got {mode!r}")
    rank_counts = sorted(set(int(n) for n in rank_counts))
    # the harness varies N, so any fixed (G, F) would not divide; let the
    # auto rules pick an admissible plan per rank count
    base_config = replace(base_config, io=IoSpec())
    cells0 = base_config.grid_cells
    box0 = base_config.box_size
    grid0 = choose_rank_grid(rank_counts[0], cells0)

    cpu = os.cpu_count() or 1
    warnings = []
    if rank_counts[-1] > cpu:
        warnings.append(
            f"oversubscribed: {rank_counts[-1]} ranks on {cpu} cpus; "
            f"timing fidelity degrades")

    entries = []
    for n in rank_counts:
        if mode == "strong":
            cfg = base_config
            grid = choose_rank_grid(n, cells0)
        else:
            grid = choose_rank_grid(n, cells0)
            scale = [grid[a] // grid0[a] for a in range(3)]
            if any(grid[a] % grid0[a] for a in range(3)):
                # fall back to scaling along x when grids do not nest
                grid = (n * grid0[0], grid0[1], grid0[2])
                scale = [n, 1, 1]
            cells = tuple(cells0[a] * scale[a] for a in range(3))
            box = tuple(box0[a] * scale[a] for a in range(3))
            cfg = replace(base_config, grid_cells=cells, box_size=box)
            per_rank = [cells[a] // grid[a] for a in range(3)]
            base_per_rank = [cells0[a] // grid0[a] for a in range(3)]
            assert per_rank == base_per_rank, \
                "weak scaling must keep per-rank cells constant"
        result = runner.run_simulation(cfg, rank_grid=grid, quiet=quiet)
        entry = {"ranks": n, "rank_grid": list(grid),
                 "cells": list(cfg.grid_cells),
                 "all": result.report["all"]["max"],
                 "classes": {c: result.report["classes"][c]["max"]
                             for c in CLASSES},
                 "top_regions": result.report["top_regions"]}
        if io_compare:
            entry["io_seconds"] = runner.time_io_strategies(
                cfg, rank_grid=grid)
        entries.append(entry)

    base = entries[0]
    if mode == "strong":
        for e in entries:
            e["speedup"] = {
                "ALL": _ratio(base["all"], e["all"]),
                **{c: _ratio(base["classes"][c], e["classes"][c])
                   for c in CLASSES},
            }
    return {"mode": mode, "rank_counts": rank_counts,
            "entries": entries, "warnings": warnings}


def _ratio(a, b):
    return a / b if b > 0 else float("inf")


def format_scaling_table(suite: dict) -> str:
    mode = suite["mode"]
    lines = [f"{mode} scaling"]
    if mode == "strong":
        lines.append(f"{'ranks':>6} {'ALL(s)':>10} {'speedup':>8} "
                     f"{'USR(s)':>10} {'USRx':>6} {'COMM(s)':>10}")
        for e in suite["entries"]:
            lines.append(
                f"{e['ranks']:>6} {e['all']:>10.4f} "
                f"{e['speedup']['ALL']:>8.2f} "
                f"{e['classes']['USR']:>10.4f} "
                f"{e['speedup']['USR']:>6.2f} "
                f"{e['classes']['COMM']:>10.4f}")
    else:
        lines.append(f"{'ranks':>6} {'cells':>16} {'ALL(s)':>10} "
                     f"{'USR(s)':>10} {'COMM(s)':>10}")
        for e in suite["entries"]:
            cells = "x".join(str(c) for c in e["cells"])
            lines.append(
                f"{e['ranks']:>6} {cells:>16} {e['all']:>10.4f} "
                f"{e['classes']['USR']:>10.4f} "
                f"{e['classes']['COMM']:>10.4f}")
    lines.append("top regions (time summed over ranks):")
    for e in suite["entries"]:
        for rec in e["top_regions"]:
            lines.append(f"{e['ranks']:>6}  {rec['name']:32s} "
                         f"{rec['class']:5s} {rec['time']:.4f} s")
    if any("io_seconds" in e for e in suite["entries"]):
        lines.append("output time (s): aggregated vs legacy-shared")
        for e in suite["entries"]:
            io_s = e.get("io_seconds", {})
            if io_s:
                lines.append(f"{e['ranks']:>6} "
                             f"{io_s['aggregated']:>12.4f} "
                             f"{io_s['legacy-shared']:>14.4f}")
    for w in suite["warnings"]:
        lines.append(f"warning: {w}")
    return "\n".join(lines)
