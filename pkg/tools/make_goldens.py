#!/usr/bin/env python3
"""Regenerate the golden fileset corpus under frontend/testdata/golden.

Runs are bitwise deterministic for a fixed rank count, so the committed
bytes are reproducible:

    python tools/make_goldens.py
"""
import json
import os
import shutil
import sys

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
GOLDEN = os.path.join(ROOT, "frontend", "testdata", "golden")

sys.path.insert(0, os.path.join(ROOT, "src"))

from empic import instrument, output, runner  # noqa: E402
from empic.config import parse_config  # noqa: E402

PARITY_DOC = {
    "grid_cells": [16, 8, 8],
    "box_size": [4.0, 2.0, 2.0],
    "n_steps": 10,
    "rng_seed": 7,
    "species": [
        {"name": "electrons", "charge": -1.0, "mass": 1.0,
         "particles_per_cell": 4,
         "init": {"kind": "two_stream", "drift_momentum": 0.1,
                  "density": 1.0,
                  "perturbation": {"kind": "sine", "amplitude": 1e-3,
                                   "mode": 1}}}],
    "outputs": [
        {"quantity": "E", "every_n_steps": 10,
         "time_window": [0.1, None]},
        {"quantity": "density", "species": "electrons",
         "every_n_steps": 10, "time_window": [0.1, None]},
        {"quantity": "particle_phase_space", "species": "electrons",
         "every_n_steps": 10, "time_window": [0.1, None]},
    ],
}

GROWTH_DOC = {
    "grid_cells": [64, 4, 4],
    "box_size": [0.5, 0.03125, 0.03125],
    "n_steps": 6500,
    "rng_seed": 3,
    "species": [
        {"name": "electrons", "charge": -1.0, "mass": 1.0,
         "particles_per_cell": 32,
         "init": {"kind": "two_stream", "drift_momentum": 0.05,
                  "density": 1.0,
                  "perturbation": {"kind": "sine", "amplitude": 2e-5,
                                   "mode": 1}}}],
    "outputs": [
        {"quantity": "E", "every_n_steps": 100},
    ],
}


def make_parity():
    for sub, gf in (("parity_g2f2", (2, 2)), ("parity_g4f1", (4, 1))):
        doc = json.loads(json.dumps(PARITY_DOC))
        doc["io"] = {"group_size": gf[0], "files": gf[1]}
        out_dir = os.path.join(GOLDEN, sub)
        cfg = parse_config(json.dumps(doc))
        res = runner.run_simulation(cfg, rank_grid=(2, 2, 2),
                                    out_dir=out_dir, energy_every=10 ** 9)
        print(f"{sub}: {len(res.filesets)} filesets")
    dumps = {}
    for sub in ("parity_g2f2", "parity_g4f1"):
        out_dir = os.path.join(GOLDEN, sub)
        for name in sorted(os.listdir(out_dir)):
            if name.endswith(".index.json"):
                summary = output.fileset_summary(os.path.join(out_dir, name))
                dumps[f"{sub}/{name}"] = summary
    with open(os.path.join(GOLDEN, "parity_dumps.json"), "w") as fh:
        json.dump(dumps, fh, indent=1, sort_keys=True)
    print(f"parity dumps: {len(dumps)} filesets summarized")


def make_growth():
    out_dir = os.path.join(GOLDEN, "growth")
    cfg = parse_config(json.dumps(GROWTH_DOC))
    res = runner.run_simulation(cfg, rank_grid=(2, 1, 1), out_dir=out_dir,
                                energy_every=20)
    report = dict(res.report)
    report["energy_history"] = res.energy_history
    report["dt"] = res.dt
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        fh.write(instrument.report_to_json(report))
    with open(os.path.join(out_dir, "config.json"), "w") as fh:
        json.dump(GROWTH_DOC, fh, indent=1)
    print(f"growth: {len(res.filesets)} filesets, "
          f"{len(res.energy_history)} energy rows")


def main():
    if os.path.isdir(GOLDEN):
        shutil.rmtree(GOLDEN)
    os.makedirs(GOLDEN)
    make_parity()
    make_growth()


if __name__ == "__main__":
    main()
