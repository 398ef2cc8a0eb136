"""Run orchestration: rank workers, output emission, report assembly."""
from __future__ import annotations

import os
import threading
import time as _time
from dataclasses import dataclass, field

import numpy as np

from . import exchange, instrument, kernels, mover, output
from .config import SimulationConfig, to_json_dict, validate
from .fields import FieldLattice
from .grid import YeeLayout, build_topology
from .instrument import COM, USR
from .output import (KIND_GRID, KIND_PARTICLES, clip_to_rank,
                     plan_io_topology, request_cell_box, should_emit)
from .particles import init_species, kinetic_energy


class WorkerError(RuntimeError):
    """A rank worker failed; carries the originating rank."""

    def __init__(self, rank, original):
        self.rank = rank
        self.original = original
        super().__init__(f"rank {rank} failed: {original!r}")


def run_on_ranks(n_ranks, fn, transport_kind="threads", jitter=0.0):
    """Run fn(rank, transport) on every rank; returns results by rank.

    With the loopback transport (single rank only) fn runs inline on the
    calling thread; otherwise each rank is a thread on a shared fabric.
    """
    if transport_kind == "loopback":
        if n_ranks != 1:
            raise ValueError("loopback transport is single-rank only")
        return [fn(0, exchange.LoopbackTransport())]
    fabric = exchange.ThreadFabric(n_ranks, jitter=jitter)
    transports = fabric.transports()
    results = [None] * n_ranks
    failures = []

    def tmain(rank):
        try:
            results[rank] = fn(rank, transports[rank])
        except BaseException as exc:  # noqa: BLE001 - reported to caller
            failures.append(WorkerError(rank, exc))
            fabric.abort()

    threads = [threading.Thread(target=tmain, args=(r,), name=f"rank-{r}")
               for r in range(n_ranks)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if failures:
        # prefer the originating failure over wake-up noise on other ranks
        def is_secondary(f):
            return isinstance(f.original, (exchange.TransportError,
                                           threading.BrokenBarrierError))
        primary = min(failures, key=lambda f: (is_secondary(f), f.rank))
        raise primary
    return results


@dataclass
class RunResult:
    config: SimulationConfig
    rank_grid: tuple
    dt: float
    report: dict
    energy_history: list = field(default_factory=list)
    filesets: list = field(default_factory=list)
    rank_states: list | None = None
    continuity_history: list | None = None
    aborted: bool = False


def _emit_request(state, req, config, io, out_dir, strategy, echo,
                  species_names, scratch):
    """Collective emission of one output request at the current step."""
    lat = state.lattice
    topo = state.topo
    step = state.step_index
    now = state.time
    name = f"{req.name}"

    common = dict(out_dir=out_dir, name=name, step=step, time=now,
                  io=io, topo=topo, transport=state.transport,
                  strategy=strategy, quantity=req.quantity,
                  species_names=species_names, config_echo=echo)

    if req.quantity in ("E", "B", "J"):
        arrays = {"E": lat.e, "B": lat.b, "J": lat.j}[req.quantity]
        box = request_cell_box(req, config)
        clip = clip_to_rank(box, topo)
        block = None
        if clip is not None:
            lo, hi = clip
            g = topo.ghost_width
            sl = tuple(slice(lo[a] - topo.starts[a] + g,
                             hi[a] - topo.starts[a] + g) for a in range(3))
            block = (lo, hi, np.stack([a[sl] for a in arrays]))
        return output.write_collective(kind=KIND_GRID, ncomp=3,
                                       local_block=block, region_box=box,
                                       **common)

    if req.quantity == "density":
        buf = next(b for b in state.buffers
                   if b.species.name == req.species)
        dens = scratch["density"]
        lat.deposit_number_density(buf, dens)
        exchange.reduce_current_halos([dens], topo, state.transport,
                                      tag="halo.dens", refresh=False)
        box = request_cell_box(req, config)
        clip = clip_to_rank(box, topo)
        block = None
        if clip is not None:
            lo, hi = clip
            g = topo.ghost_width
            sl = tuple(slice(lo[a] - topo.starts[a] + g,
                             hi[a] - topo.starts[a] + g) for a in range(3))
            block = (lo, hi, dens[sl][None, :, :, :].copy())
        return output.write_collective(kind=KIND_GRID, ncomp=1,
                                       local_block=block, region_box=box,
                                       **common)

    # particle phase space
    buf = next(b for b in state.buffers if b.species.name == req.species)
    records = buf.records()
    box = request_cell_box(req, config)
    d = config.cell_sizes
    keep = np.ones(len(records), dtype=bool)
    for a in range(3):
        cell = np.floor(records[:, a] / d[a]).astype(np.int64)
        keep &= (cell >= box[0][a]) & (cell < box[1][a])
    return output.write_collective(kind=KIND_PARTICLES, ncomp=7,
                                   local_block=(buf.species.index,
                                                records[keep]),
                                   region_box=box, **common)


def run_simulation(config: SimulationConfig, rank_grid=None, *,
                   steps=None, transport="threads", out_dir=None,
                   io_strategy="aggregated", enable_instrument=True,
                   debug=False, backend=None, collect_state=False,
                   energy_every=1, step_hook=None, stop_event=None,
                   continuity=False, quiet=True) -> RunResult:
    """Execute a validated config end to end and gather the results.

    step_hook(state) runs on every rank after every step (collective
    calls allowed); stop_event aborts cleanly between steps.
    """
    plan = validate(config, rank_grid_override=rank_grid)
    grid = plan.rank_grid
    n_ranks = plan.n_ranks
    n_steps = config.n_steps if steps is None else int(steps)
    topos = build_topology(grid, config.grid_cells, plan.ghost_width)
    layout = YeeLayout(*config.cell_sizes)
    kern = kernels.get_backend(backend)
    kernels.warmup(kern)
    io = plan_io_topology(n_ranks, plan.io_group_size, plan.io_files)
    species_names = {str(i): s.name for i, s in enumerate(config.species)}
    echo = {"config": to_json_dict(config),
            "effective": {"rank_grid": list(grid), "dt": plan.dt,
                          "ghost_width": plan.ghost_width,
                          "io_group_size": plan.io_group_size,
                          "io_files": plan.io_files,
                          "io_strategy": io_strategy,
                          "kernels": kern.NAME,
                          "n_steps": n_steps}}
    if out_dir is None:
        out_dir = os.path.abspath("empic-out")
    transport_kind = transport

    if n_ranks > 1 and transport_kind == "loopback":
        raise ValueError("loopback transport is single-rank only")

    def worker(rank, tp):
        timer = instrument.RegionTimer() if enable_instrument \
            else instrument.NullTimer()
        tp.set_timer(timer)
        with timer.region("run", COM):
            topo = topos[rank]
            lattice = FieldLattice(topo, layout, backend=kern)
            with timer.region("init.particles", USR):
                buffers = [init_species(s, config, topo, index=i)
                           for i, s in enumerate(config.species)]
            state = mover.RankState(topo, lattice, buffers, plan.dt,
                                    transport=tp, timer=timer, debug=debug)
            if continuity:
                state.continuity_monitor = mover.ContinuityMonitor(state)
            mover.bootstrap(state)

            scratch = {"density": np.zeros(topo.local_shape())}
            energy = []
            filesets = []

            def record_energy():
                fe = tp.allreduce_sum(lattice.field_energy())
                ke = tp.allreduce_sum(
                    sum(kinetic_energy(b) for b in state.buffers))
                energy.append([state.step_index, state.time, fe, ke,
                               fe + ke])

            def emissions():
                for req in config.outputs:
                    if should_emit(req, state.step_index, state.time):
                        with timer.region("output.write", USR):
                            paths = _emit_request(state, req, config, io,
                                                  out_dir, io_strategy,
                                                  echo, species_names,
                                                  scratch)
                        if rank == 0:
                            filesets.append(paths.index_path)

            record_energy()
            emissions()
            aborted = False
            for _ in range(n_steps):
                if stop_event is not None and stop_event.is_set():
                    aborted = True
                    break
                mover.step(state)
                if step_hook is not None:
                    step_hook(state)
                if state.step_index % energy_every == 0:
                    record_energy()
                emissions()

        out = {"rank": rank, "report": timer.report(), "energy": energy,
               "filesets": filesets, "aborted": aborted,
               "continuity": (state.continuity_monitor.history
                              if state.continuity_monitor else None)}
        if collect_state:
            out["state"] = {
                "topo": topo,
                "e": [lattice.interior(a).copy() for a in lattice.e],
                "b": [lattice.interior(a).copy() for a in lattice.b],
                "j": [lattice.interior(a).copy() for a in lattice.j],
                "records": {b.species.name: b.records()
                            for b in state.buffers},
            }
        return out

    results = run_on_ranks(n_ranks, worker, transport_kind=transport_kind)
    merged = instrument.merge_reports([r["report"] for r in results])
    result = RunResult(
        config=config, rank_grid=grid, dt=plan.dt, report=merged,
        energy_history=results[0]["energy"],
        filesets=results[0]["filesets"],
        rank_states=[r["state"] for r in results] if collect_state else None,
        continuity_history=results[0]["continuity"],
        aborted=any(r["aborted"] for r in results))
    if not quiet:
        print(instrument.format_report(merged))
    return result


def gather_global_fields(rank_states, global_cells, which="e"):
    """Assemble per-rank interiors into (3, Nx, Ny, Nz) global arrays."""
    out = np.zeros((3, *global_cells))
    for st in rank_states:
        topo = st["topo"]
        sl = tuple(slice(topo.starts[a], topo.starts[a] + topo.counts[a])
                   for a in range(3))
        for c in range(3):
            out[(c, *sl)] = st[which][c]
    return out


def gather_global_records(rank_states, species_name):
    recs = [st["records"][species_name] for st in rank_states]
    return np.concatenate([r for r in recs if len(r)]) \
        if any(len(r) for r in recs) else np.empty((0, 7))


def sort_records(records):
    """Lexicographic particle ordering for multiset comparison."""
    if len(records) == 0:
        return records
    order = np.lexsort(records.T[::-1])
    return records[order]


def time_io_strategies(config: SimulationConfig, rank_grid=None,
                       repeats=3, out_dir=None) -> dict:
    """Wall seconds per emission of a full E-field write, by strategy."""
    import shutil
    import tempfile

    plan = validate(config, rank_grid_override=rank_grid)
    grid = plan.rank_grid
    topos = build_topology(grid, config.grid_cells, plan.ghost_width)
    layout = YeeLayout(*config.cell_sizes)
    kern = kernels.get_backend()
    io = plan_io_topology(plan.n_ranks, plan.io_group_size, plan.io_files)
    tmp = out_dir or tempfile.mkdtemp(prefix="empic-io-bench-")
    timings = {}

    for strategy in ("aggregated", "legacy-shared"):
        def worker(rank, tp, strategy=strategy):
            topo = topos[rank]
            lattice = FieldLattice(topo, layout, backend=kern)
            rng = np.random.default_rng(1000 + rank)
            for a in lattice.e:
                a[...] = rng.standard_normal(a.shape)
            g = topo.ghost_width
            lo = topo.starts
            hi = tuple(topo.starts[a] + topo.counts[a] for a in range(3))
            sl = tuple(slice(g, g + topo.counts[a]) for a in range(3))
            block = (lo, hi, np.stack([a[sl] for a in lattice.e]))
            tp.barrier()
            t0 = _time.perf_counter()
            for rep in range(repeats):
                output.write_collective(
                    out_dir=tmp, name=f"bench_{strategy}_{rep}",
                    kind=KIND_GRID, ncomp=3, step=rep, time=0.0,
                    local_block=block, io=io, topo=topo, transport=tp,
                    strategy=strategy, quantity="E")
            tp.barrier()
            return _time.perf_counter() - t0

        walls = run_on_ranks(plan.n_ranks, worker)
        timings[strategy] = max(walls) / repeats
    if out_dir is None:
        shutil.rmtree(tmp, ignore_errors=True)
    return timings
