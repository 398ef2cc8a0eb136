"""The PIC inner loop: gather, Boris push, move, deposit, full step.

Cycle layout per step (state entering with E, B and positions at step
n, momenta at n-1/2):

    1. gather (E^n, B^n) at x^n, Boris push to p^(n+1/2), move to
       x^(n+1), Esirkepov-deposit J^(n+1/2) from the old/new positions
    2. migrate particles, halo-reduce currents
    3. B half step, E full step, B half step (ghosts exchanged between
       the sub-steps)

B is stored at integer times, so the push always sees the exactly
time-centered field (equal to the average of the two adjacent half-step
values) and ends each step centered again.
"""
from __future__ import annotations

import numpy as np

from . import exchange
from .fields import FieldLattice
from .instrument import COM, NullTimer, USR


class CflContractError(RuntimeError):
    """A particle moved more than one cell in a single step."""


def boris_push_single(p, e_field, b_field, q, m, dt):
    """Momentum update for one particle; handy for orbit tests."""
    p = np.asarray(p, dtype=float)
    e_field = np.asarray(e_field, dtype=float)
    b_field = np.asarray(b_field, dtype=float)
    ek = 0.5 * q * dt
    pm = p + ek * e_field
    gamma = np.sqrt(1.0 + np.dot(pm, pm) / (m * m))
    t = (ek / (m * gamma)) * b_field
    s = 2.0 * t / (1.0 + np.dot(t, t))
    pp = pm + np.cross(pm + np.cross(pm, t), s)
    return pp + ek * e_field


def advance_position_single(x, p, m, dt):
    p = np.asarray(p, dtype=float)
    gamma = np.sqrt(1.0 + np.dot(p, p) / (m * m))
    return np.asarray(x, dtype=float) + p * (dt / (gamma * m))


def gather_fields(lattice: FieldLattice, position):
    """(E, B) interpolated at one position inside the owned box."""
    x, y, z = (np.array([float(v)]) for v in position)
    out = [np.zeros(1) for _ in range(6)]
    t = lattice.topo
    d = lattice.layout.cell_sizes
    lattice.kern.gather_eb(x, y, z, 1, *lattice.e, *lattice.b,
                           1.0 / d[0], 1.0 / d[1], 1.0 / d[2],
                           t.starts[0], t.starts[1], t.starts[2],
                           t.ghost_width, *out)
    return (np.array([out[0][0], out[1][0], out[2][0]]),
            np.array([out[3][0], out[4][0], out[5][0]]))


class _Scratch:
    """Per-species work arrays for the push phase."""

    def __init__(self):
        self.size = -1

    def ensure(self, n):
        if n > self.size:
            size = max(n, 16)
            self.ep = [np.empty(size) for _ in range(3)]
            self.bp = [np.empty(size) for _ in range(3)]
            self.old = [np.empty(size) for _ in range(3)]
            self.size = size


class RankState:
    """Everything one rank owns: lattice, particles, transport, clock."""

    def __init__(self, topo, lattice: FieldLattice, buffers, dt,
                 transport=None, timer=None, debug=False):
        self.topo = topo
        self.lattice = lattice
        self.buffers = list(buffers)
        self.dt = float(dt)
        self.time = 0.0
        self.step_index = 0
        self.transport = transport if transport is not None \
            else exchange.LoopbackTransport()
        self.timer = timer if timer is not None else NullTimer()
        self.debug = debug
        self.continuity_monitor = None
        self._scratch = [_Scratch() for _ in self.buffers]
        self._initial_count = None

    @property
    def kern(self):
        return self.lattice.kern

    def cell_sizes(self):
        return self.lattice.layout.cell_sizes

    def box_size(self):
        d = self.cell_sizes()
        return tuple(self.topo.global_cells[a] * d[a] for a in range(3))


def push_and_deposit(state: RankState) -> None:
    """Phase 1 of a step: gather, push, move, deposit, per species."""
    lat = state.lattice
    t = state.topo
    d = state.cell_sizes()
    inv_d = (1.0 / d[0], 1.0 / d[1], 1.0 / d[2])
    dt = state.dt
    coef = (inv_d[1] * inv_d[2] / dt,
            inv_d[0] * inv_d[2] / dt,
            inv_d[0] * inv_d[1] / dt)

    with state.timer.region("mover.clear_currents", USR):
        lat.clear_currents()

    for buf, scratch in zip(state.buffers, state._scratch):
        n = buf.count
        scratch.ensure(n)
        sp = buf.species
        with state.timer.region("mover.gather", USR):
            state.kern.gather_eb(
                buf.x, buf.y, buf.z, n, *lat.e, *lat.b,
                *inv_d, t.starts[0], t.starts[1], t.starts[2],
                t.ghost_width, *scratch.ep, *scratch.bp)
        with state.timer.region("mover.push", USR):
            state.kern.boris_push(
                buf.px, buf.py, buf.pz, n, *scratch.ep, *scratch.bp,
                sp.charge, sp.mass, dt)
        with state.timer.region("mover.move", USR):
            scratch.old[0][:n] = buf.x
            scratch.old[1][:n] = buf.y
            scratch.old[2][:n] = buf.z
            max_step = state.kern.move(
                buf.x, buf.y, buf.z, buf.px, buf.py, buf.pz, n,
                sp.mass, dt, *inv_d)
            if max_step > 1.0:
                raise CflContractError(
                    f"species '{sp.name}' moved {max_step:.3f} cells in one "
                    f"step on rank {t.my_rank}")
        with state.timer.region("mover.deposit", USR):
            state.kern.deposit_current(
                scratch.old[0][:n], scratch.old[1][:n], scratch.old[2][:n],
                buf.x, buf.y, buf.z, buf.w, n, *lat.j, sp.charge,
                *inv_d, t.starts[0], t.starts[1], t.starts[2],
                t.ghost_width, *coef)


def communicate(state: RankState) -> None:
    """Phase 2: migrate particles and reduce current halos."""
    t = state.topo
    d = state.cell_sizes()
    box = state.box_size()
    with state.timer.region("exchange.migrate", USR):
        for i, buf in enumerate(state.buffers):
            exchange.migrate_particles(buf, t, state.transport, d, box,
                                       tag=f"migrate.s{i}")
    with state.timer.region("exchange.reduce_currents", USR):
        exchange.reduce_current_halos(state.lattice.j, t, state.transport)


def advance_fields(state: RankState) -> None:
    """Phase 3: the B/E/B leapfrog with ghost refreshes in between."""
    lat = state.lattice
    t = state.topo
    with state.timer.region("fields.advance_b", USR):
        lat.advance_b_half(state.dt)
    with state.timer.region("exchange.field_halos", USR):
        exchange.exchange_field_halos(lat.b, t, state.transport,
                                      tag="halo.b1")
    with state.timer.region("fields.advance_e", USR):
        lat.advance_e(state.dt)
    with state.timer.region("exchange.field_halos", USR):
        exchange.exchange_field_halos(lat.e, t, state.transport,
                                      tag="halo.e")
    with state.timer.region("fields.advance_b", USR):
        lat.advance_b_half(state.dt)
    with state.timer.region("exchange.field_halos", USR):
        exchange.exchange_field_halos(lat.b, t, state.transport,
                                      tag="halo.b2")


class ContinuityMonitor:
    """Per-step residual of discrete continuity, d(rho)/dt + div(J).

    Charge densities are CIC-deposited from the exact same position
    values the current deposition consumes, making the check an
    independent machine-precision oracle for the Esirkepov scatter.
    """

    def __init__(self, state: RankState):
        shape = state.topo.local_shape()
        self.rho_old = np.zeros(shape)
        self.rho_new = np.zeros(shape)
        self.history = []

    def begin_step(self, state: RankState):
        state.lattice.deposit_rho(state.buffers, out=self.rho_old)

    def after_move(self, state: RankState):
        # positions are post-move but pre-migration here, matching the
        # "new" positions seen by the deposition
        state.lattice.deposit_rho(state.buffers, out=self.rho_new)

    def finish_step(self, state: RankState):
        topo = state.topo
        exchange.reduce_current_halos([self.rho_old], topo, state.transport,
                                      tag="halo.cm0", refresh=False)
        exchange.reduce_current_halos([self.rho_new], topo, state.transport,
                                      tag="halo.cm1", refresh=False)
        sl = topo.interior()
        resid = (self.rho_new[sl] - self.rho_old[sl]) / state.dt \
            + state.lattice.divergence_j()
        local = float(np.max(np.abs(resid))) if resid.size else 0.0
        self.history.append(state.transport.allreduce_max(local))


def step(state: RankState) -> RankState:
    """One full leapfrog cycle; advances time by dt."""
    mon = state.continuity_monitor
    with state.timer.region("mover.step", COM):
        if mon is not None:
            with state.timer.region("diag.continuity", USR):
                mon.begin_step(state)
        push_and_deposit(state)
        if mon is not None:
            with state.timer.region("diag.continuity", USR):
                mon.after_move(state)
        communicate(state)
        if mon is not None:
            with state.timer.region("diag.continuity", USR):
                mon.finish_step(state)
        advance_fields(state)
        if state.debug:
            _debug_checks(state)
    state.time += state.dt
    state.step_index += 1
    return state


def bootstrap(state: RankState) -> None:
    """Rewind momenta to t = -dt/2 with a backward half Boris push,
    and make all ghosts current."""
    exchange.exchange_field_halos(state.lattice.e, state.topo,
                                  state.transport, tag="halo.e")
    exchange.exchange_field_halos(state.lattice.b, state.topo,
                                  state.transport, tag="halo.b1")
    lat = state.lattice
    t = state.topo
    d = state.cell_sizes()
    inv_d = (1.0 / d[0], 1.0 / d[1], 1.0 / d[2])
    for buf, scratch in zip(state.buffers, state._scratch):
        n = buf.count
        scratch.ensure(n)
        state.kern.gather_eb(buf.x, buf.y, buf.z, n, *lat.e, *lat.b,
                             *inv_d, t.starts[0], t.starts[1], t.starts[2],
                             t.ghost_width, *scratch.ep, *scratch.bp)
        state.kern.boris_push(buf.px, buf.py, buf.pz, n,
                              *scratch.ep, *scratch.bp,
                              buf.species.charge, buf.species.mass,
                              -0.5 * state.dt)
    if state.debug:
        state._initial_count = state.transport.allreduce_sum(
            sum(b.count for b in state.buffers))


def _debug_checks(state: RankState) -> None:
    total = state.transport.allreduce_sum(
        sum(b.count for b in state.buffers))
    if state._initial_count is None:
        state._initial_count = total
    elif total != state._initial_count:
        raise RuntimeError(
            f"global particle count changed: {state._initial_count} -> "
            f"{total}")
    t = state.topo
    d = state.cell_sizes()
    for buf in state.buffers:
        for axis, coord in enumerate((buf.x, buf.y, buf.z)):
            cell = np.floor(coord / d[axis]).astype(np.int64)
            lo = t.starts[axis]
            if cell.size and ((cell < lo).any()
                              or (cell >= lo + t.counts[axis]).any()):
                raise RuntimeError(
                    f"ownership violated on rank {t.my_rank}, axis {axis}")
        if buf.count and (buf.w <= 0).any():
            raise RuntimeError(
                f"non-positive weight in species '{buf.species.name}' "
                f"on rank {t.my_rank}")
        if buf.count and not (np.isfinite(buf.px).all()
                              and np.isfinite(buf.py).all()
                              and np.isfinite(buf.pz).all()):
            raise RuntimeError(
                f"non-finite momentum in species '{buf.species.name}' "
                f"on rank {t.my_rank}")
    state.lattice.assert_finite()
