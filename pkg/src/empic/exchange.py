"""Message passing between ranks: transports, halos, migration.

Ranks are in-process workers connected by reliable, ordered per-pair
channels. Bulk simulation data (field halos, current reduction,
particle migration; tags ``halo.*`` / ``migrate.*``) flows only between
topology face neighbors; output aggregation (tags ``io.*``) funnels
group members to their master, which is the one sanctioned non-neighbor
pattern. Small control data uses the collective channel.
"""
from __future__ import annotations

import queue
import threading
import time

import numpy as np

from .grid import DomainTopology
from .instrument import NullTimer, COMM

_BULK_LOCAL_PREFIXES = ("halo.", "migrate.")
_ABORT_TAG = "__abort__"


class TransportError(RuntimeError):
    pass


class _Collective:
    """Slot-based allgather/barrier shared by all ranks of a fabric."""

    def __init__(self, n_ranks: int):
        self.barrier = threading.Barrier(n_ranks)
        self.slots = [None] * n_ranks

    def allgather(self, rank, obj):
        self.slots[rank] = obj
        self.barrier.wait()
        out = list(self.slots)
        self.barrier.wait()
        return out


class ThreadFabric:
    """Shared state connecting the per-rank ThreadTransport endpoints.

    jitter > 0 injects random sub-millisecond sleeps around channel
    operations (a crude randomized scheduler for deadlock stress tests).
    """

    def __init__(self, n_ranks: int, jitter: float = 0.0):
        self.n_ranks = n_ranks
        self.channels = {}
        for src in range(n_ranks):
            for dst in range(n_ranks):
                self.channels[(src, dst)] = queue.SimpleQueue()
        self.collective = _Collective(n_ranks)
        self.jitter = jitter
        self._jitter_state = np.random.default_rng(12345)
        self._jitter_lock = threading.Lock()
        self.aborted = False

    def abort(self):
        """Poison every channel and the barrier so blocked peers of a
        failed rank wake up instead of deadlocking."""
        self.aborted = True
        self.collective.barrier.abort()
        for q in self.channels.values():
            q.put((_ABORT_TAG, None))

    def transports(self):
        return [ThreadTransport(self, rank) for rank in range(self.n_ranks)]

    def _maybe_jitter(self):
        if self.jitter > 0.0:
            with self._jitter_lock:
                delay = float(self._jitter_state.uniform(0, self.jitter))
            time.sleep(delay)


class ThreadTransport:
    """One rank's endpoint onto a ThreadFabric."""

    def __init__(self, fabric: ThreadFabric, rank: int):
        self.fabric = fabric
        self.rank = rank
        self.size = fabric.n_ranks
        self.timer = NullTimer()

    def set_timer(self, timer):
        self.timer = timer

    def send(self, dst: int, tag: str, payload) -> None:
        with self.timer.region("transport.send", COMM):
            self.fabric._maybe_jitter()
            self.fabric.channels[(self.rank, dst)].put((tag, payload))

    def recv(self, src: int, tag: str):
        with self.timer.region("transport.recv", COMM):
            self.fabric._maybe_jitter()
            got_tag, payload = self.fabric.channels[(src, self.rank)].get()
        if got_tag == _ABORT_TAG:
            raise TransportError(
                f"rank {self.rank} woke from recv: a peer rank failed")
        if got_tag != tag:
            raise TransportError(
                f"rank {self.rank} expected tag {tag!r} from {src}, "
                f"got {got_tag!r}")
        return payload

    def allgather(self, obj) -> list:
        with self.timer.region("transport.allgather", COMM):
            return self.fabric.collective.allgather(self.rank, obj)

    def allreduce_sum(self, value):
        """Deterministic fixed-order sum, identical on every rank."""
        parts = self.allgather(value)
        total = parts[0]
        for p in parts[1:]:
            total = total + p
        return total

    def allreduce_max(self, value):
        parts = self.allgather(value)
        out = parts[0]
        for p in parts[1:]:
            out = max(out, p)
        return out

    def barrier(self) -> None:
        with self.timer.region("transport.barrier", COMM):
            self.fabric.collective.barrier.wait()


class LoopbackTransport:
    """Single-rank transport running inline; exact serial debugging."""

    def __init__(self):
        self.rank = 0
        self.size = 1
        self.timer = NullTimer()
        self._queues: dict[str, list] = {}

    def set_timer(self, timer):
        self.timer = timer

    def send(self, dst, tag, payload):
        if dst != 0:
            raise TransportError(f"loopback cannot send to rank {dst}")
        self._queues.setdefault(tag, []).append(payload)

    def recv(self, src, tag):
        if src != 0:
            raise TransportError(f"loopback cannot recv from rank {src}")
        q = self._queues.get(tag)
        if not q:
            raise TransportError(f"loopback recv on empty tag {tag!r}")
        return q.pop(0)

    def allgather(self, obj):
        return [obj]

    def allreduce_sum(self, value):
        return value

    def allreduce_max(self, value):
        return value

    def barrier(self):
        pass


class InstrumentedTransport:
    """Wrapper asserting bulk-message locality and counting traffic."""

    def __init__(self, inner, neighbor_ranks):
        self.inner = inner
        self.rank = inner.rank
        self.size = inner.size
        self.neighbors = set(neighbor_ranks)
        self.messages = 0
        self.bytes_sent = 0

    def set_timer(self, timer):
        self.inner.set_timer(timer)

    @property
    def timer(self):
        return self.inner.timer

    def _payload_bytes(self, payload):
        if isinstance(payload, np.ndarray):
            return payload.nbytes
        if isinstance(payload, (list, tuple)):
            return sum(self._payload_bytes(p) for p in payload)
        return 0

    def send(self, dst, tag, payload):
        if (any(tag.startswith(p) for p in _BULK_LOCAL_PREFIXES)
                and dst != self.rank and dst not in self.neighbors):
            raise TransportError(
                f"bulk message {tag!r} from rank {self.rank} to non-neighbor "
                f"{dst}")
        self.messages += 1
        self.bytes_sent += self._payload_bytes(payload)
        self.inner.send(dst, tag, payload)

    def recv(self, src, tag):
        return self.inner.recv(src, tag)

    def allgather(self, obj):
        return self.inner.allgather(obj)

    def allreduce_sum(self, value):
        return self.inner.allreduce_sum(value)

    def allreduce_max(self, value):
        return self.inner.allreduce_max(value)

    def barrier(self):
        return self.inner.barrier()


# --- halo exchange ---------------------------------------------------------

def _axis_slices(arr_ndim, axis, sl):
    out = [slice(None)] * arr_ndim
    out[axis] = sl
    return tuple(out)


def exchange_field_halos(arrays, topo: DomainTopology, transport,
                         tag: str = "halo.f") -> None:
    """Fill ghost layers of each array from neighbor interiors.

    Axes are processed x, then y, then z; slabs span the full extent of
    the other axes (ghosts included), so edge and corner ghosts become
    correct without any diagonal messages.
    """
    g = topo.ghost_width
    for axis in range(3):
        n = topo.counts[axis]
        lo_int = _axis_slices(3, axis, slice(g, 2 * g))
        hi_int = _axis_slices(3, axis, slice(n, g + n))
        lo_gho = _axis_slices(3, axis, slice(0, g))
        hi_gho = _axis_slices(3, axis, slice(g + n, g + n + g))
        lo_nb = topo.neighbor(axis, -1)
        hi_nb = topo.neighbor(axis, +1)
        t = f"{tag}:{axis}"

        if lo_nb == topo.my_rank and hi_nb == topo.my_rank:
            for a in arrays:
                a[hi_gho] = a[lo_int]
                a[lo_gho] = a[hi_int]
            continue

        # queues hand over references, so ship real copies: a leading-axis
        # slab is already contiguous and ascontiguousarray would alias it
        transport.send(lo_nb, t + "-", [a[lo_int].copy() for a in arrays])
        transport.send(hi_nb, t + "+", [a[hi_int].copy() for a in arrays])
        from_hi = transport.recv(hi_nb, t + "-")
        from_lo = transport.recv(lo_nb, t + "+")
        for a, slab in zip(arrays, from_hi):
            a[hi_gho] = slab
        for a, slab in zip(arrays, from_lo):
            a[lo_gho] = slab


def reduce_current_halos(arrays, topo: DomainTopology, transport,
                         tag: str = "halo.j", refresh: bool = True) -> None:
    """Fold deposition spill from ghost layers into the owning interiors.

    Ghost slabs are consumed (zeroed) as they are shipped, axis by axis,
    so corner spill reaches its owner through successive passes. Adds
    happen in the fixed order -x, +x, -y, +y, -z, +z. Ghosts are
    refreshed afterwards unless refresh=False.
    """
    g = topo.ghost_width
    for axis in range(3):
        n = topo.counts[axis]
        lo_int = _axis_slices(3, axis, slice(g, 2 * g))
        hi_int = _axis_slices(3, axis, slice(n, g + n))
        lo_gho = _axis_slices(3, axis, slice(0, g))
        hi_gho = _axis_slices(3, axis, slice(g + n, g + n + g))
        lo_nb = topo.neighbor(axis, -1)
        hi_nb = topo.neighbor(axis, +1)
        t = f"{tag}:{axis}"

        if lo_nb == topo.my_rank and hi_nb == topo.my_rank:
            for a in arrays:
                a[hi_int] += a[lo_gho]
                a[lo_int] += a[hi_gho]
                a[lo_gho] = 0.0
                a[hi_gho] = 0.0
            continue

        transport.send(lo_nb, t + "-", [a[lo_gho].copy() for a in arrays])
        transport.send(hi_nb, t + "+", [a[hi_gho].copy() for a in arrays])
        for a in arrays:
            a[lo_gho] = 0.0
            a[hi_gho] = 0.0
        # my high interior receives what the +x neighbor spilled low,
        # my low interior what the -x neighbor spilled high
        from_hi = transport.recv(hi_nb, t + "-")
        from_lo = transport.recv(lo_nb, t + "+")
        for a, slab in zip(arrays, from_lo):
            a[lo_int] += slab
        for a, slab in zip(arrays, from_hi):
            a[hi_int] += slab

    if refresh:
        exchange_field_halos(arrays, topo, transport, tag=tag + ".refresh")


# --- particle migration ----------------------------------------------------

def migrate_particles(buf, topo: DomainTopology, transport,
                      cell_sizes, box_size, tag: str = "migrate") -> None:
    """Ship boundary-crossing particles to face neighbors, axis by axis.

    Positions are wrapped at the global box before sending. A particle
    more than one cell outside the owned box means the CFL contract was
    broken upstream; that is fatal.
    """
    for axis in range(3):
        start = topo.starts[axis]
        count = topo.counts[axis]
        n_global = topo.global_cells[axis]
        inv_d = 1.0 / cell_sizes[axis]
        coord = (buf.x, buf.y, buf.z)[axis]

        cell = np.floor(coord * inv_d).astype(np.int64)
        too_far = (cell < start - 1) | (cell > start + count)
        if too_far.any():
            bad = int(np.argmax(too_far))
            raise RuntimeError(
                f"CFL contract broken: particle at axis-{axis} cell "
                f"{cell[bad]} escaped rank {topo.my_rank} box "
                f"[{start}, {start + count})")
        going_lo = cell < start
        going_hi = cell >= start + count

        lo_nb = topo.neighbor(axis, -1)
        hi_nb = topo.neighbor(axis, +1)
        t = f"{tag}:{axis}"

        records = buf.extract(going_lo | going_hi)
        if len(records):
            rec_cell = np.floor(records[:, axis] * inv_d).astype(np.int64)
            lo_mask = rec_cell < start
            # periodic wrap before send
            records[rec_cell < 0, axis] += box_size[axis]
            records[rec_cell >= n_global, axis] -= box_size[axis]
            lo_pack = records[lo_mask]
            hi_pack = records[~lo_mask]
        else:
            lo_pack = records
            hi_pack = records

        transport.send(lo_nb, t + "-", lo_pack)
        transport.send(hi_nb, t + "+", hi_pack)
        # per-pair channels are FIFO and peers send "-" before "+", so
        # receive in that order; arrivals append low-source first
        from_hi = transport.recv(hi_nb, t + "-")
        from_lo = transport.recv(lo_nb, t + "+")
        buf.append_records(from_lo)
        buf.append_records(from_hi)
