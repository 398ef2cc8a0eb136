"""Macro-particle storage and initialization.

Phase space is seven doubles per particle (x, y, z, px, py, pz, w) in
either AoS or SoA order. Logical content is layout independent, and the
engine iterates particles in buffer order in both layouts, so switching
layout never changes physics.

Loading is lattice based and seeded per global cell, which makes the
initial global particle set independent of the domain decomposition.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import SimulationConfig, SpeciesSpec
from .grid import DomainTopology

FIELDS = ("x", "y", "z", "px", "py", "pz", "w")
N_FIELDS = 7


@dataclass(frozen=True)
class Species:
    name: str
    charge: float
    mass: float
    index: int = 0


class ParticleBuffer:
    """Per-rank particle storage in AoS or SoA layout."""

    def __init__(self, species: Species, layout: str = "SoA", capacity=0):
        if layout not in ("AoS", "SoA"):
            raise ValueError(f"unknown layout {layout!r}")
        self.species = species
        self.layout = layout
        self.count = 0
        capacity = max(int(capacity), 0)
        self._data = self._alloc(capacity)

    def _alloc(self, capacity):
        shape = (capacity, N_FIELDS) if self.layout == "AoS" \
            else (N_FIELDS, capacity)
        return np.zeros(shape, dtype=np.float64)

    @property
    def capacity(self):
        return self._data.shape[0] if self.layout == "AoS" \
            else self._data.shape[1]

    def field(self, name: str) -> np.ndarray:
        """View of one component over the live particles."""
        i = FIELDS.index(name)
        if self.layout == "AoS":
            return self._data[:self.count, i]
        return self._data[i, :self.count]

    def __getattr__(self, name):
        if name in FIELDS:
            return self.field(name)
        raise AttributeError(name)

    def reserve(self, n):
        if n <= self.capacity:
            return
        new_cap = max(n, 2 * self.capacity, 16)
        data = self._alloc(new_cap)
        if self.layout == "AoS":
            data[:self.count] = self._data[:self.count]
        else:
            data[:, :self.count] = self._data[:, :self.count]
        self._data = data

    def append_records(self, records: np.ndarray):
        """Append (n, 7) records preserving their order."""
        n = len(records)
        if n == 0:
            return
        self.reserve(self.count + n)
        if self.layout == "AoS":
            self._data[self.count:self.count + n] = records
        else:
            self._data[:, self.count:self.count + n] = records.T
        self.count += n

    def extract(self, mask: np.ndarray) -> np.ndarray:
        """Remove masked particles (stable compaction); return their
        records in original order."""
        if not mask.any():
            return np.empty((0, N_FIELDS))
        keep = ~mask
        if self.layout == "AoS":
            taken = self._data[:self.count][mask].copy()
            kept = self._data[:self.count][keep]
            self._data[:len(kept)] = kept
        else:
            taken = self._data[:, :self.count][:, mask].T.copy()
            kept = self._data[:, :self.count][:, keep]
            self._data[:, :kept.shape[1]] = kept
        self.count = int(keep.sum())
        return taken

    def records(self) -> np.ndarray:
        """(count, 7) AoS copy, the on-wire and on-disk record order."""
        if self.layout == "AoS":
            return self._data[:self.count].copy()
        return self._data[:, :self.count].T.copy()

    def convert_layout(self, target: str) -> "ParticleBuffer":
        """Same logical content in the target layout (bitwise round trip)."""
        out = ParticleBuffer(self.species, target, capacity=self.count)
        out.append_records(self.records())
        return out


def kinetic_energy(buf: ParticleBuffer) -> float:
    """Sum of w*m*(gamma - 1) over the buffer."""
    if buf.count == 0:
        return 0.0
    m = buf.species.mass
    p2 = buf.px * buf.px + buf.py * buf.py + buf.pz * buf.pz
    gamma = np.sqrt(1.0 + p2 / (m * m))
    return float(np.sum(buf.w * (m * (gamma - 1.0))))


def momentum(buf: ParticleBuffer) -> np.ndarray:
    if buf.count == 0:
        return np.zeros(3)
    return np.array([float(np.sum(buf.w * buf.px)),
                     float(np.sum(buf.w * buf.py)),
                     float(np.sum(buf.w * buf.pz))])


def total_charge(buf: ParticleBuffer) -> float:
    return buf.species.charge * float(np.sum(buf.w))


# --- deterministic counter-based randomness -------------------------------

_SM_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SM_M1 = np.uint64(0xBF58476D1CE4E5B9)
_SM_M2 = np.uint64(0x94D049BB133111EB)


def splitmix64(counter: np.ndarray) -> np.ndarray:
    """Stateless 64-bit mix; same counter -> same value on every rank."""
    z = counter.astype(np.uint64) + _SM_GAMMA
    z = (z ^ (z >> np.uint64(30))) * _SM_M1
    z = (z ^ (z >> np.uint64(27))) * _SM_M2
    return z ^ (z >> np.uint64(31))


def unit_uniform(counter: np.ndarray) -> np.ndarray:
    """Uniform floats in [0, 1) from a counter array."""
    return (splitmix64(counter) >> np.uint64(11)) * 2.0 ** -53


def unit_gauss(counter: np.ndarray) -> np.ndarray:
    """Standard normals via Box-Muller on two derived uniform streams."""
    two = np.uint64(2)
    u1 = unit_uniform(counter * two)
    u2 = unit_uniform(counter * two + np.uint64(1))
    return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)


def _sublattice(n_sites: int) -> tuple[int, int, int]:
    """Near-cubic (ax, ay, az) with ax*ay*az == n_sites."""
    best = None
    for ax in range(1, n_sites + 1):
        if n_sites % ax:
            continue
        rest = n_sites // ax
        for ay in range(1, rest + 1):
            if rest % ay:
                continue
            az = rest // ay
            score = max(ax, ay, az) / min(ax, ay, az)
            if best is None or score < best[0]:
                best = (score, (ax, ay, az))
    return best[1]


def _owned_cells(topo: DomainTopology):
    """Global cell index arrays of the owned box, z-fastest order."""
    rx = np.arange(topo.starts[0], topo.starts[0] + topo.counts[0])
    ry = np.arange(topo.starts[1], topo.starts[1] + topo.counts[1])
    rz = np.arange(topo.starts[2], topo.starts[2] + topo.counts[2])
    ix, iy, iz = np.meshgrid(rx, ry, rz, indexing="ij")
    return ix.ravel(), iy.ravel(), iz.ravel()


def init_species(spec: SpeciesSpec, config: SimulationConfig,
                 topo: DomainTopology, index: int = 0) -> ParticleBuffer:
    if spec.init.kind == "two_stream":
        return init_two_stream(spec, config, topo, index)
    return init_uniform(spec, config, topo, index)


def init_two_stream(spec: SpeciesSpec, config: SimulationConfig,
                    topo: DomainTopology, index: int = 0) -> ParticleBuffer:
    """Counter-streaming beams on a regular per-cell sub-lattice.

    particles_per_cell/2 sites per cell, one (+p0, -p0) pair at each
    site, so the two beams cancel pointwise at t=0 and the quiescent
    p0=0 case carries exactly zero current.
    """
    if spec.particles_per_cell % 2:
        raise ValueError(f"species '{spec.name}': two_stream needs an even "
                         f"particles_per_cell")
    return _lattice_load(spec, config, topo, index,
                         n_sites=spec.particles_per_cell // 2, pair_beams=True)


def init_uniform(spec: SpeciesSpec, config: SimulationConfig,
                 topo: DomainTopology, index: int = 0) -> ParticleBuffer:
    return _lattice_load(spec, config, topo, index,
                         n_sites=spec.particles_per_cell, pair_beams=False)


def _lattice_load(spec, config, topo, index, n_sites, pair_beams):
    species = Species(spec.name, spec.charge, spec.mass, index)
    d = config.cell_sizes
    per_cell = n_sites * (2 if pair_beams else 1)
    weight = spec.init.density * d[0] * d[1] * d[2] / per_cell

    ax, ay, az = _sublattice(n_sites)
    sxs, sys, szs = np.meshgrid(
        (np.arange(ax) + 0.5) / ax,
        (np.arange(ay) + 0.5) / ay,
        (np.arange(az) + 0.5) / az, indexing="ij")
    offs = np.stack([sxs.ravel(), sys.ravel(), szs.ravel()], axis=1)

    ix, iy, iz = _owned_cells(topo)
    n_cells = len(ix)
    reps = per_cell

    # particle order: cell (z-fastest), then site, then beam
    cix = np.repeat(ix, reps)
    ciy = np.repeat(iy, reps)
    ciz = np.repeat(iz, reps)
    site = np.tile(np.repeat(np.arange(n_sites), 2 if pair_beams else 1),
                   n_cells)
    x = (cix + offs[site, 0]) * d[0]
    y = (ciy + offs[site, 1]) * d[1]
    z = (ciz + offs[site, 2]) * d[2]

    n = n_cells * reps
    px = np.zeros(n)
    py = np.zeros(n)
    pz = np.zeros(n)
    if pair_beams:
        beam = np.tile(np.arange(2), n_cells * n_sites)
        px += spec.init.drift_momentum * (1.0 - 2.0 * beam)
    if spec.init.kind == "uniform" and spec.init.thermal_momentum > 0.0:
        cell_lin = ((cix * config.grid_cells[1] + ciy)
                    * config.grid_cells[2] + ciz).astype(np.uint64)
        sub = np.arange(n, dtype=np.uint64) % np.uint64(reps)
        base = (cell_lin * np.uint64(reps) + sub) * np.uint64(4) \
            + np.uint64(config.rng_seed * 0x10001 + index)
        pth = spec.init.thermal_momentum * spec.mass
        px += pth * unit_gauss(base)
        py += pth * unit_gauss(base + np.uint64(1))
        pz += pth * unit_gauss(base + np.uint64(2))

    pert = spec.init.perturbation
    if pert.kind == "sine" and pert.amplitude != 0.0:
        k = 2.0 * math.pi * pert.mode / config.box_size[0]
        px += pert.amplitude * spec.mass * np.sin(k * x)
    elif pert.kind == "random" and pert.amplitude != 0.0:
        cell_lin = ((cix * config.grid_cells[1] + ciy)
                    * config.grid_cells[2] + ciz).astype(np.uint64)
        sub = np.arange(n, dtype=np.uint64) % np.uint64(reps)
        ctr = (cell_lin * np.uint64(reps) + sub) \
            + np.uint64(config.rng_seed * 0x9E3779B9 + 7919 * index)
        px += pert.amplitude * spec.mass * (2.0 * unit_uniform(ctr) - 1.0)

    buf = ParticleBuffer(species, config.layout, capacity=n)
    recs = np.empty((n, N_FIELDS))
    recs[:, 0] = x
    recs[:, 1] = y
    recs[:, 2] = z
    recs[:, 3] = px
    recs[:, 4] = py
    recs[:, 5] = pz
    recs[:, 6] = weight
    buf.append_records(recs)
    return buf
