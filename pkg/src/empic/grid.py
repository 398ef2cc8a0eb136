"""Yee staggering, Cartesian domain decomposition and index arithmetic.

Global cells are indexed 0..N-1 per axis with periodic wrap everywhere.
A rank owns a contiguous block of cells per axis; ghost layers replicate
neighbor data for stencils, gathers and near-face deposition.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

AXES = ("x", "y", "z")


class BoundaryKind(enum.Enum):
    """Reserved for future absorbing boundaries; only PERIODIC exists."""

    PERIODIC = "periodic"

# Half-cell staggering of each field component on the Yee cell.
# rho sits on the nodes.
STAGGER = {
    "Ex": (0.5, 0.0, 0.0),
    "Ey": (0.0, 0.5, 0.0),
    "Ez": (0.0, 0.0, 0.5),
    "Bx": (0.0, 0.5, 0.5),
    "By": (0.5, 0.0, 0.5),
    "Bz": (0.5, 0.5, 0.0),
    "Jx": (0.5, 0.0, 0.0),
    "Jy": (0.0, 0.5, 0.0),
    "Jz": (0.0, 0.0, 0.5),
    "rho": (0.0, 0.0, 0.0),
}

# Linear (CIC) shape plus charge-conserving deposition spill one extra
# layer past the high face, so two ghost layers are carried per side.
GHOST_WIDTH = 2


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class YeeLayout:
    """Cell sizes plus the staggering table of the Yee lattice."""

    dx: float
    dy: float
    dz: float

    @property
    def cell_sizes(self) -> tuple[float, float, float]:
        return (self.dx, self.dy, self.dz)

    @property
    def cell_volume(self) -> float:
        return self.dx * self.dy * self.dz

    def offsets(self, component: str) -> tuple[float, float, float]:
        return STAGGER[component]

    def sample_position(self, component, index_triple):
        """Physical position of one staggered sample, from global indices."""
        off = STAGGER[component]
        d = self.cell_sizes
        return tuple((index_triple[a] + off[a]) * d[a] for a in range(3))


def split_counts(n_cells: int, n_ranks: int) -> list[int]:
    """Block sizes of a 1D decomposition; remainder goes to low ranks."""
    if n_ranks > n_cells:
        raise TopologyError(
            f"more ranks than cells on an axis ({n_ranks} > {n_cells})")
    base, rem = divmod(n_cells, n_ranks)
    return [base + (1 if r < rem else 0) for r in range(n_ranks)]


def rank_from_coords(coords, rank_grid) -> int:
    px, py, pz = rank_grid
    cx, cy, cz = (coords[0] % px, coords[1] % py, coords[2] % pz)
    return (cx * py + cy) * pz + cz


def coords_from_rank(rank: int, rank_grid) -> tuple[int, int, int]:
    px, py, pz = rank_grid
    cz = rank % pz
    cy = (rank // pz) % py
    cx = rank // (py * pz)
    return (cx, cy, cz)


@dataclass(frozen=True)
class DomainTopology:
    """One rank's slice of the periodic Cartesian decomposition."""

    rank_grid: tuple[int, int, int]
    global_cells: tuple[int, int, int]
    my_rank: int
    my_coords: tuple[int, int, int]
    starts: tuple[int, int, int]      # first owned global cell per axis
    counts: tuple[int, int, int]      # owned cells per axis
    neighbors: dict                   # (axis, -1|+1) -> rank (periodic)
    ghost_width: int = GHOST_WIDTH
    boundaries: tuple = field(
        default=(BoundaryKind.PERIODIC,) * 3)

    @property
    def n_ranks(self) -> int:
        px, py, pz = self.rank_grid
        return px * py * pz

    def neighbor(self, axis: int, direction: int) -> int:
        return self.neighbors[(axis, direction)]

    def owns_cell(self, cell) -> bool:
        return all(self.starts[a] <= cell[a] < self.starts[a] + self.counts[a]
                   for a in range(3))

    def local_shape(self) -> tuple[int, int, int]:
        g = self.ghost_width
        return tuple(c + 2 * g for c in self.counts)

    def interior(self):
        """Slices selecting the owned cells of a ghosted local array."""
        g = self.ghost_width
        return tuple(slice(g, g + c) for c in self.counts)


def build_topology(rank_grid, global_cells, ghost_width=GHOST_WIDTH):
    """All per-rank topologies of a block decomposition.

    Remainder cells go to the lowest-coordinate ranks, at most one extra
    cell per rank per axis. Neighbor relations wrap periodically; with a
    single rank on an axis the rank is its own neighbor.
    """
    rank_grid = tuple(int(p) for p in rank_grid)
    global_cells = tuple(int(n) for n in global_cells)
    per_axis = [split_counts(global_cells[a], rank_grid[a]) for a in range(3)]
    offsets = [np.concatenate(([0], np.cumsum(c))) for c in per_axis]

    topos = []
    n_ranks = rank_grid[0] * rank_grid[1] * rank_grid[2]
    for rank in range(n_ranks):
        coords = coords_from_rank(rank, rank_grid)
        starts = tuple(int(offsets[a][coords[a]]) for a in range(3))
        counts = tuple(per_axis[a][coords[a]] for a in range(3))
        if any(counts[a] < 2 * ghost_width for a in range(3)):
            raise TopologyError(
                f"rank {rank} owns {counts} cells; every axis needs at least "
                f"{2 * ghost_width} cells for ghost width {ghost_width}")
        neighbors = {}
        for axis in range(3):
            for direction in (-1, +1):
                nc = list(coords)
                nc[axis] += direction
                neighbors[(axis, direction)] = rank_from_coords(nc, rank_grid)
        topos.append(DomainTopology(
            rank_grid=rank_grid, global_cells=global_cells, my_rank=rank,
            my_coords=coords, starts=starts, counts=counts,
            neighbors=neighbors, ghost_width=ghost_width))
    return topos


def owner_of_cell(topos, cell):
    """(owner rank, local cell triple) for a global cell index."""
    t0 = topos[0]
    for a in range(3):
        if not 0 <= cell[a] < t0.global_cells[a]:
            raise IndexError(f"global cell {cell} outside grid "
                             f"{t0.global_cells}")
    grid = t0.rank_grid
    coords = []
    locals_ = []
    for a in range(3):
        counts = split_counts(t0.global_cells[a], grid[a])
        edges = np.concatenate(([0], np.cumsum(counts)))
        c = int(np.searchsorted(edges, cell[a], side="right") - 1)
        coords.append(c)
        locals_.append(int(cell[a] - edges[c]))
    rank = rank_from_coords(coords, grid)
    return rank, tuple(locals_)


def global_to_local(topology: DomainTopology, cell):
    """Local cell triple on this rank; raises if not owned."""
    if not topology.owns_cell(cell):
        raise IndexError(f"cell {cell} not owned by rank {topology.my_rank}")
    return tuple(cell[a] - topology.starts[a] for a in range(3))


def local_to_global(topology: DomainTopology, local):
    for a in range(3):
        if not 0 <= local[a] < topology.counts[a]:
            raise IndexError(f"local cell {local} outside rank extent "
                             f"{topology.counts}")
    return tuple(local[a] + topology.starts[a] for a in range(3))


def choose_rank_grid(n_ranks, global_cells, ghost_width=GHOST_WIDTH):
    """Near-cubic factorization of n_ranks honoring the min-cells rule.

    Prefers putting ranks on the axes with the most cells; raises if no
    factorization keeps every subdomain at 2*ghost_width cells per axis.
    """
    best = None
    for px in range(1, n_ranks + 1):
        if n_ranks % px:
            continue
        rest = n_ranks // px
        for py in range(1, rest + 1):
            if rest % py:
                continue
            pz = rest // py
            grid = (px, py, pz)
            if any(global_cells[a] // grid[a] < 2 * ghost_width
                   for a in range(3)):
                continue
            # prefer balanced subdomains (minimize surface/volume)
            sub = [global_cells[a] / grid[a] for a in range(3)]
            score = (max(sub) / min(sub), max(grid))
            if best is None or score < best[0]:
                best = (score, grid)
    if best is None:
        raise TopologyError(
            f"{n_ranks} ranks cannot decompose grid {tuple(global_cells)} "
            f"with ghost width {ghost_width}")
    return best[1]
