"""Staggered field storage and the FDTD leapfrog updates.

One FieldLattice per rank: E, B, J at their Yee points plus a nodal
diagnostic charge density, all as ghosted 3D arrays (z fastest). B is
stored at integer time at step boundaries; the two half-step curl
updates around the E update keep it exactly time centered for the
particle push and for energy diagnostics.
"""
from __future__ import annotations

import numpy as np

from .grid import DomainTopology, YeeLayout
from . import kernels


class FieldLattice:
    def __init__(self, topo: DomainTopology, layout: YeeLayout,
                 backend=None):
        self.topo = topo
        self.layout = layout
        self.kern = backend if backend is not None else kernels.get_backend()
        shape = topo.local_shape()
        self.e = [np.zeros(shape) for _ in range(3)]
        self.b = [np.zeros(shape) for _ in range(3)]
        self.j = [np.zeros(shape) for _ in range(3)]
        self.rho = np.zeros(shape)

    @property
    def ghost(self) -> int:
        return self.topo.ghost_width

    def interior(self, arr: np.ndarray) -> np.ndarray:
        return arr[self.topo.interior()]

    def clear_currents(self):
        for a in self.j:
            a.fill(0.0)

    def advance_b_half(self, dt: float):
        """B -= (dt/2) curl(E); needs current E ghosts."""
        d = self.layout.cell_sizes
        self.kern.advance_b_half(
            self.b[0], self.b[1], self.b[2],
            self.e[0], self.e[1], self.e[2], self.ghost,
            0.5 * dt / d[0], 0.5 * dt / d[1], 0.5 * dt / d[2])

    def advance_e(self, dt: float):
        """E += dt (curl(B) - J); needs current B ghosts and reduced J."""
        d = self.layout.cell_sizes
        self.kern.advance_e(
            self.e[0], self.e[1], self.e[2],
            self.b[0], self.b[1], self.b[2],
            self.j[0], self.j[1], self.j[2], self.ghost,
            dt, dt / d[0], dt / d[1], dt / d[2])

    def field_energy(self) -> float:
        """(1/2) sum (E^2 + B^2) * cell volume over interior points.

        B is stored time centered (the average of the two half-step
        values), so no extra averaging is needed here.
        """
        v = self.layout.cell_volume
        total = 0.0
        for arr in (*self.e, *self.b):
            inner = self.interior(arr)
            total += float(np.sum(inner * inner))
        return 0.5 * v * total

    def _nodal_divergence(self, arrays) -> np.ndarray:
        """Backward-difference divergence of edge-staggered components,
        sampled at interior nodes; needs current ghosts."""
        d = self.layout.cell_sizes
        sl = self.topo.interior()
        lo = tuple(slice(s.start - 1, s.stop - 1) for s in sl)
        out = (arrays[0][sl] - arrays[0][lo[0], sl[1], sl[2]]) / d[0]
        out += (arrays[1][sl] - arrays[1][sl[0], lo[1], sl[2]]) / d[1]
        out += (arrays[2][sl] - arrays[2][sl[0], sl[1], lo[2]]) / d[2]
        return out

    def divergence_e(self) -> np.ndarray:
        """Discrete div(E) at the interior nodes; needs E ghosts."""
        return self._nodal_divergence(self.e)

    def divergence_j(self) -> np.ndarray:
        """Discrete div(J) at the interior nodes; needs reduced J ghosts."""
        return self._nodal_divergence(self.j)

    def gauss_residual(self) -> np.ndarray:
        """div(E) - rho at interior nodes; rho must be freshly deposited.

        With charge-conserving deposition this field is constant in time
        (it never needs to be zero: a uniform offset acts as a static
        neutralizing background).
        """
        return self.divergence_e() - self.interior(self.rho)

    def div_b(self) -> np.ndarray:
        """Discrete div(B), sampled at interior cell centers.

        The Yee divergence of B lives on the dual (cell-center) grid;
        it is preserved exactly by the curl updates.
        """
        d = self.layout.cell_sizes
        sl = self.topo.interior()
        hi = tuple(slice(s.start + 1, s.stop + 1) for s in sl)
        out = (self.b[0][hi[0], sl[1], sl[2]] - self.b[0][sl]) / d[0]
        out += (self.b[1][sl[0], hi[1], sl[2]] - self.b[1][sl]) / d[1]
        out += (self.b[2][sl[0], sl[1], hi[2]] - self.b[2][sl]) / d[2]
        return out

    def deposit_rho(self, buffers, out=None) -> np.ndarray:
        """CIC charge density from particle buffers into a ghosted array.

        Contributions land in ghost layers too; callers running
        decomposed must halo-reduce afterwards.
        """
        if out is None:
            out = self.rho
        out.fill(0.0)
        t = self.topo
        d = self.layout.cell_sizes
        inv_v = 1.0 / self.layout.cell_volume
        for buf in buffers:
            self.kern.deposit_cic(
                buf.x, buf.y, buf.z, buf.w, buf.count, out,
                buf.species.charge * inv_v,
                1.0 / d[0], 1.0 / d[1], 1.0 / d[2],
                t.starts[0], t.starts[1], t.starts[2], t.ghost_width)
        return out

    def deposit_number_density(self, buf, out) -> np.ndarray:
        out.fill(0.0)
        t = self.topo
        d = self.layout.cell_sizes
        self.kern.deposit_cic(
            buf.x, buf.y, buf.z, buf.w, buf.count, out,
            1.0 / self.layout.cell_volume,
            1.0 / d[0], 1.0 / d[1], 1.0 / d[2],
            t.starts[0], t.starts[1], t.starts[2], t.ghost_width)
        return out

    def assert_finite(self):
        for name, arr in zip(("E", "B", "J"), (self.e, self.b, self.j)):
            for c, a in zip("xyz", arr):
                if not np.isfinite(self.interior(a)).all():
                    raise FloatingPointError(
                        f"non-finite values in {name}{c} on rank "
                        f"{self.topo.my_rank}")
