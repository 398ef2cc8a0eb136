import math

import numpy as np
import pytest

from empic import exchange, kernels
from empic.fields import FieldLattice
from empic.grid import YeeLayout, build_topology
from empic.mover import RankState, step


def make_lattice(cells, box, backend=None):
    (topo,) = build_topology((1, 1, 1), cells)
    layout = YeeLayout(*(box[a] / cells[a] for a in range(3)))
    lat = FieldLattice(topo, layout, backend=backend)
    return topo, lat


def wrap_ghosts(lat, topo, arrays):
    exchange.exchange_field_halos(arrays, topo, exchange.LoopbackTransport())


def test_zero_e_leaves_b_unchanged(backend):
    topo, lat = make_lattice((8, 8, 8), (2, 2, 2), backend)
    rng = np.random.default_rng(0)
    for a in lat.b:
        a[...] = rng.standard_normal(a.shape)
    before = [a.copy() for a in lat.b]
    lat.advance_b_half(0.1)
    assert all(np.array_equal(a, b) for a, b in zip(lat.b, before))


def test_uniform_e_leaves_b_unchanged(backend):
    topo, lat = make_lattice((8, 8, 8), (2, 2, 2), backend)
    for a, v in zip(lat.e, (1.0, -2.0, 0.5)):
        a[...] = v
    before = [a.copy() for a in lat.b]
    lat.advance_b_half(0.1)
    assert all(np.array_equal(a, b) for a, b in zip(lat.b, before))


def test_zero_b_and_j_leave_e_unchanged(backend):
    topo, lat = make_lattice((8, 8, 8), (2, 2, 2), backend)
    rng = np.random.default_rng(1)
    for a in lat.e:
        a[...] = rng.standard_normal(a.shape)
    before = [a.copy() for a in lat.e]
    lat.advance_e(0.1)
    assert all(np.array_equal(a, b) for a, b in zip(lat.e, before))


def test_constant_j_gives_linear_e():
    topo, lat = make_lattice((6, 6, 6), (3, 3, 3))
    j0 = (0.5, -1.25, 2.0)
    for a, v in zip(lat.j, j0):
        a[...] = v
    dt = 0.05
    for _ in range(40):
        lat.advance_e(dt)
    for a, v in zip(lat.e, j0):
        assert np.allclose(lat.interior(a), -v * dt * 40, rtol=1e-13)


def slope(errors, factors=2.0):
    e = np.asarray(errors, dtype=float)
    return np.log(e[:-1] / e[1:]) / np.log(factors)


def test_curl_b_update_truncation_order():
    # single half B advance against dBz/dt = -k cos(kx)
    errs = []
    for n in (32, 64, 128, 256):
        cells = (n, 4, 4)
        box = (2.0, 1.0, 1.0)
        topo, lat = make_lattice(cells, box)
        dx = box[0] / n
        k = 2 * math.pi / box[0]
        g = topo.ghost_width
        i = np.arange(-g, n + g)
        lat.e[1][...] = np.sin(k * i * dx)[:, None, None]
        dt = 1e-3
        lat.advance_b_half(dt)
        rate = lat.interior(lat.b[2]) / (0.5 * dt)
        x_b = (np.arange(n) + 0.5) * dx
        exact = -k * np.cos(k * x_b)
        errs.append(np.abs(rate - exact[:, None, None]).max())
    s = slope(errs)
    assert (s >= 1.99).all(), f"slopes {s}"


def yee_omega(k, dx, dt):
    return 2.0 / dt * math.asin(dt / dx * math.sin(k * dx / 2.0))


def test_plane_wave_exact_discrete_eigenmode():
    # E and half-stepped B initialized as the exact Yee eigenmode stay on
    # it to rounding for hundreds of steps
    n = 32
    cells = (n, 4, 4)
    box = (2.0, 1.0, 1.0)
    topo, lat = make_lattice(cells, box)
    dx = box[0] / n
    dt = 0.4 * dx
    k = 2 * math.pi * 3 / box[0]
    omega = yee_omega(k, dx, dt)
    g = topo.ghost_width
    i = np.arange(-g, n + g)

    def ey(t):
        return np.cos(k * i * dx - omega * t)[:, None, None]

    def bz(t):
        return np.cos(k * (i + 0.5) * dx - omega * t)[:, None, None]

    lat.e[1][...] = ey(0.0)
    lat.b[2][...] = bz(0.5 * dt)
    n_steps = 200
    for s_ in range(n_steps):
        # E^{n+1} from B^{n+1/2}; then B^{n+1/2} -> B^{n+3/2}
        lat.advance_e(dt)
        wrap_ghosts(lat, topo, lat.e)
        lat.advance_b_half(dt)
        lat.advance_b_half(dt)
        wrap_ghosts(lat, topo, lat.b)
    t = n_steps * dt
    assert np.abs(lat.interior(lat.e[1])
                  - ey(t)[g:-g]).max() < 5e-12
    assert np.abs(lat.interior(lat.b[2])
                  - bz(t + 0.5 * dt)[g:-g]).max() < 5e-12


def test_plane_wave_period_return_via_step():
    # full engine step in vacuum: after one numerical period the fields
    # return to their initial values (dt tuned so T is a whole number of
    # steps; tolerance from the dispersion phase residual)
    n = 32
    cells = (n, 4, 4)
    box = (2.0, 1.0, 1.0)
    dx = box[0] / n
    k = 2 * math.pi / box[0]
    n_steps = 128
    lo, hi = 1e-4, 0.5 * dx

    def phase(dt):
        return yee_omega(k, dx, dt) * n_steps * dt - 2 * math.pi

    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if phase(mid) > 0:
            hi = mid
        else:
            lo = mid
    dt = 0.5 * (lo + hi)
    omega = yee_omega(k, dx, dt)

    topo, lat = make_lattice(cells, box)
    g = topo.ghost_width
    i = np.arange(-g, n + g)
    lat.e[1][...] = np.cos(k * i * dx)[:, None, None]
    # integer-time B = time-centered average of the two half values
    lat.b[2][...] = (math.cos(omega * dt / 2)
                     * np.cos(k * (i + 0.5) * dx))[:, None, None]
    e0 = lat.interior(lat.e[1]).copy()
    state = RankState(topo, lat, [], dt)
    exchange.exchange_field_halos(lat.e, topo, state.transport)
    exchange.exchange_field_halos(lat.b, topo, state.transport)
    for _ in range(n_steps):
        step(state)
    assert np.abs(lat.interior(lat.e[1]) - e0).max() < 1e-10


def test_fdtd_convergence_order():
    # manufactured vacuum solution against the continuum dispersion
    errs = []
    for n in (16, 32, 64):
        cells = (n, 4, 4)
        box = (2.0, 1.0, 1.0)
        dx = box[0] / n
        dt = 0.25 * dx
        k = 2 * math.pi / box[0]
        t_final = 0.5
        n_steps = int(round(t_final / dt))
        topo, lat = make_lattice(cells, box)
        g = topo.ghost_width
        i = np.arange(-g, n + g)
        lat.e[1][...] = np.cos(k * i * dx)[:, None, None]
        lat.b[2][...] = np.cos(k * (i + 0.5) * dx)[:, None, None]
        state = RankState(topo, lat, [], dt)
        exchange.exchange_field_halos(lat.e, topo, state.transport)
        exchange.exchange_field_halos(lat.b, topo, state.transport)
        for _ in range(n_steps):
            step(state)
        t = n_steps * dt
        x_e = np.arange(n) * dx
        exact = np.cos(k * (x_e - t))
        errs.append(np.abs(lat.interior(lat.e[1])
                           - exact[:, None, None]).max())
    s = slope(errs)
    assert (s >= 1.9).all(), f"slopes {s}, errors {errs}"


def test_field_energy_values():
    topo, lat = make_lattice((4, 4, 4), (1, 1, 1))
    assert lat.field_energy() == 0.0
    lat.e[0][...] = 1.0
    assert lat.field_energy() == pytest.approx(0.5, rel=1e-14)


def test_divergence_diagnostics_zero_in_vacuum():
    topo, lat = make_lattice((6, 6, 6), (2, 2, 2))
    assert np.array_equal(lat.gauss_residual(), np.zeros((6, 6, 6)))
    assert np.array_equal(lat.div_b(), np.zeros((6, 6, 6)))


def test_advance_linearity():
    rng = np.random.default_rng(7)
    alpha, beta = 1.7, -0.6

    def randomized():
        topo, lat = make_lattice((6, 6, 6), (2, 2, 2))
        fields = [rng.standard_normal(a.shape)
                  for a in (*lat.e, *lat.b, *lat.j)]
        return topo, lat, fields

    topo, lat1, f = randomized()
    _, lat2, h = randomized()
    _, lat3, _ = randomized()
    for lat, coeffs in ((lat1, (1, 0)), (lat2, (0, 1)), (lat3, (alpha, beta))):
        arrays = (*lat.e, *lat.b, *lat.j)
        for a, pf, ph in zip(arrays, f, h):
            a[...] = coeffs[0] * pf + coeffs[1] * ph
        lat.advance_b_half(0.05)
        lat.advance_e(0.05)
    for a1, a2, a3 in zip((*lat1.e, *lat1.b), (*lat2.e, *lat2.b),
                          (*lat3.e, *lat3.b)):
        combo = alpha * lat1.interior(a1) + beta * lat2.interior(a2)
        assert np.allclose(lat3.interior(a3), combo, rtol=1e-12, atol=1e-12)


def test_vacuum_noise_run_energy_bounded():
    # 1e4 steps at 0.98 of the stability bound: the discrete invariant
    # (E^n)^2 + B^{n-1/2} B^{n+1/2} must hold to rounding, and the
    # time-centered energy must stay bounded
    cells = (16, 16, 16)
    box = (2.0, 2.0, 2.0)
    topo, lat = make_lattice(cells, box, kernels.get_backend("numba"))
    dx = box[0] / cells[0]
    dt = 0.98 * dx / math.sqrt(3.0)
    rng = np.random.default_rng(11)
    for a in (*lat.e, *lat.b):
        a[topo.interior()] = rng.standard_normal(tuple(c for c in cells))
    tp = exchange.LoopbackTransport()
    exchange.exchange_field_halos(lat.e, topo, tp)
    exchange.exchange_field_halos(lat.b, topo, tp)

    v = lat.layout.cell_volume

    def product_energy(b_prev):
        tot = sum(float(np.sum(lat.interior(a) ** 2)) for a in lat.e)
        tot += sum(float(np.sum(p[topo.interior()] * lat.interior(a)))
                   for p, a in zip(b_prev, lat.b))
        return 0.5 * v * tot

    u0 = None
    avg_energies = []
    n_steps = 10_000
    for s_ in range(n_steps):
        lat.advance_e(dt)
        exchange.exchange_field_halos(lat.e, topo, tp)
        b_prev = [a.copy() for a in lat.b]
        lat.advance_b_half(dt)
        lat.advance_b_half(dt)
        exchange.exchange_field_halos(lat.b, topo, tp)
        if s_ % 500 == 0 or s_ == n_steps - 1:
            u = product_energy(b_prev)
            if u0 is None:
                u0 = u
            avg = 0.5 * v * sum(
                float(np.sum(lat.interior(a) ** 2))
                for a in (*lat.e, *lat.b))
            avg_energies.append(avg)
            assert abs(u / u0) <= 1.0 + 1e-6, f"step {s_}: {u / u0}"
    assert max(avg_energies) / min(avg_energies) < 4.0


def test_assert_finite_raises():
    topo, lat = make_lattice((6, 6, 6), (2, 2, 2))
    lat.e[0][3, 3, 3] = np.nan
    with pytest.raises(FloatingPointError):
        lat.assert_finite()
