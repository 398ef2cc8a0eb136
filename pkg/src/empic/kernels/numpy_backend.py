"""Pure-numpy reference implementations of the hot kernels.

Slower than the numba backend (especially current deposition) but has no
compile step and serves as the independent fallback path. Semantics match
the numba kernels; bitwise equality across backends is not guaranteed.
"""
from __future__ import annotations

import numpy as np

NAME = "numpy"

# particles handled per deposition chunk; bounds memory for the (n,3,3,3)
# weight tensors
_CHUNK = 16384


def advance_b_half(bx, by, bz, ex, ey, ez, g, hdt_dx, hdt_dy, hdt_dz):
    """B -= (dt/2) * curl(E) on interior points of ghosted arrays."""
    nx, ny, nz = (s - 2 * g for s in bx.shape)
    i = slice(g, g + nx)
    j = slice(g, g + ny)
    k = slice(g, g + nz)
    ip = slice(g + 1, g + nx + 1)
    jp = slice(g + 1, g + ny + 1)
    kp = slice(g + 1, g + nz + 1)

    bx[i, j, k] -= hdt_dy * (ez[i, jp, k] - ez[i, j, k]) \
        - hdt_dz * (ey[i, j, kp] - ey[i, j, k])
    by[i, j, k] -= hdt_dz * (ex[i, j, kp] - ex[i, j, k]) \
        - hdt_dx * (ez[ip, j, k] - ez[i, j, k])
    bz[i, j, k] -= hdt_dx * (ey[ip, j, k] - ey[i, j, k]) \
        - hdt_dy * (ex[i, jp, k] - ex[i, j, k])


def advance_e(ex, ey, ez, bx, by, bz, jx, jy, jz, g, dt, dt_dx, dt_dy, dt_dz):
    """E += dt * (curl(B) - J) on interior points of ghosted arrays."""
    nx, ny, nz = (s - 2 * g for s in ex.shape)
    i = slice(g, g + nx)
    j = slice(g, g + ny)
    k = slice(g, g + nz)
    im = slice(g - 1, g + nx - 1)
    jm = slice(g - 1, g + ny - 1)
    km = slice(g - 1, g + nz - 1)

    ex[i, j, k] += dt_dy * (bz[i, j, k] - bz[i, jm, k]) \
        - dt_dz * (by[i, j, k] - by[i, j, km]) - dt * jx[i, j, k]
    ey[i, j, k] += dt_dz * (bx[i, j, k] - bx[i, j, km]) \
        - dt_dx * (bz[i, j, k] - bz[im, j, k]) - dt * jy[i, j, k]
    ez[i, j, k] += dt_dx * (by[i, j, k] - by[im, j, k]) \
        - dt_dy * (bx[i, j, k] - bx[i, jm, k]) - dt * jz[i, j, k]


def _trilinear(arr, i, j, k, fx, fy, fz):
    gx = 1.0 - fx
    gy = 1.0 - fy
    gz = 1.0 - fz
    return (arr[i, j, k] * (gx * gy * gz)
            + arr[i + 1, j, k] * (fx * gy * gz)
            + arr[i, j + 1, k] * (gx * fy * gz)
            + arr[i + 1, j + 1, k] * (fx * fy * gz)
            + arr[i, j, k + 1] * (gx * gy * fz)
            + arr[i + 1, j, k + 1] * (fx * gy * fz)
            + arr[i, j + 1, k + 1] * (gx * fy * fz)
            + arr[i + 1, j + 1, k + 1] * (fx * fy * fz))


def gather_eb(x, y, z, n, ex, ey, ez, bx, by, bz,
              inv_dx, inv_dy, inv_dz, sx, sy, sz, g,
              epx, epy, epz, bpx, bpy, bpz):
    """CIC-interpolate all six staggered components to particle positions."""
    x = x[:n]
    y = y[:n]
    z = z[:n]
    xi = x * inv_dx
    yi = y * inv_dy
    zi = z * inv_dz

    # node-centered and half-shifted index/fraction pairs per axis
    ix0 = np.floor(xi).astype(np.int64)
    iy0 = np.floor(yi).astype(np.int64)
    iz0 = np.floor(zi).astype(np.int64)
    fx0 = xi - ix0
    fy0 = yi - iy0
    fz0 = zi - iz0
    ix1 = np.floor(xi - 0.5).astype(np.int64)
    iy1 = np.floor(yi - 0.5).astype(np.int64)
    iz1 = np.floor(zi - 0.5).astype(np.int64)
    fx1 = xi - 0.5 - ix1
    fy1 = yi - 0.5 - iy1
    fz1 = zi - 0.5 - iz1

    ix0 += g - sx
    iy0 += g - sy
    iz0 += g - sz
    ix1 += g - sx
    iy1 += g - sy
    iz1 += g - sz

    epx[:n] = _trilinear(ex, ix1, iy0, iz0, fx1, fy0, fz0)
    epy[:n] = _trilinear(ey, ix0, iy1, iz0, fx0, fy1, fz0)
    epz[:n] = _trilinear(ez, ix0, iy0, iz1, fx0, fy0, fz1)
    bpx[:n] = _trilinear(bx, ix0, iy1, iz1, fx0, fy1, fz1)
    bpy[:n] = _trilinear(by, ix1, iy0, iz1, fx1, fy0, fz1)
    bpz[:n] = _trilinear(bz, ix1, iy1, iz0, fx1, fy1, fz0)


def boris_push(px, py, pz, n, epx, epy, epz, bpx, bpy, bpz, q, m, dt):
    """Half electric kick, exact magnetic rotation, half electric kick."""
    ek = 0.5 * q * dt
    pxm = px[:n] + ek * epx[:n]
    pym = py[:n] + ek * epy[:n]
    pzm = pz[:n] + ek * epz[:n]

    inv_gamma = 1.0 / np.sqrt(1.0 + (pxm * pxm + pym * pym + pzm * pzm)
                              / (m * m))
    bk = ek / m * inv_gamma
    tx = bk * bpx[:n]
    ty = bk * bpy[:n]
    tz = bk * bpz[:n]
    t2 = tx * tx + ty * ty + tz * tz
    sfac = 2.0 / (1.0 + t2)
    sx = sfac * tx
    sy = sfac * ty
    sz = sfac * tz

    # p' = p- + p- x t ; p+ = p- + p' x s
    ppx = pxm + (pym * tz - pzm * ty)
    ppy = pym + (pzm * tx - pxm * tz)
    ppz = pzm + (pxm * ty - pym * tx)
    px[:n] = pxm + (ppy * sz - ppz * sy) + ek * epx[:n]
    py[:n] = pym + (ppz * sx - ppx * sz) + ek * epy[:n]
    pz[:n] = pzm + (ppx * sy - ppy * sx) + ek * epz[:n]


def move(x, y, z, px, py, pz, n, m, dt, inv_dx, inv_dy, inv_dz):
    """x += v*dt with v = p/(gamma m); returns max displacement in cells."""
    pxn = px[:n]
    pyn = py[:n]
    pzn = pz[:n]
    inv_gamma_m = dt / (m * np.sqrt(1.0 + (pxn * pxn + pyn * pyn + pzn * pzn)
                                    / (m * m)))
    ddx = pxn * inv_gamma_m
    ddy = pyn * inv_gamma_m
    ddz = pzn * inv_gamma_m
    x[:n] += ddx
    y[:n] += ddy
    z[:n] += ddz
    if n == 0:
        return 0.0
    return float(max(np.max(np.abs(ddx)) * inv_dx,
                     np.max(np.abs(ddy)) * inv_dy,
                     np.max(np.abs(ddz)) * inv_dz))


def _window_weights(xi_old, xi_new):
    """3-node window base plus old/new CIC weights along one axis."""
    i_old = np.floor(xi_old).astype(np.int64)
    i_new = np.floor(xi_new).astype(np.int64)
    i0 = np.minimum(i_old, i_new)
    nodes = i0[:, None] + np.arange(3)[None, :]
    s0 = np.maximum(0.0, 1.0 - np.abs(xi_old[:, None] - nodes))
    s1 = np.maximum(0.0, 1.0 - np.abs(xi_new[:, None] - nodes))
    return i0, s0, s1


def deposit_current(xo, yo, zo, xn, yn, zn, w, n, jx, jy, jz, q,
                    inv_dx, inv_dy, inv_dz, sx, sy, sz, g,
                    coef_x, coef_y, coef_z):
    """Charge-conserving current deposition (Esirkepov, linear shape).

    Old positions must lie inside the owned box; new positions may stick
    out by at most one cell (pre-migration). Accumulates into ghosted J.
    """
    shape = jx.shape
    strides = (shape[1] * shape[2], shape[2], 1)
    size = shape[0] * shape[1] * shape[2]
    jxf = jx.reshape(-1)
    jyf = jy.reshape(-1)
    jzf = jz.reshape(-1)

    third = 1.0 / 3.0
    for lo in range(0, n, _CHUNK):
        hi = min(lo + _CHUNK, n)
        ww = w[lo:hi]
        i0x, s0x, s1x = _window_weights(xo[lo:hi] * inv_dx, xn[lo:hi] * inv_dx)
        i0y, s0y, s1y = _window_weights(yo[lo:hi] * inv_dy, yn[lo:hi] * inv_dy)
        i0z, s0z, s1z = _window_weights(zo[lo:hi] * inv_dz, zn[lo:hi] * inv_dz)
        dsx = s1x - s0x
        dsy = s1y - s0y
        dsz = s1z - s0z

        # per-axis transverse combinations, shape (n, 3, 3)
        tyz = (s0y[:, :, None] * s0z[:, None, :]
               + 0.5 * (dsy[:, :, None] * s0z[:, None, :]
                        + s0y[:, :, None] * dsz[:, None, :])
               + third * dsy[:, :, None] * dsz[:, None, :])
        txz = (s0x[:, :, None] * s0z[:, None, :]
               + 0.5 * (dsx[:, :, None] * s0z[:, None, :]
                        + s0x[:, :, None] * dsz[:, None, :])
               + third * dsx[:, :, None] * dsz[:, None, :])
        txy = (s0x[:, :, None] * s0y[:, None, :]
               + 0.5 * (dsx[:, :, None] * s0y[:, None, :]
                        + s0x[:, :, None] * dsy[:, None, :])
               + third * dsx[:, :, None] * dsy[:, None, :])

        wx = dsx[:, :, None, None] * tyz[:, None, :, :]
        wy = dsy[:, None, :, None] * txz[:, :, None, :]
        wz = dsz[:, None, None, :] * txy[:, :, :, None]

        # prefix sums along the flow axis; last entry (~0) is dropped
        fx = np.cumsum(wx, axis=1)[:, :2, :, :]
        fy = np.cumsum(wy, axis=2)[:, :, :2, :]
        fz = np.cumsum(wz, axis=3)[:, :, :, :2]

        qw = q * ww
        base_x = i0x + (g - sx)
        base_y = i0y + (g - sy)
        base_z = i0z + (g - sz)

        def _flat(ai, bi, ci):
            return ai * strides[0] + bi * strides[1] + ci * strides[2]

        a3 = np.arange(3)
        # Jx: 2 staggered x-samples, 3x3 transverse nodes
        idx = _flat((base_x[:, None] + a3[:2])[:, :, None, None],
                    (base_y[:, None] + a3)[:, None, :, None],
                    (base_z[:, None] + a3)[:, None, None, :])
        val = (-coef_x) * qw[:, None, None, None] * fx
        jxf += np.bincount(idx.ravel(), weights=val.ravel(), minlength=size)

        idx = _flat((base_x[:, None] + a3)[:, :, None, None],
                    (base_y[:, None] + a3[:2])[:, None, :, None],
                    (base_z[:, None] + a3)[:, None, None, :])
        val = (-coef_y) * qw[:, None, None, None] * fy
        jyf += np.bincount(idx.ravel(), weights=val.ravel(), minlength=size)

        idx = _flat((base_x[:, None] + a3)[:, :, None, None],
                    (base_y[:, None] + a3)[:, None, :, None],
                    (base_z[:, None] + a3[:2])[:, None, None, :])
        val = (-coef_z) * qw[:, None, None, None] * fz
        jzf += np.bincount(idx.ravel(), weights=val.ravel(), minlength=size)


def deposit_cic(x, y, z, w, n, out, scale, inv_dx, inv_dy, inv_dz,
                sx, sy, sz, g):
    """Nodal CIC deposition of scale*w (used for charge/number density)."""
    shape = out.shape
    strides = (shape[1] * shape[2], shape[2], 1)
    size = shape[0] * shape[1] * shape[2]
    flat = out.reshape(-1)

    for lo in range(0, n, _CHUNK):
        hi = min(lo + _CHUNK, n)
        xi = x[lo:hi] * inv_dx
        yi = y[lo:hi] * inv_dy
        zi = z[lo:hi] * inv_dz
        ix = np.floor(xi).astype(np.int64)
        iy = np.floor(yi).astype(np.int64)
        iz = np.floor(zi).astype(np.int64)
        fx = xi - ix
        fy = yi - iy
        fz = zi - iz
        ix += g - sx
        iy += g - sy
        iz += g - sz
        sw = scale * w[lo:hi]
        for dx_, wxf in ((0, 1.0 - fx), (1, fx)):
            for dy_, wyf in ((0, 1.0 - fy), (1, fy)):
                for dz_, wzf in ((0, 1.0 - fz), (1, fz)):
                    idx = ((ix + dx_) * strides[0] + (iy + dy_) * strides[1]
                           + (iz + dz_) * strides[2])
                    flat += np.bincount(idx, weights=sw * wxf * wyf * wzf,
                                        minlength=size)
