"""Numba implementations of the hot kernels.

All kernels are nopython, nogil and disk-cached: rank workers are plain
threads, so releasing the GIL inside the inner loops is what lets the
in-process decomposition actually run in parallel. No fastmath, no
prange: accumulation order is fixed so runs are bitwise reproducible.
"""
from __future__ import annotations

import numpy as np
from numba import njit

NAME = "numba"

_jit = njit(cache=True, nogil=True)


@_jit
def advance_b_half(bx, by, bz, ex, ey, ez, g, hdt_dx, hdt_dy, hdt_dz):
    nx = bx.shape[0] - 2 * g
    ny = bx.shape[1] - 2 * g
    nz = bx.shape[2] - 2 * g
    for i in range(g, g + nx):
        for j in range(g, g + ny):
            for k in range(g, g + nz):
                bx[i, j, k] -= hdt_dy * (ez[i, j + 1, k] - ez[i, j, k]) \
                    - hdt_dz * (ey[i, j, k + 1] - ey[i, j, k])
                by[i, j, k] -= hdt_dz * (ex[i, j, k + 1] - ex[i, j, k]) \
                    - hdt_dx * (ez[i + 1, j, k] - ez[i, j, k])
                bz[i, j, k] -= hdt_dx * (ey[i + 1, j, k] - ey[i, j, k]) \
                    - hdt_dy * (ex[i, j + 1, k] - ex[i, j, k])


@_jit
def advance_e(ex, ey, ez, bx, by, bz, jx, jy, jz, g, dt, dt_dx, dt_dy, dt_dz):
    nx = ex.shape[0] - 2 * g
    ny = ex.shape[1] - 2 * g
    nz = ex.shape[2] - 2 * g
    for i in range(g, g + nx):
        for j in range(g, g + ny):
            for k in range(g, g + nz):
                ex[i, j, k] += dt_dy * (bz[i, j, k] - bz[i, j - 1, k]) \
                    - dt_dz * (by[i, j, k] - by[i, j, k - 1]) \
                    - dt * jx[i, j, k]
                ey[i, j, k] += dt_dz * (bx[i, j, k] - bx[i, j, k - 1]) \
                    - dt_dx * (bz[i, j, k] - bz[i - 1, j, k]) \
                    - dt * jy[i, j, k]
                ez[i, j, k] += dt_dx * (by[i, j, k] - by[i - 1, j, k]) \
                    - dt_dy * (bx[i, j, k] - bx[i, j - 1, k]) \
                    - dt * jz[i, j, k]


@_jit
def gather_eb(x, y, z, n, ex, ey, ez, bx, by, bz,
              inv_dx, inv_dy, inv_dz, sx, sy, sz, g,
              epx, epy, epz, bpx, bpy, bpz):
    ox = g - sx
    oy = g - sy
    oz = g - sz
    for p in range(n):
        xi = x[p] * inv_dx
        yi = y[p] * inv_dy
        zi = z[p] * inv_dz

        ix0 = int(np.floor(xi))
        iy0 = int(np.floor(yi))
        iz0 = int(np.floor(zi))
        fx0 = xi - ix0
        fy0 = yi - iy0
        fz0 = zi - iz0
        ix1 = int(np.floor(xi - 0.5))
        iy1 = int(np.floor(yi - 0.5))
        iz1 = int(np.floor(zi - 0.5))
        fx1 = xi - 0.5 - ix1
        fy1 = yi - 0.5 - iy1
        fz1 = zi - 0.5 - iz1

        ix0 += ox
        iy0 += oy
        iz0 += oz
        ix1 += ox
        iy1 += oy
        iz1 += oz

        epx[p] = _tri(ex, ix1, iy0, iz0, fx1, fy0, fz0)
        epy[p] = _tri(ey, ix0, iy1, iz0, fx0, fy1, fz0)
        epz[p] = _tri(ez, ix0, iy0, iz1, fx0, fy0, fz1)
        bpx[p] = _tri(bx, ix0, iy1, iz1, fx0, fy1, fz1)
        bpy[p] = _tri(by, ix1, iy0, iz1, fx1, fy0, fz1)
        bpz[p] = _tri(bz, ix1, iy1, iz0, fx1, fy1, fz0)


@njit(cache=True, nogil=True, inline="always")
def _tri(arr, i, j, k, fx, fy, fz):
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


@_jit
def boris_push(px, py, pz, n, epx, epy, epz, bpx, bpy, bpz, q, m, dt):
    ek = 0.5 * q * dt
    inv_m2 = 1.0 / (m * m)
    for p in range(n):
        pxm = px[p] + ek * epx[p]
        pym = py[p] + ek * epy[p]
        pzm = pz[p] + ek * epz[p]

        inv_gamma = 1.0 / np.sqrt(
            1.0 + (pxm * pxm + pym * pym + pzm * pzm) * inv_m2)
        bk = ek / m * inv_gamma
        tx = bk * bpx[p]
        ty = bk * bpy[p]
        tz = bk * bpz[p]
        t2 = tx * tx + ty * ty + tz * tz
        sfac = 2.0 / (1.0 + t2)
        sx = sfac * tx
        sy = sfac * ty
        sz = sfac * tz

        ppx = pxm + (pym * tz - pzm * ty)
        ppy = pym + (pzm * tx - pxm * tz)
        ppz = pzm + (pxm * ty - pym * tx)
        px[p] = pxm + (ppy * sz - ppz * sy) + ek * epx[p]
        py[p] = pym + (ppz * sx - ppx * sz) + ek * epy[p]
        pz[p] = pzm + (ppx * sy - ppy * sx) + ek * epz[p]


@_jit
def move(x, y, z, px, py, pz, n, m, dt, inv_dx, inv_dy, inv_dz):
    inv_m2 = 1.0 / (m * m)
    max_step = 0.0
    for p in range(n):
        pxp = px[p]
        pyp = py[p]
        pzp = pz[p]
        f = dt / (m * np.sqrt(1.0 + (pxp * pxp + pyp * pyp + pzp * pzp)
                              * inv_m2))
        ddx = pxp * f
        ddy = pyp * f
        ddz = pzp * f
        x[p] += ddx
        y[p] += ddy
        z[p] += ddz
        s = abs(ddx) * inv_dx
        if s > max_step:
            max_step = s
        s = abs(ddy) * inv_dy
        if s > max_step:
            max_step = s
        s = abs(ddz) * inv_dz
        if s > max_step:
            max_step = s
    return max_step


@njit(cache=True, nogil=True, inline="always")
def _tent3(xi, i0, s):
    for a in range(3):
        d = xi - (i0 + a)
        if d < 0.0:
            d = -d
        s[a] = 1.0 - d if d < 1.0 else 0.0


@_jit
def deposit_current(xo, yo, zo, xn, yn, zn, w, n, jx, jy, jz, q,
                    inv_dx, inv_dy, inv_dz, sx, sy, sz, g,
                    coef_x, coef_y, coef_z):
    s0x = np.empty(3)
    s0y = np.empty(3)
    s0z = np.empty(3)
    s1x = np.empty(3)
    s1y = np.empty(3)
    s1z = np.empty(3)
    third = 1.0 / 3.0
    ox = g - sx
    oy = g - sy
    oz = g - sz

    for p in range(n):
        xio = xo[p] * inv_dx
        yio = yo[p] * inv_dy
        zio = zo[p] * inv_dz
        xin = xn[p] * inv_dx
        yin = yn[p] * inv_dy
        zin = zn[p] * inv_dz

        i0 = min(int(np.floor(xio)), int(np.floor(xin)))
        j0 = min(int(np.floor(yio)), int(np.floor(yin)))
        k0 = min(int(np.floor(zio)), int(np.floor(zin)))
        _tent3(xio, i0, s0x)
        _tent3(yio, j0, s0y)
        _tent3(zio, k0, s0z)
        _tent3(xin, i0, s1x)
        _tent3(yin, j0, s1y)
        _tent3(zin, k0, s1z)

        qw = q * w[p]
        cx = -coef_x * qw
        cy = -coef_y * qw
        cz = -coef_z * qw
        li = i0 + ox
        lj = j0 + oy
        lk = k0 + oz

        # x-directed current: prefix-sum the Esirkepov weights along x
        for b in range(3):
            dsy = s1y[b] - s0y[b]
            for c in range(3):
                dsz = s1z[c] - s0z[c]
                tyz = (s0y[b] * s0z[c]
                       + 0.5 * (dsy * s0z[c] + s0y[b] * dsz)
                       + third * dsy * dsz)
                acc = 0.0
                for a in range(2):
                    acc += (s1x[a] - s0x[a]) * tyz
                    jx[li + a, lj + b, lk + c] += cx * acc

        for a in range(3):
            dsx = s1x[a] - s0x[a]
            for c in range(3):
                dsz = s1z[c] - s0z[c]
                txz = (s0x[a] * s0z[c]
                       + 0.5 * (dsx * s0z[c] + s0x[a] * dsz)
                       + third * dsx * dsz)
                acc = 0.0
                for b in range(2):
                    acc += (s1y[b] - s0y[b]) * txz
                    jy[li + a, lj + b, lk + c] += cy * acc

        for a in range(3):
            dsx = s1x[a] - s0x[a]
            for b in range(3):
                dsy = s1y[b] - s0y[b]
                txy = (s0x[a] * s0y[b]
                       + 0.5 * (dsx * s0y[b] + s0x[a] * dsy)
                       + third * dsx * dsy)
                acc = 0.0
                for c in range(2):
                    acc += (s1z[c] - s0z[c]) * txy
                    jz[li + a, lj + b, lk + c] += cz * acc


@_jit
def deposit_cic(x, y, z, w, n, out, scale, inv_dx, inv_dy, inv_dz,
                sx, sy, sz, g):
    ox = g - sx
    oy = g - sy
    oz = g - sz
    for p in range(n):
        xi = x[p] * inv_dx
        yi = y[p] * inv_dy
        zi = z[p] * inv_dz
        i = int(np.floor(xi))
        j = int(np.floor(yi))
        k = int(np.floor(zi))
        fx = xi - i
        fy = yi - j
        fz = zi - k
        gx = 1.0 - fx
        gy = 1.0 - fy
        gz = 1.0 - fz
        i += ox
        j += oy
        k += oz
        sw = scale * w[p]
        out[i, j, k] += sw * gx * gy * gz
        out[i + 1, j, k] += sw * fx * gy * gz
        out[i, j + 1, k] += sw * gx * fy * gz
        out[i + 1, j + 1, k] += sw * fx * fy * gz
        out[i, j, k + 1] += sw * gx * gy * fz
        out[i + 1, j, k + 1] += sw * fx * gy * fz
        out[i, j + 1, k + 1] += sw * gx * fy * fz
        out[i + 1, j + 1, k + 1] += sw * fx * fy * fz
