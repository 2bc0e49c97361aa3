"""Numba kernels for bicubic Hermite evaluation of displacement maps.

A map stores 8 planes: for each displacement component, (value, d/dx, d/dy,
d2/dxdy) at every vertex.  The interpolant on cell [x_i, x_{i+1}] x
[y_j, y_{j+1}] is the tensor product of the cubic Hermite basis in each
direction, with derivative coefficients scaled by the cell size so the
planes hold true partial derivatives.

All kernels are point-parallel; each point is independent, so results do
not depend on the thread partitioning.
"""

import numpy as np
from numba import njit, prange

TWO_PI = 2.0 * np.pi


@njit(cache=True, inline="always")
def _basis(s, h):
    # weights for (left value, left deriv, right value, right deriv)
    s2 = s * s
    s3 = s2 * s
    return (
        1.0 - 3.0 * s2 + 2.0 * s3,
        (s - 2.0 * s2 + s3) * h,
        3.0 * s2 - 2.0 * s3,
        (-s2 + s3) * h,
    )


@njit(cache=True, inline="always")
def _dbasis(s, h):
    # x-derivatives of _basis
    s2 = s * s
    return (
        (-6.0 * s + 6.0 * s2) / h,
        1.0 - 4.0 * s + 3.0 * s2,
        (6.0 * s - 6.0 * s2) / h,
        (-2.0 * s + 3.0 * s2),
    )


@njit(cache=True, inline="always")
def _locate(x, h, n):
    # cell index and local coordinate for a wrapped position
    xw = x % TWO_PI
    f = xw / h
    i = int(f)
    s = f - i
    if i >= n:
        i -= n
    return i, s


@njit(cache=True, inline="always")
def _disp_at(planes, dx, dy, nx, ny, x, y):
    """Displacement (vx, vy) of one map at a point (wrapped internally)."""
    i, s = _locate(x, dx, nx)
    j, t = _locate(y, dy, ny)
    i1 = i + 1
    if i1 == nx:
        i1 = 0
    j1 = j + 1
    if j1 == ny:
        j1 = 0
    ax = _basis(s, dx)
    by = _basis(t, dy)
    vx = 0.0
    vy = 0.0
    for di in range(2):
        ii = i if di == 0 else i1
        for dj in range(2):
            jj = j if dj == 0 else j1
            for a in range(2):
                wx = ax[2 * di + a]
                for b in range(2):
                    w = wx * by[2 * dj + b]
                    f = a + 2 * b
                    vx += planes[0, f, jj, ii] * w
                    vy += planes[1, f, jj, ii] * w
    return vx, vy


@njit(cache=True, inline="always")
def _disp_jac_at(planes, dx, dy, nx, ny, x, y):
    """Displacement and its Jacobian (vx, vy, vxx, vxy, vyx, vyy) at a point."""
    i, s = _locate(x, dx, nx)
    j, t = _locate(y, dy, ny)
    i1 = i + 1
    if i1 == nx:
        i1 = 0
    j1 = j + 1
    if j1 == ny:
        j1 = 0
    ax = _basis(s, dx)
    dax = _dbasis(s, dx)
    by = _basis(t, dy)
    dby = _dbasis(t, dy)
    vx = vy = 0.0
    vxx = vxy = vyx = vyy = 0.0
    for di in range(2):
        ii = i if di == 0 else i1
        for dj in range(2):
            jj = j if dj == 0 else j1
            for a in range(2):
                for b in range(2):
                    f = a + 2 * b
                    cx = planes[0, f, jj, ii]
                    cy = planes[1, f, jj, ii]
                    w = ax[2 * di + a] * by[2 * dj + b]
                    wdx = dax[2 * di + a] * by[2 * dj + b]
                    wdy = ax[2 * di + a] * dby[2 * dj + b]
                    vx += cx * w
                    vy += cy * w
                    vxx += cx * wdx
                    vxy += cx * wdy
                    vyx += cy * wdx
                    vyy += cy * wdy
    return vx, vy, vxx, vxy, vyx, vyy


@njit(cache=True, parallel=True)
def _apply_map(planes, dx, dy, nx, ny, qx, qy):
    # one composition step in place; planes lookup hoisted out of the point loop
    for p in prange(qx.shape[0]):
        vx, vy = _disp_at(planes, dx, dy, nx, ny, qx[p], qy[p])
        qx[p] += vx
        qy[p] += vy


@njit(cache=True, parallel=True)
def _apply_map_det(planes, dx, dy, nx, ny, qx, qy, det):
    for p in prange(qx.shape[0]):
        vx, vy, vxx, vxy, vyx, vyy = _disp_jac_at(planes, dx, dy, nx, ny, qx[p], qy[p])
        det[p] *= (1.0 + vxx) * (1.0 + vyy) - vxy * vyx
        qx[p] += vx
        qy[p] += vy


def chain_positions(planes_list, dx, dy, nx, ny, px, py):
    """Apply a chain of maps (newest last in the list, applied first).

    Positions are accumulated without wrapping, so the returned values are a
    continuous representative of the composite displacement added to the
    input points.
    """
    qx = px.copy()
    qy = py.copy()
    for m in range(len(planes_list) - 1, -1, -1):
        _apply_map(planes_list[m], dx, dy, nx, ny, qx, qy)
    return qx, qy


def chain_positions_det(planes_list, dx, dy, nx, ny, px, py):
    """Chain application with the Jacobian determinant accumulated by chain rule.

    The determinant of the composite is the product of the per-map
    determinants evaluated along the composition path.
    """
    qx = px.copy()
    qy = py.copy()
    det = np.ones_like(px)
    for m in range(len(planes_list) - 1, -1, -1):
        _apply_map_det(planes_list[m], dx, dy, nx, ny, qx, qy, det)
    return qx, qy, det


@njit(cache=True, parallel=True)
def map_jacobian(planes, dx, dy, nx, ny, px, py):
    """Full differential D(phi) = I + Dv of a single map, shape (n, 2, 2)."""
    n = px.shape[0]
    out = np.empty((n, 2, 2))
    for p in prange(n):
        _, _, vxx, vxy, vyx, vyy = _disp_jac_at(planes, dx, dy, nx, ny, px[p], py[p])
        out[p, 0, 0] = 1.0 + vxx
        out[p, 0, 1] = vxy
        out[p, 1, 0] = vyx
        out[p, 1, 1] = 1.0 + vyy
    return out


@njit(cache=True, parallel=True)
def scalar_eval_grad(planes, dx, dy, nx, ny, px, py):
    """Bicubic Hermite evaluation of a scalar field: value and gradient.

    ``planes`` is (4, ny, nx) holding (value, d/dx, d/dy, d2/dxdy) data.
    """
    n = px.shape[0]
    val = np.empty(n)
    gx = np.empty(n)
    gy = np.empty(n)
    for p in prange(n):
        i, s = _locate(px[p], dx, nx)
        j, t = _locate(py[p], dy, ny)
        i1 = i + 1
        if i1 == nx:
            i1 = 0
        j1 = j + 1
        if j1 == ny:
            j1 = 0
        ax = _basis(s, dx)
        dax = _dbasis(s, dx)
        by = _basis(t, dy)
        dby = _dbasis(t, dy)
        v = dvx = dvy = 0.0
        for di in range(2):
            ii = i if di == 0 else i1
            for dj in range(2):
                jj = j if dj == 0 else j1
                for a in range(2):
                    for b in range(2):
                        c = planes[a + 2 * b, jj, ii]
                        v += c * ax[2 * di + a] * by[2 * dj + b]
                        dvx += c * dax[2 * di + a] * by[2 * dj + b]
                        dvy += c * ax[2 * di + a] * dby[2 * dj + b]
        val[p] = v
        gx[p] = dvx
        gy[p] = dvy
    return val, gx, gy


@njit(cache=True, parallel=True)
def bilinear_eval(data, dx, dy, nx, ny, px, py):
    """Periodic bilinear sampling of (channels, ny, nx) data at scattered points."""
    n_ch = data.shape[0]
    n = px.shape[0]
    out = np.empty((n_ch, n))
    for p in prange(n):
        i, s = _locate(px[p], dx, nx)
        j, t = _locate(py[p], dy, ny)
        i1 = i + 1
        if i1 == nx:
            i1 = 0
        j1 = j + 1
        if j1 == ny:
            j1 = 0
        for c in range(n_ch):
            v00 = data[c, j, i]
            v10 = data[c, j, i1]
            v01 = data[c, j1, i]
            v11 = data[c, j1, i1]
            a = v00 + s * (v10 - v00)
            b = v01 + s * (v11 - v01)
            v = a + t * (b - a)
            # clamp round-off so the convex-combination bounds hold exactly
            lo = min(min(v00, v10), min(v01, v11))
            hi = max(max(v00, v10), max(v01, v11))
            if v < lo:
                v = lo
            elif v > hi:
                v = hi
            out[c, p] = v
    return out


def planes_typed_list(plane_arrays):
    """Contiguous plane arrays in chain order for the composition kernels."""
    return [np.ascontiguousarray(p) for p in plane_arrays]
