"""Compiled inner loop of the explicit upwind step."""

import math
import os

import numba
import numpy as np

if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER = "omp"


@numba.njit(parallel=True, cache=True)
def explicit_step(u, out, bx0, by, growth, J0, J1, w, jcoef, src, Dx, Dy, hx, hy, dt, use_j, use_src, wform):
    """Write the interior of ``out`` from ``u``; edges are left untouched."""
    nx, ny = u.shape
    ihx, ihy = 1.0 / hx, 1.0 / hy
    dxx, dyy = Dx / (hx * hx), Dy / (hy * hy)
    for i in numba.prange(1, nx - 1):
        for j in range(1, ny - 1):
            c = u[i, j]
            b = bx0[i, j]
            jt = 0.0
            if use_j:
                jt = (1.0 - w) * J0[i, j] + w * J1[i, j]
                b -= jt
            if b > 0.0:
                conv = b * (u[i + 1, j] - c) * ihx
            else:
                conv = b * (c - u[i - 1, j]) * ihx
            d = by[i, j]
            if d > 0.0:
                conv += d * (u[i, j + 1] - c) * ihy
            else:
                conv += d * (c - u[i, j - 1]) * ihy
            incr = conv + dxx * (u[i + 1, j] - 2.0 * c + u[i - 1, j]) + dyy * (u[i, j + 1] - 2.0 * c + u[i, j - 1])
            if use_src:
                incr += src[i, j]
            val = (c + dt * incr) * growth[i, j]
            if wform:
                val *= math.exp(dt * jt * jcoef[i, j])
            out[i, j] = val


def warm_up():
    z = np.ones((3, 3))
    explicit_step(z, z.copy(), z, z, z, z, z, 0.0, z, z, 0.0, 0.0, 1.0, 1.0, 0.0, True, True, True)
