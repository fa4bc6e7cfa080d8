"""Hot-loop kernels with numba JIT and bit-compatible numpy fallbacks.

The FDTD step kernels evaluate the exact same IEEE operation sequence in both
backends (no fastmath, no reassociation), so results are bit-identical
whichever is active. Set RFASIM_DISABLE_NUMBA=1 to force the numpy paths.
"""

from __future__ import annotations

import os

import numpy as np

try:
    if os.environ.get("RFASIM_DISABLE_NUMBA"):
        raise ImportError("numba disabled via RFASIM_DISABLE_NUMBA")
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via env toggle
    numba = None
    HAVE_NUMBA = False


def _njit(**kwargs):
    def wrap(fn):
        if HAVE_NUMBA:
            return numba.njit(cache=True, **kwargs)(fn)
        return fn

    return wrap


@_njit()
def _fdtd_step_iso_numba(t, out, alpha, perf, t_b, source):
    nx, ny, nz = t.shape
    for i in range(1, nx - 1):
        for j in range(1, ny - 1):
            for k in range(1, nz - 1):
                tc = t[i, j, k]
                s = ((t[i - 1, j, k] + t[i + 1, j, k]) + (t[i, j - 1, k] + t[i, j + 1, k])) + (
                    t[i, j, k - 1] + t[i, j, k + 1]
                )
                lap = s - 6.0 * tc
                a = alpha[i - 1, j - 1, k - 1] * lap
                a += perf[i - 1, j - 1, k - 1] * (t_b - tc)
                a += source[i - 1, j - 1, k - 1]
                out[i, j, k] = tc + a


@_njit()
def _fdtd_step_aniso_numba(t, out, ax, ay, az, perf, t_b, source):
    nx, ny, nz = t.shape
    for i in range(1, nx - 1):
        for j in range(1, ny - 1):
            for k in range(1, nz - 1):
                tc = t[i, j, k]
                sx = (t[i - 1, j, k] + t[i + 1, j, k]) - tc - tc
                sy = (t[i, j - 1, k] + t[i, j + 1, k]) - tc - tc
                sz = (t[i, j, k - 1] + t[i, j, k + 1]) - tc - tc
                a = ax[i - 1, j - 1, k - 1] * sx
                a += ay[i - 1, j - 1, k - 1] * sy
                a += az[i - 1, j - 1, k - 1] * sz
                a += perf[i - 1, j - 1, k - 1] * (t_b - tc)
                a += source[i - 1, j - 1, k - 1]
                out[i, j, k] = tc + a


def fdtd_step_iso_numpy(t, out, alpha, perf, t_b, source, acc, tmp):
    ti = t[1:-1, 1:-1, 1:-1]
    np.add(t[:-2, 1:-1, 1:-1], t[2:, 1:-1, 1:-1], out=acc)
    np.add(t[1:-1, :-2, 1:-1], t[1:-1, 2:, 1:-1], out=tmp)
    acc += tmp
    np.add(t[1:-1, 1:-1, :-2], t[1:-1, 1:-1, 2:], out=tmp)
    acc += tmp
    np.multiply(ti, 6.0, out=tmp)
    acc -= tmp
    acc *= alpha
    np.subtract(t_b, ti, out=tmp)
    tmp *= perf
    acc += tmp
    acc += source
    np.add(ti, acc, out=out[1:-1, 1:-1, 1:-1])


def fdtd_step_aniso_numpy(t, out, ax, ay, az, perf, t_b, source, acc, tmp):
    ti = t[1:-1, 1:-1, 1:-1]
    np.add(t[:-2, 1:-1, 1:-1], t[2:, 1:-1, 1:-1], out=acc)
    acc -= ti
    acc -= ti
    acc *= ax
    np.add(t[1:-1, :-2, 1:-1], t[1:-1, 2:, 1:-1], out=tmp)
    tmp -= ti
    tmp -= ti
    tmp *= ay
    acc += tmp
    np.add(t[1:-1, 1:-1, :-2], t[1:-1, 1:-1, 2:], out=tmp)
    tmp -= ti
    tmp -= ti
    tmp *= az
    acc += tmp
    np.subtract(t_b, ti, out=tmp)
    tmp *= perf
    acc += tmp
    acc += source
    np.add(ti, acc, out=out[1:-1, 1:-1, 1:-1])


@_njit()
def _neg_stencil_masked_numba(v, wx, wy, wz, free, out):
    nx, ny, nz = v.shape
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                if free[i, j, k] == 0:
                    out[i, j, k] = 0.0
                    continue
                vc = v[i, j, k]
                acc = 0.0
                if i > 0:
                    acc += wx[i - 1, j, k] * (v[i - 1, j, k] - vc)
                if i < nx - 1:
                    acc += wx[i, j, k] * (v[i + 1, j, k] - vc)
                if j > 0:
                    acc += wy[i, j - 1, k] * (v[i, j - 1, k] - vc)
                if j < ny - 1:
                    acc += wy[i, j, k] * (v[i, j + 1, k] - vc)
                if k > 0:
                    acc += wz[i, j, k - 1] * (v[i, j, k - 1] - vc)
                if k < nz - 1:
                    acc += wz[i, j, k] * (v[i, j, k + 1] - vc)
                out[i, j, k] = -acc


def neg_stencil_masked_numpy(v, wx, wy, wz, free, out):
    out.fill(0.0)
    for axis, w in ((0, wx), (1, wy), (2, wz)):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        d = w * (v[tuple(hi)] - v[tuple(lo)])
        out[tuple(lo)] += d
        out[tuple(hi)] -= d
    np.negative(out, out=out)
    out[free == 0] = 0.0


def fdtd_step_iso(t, out, alpha, perf, t_b, source, acc, tmp):
    if HAVE_NUMBA:
        _fdtd_step_iso_numba(t, out, alpha, perf, t_b, source)
    else:
        fdtd_step_iso_numpy(t, out, alpha, perf, t_b, source, acc, tmp)


def fdtd_step_aniso(t, out, ax, ay, az, perf, t_b, source, acc, tmp):
    if HAVE_NUMBA:
        _fdtd_step_aniso_numba(t, out, ax, ay, az, perf, t_b, source)
    else:
        fdtd_step_aniso_numpy(t, out, ax, ay, az, perf, t_b, source, acc, tmp)


def neg_stencil_masked(v, wx, wy, wz, free, out):
    """out = -S(v) on free voxels and 0 on Dirichlet voxels (S = face-flux sum)."""
    if HAVE_NUMBA:
        _neg_stencil_masked_numba(v, wx, wy, wz, free, out)
    else:
        neg_stencil_masked_numpy(v, wx, wy, wz, free, out)
