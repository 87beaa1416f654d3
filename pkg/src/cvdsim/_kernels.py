"""numba kernels behind the diffusion engine.

Time is tracked as integer step indices; callers convert to seconds.
Crossing modes: 0 = endpoint test, 1 = segment/sphere intersection,
2 = Brownian-bridge crossing probability.
"""

import math

import numba as nb
import numpy as np

from .rng import normal_block, uniform_block

ENDPOINT = 0
SEGMENT = 1
BRIDGE = 2

FREE = 0
ABSORBED = 1
RESAMPLE = 2

_SQRT3 = math.sqrt(3.0)


@nb.njit(inline="always", cache=True)
def _dist(x, y, z, c):
    dx = x - c[0]
    dy = y - c[1]
    dz = z - c[2]
    return math.sqrt(dx * dx + dy * dy + dz * dz)


@nb.njit(inline="always", cache=True)
def _segment_hits(x, y, z, nx, ny, nz, c, r):
    # closest point of segment p->n to the sphere center
    ux = nx - x
    uy = ny - y
    uz = nz - z
    L2 = ux * ux + uy * uy + uz * uz
    if L2 == 0.0:
        return _dist(x, y, z, c) <= r
    s = ((c[0] - x) * ux + (c[1] - y) * uy + (c[2] - z) * uz) / L2
    s = min(1.0, max(0.0, s))
    return _dist(x + s * ux, y + s * uy, z + s * uz, c) <= r


@nb.njit(inline="always", cache=True)
def _resolve(x, y, z, nx, ny, nz, var, tc, r_tn, rc, r_eff, mode, u):
    """Apply absorption (first) then transmitter reflection to one proposed move."""
    dr = _dist(nx, ny, nz, rc)
    if dr <= r_eff:
        return ABSORBED, nx, ny, nz
    if mode == SEGMENT:
        if _segment_hits(x, y, z, nx, ny, nz, rc, r_eff):
            return ABSORBED, nx, ny, nz
    elif mode == BRIDGE:
        da = _dist(x, y, z, rc) - r_eff
        db = dr - r_eff
        if u < math.exp(-2.0 * da * db / var):
            return ABSORBED, nx, ny, nz
    rt = _dist(nx, ny, nz, tc)
    if rt < r_tn:
        if rt == 0.0:
            return RESAMPLE, x, y, z
        s = (2.0 * r_tn - rt) / rt
        nx = tc[0] + (nx - tc[0]) * s
        ny = tc[1] + (ny - tc[1]) * s
        nz = tc[2] + (nz - tc[2]) * s
        if _dist(nx, ny, nz, rc) <= r_eff:
            return ABSORBED, nx, ny, nz
    return FREE, nx, ny, nz


@nb.njit(nogil=True, cache=True)
def track_range(lo, hi, seed, ids, start, emit_step, last_step, tc, r_tn, rc, r_eff,
                var, mode, leap_sigma, kill_distance, out_hit):
    """Track particles ``lo..hi-1`` from emission to absorption or ``last_step``.

    ``out_hit[i]`` receives the absorbing step index, or -1 if still free.
    Far from both spheres a particle may take a k-step leap (variance k * var)
    when the chance of its continuous path reaching either sphere within the
    leap is below 12 * Q(leap_sigma).
    """
    k0 = np.uint64(seed)
    nbuf = np.empty(4)
    ubuf = np.empty(4)
    for i in range(lo, hi):
        k1 = np.uint64(ids[i])
        nc = 0
        uc = 0
        nblk = -1
        ublk = -1
        x = start[i, 0]
        y = start[i, 1]
        z = start[i, 2]
        step = emit_step[i]
        hit = -1
        while step < last_step:
            dr = _dist(x, y, z, rc)
            if kill_distance > 0.0 and dr > kill_distance:
                break
            k = 1
            if leap_sigma > 0.0:
                rho = min(dr - r_eff, _dist(x, y, z, tc) - r_tn)
                a = rho / (leap_sigma * _SQRT3)
                kk = a * a / var
                if kk >= 2.0:
                    k = int(min(kk, 4.0e18))
            if k > last_step - step:
                k = last_step - step
            v = var * k
            sd = math.sqrt(v)
            while True:
                b = nc >> 2
                if b != nblk:
                    normal_block(k0, k1, b, nbuf)
                    nblk = b
                g0 = nbuf[nc & 3]
                nc += 1
                b = nc >> 2
                if b != nblk:
                    normal_block(k0, k1, b, nbuf)
                    nblk = b
                g1 = nbuf[nc & 3]
                nc += 1
                b = nc >> 2
                if b != nblk:
                    normal_block(k0, k1, b, nbuf)
                    nblk = b
                g2 = nbuf[nc & 3]
                nc += 1
                u = 1.0
                if mode == BRIDGE:
                    b = uc >> 2
                    if b != ublk:
                        uniform_block(k0, k1, b, ubuf)
                        ublk = b
                    u = ubuf[uc & 3]
                    uc += 1
                status, nx, ny, nz = _resolve(x, y, z, x + sd * g0, y + sd * g1, z + sd * g2,
                                              v, tc, r_tn, rc, r_eff, mode, u)
                if status != RESAMPLE:
                    break
            step += k
            if status == ABSORBED:
                hit = step
                break
            x = nx
            y = ny
            z = nz
        out_hit[i] = hit


@nb.njit(cache=True)
def advance_once(seed, ids, pos, absorbed, hit_step, ncount, ucount, step_now,
                 tc, r_tn, rc, r_eff, var, mode):
    """One un-leaped step for every free particle; returns the number of new hits.

    Returns -1 - i if particle i starts strictly inside a sphere.
    """
    k0 = np.uint64(seed)
    nbuf = np.empty(4)
    ubuf = np.empty(4)
    sd = math.sqrt(var)
    new_hits = 0
    for i in range(ids.shape[0]):
        if absorbed[i]:
            continue
        x = pos[i, 0]
        y = pos[i, 1]
        z = pos[i, 2]
        if _dist(x, y, z, rc) < r_eff or _dist(x, y, z, tc) < r_tn:
            return -1 - i
        k1 = np.uint64(ids[i])
        nc = ncount[i]
        uc = ucount[i]
        while True:
            g = np.empty(3)
            for q in range(3):
                normal_block(k0, k1, nc >> 2, nbuf)
                g[q] = nbuf[nc & 3]
                nc += 1
            u = 1.0
            if mode == BRIDGE:
                uniform_block(k0, k1, uc >> 2, ubuf)
                u = ubuf[uc & 3]
                uc += 1
            status, nx, ny, nz = _resolve(x, y, z, x + sd * g[0], y + sd * g[1], z + sd * g[2],
                                          var, tc, r_tn, rc, r_eff, mode, u)
            if status != RESAMPLE:
                break
        ncount[i] = nc
        ucount[i] = uc
        pos[i, 0] = nx
        pos[i, 1] = ny
        pos[i, 2] = nz
        if status == ABSORBED:
            absorbed[i] = True
            hit_step[i] = step_now + 1
            new_hits += 1
    return new_hits


@nb.njit(nogil=True, cache=True)
def walk_1d_range(lo, hi, seed, id_offset, r0, var, last_step, mode, leap_sigma, out_hit):
    """1-D walkers from x = r0 toward a point absorber at x = 0."""
    k0 = np.uint64(seed)
    nbuf = np.empty(4)
    ubuf = np.empty(4)
    for i in range(lo, hi):
        k1 = np.uint64(id_offset + i)
        nc = 0
        uc = 0
        nblk = -1
        ublk = -1
        x = r0
        step = 0
        hit = -1
        while step < last_step:
            k = 1
            if leap_sigma > 0.0:
                a = x / leap_sigma
                kk = a * a / var
                if kk >= 2.0:
                    k = int(min(kk, 4.0e18))
            if k > last_step - step:
                k = last_step - step
            v = var * k
            b = nc >> 2
            if b != nblk:
                normal_block(k0, k1, b, nbuf)
                nblk = b
            nx = x + math.sqrt(v) * nbuf[nc & 3]
            nc += 1
            step += k
            if nx <= 0.0:
                hit = step
                break
            if mode == BRIDGE:
                b = uc >> 2
                if b != ublk:
                    uniform_block(k0, k1, b, ubuf)
                    ublk = b
                u = ubuf[uc & 3]
                uc += 1
                if u < math.exp(-2.0 * x * nx / v):
                    hit = step
                    break
            x = nx
        out_hit[i] = hit
