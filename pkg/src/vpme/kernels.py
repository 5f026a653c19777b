"""Particle-grid hot loops: cloud-in-cell deposit/gather and the leapfrog push.

Two interchangeable backends. The numba one is used when importable unless
the environment variable VPME_NUMBA is set to "0"; the numpy one is the
fallback and the reference. Both are serial with a fixed particle order, so
same-seed runs are bitwise reproducible on either backend.

Particles outside the node box [x0, x0 + (N-1)h]^3 deposit nothing and see a
zero field; their skipped weight is returned so callers can track escaped
mass. Deposit and gather share the same trilinear weights (adjoint pair).

EDGE_TOL (in index units) absorbs the rounding of (x - x0)/h for particles
sitting exactly on the box faces; without it a node-lattice particle at +L
can land at N-1 plus one ulp and be miscounted as escaped.
"""

import os

import numpy as np

EDGE_TOL = 1e-9

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(func):
            return func

        return wrap if not (args and callable(args[0])) else args[0]


# ---------------------------------------------------------------------------
# numpy backend
# ---------------------------------------------------------------------------


def _cic_setup(pos, x0, h, nodes):
    """Cell indices and fractional offsets for in-box particles."""
    s = (pos - x0) / h
    inbox = ((s >= -EDGE_TOL) & (s <= nodes - 1.0 + EDGE_TOL)).all(axis=1)
    s = np.clip(s[inbox], 0.0, nodes - 1.0)
    idx = np.minimum(s.astype(np.int64), nodes - 2)
    frac = s - idx
    return inbox, idx, frac


def _corner_weights(frac):
    fx, fy, fz = frac[:, 0], frac[:, 1], frac[:, 2]
    gx, gy, gz = 1.0 - fx, 1.0 - fy, 1.0 - fz
    return (
        (0, 0, 0, gx * gy * gz),
        (0, 0, 1, gx * gy * fz),
        (0, 1, 0, gx * fy * gz),
        (0, 1, 1, gx * fy * fz),
        (1, 0, 0, fx * gy * gz),
        (1, 0, 1, fx * gy * fz),
        (1, 1, 0, fx * fy * gz),
        (1, 1, 1, fx * fy * fz),
    )


def np_deposit(pos, weights, x0, h, nodes, out):
    inbox, idx, frac = _cic_setup(pos, x0, h, nodes)
    w = weights[inbox]
    for dx, dy, dz, cw in _corner_weights(frac):
        np.add.at(out, (idx[:, 0] + dx, idx[:, 1] + dy, idx[:, 2] + dz), w * cw)
    return float(w.sum())


def np_deposit_vec(pos, weights, vec, x0, h, nodes, out):
    inbox, idx, frac = _cic_setup(pos, x0, h, nodes)
    w = weights[inbox]
    v = vec[inbox]
    for dx, dy, dz, cw in _corner_weights(frac):
        np.add.at(
            out,
            (idx[:, 0] + dx, idx[:, 1] + dy, idx[:, 2] + dz),
            (w * cw)[:, None] * v,
        )
    return float(w.sum())


def np_gather_vec(grid, pos, x0, h, out):
    nodes = grid.shape[0]
    inbox, idx, frac = _cic_setup(pos, x0, h, nodes)
    out[:] = 0.0
    acc = np.zeros((idx.shape[0], grid.shape[3]))
    for dx, dy, dz, cw in _corner_weights(frac):
        acc += cw[:, None] * grid[idx[:, 0] + dx, idx[:, 1] + dy, idx[:, 2] + dz]
    out[inbox] = acc
    return out


def np_push_kdk(pos, vel, fint, egrid, x0, h, dt, xmid, vmid):
    e1 = np.empty_like(vel)
    np_gather_vec(egrid, pos, x0, h, e1)
    vel += 0.5 * dt * e1
    vmid[:] = vel
    xmid[:] = pos + 0.5 * dt * vel
    pos += dt * vel
    e2 = np.empty_like(vel)
    np_gather_vec(egrid, pos, x0, h, e2)
    vel += 0.5 * dt * e2
    fint += 0.5 * dt * (
        np.sqrt((e1 * e1).sum(axis=1)) + np.sqrt((e2 * e2).sum(axis=1))
    )


# ---------------------------------------------------------------------------
# numba backend
# ---------------------------------------------------------------------------


@njit(cache=True, inline="always")
def _nb_clamp(s, top):
    if s < 0.0:
        return 0.0
    if s > top:
        return top
    return s


@njit(cache=True)
def nb_deposit(pos, weights, x0, h, nodes, out):
    inbox = 0.0
    top = nodes - 1.0
    for p in range(pos.shape[0]):
        sx = (pos[p, 0] - x0) / h
        sy = (pos[p, 1] - x0) / h
        sz = (pos[p, 2] - x0) / h
        if (
            sx < -EDGE_TOL
            or sy < -EDGE_TOL
            or sz < -EDGE_TOL
            or sx > top + EDGE_TOL
            or sy > top + EDGE_TOL
            or sz > top + EDGE_TOL
        ):
            continue
        sx = _nb_clamp(sx, top)
        sy = _nb_clamp(sy, top)
        sz = _nb_clamp(sz, top)
        ix = min(int(sx), nodes - 2)
        iy = min(int(sy), nodes - 2)
        iz = min(int(sz), nodes - 2)
        fx = sx - ix
        fy = sy - iy
        fz = sz - iz
        w = weights[p]
        inbox += w
        out[ix, iy, iz] += w * (1 - fx) * (1 - fy) * (1 - fz)
        out[ix, iy, iz + 1] += w * (1 - fx) * (1 - fy) * fz
        out[ix, iy + 1, iz] += w * (1 - fx) * fy * (1 - fz)
        out[ix, iy + 1, iz + 1] += w * (1 - fx) * fy * fz
        out[ix + 1, iy, iz] += w * fx * (1 - fy) * (1 - fz)
        out[ix + 1, iy, iz + 1] += w * fx * (1 - fy) * fz
        out[ix + 1, iy + 1, iz] += w * fx * fy * (1 - fz)
        out[ix + 1, iy + 1, iz + 1] += w * fx * fy * fz
    return inbox


@njit(cache=True)
def nb_deposit_vec(pos, weights, vec, x0, h, nodes, out):
    inbox = 0.0
    top = nodes - 1.0
    for p in range(pos.shape[0]):
        sx = (pos[p, 0] - x0) / h
        sy = (pos[p, 1] - x0) / h
        sz = (pos[p, 2] - x0) / h
        if (
            sx < -EDGE_TOL
            or sy < -EDGE_TOL
            or sz < -EDGE_TOL
            or sx > top + EDGE_TOL
            or sy > top + EDGE_TOL
            or sz > top + EDGE_TOL
        ):
            continue
        sx = _nb_clamp(sx, top)
        sy = _nb_clamp(sy, top)
        sz = _nb_clamp(sz, top)
        ix = min(int(sx), nodes - 2)
        iy = min(int(sy), nodes - 2)
        iz = min(int(sz), nodes - 2)
        fx = sx - ix
        fy = sy - iy
        fz = sz - iz
        w = weights[p]
        inbox += w
        for c in range(vec.shape[1]):
            q = w * vec[p, c]
            out[ix, iy, iz, c] += q * (1 - fx) * (1 - fy) * (1 - fz)
            out[ix, iy, iz + 1, c] += q * (1 - fx) * (1 - fy) * fz
            out[ix, iy + 1, iz, c] += q * (1 - fx) * fy * (1 - fz)
            out[ix, iy + 1, iz + 1, c] += q * (1 - fx) * fy * fz
            out[ix + 1, iy, iz, c] += q * fx * (1 - fy) * (1 - fz)
            out[ix + 1, iy, iz + 1, c] += q * fx * (1 - fy) * fz
            out[ix + 1, iy + 1, iz, c] += q * fx * fy * (1 - fz)
            out[ix + 1, iy + 1, iz + 1, c] += q * fx * fy * fz
    return inbox


@njit(cache=True, inline="always")
def _nb_gather_one(grid, x, y, z, x0, h, nodes, out, p):
    top = nodes - 1.0
    sx = (x - x0) / h
    sy = (y - x0) / h
    sz = (z - x0) / h
    if (
        sx < -EDGE_TOL
        or sy < -EDGE_TOL
        or sz < -EDGE_TOL
        or sx > top + EDGE_TOL
        or sy > top + EDGE_TOL
        or sz > top + EDGE_TOL
    ):
        for c in range(out.shape[1]):
            out[p, c] = 0.0
        return
    sx = _nb_clamp(sx, top)
    sy = _nb_clamp(sy, top)
    sz = _nb_clamp(sz, top)
    ix = min(int(sx), nodes - 2)
    iy = min(int(sy), nodes - 2)
    iz = min(int(sz), nodes - 2)
    fx = sx - ix
    fy = sy - iy
    fz = sz - iz
    for c in range(out.shape[1]):
        out[p, c] = (
            grid[ix, iy, iz, c] * (1 - fx) * (1 - fy) * (1 - fz)
            + grid[ix, iy, iz + 1, c] * (1 - fx) * (1 - fy) * fz
            + grid[ix, iy + 1, iz, c] * (1 - fx) * fy * (1 - fz)
            + grid[ix, iy + 1, iz + 1, c] * (1 - fx) * fy * fz
            + grid[ix + 1, iy, iz, c] * fx * (1 - fy) * (1 - fz)
            + grid[ix + 1, iy, iz + 1, c] * fx * (1 - fy) * fz
            + grid[ix + 1, iy + 1, iz, c] * fx * fy * (1 - fz)
            + grid[ix + 1, iy + 1, iz + 1, c] * fx * fy * fz
        )


@njit(cache=True)
def nb_gather_vec(grid, pos, x0, h, out):
    nodes = grid.shape[0]
    for p in range(pos.shape[0]):
        _nb_gather_one(grid, pos[p, 0], pos[p, 1], pos[p, 2], x0, h, nodes, out, p)
    return out


@njit(cache=True)
def nb_push_kdk(pos, vel, fint, egrid, x0, h, dt, xmid, vmid):
    nodes = egrid.shape[0]
    e = np.empty((1, 3))
    for p in range(pos.shape[0]):
        _nb_gather_one(egrid, pos[p, 0], pos[p, 1], pos[p, 2], x0, h, nodes, e, 0)
        a1 = np.sqrt(e[0, 0] ** 2 + e[0, 1] ** 2 + e[0, 2] ** 2)
        for c in range(3):
            vel[p, c] += 0.5 * dt * e[0, c]
            vmid[p, c] = vel[p, c]
            xmid[p, c] = pos[p, c] + 0.5 * dt * vel[p, c]
            pos[p, c] += dt * vel[p, c]
        _nb_gather_one(egrid, pos[p, 0], pos[p, 1], pos[p, 2], x0, h, nodes, e, 0)
        a2 = np.sqrt(e[0, 0] ** 2 + e[0, 1] ** 2 + e[0, 2] ** 2)
        for c in range(3):
            vel[p, c] += 0.5 * dt * e[0, c]
        fint[p] += 0.5 * dt * (a1 + a2)


# ---------------------------------------------------------------------------
# backend selection
# ---------------------------------------------------------------------------

USE_NUMBA = HAVE_NUMBA and os.environ.get("VPME_NUMBA", "1") != "0"

if USE_NUMBA:
    deposit = nb_deposit
    deposit_vec = nb_deposit_vec
    gather_vec = nb_gather_vec
    push_kdk = nb_push_kdk
    BACKEND = "numba"
else:
    deposit = np_deposit
    deposit_vec = np_deposit_vec
    gather_vec = np_gather_vec
    push_kdk = np_push_kdk
    BACKEND = "numpy"
