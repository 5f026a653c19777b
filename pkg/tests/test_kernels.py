"""Deposit/gather/push kernels: backend agreement and transfer identities."""

import numpy as np
import pytest

from vpme import kernels

RNG = np.random.default_rng(42)
L, NODES = 2.0, 12
H = 2.0 * L / (NODES - 1)
X0 = -L


def _cloud(n, spread=1.8):
    pos = RNG.uniform(-spread, spread, (n, 3))
    w = RNG.uniform(0.1, 2.0, n)
    vec = RNG.standard_normal((n, 3))
    return pos, w, vec


def _both_backends():
    pairs = [
        ("numpy", kernels.np_deposit, kernels.np_deposit_vec, kernels.np_gather_vec, kernels.np_push_kdk)
    ]
    if kernels.HAVE_NUMBA:
        pairs.append(
            ("numba", kernels.nb_deposit, kernels.nb_deposit_vec, kernels.nb_gather_vec, kernels.nb_push_kdk)
        )
    return pairs


def test_deposit_conserves_inbox_mass():
    pos, w, _ = _cloud(500)
    pos[:20] += 10.0  # park some particles far outside
    for name, dep, _, _, _ in _both_backends():
        out = np.zeros((NODES,) * 3)
        inbox = dep(pos, w, X0, H, NODES, out)
        expect = w[(np.abs(pos) <= L).all(axis=1)].sum()
        assert abs(inbox - expect) < 1e-12, name
        assert abs(out.sum() - inbox) < 1e-12, name


def test_deposit_partition_of_unity():
    # a single particle's eight corner weights sum to its weight
    pos = np.array([[0.137, -0.528, 1.002]])
    w = np.array([0.7])
    for name, dep, _, _, _ in _both_backends():
        out = np.zeros((NODES,) * 3)
        dep(pos, w, X0, H, NODES, out)
        assert abs(out.sum() - 0.7) < 1e-15, name
        assert (out >= 0.0).all(), name
        assert np.count_nonzero(out) <= 8, name


def test_deposit_particle_on_node_hits_one_node():
    pos = np.array([[X0 + 3 * H, X0 + 5 * H, X0 + 2 * H]])
    w = np.array([1.25])
    for name, dep, _, _, _ in _both_backends():
        out = np.zeros((NODES,) * 3)
        dep(pos, w, X0, H, NODES, out)
        assert out[3, 5, 2] == pytest.approx(1.25, abs=1e-14), name
        assert np.count_nonzero(np.abs(out) > 1e-14) == 1, name


def test_edge_particles_are_kept():
    # particles exactly on the box faces and corners must not be miscounted
    # as escaped by the rounding of (x - x0)/h
    corners = np.array(
        [
            [L, L, L],
            [-L, -L, -L],
            [L, -L, L],
            [X0 + 11 * H, 0.0, 0.0],
        ]
    )
    w = np.ones(len(corners))
    for name, dep, _, _, _ in _both_backends():
        out = np.zeros((NODES,) * 3)
        inbox = dep(corners, w, X0, H, NODES, out)
        assert inbox == pytest.approx(len(corners), abs=1e-12), name
        assert out.sum() == pytest.approx(len(corners), abs=1e-12), name


def test_gather_zero_outside_box():
    grid = RNG.standard_normal((NODES, NODES, NODES, 3))
    pos = np.array([[L + 0.5, 0.0, 0.0], [0.0, -L - 1e-6, 0.0]])
    for name, _, _, gather, _ in _both_backends():
        out = np.empty((2, 3))
        gather(grid, pos, X0, H, out)
        assert (out == 0.0).all(), name


def test_gather_matches_trilinear_by_hand():
    grid = RNG.standard_normal((NODES, NODES, NODES, 3))
    pos = np.array([[0.3, -0.7, 1.1]])
    s = (pos[0] - X0) / H
    i = s.astype(int)
    f = s - i
    expect = np.zeros(3)
    for dx in (0, 1):
        for dy in (0, 1):
            for dz in (0, 1):
                cw = (f[0] if dx else 1 - f[0]) * (f[1] if dy else 1 - f[1]) * (f[2] if dz else 1 - f[2])
                expect += cw * grid[i[0] + dx, i[1] + dy, i[2] + dz]
    for name, _, _, gather, _ in _both_backends():
        out = np.empty((1, 3))
        gather(grid, pos, X0, H, out)
        assert np.allclose(out[0], expect, atol=1e-14), name


def test_deposit_gather_adjoint():
    # sum_nodes deposit(w)[n] * F[n] == sum_particles w_p * gather(F)[p]
    pos, w, _ = _cloud(400)
    grid = RNG.standard_normal((NODES, NODES, NODES, 3))
    for name, dep, _, gather, _ in _both_backends():
        rho = np.zeros((NODES,) * 3)
        dep(pos, w, X0, H, NODES, rho)
        gathered = np.empty_like(pos)
        gather(grid, pos, X0, H, gathered)
        lhs = float((rho[..., None] * grid).sum(axis=(0, 1, 2))[0])
        rhs = float((w[:, None] * gathered).sum(axis=0)[0])
        assert abs(lhs - rhs) < 1e-10 * max(1.0, abs(lhs)), name


def test_backends_agree_bitwise_scalar_deposit():
    if not kernels.HAVE_NUMBA:
        pytest.skip("numba unavailable")
    pos, w, vec = _cloud(1000)
    a = np.zeros((NODES,) * 3)
    b = np.zeros((NODES,) * 3)
    kernels.np_deposit(pos, w, X0, H, NODES, a)
    kernels.nb_deposit(pos, w, X0, H, NODES, b)
    assert np.allclose(a, b, rtol=0.0, atol=1e-14)
    av = np.zeros((NODES,) * 3 + (3,))
    bv = np.zeros((NODES,) * 3 + (3,))
    kernels.np_deposit_vec(pos, w, vec, X0, H, NODES, av)
    kernels.nb_deposit_vec(pos, w, vec, X0, H, NODES, bv)
    assert np.allclose(av, bv, rtol=0.0, atol=1e-14)


def test_backends_agree_on_push():
    if not kernels.HAVE_NUMBA:
        pytest.skip("numba unavailable")
    pos, w, _ = _cloud(300)
    vel = RNG.standard_normal((300, 3))
    egrid = RNG.standard_normal((NODES, NODES, NODES, 3))
    state = {}
    for name, _, _, _, push in _both_backends():
        p = pos.copy()
        v = vel.copy()
        fint = np.zeros(300)
        xm = np.empty_like(p)
        vm = np.empty_like(v)
        push(p, v, fint, egrid, X0, H, 0.01, xm, vm)
        state[name] = (p, v, fint, xm, vm)
    for a, b in zip(state["numpy"], state["numba"]):
        assert np.allclose(a, b, rtol=0.0, atol=1e-13)


def test_push_semantics_single_particle():
    # one kick-drift-kick against a hand-stepped reference
    egrid = RNG.standard_normal((NODES, NODES, NODES, 3))
    pos = np.array([[0.2, 0.1, -0.4]])
    vel = np.array([[0.5, -0.2, 0.3]])
    dt = 0.02

    def gathered(at):
        out = np.empty((1, 3))
        kernels.np_gather_vec(egrid, at, X0, H, out)
        return out[0]

    e1 = gathered(pos)
    v_half = vel[0] + 0.5 * dt * e1
    x1 = pos[0] + dt * v_half
    e2 = gathered(x1[None, :])
    v1 = v_half + 0.5 * dt * e2
    fint_expect = 0.5 * dt * (np.linalg.norm(e1) + np.linalg.norm(e2))

    p = pos.copy()
    v = vel.copy()
    fint = np.zeros(1)
    xm = np.empty_like(p)
    vm = np.empty_like(v)
    kernels.push_kdk(p, v, fint, egrid, X0, H, dt, xm, vm)
    assert np.allclose(p[0], x1, atol=1e-15)
    assert np.allclose(v[0], v1, atol=1e-15)
    assert np.allclose(vm[0], v_half, atol=1e-15)
    assert np.allclose(xm[0], pos[0] + 0.5 * dt * v_half, atol=1e-15)
    assert fint[0] == pytest.approx(fint_expect, abs=1e-15)


def test_push_repeat_is_bitwise_deterministic():
    pos, _, _ = _cloud(200)
    vel = RNG.standard_normal((200, 3))
    egrid = RNG.standard_normal((NODES, NODES, NODES, 3))
    results = []
    for _ in range(2):
        p = pos.copy()
        v = vel.copy()
        fint = np.zeros(200)
        xm = np.empty_like(p)
        vm = np.empty_like(v)
        for _ in range(5):
            kernels.push_kdk(p, v, fint, egrid, X0, H, 0.01, xm, vm)
        results.append((p.copy(), v.copy(), fint.copy()))
    for a, b in zip(*results):
        assert (a == b).all()
