"""Electrostatic field solve on the truncated box.

The potential is split as U = Ubar + Uhat:

  -eps^2 Lap Ubar = rho            (ion part, linear)
   eps^2 Lap Uhat = g exp(Ubar + Uhat)   (electron part, nonlinear, Uhat < 0)

Both pieces use the 7-point Laplacian with Dirichlet data closed by a
monopole tail: +M/(4 pi eps^2 r) for the ion part and -mhat/(4 pi eps^2 r)
for the electron part, where M and mhat are the respective source masses and
r is the distance to the source centroid. mhat and the centroid are lagged
one outer iteration.

The linear solve is a type-1 DST diagonalization (exact for this stencil,
defect-corrected if rounding ever leaves a residual above contract). The
nonlinear solve is damped Newton; the Jacobian solve is conjugate gradients
on -eps^2 Lap + diag(w), w = g exp(U) >= 0, preconditioned by the exact DST
inverse of -eps^2 Lap + mean(w).

Newton iterates to an internal target well below the 1e-10 contract residual
so that the summed interior residual (which is exactly the Gauss-identity
defect) stays below the 1e-8 * mass audit gate.
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.fft import dstn

from .mesh import ScalarField, VectorField, gradient

CONTRACT_RTOL = 1e-10
NEWTON_TARGET_RTOL = 1e-13
# inexact-Newton forcing term: each step cuts the residual by about this
# factor, so 1e-13 targets are reached in a few steps either way
NEWTON_CG_RTOL = 1e-4
UHAT_POSITIVE_TOL = 1e-8
GAUSS_GATE = 1e-8
COLD_START_EPS = 0.2
MASS_RTOL = 1e-12
MAX_NEWTON = 200
MAX_OUTER = 40
MAX_CG = 500
_MASS_LOG_STEP = math.log(16.0)


class FieldSolveError(RuntimeError):
    """Raised when a field solve cannot reach its residual contract."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


@dataclass
class UhatResult:
    field: ScalarField
    iterations: int
    residual: float
    history: list = field(default_factory=list)
    cg_iterations: int = 0


@dataclass
class FieldSolution:
    u: ScalarField
    ubar: ScalarField
    uhat: ScalarField
    e: VectorField
    ebar: VectorField
    ehat: VectorField
    epsilon: float
    newton_iterations: int
    residual_inf: float
    gauss_imbalance: float
    newton_history: list = field(default_factory=list)
    cg_iterations: int = 0


# ---------------------------------------------------------------------------
# DST-I diagonalization of the Dirichlet Laplacian
# ---------------------------------------------------------------------------

_EIG_CACHE = {}


def _neg_lap_eigs(m, h):
    """Eigenvalues of -Lap_h (zero Dirichlet) on the m^3 interior lattice."""
    key = (m, h)
    out = _EIG_CACHE.get(key)
    if out is None:
        k = np.arange(1, m + 1)
        lam = (4.0 / h**2) * np.sin(0.5 * math.pi * k / (m + 1)) ** 2
        out = lam[:, None, None] + lam[None, :, None] + lam[None, None, :]
        _EIG_CACHE[key] = out
    return out


def _dst3(x):
    return dstn(x, type=1, norm="ortho")


def _shifted_lap_solve(rhs, h, eps2, shift):
    """Exact solve of (-eps2 Lap_h + shift) x = rhs, zero Dirichlet."""
    lam = eps2 * _neg_lap_eigs(rhs.shape[0], h) + shift
    return _dst3(_dst3(rhs) / lam)


def _lap_interior(u, h):
    """7-point Laplacian of a full-grid array, evaluated on the interior."""
    c = u[1:-1, 1:-1, 1:-1]
    return (
        u[2:, 1:-1, 1:-1]
        + u[:-2, 1:-1, 1:-1]
        + u[1:-1, 2:, 1:-1]
        + u[1:-1, :-2, 1:-1]
        + u[1:-1, 1:-1, 2:]
        + u[1:-1, 1:-1, :-2]
        - 6.0 * c
    ) / h**2


def _lap_zero_dirichlet(x, h):
    full = np.zeros((x.shape[0] + 2,) * 3)
    full[1:-1, 1:-1, 1:-1] = x
    return _lap_interior(full, h)


def _fold_boundary(rhs, bc, h):
    """Move known Dirichlet neighbors of Lap_h onto the interior RHS."""
    b = bc / h**2
    rhs[0] -= b[0, 1:-1, 1:-1]
    rhs[-1] -= b[-1, 1:-1, 1:-1]
    rhs[:, 0] -= b[1:-1, 0, 1:-1]
    rhs[:, -1] -= b[1:-1, -1, 1:-1]
    rhs[:, :, 0] -= b[1:-1, 1:-1, 0]
    rhs[:, :, -1] -= b[1:-1, 1:-1, -1]
    return rhs


@lru_cache(maxsize=8)
def _node_coords(grid):
    return grid.node_coords()


_FACES = (
    np.s_[0, :, :],
    np.s_[-1, :, :],
    np.s_[:, 0, :],
    np.s_[:, -1, :],
    np.s_[:, :, 0],
    np.s_[:, :, -1],
)


def _monopole_values(grid, charge, center, eps2):
    """charge/(4 pi eps2 r) on the boundary faces (interior left zero)."""
    coords = _node_coords(grid)
    out = np.zeros((grid.nodes,) * 3)
    c = np.asarray(center)
    for face in _FACES:
        r = np.linalg.norm(coords[face] - c, axis=-1)
        np.maximum(r, 0.5 * grid.spacing, out=r)
        out[face] = charge / (4.0 * math.pi * eps2 * r)
    return out


def _centroid(values, grid):
    total = float(values.sum())
    if total <= 0.0:
        return np.zeros(3)
    coords = _node_coords(grid)
    return (values[..., None] * coords).reshape(-1, 3).sum(axis=0) / total


def _assemble(grid, interior, bc):
    full = bc.copy()
    full[1:-1, 1:-1, 1:-1] = interior
    return full


# ---------------------------------------------------------------------------
# preconditioned conjugate gradients
# ---------------------------------------------------------------------------


def _pcg(apply_a, apply_minv, b, rtol, maxiter=MAX_CG):
    x = np.zeros_like(b)
    norm_b = math.sqrt(float(np.vdot(b, b)))
    if norm_b == 0.0:
        return x, 0
    r = b.copy()
    z = apply_minv(r)
    p = z.copy()
    rz = float(np.vdot(r, z))
    for it in range(1, maxiter + 1):
        ap = apply_a(p)
        alpha = rz / float(np.vdot(p, ap))
        x += alpha * p
        r -= alpha * ap
        if math.sqrt(float(np.vdot(r, r))) <= rtol * norm_b:
            return x, it
        z = apply_minv(r)
        rz_next = float(np.vdot(r, z))
        p = z + (rz_next / rz) * p
        rz = rz_next
    raise FieldSolveError(
        f"inner conjugate-gradient solve did not reach rtol {rtol} in {maxiter} iterations",
        residual=math.sqrt(float(np.vdot(r, r))) / norm_b,
    )


# ---------------------------------------------------------------------------
# ion potential (linear)
# ---------------------------------------------------------------------------


def _check_epsilon(epsilon):
    if not (epsilon > 0.0 and math.isfinite(epsilon)):
        raise ValueError(f"epsilon must be positive and finite, got {epsilon}")


def solve_ubar(rho, epsilon):
    """Solve -eps^2 Lap Ubar = rho with the monopole Dirichlet closure."""
    _check_epsilon(epsilon)
    grid = rho.grid
    h = grid.spacing
    eps2 = epsilon**2
    mass = float(rho.values.sum()) * grid.cell_volume
    center = _centroid(rho.values, grid)
    bc = _monopole_values(grid, mass, center, eps2)
    rhs = -rho.values[1:-1, 1:-1, 1:-1] / eps2
    _fold_boundary(rhs, bc, h)
    interior = -_dst3(_dst3(rhs) / _neg_lap_eigs(rhs.shape[0], h))
    u = _assemble(grid, interior, bc)

    scale = max(math.sqrt(float(np.vdot(rho.values, rho.values))), 1e-300)

    def _rel_defect():
        defect = eps2 * _lap_interior(u, h) + rho.values[1:-1, 1:-1, 1:-1]
        return defect, math.sqrt(float(np.vdot(defect, defect))) / scale

    defect, rel = _rel_defect()
    for _ in range(2):
        if rel <= CONTRACT_RTOL:
            return ScalarField(grid, u)
        u[1:-1, 1:-1, 1:-1] += _dst3(_dst3(defect) / (eps2 * _neg_lap_eigs(defect.shape[0], h)))
        defect, rel = _rel_defect()
    if rel <= CONTRACT_RTOL:
        return ScalarField(grid, u)
    raise FieldSolveError(
        f"ion potential solve stalled at relative residual {rel:.3e}", residual=rel
    )


# ---------------------------------------------------------------------------
# electron potential (nonlinear)
# ---------------------------------------------------------------------------


def _quasi_neutral_guess(ubar, g, eps2, h):
    """Screening-limit start: Uhat ~ log(rho/g) - Ubar, clamped nonpositive.

    rho is recovered exactly from the discrete operator (eps^2 Lap Ubar =
    -rho on the interior), so the guess has residual eps^2 Lap log(rho/g),
    which vanishes with eps; a zero start would instead face sources of
    order exp(Ubar) ~ exp(1/eps^2).
    """
    rho = np.zeros_like(ubar.values)
    rho[1:-1, 1:-1, 1:-1] = np.clip(-eps2 * _lap_interior(ubar.values, h), 0.0, None)
    # additive floor keeps the log smooth where the recovered density
    # underflows or goes slightly negative in the far field
    delta = 1e-3 * max(float(rho.max()), 1e-300)
    ratio = (rho + delta) / (g.values + delta)
    return np.minimum(0.0, np.log(ratio) - ubar.values)


def solve_uhat(ubar, g, epsilon, initial=None):
    """Damped-Newton solve of eps^2 Lap Uhat = g exp(Ubar + Uhat).

    ``initial`` warm-starts the iteration (full-grid array or ScalarField).
    Cold starts below eps = 0.2 begin from the quasi-neutral screening
    guess instead of zero.

    The monopole boundary row depends on the electron mass, which depends
    on the solution, so the scalar mass is iterated outside the Newton
    loop.  Plain lagging has feedback gain of order 1/eps^2 and two-cycles
    in the screened regime; the mass response is strictly decreasing and
    roughly exponential in the boundary mass, so the update is a bracketed
    secant in log coordinates with a capped step.
    """
    _check_epsilon(epsilon)
    grid = ubar.grid
    h = grid.spacing
    eps2 = epsilon**2
    vol = grid.cell_volume

    if initial is None and epsilon < COLD_START_EPS:
        initial = _quasi_neutral_guess(ubar, g, eps2, h)
    if initial is None:
        uh = np.zeros((grid.nodes,) * 3)
    else:
        uh = np.array(initial.values if isinstance(initial, ScalarField) else initial)

    ubv = ubar.values
    history = []
    cg_total = 0
    accepted = 0

    # the exponent is evaluated as one sum: Ubar and Uhat cancel to O(1) in
    # the screened bulk while each alone overflows exp at small eps
    def _src_of(u):
        with np.errstate(over="ignore"):
            out = g.values * np.exp(ubv + u)
        if not np.isfinite(out).all():
            raise FieldSolveError(
                "electron density overflowed during Newton iteration; "
                "retry from a warm start near the solution",
                residual=history[-1] if history else None,
            )
        return out

    src = _src_of(uh)
    contract_tol = CONTRACT_RTOL * max(1.0, float(src.max()))
    # the electron mass uses the same all-nodes sum as the ion mass so the
    # two monopole closures cancel exactly at neutrality
    mu = float(src.sum()) * vol
    # the solved field is nonpositive, so the unscreened integral caps the
    # electron mass rigorously; the cap goes inactive if exp overflows
    with np.errstate(over="ignore"):
        unscreened = float((g.values * np.exp(ubv)).sum()) * vol
    mu_cap = unscreened if math.isfinite(unscreened) else math.inf
    mu = min(mu, mu_cap)
    lo = hi = None  # (log mu, log mhat - log mu) bracket around the fixed point
    prev = None
    side = 0
    res = math.inf
    gap = math.inf

    for _ in range(MAX_OUTER):
        bc = _monopole_values(grid, -mu, _centroid(src, grid), eps2)
        _set_boundary(uh, bc)

        # interior Newton with the boundary row frozen
        spent = False
        prev_res = math.inf
        while True:
            f = eps2 * _lap_interior(uh, h) - src[1:-1, 1:-1, 1:-1]
            res = float(np.abs(f).max())
            history.append(res)
            target = NEWTON_TARGET_RTOL * max(1.0, float(src.max()))
            at_floor = res >= 0.5 * prev_res and res <= 100.0 * target
            if res <= target or at_floor:
                break
            if accepted >= MAX_NEWTON:
                spent = True
                break
            prev_res = res

            w = src[1:-1, 1:-1, 1:-1]
            shift = float(w.mean())
            delta, iters = _pcg(
                lambda x: -eps2 * _lap_zero_dirichlet(x, h) + w * x,
                lambda r: _shifted_lap_solve(r, h, eps2, shift),
                f,
                NEWTON_CG_RTOL,
            )
            cg_total += iters

            alpha = 1.0
            stuck = False
            while True:
                trial = uh.copy()
                trial[1:-1, 1:-1, 1:-1] += alpha * delta
                with np.errstate(over="ignore"):
                    trial_src = g.values * np.exp(ubv + trial)
                f_trial = eps2 * _lap_interior(trial, h) - trial_src[1:-1, 1:-1, 1:-1]
                res_trial = float(np.abs(f_trial).max()) if np.isfinite(f_trial).all() else math.inf
                if res_trial < res:
                    uh = trial
                    accepted += 1
                    break
                alpha *= 0.5
                if alpha < 2.0**-30:
                    if res > contract_tol:
                        raise FieldSolveError(
                            f"electron Newton line search stagnated at residual {res:.3e}; "
                            "retry from a warm start near the solution",
                            residual=res,
                        )
                    # roundoff floor for this boundary row; the outer mass
                    # update decides whether it is the converged state
                    stuck = True
                    break
            if stuck:
                break
            src = _src_of(uh)

        mhat = float(src.sum()) * vol
        gap = mhat - mu
        if abs(gap) <= MASS_RTOL * max(1.0, mhat):
            return _finish_uhat(grid, uh, accepted, res, history, cg_total)
        if spent:
            raise FieldSolveError(
                f"electron Newton did not converge in {MAX_NEWTON} iterations "
                f"(residual {res:.3e}); retry from a warm start near the solution",
                residual=res,
            )
        lmu = math.log(max(mu, 1e-300))
        err = math.log(max(mhat, 1e-300)) - lmu
        # Illinois rule: a repeated side halves the stale endpoint so the
        # bracket fallback cannot creep one-sided on a convex response
        if err > 0.0:
            if side > 0 and hi is not None:
                hi = (hi[0], 0.5 * hi[1])
            lo = (lmu, err)
            side = 1
        else:
            if side < 0 and lo is not None:
                lo = (lo[0], 0.5 * lo[1])
            hi = (lmu, err)
            side = -1
        # secant through the last two samples converges superlinearly from
        # warm starts; the bracket, once closed, safeguards the step
        lnext = None
        if prev is not None and err != prev[1]:
            lnext = lmu - err * (lmu - prev[0]) / (err - prev[1])
        if lo is not None and hi is not None:
            span = hi[0] - lo[0]
            inside = lnext is not None and (
                lo[0] + 0.01 * span <= lnext <= hi[0] - 0.01 * span
            )
            if not inside:
                lnext = lo[0] + span * lo[1] / (lo[1] - hi[1])
                if not lo[0] < lnext < hi[0]:
                    lnext = lo[0] + 0.5 * span
        elif lnext is None:
            lnext = lmu + err  # relag toward the root side until bracketed
        prev = (lmu, err)
        # capped step keeps the interior solves in warm-start range
        lnext = min(max(lnext, lmu - _MASS_LOG_STEP), lmu + _MASS_LOG_STEP)
        mu = min(math.exp(lnext), mu_cap)
    raise FieldSolveError(
        f"electron boundary mass did not settle in {MAX_OUTER} updates "
        f"(last imbalance {gap:.3e}); retry from a warm start near the solution",
        residual=res,
    )


def _set_boundary(u, bc):
    u[0] = bc[0]
    u[-1] = bc[-1]
    u[:, 0] = bc[:, 0]
    u[:, -1] = bc[:, -1]
    u[:, :, 0] = bc[:, :, 0]
    u[:, :, -1] = bc[:, :, -1]


def _finish_uhat(grid, uh, iterations, residual, history, cg_total):
    worst = float(uh.max())
    if worst > UHAT_POSITIVE_TOL:
        raise FieldSolveError(
            f"electron potential came out positive (max {worst:.3e}); solver invariant broken",
            residual=residual,
        )
    return UhatResult(
        field=ScalarField(grid, uh),
        iterations=iterations,
        residual=residual,
        history=history,
        cg_iterations=cg_total,
    )


# ---------------------------------------------------------------------------
# combined solve and audits
# ---------------------------------------------------------------------------


def gauss_imbalance(u, rho, g, epsilon):
    """Defect of the discrete Gauss identity on the interior.

    Summing eps^2 Lap_h U over interior nodes telescopes to a boundary flux;
    the identity balances it against the interior integral of g e^U - rho.
    The return value equals the interior sum of the nonlinear residual times
    the cell volume, so it audits solver convergence structurally.
    """
    grid = u.grid
    h = grid.spacing
    uv = u.values
    flux = (
        (uv[0, 1:-1, 1:-1] - uv[1, 1:-1, 1:-1]).sum()
        + (uv[-1, 1:-1, 1:-1] - uv[-2, 1:-1, 1:-1]).sum()
        + (uv[1:-1, 0, 1:-1] - uv[1:-1, 1, 1:-1]).sum()
        + (uv[1:-1, -1, 1:-1] - uv[1:-1, -2, 1:-1]).sum()
        + (uv[1:-1, 1:-1, 0] - uv[1:-1, 1:-1, 1]).sum()
        + (uv[1:-1, 1:-1, -1] - uv[1:-1, 1:-1, -2]).sum()
    )
    flux *= epsilon**2 * h
    inner = slice(1, -1)
    source = (
        g.values[inner, inner, inner] * np.exp(uv[inner, inner, inner])
        - rho.values[inner, inner, inner]
    ).sum() * grid.cell_volume
    return float(flux - source)


def solve_field(rho, g, epsilon, uhat_initial=None):
    """Full potential/field solve for a deposited ion density."""
    if rho.grid != g.grid:
        raise ValueError("ion density and background live on different grids")
    if float(rho.values.min()) < 0.0:
        raise ValueError("ion density has negative values")
    mass = float(rho.values.sum()) * rho.grid.cell_volume
    if mass > 1.0 + 1e-9:
        raise ValueError(f"deposited ion mass {mass!r} exceeds 1 beyond tolerance")
    ubar = solve_ubar(rho, epsilon)
    hat = solve_uhat(ubar, g, epsilon, initial=uhat_initial)
    u = ScalarField(rho.grid, ubar.values + hat.field.values)
    gauss = gauss_imbalance(u, rho, g, epsilon)
    if abs(gauss) > GAUSS_GATE * max(1.0, mass):
        raise FieldSolveError(
            f"Gauss-identity defect {gauss!r} exceeds gate for mass {mass!r}",
            residual=hat.residual,
        )
    return FieldSolution(
        u=u,
        ubar=ubar,
        uhat=hat.field,
        e=VectorField(rho.grid, -gradient(u)),
        ebar=VectorField(rho.grid, -gradient(ubar)),
        ehat=VectorField(rho.grid, -gradient(hat.field)),
        epsilon=epsilon,
        newton_iterations=hat.iterations,
        residual_inf=hat.residual,
        gauss_imbalance=gauss,
        newton_history=hat.history,
        cg_iterations=hat.cg_iterations,
    )


def zero_solution(grid, epsilon):
    """Field-off placeholder: identically zero potentials and fields."""
    zs = ScalarField(grid, np.zeros((grid.nodes,) * 3))
    zv = VectorField(grid, np.zeros((grid.nodes,) * 3 + (3,)))
    return FieldSolution(
        u=zs,
        ubar=zs,
        uhat=zs,
        e=zv,
        ebar=zv,
        ehat=zv,
        epsilon=epsilon,
        newton_iterations=0,
        residual_inf=0.0,
        gauss_imbalance=0.0,
    )


def electron_density_norms(u, g):
    """L1/L2/L3/Linf grid norms of the screened electron density g e^U."""
    vals = g.values * np.exp(u.values)
    vol = u.grid.cell_volume
    return {
        "L1": float(vals.sum() * vol),
        "L2": float((vals**2).sum() * vol) ** 0.5,
        "L3": float((vals**3).sum() * vol) ** (1.0 / 3.0),
        "Linf": float(vals.max()),
    }


def e_sup(solution):
    """Sup of |E| over grid nodes."""
    mag2 = (solution.e.values**2).sum(axis=-1)
    return float(np.sqrt(mag2.max()))


def ehat_sup(solution):
    """Sup of |E_hat|, the electron part of the field."""
    mag2 = (solution.ehat.values**2).sum(axis=-1)
    return float(np.sqrt(mag2.max()))
