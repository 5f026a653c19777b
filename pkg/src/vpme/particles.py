"""Ion macro-particle ensemble, initial distributions, and velocity diagnostics.

Tracked per particle besides phase-space state: the initial velocity (for the
max velocity deviation sup|v(t) - v(0)|) and the running time integral of |E|
along the trajectory (whose max over particles bounds that deviation from
above, by the triangle inequality applied to each kick). Checkpointed copies
of the integral allow windowed suprema between any two checkpoint times.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .profiles import SpatialProfile

INIT_KINDS = ("maxwellian", "power_law", "cold_lattice")


@dataclass(frozen=True)
class InitialDistributionSpec:
    """Validated parameters of the initial ion distribution.

    ``sigma`` applies to ``maxwellian``; ``r`` (tail exponent) and ``v_max``
    (speed cutoff) to ``power_law``; ``m1`` is the extra moment order tracked
    by the diagnostics and must exceed 2 so the moment hierarchy closes.
    ``cold_lattice`` places one motionless particle per grid node weighted by
    the background and takes no sampling parameters.
    """

    kind: str
    spatial: SpatialProfile | None = None
    sigma: float = 1.0
    r: float = 4.0
    v_max: float = 20.0
    m1: float = 2.5

    def __post_init__(self):
        if self.kind not in INIT_KINDS:
            raise ValueError(f"unknown init kind {self.kind!r}, expected one of {INIT_KINDS}")
        if not (self.m1 > 2.0 and math.isfinite(self.m1)):
            raise ValueError(f"tracked moment order m1 must exceed 2, got {self.m1}")
        if self.kind == "maxwellian":
            if not (self.sigma > 0.0 and math.isfinite(self.sigma)):
                raise ValueError(f"maxwellian sigma must be positive and finite, got {self.sigma}")
        if self.kind == "power_law":
            if not (self.r > 3.0 and math.isfinite(self.r)):
                raise ValueError(
                    f"power-law tail exponent must exceed 3 (finite third moment), got {self.r}"
                )
            if not (self.v_max > 0.0 and math.isfinite(self.v_max)):
                raise ValueError(f"power-law speed cutoff must be positive and finite, got {self.v_max}")
        if self.kind != "cold_lattice" and self.spatial is None:
            raise ValueError(f"init kind {self.kind!r} requires a spatial profile")


@dataclass
class ParticleEnsemble:
    positions: np.ndarray
    velocities: np.ndarray
    weights: np.ndarray
    initial_velocities: np.ndarray = None
    field_integral: np.ndarray = None
    checkpoint_integrals: list = field(default_factory=list)
    escaped_mass: float = 0.0

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=float)
        self.velocities = np.ascontiguousarray(self.velocities, dtype=float)
        self.weights = np.ascontiguousarray(self.weights, dtype=float)
        n = self.positions.shape[0]
        if n < 1:
            raise ValueError("ensemble needs at least one particle")
        if self.positions.shape != (n, 3) or self.velocities.shape != (n, 3):
            raise ValueError("positions and velocities must both be (n, 3)")
        if self.weights.shape != (n,):
            raise ValueError("weights must be (n,)")
        if not (self.weights > 0.0).all():
            raise ValueError("particle weights must all be positive")
        if self.initial_velocities is None:
            self.initial_velocities = self.velocities.copy()
        else:
            self.initial_velocities = np.ascontiguousarray(self.initial_velocities, dtype=float)
        if self.field_integral is None:
            self.field_integral = np.zeros(n)
        else:
            self.field_integral = np.ascontiguousarray(self.field_integral, dtype=float)

    @property
    def count(self):
        return self.positions.shape[0]

    @property
    def total_weight(self):
        return float(self.weights.sum())

    def checkpoint(self):
        """Snapshot the per-particle field integral; returns its index."""
        self.checkpoint_integrals.append(self.field_integral.copy())
        return len(self.checkpoint_integrals) - 1


# ---------------------------------------------------------------------------
# velocity diagnostics
# ---------------------------------------------------------------------------


def instantaneous_moment(ensemble, k):
    """k-th absolute velocity moment sum_p w_p |v_p|^k."""
    speed = np.sqrt((ensemble.velocities**2).sum(axis=1))
    return float((ensemble.weights * speed**k).sum())


def q_star(ensemble):
    """Largest velocity deviation from t=0: max_p |v_p - v_p(0)|."""
    dv = ensemble.velocities - ensemble.initial_velocities
    return float(np.sqrt((dv * dv).sum(axis=1)).max())


def q_tt(ensemble):
    """Largest accumulated integral of |E| along any trajectory."""
    return float(ensemble.field_integral.max())


def q_windowed(ensemble, start, stop):
    """Largest integral of |E| between checkpoints ``start`` and ``stop``."""
    ncp = len(ensemble.checkpoint_integrals)
    if not (0 <= start <= stop < ncp):
        raise IndexError(f"checkpoint window [{start}, {stop}] outside 0..{ncp - 1}")
    diff = ensemble.checkpoint_integrals[stop] - ensemble.checkpoint_integrals[start]
    return float(diff.max())


# ---------------------------------------------------------------------------
# initial sampling
# ---------------------------------------------------------------------------


def _power_law_cdf_primitive(u, r):
    # antiderivative of s^2 (1+s)^-r with u = 1+s; denominators are nonzero
    # for every admissible r > 3
    return u ** (3.0 - r) / (3.0 - r) - 2.0 * u ** (2.0 - r) / (2.0 - r) + u ** (1.0 - r) / (
        1.0 - r
    )


def power_law_speed_cdf(speeds, r, v_max):
    """Exact normalized CDF of the speed law s^2 (1+s)^-r on [0, v_max]."""
    s = np.asarray(speeds, dtype=float)
    lo = _power_law_cdf_primitive(1.0, r)
    hi = _power_law_cdf_primitive(1.0 + v_max, r)
    return (_power_law_cdf_primitive(1.0 + s, r) - lo) / (hi - lo)


def _sample_power_law_speeds(rng, count, r, v_max):
    grid = np.linspace(0.0, v_max, 8193)
    cdf = power_law_speed_cdf(grid, r, v_max)
    return np.interp(rng.random(count), cdf, grid)


def sample_initial(spec, count, seed):
    """Draw an ensemble of ``count`` equal-weight particles.

    Draw order is fixed (positions, then velocities), so a given seed yields
    a bitwise-identical ensemble.
    """
    if spec.kind == "cold_lattice":
        raise ValueError("cold_lattice is built from the background grid; use node_lattice()")
    if count < 1:
        raise ValueError(f"particle count must be at least 1, got {count}")
    rng = np.random.default_rng(seed)
    positions = spec.spatial.sample(rng, count)
    if spec.kind == "maxwellian":
        velocities = spec.sigma * rng.standard_normal((count, 3))
    else:
        speeds = _sample_power_law_speeds(rng, count, spec.r, spec.v_max)
        direction = rng.standard_normal((count, 3))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        velocities = speeds[:, None] * direction
    weights = np.full(count, 1.0 / count)
    return ParticleEnsemble(positions=positions, velocities=velocities, weights=weights)


def node_lattice(g):
    """Motionless particle per node, weighted by the background cell mass.

    Depositing this ensemble reproduces the background density grid-exactly
    (every particle sits on its node), giving a discrete equilibrium. Nodes
    with zero background are skipped to keep weights positive.
    """
    grid = g.grid
    positions = grid.node_coords().reshape(-1, 3)
    weights = g.values.reshape(-1) * grid.cell_volume
    keep = weights > 0.0
    if not keep.any():
        raise ValueError("background is identically zero; no lattice particles")
    positions = positions[keep]
    weights = weights[keep]
    return ParticleEnsemble(
        positions=positions,
        velocities=np.zeros_like(positions),
        weights=weights,
    )
