"""Kick-drift-kick leapfrog advance of the particle characteristics.

Each step kicks with the frozen field at the pre-drift position, drifts a
full dt, then kicks with the field at the post-drift position. The per-kick
|E| values (the very ones applied to the velocity) are accumulated into each
particle's running field integral, half a step's worth per kick, so the
integral dominates the realized velocity deviation by construction.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import kernels, mesh


@dataclass(frozen=True)
class TimeSpec:
    dt: float
    t_end: float
    checkpoint_every: int = 100

    def __post_init__(self):
        if not (self.dt > 0.0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive and finite, got {self.dt}")
        if not (self.t_end >= self.dt and math.isfinite(self.t_end)):
            raise ValueError(f"t_end must be at least one step, got {self.t_end}")
        if self.checkpoint_every < 1:
            raise ValueError(f"checkpoint_every must be >= 1, got {self.checkpoint_every}")

    @property
    def steps(self):
        return max(1, round(self.t_end / self.dt))


def _field_grid(field):
    # accept a full solve result or a bare vector field
    return field.e if hasattr(field, "e") else field


def step(ensemble, field, dt, xmid=None, vmid=None):
    """Advance one kick-drift-kick step in place.

    ``xmid``/``vmid`` receive the half-step drift positions and velocities
    (allocated when omitted); they feed the midpoint current deposit.
    """
    e = _field_grid(field)
    if xmid is None:
        xmid = np.empty_like(ensemble.positions)
    if vmid is None:
        vmid = np.empty_like(ensemble.velocities)
    kernels.push_kdk(
        ensemble.positions,
        ensemble.velocities,
        ensemble.field_integral,
        e.values,
        e.grid.origin,
        e.grid.spacing,
        dt,
        xmid,
        vmid,
    )
    return xmid, vmid


def stability_check(ensemble, field, grid, dt):
    """Advisory strings for too-long steps; empty list means ok, never fatal."""
    advisories = []
    vmax = float(np.sqrt((ensemble.velocities**2).sum(axis=1)).max())
    if dt * vmax > 0.5 * grid.spacing:
        advisories.append(
            f"dt*max|v| = {dt * vmax:.3e} exceeds half a cell ({0.5 * grid.spacing:.3e}); "
            "particles cross cells within a step"
        )
    e = _field_grid(field)
    grad_max = 0.0
    for c in range(3):
        grad_max = max(grad_max, float(np.abs(mesh.gradient(e.values[..., c], grid.spacing)).max()))
    if dt * dt * grad_max > 0.1:
        advisories.append(
            f"dt^2*max|grad E| = {dt * dt * grad_max:.3e} exceeds 0.1; "
            "field varies too fast for the step size"
        )
    return advisories
