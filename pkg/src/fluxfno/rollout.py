"""Conservative time stepping driven by an arbitrary interface-flux operator.

A FluxOperator maps per-cell stencil windows [..., N, p+q+1] to the flux at
each cell's right interface [..., N, 1]. The divergence differences a single
flux array against its roll, so every update telescopes and mass is
conserved by construction, whatever the operator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fno
from .grid import GridFunction, Trajectory, build_stencil_pair
from .schemes import PhysicalFlux, cfl_dt, flux_godunov_burgers, flux_lax_friedrichs, flux_upwind

BLOWUP_LIMIT = 1e6


class BlowUpError(RuntimeError):
    """Rollout exceeded the max-norm guard; carries the partial trajectory."""

    def __init__(self, message: str, trajectory: Trajectory):
        super().__init__(message)
        self.trajectory = trajectory


@dataclass(frozen=True)
class SchemeConfig:
    """How to march: stencil extents, integrator, and the dt policy."""

    p: int = 0
    q: int = 1
    integrator: str = "euler"
    dt_mode: str = "fixed"
    dt: float | None = None
    courant: float = 0.5

    def __post_init__(self) -> None:
        if self.p < 0 or self.q < 0:
            raise ValueError("stencil extents must be nonnegative")
        if self.integrator not in ("euler", "rk2"):
            raise ValueError(f"unknown integrator {self.integrator!r}")
        if self.dt_mode not in ("fixed", "cfl"):
            raise ValueError(f"unknown dt_mode {self.dt_mode!r}")
        if self.dt_mode == "fixed" and (self.dt is None or self.dt <= 0.0):
            raise ValueError("fixed dt_mode needs a positive dt")


class FnoFlux:
    """A trained model acting as the interface flux."""

    def __init__(self, params: fno.FnoParams, p: int, q: int):
        if params.config.in_channels != p + q + 1:
            raise ValueError(
                f"model takes {params.config.in_channels} channels, stencil p={p}, q={q} "
                f"provides {p + q + 1}"
            )
        if params.config.out_channels != 1:
            raise ValueError("flux operator must have one output channel")
        self.params = params
        self.p = p
        self.q = q

    def flux_values(self, stencils: np.ndarray) -> np.ndarray:
        return fno.apply(self.params, stencils)


class AnalyticFlux:
    """Classical two-point fluxes behind the same stencil interface.

    kind 'upwind' (advection, speed a), 'godunov' (Burgers), or 'lax'
    (needs the fixed dx/dt ratio of the run).
    """

    p = 0
    q = 1

    def __init__(self, kind: str, a: float = 1.0, dx_over_dt: float | None = None):
        if kind not in ("upwind", "godunov", "lax"):
            raise ValueError(f"unknown analytic flux {kind!r}")
        if kind == "lax" and (dx_over_dt is None or dx_over_dt <= 0.0):
            raise ValueError("lax flux needs a positive dx_over_dt")
        self.kind = kind
        self.a = a
        self.dx_over_dt = dx_over_dt

    def flux_values(self, stencils: np.ndarray) -> np.ndarray:
        stencils = np.asarray(stencils, dtype=np.float64)
        if stencils.shape[-1] != 2:
            raise ValueError(f"analytic fluxes are two-point, got {stencils.shape[-1]} channels")
        ul, ur = stencils[..., 0], stencils[..., 1]
        if self.kind == "upwind":
            f = flux_upwind(ul, ur, self.a)
        elif self.kind == "godunov":
            f = flux_godunov_burgers(ul, ur)
        else:
            f = 0.5 * (self.physical(ul) + self.physical(ur)) - 0.5 * self.dx_over_dt * (ur - ul)
        return f[..., None]

    def physical(self, u: np.ndarray) -> np.ndarray:
        if self.kind == "godunov":
            return 0.5 * np.asarray(u) ** 2
        return self.a * np.asarray(u)


def divergence(op, u: GridFunction) -> GridFunction:
    """Flux divergence D(u)_j = (F_j - F_{j-1}) / dx with F = op on the left
    stencils; the right-interface flux is the rolled left one, so the sum of
    D telescopes to zero exactly."""
    left, _ = build_stencil_pair(u, op.p, op.q)
    f = op.flux_values(left.values)[:, 0]
    if not np.all(np.isfinite(f)):
        raise FloatingPointError("non-finite flux values")
    return u.replace_values((f - np.roll(f, 1)) / u.dx)


def step_euler(op, u: GridFunction, dt: float) -> GridFunction:
    """Forward-Euler conservative update u - dt * D(u)."""
    out = u.values - dt * divergence(op, u).values
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite state after Euler step")
    return u.replace_values(out)


def step_rk2(op, u: GridFunction, dt: float) -> GridFunction:
    """Heun (SSP-RK2) update: average of u and an Euler step of the Euler stage."""
    v = u.values
    stage = v - dt * divergence(op, u).values
    if not np.all(np.isfinite(stage)):
        raise FloatingPointError("non-finite state after RK2 stage")
    out = 0.5 * v + 0.5 * (stage - dt * divergence(op, u.replace_values(stage)).values)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite state after RK2 step")
    return u.replace_values(out)


def integrate_to(
    op,
    u0: GridFunction,
    t_end: float,
    scheme: SchemeConfig,
    flux: PhysicalFlux | None = None,
) -> Trajectory:
    """March from u0 to t_end and record every state.

    Fixed mode accumulates time as n * dt (no summation drift) and clamps the
    final step onto t_end; cfl mode asks the physical flux for a stable dt
    each step. A state whose max-norm passes 1e6 aborts with the partial
    trajectory attached to the error. t_end = 0 returns the bare initial
    state.
    """
    if t_end < 0.0:
        raise ValueError(f"t_end must be nonnegative, got {t_end}")
    if t_end == 0.0:
        return Trajectory(u0.values[None], np.zeros(0), u0.dx)
    if scheme.dt_mode == "cfl" and flux is None:
        raise ValueError("cfl dt_mode needs the physical flux for its wave speed")
    stepper = step_euler if scheme.integrator == "euler" else step_rk2
    states = [u0.values]
    dts: list[float] = []
    u = u0
    t = 0.0
    n = 0
    while t < t_end - 1e-14 * max(1.0, t_end):
        if scheme.dt_mode == "fixed":
            dt = scheme.dt
            t_next = (n + 1) * scheme.dt
            if t_next > t_end:
                dt = t_end - t
                t_next = t_end
        else:
            dt = cfl_dt(u, flux, scheme.courant)
            t_next = t + dt
            if t_next > t_end:
                dt = t_end - t
                t_next = t_end
        try:
            u = stepper(op, u, dt)
        except FloatingPointError as exc:
            partial = Trajectory(np.asarray(states), np.asarray(dts), u0.dx)
            raise BlowUpError(f"rollout diverged at step {n}: {exc}", partial) from exc
        states.append(u.values)
        dts.append(dt)
        t = t_next
        n += 1
        if np.max(np.abs(u.values)) > BLOWUP_LIMIT:
            partial = Trajectory(np.asarray(states), np.asarray(dts), u0.dx)
            raise BlowUpError(
                f"rollout blew up at step {n}: max |u| = {np.max(np.abs(u.values)):.3e} > {BLOWUP_LIMIT:.0e}",
                partial,
            )
    return Trajectory(np.asarray(states), np.asarray(dts), u0.dx)
