"""Classical finite-volume machinery: fluxes, limiters, the reference solver,
and exact solutions used as ground truth.

All fields are periodic on [0, 1) with nodes x_j = j*dx. Interface j+1/2
sits between cells j and j+1; flux arrays are indexed by their left cell.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import GridFunction, roll

SPEED_FLOOR = 1e-12


@dataclass(frozen=True)
class PhysicalFlux:
    """The physical flux F(u): linear a*u for advection, u^2/2 for Burgers."""

    kind: str
    a: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("advection", "burgers"):
            raise ValueError(f"unknown flux kind {self.kind!r}")
        if self.kind == "advection" and not np.isfinite(self.a):
            raise ValueError("advection speed must be finite")

    def __call__(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        if self.kind == "advection":
            return self.a * u
        return 0.5 * u * u

    def max_speed(self, u: np.ndarray) -> float:
        """Largest characteristic speed |F'(u)| over the field."""
        if self.kind == "advection":
            return abs(self.a)
        return float(np.max(np.abs(u))) if np.asarray(u).size else 0.0


def flux_upwind(u_left: np.ndarray, u_right: np.ndarray, a: float = 1.0) -> np.ndarray:
    """Upwind flux for advection: a*uL if a >= 0 else a*uR."""
    u_left = np.asarray(u_left, dtype=np.float64)
    u_right = np.asarray(u_right, dtype=np.float64)
    return a * u_left if a >= 0.0 else a * u_right


def flux_lax_friedrichs(
    u_left: np.ndarray, u_right: np.ndarray, flux: PhysicalFlux, dx: float, dt: float
) -> np.ndarray:
    """Lax-Friedrichs flux (F(uL) + F(uR))/2 - (dx / (2 dt)) * (uR - uL)."""
    if dt <= 0.0 or dx <= 0.0:
        raise ValueError("dx and dt must be positive")
    u_left = np.asarray(u_left, dtype=np.float64)
    u_right = np.asarray(u_right, dtype=np.float64)
    return 0.5 * (flux(u_left) + flux(u_right)) - 0.5 * (dx / dt) * (u_right - u_left)


def flux_godunov_burgers(u_left: np.ndarray, u_right: np.ndarray) -> np.ndarray:
    """Exact Godunov flux for the convex Burgers flux F(u) = u^2/2.

    Rarefaction branch (uL <= uR): F(uL) if uL > 0, F(uR) if uR < 0, else 0
    (transonic). Shock branch (uL > uR): side picked by the shock speed
    (uL + uR)/2.
    """
    ul = np.asarray(u_left, dtype=np.float64)
    ur = np.asarray(u_right, dtype=np.float64)
    fl, fr = 0.5 * ul * ul, 0.5 * ur * ur
    rare = np.where(ul > 0.0, fl, np.where(ur < 0.0, fr, 0.0))
    shock = np.where(ul + ur > 0.0, fl, fr)
    return np.where(ul <= ur, rare, shock)


def minmod(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """minmod(a, b): the smaller-magnitude argument when signs agree, else 0."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.where(a * b > 0.0, np.where(np.abs(a) < np.abs(b), a, b), 0.0)


def muscl_interface_states(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Second-order interface states with minmod-limited slopes.

    sigma_j = minmod(u_{j+1} - u_j, u_j - u_{j-1}); the state pair at
    interface j+1/2 is (u_j + sigma_j/2, u_{j+1} - sigma_{j+1}/2).
    """
    u = np.asarray(u, dtype=np.float64)
    sigma = minmod(np.roll(u, -1) - u, u - np.roll(u, 1))
    left = u + 0.5 * sigma
    right = np.roll(u, -1) - 0.5 * np.roll(sigma, -1)
    return left, right


class CflViolation(RuntimeError):
    """A step exceeded the CFL limit; carries the offending step index."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


def cfl_dt(u: GridFunction, flux: PhysicalFlux, courant: float) -> float:
    """Stable step courant * dx / max speed; a quiescent field (speed below
    1e-12) falls back to courant * dx rather than an unbounded step."""
    if not (0.0 < courant <= 1.0):
        raise ValueError(f"courant must lie in (0, 1], got {courant}")
    speed = flux.max_speed(u.values)
    if speed <= SPEED_FLOOR:
        return courant * u.dx
    return courant * u.dx / speed


def _muscl_divergence(u: np.ndarray, dx: float, flux: PhysicalFlux) -> np.ndarray:
    left, right = muscl_interface_states(u)
    if flux.kind == "burgers":
        f = flux_godunov_burgers(left, right)
    else:
        f = flux_upwind(left, right, flux.a)
    return (f - np.roll(f, 1)) / dx


def reference_step(
    u: GridFunction,
    flux: PhysicalFlux,
    dt: float,
    enforce_cfl: bool = True,
) -> tuple[GridFunction, bool]:
    """One SSP-RK2 step of the MUSCL-minmod scheme with upwind/Godunov fluxes.

    Returns (next state, cfl_exceeded). A step beyond the CFL limit raises
    unless enforce_cfl is False, in which case it proceeds and flags the
    violation so callers can surface a warning.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    speed = max(flux.max_speed(u.values), SPEED_FLOOR)
    exceeded = dt * speed / u.dx > 1.0 + 1e-13
    if exceeded and enforce_cfl:
        raise CflViolation(
            f"dt={dt} exceeds the CFL limit {u.dx / speed:.6g} (courant "
            f"{dt * speed / u.dx:.3f})"
        )
    v = u.values
    stage = v - dt * _muscl_divergence(v, u.dx, flux)
    out = 0.5 * v + 0.5 * (stage - dt * _muscl_divergence(stage, u.dx, flux))
    return u.replace_values(out), exceeded


def exact_advection(u0: GridFunction, a: float, t: float) -> GridFunction:
    """Exact periodic translation u(x, t) = u0(x - a t).

    Grid-aligned shifts reduce to an exact roll; otherwise the field is
    interpolated spectrally (trigonometric interpolation of the samples).
    """
    shift = a * t / u0.dx
    nearest = round(shift)
    if abs(shift - nearest) < 1e-9:
        return u0.replace_values(roll(u0.values, int(nearest) % u0.n))
    coeffs = np.fft.rfft(u0.values)
    k = np.arange(coeffs.size)
    coeffs = coeffs * np.exp(-2j * np.pi * k * a * t)
    return u0.replace_values(np.fft.irfft(coeffs, n=u0.n))


def exact_burgers_riemann(
    u_left: float, u_right: float, x0: float, x: np.ndarray, t: float
) -> np.ndarray:
    """Exact similarity solution of the Burgers Riemann problem at time t.

    Shock for uL > uR moving at s = (uL + uR)/2; rarefaction fan otherwise.
    Evaluated pointwise in the similarity variable xi = (x - x0)/t; at t = 0
    the initial jump is returned.
    """
    x = np.asarray(x, dtype=np.float64)
    if t < 0.0:
        raise ValueError(f"t must be nonnegative, got {t}")
    if t == 0.0:
        return np.where(x < x0, u_left, u_right)
    xi = (x - x0) / t
    if u_left > u_right:
        s = 0.5 * (u_left + u_right)
        return np.where(xi < s, u_left, u_right)
    return np.where(xi <= u_left, u_left, np.where(xi >= u_right, u_right, xi))
