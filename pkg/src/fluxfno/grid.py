"""Periodic 1D grid containers and the small set of exact grid operations.

Fields live on uniform nodes x_j = j*dx of a periodic domain of length N*dx.
Everything here is plain float64 numpy; these helpers are the bookkeeping
layer under the schemes, the training losses, and the evaluation metrics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MIN_CELLS = 4


def _as_readonly_f64(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class GridFunction:
    """A scalar field sampled on N periodic cells of width dx."""

    values: np.ndarray
    dx: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _as_readonly_f64(self.values, "values"))
        if self.values.size < MIN_CELLS:
            raise ValueError(f"need at least {MIN_CELLS} cells, got {self.values.size}")
        if not (np.isfinite(self.dx) and self.dx > 0.0):
            raise ValueError(f"dx must be positive and finite, got {self.dx}")

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n) * self.dx

    def replace_values(self, values: np.ndarray) -> "GridFunction":
        return GridFunction(values, self.dx)


@dataclass(frozen=True)
class StencilField:
    """Per-cell stencil windows: values[j, c] = u at offset c - p from cell j."""

    values: np.ndarray
    p: int
    q: int

    def __post_init__(self) -> None:
        arr = np.array(self.values, dtype=np.float64, copy=True)
        if arr.ndim != 2:
            raise ValueError(f"stencil values must be [n, channels], got shape {arr.shape}")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)
        if self.p < 0 or self.q < 0:
            raise ValueError(f"stencil extents must be nonnegative, got p={self.p}, q={self.q}")
        if arr.shape[1] != self.p + self.q + 1:
            raise ValueError(
                f"expected {self.p + self.q + 1} channels for p={self.p}, q={self.q}, "
                f"got {arr.shape[1]}"
            )

    @property
    def channels(self) -> int:
        return self.p + self.q + 1


@dataclass(frozen=True)
class Trajectory:
    """A time-ordered sequence of states on one grid, with per-step dts.

    states has shape [n_steps + 1, n]; dts has shape [n_steps] and holds the
    step taken from states[k] to states[k + 1].
    """

    states: np.ndarray
    dts: np.ndarray
    dx: float
    times: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        states = np.array(self.states, dtype=np.float64, copy=True)
        dts = np.atleast_1d(np.array(self.dts, dtype=np.float64, copy=True))
        if states.ndim != 2:
            raise ValueError(f"states must be [n_steps+1, n], got shape {states.shape}")
        if states.shape[0] != dts.size + 1:
            raise ValueError(
                f"got {states.shape[0]} states but {dts.size} step sizes; "
                "need exactly one more state than steps"
            )
        if not np.all(np.isfinite(states)):
            raise ValueError("states contain non-finite entries")
        if dts.size and not np.all(dts > 0.0):
            raise ValueError("all dts must be positive")
        if not (np.isfinite(self.dx) and self.dx > 0.0):
            raise ValueError(f"dx must be positive and finite, got {self.dx}")
        if states.shape[1] < MIN_CELLS:
            raise ValueError(f"need at least {MIN_CELLS} cells, got {states.shape[1]}")
        times = np.concatenate([[0.0], np.cumsum(dts)])
        for arr in (states, dts, times):
            arr.flags.writeable = False
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "dts", dts)
        object.__setattr__(self, "times", times)

    @property
    def n_steps(self) -> int:
        return self.dts.size

    @property
    def n(self) -> int:
        return self.states.shape[1]

    def state(self, k: int) -> GridFunction:
        return GridFunction(self.states[k], self.dx)


def roll(u: np.ndarray, shift: int) -> np.ndarray:
    """Periodic shift moving content rightward for positive shift.

    result[i] = u[(i - shift) mod n], so roll([1,2,3,4], 1) == [4,1,2,3].
    """
    return np.roll(np.asarray(u), shift, axis=-1)


def build_stencil_pair(u: GridFunction, p: int, q: int) -> tuple[StencilField, StencilField]:
    """Left/right stencil windows for every interface of a periodic field.

    The left window at cell j stacks (u_{j-p}, ..., u_{j+q}); the right window
    is the left one with every channel rolled one cell rightward, i.e. the
    same window seen from interface j-1/2.
    """
    if p < 0 or q < 0:
        raise ValueError(f"stencil extents must be nonnegative, got p={p}, q={q}")
    width = p + q + 1
    if width > u.n:
        raise ValueError(f"stencil width {width} exceeds grid size {u.n}")
    left = np.stack([roll(u.values, -(c - p)) for c in range(width)], axis=1)
    right = np.roll(left, 1, axis=0)
    return StencilField(left, p, q), StencilField(right, p, q)


def rel_l2(u: np.ndarray, ref: np.ndarray) -> float:
    """Relative L2 error ||u - ref|| / ||ref||.

    A zero-norm reference yields 0.0 when u matches it exactly and inf
    otherwise, so comparisons against the zero field stay well-defined.
    """
    u = np.asarray(u, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if u.shape != ref.shape:
        raise ValueError(f"shape mismatch: {u.shape} vs {ref.shape}")
    num = float(np.linalg.norm(u - ref))
    den = float(np.linalg.norm(ref))
    if den == 0.0:
        return 0.0 if num == 0.0 else float("inf")
    return num / den


def linf(u: np.ndarray, ref: np.ndarray) -> float:
    """Absolute max-norm error max_j |u_j - ref_j|."""
    u = np.asarray(u, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if u.shape != ref.shape:
        raise ValueError(f"shape mismatch: {u.shape} vs {ref.shape}")
    if u.size == 0:
        raise ValueError("linf of empty arrays is undefined")
    return float(np.max(np.abs(u - ref)))


def total_variation(u: np.ndarray) -> float:
    """Periodic total variation sum_j |u_{j+1} - u_j| (wrap term included)."""
    u = np.asarray(u, dtype=np.float64)
    return float(np.sum(np.abs(np.roll(u, -1) - u)))


def mass(u: GridFunction) -> float:
    """Discrete integral dx * sum_j u_j."""
    return float(u.dx * np.sum(u.values))
