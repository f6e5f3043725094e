"""Initial-condition samplers and the binary trajectory-dataset format.

Gaussian random fields are drawn by the circulant spectral method: the
periodic squared-exponential covariance is diagonalized by the DFT, so a
field with exactly that covariance is the inverse transform of Hermitian
white noise scaled by the eigenvalue square roots. Each trajectory gets its
own counter-based RNG stream keyed by seed XOR index, so parallel and serial
generation produce identical bytes.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, asdict

import numpy as np

from .grid import GridFunction, Trajectory, roll
from .schemes import CflViolation, PhysicalFlux, exact_advection, reference_step

MAGIC = b"FFNO"
FORMAT_VERSION = 1
IN_DIST_SCALE = 0.1
OOD_SCALE = 0.03


@dataclass(frozen=True)
class GrfSpec:
    """Zero-mean unit-variance periodic GRF with squared-exponential
    covariance exp(-((x - y)/scale)^2) at the periodic distance."""

    n: int
    scale: float = IN_DIST_SCALE
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n < 4 or self.n % 2 != 0:
            raise ValueError(f"n must be even and >= 4, got {self.n}")
        if not (np.isfinite(self.scale) and self.scale > 0.0):
            raise ValueError(f"scale must be positive, got {self.scale}")


def _stream(seed: int, index: int = 0) -> np.random.Generator:
    """Counter-based stream keyed by seed XOR index (bitwise on uint64)."""
    key = np.uint64(np.uint64(seed) ^ np.uint64(index))
    return np.random.Generator(np.random.Philox(key=key))


def _covariance_eigenvalues(n: int, scale: float) -> np.ndarray:
    dx = 1.0 / n
    j = np.arange(n)
    dist = np.minimum(j, n - j) * dx
    row = np.exp(-((dist / scale) ** 2))
    lam = np.fft.fft(row).real
    return np.clip(lam, 0.0, None)


def grf_sample(spec: GrfSpec, rng: np.random.Generator | None = None) -> GridFunction:
    """One sample on the n-point grid, deterministic given spec.seed.

    Hermitian spectral noise: real standard normals at modes 0 and n/2,
    (a + ib)/sqrt(2) in between, scaled by sqrt(n * lambda_k); the inverse
    real FFT then has covariance exactly equal to the circulant row.
    """
    if rng is None:
        rng = _stream(spec.seed)
    n = spec.n
    lam = _covariance_eigenvalues(n, spec.scale)
    half = n // 2 + 1
    draws = rng.standard_normal(2 * half)
    xi = np.empty(half, dtype=np.complex128)
    xi[0] = draws[0]
    xi[-1] = draws[1]
    interior = np.arange(1, half - 1)
    xi[interior] = (draws[2::2][: interior.size] + 1j * draws[3::2][: interior.size]) / np.sqrt(2.0)
    coeffs = xi * np.sqrt(n * lam[:half])
    return GridFunction(np.fft.irfft(coeffs, n=n), 1.0 / n)


def triangular_pulse(n: int) -> GridFunction:
    """Piecewise-linear pulse supported on [0.25, 0.75] with peak 1 at x = 0.5."""
    x = np.arange(n) / n
    left = np.clip((x - 0.25) / 0.25, 0.0, None)
    right = np.clip((0.75 - x) / 0.25, 0.0, None)
    return GridFunction(np.clip(np.minimum(left, right), 0.0, 1.0), 1.0 / n)


def step_function(n: int, u_left: float = 1.0, u_right: float = 0.0, x0: float = 0.5) -> GridFunction:
    """Jump initial condition: u_left for x < x0, u_right otherwise."""
    x = np.arange(n) / n
    return GridFunction(np.where(x < x0, u_left, u_right), 1.0 / n)


@dataclass(frozen=True)
class DatasetHeader:
    """JSON header of an FFNO1 file; payload is float64 LE [n_funcs, n_steps+1, nx]."""

    version: int
    equation: str
    n_funcs: int
    n_steps: int
    nx: int
    dt: float
    generator: str
    seed: int

    def __post_init__(self) -> None:
        if self.version != FORMAT_VERSION:
            raise ValueError(f"unsupported dataset version {self.version}")
        if self.equation not in ("advection", "burgers"):
            raise ValueError(f"unknown equation {self.equation!r}")
        if self.n_funcs < 1 or self.n_steps < 0 or self.nx < 4:
            raise ValueError("n_funcs must be >= 1, n_steps >= 0 and nx >= 4")
        if not (np.isfinite(self.dt) and self.dt > 0.0):
            raise ValueError(f"dt must be positive, got {self.dt}")


@dataclass(frozen=True)
class Dataset:
    header: DatasetHeader
    states: np.ndarray  # [n_funcs, n_steps + 1, nx]

    def __post_init__(self) -> None:
        expected = (self.header.n_funcs, self.header.n_steps + 1, self.header.nx)
        if tuple(self.states.shape) != expected:
            raise ValueError(f"payload shape {self.states.shape} does not match header {expected}")

    @property
    def dx(self) -> float:
        return 1.0 / self.header.nx

    def trajectory(self, i: int) -> Trajectory:
        dts = np.full(self.header.n_steps, self.header.dt)
        return Trajectory(self.states[i], dts, self.dx)


def _advection_trajectory(u0: GridFunction, dt: float, n_steps: int) -> np.ndarray:
    states = np.empty((n_steps + 1, u0.n))
    states[0] = u0.values
    aligned = abs(dt / u0.dx - round(dt / u0.dx)) < 1e-9
    for k in range(1, n_steps + 1):
        if aligned:
            states[k] = roll(states[k - 1], int(round(dt / u0.dx)))
        else:
            states[k] = exact_advection(u0, 1.0, k * dt).values
    return states


def _burgers_trajectory(u0: GridFunction, dt: float, n_steps: int, func_index: int) -> np.ndarray:
    states = np.empty((n_steps + 1, u0.n))
    states[0] = u0.values
    u = u0
    for k in range(1, n_steps + 1):
        try:
            u, _ = reference_step(u, PhysicalFlux("burgers"), dt)
        except CflViolation as exc:
            raise CflViolation(
                f"function {func_index}, step {k}: {exc}", step=k
            ) from exc
        states[k] = u.values
    return states


def make_dataset(
    equation: str,
    n_funcs: int,
    nx: int,
    dt: float,
    n_steps: int,
    seed: int,
    scale: float = IN_DIST_SCALE,
) -> Dataset:
    """Generate reference trajectories from GRF initial conditions.

    Advection states are exact translations of the initial sample; Burgers
    states are marched by the second-order reference scheme at the fixed dt,
    aborting with the offending step index if it ever breaks the CFL limit.
    """
    if equation == "advection":
        generator = "exact_advection"
    elif equation == "burgers":
        generator = "reference_muscl_ssprk2"
    else:
        raise ValueError(f"unknown equation {equation!r}")
    header = DatasetHeader(
        version=FORMAT_VERSION,
        equation=equation,
        n_funcs=n_funcs,
        n_steps=n_steps,
        nx=nx,
        dt=dt,
        generator=generator,
        seed=seed,
    )
    states = np.empty((n_funcs, n_steps + 1, nx))
    spec = GrfSpec(n=nx, scale=scale, seed=seed)
    for i in range(n_funcs):
        u0 = grf_sample(spec, rng=_stream(seed, i))
        if equation == "advection":
            states[i] = _advection_trajectory(u0, dt, n_steps)
        else:
            states[i] = _burgers_trajectory(u0, dt, n_steps, i)
    return Dataset(header, states)


def write_dataset(dataset: Dataset, path, extra_header: dict | None = None) -> None:
    """Write the FFNO1 container: magic, u32 header length, JSON header,
    float64 little-endian payload."""
    doc = asdict(dataset.header)
    if extra_header:
        for key, value in extra_header.items():
            if key in doc:
                raise ValueError(f"extra header key {key!r} collides with a required field")
            doc[key] = value
    blob = json.dumps(doc, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", len(blob)))
    buf.write(blob)
    buf.write(np.ascontiguousarray(dataset.states, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def read_dataset(path) -> tuple[Dataset, dict]:
    """Read an FFNO1 file; validates magic, version, and payload length.

    Returns the dataset plus the raw header dict (which may carry optional
    fields such as a truncation flag on partial rollouts).
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise ValueError(f"not a dataset file: bad magic {raw[:4]!r}")
    if len(raw) < 8:
        raise ValueError("dataset file truncated before header length")
    (header_len,) = struct.unpack("<I", raw[4:8])
    if len(raw) < 8 + header_len:
        raise ValueError("dataset file truncated inside header")
    doc = json.loads(raw[8 : 8 + header_len].decode("utf-8"))
    required = {"version", "equation", "n_funcs", "n_steps", "nx", "dt", "generator", "seed"}
    missing = required - set(doc)
    if missing:
        raise ValueError(f"dataset header missing fields: {sorted(missing)}")
    header = DatasetHeader(**{k: doc[k] for k in required})
    count = header.n_funcs * (header.n_steps + 1) * header.nx
    payload = raw[8 + header_len :]
    if len(payload) != count * 8:
        raise ValueError(
            f"payload holds {len(payload)} bytes, expected {count * 8} for "
            f"[{header.n_funcs}, {header.n_steps + 1}, {header.nx}] float64"
        )
    states = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(
        header.n_funcs, header.n_steps + 1, header.nx
    )
    return Dataset(header, states), doc
