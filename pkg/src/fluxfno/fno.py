"""Fourier neural operator used as a numerical flux, plus its on-disk format.

The network is lift -> depth x (spectral mixing + width-k conv, GELU) ->
affine, GELU, affine. Spectral weights are stored as separate real and
imaginary arrays so the optimizer and the gradient checks only ever see real
parameters; the model file stores them recombined as complex128.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

MAGIC = b"FFNM"
FORMAT_VERSION = 1
_CONFIG_KEYS = ("in_channels", "out_channels", "width", "depth", "kmax", "conv_kernel", "proj_hidden")


@dataclass(frozen=True)
class FnoConfig:
    """Architecture hyperparameters; defaults follow the shipped experiments."""

    in_channels: int
    out_channels: int = 1
    width: int = 64
    depth: int = 1
    kmax: int = 5
    conv_kernel: int = 1
    proj_hidden: int | None = None

    def __post_init__(self) -> None:
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValueError("channel counts must be positive")
        if self.width < 1 or self.depth < 1:
            raise ValueError("width and depth must be positive")
        if self.kmax < 0:
            raise ValueError(f"kmax must be nonnegative, got {self.kmax}")
        if self.conv_kernel < 1 or self.conv_kernel % 2 == 0:
            raise ValueError(f"conv_kernel must be odd and positive, got {self.conv_kernel}")
        if self.proj_hidden is None:
            object.__setattr__(self, "proj_hidden", self.width)
        elif self.proj_hidden < 1:
            raise ValueError("proj_hidden must be positive")

    @property
    def modes(self) -> int:
        """Number of retained rfft modes, k = 0..kmax."""
        return self.kmax + 1

    def min_grid(self) -> int:
        return 2 * self.kmax + 2

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in _CONFIG_KEYS}

    @classmethod
    def from_dict(cls, doc: dict) -> "FnoConfig":
        unknown = set(doc) - set(_CONFIG_KEYS)
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        if "in_channels" not in doc:
            raise ValueError("model config missing in_channels")
        return cls(**doc)


@dataclass
class FnoParams:
    """All trainable arrays of one model, in a fixed manifest order."""

    config: FnoConfig
    lift_w: np.ndarray
    lift_b: np.ndarray
    spectral_re: list[np.ndarray]
    spectral_im: list[np.ndarray]
    conv_w: list[np.ndarray]
    conv_b: list[np.ndarray]
    proj1_w: np.ndarray
    proj1_b: np.ndarray
    proj2_w: np.ndarray
    proj2_b: np.ndarray

    def named_arrays(self) -> list[tuple[str, np.ndarray]]:
        """Stable (name, array) listing; order defines the file payload order."""
        items = [("lift.w", self.lift_w), ("lift.b", self.lift_b)]
        for i in range(self.config.depth):
            items.append((f"layer{i}.r_re", self.spectral_re[i]))
            items.append((f"layer{i}.r_im", self.spectral_im[i]))
            items.append((f"layer{i}.conv.w", self.conv_w[i]))
            items.append((f"layer{i}.conv.b", self.conv_b[i]))
        items.extend(
            [
                ("proj1.w", self.proj1_w),
                ("proj1.b", self.proj1_b),
                ("proj2.w", self.proj2_w),
                ("proj2.b", self.proj2_b),
            ]
        )
        return items

    def copy(self) -> "FnoParams":
        return replace(
            self,
            lift_w=self.lift_w.copy(),
            lift_b=self.lift_b.copy(),
            spectral_re=[a.copy() for a in self.spectral_re],
            spectral_im=[a.copy() for a in self.spectral_im],
            conv_w=[a.copy() for a in self.conv_w],
            conv_b=[a.copy() for a in self.conv_b],
            proj1_w=self.proj1_w.copy(),
            proj1_b=self.proj1_b.copy(),
            proj2_w=self.proj2_w.copy(),
            proj2_b=self.proj2_b.copy(),
        )


def init_params(config: FnoConfig, seed: int) -> FnoParams:
    """Seeded init: uniform(-a, a) with a = sqrt(1/fan_in); spectral weights
    uniform scaled by 1/width^2; all biases zero."""
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))

    def uniform(shape, fan_in):
        a = np.sqrt(1.0 / fan_in)
        return rng.uniform(-a, a, size=shape)

    w = config.width
    ck = config.conv_kernel
    spectral_scale = 1.0 / (w * w)
    spectral_re, spectral_im, conv_w, conv_b = [], [], [], []
    lift_w = uniform((config.in_channels, w), config.in_channels)
    lift_b = np.zeros(w)
    for _ in range(config.depth):
        spectral_re.append(spectral_scale * rng.uniform(-1.0, 1.0, size=(config.modes, w, w)))
        spectral_im.append(spectral_scale * rng.uniform(-1.0, 1.0, size=(config.modes, w, w)))
        conv_w.append(uniform((ck, w, w), ck * w))
        conv_b.append(np.zeros(w))
    return FnoParams(
        config=config,
        lift_w=lift_w,
        lift_b=lift_b,
        spectral_re=spectral_re,
        spectral_im=spectral_im,
        conv_w=conv_w,
        conv_b=conv_b,
        proj1_w=uniform((w, config.proj_hidden), w),
        proj1_b=np.zeros(config.proj_hidden),
        proj2_w=uniform((config.proj_hidden, config.out_channels), config.proj_hidden),
        proj2_b=np.zeros(config.out_channels),
    )


def bind(params: FnoParams) -> dict[str, Tensor]:
    """Wrap every parameter array in a leaf Tensor, keyed by manifest name."""
    return {name: Tensor(arr) for name, arr in params.named_arrays()}


def forward(params: FnoParams, a: Tensor, leaves: dict[str, Tensor] | None = None) -> Tensor:
    """Run the operator on a taped batch [B, N, in_channels] -> [B, N, out_channels].

    Pass leaves from bind() to train; without them fresh leaf tensors are
    created per call and their gradients are discarded with the tape.
    """
    cfg = params.config
    if a.data.ndim != 3 or a.data.shape[2] != cfg.in_channels:
        raise ValueError(f"expected input [B, N, {cfg.in_channels}], got {a.data.shape}")
    n = a.data.shape[1]
    if n < cfg.min_grid():
        raise ValueError(f"grid size {n} too small for kmax={cfg.kmax} (need >= {cfg.min_grid()})")
    if leaves is None:
        leaves = bind(params)
    v = ad.affine_pointwise(leaves["lift.w"], leaves["lift.b"], a)
    for i in range(cfg.depth):
        coeffs = ad.rdft_trunc(v, cfg.kmax)
        mixed = ad.spectral_apply(leaves[f"layer{i}.r_re"], leaves[f"layer{i}.r_im"], coeffs)
        spectral = ad.irdft(mixed, n)
        local = ad.conv1(leaves[f"layer{i}.conv.w"], v, leaves[f"layer{i}.conv.b"])
        v = ad.gelu(ad.add(spectral, local))
    h = ad.gelu(ad.affine_pointwise(leaves["proj1.w"], leaves["proj1.b"], v))
    return ad.affine_pointwise(leaves["proj2.w"], leaves["proj2.b"], h)


def apply(params: FnoParams, a: np.ndarray) -> np.ndarray:
    """Plain-array forward pass; accepts [N, C] or [B, N, C]."""
    arr = np.asarray(a, dtype=np.float64)
    squeeze = arr.ndim == 2
    if squeeze:
        arr = arr[None]
    out = forward(params, Tensor(arr)).data
    return out[0] if squeeze else out


def _mixed_norm(m: np.ndarray, p: float, q: float) -> float:
    """Grouped (p, q) norm: p over all leading (input-like) axes, q over the
    trailing output axis; p or q = inf means sup."""
    mags = np.abs(np.asarray(m, dtype=np.complex128)).reshape(-1, m.shape[-1])
    if np.isinf(p):
        inner = mags.max(axis=0)
    else:
        inner = np.sum(mags**p, axis=0) ** (1.0 / p)
    if np.isinf(q):
        return float(inner.max())
    return float(np.sum(inner**q) ** (1.0 / q))


def capacity_gamma(params: FnoParams, p: float = 2.0, q: float = 2.0) -> float:
    """Capacity surrogate gamma_{p,q}: product of grouped weight norms.

    gamma = ||P|| * ||Q1|| * ||Q2|| * prod_layers (||K_l|| * c^(1/p*) +
    modes^(1/p*) * ||R_l||) with p* the Holder conjugate of p (counts enter
    with exponent 0 at p = 1). Biases do not participate.
    """
    if not (1.0 <= p <= 2.0):
        raise ValueError(f"p must lie in [1, 2], got {p}")
    if q < 1.0:
        raise ValueError(f"q must be >= 1, got {q}")
    cfg = params.config
    if p == 1.0:
        count_pow = 0.0  # p* = inf
    else:
        count_pow = (p - 1.0) / p  # 1/p* for p* = p/(p-1)
    gamma = _mixed_norm(params.lift_w, p, q)
    gamma *= _mixed_norm(params.proj1_w, p, q)
    gamma *= _mixed_norm(params.proj2_w, p, q)
    for i in range(cfg.depth):
        k_norm = _mixed_norm(params.conv_w[i], p, q)
        r = params.spectral_re[i] + 1j * params.spectral_im[i]
        r_norm = _mixed_norm(r, p, q)
        gamma *= k_norm * float(cfg.conv_kernel) ** count_pow + float(cfg.modes) ** count_pow * r_norm
    return float(gamma)


def _manifest_dtype(arr: np.ndarray) -> str:
    if arr.dtype == np.float64:
        return "f64"
    if arr.dtype == np.complex128:
        return "c128"
    raise ValueError(f"unsupported dtype {arr.dtype}")


def _file_arrays(params: FnoParams) -> list[tuple[str, np.ndarray]]:
    """Manifest view with spectral weights recombined into complex arrays."""
    items = [("lift.w", params.lift_w), ("lift.b", params.lift_b)]
    for i in range(params.config.depth):
        items.append((f"layer{i}.r", params.spectral_re[i] + 1j * params.spectral_im[i]))
        items.append((f"layer{i}.conv.w", params.conv_w[i]))
        items.append((f"layer{i}.conv.b", params.conv_b[i]))
    items.extend(
        [
            ("proj1.w", params.proj1_w),
            ("proj1.b", params.proj1_b),
            ("proj2.w", params.proj2_w),
            ("proj2.b", params.proj2_b),
        ]
    )
    return items


def save(params: FnoParams, path, extra_header: dict | None = None) -> None:
    """Write the FFNM1 container: magic, u32 header length, JSON header, then
    raw little-endian row-major payloads in manifest order."""
    arrays = _file_arrays(params)
    header = {
        "version": FORMAT_VERSION,
        "config": params.config.to_dict(),
        "retained_modes": params.config.modes,
        "manifest": [[name, list(arr.shape), _manifest_dtype(arr)] for name, arr in arrays],
    }
    if extra_header:
        for key, value in extra_header.items():
            if key in header:
                raise ValueError(f"extra header key {key!r} collides with a required field")
            header[key] = value
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", len(blob)))
    buf.write(blob)
    for _, arr in arrays:
        buf.write(np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<")).tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load(path) -> tuple[FnoParams, dict]:
    """Read an FFNM1 file back into params plus its full JSON header."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise ValueError(f"not a model file: bad magic {raw[:4]!r}")
    if len(raw) < 8:
        raise ValueError("model file truncated before header length")
    (header_len,) = struct.unpack("<I", raw[4:8])
    if len(raw) < 8 + header_len:
        raise ValueError("model file truncated inside header")
    header = json.loads(raw[8 : 8 + header_len].decode("utf-8"))
    if header.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {header.get('version')!r}")
    config = FnoConfig.from_dict(header["config"])
    offset = 8 + header_len
    arrays: dict[str, np.ndarray] = {}
    for name, shape, dtype_tag in header["manifest"]:
        if dtype_tag == "f64":
            dtype = np.dtype("<f8")
        elif dtype_tag == "c128":
            dtype = np.dtype("<c16")
        else:
            raise ValueError(f"unknown dtype tag {dtype_tag!r} for tensor {name!r}")
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = count * dtype.itemsize
        if offset + nbytes > len(raw):
            raise ValueError(f"model file truncated inside tensor {name!r}")
        arr = np.frombuffer(raw, dtype=dtype, count=count, offset=offset).reshape(shape)
        arrays[name] = arr.astype(dtype.newbyteorder("="))
        offset += nbytes
    if offset != len(raw):
        raise ValueError(f"{len(raw) - offset} trailing bytes after final tensor")

    def take(name, expected_shape):
        if name not in arrays:
            raise ValueError(f"model file missing tensor {name!r}")
        arr = arrays[name]
        if tuple(arr.shape) != tuple(expected_shape):
            raise ValueError(f"tensor {name!r} has shape {arr.shape}, expected {tuple(expected_shape)}")
        return arr

    w, ck, modes = config.width, config.conv_kernel, config.modes
    spectral_re, spectral_im, conv_w, conv_b = [], [], [], []
    for i in range(config.depth):
        r = take(f"layer{i}.r", (modes, w, w))
        if r.dtype != np.complex128:
            raise ValueError(f"tensor layer{i}.r must be complex128")
        spectral_re.append(np.ascontiguousarray(r.real))
        spectral_im.append(np.ascontiguousarray(r.imag))
        conv_w.append(take(f"layer{i}.conv.w", (ck, w, w)))
        conv_b.append(take(f"layer{i}.conv.b", (w,)))
    params = FnoParams(
        config=config,
        lift_w=take("lift.w", (config.in_channels, w)),
        lift_b=take("lift.b", (w,)),
        spectral_re=spectral_re,
        spectral_im=spectral_im,
        conv_w=conv_w,
        conv_b=conv_b,
        proj1_w=take("proj1.w", (w, config.proj_hidden)),
        proj1_b=take("proj1.b", (config.proj_hidden,)),
        proj2_w=take("proj2.w", (config.proj_hidden, config.out_channels)),
        proj2_b=take("proj2.b", (config.out_channels,)),
    )
    return params, header
