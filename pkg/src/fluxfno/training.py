"""Training of the flux operator: time-marching and consistency losses,
Adam with coupled L2 weight decay, and a step-decay learning rate.

Batches are contiguous windows of one trajectory's transitions. The
time-marching residual reuses a single flux evaluation per state and rolls
it for the left interface, exactly mirroring how the rollout differences
fluxes, so trajectories generated by the model itself have zero loss.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import fno
from .autodiff import Tensor
from .grid import Trajectory
from .schemes import PhysicalFlux

_TRAIN_KEYS = {
    "lr": 1e-3,
    "weight_decay": 1e-3,
    "adam_beta1": 0.9,
    "adam_beta2": 0.999,
    "adam_eps": 1e-8,
    "sched_step": 50,
    "sched_gamma": 0.5,
    "epochs": 1000,
    "lambda": 0.01,
    "batch_size": 64,
    "integrator": "euler",
    "seed": 0,
}


@dataclass(frozen=True)
class TrainConfig:
    """Optimization hyperparameters; lambda weights the consistency loss."""

    lr: float = 1e-3
    weight_decay: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    sched_step: int = 50
    sched_gamma: float = 0.5
    epochs: int = 1000
    lam: float = 0.01
    batch_size: int = 64
    integrator: str = "euler"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.lr <= 0.0 or self.adam_eps <= 0.0:
            raise ValueError("lr and adam_eps must be positive")
        if not (0.0 <= self.adam_beta1 < 1.0 and 0.0 <= self.adam_beta2 < 1.0):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.weight_decay < 0.0 or self.lam < 0.0:
            raise ValueError("weight_decay and lambda must be nonnegative")
        if self.sched_step < 1 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("sched_step, epochs, batch_size must be >= 1")
        if not (0.0 < self.sched_gamma <= 1.0):
            raise ValueError("sched_gamma must lie in (0, 1]")
        if self.integrator not in ("euler", "rk2"):
            raise ValueError(f"unknown integrator {self.integrator!r}")

    @classmethod
    def from_json(cls, doc: str | dict) -> "TrainConfig":
        """Parse the JSON form; field names are exact and unknown keys fail."""
        if isinstance(doc, str):
            doc = json.loads(doc)
        unknown = set(doc) - set(_TRAIN_KEYS)
        if unknown:
            raise ValueError(f"unknown training config keys: {sorted(unknown)}")
        merged = dict(_TRAIN_KEYS)
        merged.update(doc)
        merged["lam"] = merged.pop("lambda")
        return cls(**merged)

    def to_json_dict(self) -> dict:
        doc = {k: getattr(self, "lam" if k == "lambda" else k) for k in _TRAIN_KEYS}
        return doc


def lr_at(config: TrainConfig, epoch: int) -> float:
    """Step decay lr * gamma^floor(epoch / step); epoch counts from 0."""
    if epoch < 0:
        raise ValueError(f"epoch must be nonnegative, got {epoch}")
    return config.lr * config.sched_gamma ** (epoch // config.sched_step)


@dataclass
class AdamState:
    """First/second moment accumulators plus the shared step counter."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: fno.FnoParams) -> "AdamState":
        names = [name for name, _ in params.named_arrays()]
        zeros = {name: np.zeros_like(arr) for name, arr in params.named_arrays()}
        return cls(m={n: zeros[n].copy() for n in names}, v=zeros)


def adam_step(
    params: fno.FnoParams,
    grads: dict[str, np.ndarray],
    state: AdamState,
    config: TrainConfig,
    lr: float,
) -> None:
    """One coupled-weight-decay Adam update, in place on params.

    g <- grad + weight_decay * param, then the standard bias-corrected
    moment update param -= lr * m_hat / (sqrt(v_hat) + eps). Non-finite
    gradients abort naming the offending tensor.
    """
    state.t += 1
    b1, b2 = config.adam_beta1, config.adam_beta2
    bias1 = 1.0 - b1**state.t
    bias2 = 1.0 - b2**state.t
    for name, arr in params.named_arrays():
        if name not in grads:
            raise ValueError(f"missing gradient for tensor {name!r}")
        g = np.asarray(grads[name], dtype=np.float64)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in tensor {name!r}")
        g = g + config.weight_decay * arr
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        arr -= lr * (m / bias1) / (np.sqrt(v / bias2) + config.adam_eps)


def _contiguous_start(indices) -> int:
    indices = np.asarray(indices, dtype=np.int64)
    if indices.ndim != 1 or indices.size == 0:
        raise ValueError("batch index list must be a nonempty 1-D sequence")
    if indices.size > 1 and not np.all(np.diff(indices) == 1):
        raise ValueError(f"batch is not time-contiguous: {indices.tolist()}")
    if indices[0] < 0:
        raise ValueError("batch indices must be nonnegative")
    return int(indices[0])


def _stencil_tensor(states: Tensor, p: int, q: int) -> Tensor:
    """Left-interface stencil channels (u_{j-p}, ..., u_{j+q}) on the tape."""
    return ad.concat_channels([ad.roll(states, -k, axis=1) for k in range(-p, q + 1)])


def _tm_residual(g_apply, traj: Trajectory, start: int, count: int, p: int, q: int) -> Tensor:
    if start + count > traj.n_steps:
        raise ValueError(
            f"batch [{start}, {start + count}) exceeds the {traj.n_steps} transitions available"
        )
    cur = Tensor(traj.states[start : start + count, :, None])
    nxt = Tensor(traj.states[start + 1 : start + count + 1, :, None])
    flux = g_apply(_stencil_tensor(cur, p, q))
    diff = ad.sub(flux, ad.roll(flux, 1, axis=1))
    ratio = (traj.dts[start : start + count] / traj.dx)[:, None, None]
    return ad.add(ad.sub(nxt, cur), ad.mul_const(diff, ratio))


def loss_tm(g_apply, traj: Trajectory, indices, p: int, q: int) -> Tensor:
    """Time-marching loss: squared conservative one-step residuals, summed
    over a contiguous batch of transitions."""
    start = _contiguous_start(indices)
    return ad.sum_sq(_tm_residual(g_apply, traj, start, len(np.atleast_1d(indices)), p, q))


def _rk_residual(g_apply, traj: Trajectory, start: int, count: int, p: int, q: int) -> Tensor:
    if start + count > traj.n_steps:
        raise ValueError(
            f"batch [{start}, {start + count}) exceeds the {traj.n_steps} transitions available"
        )
    cur = Tensor(traj.states[start : start + count, :, None])
    nxt = Tensor(traj.states[start + 1 : start + count + 1, :, None])
    ratio = (traj.dts[start : start + count] / traj.dx)[:, None, None]

    def dt_div(states: Tensor) -> Tensor:
        flux = g_apply(_stencil_tensor(states, p, q))
        return ad.mul_const(ad.sub(flux, ad.roll(flux, 1, axis=1)), ratio)

    stage = ad.sub(cur, dt_div(cur))
    pred = ad.mul_const(ad.add(cur, ad.sub(stage, dt_div(stage))), 0.5)
    return ad.sub(nxt, pred)


def loss_tm_rk(g_apply, traj: Trajectory, indices, p: int, q: int) -> Tensor:
    """Time-marching loss against the full Heun composite; gradients flow
    through both stages."""
    start = _contiguous_start(indices)
    return ad.sum_sq(_rk_residual(g_apply, traj, start, len(np.atleast_1d(indices)), p, q))


def loss_consi(g_apply, states: np.ndarray, flux: PhysicalFlux, p: int, q: int) -> Tensor:
    """Consistency loss ||G(u, ..., u) - F(u)||^2 summed over batch states."""
    states = np.asarray(states, dtype=np.float64)
    if states.ndim != 2:
        raise ValueError(f"states must be [B, N], got shape {states.shape}")
    constant = Tensor(np.repeat(states[:, :, None], p + q + 1, axis=2))
    target = Tensor(flux(states)[:, :, None])
    return ad.sum_sq(ad.sub(g_apply(constant), target))


def total_loss(
    g_apply,
    traj: Trajectory,
    indices,
    flux: PhysicalFlux,
    lam: float,
    p: int,
    q: int,
    integrator: str = "euler",
) -> tuple[Tensor, float, float]:
    """Combined node L_tm + lambda * L_consi plus the two raw values."""
    tm_fn = loss_tm if integrator == "euler" else loss_tm_rk
    tm = tm_fn(g_apply, traj, indices, p, q)
    start = _contiguous_start(indices)
    batch_states = traj.states[start : start + len(np.atleast_1d(indices))]
    consi = loss_consi(g_apply, batch_states, flux, p, q)
    total = ad.add(tm, ad.mul_const(consi, lam))
    return total, float(tm.data), float(consi.data)


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    loss_tm: float
    loss_consi: float
    total: float


@dataclass
class TrainResult:
    params: fno.FnoParams
    history: list[EpochRecord] = field(default_factory=list)


def _train(
    params: fno.FnoParams,
    trajectories: list[Trajectory],
    flux: PhysicalFlux,
    config: TrainConfig,
    p: int,
    q: int,
    integrator: str,
    callback=None,
) -> TrainResult:
    if not trajectories:
        raise ValueError("need at least one training trajectory")
    for i, traj in enumerate(trajectories):
        if traj.n_steps % config.batch_size != 0:
            raise ValueError(
                f"batch_size {config.batch_size} must divide the {traj.n_steps} "
                f"transitions of trajectory {i}"
            )
    params = params.copy()
    state = AdamState.for_params(params)
    history: list[EpochRecord] = []
    for epoch in range(config.epochs):
        lr = lr_at(config, epoch)
        tm_sum = consi_sum = total_sum = 0.0
        n_batches = 0
        for traj in trajectories:
            for start in range(0, traj.n_steps, config.batch_size):
                leaves = fno.bind(params)
                g_apply = lambda t: fno.forward(params, t, leaves=leaves)
                indices = range(start, start + config.batch_size)
                total, tm_val, consi_val = total_loss(
                    g_apply, traj, indices, flux, config.lam, p, q, integrator
                )
                total.backward()
                grads = {name: leaves[name].grad for name in leaves}
                for name, g in grads.items():
                    if g is None:
                        grads[name] = np.zeros_like(leaves[name].data)
                adam_step(params, grads, state, config, lr)
                tm_sum += tm_val
                consi_sum += consi_val
                total_sum += float(total.data)
                n_batches += 1
        record = EpochRecord(
            epoch=epoch,
            lr=lr,
            loss_tm=tm_sum / n_batches,
            loss_consi=consi_sum / n_batches,
            total=total_sum / n_batches,
        )
        history.append(record)
        if callback is not None:
            callback(record)
    return TrainResult(params=params, history=history)


def train_basic(params, trajectories, flux, config, p: int = 0, q: int = 1, callback=None):
    """Train against one-step Euler residuals (forward-difference marching)."""
    return _train(params, trajectories, flux, config, p, q, "euler", callback)


def train_rk(params, trajectories, flux, config, p: int = 0, q: int = 1, callback=None):
    """Train against the two-stage Heun composite residuals."""
    return _train(params, trajectories, flux, config, p, q, "rk2", callback)


def train(params, trajectories, flux, config, p: int = 0, q: int = 1, callback=None):
    """Dispatch on config.integrator."""
    if config.integrator == "rk2":
        return train_rk(params, trajectories, flux, config, p, q, callback)
    return train_basic(params, trajectories, flux, config, p, q, callback)
