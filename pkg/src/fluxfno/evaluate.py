"""Evaluation harness: rollout-vs-reference metrics, the out-of-distribution
and resolution suites, the consistency-weight ablation, and the diagnostic
generalization bound.

Reports are plain rows (label, time, rel_l2, linf) with a metadata dict,
serializable to JSON (losslessly, via repr floats) and to an aligned text
table.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import fno, rollout, training
from .datasets import Dataset, GrfSpec, OOD_SCALE, grf_sample, step_function, triangular_pulse
from .grid import GridFunction, linf, rel_l2
from .rollout import FnoFlux, SchemeConfig, integrate_to
from .schemes import PhysicalFlux, exact_advection, exact_burgers_riemann, reference_step


@dataclass(frozen=True)
class ReportRow:
    label: str
    time: float
    rel_l2: float
    linf: float


@dataclass
class ExperimentReport:
    """Named metric rows plus free-form metadata about how they were made."""

    rows: list[ReportRow]
    metadata: dict = field(default_factory=dict)

    def row(self, label: str) -> ReportRow:
        for r in self.rows:
            if r.label == label:
                return r
        raise KeyError(f"no row labeled {label!r}")

    def to_json(self) -> str:
        doc = {
            "rows": [[r.label, r.time, r.rel_l2, r.linf] for r in self.rows],
            "metadata": self.metadata,
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentReport":
        doc = json.loads(text)
        rows = [ReportRow(label, time, r, li) for label, time, r, li in doc["rows"]]
        return cls(rows=rows, metadata=doc.get("metadata", {}))

    def to_text(self) -> str:
        header = ("label", "time", "rel_l2", "linf")
        body = [
            (r.label, f"{r.time:.6g}", f"{r.rel_l2:.6e}", f"{r.linf:.6e}") for r in self.rows
        ]
        widths = [max(len(h), *(len(row[i]) for row in body)) if body else len(h)
                  for i, h in enumerate(header)]
        lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(header))]
        for row in body:
            lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
        return "\n".join(lines) + "\n"


def _nearest_steps(times, dt: float, n_steps: int) -> tuple[list[int], list[float]]:
    steps, offsets = [], []
    for t in times:
        n = int(round(t / dt))
        if n < 0 or n > n_steps:
            raise ValueError(f"time {t} is outside the dataset horizon {n_steps * dt:.6g}")
        steps.append(n)
        offsets.append(t - n * dt)
    return steps, offsets


def evaluate(
    op,
    dataset: Dataset,
    times,
    integrator: str = "euler",
    metadata: dict | None = None,
    threads: int = 1,
) -> ExperimentReport:
    """Roll the operator from each stored initial state at the dataset's dt
    and compare against the stored references at the requested times.

    Per-time rows hold means over the test functions; the interval row holds
    the metrics of all evaluated slices concatenated per function, averaged.
    Times that fall between steps snap to the nearest step, with the offsets
    recorded in the metadata.
    """
    times = sorted(float(t) for t in times)
    if not times:
        raise ValueError("need at least one evaluation time")
    header = dataset.header
    steps, offsets = _nearest_steps(times, header.dt, header.n_steps)
    n_max = max(steps)
    scheme = SchemeConfig(p=op.p, q=op.q, integrator=integrator, dt_mode="fixed", dt=header.dt)

    def one_function(i: int) -> tuple[np.ndarray, np.ndarray]:
        u0 = GridFunction(dataset.states[i, 0], dataset.dx)
        if n_max == 0:
            pred = dataset.states[i, :1]
        else:
            traj = integrate_to(op, u0, n_max * header.dt, scheme)
            pred = traj.states
        pred_slices = np.stack([pred[n] for n in steps])
        ref_slices = np.stack([dataset.states[i, n] for n in steps])
        return pred_slices, ref_slices

    indices = range(header.n_funcs)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one_function, indices))
    else:
        results = [one_function(i) for i in indices]

    per_time_l2 = np.zeros(len(times))
    per_time_linf = np.zeros(len(times))
    agg_l2 = 0.0
    agg_linf = 0.0
    for pred_slices, ref_slices in results:
        for k in range(len(times)):
            per_time_l2[k] += rel_l2(pred_slices[k], ref_slices[k])
            per_time_linf[k] += linf(pred_slices[k], ref_slices[k])
        agg_l2 += rel_l2(pred_slices.ravel(), ref_slices.ravel())
        agg_linf += linf(pred_slices.ravel(), ref_slices.ravel())
    n_funcs = header.n_funcs
    rows = [
        ReportRow(f"t={t:g}", t, per_time_l2[k] / n_funcs, per_time_linf[k] / n_funcs)
        for k, t in enumerate(times)
    ]
    rows.append(ReportRow("interval", max(times), agg_l2 / n_funcs, agg_linf / n_funcs))
    meta = {
        "equation": header.equation,
        "dt": header.dt,
        "nx": header.nx,
        "n_funcs": n_funcs,
        "integrator": integrator,
        "times": times,
        "snap_offsets": offsets,
    }
    if metadata:
        meta.update(metadata)
    return ExperimentReport(rows=rows, metadata=meta)


def _compare_case(op, u0: GridFunction, refs: list[np.ndarray], times, dt: float,
                  integrator: str, label: str) -> list[ReportRow]:
    steps, _ = _nearest_steps(times, dt, int(round(max(times) / dt)) + 1)
    if max(steps) == 0:
        states = u0.values[None]
    else:
        scheme = SchemeConfig(p=op.p, q=op.q, integrator=integrator, dt_mode="fixed", dt=dt)
        states = integrate_to(op, u0, max(steps) * dt, scheme).states
    return [
        ReportRow(f"{label} t={t:g}", t, rel_l2(states[n], refs[k]), linf(states[n], refs[k]))
        for k, (t, n) in enumerate(zip(times, steps))
    ]


def _periodic_step_reference(n: int, t: float) -> np.ndarray:
    """Exact Burgers solution of the periodic unit step (1 for x < 0.5).

    The jump at x0 = 0.5 drives a right-moving shock, the wrap at x = 0 a
    rarefaction; the two do not interact before t = 1, far past the horizons
    evaluated here.
    """
    x = np.arange(n) / n
    shock = exact_burgers_riemann(1.0, 0.0, 0.5, x, t)
    fan = exact_burgers_riemann(0.0, 1.0, 0.0, x, t)
    return np.minimum(shock, fan)


def _fine_burgers_reference(u0_fine: GridFunction, times, factor: int) -> list[np.ndarray]:
    """March the second-order reference at fine resolution, restricted back
    onto the coarse nodes (which the fine grid contains)."""
    refs = []
    u = u0_fine
    t = 0.0
    flux = PhysicalFlux("burgers")
    for target in times:
        while t < target - 1e-13:
            dt = min(0.4 * u.dx / max(flux.max_speed(u.values), 1e-12), target - t)
            u, _ = reference_step(u, flux, dt)
            t += dt
        refs.append(u.values[::factor].copy())
    return refs


def ood_suite(
    op,
    equation: str,
    n: int = 256,
    dt: float | None = None,
    times=None,
    seed: int = 0,
    integrator: str = "euler",
) -> ExperimentReport:
    """Out-of-distribution cases: shapes never seen in training.

    Advection: triangular pulse and a rough GRF (scale 0.03), both against
    exact translation. Burgers: the unit step against the exact two-wave
    solution, and a rough GRF against a 4x-resolution reference run.
    """
    if equation == "advection":
        dt = 1.0 / n if dt is None else dt
        times = [0.5, 1.0] if times is None else sorted(float(t) for t in times)
        rows: list[ReportRow] = []
        pulse = triangular_pulse(n)
        refs = [exact_advection(pulse, 1.0, t).values for t in times]
        rows += _compare_case(op, pulse, refs, times, dt, integrator, "pulse")
        rough = grf_sample(GrfSpec(n=n, scale=OOD_SCALE, seed=seed))
        refs = [exact_advection(rough, 1.0, t).values for t in times]
        rows += _compare_case(op, rough, refs, times, dt, integrator, "grf_rough")
    elif equation == "burgers":
        dt = 1e-2 / n if dt is None else dt
        times = [0.15, 0.3] if times is None else sorted(float(t) for t in times)
        rows = []
        step = step_function(n)
        refs = [_periodic_step_reference(n, t) for t in times]
        rows += _compare_case(op, step, refs, times, dt, integrator, "step")
        factor = 4
        rough_fine = grf_sample(GrfSpec(n=factor * n, scale=OOD_SCALE, seed=seed))
        rough = GridFunction(rough_fine.values[::factor], 1.0 / n)
        refs = _fine_burgers_reference(rough_fine, times, factor)
        rows += _compare_case(op, rough, refs, times, dt, integrator, "grf_rough")
    else:
        raise ValueError(f"unknown equation {equation!r}")
    meta = {"equation": equation, "nx": n, "dt": dt, "times": times, "seed": seed,
            "integrator": integrator}
    return ExperimentReport(rows=rows, metadata=meta)


def resolution_suite(
    op,
    equation: str,
    resolutions=(128, 256, 512),
    scale: float = 0.1,
    seed: int = 0,
    t_end: float = 1.0,
    integrator: str = "euler",
    courant: float | None = None,
) -> ExperimentReport:
    """Apply one operator across grid resolutions, dt tracking dx.

    Each resolution gets its own in-distribution GRF draw; advection compares
    against exact translation at unit Courant, Burgers against a restricted
    4x reference at the given Courant number (default 0.4).
    """
    rows: list[ReportRow] = []
    flux = PhysicalFlux(equation)
    for n in resolutions:
        if equation == "advection":
            u0 = grf_sample(GrfSpec(n=n, scale=scale, seed=seed))
            dt = (1.0 if courant is None else courant) / n
            ref = exact_advection(u0, 1.0, t_end).values
        else:
            factor = 4
            fine = grf_sample(GrfSpec(n=factor * n, scale=scale, seed=seed))
            u0 = GridFunction(fine.values[::factor], 1.0 / n)
            c = 0.4 if courant is None else courant
            dt = c * u0.dx / max(flux.max_speed(u0.values), 1e-12)
            ref = _fine_burgers_reference(fine, [t_end], factor)[0]
        case = _compare_case(op, u0, [ref], [t_end], dt, integrator, f"n={n}")
        rows += case
    return ExperimentReport(
        rows=rows,
        metadata={"equation": equation, "resolutions": list(resolutions), "scale": scale,
                  "seed": seed, "t_end": t_end, "integrator": integrator},
    )


def ablation_compare(
    train_dataset: Dataset,
    model_config: fno.FnoConfig,
    train_config: training.TrainConfig,
    p: int = 0,
    q: int = 1,
    times=(0.3,),
    ood_n: int | None = None,
) -> dict[str, ExperimentReport]:
    """Train with the configured consistency weight and with lambda = 0 from
    identical seeds, then score both on the Burgers step OOD case."""
    if train_dataset.header.equation != "burgers":
        raise ValueError("the ablation is defined on Burgers data")
    flux = PhysicalFlux("burgers")
    trajectories = [train_dataset.trajectory(i) for i in range(train_dataset.header.n_funcs)]
    n = train_dataset.header.nx if ood_n is None else ood_n
    out: dict[str, ExperimentReport] = {}
    for label, lam in (("with_consistency", train_config.lam), ("without_consistency", 0.0)):
        cfg = training.TrainConfig.from_json({**train_config.to_json_dict(), "lambda": lam})
        params = fno.init_params(model_config, cfg.seed)
        result = training.train(params, trajectories, flux, cfg, p=p, q=q)
        op = FnoFlux(result.params, p, q)
        report = ood_suite(op, "burgers", n=n, dt=train_dataset.header.dt, times=times)
        report.metadata["lambda"] = lam
        report.metadata["final_loss"] = result.history[-1].total
        out[label] = report
    return out


@dataclass(frozen=True)
class BoundInputs:
    """Everything the diagnostic generalization bound consumes.

    gamma: capacity of the trained operator; m: sample count; delta:
    confidence level; eps_tm / eps_consi: achieved loss levels; h and eps_h:
    the discretization step and the stability gap of the reference scheme at
    that step; c1..c3: the unknown constants, defaulting to 1.
    """

    gamma: float
    m: int
    delta: float
    eps_tm: float
    eps_consi: float
    h: float
    eps_h: float = 0.0
    c1: float = 1.0
    c2: float = 1.0
    c3: float = 1.0

    def __post_init__(self) -> None:
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")
        if not (0.0 < self.delta < 1.0):
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.gamma < 0.0 or self.eps_tm < 0.0 or self.eps_consi < 0.0 or self.eps_h < 0.0:
            raise ValueError("gamma and the eps terms must be nonnegative")
        if self.h <= 0.0:
            raise ValueError(f"h must be positive, got {self.h}")


def theorem1_bound(b: BoundInputs) -> float:
    """min of the direct time-marching branch and the consistency branch.

    Both branches decay like 1/sqrt(m) in the capacity term and vanish with
    their loss levels; the consistency branch pays the scheme's own gap
    eps_h, scaled by h.
    """
    tail = 1.0 + np.sqrt(2.0 * np.log(4.0 / b.delta) / b.m)
    direct = b.c3 * b.gamma * b.eps_tm / np.sqrt(b.m) + b.eps_tm**2 * tail
    via_consi = b.h * (
        b.c1 * b.gamma * b.eps_consi / np.sqrt(b.m) + b.eps_consi**2 * tail + b.c2 * b.eps_h
    )
    return float(min(direct, via_consi))
