"""Command-line entry point: gen-data, train, infer, eval, capacity, plot.

Exit codes: 0 on success, 1 on runtime failures (blow-up, CFL aborts, bad
files), 2 on configuration errors. All randomness descends from --seed, and
identical invocations produce byte-identical outputs, figures included.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import datasets, fno, plotting, rollout, training
from .datasets import Dataset, DatasetHeader, GrfSpec
from .evaluate import evaluate
from .grid import GridFunction, Trajectory
from .rollout import AnalyticFlux, BlowUpError, FnoFlux, SchemeConfig
from .schemes import CflViolation, PhysicalFlux

_CONFIG_SECTIONS = ("data", "model", "train", "eval")
_DATA_KEYS = ("equation", "n_funcs", "nx", "dt", "n_steps", "seed", "scale")
_MODEL_KEYS = ("width", "depth", "kmax", "conv_kernel", "proj_hidden", "p", "q")
_EVAL_KEYS = ("times", "integrator", "threads")


class ConfigError(ValueError):
    pass


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(doc) - set(_CONFIG_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    for section, keys in (("data", _DATA_KEYS), ("model", _MODEL_KEYS), ("eval", _EVAL_KEYS)):
        extra = set(doc.get(section, {})) - set(keys)
        if extra:
            raise ConfigError(f"unknown keys in config section {section!r}: {sorted(extra)}")
    return doc


def _parse_times(text: str) -> list[float]:
    try:
        times = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --times value {text!r}") from exc
    if not times:
        raise ConfigError("--times needs at least one value")
    return times


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _model_section(doc: dict, p: int | None = None, q: int | None = None) -> tuple[fno.FnoConfig, int, int]:
    section = dict(doc.get("model", {}))
    p = section.pop("p", 0) if p is None else p
    q = section.pop("q", 1) if q is None else q
    section.pop("p", None)
    section.pop("q", None)
    if p < 0 or q < 0:
        raise ConfigError("stencil extents p, q must be nonnegative")
    try:
        config = fno.FnoConfig(in_channels=p + q + 1, **section)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad model config: {exc}") from exc
    return config, p, q


def cmd_gen_data(args) -> int:
    doc = _load_config(args.config).get("data", {})

    def pick(flag_value, key, default=None):
        if flag_value is not None:
            return flag_value
        return doc.get(key, default)

    equation = pick(args.equation, "equation")
    if equation is None:
        raise ConfigError("--equation (or a config data.equation) is required")
    nx = int(pick(args.nx, "nx", 256))
    n_funcs = int(pick(args.n_funcs, "n_funcs", 10))
    seed = int(pick(args.seed, "seed", 0))
    scale = float(pick(args.scale, "scale", datasets.IN_DIST_SCALE))
    default_dt = 1.0 / nx if equation == "advection" else 1e-2 / nx
    dt = float(pick(args.dt, "dt", default_dt))
    n_steps = pick(args.n_steps, "n_steps")
    if n_steps is None:
        t_end = pick(args.t_end, None, 1.0 if equation == "advection" else 0.3)
        n_steps = int(round(float(t_end) / dt))
    n_steps = int(n_steps)
    if nx < 4 or n_funcs < 1 or n_steps < 1 or dt <= 0 or scale <= 0:
        raise ConfigError("gen-data needs nx >= 4, n_funcs >= 1, n_steps >= 1, dt > 0, scale > 0")
    dataset = datasets.make_dataset(equation, n_funcs, nx, dt, n_steps, seed, scale)
    datasets.write_dataset(dataset, args.out, extra_header={"scale": scale})
    resolved = {
        "equation": equation,
        "n_funcs": n_funcs,
        "nx": nx,
        "dt": dt,
        "n_steps": n_steps,
        "seed": seed,
        "scale": scale,
        "generator": dataset.header.generator,
    }
    Path(str(args.out) + ".json").write_text(json.dumps(resolved, sort_keys=True, indent=2) + "\n")
    print(f"wrote {args.out}: {equation}, {n_funcs} functions, {n_steps} steps, nx={nx}")
    return 0


def cmd_train(args) -> int:
    doc = _load_config(args.config)
    model_config, p, q = _model_section(doc)
    try:
        train_config = training.TrainConfig.from_json(doc.get("train", {}))
    except ValueError as exc:
        raise ConfigError(f"bad train config: {exc}") from exc
    dataset, _ = datasets.read_dataset(args.data)
    flux = PhysicalFlux(dataset.header.equation)
    trajectories = [dataset.trajectory(i) for i in range(dataset.header.n_funcs)]
    params = fno.init_params(model_config, train_config.seed)
    loss_csv = args.loss_csv or str(args.out) + ".loss.csv"
    with open(loss_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "lr", "loss_tm", "loss_consi", "total"])

        def log_epoch(rec: training.EpochRecord) -> None:
            writer.writerow(
                [rec.epoch, repr(rec.lr), repr(rec.loss_tm), repr(rec.loss_consi), repr(rec.total)]
            )

        result = training.train(params, trajectories, flux, train_config, p=p, q=q,
                                callback=log_epoch)
    extra = {
        "equation": dataset.header.equation,
        "scheme": {"p": p, "q": q, "dt": dataset.header.dt},
        "train": train_config.to_json_dict(),
        "data_seed": dataset.header.seed,
    }
    fno.save(result.params, args.out, extra_header=extra)
    final = result.history[-1]
    print(
        f"wrote {args.out}: {train_config.epochs} epochs, final total loss "
        f"{final.total:.6e} (tm {final.loss_tm:.6e}, consi {final.loss_consi:.6e})"
    )
    return 0


def _load_operator(args) -> tuple[object, dict]:
    """The flux operator plus a header-ish dict (equation, dt, p, q)."""
    if args.analytic:
        if args.analytic == "godunov":
            equation = "burgers"
        else:
            equation = getattr(args, "equation", None) or "advection"
        info = {"equation": equation, "p": 0, "q": 1, "dt": None, "source": f"analytic:{args.analytic}"}
        if args.analytic == "lax":
            nx = getattr(args, "nx", None) or 256
            dt = getattr(args, "dt", None)
            if dt is None:
                raise ConfigError("--analytic lax needs an explicit --dt for its dx/dt ratio")
            op = AnalyticFlux("lax", a=1.0, dx_over_dt=(1.0 / nx) / dt)
        else:
            op = AnalyticFlux(args.analytic, a=1.0)
        return op, info
    if not args.model:
        raise ConfigError("either --model or --analytic is required")
    params, header = fno.load(args.model)
    scheme = header.get("scheme", {})
    p = int(scheme.get("p", 0))
    q = int(scheme.get("q", 1))
    info = {
        "equation": header.get("equation"),
        "p": p,
        "q": q,
        "dt": scheme.get("dt"),
        "source": str(args.model),
        "model_sha256": _sha256(args.model),
    }
    return FnoFlux(params, p, q), info


def cmd_infer(args) -> int:
    op, info = _load_operator(args)
    nx = args.nx or 256
    seed = args.seed or 0
    if args.init == "grf":
        u0 = datasets.grf_sample(GrfSpec(n=nx, scale=args.scale or datasets.IN_DIST_SCALE, seed=seed))
    elif args.init == "step":
        u0 = datasets.step_function(nx)
    elif args.init == "pulse":
        u0 = datasets.triangular_pulse(nx)
    else:
        src, _ = datasets.read_dataset(args.init)
        u0 = GridFunction(src.states[0, 0], src.dx)
        nx = src.header.nx
    equation = info.get("equation") or "advection"
    dt = args.dt if args.dt is not None else info.get("dt")
    if args.dt_mode == "cfl":
        scheme = SchemeConfig(p=info["p"], q=info["q"], integrator=args.scheme,
                              dt_mode="cfl", courant=args.courant)
    else:
        if dt is None:
            dt = 1.0 / nx if equation == "advection" else 1e-2 / nx
        scheme = SchemeConfig(p=info["p"], q=info["q"], integrator=args.scheme,
                              dt_mode="fixed", dt=float(dt))
    flux = PhysicalFlux(equation)
    truncated = False
    try:
        traj = rollout.integrate_to(op, u0, args.t_end, scheme, flux=flux)
    except BlowUpError as exc:
        traj = exc.trajectory
        truncated = True
        print(f"error: {exc}", file=sys.stderr)
    if truncated and traj.n_steps == 0:
        print("error: no steps completed before blow-up", file=sys.stderr)
        return 1
    _write_trajectory(traj, args.out, equation, seed, info, truncated, scheme)
    if truncated:
        return 1
    print(f"wrote {args.out}: {traj.n_steps} steps to t={float(traj.times[-1]):g}")
    return 0


def _write_trajectory(traj: Trajectory, out, equation: str, seed: int, info: dict,
                      truncated: bool, scheme: SchemeConfig) -> None:
    if traj.n_steps > 0:
        nominal_dt = float(traj.dts[0])
    else:  # zero-horizon run: fall back to the scheme's nominal step
        nominal_dt = float(scheme.dt) if scheme.dt is not None else traj.dx
    header = DatasetHeader(
        version=datasets.FORMAT_VERSION,
        equation=equation,
        n_funcs=1,
        n_steps=traj.n_steps,
        nx=traj.n,
        dt=nominal_dt,
        generator=info.get("source", "rollout"),
        seed=seed,
    )
    extra: dict = {}
    if truncated:
        extra["truncated"] = True
    if not np.allclose(traj.dts, nominal_dt):
        extra["dts"] = [repr(float(d)) for d in traj.dts]
    datasets.write_dataset(Dataset(header, traj.states[None]), out, extra_header=extra or None)


def cmd_eval(args) -> int:
    op, info = _load_operator(args)
    dataset, _ = datasets.read_dataset(args.data)
    times = _parse_times(args.times)
    metadata = {"operator": info.get("source"), "data_sha256": _sha256(args.data)}
    if "model_sha256" in info:
        metadata["model_sha256"] = info["model_sha256"]
    report = evaluate(op, dataset, times, integrator=args.integrator,
                      metadata=metadata, threads=args.threads)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    Path(str(out) + ".json").write_text(report.to_json() + "\n")
    Path(str(out) + ".txt").write_text(report.to_text())
    with open(str(out) + ".csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label", "time", "rel_l2", "linf"])
        for row in report.rows:
            writer.writerow([row.label, repr(row.time), repr(row.rel_l2), repr(row.linf)])
    plotting.render_metrics(
        str(out) + ".svg",
        [(r.label, r.time, r.rel_l2, r.linf) for r in report.rows],
        title=f"{dataset.header.equation}: rollout error",
    )
    sys.stdout.write(report.to_text())
    return 0


def cmd_capacity(args) -> int:
    params, _ = fno.load(args.model)
    gamma = fno.capacity_gamma(params, p=args.p, q=args.q)
    print(f"{gamma:.12g}")
    return 0


def cmd_plot(args) -> int:
    traj, header_doc = datasets.read_dataset(args.traj)
    ref = None
    if args.ref:
        ref, _ = datasets.read_dataset(args.ref)
        if ref.header.nx != traj.header.nx:
            raise ConfigError("--ref grid does not match the trajectory grid")
    times = _parse_times(args.times)
    dt = traj.header.dt
    x = np.arange(traj.header.nx) / traj.header.nx
    curves = []
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    for t in times:
        n = int(round(t / dt))
        if n < 0 or n > traj.header.n_steps:
            raise ConfigError(f"time {t} is outside the trajectory horizon")
        pred = traj.states[0, n]
        ref_vals = None
        if ref is not None:
            if n > ref.header.n_steps:
                raise ConfigError(f"time {t} is outside the reference horizon")
            ref_vals = ref.states[0, n]
        csv_path = str(out) + f"_t{t:g}.csv"
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "u_pred", "u_ref"] if ref_vals is not None else ["x", "u_pred"])
            for j in range(traj.header.nx):
                row = [repr(float(x[j])), repr(float(pred[j]))]
                if ref_vals is not None:
                    row.append(repr(float(ref_vals[j])))
                writer.writerow(row)
        curves.append((f"pred t={t:g}", pred, "pred"))
        if ref_vals is not None:
            curves.append((f"ref t={t:g}", ref_vals, "ref"))
    plotting.render_profiles(str(out) + ".svg", x, curves,
                             title=f"{traj.header.equation} solution profiles")
    print(f"wrote {len(times)} profile csv(s) and {out}.svg")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fluxfno",
        description="Learned interface fluxes for 1D conservation laws",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a trajectory dataset")
    g.add_argument("--config", help="JSON config; its data section supplies defaults")
    g.add_argument("--equation", choices=["advection", "burgers"])
    g.add_argument("--n-funcs", type=int, dest="n_funcs")
    g.add_argument("--nx", type=int)
    g.add_argument("--dt", type=float)
    g.add_argument("--n-steps", type=int, dest="n_steps")
    g.add_argument("--t-end", type=float, dest="t_end")
    g.add_argument("--scale", type=float)
    g.add_argument("--seed", type=int)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a flux operator on a dataset")
    t.add_argument("--data", required=True)
    t.add_argument("--config", help="JSON config with model/train sections")
    t.add_argument("--out", required=True)
    t.add_argument("--loss-csv", dest="loss_csv")
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("infer", help="roll an operator forward from an initial condition")
    i.add_argument("--model")
    i.add_argument("--analytic", choices=["upwind", "lax", "godunov"])
    i.add_argument("--equation", choices=["advection", "burgers"])
    i.add_argument("--init", required=True, help="grf | step | pulse | dataset file")
    i.add_argument("--t-end", type=float, required=True, dest="t_end")
    i.add_argument("--scheme", choices=["euler", "rk2"], default="euler")
    i.add_argument("--dt", type=float)
    i.add_argument("--dt-mode", choices=["fixed", "cfl"], default="fixed", dest="dt_mode")
    i.add_argument("--courant", type=float, default=0.5)
    i.add_argument("--nx", type=int)
    i.add_argument("--seed", type=int)
    i.add_argument("--scale", type=float)
    i.add_argument("--out", required=True)
    i.set_defaults(func=cmd_infer)

    e = sub.add_parser("eval", help="score an operator against a reference dataset")
    e.add_argument("--model")
    e.add_argument("--analytic", choices=["upwind", "lax", "godunov"])
    e.add_argument("--equation", choices=["advection", "burgers"])
    e.add_argument("--data", required=True)
    e.add_argument("--times", required=True, help="comma-separated evaluation times")
    e.add_argument("--integrator", choices=["euler", "rk2"], default="euler")
    e.add_argument("--threads", type=int, default=1)
    e.add_argument("--dt", type=float, help="dx/dt ratio source for --analytic lax")
    e.add_argument("--nx", type=int)
    e.add_argument("--out", required=True, help="prefix for .json/.txt/.csv/.svg outputs")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("capacity", help="print the capacity norm of a model")
    c.add_argument("--model", required=True)
    c.add_argument("--p", type=float, default=2.0)
    c.add_argument("--q", type=float, default=2.0)
    c.set_defaults(func=cmd_capacity)

    p = sub.add_parser("plot", help="dump solution profiles as csv and svg")
    p.add_argument("--traj", required=True)
    p.add_argument("--ref")
    p.add_argument("--times", required=True)
    p.add_argument("--out", required=True, help="prefix for per-time csv files and the svg")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (CflViolation, BlowUpError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
