"""End-to-end tests of the command-line interface, run in process through
cli.main. Covers the six subcommands, their file outputs, determinism of
reruns (figures included), and the exit-code contract: 0 success, 1 runtime
failure, 2 configuration error."""

import json
import math

import numpy as np
import pytest

from fluxfno import cli, datasets, fno
from fluxfno.datasets import Dataset, DatasetHeader, GrfSpec, grf_sample, read_dataset


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def tiny_model(tmp_path_factory):
    """A 5-epoch width-4 model trained on a small advection dataset, plus the
    files the run produced."""
    root = tmp_path_factory.mktemp("tiny_model")
    data = root / "train.ffno"
    model = root / "model.ffnm"
    config = root / "config.json"
    config.write_text(json.dumps({
        "model": {"width": 4, "kmax": 3},
        "train": {"epochs": 5, "sched_step": 2, "batch_size": 8, "seed": 0},
    }))
    assert run_cli("gen-data", "--equation", "advection", "--nx", 16, "--n-funcs", 2,
                   "--n-steps", 8, "--seed", 0, "--out", data) == 0
    assert run_cli("train", "--data", data, "--config", config, "--out", model) == 0
    return {"data": data, "model": model, "loss_csv": model.parent / "model.ffnm.loss.csv"}


class TestGenData:
    def test_writes_dataset_and_sidecar(self, tmp_path, capsys):
        out = tmp_path / "adv.ffno"
        rc = run_cli("gen-data", "--equation", "advection", "--nx", 16, "--n-funcs", 2,
                     "--n-steps", 4, "--out", out)
        assert rc == 0
        assert "wrote" in capsys.readouterr().out
        ds, _ = read_dataset(out)
        assert ds.header.nx == 16 and ds.header.n_steps == 4 and ds.header.n_funcs == 2
        assert ds.header.dt == 1.0 / 16
        assert ds.header.generator == "exact_advection"
        sidecar = json.loads((tmp_path / "adv.ffno.json").read_text())
        assert sidecar["dt"] == 1.0 / 16
        assert sidecar["scale"] == datasets.IN_DIST_SCALE
        assert sidecar["generator"] == "exact_advection"

    def test_rerun_is_byte_identical(self, tmp_path):
        args = ["gen-data", "--equation", "advection", "--nx", 16, "--n-funcs", 1,
                "--n-steps", 4, "--seed", 3]
        assert run_cli(*args, "--out", tmp_path / "a.ffno") == 0
        assert run_cli(*args, "--out", tmp_path / "b.ffno") == 0
        assert (tmp_path / "a.ffno").read_bytes() == (tmp_path / "b.ffno").read_bytes()

    def test_flags_override_config(self, tmp_path):
        config = tmp_path / "cfg.json"
        config.write_text(json.dumps(
            {"data": {"equation": "advection", "nx": 32, "n_funcs": 1, "n_steps": 2}}
        ))
        out = tmp_path / "d.ffno"
        assert run_cli("gen-data", "--config", config, "--nx", 16, "--out", out) == 0
        ds, _ = read_dataset(out)
        assert ds.header.nx == 16
        assert ds.header.n_funcs == 1

    def test_burgers_defaults(self, tmp_path):
        out = tmp_path / "b.ffno"
        rc = run_cli("gen-data", "--equation", "burgers", "--nx", 16, "--n-funcs", 1,
                     "--n-steps", 8, "--out", out)
        assert rc == 0
        ds, _ = read_dataset(out)
        assert ds.header.dt == pytest.approx(1e-2 / 16)
        assert ds.header.generator == "reference_muscl_ssprk2"

    def test_t_end_resolves_step_count(self, tmp_path):
        out = tmp_path / "t.ffno"
        rc = run_cli("gen-data", "--equation", "advection", "--nx", 16, "--n-funcs", 1,
                     "--t-end", 0.5, "--out", out)
        assert rc == 0
        ds, _ = read_dataset(out)
        assert ds.header.n_steps == 8

    def test_tiny_grid_is_config_error(self, tmp_path, capsys):
        rc = run_cli("gen-data", "--equation", "advection", "--nx", 2, "--out", tmp_path / "x")
        assert rc == 2
        assert "config error" in capsys.readouterr().err

    def test_odd_grid_fails_at_sampling(self, tmp_path, capsys):
        rc = run_cli("gen-data", "--equation", "advection", "--nx", 7, "--out", tmp_path / "x")
        assert rc == 1
        assert "even" in capsys.readouterr().err

    def test_unknown_config_section(self, tmp_path, capsys):
        config = tmp_path / "cfg.json"
        config.write_text('{"dataa": {}}')
        rc = run_cli("gen-data", "--config", config, "--equation", "advection",
                     "--out", tmp_path / "x")
        assert rc == 2
        assert "unknown config sections" in capsys.readouterr().err

    def test_unknown_data_key(self, tmp_path, capsys):
        config = tmp_path / "cfg.json"
        config.write_text('{"data": {"nx_typo": 8}}')
        rc = run_cli("gen-data", "--config", config, "--equation", "advection",
                     "--out", tmp_path / "x")
        assert rc == 2
        assert "nx_typo" in capsys.readouterr().err


class TestTrain:
    def test_loss_csv_and_model_header(self, tiny_model):
        rows = tiny_model["loss_csv"].read_text().splitlines()
        assert rows[0] == "epoch,lr,loss_tm,loss_consi,total"
        assert len(rows) == 1 + 5
        lrs = [float(line.split(",")[1]) for line in rows[1:]]
        assert lrs == [1e-3, 1e-3, 5e-4, 5e-4, 2.5e-4]
        totals = [float(line.split(",")[4]) for line in rows[1:]]
        assert all(math.isfinite(t) and t > 0 for t in totals)

        params, header = fno.load(tiny_model["model"])
        assert params.config.width == 4 and params.config.in_channels == 2
        assert header["equation"] == "advection"
        assert header["scheme"] == {"p": 0, "q": 1, "dt": 1.0 / 16}
        assert header["train"]["lambda"] == 0.01
        assert header["train"]["epochs"] == 5
        assert header["data_seed"] == 0

    def test_explicit_loss_csv_path(self, tiny_model, tmp_path):
        config = tmp_path / "cfg.json"
        config.write_text(json.dumps({
            "model": {"width": 4, "kmax": 3},
            "train": {"epochs": 1, "batch_size": 8},
        }))
        losses = tmp_path / "losses.csv"
        rc = run_cli("train", "--data", tiny_model["data"], "--config", config,
                     "--out", tmp_path / "m.ffnm", "--loss-csv", losses)
        assert rc == 0
        assert len(losses.read_text().splitlines()) == 2

    def test_stencil_extents_from_config(self, tiny_model, tmp_path):
        config = tmp_path / "cfg.json"
        config.write_text(json.dumps({
            "model": {"p": 1, "q": 1, "width": 4, "kmax": 3},
            "train": {"epochs": 1, "batch_size": 8},
        }))
        out = tmp_path / "m.ffnm"
        assert run_cli("train", "--data", tiny_model["data"], "--config", config,
                       "--out", out) == 0
        params, header = fno.load(out)
        assert params.config.in_channels == 3
        assert header["scheme"]["p"] == 1 and header["scheme"]["q"] == 1

    def test_unknown_train_key_is_config_error(self, tiny_model, tmp_path, capsys):
        config = tmp_path / "cfg.json"
        config.write_text('{"train": {"lr_typo": 1}}')
        rc = run_cli("train", "--data", tiny_model["data"], "--config", config,
                     "--out", tmp_path / "m.ffnm")
        assert rc == 2
        assert "bad train config" in capsys.readouterr().err

    def test_bad_model_value_is_config_error(self, tiny_model, tmp_path, capsys):
        config = tmp_path / "cfg.json"
        config.write_text('{"model": {"width": -4}}')
        rc = run_cli("train", "--data", tiny_model["data"], "--config", config,
                     "--out", tmp_path / "m.ffnm")
        assert rc == 2
        assert "bad model config" in capsys.readouterr().err

    def test_missing_data_file(self, tmp_path, capsys):
        rc = run_cli("train", "--data", tmp_path / "nope.ffno", "--out", tmp_path / "m.ffnm")
        assert rc == 1


class TestInfer:
    def test_upwind_rollout(self, tmp_path, capsys):
        out = tmp_path / "traj.ffno"
        rc = run_cli("infer", "--analytic", "upwind", "--init", "grf", "--nx", 64,
                     "--seed", 3, "--t-end", 0.25, "--out", out)
        assert rc == 0
        assert "16 steps to t=0.25" in capsys.readouterr().out
        traj, extra = read_dataset(out)
        assert traj.header.n_steps == 16 and traj.header.nx == 64
        assert "truncated" not in extra
        u0 = grf_sample(GrfSpec(n=64, scale=0.1, seed=3)).values
        np.testing.assert_allclose(traj.states[0, 0], u0, atol=0)
        np.testing.assert_allclose(traj.states[0, -1], np.roll(u0, 16), atol=1e-12)

    def test_rk2_differs_from_euler(self, tmp_path):
        common = ["infer", "--analytic", "upwind", "--init", "grf", "--nx", 32,
                  "--t-end", 0.25]
        assert run_cli(*common, "--scheme", "euler", "--out", tmp_path / "e.ffno") == 0
        assert run_cli(*common, "--scheme", "rk2", "--out", tmp_path / "r.ffno") == 0
        euler, _ = read_dataset(tmp_path / "e.ffno")
        heun, _ = read_dataset(tmp_path / "r.ffno")
        assert np.abs(euler.states[0, -1] - heun.states[0, -1]).max() > 1e-6

    def test_zero_horizon_writes_single_state(self, tmp_path, capsys):
        out = tmp_path / "z.ffno"
        rc = run_cli("infer", "--analytic", "upwind", "--init", "pulse", "--nx", 16,
                     "--t-end", 0, "--out", out)
        assert rc == 0
        assert "0 steps to t=0" in capsys.readouterr().out
        traj, _ = read_dataset(out)
        assert traj.states.shape == (1, 1, 16)
        np.testing.assert_array_equal(traj.states[0, 0], datasets.triangular_pulse(16).values)

    def test_godunov_step_conserves_mass(self, tmp_path):
        out = tmp_path / "g.ffno"
        rc = run_cli("infer", "--analytic", "godunov", "--init", "step", "--nx", 32,
                     "--t-end", 0.01, "--out", out)
        assert rc == 0
        traj, _ = read_dataset(out)
        assert traj.header.n_steps == 32
        assert traj.header.equation == "burgers"
        assert traj.states[0, -1].mean() == pytest.approx(0.5, abs=1e-14)

    def test_init_from_dataset_file(self, tiny_model, tmp_path):
        out = tmp_path / "from_file.ffno"
        rc = run_cli("infer", "--analytic", "upwind", "--init", tiny_model["data"],
                     "--t-end", 0.125, "--out", out)
        assert rc == 0
        src, _ = read_dataset(tiny_model["data"])
        traj, _ = read_dataset(out)
        assert traj.header.nx == 16
        np.testing.assert_array_equal(traj.states[0, 0], src.states[0, 0])

    def test_cfl_mode_picks_dt_from_state(self, tmp_path):
        out = tmp_path / "c.ffno"
        rc = run_cli("infer", "--analytic", "godunov", "--init", "grf", "--nx", 32,
                     "--seed", 1, "--dt-mode", "cfl", "--courant", 0.5,
                     "--t-end", 0.05, "--out", out)
        assert rc == 0
        traj, _ = read_dataset(out)
        u0 = grf_sample(GrfSpec(n=32, scale=0.1, seed=1)).values
        expected = 0.5 * (1.0 / 32) / np.abs(u0).max()
        assert traj.header.dt == pytest.approx(expected, rel=1e-12)

    def test_model_rollout(self, tiny_model, tmp_path):
        out = tmp_path / "m.ffno"
        rc = run_cli("infer", "--model", tiny_model["model"], "--init", "grf", "--nx", 16,
                     "--t-end", 0.125, "--out", out)
        assert rc == 0
        traj, _ = read_dataset(out)
        assert traj.header.n_steps == 2
        assert np.isfinite(traj.states).all()

    def test_lax_requires_dt(self, tmp_path, capsys):
        rc = run_cli("infer", "--analytic", "lax", "--init", "grf", "--t-end", 0.1,
                     "--out", tmp_path / "x.ffno")
        assert rc == 2
        assert "lax" in capsys.readouterr().err

    def test_operator_required(self, tmp_path, capsys):
        rc = run_cli("infer", "--init", "grf", "--t-end", 0.1, "--out", tmp_path / "x.ffno")
        assert rc == 2
        assert "--model or --analytic" in capsys.readouterr().err

    def test_blow_up_truncates_trajectory(self, tmp_path, capsys):
        # Lax at Courant 4 amplifies high modes; the step init feeds it the
        # full spectrum, so the guard trips mid-run.
        out = tmp_path / "blow.ffno"
        rc = run_cli("infer", "--analytic", "lax", "--equation", "advection", "--nx", 64,
                     "--dt", 0.0625, "--init", "step", "--t-end", 1.0, "--out", out)
        assert rc == 1
        assert "blew up" in capsys.readouterr().err
        traj, extra = read_dataset(out)
        assert extra["truncated"] is True
        assert 0 < traj.header.n_steps < 16
        assert np.abs(traj.states[0, -1]).max() > 1e6

    def test_blow_up_before_first_step(self, tmp_path, capsys):
        src = tmp_path / "huge.ffno"
        header = DatasetHeader(version=datasets.FORMAT_VERSION, equation="burgers",
                               n_funcs=1, n_steps=0, nx=16, dt=1e-4,
                               generator="manual", seed=0)
        datasets.write_dataset(Dataset(header, np.full((1, 1, 16), 1e308)), src)
        out = tmp_path / "zs.ffno"
        with np.errstate(over="ignore"):
            rc = run_cli("infer", "--analytic", "godunov", "--init", src, "--dt", 1e-4,
                         "--t-end", 1.0, "--out", out)
        assert rc == 1
        assert "no steps completed" in capsys.readouterr().err
        assert not out.exists()


class TestEvalCli:
    @pytest.fixture()
    def eval_data(self, tmp_path):
        out = tmp_path / "ev.ffno"
        assert run_cli("gen-data", "--equation", "advection", "--nx", 32, "--n-funcs", 2,
                       "--n-steps", 32, "--seed", 4, "--out", out) == 0
        return out

    def test_upwind_eval_outputs(self, eval_data, tmp_path, capsys):
        prefix = tmp_path / "report"
        rc = run_cli("eval", "--analytic", "upwind", "--data", eval_data,
                     "--times", "0.5,1.0", "--out", prefix)
        assert rc == 0
        assert "interval" in capsys.readouterr().out
        for ext in (".json", ".txt", ".csv", ".svg"):
            assert (tmp_path / ("report" + ext)).exists()
        doc = json.loads((tmp_path / "report.json").read_text())
        labels = [row[0] for row in doc["rows"]]
        assert labels == ["t=0.5", "t=1", "interval"]
        assert all(row[2] <= 1e-12 for row in doc["rows"])
        assert doc["metadata"]["operator"] == "analytic:upwind"
        csv_lines = (tmp_path / "report.csv").read_text().splitlines()
        assert csv_lines[0] == "label,time,rel_l2,linf"
        assert len(csv_lines) == 4

    def test_rerun_is_byte_identical_including_figure(self, eval_data, tmp_path):
        args = ["eval", "--analytic", "upwind", "--data", eval_data, "--times", "0.5,1.0"]
        assert run_cli(*args, "--out", tmp_path / "r1") == 0
        assert run_cli(*args, "--out", tmp_path / "r2") == 0
        for ext in (".json", ".txt", ".csv", ".svg"):
            a = (tmp_path / ("r1" + ext)).read_bytes()
            b = (tmp_path / ("r2" + ext)).read_bytes()
            assert a == b, f"{ext} differs between reruns"

    def test_model_eval_records_hashes(self, tiny_model, tmp_path):
        prefix = tmp_path / "m"
        rc = run_cli("eval", "--model", tiny_model["model"], "--data", tiny_model["data"],
                     "--times", "0.25", "--out", prefix)
        assert rc == 0
        doc = json.loads((tmp_path / "m.json").read_text())
        assert doc["metadata"]["operator"] == str(tiny_model["model"])
        assert len(doc["metadata"]["model_sha256"]) == 64
        assert len(doc["metadata"]["data_sha256"]) == 64

    def test_bad_times_is_config_error(self, eval_data, tmp_path, capsys):
        rc = run_cli("eval", "--analytic", "upwind", "--data", eval_data,
                     "--times", "abc", "--out", tmp_path / "x")
        assert rc == 2
        assert "bad --times" in capsys.readouterr().err

    def test_time_beyond_horizon_fails(self, eval_data, tmp_path, capsys):
        rc = run_cli("eval", "--analytic", "upwind", "--data", eval_data,
                     "--times", "5.0", "--out", tmp_path / "x")
        assert rc == 1
        assert "horizon" in capsys.readouterr().err

    def test_missing_data_file(self, tmp_path):
        rc = run_cli("eval", "--analytic", "upwind", "--data", tmp_path / "nope.ffno",
                     "--times", "0.5", "--out", tmp_path / "x")
        assert rc == 1


class TestCapacityCli:
    def test_prints_capacity_norm(self, tiny_model, capsys):
        assert run_cli("capacity", "--model", tiny_model["model"]) == 0
        printed = capsys.readouterr().out.strip()
        params, _ = fno.load(tiny_model["model"])
        assert printed == f"{fno.capacity_gamma(params):.12g}"
        assert float(printed) > 0

    def test_zero_model_prints_zero(self, tmp_path, capsys):
        params = fno.init_params(fno.FnoConfig(in_channels=2, width=4, depth=1, kmax=3), 0)
        for _, arr in params.named_arrays():
            arr[...] = 0.0
        path = tmp_path / "zero.ffnm"
        fno.save(params, path)
        assert run_cli("capacity", "--model", path) == 0
        assert capsys.readouterr().out.strip() == "0"

    def test_norm_exponents_change_the_value(self, tiny_model, capsys):
        assert run_cli("capacity", "--model", tiny_model["model"]) == 0
        default = capsys.readouterr().out.strip()
        assert run_cli("capacity", "--model", tiny_model["model"], "--p", 1) == 0
        p1 = capsys.readouterr().out.strip()
        assert p1 != default
        params, _ = fno.load(tiny_model["model"])
        assert p1 == f"{fno.capacity_gamma(params, p=1.0, q=2.0):.12g}"


class TestPlotCli:
    @pytest.fixture()
    def trajectory(self, tmp_path):
        out = tmp_path / "traj.ffno"
        assert run_cli("infer", "--analytic", "upwind", "--init", "grf", "--nx", 32,
                       "--seed", 6, "--t-end", 0.25, "--out", out) == 0
        return out

    def test_writes_csvs_and_figure(self, trajectory, tmp_path, capsys):
        prefix = tmp_path / "profiles"
        rc = run_cli("plot", "--traj", trajectory, "--times", "0.125,0.25", "--out", prefix)
        assert rc == 0
        assert "wrote 2 profile csv(s)" in capsys.readouterr().out
        assert (tmp_path / "profiles.svg").exists()
        for tag in ("0.125", "0.25"):
            lines = (tmp_path / f"profiles_t{tag}.csv").read_text().splitlines()
            assert lines[0] == "x,u_pred"
            assert len(lines) == 1 + 32

    def test_reference_column(self, trajectory, tmp_path):
        ref = tmp_path / "ref.ffno"
        assert run_cli("infer", "--analytic", "upwind", "--init", "grf", "--nx", 32,
                       "--seed", 6, "--scheme", "rk2", "--t-end", 0.25, "--out", ref) == 0
        prefix = tmp_path / "cmp"
        rc = run_cli("plot", "--traj", trajectory, "--ref", ref, "--times", "0.25",
                     "--out", prefix)
        assert rc == 0
        lines = (tmp_path / "cmp_t0.25.csv").read_text().splitlines()
        assert lines[0] == "x,u_pred,u_ref"
        traj, _ = read_dataset(trajectory)
        first = [float(tok) for tok in lines[1].split(",")]
        assert first[0] == 0.0
        assert first[1] == traj.states[0, 8, 0]

    def test_grid_mismatch_is_config_error(self, trajectory, tmp_path, capsys):
        ref = tmp_path / "small.ffno"
        assert run_cli("infer", "--analytic", "upwind", "--init", "grf", "--nx", 16,
                       "--t-end", 0.25, "--out", ref) == 0
        rc = run_cli("plot", "--traj", trajectory, "--ref", ref, "--times", "0.25",
                     "--out", tmp_path / "x")
        assert rc == 2
        assert "does not match" in capsys.readouterr().err

    def test_time_outside_horizon_is_config_error(self, trajectory, tmp_path, capsys):
        rc = run_cli("plot", "--traj", trajectory, "--times", "9.0", "--out", tmp_path / "x")
        assert rc == 2
        assert "horizon" in capsys.readouterr().err
