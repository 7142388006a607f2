import json
import subprocess
import sys

import numpy as np
import pytest

from hjsolve import cli, csvio
from hjsolve.network import load_theta, read_theta_meta, NetworkFunction
from hjsolve.config import load_config


def tiny_cube(**over):
    cfg = {
        "name": "tiny",
        "domain": {"kind": "cube", "dim": 2, "half_width": 1.0},
        "hamiltonian": {"kind": "eikonal_squared"},
        "boundary": {"value": 0.0},
        "ground_truth": {"kind": "cube"},
        "network": {"type": "mlp", "hidden": [6]},
        "sgd": {"n_interior": 20, "n_boundary": 8, "lr": 0.003},
        "schedule": [{"alpha": 2.0, "delta": 0.5, "iterations": 5},
                     {"alpha": 1.5, "delta": 0.3, "iterations": 5}],
        "evaluation": {"n": 500, "include_origin": True, "seed": 3, "heatmap_resolution": 8},
        "seeds": [0],
    }
    cfg.update(over)
    return cfg


def write_cfg(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def body(path):
    """CSV lines after the metadata header."""
    return path.read_text().splitlines()[1:]


def body_without(path, column):
    lines = body(path)
    cols = lines[0].split(",")
    k = cols.index(column)
    return [",".join(v for j, v in enumerate(ln.split(",")) if j != k) for ln in lines]


def run(*argv):
    return cli.main([str(a) for a in argv])


# --- exit codes ----------------------------------------------------------------------------

def test_missing_config_exits_2(tmp_path, capsys):
    assert run("train", "--config", tmp_path / "nope.json", "--out", tmp_path) == 2
    assert "not found" in capsys.readouterr().err


def test_invalid_json_exits_2(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert run("train", "--config", p) == 2


def test_unknown_key_exits_2(tmp_path):
    cfg = write_cfg(tmp_path, tiny_cube(bogus=1))
    assert run("train", "--config", cfg, "--out", tmp_path) == 2


def test_bad_theta_magic_exits_2(tmp_path, capsys):
    cfg = write_cfg(tmp_path, tiny_cube())
    bad = tmp_path / "bad.hjnn"
    bad.write_bytes(b"NOPE" + bytes(64))
    assert run("evaluate", "--config", cfg, "--theta", bad, "--out", tmp_path) == 2
    assert "error" in capsys.readouterr().err


def test_missing_theta_exits_2(tmp_path):
    cfg = write_cfg(tmp_path, tiny_cube())
    assert run("evaluate", "--config", cfg, "--theta", tmp_path / "x.hjnn", "--out", tmp_path) == 2


def test_divergence_exits_1(tmp_path, capsys):
    cfg = write_cfg(tmp_path, tiny_cube(
        sgd={"n_interior": 20, "n_boundary": 8, "step_rule": "constant", "lr": 50.0},
        schedule=[{"alpha": 2.0, "delta": 0.3, "iterations": 300}]))
    assert run("train", "--config", cfg, "--out", tmp_path) == 1
    assert "numerical failure" in capsys.readouterr().err


def test_usage_error_from_argparse():
    with pytest.raises(SystemExit) as info:
        cli.main(["train"])
    assert info.value.code == 2


# --- train ---------------------------------------------------------------------------------

def test_zero_iterations_writes_initial_theta(tmp_path):
    cfg = write_cfg(tmp_path, tiny_cube(schedule=[{"alpha": 2.0, "delta": 0.5, "iterations": 0}]))
    assert run("train", "--config", cfg, "--out", tmp_path, "--seed", 4) == 0
    arch, theta = load_theta(tmp_path / "theta_seed4.hjnn")
    ref = NetworkFunction(load_config(cfg).architecture(), seed=4)
    assert np.array_equal(theta, ref.theta)
    assert body(tmp_path / "trace_seed4.csv") == [",".join(cli.TRACE_COLUMNS)]


def test_train_outputs_and_metadata(tmp_path):
    cfg = write_cfg(tmp_path, tiny_cube())
    assert run("train", "--config", cfg, "--out", tmp_path) == 0
    report = json.loads((tmp_path / "report_seed0.json").read_text())
    assert len(report["stages"]) == 2
    assert {"condition_margin", "lipschitz_estimate", "condition_satisfied"} <= set(report["stages"][0])
    assert report["wall_time_s"] > 0
    assert "mse" in report["metrics"]
    meta, cols, data = csvio.read_csv(tmp_path / "trace_seed0.csv")
    assert meta["seed"] == 0 and meta["config"]["name"] == "tiny"
    assert tuple(cols) == cli.TRACE_COLUMNS
    assert data.shape[0] == 10
    tmeta = read_theta_meta(tmp_path / "theta_seed0.hjnn")
    assert tmeta["seed"] == 0 and tmeta["config"]["name"] == "tiny"


def test_train_rerun_reproduces_csv_bodies(tmp_path):
    cfg = write_cfg(tmp_path, tiny_cube())
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("train", "--config", cfg, "--out", a) == 0
    assert run("train", "--config", cfg, "--out", b) == 0
    # wall_ms is a timing column and is the one field allowed to differ
    assert body_without(a / "trace_seed0.csv", "wall_ms") == body_without(b / "trace_seed0.csv", "wall_ms")
    assert (a / "theta_seed0.hjnn").read_bytes() == (b / "theta_seed0.hjnn").read_bytes()


def test_train_jobs_matches_serial(tmp_path):
    cfg = write_cfg(tmp_path, tiny_cube(seeds=[0, 1]))
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("train", "--config", cfg, "--out", a) == 0
    assert run("train", "--config", cfg, "--out", b, "--jobs", 2) == 0
    for s in (0, 1):
        assert load_theta(a / f"theta_seed{s}.hjnn")[1].tobytes() == load_theta(b / f"theta_seed{s}.hjnn")[1].tobytes()


def test_bundled_eikonal_pipeline_shape():
    exp = load_config(cli.Path(__file__).parents[1] / "src/hjsolve/configs/eikonal2d.json")
    stages = exp.schedule().stages
    assert len(stages) == 5
    assert stages[0].sgd.n_interior == 60 and stages[0].sgd.n_boundary == 20


# --- threads -------------------------------------------------------------------------------

def test_threads_env_caps_workers(monkeypatch):
    monkeypatch.setenv("HJSOLVE_THREADS", "2")
    assert cli.max_workers(8) == 2
    assert cli.max_workers(1) == 1
    monkeypatch.delenv("HJSOLVE_THREADS")
    assert cli.max_workers(8) == 8
    assert cli.max_workers(None) == 1


def test_threads_env_invalid(monkeypatch, tmp_path):
    monkeypatch.setenv("HJSOLVE_THREADS", "many")
    cfg = write_cfg(tmp_path, tiny_cube())
    assert run("train", "--config", cfg, "--out", tmp_path, "--jobs", 2) == 2


# --- evaluate ------------------------------------------------------------------------------

def test_evaluate_writes_metrics_and_heatmap(tmp_path):
    cfg = write_cfg(tmp_path, tiny_cube())
    assert run("train", "--config", cfg, "--out", tmp_path) == 0
    theta = tmp_path / "theta_seed0.hjnn"
    e1, e2 = tmp_path / "e1", tmp_path / "e2"
    assert run("evaluate", "--config", cfg, "--theta", theta, "--out", e1) == 0
    assert run("evaluate", "--config", cfg, "--theta", theta, "--out", e2) == 0
    _, cols, data = csvio.read_csv(e1 / "metrics.csv")
    assert cols[:2] == ["mse", "linf"] and data[0, 2] == 500
    _, _, hm = csvio.read_csv(e1 / "residual_heatmap.csv")
    assert hm.shape == (64, 3)
    for name in ("metrics.csv", "residual_heatmap.csv"):
        assert body(e1 / name) == body(e2 / name)
    ev = json.loads((e1 / "evaluation.json").read_text())
    assert ev["config"]["name"] == "tiny"


def test_evaluate_dimension_mismatch(tmp_path):
    cfg3 = write_cfg(tmp_path, tiny_cube(domain={"kind": "cube", "dim": 3, "half_width": 1.0}), "c3.json")
    cfg2 = write_cfg(tmp_path, tiny_cube())
    assert run("train", "--config", cfg2, "--out", tmp_path) == 0
    assert run("evaluate", "--config", cfg3, "--theta", tmp_path / "theta_seed0.hjnn", "--out", tmp_path) == 2


# --- oracle --------------------------------------------------------------------------------

def test_oracle_outputs(tmp_path):
    cfg = write_cfg(tmp_path, {
        "name": "orc", "domain": {"kind": "cube", "dim": 1, "half_width": 0.5, "center": [0.5]},
        "hamiltonian": {"kind": "eikonal_squared"},
        "oracle": {"grids": [{"d": 1, "N": 8, "alpha": 30.0}, {"d": 2, "N": 4, "alpha": 10.0}]}})
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("oracle", "--config", cfg, "--out", a) == 0
    assert run("oracle", "--config", cfg, "--out", b) == 0
    summary = json.loads((a / "oracle.json").read_text())["grids"]
    assert len(summary) == 2
    for row in summary:
        assert row["fixed_point_residual"] < 1e-9
        assert row["laplacian_min_eig"] == pytest.approx(row["laplacian_min_eig_closed_form"], abs=1e-10)
        assert row["sigma_min"] >= row["sigma_min_lower_bound"] - 1e-10
    _, _, g = csvio.read_csv(a / "grid_0.csv")
    assert g.shape == (9, 2)
    for name in ("grid_0.csv", "grid_1.csv", "adjoint_spectrum_0.csv", "adjoint_spectrum_1.csv"):
        assert body(a / name) == body(b / name)


def test_oracle_nonconvergence_exits_1(tmp_path):
    cfg = write_cfg(tmp_path, {
        "name": "orc", "domain": {"kind": "cube", "dim": 1, "half_width": 0.5, "center": [0.5]},
        "hamiltonian": {"kind": "eikonal_squared"},
        "oracle": {"grids": [{"d": 1, "N": 64, "alpha": 1.0}], "tol": 1e-14, "max_iters": 3}})
    assert run("oracle", "--config", cfg, "--out", tmp_path) == 1


def test_oracle_section_required(tmp_path):
    cfg = write_cfg(tmp_path, tiny_cube())
    assert run("oracle", "--config", cfg, "--out", tmp_path) == 2


# --- rollout -------------------------------------------------------------------------------

def car_cfg(tmp_path):
    states = tmp_path / "poses.csv"
    states.write_text("x,y,omega\n1.0,0.0,0.0\n-1.0,0.5,1.0\n")
    return tiny_cube(
        domain={"kind": "product_with_torus", "torus_dims": 1,
                "base": {"kind": "annulus", "dim": 2, "inner_radius": 0.2, "outer_radius": 2.0}},
        hamiltonian={"kind": "reeds_shepp", "sigma": 1.0, "rho": 1.0},
        boundary={"values": {"inner": 0.0, "outer": 2.0}},
        ground_truth={"kind": "none"},
        network={"type": "periodic", "hidden": [6], "groups": [[2, 2]]},
        schedule=[{"alpha": 2.0, "delta": 0.5, "iterations": 0}],
        rollout={"kind": "car", "delta": 0.3, "dt": 0.05, "t_max": 1.0, "target_radius": 0.2,
                 "initial_states": str(states)})


def test_rollout_car(tmp_path):
    cfg = write_cfg(tmp_path, car_cfg(tmp_path))
    assert run("train", "--config", cfg, "--out", tmp_path) == 0
    a, b = tmp_path / "a", tmp_path / "b"
    theta = tmp_path / "theta_seed0.hjnn"
    assert run("rollout", "--config", cfg, "--theta", theta, "--out", a) == 0
    assert run("rollout", "--config", cfg, "--theta", theta, "--out", b) == 0
    res = json.loads((a / "rollouts.json").read_text())["rollouts"]
    assert len(res) == 2
    for k in range(2):
        meta, cols, data = csvio.read_csv(a / f"trajectory_{k}.csv")
        assert cols[0] == "t" and data.shape[0] >= 2
        assert "initial_state" in meta
        assert body(a / f"trajectory_{k}.csv") == body(b / f"trajectory_{k}.csv")


def test_rollout_states_flag_and_missing_states(tmp_path):
    cfg = write_cfg(tmp_path, car_cfg(tmp_path))
    assert run("train", "--config", cfg, "--out", tmp_path) == 0
    theta = tmp_path / "theta_seed0.hjnn"
    one = tmp_path / "one.csv"
    one.write_text("x,y,omega\n0.5,0.5,0.0\n")
    assert run("rollout", "--config", cfg, "--theta", theta, "--states", one, "--out", tmp_path / "o") == 0
    assert len(json.loads((tmp_path / "o" / "rollouts.json").read_text())["rollouts"]) == 1
    assert run("rollout", "--config", cfg, "--theta", theta, "--states", tmp_path / "none.csv") == 2


def test_rollout_needs_theta(tmp_path):
    cfg = write_cfg(tmp_path, car_cfg(tmp_path))
    assert run("rollout", "--config", cfg, "--out", tmp_path) == 2


def test_rollout_game(tmp_path):
    states = tmp_path / "s.csv"
    states.write_text("X,Y,omega_e,omega_p\n1.5,0.0,0.0,3.0\n")
    cfg = write_cfg(tmp_path, tiny_cube(
        domain={"kind": "product_with_torus", "torus_dims": 2,
                "base": {"kind": "annulus", "dim": 2, "inner_radius": 0.2, "outer_radius": 4.0}},
        hamiltonian={"kind": "pursuit_evasion", "sigma_e": 0.8, "rho_e": 1.0, "sigma_p": 1.0, "rho_p": 1.2},
        boundary={"values": {"inner": 0.0, "outer": 4.0}},
        ground_truth={"kind": "none"},
        network={"type": "periodic", "hidden": [6], "groups": [[2, 2], [3, 2]]},
        schedule=[{"alpha": 2.0, "delta": 0.5, "iterations": 0}],
        rollout={"kind": "game", "dt": 0.01, "t_max": 1.0, "initial_states": str(states),
                 "evader": {"sigma": 0.8, "rho": 1.0}, "pursuer": {"sigma": 1.0, "rho": 1.2}}))
    assert run("train", "--config", cfg, "--out", tmp_path) == 0
    assert run("rollout", "--config", cfg, "--theta", tmp_path / "theta_seed0.hjnn", "--out", tmp_path) == 0
    _, cols, data = csvio.read_csv(tmp_path / "trajectory_0.csv")
    d = data[:, cols.index("distance")]
    assert np.all(np.abs(np.diff(d)) <= 1.8 * 0.01 * (1 + 1e-12))


# --- sweep ---------------------------------------------------------------------------------

def sweep_cfg(**sw):
    base = {"deltas": [0.7, 0.2, 0.01], "alphas": [2.0], "iterations": 3, "n_probes": 200}
    base.update(sw)
    return tiny_cube(domain={"kind": "ball", "dim": 2, "radius": 1.0}, ground_truth={"kind": "ball"},
                     sweep=base)


def test_sweep_single_seed_rows(tmp_path):
    cfg = write_cfg(tmp_path, sweep_cfg())
    assert run("sweep", "--config", cfg, "--out", tmp_path, "--seed", 0) == 0
    lines = body(tmp_path / "success_rates.csv")
    assert lines[0].split(",") == ["domain", "alpha", "delta", "supervised", "success_rate", "half_width", "runs"]
    rows = [ln.split(",") for ln in lines[1:]]
    assert len(rows) == 3
    assert [float(r[2]) for r in rows] == [0.7, 0.2, 0.01]
    assert all(r[-1] == "1" for r in rows)
    assert all(float(r[4]) in (0.0, 1.0) for r in rows)


def test_sweep_single_seed_single_delta(tmp_path):
    cfg = write_cfg(tmp_path, sweep_cfg(deltas=[0.7]))
    assert run("sweep", "--config", cfg, "--out", tmp_path, "--seed", 2) == 0
    assert len(body(tmp_path / "success_rates.csv")) == 2


def test_sweep_supervised_variants_and_determinism(tmp_path):
    cfg = write_cfg(tmp_path, sweep_cfg(deltas=[0.7], supervised=["none", "uniform"], n_supervised=5))
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("sweep", "--config", cfg, "--out", a) == 0
    assert run("sweep", "--config", cfg, "--out", b, "--jobs", 2) == 0
    assert body(a / "success_rates.csv") == body(b / "success_rates.csv")
    assert [ln.split(",")[3] for ln in body(a / "success_rates.csv")[1:]] == ["none", "uniform"]


def test_sweep_requires_truth(tmp_path):
    cfg = write_cfg(tmp_path, tiny_cube(ground_truth={"kind": "none"},
                                        sweep={"deltas": [0.7], "iterations": 1}))
    assert run("sweep", "--config", cfg, "--out", tmp_path) == 2


# --- entry point ---------------------------------------------------------------------------

def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "hjsolve.cli", "train", "--config", str(tmp_path / "x.json")],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    assert "config file not found" in proc.stderr
