"""Command-line experiment runner: ``hjsolve {train,evaluate,oracle,rollout,sweep}``.

Exit codes: 0 success, 1 numerical failure (divergence, non-convergence),
2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import control, csvio, evaluate, grid_oracle
from .config import load_config
from .errors import ConfigError, InvalidThetaFile, NumericalFailure
from .network import NetworkFunction, load_theta
from .scheme import SchemeConfig, uniqueness_condition
from .trainer import TRACE_COLUMNS, train_schedule

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2


def max_workers(requested):
    cap = os.environ.get("HJSOLVE_THREADS")
    n = max(1, requested or 1)
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ConfigError(f"HJSOLVE_THREADS must be an integer, got {cap!r}") from None
    return n


def _out_dir(args, exp):
    out = Path(args.out or exp.raw.get("output") or f"out/{exp.name}")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _meta(exp, seed, command):
    return {"command": command, "config": exp.raw, "seed": seed}


def _seeds(args, exp):
    return [args.seed] if args.seed is not None else exp.seeds()


def _load_net(path):
    if not Path(path).is_file():
        raise ConfigError(f"parameter file not found: {path}")
    arch, theta = load_theta(path)
    return NetworkFunction(arch, theta)


# --- train -------------------------------------------------------------------------------

def train_one(exp, seed, out):
    arch = exp.architecture()
    net = NetworkFunction(arch, seed=seed)
    problem = exp.problem()
    report = train_schedule(net, problem, exp.schedule(), exp.weights(), seed=seed)
    tag = f"seed{seed}"
    net.save(out / f"theta_{tag}.hjnn", _meta(exp, seed, "train"))
    csvio.write_csv(out / f"trace_{tag}.csv", TRACE_COLUMNS, report.trace, _meta(exp, seed, "train"))
    summary = {
        "seed": seed,
        "wall_time_s": report.wall_time,
        "n_params": arch.n_params,
        "stages": [{"alpha": s.alpha, "delta": s.delta, "lipschitz_estimate": s.lipschitz,
                    "condition_margin": s.margin, "condition_satisfied": s.satisfied,
                    "final_loss": float(s.trace[-1, 1]) if len(s.trace) else None}
                   for s in report.stages],
        "config": exp.raw,
    }
    truth = exp.truth()
    if truth is not None:
        ev = exp.evaluation()
        m = evaluate.mse_linf(net, truth, exp.domain(), ev["n"], ev["include_origin"], ev["seed"],
                              horizon=exp.horizon())
        summary["metrics"] = m.as_dict()
    csvio.write_json(out / f"report_{tag}.json", summary)
    return summary


def _train_worker(payload):
    raw, base_dir, seed, out = payload
    from .config import validate
    return train_one(validate(raw, base_dir), seed, Path(out))


def cmd_train(args):
    exp = load_config(args.config)
    out = _out_dir(args, exp)
    seeds = _seeds(args, exp)
    jobs = max_workers(args.jobs)
    if jobs > 1 and len(seeds) > 1:
        payloads = [(exp.raw, str(exp.base_dir), s, str(out)) for s in seeds]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_train_worker, payloads))
    else:
        results = [train_one(exp, s, out) for s in seeds]
    for r in results:
        line = f"seed {r['seed']}: {r['wall_time_s']:.1f}s"
        if "metrics" in r:
            line += f"  mse={r['metrics']['mse']:.3e}  linf={r['metrics']['linf']:.3e}"
        print(line)
    return EXIT_OK


# --- evaluate ----------------------------------------------------------------------------

def cmd_evaluate(args):
    exp = load_config(args.config)
    if not args.theta:
        raise ConfigError("evaluate needs --theta")
    net = _load_net(args.theta)
    if net.arch.input_dim != exp.architecture().input_dim:
        raise ConfigError("parameter file does not match the config's problem dimension")
    out = _out_dir(args, exp)
    ev = exp.evaluation()
    seed = ev["seed"] if args.seed is None else args.seed
    meta = _meta(exp, seed, "evaluate")
    meta["theta"] = str(args.theta)
    result = {"theta": str(args.theta), "seed": seed}
    truth = exp.truth()
    if truth is not None:
        m = evaluate.mse_linf(net, truth, exp.domain(), ev["n"], ev["include_origin"], seed,
                              horizon=exp.horizon())
        result["metrics"] = m.as_dict()
        csvio.write_csv(out / "metrics.csv", ("mse", "linf", "n_samples", "include_origin", "seed"),
                        [(m.mse, m.linf, m.n_samples, m.include_origin, m.seed)], meta)
    if exp.horizon() is None:
        field = evaluate.residual_field(net, exp.hamiltonian(), exp.scheme(), exp.domain(),
                                        ev["heatmap_resolution"])
        result["residual_mean"] = field.mean
        result["residual_max"] = field.max
        G1, G2 = np.meshgrid(field.x1, field.x2, indexing="ij")
        csvio.write_csv(out / "residual_heatmap.csv", ("x1", "x2", "value"),
                        zip(G1.ravel(), G2.ravel(), field.values.ravel()), meta)
    csvio.write_json(out / "evaluation.json", {**result, "config": exp.raw})
    for k, v in result.items():
        if k == "metrics":
            print(f"mse={v['mse']:.4e}  linf={v['linf']:.4e}  (n={v['n_samples']})")
        elif k.startswith("residual"):
            print(f"{k}={v:.4e}")
    return EXIT_OK


# --- oracle ------------------------------------------------------------------------------

def cmd_oracle(args):
    exp = load_config(args.config)
    if "oracle" not in exp.raw:
        raise ConfigError("config has no 'oracle' section")
    spec = exp.raw["oracle"]
    out = _out_dir(args, exp)
    h = exp.hamiltonian()
    tol = spec.get("tol", 1e-10)
    max_iters = spec.get("max_iters", 200_000)
    summary = []
    failed = False
    for k, gs in enumerate(spec["grids"]):
        grid = grid_oracle.GridSpec(gs["d"], gs["N"])
        alpha = gs["alpha"]
        meta = {**_meta(exp, None, "oracle"), "grid": gs}
        row = {"d": grid.d, "N": grid.N, "alpha": alpha, "delta": grid.delta}
        lam_num = float(np.linalg.eigvalsh(-grid_oracle.laplacian_matrix(grid)).min())
        row["laplacian_min_eig"] = lam_num
        row["laplacian_min_eig_closed_form"] = grid_oracle.smallest_laplacian_eigenvalue(grid)
        try:
            sol = grid_oracle.solve_fd_fixed_point(h, alpha, grid, gs.get("boundary_value", 0.0),
                                                   tol=tol, max_iters=max_iters)
        except NumericalFailure as exc:
            row["error"] = str(exc)
            failed = True
            summary.append(row)
            continue
        U = sol.U
        row["fixed_point_residual"] = sol.residual
        row["fixed_point_iterations"] = sol.iterations
        csvio.write_csv(out / f"grid_{k}.csv", [f"i{j}" for j in range(grid.d)] + ["value"],
                        csvio.grid_function_rows(U), meta)
        L = grid_oracle.grid_lipschitz(grid, U)
        ok, margin = uniqueness_condition(h, SchemeConfig(alpha, grid.delta), max(L, 1e-12), grid.d)
        system = grid_oracle.assemble_adjoint(h, alpha, grid, U)
        sv = np.sort(system.singular_values())
        csvio.write_csv(out / f"adjoint_spectrum_{k}.csv", ("index", "singular_value"),
                        enumerate(sv), meta)
        row.update({"lipschitz": L, "condition_margin": margin, "condition_satisfied": ok,
                    "sigma_min": float(sv[0]),
                    "sigma_min_lower_bound": float(grid_oracle.adjoint_lower_bound(alpha, grid, system.V))})
        summary.append(row)
        print(f"grid d={grid.d} N={grid.N} alpha={alpha}: residual={sol.residual:.2e} "
              f"margin={margin:.3f} sigma_min={sv[0]:.4f}")
    csvio.write_json(out / "oracle.json", {"grids": summary, "config": exp.raw})
    return EXIT_NUMERIC if failed else EXIT_OK


# --- rollout -----------------------------------------------------------------------------

def cmd_rollout(args):
    exp = load_config(args.config)
    ro = exp.raw.get("rollout")
    if ro is None:
        raise ConfigError("config has no 'rollout' section")
    theta = args.theta or (str(exp.path(ro["theta"])) if "theta" in ro else None)
    if theta is None:
        raise ConfigError("rollout needs --theta or rollout.theta in the config")
    net = _load_net(theta)
    states_path = args.states or (str(exp.path(ro["initial_states"])) if "initial_states" in ro else None)
    if states_path is None or not Path(states_path).is_file():
        raise ConfigError(f"initial states file not found: {states_path}")
    _, _, states = csvio.read_csv(states_path)
    out = _out_dir(args, exp)
    meta = {**_meta(exp, None, "rollout"), "theta": str(theta)}
    delta = ro.get("delta", exp.raw["schedule"][-1]["delta"] if "schedule" in exp.raw else 0.3)
    dt = ro.get("dt", 0.01)
    results = []
    for k, s0 in enumerate(states):
        if ro["kind"] == "car":
            car = control.CarParams(**ro.get("car", {}))
            t_max = ro.get("t_max") or ro.get("t_max_factor", 3.0) * np.hypot(s0[0], s0[1]) / car.sigma
            tr = control.rollout_car(net, car, s0[:3], dt, t_max, ro.get("target_radius", 0.2), delta)
        else:
            ev_p = control.CarParams(**ro.get("evader", {}))
            pu_p = control.CarParams(**ro.get("pursuer", {}))
            tr = control.rollout_game(net, ev_p, pu_p, s0[:4], dt, ro.get("t_max", 20.0),
                                      ro.get("capture_radius", 0.2), ro.get("escape_radius", 4.0), delta)
        csvio.write_csv(out / f"trajectory_{k}.csv", tr.columns, tr.rows(), {**meta, "initial_state": s0})
        results.append({"index": k, "initial_state": s0.tolist(), "outcome": tr.outcome, "t_end": tr.t_end})
        print(f"trajectory {k}: {tr.outcome} at t={tr.t_end:.2f}")
    csvio.write_json(out / "rollouts.json", {"rollouts": results, "theta": str(theta), "config": exp.raw})
    return EXIT_OK


# --- sweep -------------------------------------------------------------------------------

def sweep_run(exp, alpha, delta, variant, seed, iterations, n_sup, radius, n_probes, retry=False):
    """Train one replicate and report whether it converged to the right-sign solution.

    With ``retry`` a failed run gets one more training stage at the same
    (alpha, delta) before it is scored again.
    """
    sup = None
    if variant != "none":
        sup = exp.supervised_set({"kind": variant, "n": n_sup, "seed": 1000 + seed,
                                  "radius": radius}, n=n_sup, seed=1000 + seed, radius=radius)
    problem = exp.problem(supervised=sup if sup is not None else (None, None))
    w = exp.weights()
    if sup is not None and w.gamma2 == 0:
        w.gamma2 = 1.0
    net = NetworkFunction(exp.architecture(), seed=seed)
    sched = exp.schedule(iterations_override=iterations, alpha=alpha, delta=delta)
    sched.stages = sched.stages[:1]
    train_schedule(net, problem, sched, w, seed=seed)
    ok = evaluate.run_succeeded(net, exp.truth(), exp.domain(), n_probes, seed=seed)
    if not ok and retry:
        train_schedule(net, problem, sched, w, seed=seed + 7919)
        ok = evaluate.run_succeeded(net, exp.truth(), exp.domain(), n_probes, seed=seed)
    return ok


def _sweep_worker(payload):
    raw, base_dir, args = payload
    from .config import validate
    return sweep_run(validate(raw, base_dir), *args)


def cmd_sweep(args):
    exp = load_config(args.config)
    sw = exp.raw.get("sweep")
    if sw is None:
        raise ConfigError("config has no 'sweep' section")
    if exp.truth() is None:
        raise ConfigError("sweep needs a ground_truth to score runs")
    out = _out_dir(args, exp)
    seeds = _seeds(args, exp)
    alphas = sw.get("alphas", [exp.raw["schedule"][0]["alpha"]])
    variants = sw.get("supervised", ["none"])
    its = sw.get("iterations", exp.raw["schedule"][0]["iterations"])
    n_sup = sw.get("n_supervised", 10)
    radius = sw.get("localized_radius", 0.5)
    n_probes = sw.get("n_probes", 10_000)
    cells = [(a, d, v) for a in alphas for d in sw["deltas"] for v in variants]
    retry = sw.get("retry", False)
    tasks = [(a, d, v, s, its, n_sup, radius, n_probes, retry) for a, d, v in cells for s in seeds]
    jobs = max_workers(args.jobs)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            oks = list(pool.map(_sweep_worker, [(exp.raw, str(exp.base_dir), t) for t in tasks]))
    else:
        oks = [sweep_run(exp, *t) for t in tasks]
    rows = []
    for i, (a, d, v) in enumerate(cells):
        ok = oks[i * len(seeds):(i + 1) * len(seeds)]
        p = float(np.mean(ok))
        hw = float(1.96 * np.sqrt(p * (1 - p) / len(ok)))
        rows.append((exp.raw["domain"]["kind"], a, d, v, p, hw, len(ok)))
        print(f"alpha={a} delta={d} supervised={v}: success {p:.2f} +- {hw:.2f} ({len(ok)} runs)")
    cols = ("domain", "alpha", "delta", "supervised", "success_rate", "half_width", "runs")
    csvio.write_csv(out / "success_rates.csv", cols, rows, _meta(exp, seeds, "sweep"))
    return EXIT_OK


# --- entry point -------------------------------------------------------------------------

COMMANDS = {"train": cmd_train, "evaluate": cmd_evaluate, "oracle": cmd_oracle,
            "rollout": cmd_rollout, "sweep": cmd_sweep}


def build_parser():
    p = argparse.ArgumentParser(prog="hjsolve", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="experiment JSON config")
        s.add_argument("--theta", help="parameter file (.hjnn)")
        s.add_argument("--out", help="output directory")
        s.add_argument("--seed", type=int, help="override the config seeds")
        s.add_argument("--jobs", type=int, default=1, help="parallel replicas")
        if name == "rollout":
            s.add_argument("--states", help="CSV of initial states (overrides the config)")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    t0 = time.perf_counter()
    try:
        code = COMMANDS[args.command](args)
    except (ConfigError, InvalidThetaFile) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"done in {time.perf_counter() - t0:.1f}s", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
