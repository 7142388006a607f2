"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``ACCEPTANCE <n> PASS|FAIL`` line (visible with or
without ``-s``) before asserting, so a full run doubles as a report.
"""
import time

import numpy as np
import pytest

from hjsolve import cli, control, csvio, evaluate
from hjsolve import grid_oracle as go
from hjsolve import hamiltonian as hm
from hjsolve import loss as ls
from hjsolve import scheme as sc
from hjsolve.config import bundled_config, load_config
from hjsolve.errors import InvalidThetaFile
from hjsolve.network import MlpArchitecture, NetworkFunction, PeriodicArchitecture, load_theta
from hjsolve.trainer import train_schedule

EIK = hm.EikonalSquared()


@pytest.fixture
def report(capsys):
    """``report(n, ok, detail, elapsed, budget)`` prints the verdict line then asserts it."""
    def _report(n, ok, detail, elapsed, budget):
        ok = bool(ok) and elapsed < budget
        with capsys.disabled():
            print(f"\nACCEPTANCE {n:>2} {'PASS' if ok else 'FAIL'}  {detail}  [{elapsed:.1f}s / {budget}s]")
        assert ok, detail
    return _report


def test_01_laplacian_spectrum(report):
    t0 = time.perf_counter()
    worst = 0.0
    for d in (1, 2):
        for N in range(3, 9):
            g = go.GridSpec(d, N)
            lam = np.linalg.eigvalsh(-go.laplacian_matrix(g)).min()
            worst = max(worst, abs(lam - 4 * d * np.sin(np.pi * g.delta / 2) ** 2))
    report(1, worst <= 1e-10, f"max |lambda_min - 4d sin^2(pi delta/2)| = {worst:.2e}",
           time.perf_counter() - t0, 1)


def test_02_functional_gradient(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    alpha, eps = 2.0, 1e-6
    worst_id = worst_fd = 0.0
    for d in (1, 2):
        for N in range(3, 9):
            g = go.GridSpec(d, N)
            inner = np.argwhere(~g.boundary_mask())
            for _ in range(50):
                U = rng.standard_normal(g.shape)
                grad = go.grad_discrete_functional(EIK, alpha, g, U).ravel()
                s = go.assemble_adjoint(EIK, alpha, g, U)
                worst_id = max(worst_id, np.abs(grad + g.delta ** (d - 1) * (s.matrix @ s.W)).max())
                fd = np.empty_like(grad)
                for k, idx in enumerate(inner):
                    idx = tuple(idx)
                    Up, Um = U.copy(), U.copy()
                    Up[idx] += eps
                    Um[idx] -= eps
                    fd[k] = (go.discrete_functional(EIK, alpha, g, Up)
                             - go.discrete_functional(EIK, alpha, g, Um)) / (2 * eps)
                worst_fd = max(worst_fd, np.abs(fd - grad).max() / np.abs(grad).max())
    ok = worst_id <= 1e-10 and worst_fd <= 1e-7
    report(2, ok, f"identity err {worst_id:.1e}, finite-difference rel err {worst_fd:.1e}",
           time.perf_counter() - t0, 10)


def test_03_grid_theorem(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    details, ok = [], True
    for d, N, alpha in ((1, 4, 10.0), (1, 8, 30.0), (2, 4, 10.0), (2, 6, 20.0)):
        g = go.GridSpec(d, N)
        fp = go.solve_fd_fixed_point(EIK, alpha, g, tol=1e-12)
        L = go.grid_lipschitz(g, fp.U)
        _, margin = sc.uniqueness_condition(EIK, sc.SchemeConfig(alpha, g.delta), L, d)
        s = go.assemble_adjoint(EIK, alpha, g, fp.U)
        smin = s.singular_values().min()
        bound = go.adjoint_lower_bound(alpha, g, s.V)
        closed = 4 * alpha * d * np.sin(np.pi * g.delta / 2) ** 2 - 2 * d * np.abs(s.V).max()
        worst_w = worst_gap = 0.0
        for _ in range(20):
            U0 = np.zeros(g.shape)
            U0[~g.boundary_mask()] = rng.uniform(-1, 1, g.n_interior)
            U, w = go.minimize_grid_functional(EIK, alpha, g, U0=U0)
            worst_w = max(worst_w, w)
            worst_gap = max(worst_gap, np.abs(U - fp.U).max())
        case_ok = (margin > 0 and smin > 0 and smin >= bound - 1e-12 and abs(bound - closed) < 1e-12
                   and worst_w < 1e-6 and worst_gap <= 1e-5)
        ok &= case_ok
        details.append(f"d={d} N={N}: margin {margin:.2f} smin {smin:.3f}>={bound:.3f} "
                       f"|W| {worst_w:.0e} gap {worst_gap:.0e}")
    report(3, ok, "; ".join(details), time.perf_counter() - t0, 60)


def test_04_fd_convergence(report):
    t0 = time.perf_counter()
    alpha = 1.0
    errs, deltas = [], []
    for N in (16, 32, 64, 128):
        g = go.GridSpec(1, N)
        fp = go.solve_fd_fixed_point(EIK, alpha, g, tol=1e-12, max_iters=2_000_000)
        x = g.coords()[..., 0]
        errs.append(np.abs(fp.U - np.minimum(x, 1 - x)).max())
        deltas.append(g.delta)
    errs, deltas = np.array(errs), np.array(deltas)
    # the 1-D scheme is exact up to rounding here, so order is compared above a 1e-12 floor
    ok = np.all(np.diff(errs) <= 1e-12) and np.all(errs <= 3 * alpha * deltas)
    report(4, ok, "errors " + ", ".join(f"{e:.3e}" for e in errs), time.perf_counter() - t0, 10)


def _gradient_probe_stats(net, h, cfg, w, batch, rng, n_probes=200, eps=1e-5):
    """Compare the analytic gradient with central differences along random unit directions.

    A probe whose step straddles a ReLU kink shows up as disagreement between
    the eps and eps/2 difference quotients; those probes are excluded.
    """
    _, _, grad = ls.loss_and_grad(net, h, cfg, w, batch)
    th = net.theta.copy()

    def slope(v, e):
        net.theta[:] = th + e * v
        fp = ls.loss_value(net, h, cfg, w, batch)[0]
        net.theta[:] = th - e * v
        fm = ls.loss_value(net, h, cfg, w, batch)[0]
        net.theta[:] = th
        return (fp - fm) / (2 * e)

    good = tested = 0
    for _ in range(n_probes):
        v = rng.standard_normal(th.size)
        v /= np.linalg.norm(v)
        s1, s2 = slope(v, eps), slope(v, eps / 2)
        scale = max(abs(s1), abs(grad @ v), 1e-8)
        if abs(s1 - s2) > 1e-5 * scale:
            continue
        tested += 1
        good += abs(grad @ v - s2) <= 1e-4 * scale
    return good, tested


def test_05_network_gradient(report):
    from hjsolve import geometry
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    cases = []
    mlp = NetworkFunction(MlpArchitecture(2, (16, 16)), seed=5)
    batch = ls.Batch(interior=rng.uniform(-3, 3, (60, 2)), boundary=rng.uniform(-3, 3, (20, 2)),
                     boundary_values=np.zeros(20), supervised=rng.uniform(-3, 3, (10, 2)),
                     supervised_values=rng.uniform(0, 3, 10))
    cases.append(("mlp", mlp, EIK, sc.SchemeConfig(2.0, 0.3), ls.LossWeights(1.0, 1.0), batch))
    per = NetworkFunction(PeriodicArchitecture(2, ((2, 3),), (12, 12)), seed=6)
    dom = geometry.ProductWithTorus(geometry.Annulus(2, 0.2, 5.0), 1)
    X = geometry.sample_interior(dom, geometry.SamplerSpec(seed=7), 60)
    Xb, tags = geometry.sample_boundary(dom, geometry.SamplerSpec(seed=8), 20)
    batch = ls.Batch(interior=X, boundary=Xb, boundary_values=np.where(tags == geometry.OUTER, 5.0, 0.0))
    cases.append(("periodic", per, hm.ReedsShepp(), sc.SchemeConfig(2.5, 0.3), ls.LossWeights(1.0), batch))
    ok, details = True, []
    for name, net, h, cfg, w, b in cases:
        good, tested = _gradient_probe_stats(net, h, cfg, w, b, rng)
        frac = good / max(tested, 1)
        ok &= tested >= 150 and frac >= 0.99
        details.append(f"{name} {good}/{tested} agree")
    report(5, ok, ", ".join(details), time.perf_counter() - t0, 30)


HAMILTONIANS = [hm.EikonalSquared(), hm.EikonalNorm(), hm.Quadratic(), hm.ReedsShepp(1.0, 1.0),
                hm.PursuitEvasion(0.8, 1.0, 1.0, 1.2)]


def test_06_scheme_properties(report):
    t0 = time.perf_counter()
    L = 2.0
    ok, details = True, []
    for h in HAMILTONIANS:
        worst = sc.consistency_errors(h, sc.SchemeConfig(1.3, 0.2), 10_000, seed=6).max()
        bad, tested = sc.monotonicity_violations(h, sc.SchemeConfig(h.ch_bound(L), 0.3), L, 100_000, seed=6)
        ok &= worst <= 1e-12 and bad == 0 and tested > 90_000
        details.append(f"{h.kind}: cons {worst:.0e} viol {bad}/{tested}")
    report(6, ok, "; ".join(details), time.perf_counter() - t0, 30)


def test_07_cube_schedule(report):
    t0 = time.perf_counter()
    exp = load_config(bundled_config("eikonal2d"))
    ev = exp.evaluation()
    finals, monotone = [], 0
    for seed in exp.seeds():
        net = NetworkFunction(exp.architecture(), seed=seed)
        mses = []

        def after_stage(m, net, res):
            mses.append(evaluate.mse_linf(net, exp.truth(), exp.domain(), ev["n"], ev["include_origin"],
                                          ev["seed"]))

        train_schedule(net, exp.problem(), exp.schedule(), exp.weights(), seed=seed, stage_callback=after_stage)
        series = [m.mse for m in mses]
        monotone += bool(np.all(np.diff(series) < 0))
        finals.append(mses[-1])
    ok = all(m.mse <= 1e-3 and m.linf <= 0.15 for m in finals) and monotone >= 2
    detail = ", ".join(f"mse {m.mse:.2e} linf {m.linf:.3f}" for m in finals) + f"; monotone in {monotone}/3"
    report(7, ok, detail, time.perf_counter() - t0, 300)


def test_08_riccati(report):
    t0 = time.perf_counter()
    worst = 0.0
    for a in (0.0, 4 / 25, 1.0):
        for t in (0.1, 0.5):
            E = go.riccati_reference(np.array([[a]]), t)
            worst = max(worst, abs(np.asarray(E).ravel()[0] - np.tan(np.arctan(a) - t)))
    exp = load_config(bundled_config("riccati2d"))
    ev = exp.evaluation()
    net = NetworkFunction(exp.architecture(), seed=0)
    train_schedule(net, exp.problem(), exp.schedule(), exp.weights(), seed=0)
    m = evaluate.mse_linf(net, exp.truth(), exp.domain(), ev["n"], seed=ev["seed"], horizon=exp.horizon())
    ok = worst <= 1e-8 and m.mse <= 5e-2
    report(8, ok, f"closed-form err {worst:.1e}; trained mse {m.mse:.2e}", time.perf_counter() - t0, 600)


def test_09_success_trend(report):
    t0 = time.perf_counter()
    exp = load_config(bundled_config("ball_success"))
    sw = exp.raw["sweep"]
    rate = {}
    for variant in ("none", "uniform"):
        for delta in (0.7, 0.2, 0.01):
            if variant == "uniform" and delta != 0.01:
                continue
            oks = [cli.sweep_run(exp, 2.0, delta, variant, s, sw["iterations"], sw["n_supervised"],
                                 0.5, sw["n_probes"]) for s in exp.seeds()]
            rate[variant, delta] = float(np.mean(oks))
    ok = rate["none", 0.7] >= rate["none", 0.01] and rate["uniform", 0.01] >= rate["none", 0.01]
    detail = ", ".join(f"{v}/{d}: {r:.1f}" for (v, d), r in rate.items())
    report(9, ok, detail, time.perf_counter() - t0, 1200)


def test_10_rollouts(report):
    t0 = time.perf_counter()
    exp = load_config(bundled_config("reeds_shepp"))
    ro = exp.raw["rollout"]
    car = control.CarParams(**ro.get("car", {}))
    _, _, poses = csvio.read_csv(exp.path(ro["initial_states"]))
    outcomes = []
    try:
        net = NetworkFunction(*load_theta(exp.path(ro["theta"])))
    except (OSError, InvalidThetaFile) as exc:
        net = None
        outcomes.append(f"no theta ({exc})")
    if net is not None:
        for s0 in poses:
            t_max = ro["t_max_factor"] * np.hypot(s0[0], s0[1]) / car.sigma
            tr = control.rollout_car(net, car, s0, ro["dt"], t_max, ro["target_radius"], ro["delta"])
            outcomes.append(tr.outcome)
    car_ok = len(outcomes) == len(poses) == 5 and all(o == "ReachedTarget" for o in outcomes)

    game = load_config(bundled_config("game"))
    gro = game.raw["rollout"]
    pe, pp = control.CarParams(**gro["evader"]), control.CarParams(**gro["pursuer"])
    gnet = NetworkFunction(game.architecture(), seed=0)
    _, _, states = csvio.read_csv(game.path(gro["initial_states"]))
    step_bound = (pe.sigma + pp.sigma) * gro["dt"]
    worst = 0.0
    for s0 in states:
        tr = control.rollout_game(gnet, pe, pp, s0, gro["dt"], 5.0, gro["capture_radius"],
                                  gro["escape_radius"], gro["delta"])
        worst = max(worst, np.abs(np.diff(tr.distance)).max() / step_bound)
    game_ok = worst <= 1 + 1e-12
    report(10, car_ok and game_ok, f"car outcomes {outcomes}; game max step / bound {worst:.6f}",
           time.perf_counter() - t0, 60)
