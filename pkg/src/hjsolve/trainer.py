"""SGD on the least-squares residual with resampling, and the (alpha, delta) schedule.

``sgd_lxf`` runs one stage: ``K`` gradient steps, each on a fresh batch (or on
the next mini-batch of a fixed dataset). ``train_schedule`` chains stages with
non-increasing ``alpha`` and ``delta``, threading parameters and optimizer
state, and records the uniqueness-condition margin at every stage boundary.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .errors import DivergenceDetected
from .loss import PART_NAMES, Batch, LossWeights, loss_and_grad
from .scheme import SchemeConfig, uniqueness_condition

TRACE_COLUMNS = ("iteration", "total", "residual_part", "boundary_part",
                 "supervised_part", "initial_part", "wall_ms")

EVERY_ITERATION = "every_iteration"
FIXED_DATASET = "fixed_dataset"


# --- problem description ----------------------------------------------------------

def constant_boundary(values):
    """Boundary data taking a constant per tag (``values``: dict tag -> value, or a float)."""
    def g(points, tags):
        if np.isscalar(values):
            return np.full(len(points), float(values))
        return np.array([values[int(t)] for t in tags], dtype=float)
    return g


@dataclass
class Problem:
    """A boundary- or initial-value problem for ``H(x, grad u) = 0``.

    ``boundary_values(points, tags)`` gives g on sampled boundary points. For
    time-dependent problems ``initial(x)`` is the initial datum, ``horizon``
    the final time, and the network input is ``(x, t)``.
    """

    domain: geometry.Domain
    hamiltonian: object
    boundary_values: object = None
    supervised_points: np.ndarray | None = None
    supervised_values: np.ndarray | None = None
    initial: object = None
    horizon: float | None = None
    interior_sampling: str = geometry.UNIFORM_INTERIOR

    @property
    def time_dependent(self):
        return self.horizon is not None

    @property
    def space_dim(self):
        return self.domain.dim


# --- optimizers -----------------------------------------------------------------------

class ConstantStep:
    """Plain SGD: ``theta <- theta - lr * g``."""

    def __init__(self, lr=1e-3):
        if not lr > 0:
            raise ValueError("learning rate must be positive")
        self.lr = lr

    def step(self, theta, grad):
        theta -= self.lr * grad


class Adam:
    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if not lr > 0:
            raise ValueError("learning rate must be positive")
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = None
        self.v = None
        self.t = 0

    def step(self, theta, grad):
        if self.m is None:
            self.m = np.zeros_like(theta)
            self.v = np.zeros_like(theta)
        self.t += 1
        self.m *= self.beta1
        self.m += (1.0 - self.beta1) * grad
        self.v *= self.beta2
        self.v += (1.0 - self.beta2) * grad * grad
        mhat = self.m / (1.0 - self.beta1 ** self.t)
        vhat = self.v / (1.0 - self.beta2 ** self.t)
        theta -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


@dataclass
class SgdConfig:
    iterations: int = 1000
    n_interior: int = 60
    n_boundary: int = 20
    n_supervised: int = 0
    n_initial: int = 0
    step_rule: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    resample: str = EVERY_ITERATION
    epochs: int = 0
    batch_size: int = 20
    shuffle_seed: int = 0

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.resample not in (EVERY_ITERATION, FIXED_DATASET):
            raise ValueError(f"unknown resample mode {self.resample!r}")
        if self.step_rule not in ("adam", "constant"):
            raise ValueError(f"unknown step rule {self.step_rule!r}")

    def make_optimizer(self):
        if self.step_rule == "constant":
            return ConstantStep(self.lr)
        return Adam(self.lr, self.beta1, self.beta2, self.eps)


@dataclass
class Stage:
    alpha: float
    delta: float
    sgd: SgdConfig = field(default_factory=SgdConfig)
    delta_t: float | None = None
    tau: float = 0.0

    @property
    def scheme(self):
        return SchemeConfig(self.alpha, self.delta, self.tau, self.delta_t)


class Schedule:
    """Stages with non-increasing alpha and delta."""

    def __init__(self, stages):
        self.stages = list(stages)
        for a, b in zip(self.stages[:-1], self.stages[1:]):
            if b.alpha > a.alpha or b.delta > a.delta:
                raise ValueError("schedule must have non-increasing alpha and delta")

    def __len__(self):
        return len(self.stages)

    def __iter__(self):
        return iter(self.stages)


# --- batches -------------------------------------------------------------------------

class BatchSource:
    """Draws batches for one problem from seeded, independent streams."""

    def __init__(self, problem, seed, worker_id=0):
        self.problem = problem
        dom = problem.domain
        base = np.random.SeedSequence([int(seed), int(worker_id)])
        s_int, s_bnd, s_aux = base.spawn(3)
        self.interior_sampler = geometry.Sampler(
            dom, geometry.SamplerSpec(problem.interior_sampling, int(s_int.generate_state(1)[0])))
        self.boundary_sampler = geometry.Sampler(
            dom, geometry.SamplerSpec(geometry.UNIFORM_BOUNDARY, int(s_bnd.generate_state(1)[0])))
        self.rng = np.random.default_rng(s_aux)

    def _times(self, n, upper):
        return self.rng.uniform(0.0, upper, n)

    def draw(self, sgd, cfg, w):
        p = self.problem
        X = self.interior_sampler.interior(sgd.n_interior)
        batch = Batch(interior=X)
        if p.time_dependent:
            batch.interior_t = self._times(X.shape[0], p.horizon - cfg.delta_t)
        if w.gamma1 > 0 and sgd.n_boundary > 0 and p.boundary_values is not None:
            Xb, tags = self.boundary_sampler.boundary(sgd.n_boundary)
            batch.boundary_values = p.boundary_values(Xb, tags)
            if p.time_dependent:
                Xb = np.hstack([Xb, self._times(Xb.shape[0], p.horizon)[:, None]])
            batch.boundary = Xb
        if w.gamma2 > 0 and p.supervised_points is not None:
            Xs, hs = self._supervised(sgd.n_supervised)
            batch.supervised, batch.supervised_values = Xs, hs
        if w.gamma0 > 0 and p.initial is not None and sgd.n_initial > 0:
            Xi = self.interior_sampler.interior(sgd.n_initial)
            batch.initial, batch.initial_values = Xi, p.initial(Xi)
        return batch

    def _supervised(self, n):
        P = np.atleast_2d(self.problem.supervised_points)
        V = np.asarray(self.problem.supervised_values, dtype=float)
        if n <= 0 or n >= P.shape[0]:
            return P, V
        idx = np.sort(self.rng.choice(P.shape[0], n, replace=False))
        return P[idx], V[idx]


class FixedDataset:
    """Pre-drawn interior/boundary pools, reshuffled and split into mini-batches each epoch.

    Interior and boundary pools are split into the same number of batches so
    every mini-batch keeps the pool ratio and has interior points.
    """

    def __init__(self, batch, batch_size, shuffle_seed):
        self.batch = batch
        self.rng = np.random.default_rng(shuffle_seed)
        n_int = len(batch.interior)
        n_bnd = 0 if batch.boundary is None else len(batch.boundary)
        self.n_batches = max(1, int(np.ceil((n_int + n_bnd) / batch_size)))
        self.n_batches = min(self.n_batches, n_int)

    def epoch(self):
        b = self.batch
        parts_i = np.array_split(self.rng.permutation(len(b.interior)), self.n_batches)
        if b.boundary is not None:
            parts_b = np.array_split(self.rng.permutation(len(b.boundary)), self.n_batches)
        for k in range(self.n_batches):
            ii = parts_i[k]
            mb = Batch(interior=b.interior[ii],
                       interior_t=None if b.interior_t is None else b.interior_t[ii],
                       supervised=b.supervised, supervised_values=b.supervised_values,
                       initial=b.initial, initial_values=b.initial_values)
            if b.boundary is not None and len(parts_b[k]):
                mb.boundary = b.boundary[parts_b[k]]
                mb.boundary_values = b.boundary_values[parts_b[k]]
            yield mb


# --- training -------------------------------------------------------------------------

@dataclass
class StageResult:
    alpha: float
    delta: float
    margin: float
    satisfied: bool
    lipschitz: float
    trace: np.ndarray  # rows of TRACE_COLUMNS


@dataclass
class TrainReport:
    stages: list
    theta: np.ndarray
    wall_time: float
    seed: int

    @property
    def trace(self):
        """All stage traces stacked, with a global iteration counter."""
        rows, offset = [], 0
        for st in self.stages:
            t = st.trace.copy()
            t[:, 0] += offset
            offset += len(t)
            rows.append(t)
        return np.vstack(rows) if rows else np.zeros((0, len(TRACE_COLUMNS)))


def _trace_row(k, total, parts, t0):
    return [k, total] + [parts[n] for n in PART_NAMES] + [1e3 * (time.perf_counter() - t0)]


def sgd_lxf(net, problem, cfg, w, sgd, source=None, optimizer=None, seed=0, divergence_factor=1e6,
            callback=None):
    """Run ``sgd.iterations`` SGD steps on ``net.theta`` in place; returns the trace array."""
    if source is None:
        source = BatchSource(problem, seed)
    if optimizer is None:
        optimizer = sgd.make_optimizer()
    h = problem.hamiltonian
    if problem.time_dependent:
        cfg.check_time_step(problem.space_dim)
    rows = []
    t0 = time.perf_counter()
    if sgd.resample == FIXED_DATASET:
        pool_cfg = SgdConfig(**{**sgd.__dict__, "resample": EVERY_ITERATION})
        data = FixedDataset(source.draw(pool_cfg, cfg, w), sgd.batch_size, sgd.shuffle_seed)
        batches = (mb for _ in range(sgd.epochs) for mb in data.epoch())
    else:
        batches = (source.draw(sgd, cfg, w) for _ in range(sgd.iterations))
    reference = None
    for k, batch in enumerate(batches):
        total, parts, grad = loss_and_grad(net, h, cfg, w, batch)
        if reference is None:
            reference = max(total, np.finfo(float).tiny)
        if not np.isfinite(total) or total > divergence_factor * reference:
            raise DivergenceDetected(f"loss {total:.3g} exceeded {divergence_factor:g} x initial",
                                     iteration=k, trace=np.array(rows))
        optimizer.step(net.theta, grad)
        rows.append(_trace_row(k, total, parts, t0))
        if callback is not None:
            callback(k, total, parts)
    return np.array(rows, dtype=float).reshape(-1, len(TRACE_COLUMNS))


def _stage_optimizer(current, sgd, reset):
    """Keep ``current`` (and its moment state) when the step rule matches, with this stage's settings."""
    fresh = sgd.make_optimizer()
    if reset or current is None or type(current) is not type(fresh):
        return fresh
    current.lr = fresh.lr
    if isinstance(current, Adam):
        current.beta1, current.beta2, current.eps = fresh.beta1, fresh.beta2, fresh.eps
    return current


def train_schedule(net, problem, schedule, w, seed=0, reset_optimizer=False, stage_callback=None,
                   lipschitz=None):
    """Run every stage of ``schedule`` in order, threading parameters and optimizer state.

    ``lipschitz(net)`` gives the L used for the margin record (default: the
    network's own upper bound). ``stage_callback(index, net, result)`` is
    called after each stage.
    """
    if not isinstance(schedule, Schedule):
        schedule = Schedule(schedule)
    source = BatchSource(problem, seed)
    optimizer = None
    results = []
    t0 = time.perf_counter()
    d = problem.space_dim
    for m, stage in enumerate(schedule):
        cfg = stage.scheme
        L = lipschitz(net) if lipschitz is not None else net.lipschitz_bound()
        ok, margin = uniqueness_condition(problem.hamiltonian, cfg, max(L, 1e-12), d)
        optimizer = _stage_optimizer(optimizer, stage.sgd, reset_optimizer)
        try:
            trace = sgd_lxf(net, problem, cfg, w, stage.sgd, source=source, optimizer=optimizer)
        except DivergenceDetected as exc:
            exc.stage = m
            raise
        res = StageResult(stage.alpha, stage.delta, margin, ok, L, trace)
        results.append(res)
        if stage_callback is not None:
            stage_callback(m, net, res)
    return TrainReport(results, net.theta.copy(), time.perf_counter() - t0, seed)


__all__ = ["Problem", "SgdConfig", "Stage", "Schedule", "BatchSource", "FixedDataset", "Adam",
           "ConstantStep", "sgd_lxf", "train_schedule", "TrainReport", "StageResult",
           "LossWeights", "constant_boundary", "TRACE_COLUMNS"]
