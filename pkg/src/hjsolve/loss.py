"""Monte-Carlo least-squares functional and its exact parameter gradient.

    J = (1/N0) sum r(x)^2 + (g1/Nb) sum (Phi - g)^2
        + (g2/Ns) sum (Phi - h)^2 + (g0/Ni) sum (Phi(., 0) - u0)^2

where ``r`` is the Lax-Friedrichs residual (static problems) or the explicit
Euler residual (time-dependent problems). Every network evaluation of one
call goes through a single batched forward pass.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scheme import lf_stencil_partials, stencil_points, time_stencil_points


class EmptyInteriorBatch(ValueError):
    pass


@dataclass
class LossWeights:
    gamma1: float = 1.0
    gamma2: float = 0.0
    gamma0: float = 0.0

    def __post_init__(self):
        for name in ("gamma1", "gamma2", "gamma0"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and non-negative")


@dataclass
class Batch:
    """Sample points for one loss evaluation.

    For time-dependent problems ``interior_t`` holds the sample times and the
    boundary/supervised points carry time as their last coordinate; the
    initial points are spatial only (evaluated at t = 0).
    """

    interior: np.ndarray
    interior_t: np.ndarray | None = None
    boundary: np.ndarray | None = None
    boundary_values: np.ndarray | None = None
    supervised: np.ndarray | None = None
    supervised_values: np.ndarray | None = None
    initial: np.ndarray | None = None
    initial_values: np.ndarray | None = None

    @property
    def time_dependent(self):
        return self.interior_t is not None


PART_NAMES = ("residual", "boundary", "supervised", "initial")


def _n(a):
    return 0 if a is None else len(a)


def loss_and_grad(net, h, cfg, w, batch, need_grad=True):
    """Return ``(total, parts, grad)``; ``grad`` is None when not requested."""
    X = np.atleast_2d(np.asarray(batch.interior, dtype=float))
    n0, d = X.shape
    if n0 == 0:
        raise EmptyInteriorBatch("interior batch is empty")
    if batch.time_dependent:
        if cfg.delta_t is None:
            raise ValueError("time-dependent batch needs delta_t")
        S = time_stencil_points(X, batch.interior_t, cfg.delta, cfg.delta_t)
        width = 2 * d + 2
    else:
        S = stencil_points(X, cfg.delta)
        width = 2 * d + 1

    blocks = [S]
    use_b = w.gamma1 > 0 and _n(batch.boundary) > 0
    use_s = w.gamma2 > 0 and _n(batch.supervised) > 0
    use_i = w.gamma0 > 0 and _n(batch.initial) > 0
    if use_b:
        blocks.append(np.atleast_2d(batch.boundary))
    if use_s:
        blocks.append(np.atleast_2d(batch.supervised))
    if use_i:
        Xi = np.atleast_2d(batch.initial)
        blocks.append(np.hstack([Xi, np.zeros((Xi.shape[0], 1))]))
    pts = np.vstack(blocks)
    out, cache = net.forward_cached(pts)

    upstream = np.zeros(pts.shape[0]) if need_grad else None
    parts = dict.fromkeys(PART_NAMES, 0.0)

    V = out[:S.shape[0]].reshape(n0, width)
    if batch.time_dependent:
        lf, dlf = lf_stencil_partials(h, cfg, X, V[:, :-1])
        r = V[:, -1] - V[:, 0] + cfg.delta_t * lf
        if need_grad:
            dr = np.empty_like(V)
            dr[:, :-1] = cfg.delta_t * dlf
            dr[:, 0] -= 1.0
            dr[:, -1] = 1.0
    else:
        r, dr = lf_stencil_partials(h, cfg, X, V)
    parts["residual"] = float(np.dot(r, r) / n0)
    if need_grad:
        upstream[:S.shape[0]] = ((2.0 / n0) * r[:, None] * dr).ravel()

    pos = S.shape[0]
    for name, used, values, gamma in (
        ("boundary", use_b, batch.boundary_values, w.gamma1),
        ("supervised", use_s, batch.supervised_values, w.gamma2),
        ("initial", use_i, batch.initial_values, w.gamma0),
    ):
        if not used:
            continue
        vals = np.asarray(values, dtype=float).reshape(-1)
        m = vals.size
        e = out[pos:pos + m] - vals
        parts[name] = float(gamma * np.dot(e, e) / m)
        if need_grad:
            upstream[pos:pos + m] = (2.0 * gamma / m) * e
        pos += m

    total = parts["residual"] + parts["boundary"] + parts["supervised"] + parts["initial"]
    grad = net.backward(cache, upstream) if need_grad else None
    return total, parts, grad


def loss_value(net, h, cfg, w, batch):
    total, parts, _ = loss_and_grad(net, h, cfg, w, batch, need_grad=False)
    return total, parts


def loss_grad(net, h, cfg, w, batch):
    return loss_and_grad(net, h, cfg, w, batch)[2]


# the time-dependent variants dispatch on the batch contents
loss_value_time = loss_value
loss_grad_time = loss_grad


def residuals(net, h, cfg, batch):
    """Per-sample residuals of the batch interior points."""
    X = np.atleast_2d(np.asarray(batch.interior, dtype=float))
    n0, d = X.shape
    if batch.time_dependent:
        V = net(time_stencil_points(X, batch.interior_t, cfg.delta, cfg.delta_t)).reshape(n0, 2 * d + 2)
        lf, _ = lf_stencil_partials(h, cfg, X, V[:, :-1])
        return V[:, -1] - V[:, 0] + cfg.delta_t * lf
    V = net(stencil_points(X, cfg.delta)).reshape(n0, 2 * d + 1)
    return lf_stencil_partials(h, cfg, X, V)[0]
