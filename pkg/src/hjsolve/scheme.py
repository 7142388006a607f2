"""Finite-difference stencils and the Lax-Friedrichs numerical Hamiltonian.

For a point ``x`` the stencil values are stored as a row
``U = [u(x), u(x+d e_1), ..., u(x+d e_d), u(x-d e_1), ..., u(x-d e_d)]``
(length ``2d+1``); time-dependent stencils append ``u(x, t+dt)``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch

TWO_PI = 2.0 * np.pi


class StabilityWarning(UserWarning):
    pass


class MissingTimeStep(ValueError):
    pass


@dataclass
class SchemeConfig:
    alpha: float
    delta: float
    tau: float = 0.0
    delta_t: float | None = None

    def __post_init__(self):
        if not (self.alpha > 0 and self.delta > 0):
            raise ValueError("alpha and delta must be positive")
        if self.tau < 0:
            raise ValueError("tau must be non-negative")
        if self.delta_t is not None and not self.delta_t > 0:
            raise ValueError("delta_t must be positive")

    def max_stable_time_step(self, d):
        """Largest ``delta_t`` keeping the explicit update monotone: delta/(2 d alpha)."""
        return self.delta / (2.0 * d * self.alpha)

    def check_time_step(self, d):
        """Warn if ``delta_t`` exceeds the monotonicity cap; returns True when within it."""
        if self.delta_t is None:
            return True
        cap = self.max_stable_time_step(d)
        if self.delta_t > cap:
            warnings.warn(f"delta_t={self.delta_t} exceeds delta/(2 d alpha)={cap:.4g}; "
                          "the explicit update is not guaranteed monotone", StabilityWarning,
                          stacklevel=2)
            return False
        return True


# --- stencils -----------------------------------------------------------------

def _points(x):
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    return np.atleast_2d(X), single


def stencil_points(X, delta):
    """``(n*(2d+1), d)`` array of stencil points, grouped per sample."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, d = X.shape
    offsets = np.vstack([np.zeros(d), delta * np.eye(d), -delta * np.eye(d)])
    return (X[:, None, :] + offsets[None, :, :]).reshape(n * (2 * d + 1), d)


def time_stencil_points(X, T, delta, delta_t):
    """Space-time stencil ``(n*(2d+2), d+1)``: spatial stencil at t, then (x, t+dt)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    T = np.asarray(T, dtype=float).reshape(-1)
    n, d = X.shape
    sp = stencil_points(X, delta).reshape(n, 2 * d + 1, d)
    t = np.repeat(T[:, None], 2 * d + 1, axis=1)
    spatial = np.concatenate([sp, t[:, :, None]], axis=2)
    fwd = np.concatenate([X, (T + delta_t)[:, None]], axis=1)[:, None, :]
    return np.concatenate([spatial, fwd], axis=1).reshape(n * (2 * d + 2), d + 1)


def d_plus(u, x, delta):
    """Forward differences ``(u(x + delta e_i) - u(x)) / delta``."""
    X, single = _points(x)
    n, d = X.shape
    vals = np.asarray(u(stencil_points(X, delta)), dtype=float).reshape(n, 2 * d + 1)
    out = (vals[:, 1:d + 1] - vals[:, :1]) / delta
    return out[0] if single else out


def d_minus(u, x, delta):
    """Backward differences ``(u(x) - u(x - delta e_i)) / delta``."""
    X, single = _points(x)
    n, d = X.shape
    vals = np.asarray(u(stencil_points(X, delta)), dtype=float).reshape(n, 2 * d + 1)
    out = (vals[:, :1] - vals[:, d + 1:]) / delta
    return out[0] if single else out


def slopes_from_stencil(U, delta):
    """``(p_plus, p_minus)`` from stencil value rows ``U`` of shape ``(n, 2d+1)``."""
    U = np.atleast_2d(U)
    d = (U.shape[1] - 1) // 2
    return (U[:, 1:d + 1] - U[:, :1]) / delta, (U[:, :1] - U[:, d + 1:2 * d + 1]) / delta


# --- numerical Hamiltonian ------------------------------------------------------

def lax_friedrichs(h, cfg, x, p_plus, p_minus, u_x=None):
    """``H(x, (p+ + p-)/2) - alpha * sum_i (p+_i - p-_i)/2 + tau * u(x)``."""
    X, single = _points(x)
    Pp = np.atleast_2d(np.asarray(p_plus, dtype=float))
    Pm = np.atleast_2d(np.asarray(p_minus, dtype=float))
    if Pp.shape != Pm.shape or Pp.shape[1] != X.shape[1]:
        raise DimensionMismatch("p_plus, p_minus and x must share the dimension")
    val = h.value(X, 0.5 * (Pp + Pm)) - 0.5 * cfg.alpha * np.sum(Pp - Pm, axis=1)
    if cfg.tau > 0:
        if u_x is None:
            raise ValueError("u(x) is required when tau > 0")
        val = val + cfg.tau * np.asarray(u_x, dtype=float).reshape(-1)
    return val[0] if single else val


def lf_from_stencil(h, cfg, X, U):
    """Lax-Friedrichs value for each stencil row of ``U``."""
    Pp, Pm = slopes_from_stencil(U, cfg.delta)
    return lax_friedrichs(h, cfg, np.atleast_2d(X), Pp, Pm, U[:, 0] if cfg.tau > 0 else None)


def lf_stencil_partials(h, cfg, X, U):
    """Value and derivatives of the Lax-Friedrichs value w.r.t. each stencil entry.

    Returns ``(value, partials)`` with ``partials`` shaped like ``U``:
    centre ``alpha d / delta + tau``, ``u(x + delta e_i)``:
    ``(dH_i - alpha) / (2 delta)``, ``u(x - delta e_i)``:
    ``(-dH_i - alpha) / (2 delta)``, with ``dH = grad_p H`` at the mean slope.
    """
    X = np.atleast_2d(X)
    d = X.shape[1]
    Pp, Pm = slopes_from_stencil(U, cfg.delta)
    pbar = 0.5 * (Pp + Pm)
    val = h.value(X, pbar) - 0.5 * cfg.alpha * np.sum(Pp - Pm, axis=1)
    if cfg.tau > 0:
        val = val + cfg.tau * U[:, 0]
    dH = h.grad_p(X, pbar)
    inv = 1.0 / (2.0 * cfg.delta)
    partials = np.empty((X.shape[0], 2 * d + 1))
    partials[:, 0] = cfg.alpha * d / cfg.delta + cfg.tau
    partials[:, 1:d + 1] = (dH - cfg.alpha) * inv
    partials[:, d + 1:] = (-dH - cfg.alpha) * inv
    return val, partials


def residual(h, cfg, u, x):
    """Scheme residual of the field evaluator ``u`` at ``x``."""
    X, single = _points(x)
    n, d = X.shape
    U = np.asarray(u(stencil_points(X, cfg.delta)), dtype=float).reshape(n, 2 * d + 1)
    val = lf_from_stencil(h, cfg, X, U)
    return val[0] if single else val


def residual_time(h, cfg, u, x, t):
    """``u(x, t+dt) - u(x, t) + dt * LxF(x, D+ u(., t), D- u(., t))``.

    ``u`` is evaluated on space-time points with time as the last coordinate.
    """
    if cfg.delta_t is None:
        raise MissingTimeStep("residual_time needs delta_t in the scheme config")
    X, single = _points(x)
    n, d = X.shape
    T = np.broadcast_to(np.asarray(t, dtype=float).reshape(-1), (n,))
    V = np.asarray(u(time_stencil_points(X, T, cfg.delta, cfg.delta_t)), dtype=float)
    V = V.reshape(n, 2 * d + 2)
    val = V[:, -1] - V[:, 0] + cfg.delta_t * lf_from_stencil(h, cfg, X, V[:, :-1])
    return val[0] if single else val


# --- property checks -------------------------------------------------------------

def _probe_points(h, d, n, rng, box=3.0):
    X = rng.uniform(-box, box, size=(n, d))
    # angle coordinates of the car and game states
    if h.kind == "reeds_shepp":
        X[:, 2] = rng.uniform(0.0, TWO_PI, n)
    elif h.kind == "pursuit_evasion":
        X[:, 2:] = rng.uniform(0.0, TWO_PI, (n, 2))
    return X


def _ball(rng, n, d, L):
    g = rng.standard_normal((n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * (L * rng.random(n) ** (1.0 / d))[:, None]


def _dim(h, d):
    if h.dim is not None:
        return h.dim
    return 2 if d is None else d


def consistency_errors(h, cfg, n_probes, seed=0, d=None, L=3.0):
    """``|LxF(x, p, p) - H(x, p)|`` on random probes (``u(x)`` random when tau > 0)."""
    d = _dim(h, d)
    rng = np.random.default_rng(seed)
    if n_probes == 0:
        return np.zeros(0)
    X = _probe_points(h, d, n_probes, rng)
    P = _ball(rng, n_probes, d, L)
    ux = rng.uniform(-1.0, 1.0, n_probes)
    return np.abs(lax_friedrichs(h, cfg, X, P, P, ux) - h.value(X, P))


def check_consistency(h, cfg, n_probes=10_000, seed=0, d=None, tol=1e-12):
    return bool(np.all(consistency_errors(h, cfg, n_probes, seed, d) <= tol))


def monotonicity_violations(h, cfg, L, n_probes, seed=0, d=None, kink_margin=1e-8):
    """Count probes where the scheme has the wrong sign of sensitivity.

    Each probe draws one-sided slopes ``p+`` and ``p-`` in the Euclidean ball
    of radius ``L`` and builds the stencil values around ``u(x) = 0``. Every
    stencil value is perturbed by ``+-1e-6 delta`` (central difference). A
    violation is an increase under a neighbour perturbation or a decrease
    under a centre perturbation, beyond rounding. Probes whose mean slope is
    within ``kink_margin`` of an |.| kink of H are skipped.

    Returns ``(violations, probes_tested)``.
    """
    d = _dim(h, d)
    rng = np.random.default_rng(seed)
    X = _probe_points(h, d, n_probes, rng)
    Pp = _ball(rng, n_probes, d, L)
    Pm = _ball(rng, n_probes, d, L)
    keep = h.kink_distance(X, 0.5 * (Pp + Pm)) > kink_margin
    X, Pp, Pm = X[keep], Pp[keep], Pm[keep]
    n = X.shape[0]
    dl = cfg.delta
    U = np.hstack([np.zeros((n, 1)), dl * Pp, -dl * Pm])
    base = np.abs(lf_from_stencil(h, cfg, X, U))
    step = 1e-6 * dl
    tol = 1e-12 * np.maximum(1.0, base)
    bad = np.zeros(n, dtype=bool)
    for k in range(2 * d + 1):
        up, dn = U.copy(), U.copy()
        up[:, k] += step
        dn[:, k] -= step
        change = lf_from_stencil(h, cfg, X, up) - lf_from_stencil(h, cfg, X, dn)
        bad |= (change < -tol) if k == 0 else (change > tol)
    return int(bad.sum()), n


def check_monotonicity(h, cfg, L, n_probes=100_000, seed=0, d=None):
    return monotonicity_violations(h, cfg, L, n_probes, seed, d)[0] == 0


def uniqueness_condition(h, cfg, L, d):
    """``margin = 2 alpha sin^2(pi delta / 2) + tau/d - C_H(L)``; satisfied iff margin > 0."""
    margin = (2.0 * cfg.alpha * np.sin(0.5 * np.pi * cfg.delta) ** 2
              + cfg.tau / d - h.ch_bound(L))
    return bool(margin > 0), float(margin)
