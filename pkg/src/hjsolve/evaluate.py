"""Accuracy metrics, sign-based success rates and residual heat maps."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry
from .scheme import residual


@dataclass
class MetricReport:
    mse: float
    linf: float
    n_samples: int
    include_origin: bool
    seed: int

    def as_dict(self):
        return {"mse": self.mse, "linf": self.linf, "n_samples": self.n_samples,
                "include_origin": self.include_origin, "seed": self.seed}


def _base(domain):
    return domain.base if isinstance(domain, geometry.ProductWithTorus) else domain


def mse_linf(net, truth, domain, n=100_000, include_origin=True, seed=0, horizon=None,
             sampling=geometry.UNIFORM_INTERIOR):
    """Monte-Carlo MSE and sup error of ``net`` against ``truth`` on ``domain``.

    For time-dependent problems pass ``horizon``: samples are uniform in
    ``domain x (0, horizon)``, the network sees ``(x, t)`` and ``truth`` is
    called as ``truth(x, t)``. The origin is added to the sup-norm sample for
    static problems when it lies in the domain; never for an annulus.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    X = geometry.sample_interior(domain, geometry.SamplerSpec(sampling, seed), n)
    if isinstance(_base(domain), geometry.Annulus):
        include_origin = False
    if horizon is not None:
        t = geometry.make_rng(seed, 1).uniform(0.0, horizon, n)
        err = net(np.hstack([X, t[:, None]])) - truth(X, t)
        include_origin = False
    else:
        err = net(X) - truth(X)
    mse = float(np.mean(err ** 2))
    linf = float(np.max(np.abs(err)))
    if include_origin:
        origin = np.zeros((1, domain.dim))
        if isinstance(domain, geometry.ProductWithTorus):
            origin[0, domain.base.dim:] = 0.0
        if domain.contains(origin)[0]:
            linf = max(linf, float(abs(net(origin)[0] - truth(origin)[0])))
        else:
            include_origin = False
    return MetricReport(mse, linf, n, include_origin, seed)


@dataclass
class SuccessRate:
    rate: float
    half_width: float
    successes: list


def run_succeeded(net, truth, domain, n_probes=10_000, seed=0, threshold=0.99):
    """True if ``sign(net)`` matches ``sign(truth)`` on at least ``threshold`` of probes."""
    X = geometry.sample_interior(domain, geometry.SamplerSpec(geometry.UNIFORM_INTERIOR, seed), n_probes)
    return bool(np.mean(np.sign(net(X)) == np.sign(truth(X))) >= threshold)


def success_rate(runs, domain, truth, n_probes=10_000, seed=0, threshold=0.99):
    """Fraction of successful runs with a normal-approximation 95% half-width."""
    if len(runs) < 1:
        raise ValueError("need at least one run")
    ok = [run_succeeded(net, truth, domain, n_probes, seed, threshold) for net in runs]
    p = float(np.mean(ok))
    return SuccessRate(p, float(1.96 * np.sqrt(p * (1 - p) / len(ok))), ok)


@dataclass
class ResidualField:
    x1: np.ndarray
    x2: np.ndarray
    values: np.ndarray  # squared residual, NaN outside the domain
    mean: float
    max: float


def residual_field(net, h, cfg, domain, grid_resolution=101, axes=(0, 1), fixed=None):
    """Squared scheme residual on a uniform lattice of a 2-D cross-section.

    ``axes`` are the two varying coordinates; the others are held at
    ``fixed`` (default 0). Mean and max are over lattice nodes in the domain.
    """
    lo, hi = domain.bounding_box()
    a, b = axes
    x1 = np.linspace(lo[a], hi[a], grid_resolution)
    x2 = np.linspace(lo[b], hi[b], grid_resolution)
    G1, G2 = np.meshgrid(x1, x2, indexing="ij")
    base = np.zeros(domain.dim) if fixed is None else np.asarray(fixed, dtype=float)
    P = np.tile(base, (G1.size, 1))
    P[:, a] = G1.ravel()
    P[:, b] = G2.ravel()
    inside = domain.contains(P)
    vals = np.full(G1.size, np.nan)
    if inside.any():
        vals[inside] = residual(h, cfg, net, P[inside]) ** 2
    vals = vals.reshape(G1.shape)
    inner = vals[np.isfinite(vals)]
    mean = float(inner.mean()) if inner.size else float("nan")
    mx = float(inner.max()) if inner.size else float("nan")
    return ResidualField(x1, x2, vals, mean, mx)
