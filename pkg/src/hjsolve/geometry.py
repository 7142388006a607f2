"""Domains, boundary descriptions and the samplers drawing collocation points.

Points are ``(n, dim)`` float64 arrays. Periodic (angle) coordinates of a
``ProductWithTorus`` domain are appended after the base coordinates and range
over ``[0, 2*pi)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

TWO_PI = 2.0 * np.pi

# boundary tags for annular shells; cube faces use 2*axis + (0 for -, 1 for +)
INNER = 0
OUTER = 1


class InvalidSampler(ValueError):
    pass


class TooFewPoints(ValueError):
    pass


def _vec(center, dim):
    c = np.zeros(dim) if center is None else np.asarray(center, dtype=float).ravel()
    if c.size == 1 and dim > 1:
        c = np.full(dim, float(c[0]))
    if c.size != dim:
        raise ValueError(f"center has {c.size} components, expected {dim}")
    return c


class Domain:
    """Base class. Subclasses implement containment, boundary tests and sampling."""

    dim: int
    radial = False

    def contains(self, x):
        raise NotImplementedError

    def on_boundary(self, x, tol=1e-12):
        raise NotImplementedError

    def bounding_box(self):
        raise NotImplementedError

    def to_dict(self):
        raise NotImplementedError


@dataclass
class Cube(Domain):
    dim: int
    half_width: float
    center: np.ndarray = None

    def __post_init__(self):
        if self.half_width <= 0:
            raise ValueError("half_width must be positive")
        self.center = _vec(self.center, self.dim)

    def _linf(self, x):
        return np.max(np.abs(np.atleast_2d(x) - self.center), axis=1)

    def contains(self, x):
        return self._linf(x) < self.half_width

    def on_boundary(self, x, tol=1e-12):
        return np.abs(self._linf(x) - self.half_width) <= tol

    def bounding_box(self):
        return self.center - self.half_width, self.center + self.half_width

    def sample_uniform(self, rng, n):
        u = rng.uniform(-self.half_width, self.half_width, size=(n, self.dim))
        # the open cube excludes the (measure-zero) lower face hit by uniform()
        while True:
            bad = np.abs(u).max(axis=1) >= self.half_width
            if not bad.any():
                break
            u[bad] = rng.uniform(-self.half_width, self.half_width, size=(bad.sum(), self.dim))
        return u + self.center

    def sample_boundary(self, rng, n):
        tags = rng.integers(0, 2 * self.dim, size=n)
        pts = rng.uniform(-self.half_width, self.half_width, size=(n, self.dim))
        axis = tags // 2
        sign = np.where(tags % 2 == 1, 1.0, -1.0)
        pts[np.arange(n), axis] = sign * self.half_width
        return pts + self.center, tags

    def to_dict(self):
        return {"kind": "cube", "dim": self.dim, "half_width": self.half_width,
                "center": self.center.tolist()}


@dataclass
class Ball(Domain):
    dim: int
    radius: float
    center: np.ndarray = None
    radial = True

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        self.center = _vec(self.center, self.dim)

    def _norm(self, x):
        return np.linalg.norm(np.atleast_2d(x) - self.center, axis=1)

    def contains(self, x):
        return self._norm(x) < self.radius

    def on_boundary(self, x, tol=1e-12):
        return np.abs(self._norm(x) - self.radius) <= tol

    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius

    def sample_uniform(self, rng, n):
        r = self.radius * rng.random(n) ** (1.0 / self.dim)
        return self.center + r[:, None] * _unit_vectors(rng, n, self.dim)

    def sample_radial(self, rng, n):
        r = self.radius * rng.random(n)
        return self.center + r[:, None] * _unit_vectors(rng, n, self.dim)

    def sample_boundary(self, rng, n):
        v = _unit_vectors(rng, n, self.dim)
        return self.center + self.radius * v, np.full(n, OUTER)

    def to_dict(self):
        return {"kind": "ball", "dim": self.dim, "radius": self.radius,
                "center": self.center.tolist()}


@dataclass
class Annulus(Domain):
    dim: int
    inner_radius: float
    outer_radius: float
    center: np.ndarray = None
    radial = True

    def __post_init__(self):
        if not 0 < self.inner_radius < self.outer_radius:
            raise ValueError("annulus needs 0 < r < R")
        self.center = _vec(self.center, self.dim)

    def _norm(self, x):
        return np.linalg.norm(np.atleast_2d(x) - self.center, axis=1)

    def contains(self, x):
        nx = self._norm(x)
        return (nx > self.inner_radius) & (nx < self.outer_radius)

    def on_boundary(self, x, tol=1e-12):
        nx = self._norm(x)
        return (np.abs(nx - self.inner_radius) <= tol) | (np.abs(nx - self.outer_radius) <= tol)

    def bounding_box(self):
        return self.center - self.outer_radius, self.center + self.outer_radius

    def sample_uniform(self, rng, n):
        # rejection from the bounding ball
        ball = Ball(self.dim, self.outer_radius, self.center)
        out = np.empty((0, self.dim))
        while out.shape[0] < n:
            cand = ball.sample_uniform(rng, 2 * (n - out.shape[0]) + 8)
            out = np.vstack([out, cand[self.contains(cand)]])
        return out[:n]

    def sample_radial(self, rng, n):
        r = rng.uniform(self.inner_radius, self.outer_radius, size=n)
        # uniform() may return the lower endpoint; nudge those draws inside
        r[r <= self.inner_radius] = np.nextafter(self.inner_radius, np.inf)
        return self.center + r[:, None] * _unit_vectors(rng, n, self.dim)

    def sample_boundary(self, rng, n):
        tags = rng.integers(0, 2, size=n)
        radii = np.where(tags == INNER, self.inner_radius, self.outer_radius)
        return self.center + radii[:, None] * _unit_vectors(rng, n, self.dim), tags

    def to_dict(self):
        return {"kind": "annulus", "dim": self.dim, "inner_radius": self.inner_radius,
                "outer_radius": self.outer_radius, "center": self.center.tolist()}


@dataclass
class ProductWithTorus(Domain):
    base: Domain
    torus_dims: int
    dim: int = field(init=False)

    def __post_init__(self):
        if isinstance(self.base, ProductWithTorus):
            raise ValueError("base of a torus product must be non-periodic")
        if self.torus_dims < 1:
            raise ValueError("torus_dims must be positive")
        self.dim = self.base.dim + self.torus_dims

    @property
    def radial(self):
        return self.base.radial

    def _split(self, x):
        x = np.atleast_2d(x)
        return x[:, : self.base.dim], x[:, self.base.dim:]

    def contains(self, x):
        xb, _ = self._split(x)
        return self.base.contains(xb)

    def on_boundary(self, x, tol=1e-12):
        xb, _ = self._split(x)
        return self.base.on_boundary(xb, tol)

    def bounding_box(self):
        lo, hi = self.base.bounding_box()
        return (np.concatenate([lo, np.zeros(self.torus_dims)]),
                np.concatenate([hi, np.full(self.torus_dims, TWO_PI)]))

    def _angles(self, rng, n):
        return rng.uniform(0.0, TWO_PI, size=(n, self.torus_dims))

    def sample_uniform(self, rng, n):
        return np.hstack([self.base.sample_uniform(rng, n), self._angles(rng, n)])

    def sample_radial(self, rng, n):
        return np.hstack([self.base.sample_radial(rng, n), self._angles(rng, n)])

    def sample_boundary(self, rng, n):
        pts, tags = self.base.sample_boundary(rng, n)
        return np.hstack([pts, self._angles(rng, n)]), tags

    def to_dict(self):
        return {"kind": "product_with_torus", "base": self.base.to_dict(),
                "torus_dims": self.torus_dims}


def _unit_vectors(rng, n, dim):
    g = rng.standard_normal((n, dim))
    nrm = np.linalg.norm(g, axis=1)
    while np.any(nrm == 0.0):
        bad = nrm == 0.0
        g[bad] = rng.standard_normal((bad.sum(), dim))
        nrm = np.linalg.norm(g, axis=1)
    return g / nrm[:, None]


def domain_from_dict(d):
    kind = d["kind"]
    if kind == "cube":
        return Cube(d["dim"], d["half_width"], d.get("center"))
    if kind == "ball":
        return Ball(d["dim"], d["radius"], d.get("center"))
    if kind == "annulus":
        return Annulus(d["dim"], d["inner_radius"], d["outer_radius"], d.get("center"))
    if kind == "product_with_torus":
        return ProductWithTorus(domain_from_dict(d["base"]), d["torus_dims"])
    raise ValueError(f"unknown domain kind {kind!r}")


# --- samplers ---------------------------------------------------------------

UNIFORM_INTERIOR = "uniform_interior"
RADIALLY_UNIFORM = "radially_uniform"
UNIFORM_BOUNDARY = "uniform_boundary"
GRID_NODES = "grid_nodes"
SAMPLER_KINDS = (UNIFORM_INTERIOR, RADIALLY_UNIFORM, UNIFORM_BOUNDARY, GRID_NODES)


@dataclass
class SamplerSpec:
    kind: str = UNIFORM_INTERIOR
    seed: int = 0
    delta: float | None = None  # GridNodes only
    shift: np.ndarray | None = None  # GridNodes only

    def __post_init__(self):
        if self.kind not in SAMPLER_KINDS:
            raise InvalidSampler(f"unknown sampler kind {self.kind!r}")
        if self.kind == GRID_NODES and (self.delta is None or self.delta <= 0):
            raise InvalidSampler("grid_nodes sampler needs a positive delta")


def make_rng(seed, worker_id=0):
    """Independent stream for ``(seed, worker_id)``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), int(worker_id)]))


def _grid_nodes(domain, spec):
    lo, hi = domain.bounding_box()
    shift = np.zeros(domain.dim) if spec.shift is None else _vec(spec.shift, domain.dim)
    axes = []
    for k in range(domain.dim):
        start = np.ceil((lo[k] - shift[k]) / spec.delta)
        stop = np.floor((hi[k] - shift[k]) / spec.delta)
        axes.append(shift[k] + spec.delta * np.arange(start, stop + 1))
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, domain.dim)
    return mesh[domain.contains(mesh)]


class Sampler:
    """A seeded stream drawing interior or boundary points from one domain."""

    def __init__(self, domain, spec, worker_id=0):
        self.domain = domain
        self.spec = spec
        self.rng = make_rng(spec.seed, worker_id)
        self.calls = 0
        if spec.kind == RADIALLY_UNIFORM and not domain.radial:
            raise InvalidSampler("radially uniform sampling needs a ball or annulus")

    def interior(self, n):
        if n < 1:
            raise ValueError("n must be >= 1")
        self.calls += 1
        kind = self.spec.kind
        if kind == RADIALLY_UNIFORM:
            return self.domain.sample_radial(self.rng, n)
        if kind == GRID_NODES:
            nodes = _grid_nodes(self.domain, self.spec)
            if n >= nodes.shape[0]:
                return nodes
            return nodes[np.sort(self.rng.choice(nodes.shape[0], n, replace=False))]
        if kind == UNIFORM_BOUNDARY:
            raise InvalidSampler("uniform_boundary spec cannot draw interior points")
        return self.domain.sample_uniform(self.rng, n)

    def boundary(self, n):
        if n < 1:
            raise ValueError("n must be >= 1")
        self.calls += 1
        return self.domain.sample_boundary(self.rng, n)


def sample_interior(domain, spec, n, worker_id=0):
    """Draw ``n`` interior points; equal seeds give equal draws."""
    return Sampler(domain, spec, worker_id).interior(n)


def sample_boundary(domain, spec, n, worker_id=0):
    """Draw ``n`` boundary points and their tags (cube face, or INNER/OUTER shell)."""
    return Sampler(domain, spec, worker_id).boundary(n)


def nearest_neighbor_delta(points):
    """Largest nearest-neighbour distance in a point cloud.

    A step size at least this large makes every stencil reach a neighbouring
    sample, which is the practical lower bound used when choosing delta.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.shape[0] < 2:
        raise TooFewPoints("need at least two points")
    dist, _ = cKDTree(pts).query(pts, k=2)
    return float(dist[:, 1].max())
