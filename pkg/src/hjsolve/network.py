"""Network function classes Phi(x; theta) with exact parameter gradients.

Two families share one interface:

* ``MlpArchitecture``: fully connected ReLU network with scalar output;
* ``PeriodicArchitecture``: sum of base MLPs over the spatial coordinates
  multiplied by ``cos(n w)`` / ``sin(m w)`` of selected angle coordinates,
  which makes the output 2*pi-periodic in those angles.

Parameters live in one flat float64 vector. For an MLP the order is
``W0, b0, W1, b1, ..., W_l, b_l`` with ``W_i`` of shape ``(fan_out, fan_in)``
in row-major order. A periodic net concatenates one MLP block per term, in
group order, cosine terms ``n = 0..n_max`` first, then sine terms
``m = 1..n_max``.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .errors import DimensionMismatch, InvalidThetaFile


def _as_points(x, dim):
    X = np.asarray(x, dtype=float)
    if X.ndim == 1:
        X = X[None, :] if dim > 1 or X.size == 1 else X[:, None]
    if X.ndim != 2 or X.shape[1] != dim:
        raise DimensionMismatch(f"expected points with {dim} components, got shape {np.shape(x)}")
    return np.ascontiguousarray(X)


@dataclass(frozen=True)
class MlpArchitecture:
    input_dim: int
    hidden: tuple = (20,)

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.input_dim < 1 or len(self.hidden) < 1 or min(self.hidden) < 1:
            raise ValueError("need input_dim >= 1, at least one hidden layer, widths >= 1")

    @property
    def sizes(self):
        return (self.input_dim,) + self.hidden + (1,)

    @property
    def layout(self):
        """List of ``(offset, shape)`` for ``W0, b0, W1, b1, ...``."""
        out, off = [], 0
        s = self.sizes
        for fan_in, fan_out in zip(s[:-1], s[1:]):
            out.append((off, (fan_out, fan_in)))
            off += fan_in * fan_out
            out.append((off, (fan_out,)))
            off += fan_out
        return out

    @property
    def n_params(self):
        s = self.sizes
        return sum(a * b + b for a, b in zip(s[:-1], s[1:]))

    def unflatten(self, theta):
        """Views ``(weights, biases)`` into ``theta`` (no copies)."""
        theta = np.asarray(theta)
        if theta.shape != (self.n_params,):
            raise DimensionMismatch(f"theta has shape {theta.shape}, expected ({self.n_params},)")
        views = [theta[off:off + int(np.prod(shape))].reshape(shape) for off, shape in self.layout]
        return views[0::2], views[1::2]

    def flatten(self, weights, biases):
        parts = []
        for W, b in zip(weights, biases):
            parts.append(np.asarray(W, dtype=float).ravel())
            parts.append(np.asarray(b, dtype=float).ravel())
        theta = np.concatenate(parts)
        if theta.size != self.n_params:
            raise DimensionMismatch("parameter blocks do not match the architecture")
        return theta

    def init(self, seed):
        rng = np.random.default_rng(seed)
        return self._init(rng)

    def _init(self, rng):
        theta = np.zeros(self.n_params)
        W, _ = self.unflatten(theta)
        for w in W:
            bound = np.sqrt(6.0 / w.shape[1])
            w[...] = rng.uniform(-bound, bound, size=w.shape)
        return theta

    def forward(self, theta, x):
        X = _as_points(x, self.input_dim)
        W, b = self.unflatten(theta)
        out, _ = _backend.mlp_forward(X, W, b)
        return out

    def forward_cached(self, theta, x):
        X = _as_points(x, self.input_dim)
        W, b = self.unflatten(theta)
        out, acts = _backend.mlp_forward(X, W, b)
        return out, acts

    def backward(self, theta, cache, upstream, grad=None):
        """Add ``sum_j upstream[j] * grad_theta Phi(x_j)`` into ``grad`` (allocated if None)."""
        if grad is None:
            grad = np.zeros(self.n_params)
        W, _ = self.unflatten(theta)
        gW, gb = self.unflatten(grad)
        up = np.ascontiguousarray(upstream, dtype=float)
        _backend.mlp_backward(W, cache, up, gW, gb)
        return grad

    def lipschitz_bound(self, theta):
        """Product of layer spectral norms, an upper bound on Lip(Phi)."""
        W, _ = self.unflatten(theta)
        return float(np.prod([spectral_norm(w) for w in W]))

    def to_dict(self):
        return {"type": "mlp", "input_dim": self.input_dim, "hidden": list(self.hidden)}


@dataclass(frozen=True)
class PeriodicArchitecture:
    spatial_dim: int
    groups: tuple = ((2, 10),)  # (angle coordinate index, n_max)
    hidden: tuple = (60, 60, 60)
    base: MlpArchitecture = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        groups = tuple((int(i), int(n)) for i, n in self.groups)
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        object.__setattr__(self, "base", MlpArchitecture(self.spatial_dim, self.hidden))
        idx = [i for i, _ in groups]
        if len(set(idx)) != len(idx) or any(not 0 <= i < self.input_dim for i in idx):
            raise ValueError("angle indices must be distinct coordinates of the input")
        if any(n < 0 for _, n in groups):
            raise ValueError("n_max must be >= 0")

    @property
    def input_dim(self):
        return self.spatial_dim + len(self.groups)

    @property
    def spatial_index(self):
        angles = {i for i, _ in self.groups}
        return [k for k in range(self.input_dim) if k not in angles]

    @property
    def terms(self):
        """One ``(angle_index, frequency, is_cos)`` per parameter block."""
        out = []
        for i, n_max in self.groups:
            out += [(i, n, True) for n in range(n_max + 1)]
            out += [(i, m, False) for m in range(1, n_max + 1)]
        return out

    @property
    def n_params(self):
        return len(self.terms) * self.base.n_params

    def blocks(self, theta):
        theta = np.asarray(theta)
        if theta.shape != (self.n_params,):
            raise DimensionMismatch(f"theta has shape {theta.shape}, expected ({self.n_params},)")
        P = self.base.n_params
        return [theta[k * P:(k + 1) * P] for k in range(len(self.terms))]

    def init(self, seed):
        rng = np.random.default_rng(seed)
        return np.concatenate([self.base._init(rng) for _ in self.terms])

    def _trig(self, X):
        cols = []
        for i, n, is_cos in self.terms:
            w = n * X[:, i]
            cols.append(np.cos(w) if is_cos else np.sin(w))
        return np.stack(cols, axis=1)

    def forward_cached(self, theta, x):
        X = _as_points(x, self.input_dim)
        # stencil points often share spatial coordinates; evaluate blocks once per location
        spatial, inverse = np.unique(X[:, self.spatial_index], axis=0, return_inverse=True)
        inverse = inverse.ravel()
        spatial = np.ascontiguousarray(spatial)
        trig = self._trig(X)
        out = np.zeros(X.shape[0])
        block_caches = []
        for k, blk in enumerate(self.blocks(theta)):
            W, b = self.base.unflatten(blk)
            phi, acts = _backend.mlp_forward(spatial, W, b)
            out += phi[inverse] * trig[:, k]
            block_caches.append(acts)
        return out, (inverse, trig, spatial.shape[0], block_caches)

    def forward(self, theta, x):
        return self.forward_cached(theta, x)[0]

    def backward(self, theta, cache, upstream, grad=None):
        if grad is None:
            grad = np.zeros(self.n_params)
        inverse, trig, n_unique, block_caches = cache
        up = np.asarray(upstream, dtype=float)
        gblocks = self.blocks(grad)
        for k, blk in enumerate(self.blocks(theta)):
            u = np.bincount(inverse, weights=up * trig[:, k], minlength=n_unique)
            W, _ = self.base.unflatten(blk)
            gW, gb = self.base.unflatten(gblocks[k])
            _backend.mlp_backward(W, block_caches[k], u, gW, gb)
        return grad

    def lipschitz_bound(self, theta):
        """Sum of block spectral-norm products.

        This bounds the Lipschitz constant in the spatial coordinates only;
        the angular derivative also involves the block magnitudes.
        """
        return float(sum(self.base.lipschitz_bound(blk) for blk in self.blocks(theta)))

    def to_dict(self):
        return {"type": "periodic", "spatial_dim": self.spatial_dim,
                "groups": [list(g) for g in self.groups], "hidden": list(self.hidden)}


def spectral_norm(W):
    """Largest singular value (exact SVD; the matrices involved are small)."""
    return float(np.linalg.norm(W, 2)) if W.size else 0.0


def architecture_from_dict(d):
    kind = d.get("type")
    if kind == "mlp":
        return MlpArchitecture(int(d["input_dim"]), tuple(d["hidden"]))
    if kind == "periodic":
        return PeriodicArchitecture(int(d["spatial_dim"]), tuple(tuple(g) for g in d["groups"]),
                                    tuple(d["hidden"]))
    raise ValueError(f"unknown architecture type {kind!r}")


# module-level functional API -------------------------------------------------

def init(arch, seed):
    return arch.init(seed)


def forward(theta, arch, x):
    return arch.forward(theta, x)


def grad_params(theta, arch, x, upstream):
    """``sum_j upstream[j] * grad_theta Phi(x_j; theta)``."""
    _, cache = arch.forward_cached(theta, x)
    return arch.backward(theta, cache, np.asarray(upstream, dtype=float).ravel())


class NetworkFunction:
    """An architecture bound to a parameter vector, usable as a field evaluator."""

    def __init__(self, arch, theta=None, seed=0):
        self.arch = arch
        self.theta = arch.init(seed) if theta is None else np.array(theta, dtype=float)
        if self.theta.shape != (arch.n_params,):
            raise DimensionMismatch("theta does not match the architecture")

    @property
    def dim(self):
        return self.arch.input_dim

    def __call__(self, x):
        return self.arch.forward(self.theta, x)

    def forward_cached(self, x):
        return self.arch.forward_cached(self.theta, x)

    def backward(self, cache, upstream):
        return self.arch.backward(self.theta, cache, upstream)

    def lipschitz_bound(self):
        return self.arch.lipschitz_bound(self.theta)

    def save(self, path, meta=None):
        save_theta(path, self.arch, self.theta, meta)

    @classmethod
    def load(cls, path):
        arch, theta = load_theta(path)
        return cls(arch, theta)


# binary parameter files ------------------------------------------------------

MAGIC = b"HJNN"
FORMAT_VERSION = 1


def save_theta(path, arch, theta, meta=None):
    """Write ``MAGIC | u32 version | u32 len | JSON arch | float64 LE params``.

    ``meta`` (JSON-serializable, e.g. config and seed) is stored under the
    descriptor's "meta" key and ignored when loading.
    """
    theta = np.asarray(theta, dtype="<f8")
    if theta.shape != (arch.n_params,):
        raise DimensionMismatch("theta does not match the architecture")
    desc = arch.to_dict()
    if meta is not None:
        desc["meta"] = meta
    desc = json.dumps(desc, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(desc)))
        fh.write(desc)
        fh.write(theta.tobytes())


def _read_descriptor(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12 or data[:4] != MAGIC:
        raise InvalidThetaFile(f"{path}: not a parameter file (bad magic)")
    version, n = struct.unpack("<II", data[4:12])
    if version != FORMAT_VERSION:
        raise InvalidThetaFile(f"{path}: unsupported version {version}")
    try:
        desc = json.loads(data[12:12 + n].decode("utf-8"))
    except ValueError as exc:
        raise InvalidThetaFile(f"{path}: bad architecture descriptor ({exc})") from exc
    return desc, data[12 + n:]


def read_theta_meta(path):
    """The metadata stored with a parameter file ({} if none)."""
    return _read_descriptor(path)[0].get("meta", {})


def load_theta(path):
    desc, body = _read_descriptor(path)
    try:
        arch = architecture_from_dict(desc)
    except (ValueError, KeyError, TypeError) as exc:
        raise InvalidThetaFile(f"{path}: bad architecture descriptor ({exc})") from exc
    if len(body) != 8 * arch.n_params:
        raise InvalidThetaFile(f"{path}: expected {arch.n_params} parameters")
    return arch, np.frombuffer(body, dtype="<f8").astype(float)
