"""Hamiltonians H(x, p), their p-gradients and the monotonicity bound C_H(L).

All evaluations are batched: ``x`` and ``p`` are ``(n, d)`` arrays (a single
point may be passed as a 1-D array) and results have leading length ``n``.
Absolute-value terms use the convention sgn(0) = 0 in their derivatives.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import DimensionMismatch, NonPositiveL


def _pair(x, p, dim):
    X = np.atleast_2d(np.asarray(x, dtype=float))
    P = np.atleast_2d(np.asarray(p, dtype=float))
    if X.shape[0] == 1 and P.shape[0] > 1:
        X = np.broadcast_to(X, (P.shape[0], X.shape[1]))
    if P.shape[0] == 1 and X.shape[0] > 1:
        P = np.broadcast_to(P, (X.shape[0], P.shape[1]))
    if X.shape[0] != P.shape[0]:
        raise DimensionMismatch("x and p batches differ in length")
    if dim is not None and (P.shape[1] != dim or X.shape[1] != dim):
        raise DimensionMismatch(f"expected dimension {dim}, got x {X.shape[1]} and p {P.shape[1]}")
    if dim is None and X.shape[1] != P.shape[1]:
        raise DimensionMismatch("x and p have different dimensions")
    return X, P


class Hamiltonian:
    kind = ""
    dim = None  # fixed problem dimension, or None for any

    def value(self, x, p):
        X, P = _pair(x, p, self.dim)
        return self._value(X, P)

    def grad_p(self, x, p):
        X, P = _pair(x, p, self.dim)
        return self._grad(X, P)

    def kink_distance(self, x, p):
        """Distance of the |.| arguments from zero (inf if H is smooth in p)."""
        X, P = _pair(x, p, self.dim)
        return np.full(X.shape[0], np.inf)

    def ch_bound(self, L):
        raise NotImplementedError

    def to_dict(self):
        return {"kind": self.kind, **asdict(self)}


def _check_L(L):
    if not L > 0:
        raise NonPositiveL("L must be positive")


@dataclass
class EikonalSquared(Hamiltonian):
    """H = |p|^2 - 1."""

    kind = "eikonal_squared"

    def _value(self, X, P):
        return np.einsum("ij,ij->i", P, P) - 1.0

    def _grad(self, X, P):
        return 2.0 * P

    def ch_bound(self, L):
        _check_L(L)
        return 2.0 * L


@dataclass
class EikonalNorm(Hamiltonian):
    """H = |p| - 1."""

    kind = "eikonal_norm"

    def _value(self, X, P):
        return np.linalg.norm(P, axis=1) - 1.0

    def _grad(self, X, P):
        nrm = np.linalg.norm(P, axis=1, keepdims=True)
        return np.divide(P, nrm, out=np.zeros_like(P), where=nrm > 0)

    def kink_distance(self, x, p):
        X, P = _pair(x, p, self.dim)
        return np.linalg.norm(P, axis=1)

    def ch_bound(self, L):
        _check_L(L)
        return 1.0


@dataclass
class Quadratic(Hamiltonian):
    """H = |p|^2/2 + |x|^2/2 (the Riccati test problem)."""

    kind = "quadratic"

    def _value(self, X, P):
        return 0.5 * np.einsum("ij,ij->i", P, P) + 0.5 * np.einsum("ij,ij->i", X, X)

    def _grad(self, X, P):
        return P.copy()

    def ch_bound(self, L):
        _check_L(L)
        return float(L)


@dataclass
class ReedsShepp(Hamiltonian):
    """H = sigma |p_x cos w + p_y sin w| + |p_w| / rho - 1 on states (x, y, w)."""

    sigma: float = 1.0
    rho: float = 1.0
    kind = "reeds_shepp"
    dim = 3

    def __post_init__(self):
        if self.sigma <= 0 or self.rho <= 0:
            raise ValueError("sigma and rho must be positive")

    def _s(self, X, P):
        return P[:, 0] * np.cos(X[:, 2]) + P[:, 1] * np.sin(X[:, 2])

    def _value(self, X, P):
        return self.sigma * np.abs(self._s(X, P)) + np.abs(P[:, 2]) / self.rho - 1.0

    def _grad(self, X, P):
        sg = np.sign(self._s(X, P))
        w = X[:, 2]
        return np.stack([self.sigma * sg * np.cos(w), self.sigma * sg * np.sin(w),
                         np.sign(P[:, 2]) / self.rho], axis=1)

    def kink_distance(self, x, p):
        X, P = _pair(x, p, self.dim)
        return np.minimum(np.abs(self._s(X, P)), np.abs(P[:, 2]))

    def ch_bound(self, L):
        _check_L(L)
        return float(np.hypot(self.sigma, 1.0 / self.rho))


@dataclass
class PursuitEvasion(Hamiltonian):
    """Isaacs Hamiltonian of the two-car game on states (X, Y, w_e, w_p).

    H = sigma_p |p_X cos w_p + p_Y sin w_p| + |p_wp| / rho_p
        - sigma_e |p_X cos w_e + p_Y sin w_e| - |p_we| / rho_e
    """

    sigma_e: float = 0.8
    rho_e: float = 1.0
    sigma_p: float = 1.0
    rho_p: float = 1.0
    kind = "pursuit_evasion"
    dim = 4

    def __post_init__(self):
        if min(self.sigma_e, self.rho_e, self.sigma_p, self.rho_p) <= 0:
            raise ValueError("speeds and turn parameters must be positive")

    @staticmethod
    def _proj(P, w):
        return P[:, 0] * np.cos(w) + P[:, 1] * np.sin(w)

    def _value(self, X, P):
        se = self._proj(P, X[:, 2])
        sp = self._proj(P, X[:, 3])
        return (self.sigma_p * np.abs(sp) + np.abs(P[:, 3]) / self.rho_p
                - self.sigma_e * np.abs(se) - np.abs(P[:, 2]) / self.rho_e)

    def _grad(self, X, P):
        we, wp = X[:, 2], X[:, 3]
        ge = self.sigma_e * np.sign(self._proj(P, we))
        gp = self.sigma_p * np.sign(self._proj(P, wp))
        return np.stack([gp * np.cos(wp) - ge * np.cos(we),
                         gp * np.sin(wp) - ge * np.sin(we),
                         -np.sign(P[:, 2]) / self.rho_e,
                         np.sign(P[:, 3]) / self.rho_p], axis=1)

    def kink_distance(self, x, p):
        X, P = _pair(x, p, self.dim)
        return np.min(np.abs(np.stack([self._proj(P, X[:, 2]), self._proj(P, X[:, 3]),
                                       P[:, 2], P[:, 3]])), axis=0)

    def ch_bound(self, L):
        _check_L(L)
        return float(np.sqrt((self.sigma_e + self.sigma_p) ** 2
                             + 1.0 / self.rho_e ** 2 + 1.0 / self.rho_p ** 2))


KINDS = {cls.kind: cls for cls in (EikonalSquared, EikonalNorm, Quadratic, ReedsShepp, PursuitEvasion)}


def hamiltonian_from_dict(d):
    params = dict(d)
    kind = params.pop("kind")
    if kind not in KINDS:
        raise ValueError(f"unknown hamiltonian kind {kind!r}")
    return KINDS[kind](**params)


def hamiltonian_value(h, x, p):
    return h.value(x, p)


def grad_p(h, x, p):
    return h.grad_p(x, p)


def ch_bound(h, L):
    return h.ch_bound(L)
