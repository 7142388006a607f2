"""Grid-based oracle on the unit cube (0, 1)^d with step delta = 1/N.

Grid functions are ``(N+1,)*d`` arrays indexed by the multi-index beta;
node ``beta`` sits at ``x = beta * delta``. Interior nodes are
``{1..N-1}^d``. The discrete functional is

    F(U) = delta^d sum_{beta interior} W_beta^2,
    W_beta = H(x_beta, D U_beta) - alpha sum_i D2_i U_beta,

with the centred gradient ``(U[b+e_i] - U[b-e_i]) / (2 delta)`` and the second
difference ``(U[b+e_i] + U[b-e_i] - 2 U[b]) / (2 delta)``. The denominator
of the second difference is ``2 delta`` (not ``delta^2``): with it, W is
exactly the Lax-Friedrichs value at the node.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .errors import BlowUp, NotConverged

MAX_INTERIOR = 4096


class ShapeMismatch(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    d: int
    N: int

    def __post_init__(self):
        if self.d < 1 or self.N < 2:
            raise ValueError("need d >= 1 and N >= 2")

    @property
    def delta(self):
        return 1.0 / self.N

    @property
    def shape(self):
        return (self.N + 1,) * self.d

    @property
    def n_interior(self):
        return (self.N - 1) ** self.d

    @property
    def interior(self):
        return (slice(1, self.N),) * self.d

    def coords(self):
        """Node coordinates, shape ``shape + (d,)``."""
        axes = [np.arange(self.N + 1) * self.delta] * self.d
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def boundary_mask(self):
        mask = np.ones(self.shape, dtype=bool)
        mask[self.interior] = False
        return mask

    def check(self, U):
        U = np.asarray(U, dtype=float)
        if U.shape != self.shape:
            raise ShapeMismatch(f"grid function has shape {U.shape}, expected {self.shape}")
        return U


def _shift(i, s, N, d):
    """Slice tuple selecting interior nodes shifted by ``s`` along axis ``i``."""
    sl = [slice(1, N)] * d
    sl[i] = slice(1 + s, N + s)
    return tuple(sl)


def centred_gradient(grid, U):
    """``(n_interior_shape..., d)`` centred differences at interior nodes."""
    U = grid.check(U)
    N, d, dl = grid.N, grid.d, grid.delta
    return np.stack([(U[_shift(i, 1, N, d)] - U[_shift(i, -1, N, d)]) / (2 * dl)
                     for i in range(d)], axis=-1)


def residual_grid(h, alpha, grid, U):
    """Lax-Friedrichs residual W at interior nodes (shape ``(N-1,)*d``)."""
    U = grid.check(U)
    N, d, dl = grid.N, grid.d, grid.delta
    P = centred_gradient(grid, U)
    X = grid.coords()[grid.interior]
    inner = U[grid.interior]
    lap = sum(U[_shift(i, 1, N, d)] + U[_shift(i, -1, N, d)] - 2 * inner for i in range(d))
    Hv = h.value(X.reshape(-1, d), P.reshape(-1, d)).reshape(inner.shape)
    return Hv - alpha * lap / (2 * dl)


def _alpha(cfg):
    return cfg.alpha if hasattr(cfg, "alpha") else float(cfg)


def discrete_functional(h, cfg, grid, U):
    W = residual_grid(h, _alpha(cfg), grid, U)
    return float(grid.delta ** grid.d * np.sum(W * W))


def _padded(grid, inner):
    full = np.zeros(grid.shape + inner.shape[grid.d:])
    full[grid.interior] = inner
    return full


def grad_discrete_functional(h, cfg, grid, U):
    """Interior gradient of F from the closed form

    dF/dU_b = -delta^(d-1) ( sum_i [V_i W](b+e_i) - [V_i W](b-e_i)
                             + alpha sum_i W(b+e_i) + W(b-e_i) - 2 W(b) ),

    with ``V_i = dH/dp_i`` at the centred gradient and W, V zero off the interior.
    """
    U = grid.check(U)
    alpha = _alpha(cfg)
    N, d, dl = grid.N, grid.d, grid.delta
    W = residual_grid(h, alpha, grid, U)
    P = centred_gradient(grid, U)
    X = grid.coords()[grid.interior]
    V = h.grad_p(X.reshape(-1, d), P.reshape(-1, d)).reshape(P.shape)
    Wf = _padded(grid, W)
    VWf = _padded(grid, V * W[..., None])
    acc = np.zeros_like(W)
    for i in range(d):
        acc += VWf[_shift(i, 1, N, d) + (i,)] - VWf[_shift(i, -1, N, d) + (i,)]
        acc += alpha * (Wf[_shift(i, 1, N, d)] + Wf[_shift(i, -1, N, d)] - 2 * W)
    return -dl ** (d - 1) * acc


# --- adjoint operator -----------------------------------------------------------------

@dataclass
class AdjointSystem:
    W: np.ndarray  # interior residual, flattened
    V: np.ndarray  # (d, n_interior)
    A: np.ndarray  # A_N(V)
    laplacian: np.ndarray  # Delta_N
    alpha: float
    delta: float

    @property
    def matrix(self):
        return self.A + self.alpha * self.laplacian

    def singular_values(self):
        return np.linalg.svd(self.matrix, compute_uv=False)


def _axis_operator(mat, i, d, m):
    """Kronecker embedding of a 1-D operator on axis ``i`` of a ``m^d`` grid."""
    out = np.array([[1.0]])
    for k in range(d):
        out = np.kron(out, mat if k == i else np.eye(m))
    return out


def shift_matrices(grid):
    """``(S_plus, S_minus)`` lists: ``(S_plus[i] w)_b = w_{b+e_i}`` (zero outside)."""
    m = grid.N - 1
    J = np.eye(m, k=1)
    return ([_axis_operator(J, i, grid.d, m) for i in range(grid.d)],
            [_axis_operator(J.T, i, grid.d, m) for i in range(grid.d)])


def laplacian_matrix(grid):
    """Dirichlet ``Delta_N w = sum_i w_{b+e_i} + w_{b-e_i} - 2 w_b`` on interior nodes."""
    if grid.n_interior > MAX_INTERIOR:
        raise ValueError("grid too large for dense oracle matrices")
    Sp, Sm = shift_matrices(grid)
    n = grid.n_interior
    return sum(Sp[i] + Sm[i] for i in range(grid.d)) - 2 * grid.d * np.eye(n)


def adjoint_A(grid, V):
    """``A_N(V) w = sum_i V_i w (b+e_i) - V_i w (b-e_i)`` as a dense matrix."""
    Sp, Sm = shift_matrices(grid)
    V = np.asarray(V).reshape(grid.d, -1)
    return sum((Sp[i] - Sm[i]) * V[i][None, :] for i in range(grid.d))


def assemble_adjoint(h, cfg, grid, U):
    U = grid.check(U)
    if grid.n_interior > MAX_INTERIOR:
        raise ValueError("grid too large for dense oracle matrices")
    alpha = _alpha(cfg)
    d = grid.d
    W = residual_grid(h, alpha, grid, U).ravel()
    P = centred_gradient(grid, U).reshape(-1, d)
    X = grid.coords()[grid.interior].reshape(-1, d)
    V = h.grad_p(X, P).T.copy()
    return AdjointSystem(W, V, adjoint_A(grid, V), laplacian_matrix(grid), alpha, grid.delta)


def smallest_laplacian_eigenvalue(grid):
    """Closed form ``4 d sin^2(pi delta / 2)`` of the smallest eigenvalue of ``-Delta_N``."""
    return 4.0 * grid.d * np.sin(0.5 * np.pi * grid.delta) ** 2


def adjoint_lower_bound(alpha, grid, V):
    """``4 alpha d sin^2(pi delta/2) - 2 d max|V|``, a lower bound on sigma_min(A + alpha Delta)."""
    return 4 * alpha * grid.d * np.sin(0.5 * np.pi * grid.delta) ** 2 - 2 * grid.d * np.max(np.abs(V))


def grid_lipschitz(grid, U):
    """Largest absolute one-sided difference quotient of U along any axis."""
    U = grid.check(U)
    return max(float(np.max(np.abs(np.diff(U, axis=i)))) / grid.delta for i in range(grid.d))


# --- solvers ----------------------------------------------------------------------------

def _boundary_grid(grid, g):
    if callable(g):
        U = np.asarray(g(grid.coords()), dtype=float).reshape(grid.shape)
    elif np.isscalar(g):
        U = np.full(grid.shape, float(g))
    else:
        U = grid.check(g).copy()
    U[grid.interior] = 0.0
    return U


@dataclass
class FixedPointResult:
    U: np.ndarray
    residual: float
    iterations: int
    trace: list


def solve_fd_fixed_point(h, cfg, grid, g=0.0, pseudo_step=None, max_iters=200_000, tol=1e-10,
                         U0=None, trace_every=100):
    """Pseudo-time relaxation ``U <- U - dt * W(U)`` on interior nodes, boundary pinned to g.

    ``dt`` defaults to ``delta / (4 d alpha)``. Raises NotConverged (with the
    residual trace) if ``max |W| >= tol`` after ``max_iters`` sweeps.
    """
    alpha = _alpha(cfg)
    dt = grid.delta / (4 * grid.d * alpha) if pseudo_step is None else pseudo_step
    U = _boundary_grid(grid, g)
    if U0 is not None:
        U[grid.interior] = np.asarray(U0, dtype=float)[grid.interior]
    trace = []
    res = np.inf
    for k in range(max_iters + 1):
        W = residual_grid(h, alpha, grid, U)
        res = float(np.max(np.abs(W)))
        if k % trace_every == 0:
            trace.append(res)
        if not np.isfinite(res):
            break
        if res < tol:
            return FixedPointResult(U, res, k, trace)
        if k < max_iters:
            U[grid.interior] -= dt * W
    raise NotConverged(f"fixed-point solve stopped at residual {res:.3e} after {max_iters} iterations",
                       residual=res, trace=trace)


def minimize_grid_functional(h, cfg, grid, g=0.0, U0=None, max_iters=20_000, tol=1e-12):
    """Minimize F over interior values (boundary pinned) with L-BFGS using the exact gradient.

    Stops when ``max |grad F| < tol``. Returns ``(U, max |W|)``.
    """
    alpha = _alpha(cfg)
    U = _boundary_grid(grid, g)
    if U0 is not None:
        U[grid.interior] = np.asarray(U0, dtype=float)[grid.interior]
    inner_shape = U[grid.interior].shape

    def fun(z):
        U[grid.interior] = z.reshape(inner_shape)
        return discrete_functional(h, alpha, grid, U), grad_discrete_functional(h, alpha, grid, U).ravel()

    z = U[grid.interior].ravel().copy()
    for _ in range(20):
        sol = optimize.minimize(fun, z, jac=True, method="L-BFGS-B",
                                options={"maxiter": max_iters, "gtol": tol, "ftol": 0.0,
                                         "maxcor": 30, "maxls": 50})
        z = sol.x
        g_inf = np.max(np.abs(fun(z)[1]))
        if g_inf < tol or sol.nit == 0:
            break
    U[grid.interior] = z.reshape(inner_shape)
    return U, float(np.max(np.abs(residual_grid(h, alpha, grid, U))))


def one_d_optimality_system(alpha, U):
    """Residuals w_i and first-order optimality coefficients of the 1-D Eikonal problem.

    For ``U = (u_0..u_N)`` with delta = 1/N returns ``(w, lower, diag, upper)``
    where the optimality condition at interior node i reads
    ``lower[i] w_{i-1} + diag[i] w_i + upper[i] w_{i+1} = 0`` with
    ``lower = -(alpha - v_{i-1})``, ``diag = 2 alpha``, ``upper = -(alpha + v_{i+1})``
    and ``v_i = (u_{i+1} - u_{i-1}) / delta`` (twice the centred slope).
    """
    U = np.asarray(U, dtype=float)
    N = U.size - 1
    dl = 1.0 / N
    p = (U[2:] - U[:-2]) / (2 * dl)
    w = np.zeros(N + 1)
    w[1:N] = p ** 2 - alpha * (U[2:] + U[:-2] - 2 * U[1:N]) / (2 * dl) - 1.0
    v = np.zeros(N + 1)
    v[1:N] = 2 * p
    lower = -(alpha - v[:N - 1])
    upper = -(alpha + v[2:])
    diag = np.full(N - 1, 2 * alpha)
    return w, lower, diag, upper


# --- Riccati reference ------------------------------------------------------------------

def _riccati_rhs(E):
    return -E @ E - np.eye(E.shape[0])


def _check_blowup(A, t, margin=1e-3):
    lam = np.linalg.eigvalsh(0.5 * (A + A.T))
    if np.any(np.arctan(lam) - t <= -0.5 * np.pi + margin):
        raise BlowUp(f"Riccati solution blows up before t={t}")


def riccati_reference(A, t, step=1e-4):
    """``E(t)`` for ``E' = -E^2 - I``, ``E(0) = A`` by classical RK4 with a fixed step."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if t < 0:
        raise ValueError("t must be non-negative")
    _check_blowup(A, t)
    n = int(np.ceil(t / step - 1e-9))
    if n == 0:
        return A.copy()
    hs = t / n
    E = A.copy()
    for _ in range(n):
        k1 = _riccati_rhs(E)
        k2 = _riccati_rhs(E + 0.5 * hs * k1)
        k3 = _riccati_rhs(E + 0.5 * hs * k2)
        k4 = _riccati_rhs(E + hs * k3)
        E = E + (hs / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return E


class RiccatiSolution:
    """Tabulated ``E(t)`` on ``[0, T]`` with cubic Hermite interpolation between RK4 nodes."""

    def __init__(self, A, T, step=1e-4):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        _check_blowup(A, T)
        n = int(np.ceil(T / step - 1e-9))
        self.times = np.linspace(0.0, T, n + 1)
        hs = T / n
        E = A.copy()
        table = [E]
        for _ in range(n):
            k1 = _riccati_rhs(E)
            k2 = _riccati_rhs(E + 0.5 * hs * k1)
            k3 = _riccati_rhs(E + 0.5 * hs * k2)
            k4 = _riccati_rhs(E + hs * k3)
            E = E + (hs / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            table.append(E)
        self.E = np.array(table)
        self.dE = -np.einsum("kij,kjl->kil", self.E, self.E) - np.eye(A.shape[0])
        self.T = T
        self.h = hs

    def __call__(self, t):
        t = np.clip(np.asarray(t, dtype=float), 0.0, self.T)
        k = np.minimum((t / self.h).astype(int), len(self.times) - 2)
        s = ((t - self.times[k]) / self.h)[..., None, None]
        h00 = 2 * s ** 3 - 3 * s ** 2 + 1
        h10 = s ** 3 - 2 * s ** 2 + s
        h01 = -2 * s ** 3 + 3 * s ** 2
        h11 = s ** 3 - s ** 2
        return (h00 * self.E[k] + h10 * self.h * self.dE[k]
                + h01 * self.E[k + 1] + h11 * self.h * self.dE[k + 1])

    def value(self, x, t):
        """``u(x, t) = (<x, E(t) x> - 1) / 2`` for points ``x`` (n, d) and times ``t`` (n,)."""
        X = np.atleast_2d(x)
        E = self(np.broadcast_to(np.asarray(t, dtype=float), (X.shape[0],)))
        return 0.5 * (np.einsum("ni,nij,nj->n", X, E, X) - 1.0)


def riccati_initial_matrix(d):
    """``diag(4/25, 1, ..., 1)``."""
    A = np.eye(d)
    A[0, 0] = 4.0 / 25.0
    return A


# --- closed-form viscosity solutions ---------------------------------------------------

def cube_distance(x, half_width=3.0, center=0.0):
    return half_width - np.max(np.abs(np.atleast_2d(x) - center), axis=1)


def ball_distance(x, radius=3.0, center=0.0):
    return radius - np.linalg.norm(np.atleast_2d(x) - center, axis=1)


def annulus_distance(x, inner_radius=2.0, outer_radius=6.0, center=0.0):
    r = np.linalg.norm(np.atleast_2d(x) - center, axis=1)
    return np.minimum(r - inner_radius, outer_radius - r)


def unit_interval_distance(x):
    x = np.asarray(x, dtype=float)
    return np.minimum(x, 1.0 - x)


def ground_truth(kind, x, **params):
    """Closed-form solution by problem kind: cube, ball, annulus or riccati.

    For ``riccati`` pass ``t`` and ``solution`` (a RiccatiSolution) or ``A``.
    """
    if kind == "cube":
        return cube_distance(x, **params)
    if kind == "ball":
        return ball_distance(x, **params)
    if kind == "annulus":
        return annulus_distance(x, **params)
    if kind == "riccati":
        t = params["t"]
        sol = params.get("solution")
        if sol is None:
            A = params["A"]
            X = np.atleast_2d(x)
            return np.array([0.5 * (xi @ riccati_reference(A, float(ti)) @ xi - 1.0)
                             for xi, ti in zip(X, np.broadcast_to(t, (X.shape[0],)))])
        return sol.value(x, t)
    raise ValueError(f"unknown ground truth kind {kind!r}")
