"""Feedback-control rollouts driven by a trained value network.

Partial derivatives of the network are forward differences with the step
of the last training stage. Controls use sgn(0) = 0, so an exactly flat
direction gives a coasting control.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi

REACHED = "ReachedTarget"
TIMEOUT = "Timeout"
CAPTURED = "Captured"
ESCAPED = "Escaped"


@dataclass
class CarParams:
    sigma: float = 1.0
    rho: float = 1.0

    def __post_init__(self):
        if self.sigma <= 0 or self.rho <= 0:
            raise ValueError("sigma and rho must be positive")

    @property
    def turning_radius(self):
        return self.sigma * self.rho


def wrap_angle(w):
    """Map angles into [0, 2 pi)."""
    out = np.mod(w, TWO_PI)
    return np.where(out >= TWO_PI, 0.0, out)


def forward_partials(net, s, delta):
    """Forward-difference gradient of ``net`` at states ``s`` (n, k) with step ``delta``."""
    S = np.atleast_2d(np.asarray(s, dtype=float))
    n, k = S.shape
    pts = np.repeat(S[:, None, :], k + 1, axis=1)
    pts[:, 1:, :] += delta * np.eye(k)[None]
    vals = net(pts.reshape(-1, k)).reshape(n, k + 1)
    return (vals[:, 1:] - vals[:, :1]) / delta


def car_feedback(net, delta, s):
    """``a = -sgn(u_x cos w + u_y sin w)``, ``b = -sgn(u_w)`` at pose(s) ``s = (x, y, w)``."""
    S = np.atleast_2d(np.asarray(s, dtype=float))
    g = forward_partials(net, S, delta)
    w = S[:, 2]
    a = -np.sign(g[:, 0] * np.cos(w) + g[:, 1] * np.sin(w))
    b = -np.sign(g[:, 2])
    if np.ndim(s) == 1:
        return float(a[0]), float(b[0])
    return a, b


def game_feedback(net, delta, s):
    """Controls ``(a_e, b_e, a_p, b_p)`` at game state(s) ``(X, Y, w_e, w_p)``.

    The pursuer minimizes (negative signs), the evader maximizes (positive signs).
    """
    S = np.atleast_2d(np.asarray(s, dtype=float))
    g = forward_partials(net, S, delta)
    we, wp = S[:, 2], S[:, 3]
    a_e = np.sign(g[:, 0] * np.cos(we) + g[:, 1] * np.sin(we))
    b_e = np.sign(g[:, 2])
    a_p = -np.sign(g[:, 0] * np.cos(wp) + g[:, 1] * np.sin(wp))
    b_p = -np.sign(g[:, 3])
    if np.ndim(s) == 1:
        return float(a_e[0]), float(b_e[0]), float(a_p[0]), float(b_p[0])
    return a_e, b_e, a_p, b_p


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray  # control applied from each recorded state (NaN on the last row)
    distance: np.ndarray
    outcome: str
    t_end: float
    state_names: tuple
    control_names: tuple

    def rows(self):
        return np.column_stack([self.times, self.states, self.controls, self.distance])

    @property
    def columns(self):
        return ("t",) + self.state_names + self.control_names + ("distance",)


def rollout_car(net, params, s0, dt=0.01, t_max=10.0, target_radius=0.2, delta=0.3, controller=None):
    """Explicit Euler on ``x' = sigma a cos w, y' = sigma a sin w, w' = b / rho``.

    Stops with ReachedTarget once ``sqrt(x^2 + y^2) <= target_radius``, or
    Timeout at ``t_max``. ``controller(s) -> (a, b)`` overrides the feedback.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    ctrl = controller or (lambda s: car_feedback(net, delta, s))
    s = np.array(s0, dtype=float)
    s[2] = wrap_angle(s[2])
    times, states, controls = [0.0], [s.copy()], []
    t = 0.0
    n_steps = int(np.ceil(t_max / dt - 1e-9))
    outcome = TIMEOUT
    for k in range(n_steps + 1):
        if np.hypot(s[0], s[1]) <= target_radius:
            outcome = REACHED
            break
        if k == n_steps:
            break
        a, b = ctrl(s)
        controls.append((a, b))
        s = s + dt * np.array([params.sigma * a * np.cos(s[2]), params.sigma * a * np.sin(s[2]),
                               b / params.rho])
        s[2] = wrap_angle(s[2])
        t = (k + 1) * dt
        times.append(t)
        states.append(s.copy())
    controls.append((np.nan, np.nan))
    S = np.array(states)
    return Trajectory(np.array(times), S, np.array(controls, dtype=float), np.hypot(S[:, 0], S[:, 1]),
                      outcome, times[-1], ("x", "y", "omega"), ("a", "b"))


def rollout_game(net, params_e, params_p, s0, dt=0.01, t_max=20.0, capture_radius=0.2,
                 escape_radius=4.0, delta=0.3, controller=None):
    """Euler integration of the relative game dynamics under feedback play.

    ``X' = sigma_e a_e cos w_e - sigma_p a_p cos w_p`` (Y with sin),
    ``w_e' = b_e / rho_e``, ``w_p' = b_p / rho_p``. Outcomes: Captured at
    distance <= r, Escaped at distance >= R, otherwise Timeout.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    ctrl = controller or (lambda s: game_feedback(net, delta, s))
    s = np.array(s0, dtype=float)
    s[2:] = wrap_angle(s[2:])
    times, states, controls = [0.0], [s.copy()], []
    n_steps = int(np.ceil(t_max / dt - 1e-9))
    outcome = TIMEOUT
    for k in range(n_steps + 1):
        dist = np.hypot(s[0], s[1])
        if dist <= capture_radius:
            outcome = CAPTURED
            break
        if dist >= escape_radius:
            outcome = ESCAPED
            break
        if k == n_steps:
            break
        a_e, b_e, a_p, b_p = ctrl(s)
        controls.append((a_e, b_e, a_p, b_p))
        we, wp = s[2], s[3]
        ds = np.array([params_e.sigma * a_e * np.cos(we) - params_p.sigma * a_p * np.cos(wp),
                       params_e.sigma * a_e * np.sin(we) - params_p.sigma * a_p * np.sin(wp),
                       b_e / params_e.rho, b_p / params_p.rho])
        s = s + dt * ds
        s[2:] = wrap_angle(s[2:])
        times.append((k + 1) * dt)
        states.append(s.copy())
    controls.append((np.nan,) * 4)
    S = np.array(states)
    return Trajectory(np.array(times), S, np.array(controls, dtype=float), np.hypot(S[:, 0], S[:, 1]),
                      outcome, times[-1], ("X", "Y", "omega_e", "omega_p"), ("a_e", "b_e", "a_p", "b_p"))
