"""Stage 3: continuously re-planned swing-foot trajectories.

Horizontal motion uses quintic polynomials solved in closed form from six
boundary conditions. The vertical profile is a single ninth-order polynomial
for the whole step whose apex is pushed toward the desired clearance by a
QP, with position, velocity and acceleration pinned at the step start, at
the current time (continuity across re-plans), and at landing, plus sampled
bounds 0 <= z <= z_max. One polynomial for the whole step avoids the splice
jump a two-segment spline suffers when the step timing moves across the
apex.

Polynomials are stored over normalized time s = t/T for conditioning;
derivatives are rescaled on evaluation. All three axes of a plan share one
duration, so a re-plan that changes the duration re-fits every axis from a
single continuity pin taken on the previous plan.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import qp
from .model import Vec2

N_INEQ_SAMPLES = 50


class InfeasibleWindow(ValueError):
    """Too little time remains in the step to re-plan; keep the old plan."""


class QpFailure(RuntimeError):
    pass


def _powers(s: float, order: int) -> np.ndarray:
    return s ** np.arange(order + 1)


def _dpowers(s: float, order: int) -> np.ndarray:
    k = np.arange(order + 1)
    out = np.zeros(order + 1)
    out[1:] = k[1:] * s ** (k[1:] - 1)
    return out


def _ddpowers(s: float, order: int) -> np.ndarray:
    k = np.arange(order + 1)
    out = np.zeros(order + 1)
    out[2:] = k[2:] * (k[2:] - 1) * s ** (k[2:] - 2)
    return out


@dataclass
class SwingPlan:
    coeff_z: np.ndarray    # 10 coefficients, normalized domain
    coeff_x: np.ndarray    # 6 coefficients
    coeff_y: np.ndarray
    duration: float
    pin_time: float        # step time of the last continuity pin
    pin_state: np.ndarray  # (3,3): rows pos/vel/acc, columns x,y,z

    def target(self) -> np.ndarray:
        """Horizontal landing point the plan currently aims for."""
        return np.array([self.coeff_x.sum(), self.coeff_y.sum()])


def _eval_axis(coeff: np.ndarray, duration: float, t: float):
    order = coeff.shape[0] - 1
    s = t / duration
    pos = float(coeff @ _powers(s, order))
    vel = float(coeff @ _dpowers(s, order)) / duration
    acc = float(coeff @ _ddpowers(s, order)) / duration**2
    return pos, vel, acc


def evaluate(plan: SwingPlan, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Position, velocity, acceleration of the swing foot at step time t."""
    if t < -1e-9 or t > plan.duration + 1e-9:
        raise ValueError(f"t={t} outside [0, {plan.duration}]")
    t = min(max(t, 0.0), plan.duration)
    px, vx, ax = _eval_axis(plan.coeff_x, plan.duration, t)
    py, vy, ay = _eval_axis(plan.coeff_y, plan.duration, t)
    pz, vz, az = _eval_axis(plan.coeff_z, plan.duration, t)
    return (
        np.array([px, py, pz]),
        np.array([vx, vy, vz]),
        np.array([ax, ay, az]),
    )


def _quintic(s0, p0, v0, a0, p1, duration) -> np.ndarray:
    """Quintic through (p0, v0, a0) at normalized time s0 and (p1, 0, 0) at 1.
    Velocity and acceleration are time-domain values."""
    rows = np.vstack(
        [
            _powers(s0, 5),
            _dpowers(s0, 5),
            _ddpowers(s0, 5),
            _powers(1.0, 5),
            _dpowers(1.0, 5),
            _ddpowers(1.0, 5),
        ]
    )
    rhs = np.array([p0, v0 * duration, a0 * duration**2, p1, 0.0, 0.0])
    return np.linalg.solve(rows, rhs)


def _vertical_qp(pin_s, pin_z, pin_vz, pin_az, duration, apex, apex_max) -> np.ndarray:
    """Ninth-order vertical polynomial: apex cost at mid-step, nine equality
    pins (start / pin time / landing), sampled clearance bounds. At pin_s=0
    the pin rows duplicate the start rows; the QP solver drops them."""
    mid = _powers(0.5, 9)
    H = 2.0 * np.outer(mid, mid)
    f = -2.0 * apex * mid
    A_eq = np.vstack(
        [
            _powers(0.0, 9),
            _dpowers(0.0, 9),
            _ddpowers(0.0, 9),
            _powers(pin_s, 9),
            _dpowers(pin_s, 9),
            _ddpowers(pin_s, 9),
            _powers(1.0, 9),
            _dpowers(1.0, 9),
            _ddpowers(1.0, 9),
        ]
    )
    b_eq = np.array(
        [0.0, 0.0, 0.0, pin_z, pin_vz * duration, pin_az * duration**2, 0.0, 0.0, 0.0]
    )
    samples = np.linspace(0.0, 1.0, N_INEQ_SAMPLES)
    A_in = samples[:, None] ** np.arange(10)[None, :]
    lb = np.zeros(N_INEQ_SAMPLES)
    ub = np.full(N_INEQ_SAMPLES, apex_max)
    problem = qp.QpProblem(H=H, f=f, A_eq=A_eq, b_eq=b_eq, A_in=A_in, lb=lb, ub=ub)
    sol = qp.solve(problem)
    if sol.status is not qp.QpStatus.OPTIMAL:
        raise QpFailure(f"vertical swing QP: {sol.status.value}")
    return sol.x


def _build(pin_t, pin, duration, target, apex, apex_max) -> SwingPlan:
    s0 = pin_t / duration
    coeff_z = _vertical_qp(s0, pin[0, 2], pin[1, 2], pin[2, 2], duration, apex, apex_max)
    coeff_x = _quintic(s0, pin[0, 0], pin[1, 0], pin[2, 0], float(target[0]), duration)
    coeff_y = _quintic(s0, pin[0, 1], pin[1, 1], pin[2, 1], float(target[1]), duration)
    return SwingPlan(
        coeff_z=coeff_z,
        coeff_x=coeff_x,
        coeff_y=coeff_y,
        duration=duration,
        pin_time=pin_t,
        pin_state=pin,
    )


def new_plan(start: Vec2, target: Vec2, duration: float, apex: float, apex_max: float) -> SwingPlan:
    """Fresh plan at step start: foot at rest on the ground at `start`."""
    if not duration > 0.0:
        raise ValueError("duration must be positive")
    pin = np.zeros((3, 3))
    pin[0, :2] = np.asarray(start, dtype=float)[:2]
    return _build(0.0, pin, duration, target, apex, apex_max)


def _pin_from(prev: SwingPlan, t_now: float) -> np.ndarray:
    t_eval = min(max(t_now, 0.0), prev.duration)
    pos, vel, acc = evaluate(prev, t_eval)
    return np.vstack([pos, vel, acc])


def _check_window(t_now: float, new_duration: float, min_window: float) -> None:
    if t_now < 0.0:
        raise ValueError(f"t_now must be >= 0, got {t_now}")
    if t_now >= new_duration - min_window:
        raise InfeasibleWindow(
            f"t_now={t_now:.4f} within {min_window} of duration {new_duration:.4f}"
        )


def replan(
    prev: SwingPlan,
    t_now: float,
    new_duration: float,
    target: Vec2,
    apex: float,
    apex_max: float,
    min_window: float = 1e-3,
) -> SwingPlan:
    """Re-fit all axes for a new duration and target, continuous in position,
    velocity and acceleration at the current time."""
    _check_window(t_now, new_duration, min_window)
    pin = _pin_from(prev, t_now)
    return _build(t_now, pin, new_duration, target, apex, apex_max)


def replan_vertical(
    prev: SwingPlan,
    t_now: float,
    new_duration: float,
    apex: float,
    apex_max: float,
    min_window: float = 1e-3,
) -> SwingPlan:
    """Re-plan for a new duration keeping the current horizontal target."""
    return replan(prev, t_now, new_duration, prev.target(), apex, apex_max, min_window)


def replan_horizontal(
    prev: SwingPlan,
    t_now: float,
    new_duration: float,
    target: Vec2,
    min_window: float = 1e-3,
) -> SwingPlan:
    """Re-fit the horizontal quintics to a moved target.

    The duration must match the previous plan's (re-plan the vertical axis
    for timing changes; `replan` does both from one continuity pin).
    """
    _check_window(t_now, new_duration, min_window)
    if abs(new_duration - prev.duration) > 1e-12:
        return replan(
            prev, t_now, new_duration, target,
            apex=_implied_apex(prev), apex_max=np.inf, min_window=min_window,
        )
    pin = _pin_from(prev, t_now)
    s0 = t_now / new_duration
    coeff_x = _quintic(s0, pin[0, 0], pin[1, 0], pin[2, 0], float(target[0]), new_duration)
    coeff_y = _quintic(s0, pin[0, 1], pin[1, 1], pin[2, 1], float(target[1]), new_duration)
    return SwingPlan(
        coeff_z=prev.coeff_z,
        coeff_x=coeff_x,
        coeff_y=coeff_y,
        duration=new_duration,
        pin_time=t_now,
        pin_state=pin,
    )


def _implied_apex(plan: SwingPlan) -> float:
    return float(plan.coeff_z @ _powers(0.5, 9))
