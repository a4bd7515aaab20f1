"""Pure NumPy implementations of the per-cycle hot kernels.

These mirror the compiled extension exactly; the stepping QP is routed
through the generic dense solver so the two backends can be checked against
each other.
"""

from __future__ import annotations

import math

import numpy as np

_INF = math.inf


def propagate_planar(cx, cy, vx, vy, ux, uy, ax, ay, omega, dt):
    """Closed-form pendulum step about a fixed contact with constant accel.

    The external acceleration shifts the equilibrium to u - a/omega^2.
    Returns (cx, cy, vx, vy) after dt.
    """
    w2 = omega * omega
    px = ux - ax / w2
    py = uy - ay / w2
    ch = math.cosh(omega * dt)
    sh = math.sinh(omega * dt)
    ncx = (cx - px) * ch + vx * sh / omega + px
    ncy = (cy - py) * ch + vy * sh / omega + py
    nvx = omega * (cx - px) * sh + vx * ch
    nvy = omega * (cy - py) * sh + vy * ch
    return ncx, ncy, nvx, nvy


def solve_step_qp(
    kx, ky,
    du_lo_x, du_hi_x, du_lo_y, du_hi_y,
    tau_lo, tau_hi,
    b_lo_x, b_hi_x, b_lo_y, b_hi_y,
    nom_du_x, nom_du_y, nom_tau, nom_b_x, nom_b_y,
    w_loc, w_time, w_off, w_slack,
    warm=(),
):
    """Nine-variable stepping QP: z = [du_x, du_y, tau, b_x, b_y, s1..s4].

    Minimizes weighted squared deviation from the nominal targets subject to
    box bounds on the displacement and tau, the per-axis landing equalities
    du + b = k*tau, and slack-softened offset windows.

    Returns (z, status, iterations, active) with status 0=optimal,
    1=infeasible, 2=iteration limit.
    """
    from lipstep import qp

    weights = np.array(
        [w_loc, w_loc, w_time, w_off, w_off, w_slack, w_slack, w_slack, w_slack]
    )
    targets = np.array(
        [nom_du_x, nom_du_y, nom_tau, nom_b_x, nom_b_y, 0.0, 0.0, 0.0, 0.0]
    )
    H = np.diag(2.0 * weights)
    f = -2.0 * weights * targets

    A_eq = np.zeros((2, 9))
    A_eq[0, 0] = 1.0
    A_eq[0, 2] = -kx
    A_eq[0, 3] = 1.0
    A_eq[1, 1] = 1.0
    A_eq[1, 2] = -ky
    A_eq[1, 4] = 1.0
    b_eq = np.zeros(2)

    A_in = np.zeros((7, 9))
    lb = np.empty(7)
    ub = np.empty(7)
    A_in[0, 0] = 1.0
    lb[0], ub[0] = du_lo_x, du_hi_x
    A_in[1, 1] = 1.0
    lb[1], ub[1] = du_lo_y, du_hi_y
    A_in[2, 2] = 1.0
    lb[2], ub[2] = tau_lo, tau_hi
    A_in[3, 3], A_in[3, 5] = 1.0, -1.0
    lb[3], ub[3] = b_lo_x, _INF
    A_in[4, 3], A_in[4, 6] = 1.0, -1.0
    lb[4], ub[4] = -_INF, b_hi_x
    A_in[5, 4], A_in[5, 7] = 1.0, -1.0
    lb[5], ub[5] = b_lo_y, _INF
    A_in[6, 4], A_in[6, 8] = 1.0, -1.0
    lb[6], ub[6] = -_INF, b_hi_y

    problem = qp.QpProblem(H=H, f=f, A_eq=A_eq, b_eq=b_eq, A_in=A_in, lb=lb, ub=ub)
    sol = qp.solve(problem, warm_start=warm)
    status = {
        qp.QpStatus.OPTIMAL: 0,
        qp.QpStatus.INFEASIBLE: 1,
        qp.QpStatus.MAX_ITER: 2,
    }[sol.status]
    z = tuple(sol.x) if sol.x is not None else (0.0,) * 9
    return z, status, sol.iterations, sol.active_set
