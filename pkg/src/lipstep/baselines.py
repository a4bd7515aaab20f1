"""Comparison controllers.

`fixed_timing_step` adjusts only the landing point, from the closed-form
landing equation at the nominal timing, clamped into the stepping box.

`PreviewController` is a receding-horizon pattern generator in the classic
jerk-parameterized style: decision variables are a CoM jerk sequence over a
fixed sampling grid plus the footstep positions falling inside the horizon,
with the CoP pinned to the active footstep point at every grid sample (point
feet) and footstep boxes identical to the stepping bounds. Step timing is
fixed. On point feet the sampled CoP pinning leaves the plan free to fake
intersample CoP authority the plant does not have, which destabilizes pure
velocity tracking; an exact end-of-step DCM-offset tracking term (computed
from the closed-form pendulum recursion over the planned footsteps, so the
jerk parameterization cannot cheat it) restores damping without touching
the saturation behavior that determines push recovery.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import qp
from .adapter import StepDecision, tau_from_timing
from .model import Foot, LipmParams, LipmState, StanceInfo, Vec2, dcm, vec2
from .nominal import GaitBounds, NominalGait, nominal_offset


class QpFailure(RuntimeError):
    pass


def fixed_timing_step(
    dcm_measured: Vec2,
    stance: StanceInfo,
    nominal: NominalGait,
    bounds: GaitBounds,
    params: LipmParams,
) -> StepDecision:
    """Landing-point-only adjustment at the nominal timing.

    Places the step where the predicted end-of-step DCM minus the nominal
    offset says it should land, then clamps into the stepping box. The
    reported offset is the one implied by the clamped landing.
    """
    foot = stance.foot
    remaining = max(nominal.duration - stance.elapsed, 0.0)
    growth = math.exp(params.omega * remaining)
    dcm_end = (np.asarray(dcm_measured, dtype=float) - stance.contact) * growth + stance.contact
    target = dcm_end - nominal.offset(foot)

    w_lo, w_hi = bounds.signed_width_range(foot)
    lat = bounds.lateral_landing_offset(foot)
    lo = stance.contact + vec2(bounds.length_min, w_lo + lat)
    hi = stance.contact + vec2(bounds.length_max, w_hi + lat)
    clamped = np.minimum(np.maximum(target, lo), hi)

    return StepDecision(
        target=clamped,
        duration=nominal.duration,
        tau=nominal.tau,
        offset=dcm_end - clamped,
        slack=np.zeros(4),
        status="optimal",
        viability_violated=False,
    )


@dataclass(frozen=True)
class PreviewConfig:
    """Horizon and cost weights for the preview baseline."""

    horizon_steps: int = 16
    interval: float = 0.1
    jerk_weight: float = 1e-4
    velocity_weight: float = 1.0
    footstep_weight: float = 1e-2
    offset_weight: float = 1e4
    fixed_step_duration: float = 0.5

    def __post_init__(self):
        if self.horizon_steps < 2:
            raise ValueError("horizon_steps must be >= 2")
        if not self.interval > 0.0:
            raise ValueError("interval must be positive")
        if not self.fixed_step_duration > 0.0:
            raise ValueError("fixed_step_duration must be positive")


class PreviewController:
    """Stateful preview MPC for one simulated robot.

    Solves one QP per axis (the dynamics, boxes and costs are separable)
    whenever the step clock crosses a sampling-grid instant, and once more on
    the final control cycle before a step transition so the landing always
    uses a fully informed plan. Between solves the cached decision is
    returned; with point feet the plan only acts at transitions.
    """

    def __init__(
        self,
        cfg: PreviewConfig,
        v_des,
        bounds: GaitBounds,
        params: LipmParams,
        control_period: float = 1e-3,
    ):
        self.cfg = cfg
        self.v_des = np.asarray(v_des, dtype=float)
        self.bounds = bounds
        self.params = params
        self.control_period = control_period
        self._build_prediction()
        self._pattern_cache: dict = {}
        self._warm = [(), ()]
        self._decision: StepDecision | None = None
        self.last_cop_plan: np.ndarray | None = None
        self.last_footstep_plan: np.ndarray | None = None

    def _build_prediction(self):
        n = self.cfg.horizon_steps
        dt = self.cfg.interval
        A = np.array([[1.0, dt, dt * dt / 2.0], [0.0, 1.0, dt], [0.0, 0.0, 1.0]])
        B = np.array([dt**3 / 6.0, dt * dt / 2.0, dt])
        w2 = self.params.omega**2
        C_cop = np.array([1.0, 0.0, -1.0 / w2])
        C_vel = np.array([0.0, 1.0, 0.0])
        powers = [np.eye(3)]
        for _ in range(n):
            powers.append(A @ powers[-1])
        self._Px = np.array([C_cop @ powers[k + 1] for k in range(n)])
        self._Pu = np.zeros((n, n))
        self._Vx = np.array([C_vel @ powers[k + 1] for k in range(n)])
        self._Vu = np.zeros((n, n))
        for k in range(n):
            for j in range(k + 1):
                self._Pu[k, j] = C_cop @ powers[k - j] @ B
                self._Vu[k, j] = C_vel @ powers[k - j] @ B

    def reset_step(self) -> None:
        self._decision = None

    # -- per-pattern constant structure -------------------------------------

    def _pattern(self, jidx: tuple[int, ...]):
        cached = self._pattern_cache.get(jidx)
        if cached is not None:
            return cached
        cfg = self.cfg
        n = cfg.horizon_steps
        m = max(jidx)
        nv = n + m
        E = math.exp(self.params.omega * cfg.fixed_step_duration)

        D = np.zeros((m, nv))
        for j in range(1, m + 1):
            D[j - 1, n + j - 1] = 1.0
            if j >= 2:
                D[j - 1, n + j - 2] = -1.0

        # end-of-step offset rows over footstep variables, from the exact
        # per-step DCM recursion; normalized so every step counts equally
        brows = []
        row = np.zeros(nv)
        gain = 1.0  # multiplies the exact dcm at the first landing
        gains = []
        for j in range(m):
            brow = row.copy()
            brow[n + j] -= 1.0
            scale = E ** (-j)
            brows.append(brow * scale)
            gains.append(gain * scale)
            row = row * E
            row[n + j] += 1.0 - E
            gain *= E

        H = 2.0 * cfg.jerk_weight * np.eye(nv)
        H[n:, n:] = 0.0
        H[:n, :n] += 2.0 * cfg.velocity_weight * (self._Vu.T @ self._Vu)
        H += 2.0 * cfg.footstep_weight * (D.T @ D)
        for brow in brows:
            H += 2.0 * cfg.offset_weight * np.outer(brow, brow)

        Ae = np.zeros((n, nv))
        for k in range(n):
            Ae[k, :n] = self._Pu[k]
            if jidx[k] > 0:
                Ae[k, n + jidx[k] - 1] = -1.0

        cached = {"m": m, "E": E, "D": D, "H": H, "Ae": Ae, "brows": brows, "bgains": gains}
        self._pattern_cache[jidx] = cached
        return cached

    # -- the solve -----------------------------------------------------------

    def _solve(self, state: LipmState, stance: StanceInfo) -> StepDecision:
        cfg = self.cfg
        n = cfg.horizon_steps
        params = self.params
        omega = params.omega
        T = cfg.fixed_step_duration
        elapsed = stance.elapsed
        u0 = stance.contact

        ks = elapsed + (np.arange(1, n + 1)) * cfg.interval
        jidx = tuple(int(v) for v in np.floor(ks / T + 1e-9))
        pat = self._pattern(jidx)
        m, E = pat["m"], pat["E"]
        nv = n + m

        stance_seq = [stance.foot]
        for _ in range(m):
            stance_seq.append(stance_seq[-1].other)

        L_fix = self.v_des[0] * T
        W_fix = self.v_des[1] * T
        b_nom = {
            foot: nominal_offset(L_fix, W_fix, T, foot, self.bounds.default_width, params)
            for foot in (Foot.RIGHT, Foot.LEFT)
        }
        remaining = T - elapsed
        xi = dcm(state, params)

        footsteps = np.zeros((m, 2))
        status = "optimal"
        for ax in range(2):
            x0 = np.array(
                [state.com[ax], state.com_vel[ax], omega**2 * (state.com[ax] - u0[ax])]
            )
            xi_land = (xi[ax] - u0[ax]) * math.exp(omega * remaining) + u0[ax]

            f = np.zeros(nv)
            f[:n] += 2.0 * cfg.velocity_weight * (
                self._Vu.T @ (self._Vx @ x0 - self.v_des[ax])
            )
            dref = np.zeros(m)
            for j in range(1, m + 1):
                step_disp = (
                    L_fix
                    if ax == 0
                    else W_fix + self.bounds.lateral_landing_offset(stance_seq[j - 1])
                )
                dref[j - 1] = step_disp + (u0[ax] if j == 1 else 0.0)
            f += -2.0 * cfg.footstep_weight * (pat["D"].T @ dref)
            for j, (brow, gain) in enumerate(zip(pat["brows"], pat["bgains"])):
                bn = b_nom[stance_seq[j]][ax]
                f += 2.0 * cfg.offset_weight * (gain * xi_land - (E ** (-j)) * bn) * brow

            be = np.empty(n)
            for k in range(n):
                be[k] = (u0[ax] if jidx[k] == 0 else 0.0) - self._Px[k] @ x0

            lb = np.empty(m)
            ub = np.empty(m)
            for j in range(1, m + 1):
                foot_j = stance_seq[j - 1]
                if ax == 0:
                    lo, hi = self.bounds.length_min, self.bounds.length_max
                else:
                    w_lo, w_hi = self.bounds.signed_width_range(foot_j)
                    off = self.bounds.lateral_landing_offset(foot_j)
                    lo, hi = w_lo + off, w_hi + off
                anchor = u0[ax] if j == 1 else 0.0
                lb[j - 1] = lo + anchor
                ub[j - 1] = hi + anchor

            problem = qp.QpProblem(
                H=pat["H"], f=f, A_eq=pat["Ae"], b_eq=be,
                A_in=pat["D"], lb=lb, ub=ub,
            )
            sol = qp.solve(problem, warm_start=self._warm[ax])
            if sol.status is not qp.QpStatus.OPTIMAL:
                raise QpFailure(f"preview QP axis {ax}: {sol.status.value}")
            self._warm[ax] = sol.active_set
            footsteps[:, ax] = sol.x[n:]

        cop = np.empty((n, 2))
        for k in range(n):
            cop[k] = u0 if jidx[k] == 0 else footsteps[jidx[k] - 1]
        self.last_cop_plan = cop
        self.last_footstep_plan = footsteps.copy()

        target = footsteps[0]
        xi_land_vec = (xi - u0) * math.exp(omega * remaining) + u0
        return StepDecision(
            target=target,
            duration=T,
            tau=tau_from_timing(T, params),
            offset=xi_land_vec - target,
            slack=np.zeros(4),
            status=status,
            viability_violated=False,
        )

    def decide(self, state: LipmState, stance: StanceInfo) -> StepDecision:
        grid = max(int(round(self.cfg.interval / self.control_period)), 1)
        cycle = int(round(stance.elapsed / self.control_period))
        next_elapsed = stance.elapsed + self.control_period
        must_solve = (
            self._decision is None
            or cycle % grid == 0
            or next_elapsed >= self.cfg.fixed_step_duration - 1e-9
        )
        if must_solve:
            self._decision = self._solve(state, stance)
        return self._decision


def preview_mpc_step(
    state: LipmState,
    stance: StanceInfo,
    plan_footsteps: int,
    cfg: PreviewConfig,
    v_des,
    bounds: GaitBounds,
    params: LipmParams,
) -> tuple[np.ndarray, np.ndarray]:
    """One-shot preview solve; returns (cop_plan, footstep_plan).

    The CoP plan holds one planned CoP sample per horizon interval; the
    footstep plan holds up to `plan_footsteps` planned landing positions,
    the first of which is the current swing target.
    """
    ctl = PreviewController(cfg, v_des, bounds, params)
    ctl._solve(state, stance)
    return ctl.last_cop_plan, ctl.last_footstep_plan[:plan_footsteps]
