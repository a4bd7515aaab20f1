"""Stage 2: the per-control-cycle stepping QP.

Decision variables are the landing displacement relative to the current
contact, the exponentially transformed step timing tau = e^{wT} (which makes
the landing equation linear), the end-of-step DCM offset, and four slacks
that soften the viability window. Timing and location saturate jointly under
disturbances; the slacks report irrecoverable excess instead of failing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Foot, LipmParams, StanceInfo, Vec2, vec2
from .nominal import GaitBounds, NominalGait
from .viability import ViabilityBounds

SLACK_EPSILON = 1e-6


class QpFailure(RuntimeError):
    """Stepping QP did not converge; carries a diagnostic snapshot."""

    def __init__(self, message: str, snapshot: dict):
        super().__init__(message)
        self.snapshot = snapshot


@dataclass(frozen=True)
class CostWeights:
    """Relative priorities: slack >> offset >> location, timing."""

    step_location: float = 1.0
    step_timing: float = 1.0
    dcm_offset: float = 1000.0
    slack: float = 1e6

    def __post_init__(self):
        for name in ("step_location", "step_timing", "dcm_offset", "slack"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be nonnegative")


@dataclass
class StepDecision:
    target: Vec2          # absolute landing position
    duration: float       # adapted step duration from step start
    tau: float
    offset: Vec2          # planned end-of-step DCM offset
    slack: np.ndarray     # (4,) viability slacks
    status: str
    viability_violated: bool


def tau_from_timing(duration: float, params: LipmParams) -> float:
    """tau = e^{w T}; the substitution that linearizes step timing."""
    if duration < 0.0:
        raise ValueError(f"duration must be >= 0, got {duration}")
    return math.exp(params.omega * duration)


def timing_from_tau(tau: float, params: LipmParams) -> float:
    """Inverse transform T = ln(tau)/w; requires tau >= 1."""
    if tau < 1.0:
        raise ValueError(f"tau must be >= 1, got {tau}")
    return math.log(tau) / params.omega


class StepAdapter:
    """Stateful wrapper that warm-starts successive solves of one robot."""

    def __init__(
        self,
        nominal: NominalGait,
        bounds: GaitBounds,
        vbounds: ViabilityBounds,
        weights: CostWeights,
        params: LipmParams,
        control_period: float = 1e-3,
    ):
        self.nominal = nominal
        self.bounds = bounds
        self.vbounds = vbounds
        self.weights = weights
        self.params = params
        self.control_period = control_period
        self._warm: tuple = ()

    def reset(self) -> None:
        self._warm = ()

    def adapt(self, dcm_measured: Vec2, stance: StanceInfo) -> StepDecision:
        from . import _speed

        params = self.params
        bounds = self.bounds
        nominal = self.nominal
        foot = stance.foot
        t = stance.elapsed
        decay = math.exp(-params.omega * t)
        k = (np.asarray(dcm_measured, dtype=float) - stance.contact) * decay

        w_lo, w_hi = bounds.signed_width_range(foot)
        lat_off = bounds.lateral_landing_offset(foot)
        du_nom = nominal.landing_displacement(foot, bounds)
        b_nom = nominal.offset(foot)
        win_lo, win_hi = self.vbounds.offset_window(foot.other)

        tau_hi = tau_from_timing(bounds.duration_max, params)
        # the step cannot land in the past: floor the timing at one control
        # period beyond the current elapsed time
        tau_lo = max(
            tau_from_timing(bounds.duration_min, params),
            tau_from_timing(t + self.control_period, params),
        )
        tau_lo = min(tau_lo, tau_hi)

        w = self.weights
        z, status, iters, active = _speed.solve_step_qp(
            k[0], k[1],
            bounds.length_min, bounds.length_max,
            w_lo + lat_off, w_hi + lat_off,
            tau_lo, tau_hi,
            win_lo[0], win_hi[0], win_lo[1], win_hi[1],
            du_nom[0], du_nom[1], nominal.tau, b_nom[0], b_nom[1],
            w.step_location, w.step_timing, w.dcm_offset, w.slack,
            self._warm,
        )
        if status != 0:
            self._warm = ()
            raise QpFailure(
                f"stepping QP returned status {status}",
                {
                    "dcm_measured": np.asarray(dcm_measured).tolist(),
                    "contact": stance.contact.tolist(),
                    "foot": int(foot),
                    "elapsed": t,
                    "tau_window": (tau_lo, tau_hi),
                    "iterations": iters,
                },
            )
        self._warm = tuple(active)
        slack = np.array(z[5:9])
        return StepDecision(
            target=stance.contact + vec2(z[0], z[1]),
            duration=timing_from_tau(z[2], params),
            tau=z[2],
            offset=vec2(z[3], z[4]),
            slack=slack,
            status="optimal",
            viability_violated=bool(np.abs(slack).max() > SLACK_EPSILON),
        )


def adapt_step(
    dcm_measured: Vec2,
    stance: StanceInfo,
    nominal: NominalGait,
    bounds: GaitBounds,
    vbounds: ViabilityBounds,
    weights: CostWeights,
    params: LipmParams,
    control_period: float = 1e-3,
) -> StepDecision:
    """One-shot form of StepAdapter.adapt (no warm start carried over)."""
    adapter = StepAdapter(nominal, bounds, vbounds, weights, params, control_period)
    return adapter.adapt(dcm_measured, stance)
