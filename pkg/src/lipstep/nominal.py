"""Stage 1: map a commanded average velocity onto nominal step length, width,
duration, and the DCM offsets that make that gait a step-to-step fixed point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Foot, LipmParams, Vec2, vec2


class InfeasibleVelocity(ValueError):
    """The commanded velocity cannot be realized inside the gait bounds."""


@dataclass(frozen=True)
class GaitBounds:
    """Kinematic stepping limits.

    Lengths are sagittal landing displacements relative to the stance foot.
    Widths are deviations from the default lateral spacing; "outward" is the
    self-collision side of the stance foot, "inward" the free side, so the
    signed width range depends on which foot is stance.
    """

    length_min: float = -0.5
    length_max: float = 0.5
    width_outward_max: float = 0.1
    width_inward_max: float = 0.2
    duration_min: float = 0.2
    duration_max: float = 0.8
    default_width: float = 0.1
    swing_apex: float = 0.05
    swing_apex_max: float = 0.10

    def __post_init__(self):
        if not self.length_min < self.length_max:
            raise ValueError("length_min must be < length_max")
        if not (0.0 < self.duration_min < self.duration_max):
            raise ValueError("need 0 < duration_min < duration_max")
        if not self.default_width > 0.0:
            raise ValueError("default_width must be positive")
        if self.width_outward_max < 0.0 or self.width_inward_max < 0.0:
            raise ValueError("width limits must be nonnegative")
        if not (0.0 < self.swing_apex <= self.swing_apex_max):
            raise ValueError("need 0 < swing_apex <= swing_apex_max")

    def signed_width_range(self, stance: Foot) -> tuple[float, float]:
        """Width-deviation interval for a step taken from `stance`.

        Positive width drifts left. With the right foot as stance the
        collision side is the right (negative), so the negative extent is the
        outward limit; mirrored for the left foot.
        """
        if stance is Foot.RIGHT:
            return (-self.width_outward_max, self.width_inward_max)
        return (-self.width_inward_max, self.width_outward_max)

    def lateral_landing_offset(self, stance: Foot) -> float:
        """Default lateral landing displacement: the swing foot lands one
        default width to the free side of the stance foot."""
        return -stance.sign * self.default_width


@dataclass(frozen=True)
class NominalGait:
    """Velocity-consistent gait targets and their fixed-point DCM offsets."""

    length: float
    width: float
    duration: float
    tau: float  # exp(omega * duration)
    offset_x: float
    offset_y_right: float  # end-of-step lateral offset, right foot stance
    offset_y_left: float

    def offset(self, stance: Foot) -> Vec2:
        """End-of-step DCM offset (relative to the landing foot) when `stance`
        is the support foot during the step."""
        y = self.offset_y_right if stance is Foot.RIGHT else self.offset_y_left
        return vec2(self.offset_x, y)

    def landing_displacement(self, stance: Foot, bounds: GaitBounds) -> Vec2:
        return vec2(self.length, self.width + bounds.lateral_landing_offset(stance))


def nominal_offset(
    length: float,
    width: float,
    duration: float,
    stance: Foot,
    default_width: float,
    params: LipmParams,
) -> Vec2:
    """Fixed-point end-of-step DCM offset for a periodic gait.

    Sagittal: L / (e^{wT} - 1). Lateral: the alternating default spacing
    contributes a sign that flips with the stance foot, the commanded width
    a stance-independent term.
    """
    if not duration > 0.0:
        raise ValueError(f"duration must be positive, got {duration}")
    tau = math.exp(params.omega * duration)
    off_x = length / (tau - 1.0)
    off_y = Foot(stance).sign * default_width / (1.0 + tau) + width / (tau - 1.0)
    return vec2(off_x, off_y)


def _interval_for_axis(v: float, lo: float, hi: float) -> tuple[float, float]:
    """Feasible duration interval implied by displacement bounds [lo, hi]
    at constant velocity v (v != 0)."""
    a, b = lo / v, hi / v
    if a > b:
        a, b = b, a
    return a, b


def nominal_gait(v_des, bounds: GaitBounds, params: LipmParams) -> NominalGait:
    """Pick the nominal duration centered in the feasible interval, then the
    length and width that realize the commanded velocity at that duration.

    The duration interval intersects the timing limits with per-axis limits
    |L| and |W| divided by the velocity components; zero components impose no
    ratio. The lateral ratio uses the outward limit since the nominal width
    is walked with both feet alternately and the outward side binds first.
    """
    v = np.asarray(v_des, dtype=float)
    lo, hi = bounds.duration_min, bounds.duration_max
    if v[0] != 0.0:
        a, b = _interval_for_axis(v[0], bounds.length_min, bounds.length_max)
        lo, hi = max(lo, a), min(hi, b)
    if v[1] != 0.0:
        w_sym = min(bounds.width_outward_max, bounds.width_inward_max)
        a, b = _interval_for_axis(v[1], -w_sym, w_sym)
        lo, hi = max(lo, a), min(hi, b)
    if lo > hi:
        raise InfeasibleVelocity(
            f"velocity {v.tolist()} unreachable: duration interval "
            f"[{lo:.4f}, {hi:.4f}] is empty"
        )
    duration = 0.5 * (lo + hi)
    length = v[0] * duration
    width = v[1] * duration
    tau = math.exp(params.omega * duration)
    off_r = nominal_offset(length, width, duration, Foot.RIGHT, bounds.default_width, params)
    off_l = nominal_offset(length, width, duration, Foot.LEFT, bounds.default_width, params)
    return NominalGait(
        length=length,
        width=width,
        duration=duration,
        tau=tau,
        offset_x=off_r[0],
        offset_y_right=off_r[1],
        offset_y_left=off_l[1],
    )
