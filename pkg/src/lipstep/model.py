"""Point-mass pendulum walking model: planar CoM state, divergent component
of motion (DCM), and exact closed-form propagation."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

Vec2 = np.ndarray  # shape (2,): x sagittal, y lateral (positive left)


class Foot(enum.IntEnum):
    RIGHT = 1
    LEFT = 2

    @property
    def other(self) -> "Foot":
        return Foot.LEFT if self is Foot.RIGHT else Foot.RIGHT

    @property
    def sign(self) -> float:
        """(-1)**index: -1 for right stance, +1 for left stance."""
        return -1.0 if self is Foot.RIGHT else 1.0


def vec2(x: float, y: float) -> Vec2:
    return np.array([float(x), float(y)])


def _check_finite(name: str, v) -> None:
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be finite, got {v!r}")


@dataclass(frozen=True)
class LipmParams:
    """Pendulum constants. The natural frequency is always recomputed from
    the CoM height and gravity, never stored."""

    com_height: float = 0.8
    gravity: float = 9.81

    def __post_init__(self):
        if not (self.com_height > 0.0 and math.isfinite(self.com_height)):
            raise ValueError(f"com_height must be positive, got {self.com_height}")
        if not (self.gravity > 0.0 and math.isfinite(self.gravity)):
            raise ValueError(f"gravity must be positive, got {self.gravity}")

    @property
    def omega(self) -> float:
        """Natural frequency sqrt(g / z0) in 1/s."""
        return math.sqrt(self.gravity / self.com_height)


@dataclass
class LipmState:
    """Planar CoM position and velocity. The DCM is derived, not stored."""

    com: Vec2
    com_vel: Vec2

    def __post_init__(self):
        self.com = np.asarray(self.com, dtype=float)
        self.com_vel = np.asarray(self.com_vel, dtype=float)
        _check_finite("com", self.com)
        _check_finite("com_vel", self.com_vel)


@dataclass
class StanceInfo:
    """Current contact point, which foot it belongs to, and time into the step."""

    contact: Vec2
    foot: Foot = Foot.LEFT
    elapsed: float = 0.0

    def __post_init__(self):
        self.contact = np.asarray(self.contact, dtype=float)
        self.foot = Foot(self.foot)
        if self.elapsed < 0.0:
            raise ValueError(f"elapsed must be >= 0, got {self.elapsed}")


def dcm(state: LipmState, params: LipmParams) -> Vec2:
    """Divergent component of motion: com + com_vel / omega."""
    return state.com + state.com_vel / params.omega


def propagate(
    state: LipmState,
    contact: Vec2,
    dt: float,
    params: LipmParams,
    accel: Vec2 | None = None,
) -> LipmState:
    """Advance the pendulum by dt under a fixed contact point.

    `accel` is an additional constant external acceleration (e.g. a push
    force divided by the robot mass) held over the interval; it shifts the
    equilibrium point, so the solution stays closed form.
    """
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    contact = np.asarray(contact, dtype=float)
    _check_finite("contact", contact)
    ax, ay = (0.0, 0.0) if accel is None else (float(accel[0]), float(accel[1]))
    if not (math.isfinite(ax) and math.isfinite(ay)):
        raise ValueError("accel must be finite")
    from . import _speed

    cx, cy, vx, vy = _speed.propagate_planar(
        state.com[0], state.com[1], state.com_vel[0], state.com_vel[1],
        contact[0], contact[1], ax, ay, params.omega, dt,
    )
    return LipmState(com=vec2(cx, cy), com_vel=vec2(vx, vy))


def dcm_at_step_end(
    dcm_now: Vec2, contact: Vec2, remaining: float, params: LipmParams
) -> Vec2:
    """DCM after `remaining` seconds of unforced motion about `contact`."""
    if remaining < 0.0:
        raise ValueError(f"remaining must be >= 0, got {remaining}")
    contact = np.asarray(contact, dtype=float)
    growth = math.exp(params.omega * remaining)
    return (np.asarray(dcm_now, dtype=float) - contact) * growth + contact


def dcm_offset(dcm_end: Vec2, landing: Vec2) -> Vec2:
    """End-of-step DCM measured relative to the landing position."""
    return np.asarray(dcm_end, dtype=float) - np.asarray(landing, dtype=float)
