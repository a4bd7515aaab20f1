"""Analytic bounds on the DCM offset that separate recoverable from doomed
states, plus a brute-force certifier that re-derives the frontier by
exhaustive policy search over a discretized state lattice.

The sagittal bound depends only on the longest step and the shortest step
duration. Lateral bounds are asymmetric: recovering toward the stance-foot
side costs one extra step (the swing foot cannot cross the stance foot), so
the outward bound is tighter than the inward one. Both lateral values are
stored in the frame of a step whose landing foot is the RIGHT foot;
`offset_window` is the single place that maps them to signed constraints for
either foot.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .model import Foot, LipmParams
from .nominal import GaitBounds


@dataclass(frozen=True)
class ViabilityBounds:
    sagittal_max: float
    sagittal_min: float
    lateral_out: float  # signed lower bound when the landing foot is RIGHT
    lateral_in: float   # signed upper bound when the landing foot is RIGHT

    def offset_window(self, landing: Foot) -> tuple[np.ndarray, np.ndarray]:
        """(lower, upper) componentwise window for the end-of-step DCM offset
        relative to a landing position of foot `landing`. The lateral window
        mirrors when the landing foot is the left one."""
        if Foot(landing) is Foot.RIGHT:
            y_lo, y_hi = self.lateral_out, self.lateral_in
        else:
            y_lo, y_hi = -self.lateral_in, -self.lateral_out
        return (
            np.array([self.sagittal_min, y_lo]),
            np.array([self.sagittal_max, y_hi]),
        )


def capturability_radius(length_max: float, duration_min: float, params: LipmParams) -> float:
    """Largest DCM distance from the contact point that unboundedly many
    steps can still absorb: L e^{-wT} / (1 - e^{-wT})."""
    if not duration_min > 0.0:
        raise ValueError("duration_min must be positive")
    decay = math.exp(-params.omega * duration_min)
    return length_max * decay / (1.0 - decay)


def sagittal_offset_bound(length_max: float, duration_min: float, params: LipmParams) -> float:
    """Maximum viable end-of-step DCM offset: L / (e^{wT} - 1). Algebraically
    identical to the capturability radius."""
    if not duration_min > 0.0:
        raise ValueError("duration_min must be positive")
    return length_max / (math.exp(params.omega * duration_min) - 1.0)


def lateral_offset_bounds(bounds: GaitBounds, params: LipmParams) -> tuple[float, float]:
    """Signed (outward, inward) lateral offset bounds in the right-landing
    frame, from the two-step boundary recurrence fixed points."""
    e = math.exp(params.omega * bounds.duration_min)
    lp = bounds.default_width
    w_out = bounds.width_outward_max
    w_in = bounds.width_inward_max
    out = lp / (1.0 + e) - (e * w_out + w_in) / (e * e - 1.0)
    inw = lp / (1.0 + e) + (e * w_in + w_out) / (e * e - 1.0)
    return out, inw


def compute_bounds(bounds: GaitBounds, params: LipmParams) -> ViabilityBounds:
    b_max = sagittal_offset_bound(bounds.length_max, bounds.duration_min, params)
    b_min = -sagittal_offset_bound(abs(bounds.length_min), bounds.duration_min, params)
    out, inw = lateral_offset_bounds(bounds, params)
    return ViabilityBounds(
        sagittal_max=b_max, sagittal_min=b_min, lateral_out=out, lateral_in=inw
    )


@dataclass(frozen=True)
class CertGrid:
    """Lattice and policy discretization for the certifier."""

    cell: float = 0.002
    n_lengths: int = 21
    n_widths: int = 21
    n_durations: int = 13
    n_steps: int = 40

    def __post_init__(self):
        if not self.cell > 0.0:
            raise ValueError("cell must be positive")
        if self.n_steps < 5:
            raise ValueError("need n_steps >= 5")


@dataclass
class CertificationReport:
    analytic: dict
    empirical: dict
    grid: dict
    max_gap: float

    def to_json(self, **kw) -> str:
        return json.dumps(
            {
                "analytic_bound": self.analytic,
                "empirical_frontier": self.empirical,
                "grid_spec": self.grid,
                "max_gap": self.max_gap,
            },
            **kw,
        )


def _survival_iterate(grid, alive_next_fn, n_steps):
    """Fixed-point iteration of a survival table over the offset lattice."""
    alive = np.ones(grid.size, dtype=bool)
    for _ in range(n_steps):
        new = alive_next_fn(alive)
        if np.array_equal(new, alive):
            break
        alive = new
    return alive


def _snap_lookup(grid, cell, nxt, alive):
    idx = np.rint((nxt - grid[0]) / cell).astype(np.int64)
    ok = (idx >= 0) & (idx < grid.size)
    out = np.zeros(nxt.shape, dtype=bool)
    out[ok] = alive[idx[ok]]
    return out


def certify_bounds(
    bounds: GaitBounds,
    params: LipmParams,
    grid: CertGrid | None = None,
) -> CertificationReport:
    """Classify every lattice offset as survivable or doomed by exhaustive
    search over discretized (displacement x duration) policies, then compare
    the empirical frontier against the analytic bounds.

    Survival is evaluated by value iteration: an offset survives k+1 steps if
    some single-step policy lands it on an offset that survives k steps.
    Divergence is declared beyond 10x the sagittal bound. Lattice cells are
    independent; they are evaluated vectorized and merged by reduction.
    """
    grid = grid or CertGrid()
    vb = compute_bounds(bounds, params)
    horizon = 10.0 * vb.sagittal_max
    cell = grid.cell
    offs = np.arange(-math.ceil(horizon / cell), math.ceil(horizon / cell) + 1) * cell
    durations = np.linspace(bounds.duration_min, bounds.duration_max, grid.n_durations)
    growth = np.exp(params.omega * durations)

    # sagittal: next = s * e^{wT} - du
    lengths = np.linspace(bounds.length_min, bounds.length_max, grid.n_lengths)

    def sag_next(alive):
        nxt = offs[:, None, None] * growth[None, :, None] - lengths[None, None, :]
        return _snap_lookup(offs, cell, nxt, alive).any(axis=(1, 2))

    alive_sag = _survival_iterate(offs, sag_next, grid.n_steps)

    # lateral: two alternating-stance tables
    dy = {}
    for foot in (Foot.RIGHT, Foot.LEFT):
        w_lo, w_hi = bounds.signed_width_range(foot)
        widths = np.linspace(w_lo, w_hi, grid.n_widths)
        dy[foot] = widths + bounds.lateral_landing_offset(foot)

    alive_r = np.ones(offs.size, dtype=bool)  # start of a right-stance step
    alive_l = np.ones(offs.size, dtype=bool)
    for _ in range(grid.n_steps):
        nxt_r = offs[:, None, None] * growth[None, :, None] - dy[Foot.RIGHT][None, None, :]
        new_r = _snap_lookup(offs, cell, nxt_r, alive_l).any(axis=(1, 2))
        nxt_l = offs[:, None, None] * growth[None, :, None] - dy[Foot.LEFT][None, None, :]
        new_l = _snap_lookup(offs, cell, nxt_l, alive_r).any(axis=(1, 2))
        if np.array_equal(new_r, alive_r) and np.array_equal(new_l, alive_l):
            break
        alive_r, alive_l = new_r, new_l

    def frontier(alive):
        sel = offs[alive]
        return (float(sel.min()), float(sel.max())) if sel.size else (math.nan, math.nan)

    sag_lo, sag_hi = frontier(alive_sag)
    # a right-stance step START window equals the window for offsets relative
    # to a RIGHT landing, i.e. (lateral_out, lateral_in)
    r_lo, r_hi = frontier(alive_r)
    l_lo, l_hi = frontier(alive_l)

    analytic = {
        "sagittal_max": vb.sagittal_max,
        "sagittal_min": vb.sagittal_min,
        "lateral_out": vb.lateral_out,
        "lateral_in": vb.lateral_in,
    }
    empirical = {
        "sagittal_max": sag_hi,
        "sagittal_min": sag_lo,
        "lateral_out": r_lo,
        "lateral_in": r_hi,
        "lateral_out_mirrored": -l_hi,
        "lateral_in_mirrored": -l_lo,
    }
    gaps = [
        abs(sag_hi - vb.sagittal_max),
        abs(sag_lo - vb.sagittal_min),
        abs(r_lo - vb.lateral_out),
        abs(r_hi - vb.lateral_in),
        abs(-l_hi - vb.lateral_out),
        abs(-l_lo - vb.lateral_in),
    ]
    return CertificationReport(
        analytic=analytic,
        empirical=empirical,
        grid={
            "cell": cell,
            "n_lengths": grid.n_lengths,
            "n_widths": grid.n_widths,
            "n_durations": grid.n_durations,
            "n_steps": grid.n_steps,
            "divergence_threshold": horizon,
        },
        max_gap=float(max(gaps)),
    )
