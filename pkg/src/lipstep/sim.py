"""Deterministic closed-loop simulator.

One control cycle: read the state, let the controller decide the next step
location and timing, re-plan the swing foot, propagate the pendulum in closed
form (splitting the cycle at event boundaries so applied impulses are exact),
then transition the stance when the step clock reaches the decided duration.
Pushes enter as constant accelerations force/mass; contact displacements
shift the stance point instantaneously (a desk-scale stand-in for stance-foot
slippage).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import swing as swing_mod
from .adapter import CostWeights, QpFailure, StepAdapter, StepDecision
from .baselines import PreviewConfig, PreviewController, fixed_timing_step
from .model import Foot, LipmParams, LipmState, StanceInfo, Vec2, dcm, vec2
from .nominal import GaitBounds, NominalGait, nominal_gait
from .viability import ViabilityBounds, compute_bounds

CONTROLLERS = ("adaptive", "fixed_timing", "preview")

TRACE_COLUMNS = (
    "t",
    "com_x", "com_y",
    "com_vel_x", "com_vel_y",
    "dcm_x", "dcm_y",
    "u0_x", "u0_y",
    "foot_index",
    "step_index",
    "step_elapsed",
    "target_x", "target_y",
    "step_duration",
    "offset_x", "offset_y",
    "slack_norm",
    "swing_x", "swing_y", "swing_z",
    "status",
)


@dataclass(frozen=True)
class PushEvent:
    """External push: either an explicit planar force or a magnitude at an
    angle measured counterclockwise from the direction of motion."""

    t_start: float
    duration: float
    force: tuple[float, float] | None = None
    angle_deg: float | None = None
    magnitude: float | None = None

    def __post_init__(self):
        if not self.duration > 0.0:
            raise ValueError("push duration must be positive")
        if self.force is None and (self.angle_deg is None or self.magnitude is None):
            raise ValueError("give force or (angle_deg, magnitude)")

    def resolved_force(self, motion_dir: np.ndarray) -> np.ndarray:
        if self.force is not None:
            return np.asarray(self.force, dtype=float)
        ang = math.atan2(motion_dir[1], motion_dir[0]) + math.radians(self.angle_deg)
        return self.magnitude * np.array([math.cos(ang), math.sin(ang)])


@dataclass(frozen=True)
class ContactDisplacementEvent:
    """Instantaneous shift of the current stance point."""

    t_start: float
    offset: tuple[float, float]

    def __post_init__(self):
        if not np.all(np.isfinite(self.offset)):
            raise ValueError("offset must be finite")


@dataclass(frozen=True)
class InitialCondition:
    """Start either on the exact periodic orbit of the nominal gait or from
    explicitly given CoM position and velocity."""

    stance_foot: Foot = Foot.LEFT
    at_nominal: bool = True
    com: tuple[float, float] | None = None
    com_vel: tuple[float, float] | None = None
    contact: tuple[float, float] = (0.0, 0.0)


@dataclass
class ScenarioConfig:
    params: LipmParams = field(default_factory=LipmParams)
    bounds: GaitBounds = field(default_factory=GaitBounds)
    weights: CostWeights = field(default_factory=CostWeights)
    v_des: tuple[float, float] = (0.0, 0.0)
    controller: str = "adaptive"
    preview: PreviewConfig | None = None
    mass: float = 60.0
    control_period: float = 1e-3
    duration: float = 10.0
    events: tuple = ()
    initial: InitialCondition = field(default_factory=InitialCondition)
    swing_enabled: bool = True
    divergence_factor: float = 10.0
    recovered_radius_factor: float = 1.05
    recovered_steps: int = 3

    def __post_init__(self):
        if self.controller not in CONTROLLERS:
            raise ValueError(f"controller must be one of {CONTROLLERS}")
        if not self.control_period > 0.0:
            raise ValueError("control_period must be positive")
        if not self.duration > 0.0:
            raise ValueError("duration must be positive")
        if not self.mass > 0.0:
            raise ValueError("mass must be positive")


@dataclass
class Outcome:
    kind: str  # RECOVERED | DIVERGED | COMPLETED
    final_time: float
    diverged_at: float | None
    n_steps: int
    steps_at_duration_min: int
    recovered_at_step: int | None
    step_durations: list

    @property
    def ok(self) -> bool:
        return self.kind != "DIVERGED"


class TrajectoryRecord:
    """Per-cycle rows, one per control cycle, fixed column order."""

    columns = TRACE_COLUMNS

    def __init__(self):
        self.rows: list[tuple] = []

    def append(self, row: tuple) -> None:
        self.rows.append(row)

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([r[i] for r in self.rows])

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(",".join(self.columns) + "\n")
            for row in self.rows:
                fh.write(",".join(_fmt(v) for v in row) + "\n")

    @staticmethod
    def read_csv(path) -> "TrajectoryRecord":
        rec = TrajectoryRecord()
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            if tuple(header) != TRACE_COLUMNS:
                raise ValueError("unexpected trace header")
            for line in fh:
                parts = line.strip().split(",")
                rec.rows.append(tuple(float(p) for p in parts))
        return rec


def _fmt(v) -> str:
    return f"{v:.9g}"


def nominal_cyclic_state(
    scenario_or_nominal,
    bounds: GaitBounds | None = None,
    params: LipmParams | None = None,
    stance_foot: Foot = Foot.LEFT,
    contact=(0.0, 0.0),
) -> tuple[LipmState, np.ndarray]:
    """Exact state on the periodic orbit at the start of a step.

    Both the divergent and the convergent component are placed on their
    step-to-step fixed points, so an unperturbed rollout shows no transient.
    Returns (state, previous_foot_position).
    """
    if isinstance(scenario_or_nominal, NominalGait):
        nominal = scenario_or_nominal
    else:
        sc = scenario_or_nominal
        nominal = nominal_gait(np.asarray(sc.v_des), sc.bounds, sc.params)
        bounds, params = sc.bounds, sc.params
        stance_foot = Foot(sc.initial.stance_foot)
        contact = sc.initial.contact
    foot = Foot(stance_foot)
    omega = params.omega
    contact = np.asarray(contact, dtype=float)

    # divergent component: start-of-step offset = previous step's end offset
    s = nominal.offset(foot.other)
    # convergent component: g' = g*lam - displacement, alternating two-step map
    lam = math.exp(-omega * nominal.duration)
    d_this = nominal.landing_displacement(foot, bounds)
    d_prev = nominal.landing_displacement(foot.other, bounds)
    g = -(d_this * lam + d_prev) / (1.0 - lam * lam)

    xi = contact + s
    gamma = contact + g
    state = LipmState(com=(xi + gamma) / 2.0, com_vel=omega * (xi - gamma) / 2.0)
    prev_foot = contact - d_prev
    return state, prev_foot


class _Controllers:
    """Uniform decide() facade over the three controller kinds."""

    def __init__(self, scenario: ScenarioConfig, nominal: NominalGait, vbounds: ViabilityBounds):
        self.kind = scenario.controller
        if self.kind == "adaptive":
            self._adapter = StepAdapter(
                nominal, scenario.bounds, vbounds, scenario.weights,
                scenario.params, scenario.control_period,
            )
        elif self.kind == "preview":
            cfg = scenario.preview or PreviewConfig(fixed_step_duration=nominal.duration)
            self._preview = PreviewController(
                cfg, np.asarray(scenario.v_des, dtype=float), scenario.bounds,
                scenario.params, scenario.control_period,
            )
        self._nominal = nominal
        self._scenario = scenario

    def decide(self, state: LipmState, stance: StanceInfo, xi: Vec2) -> StepDecision:
        if self.kind == "adaptive":
            return self._adapter.adapt(xi, stance)
        if self.kind == "fixed_timing":
            return fixed_timing_step(
                xi, stance, self._nominal, self._scenario.bounds, self._scenario.params
            )
        return self._preview.decide(state, stance)

    def on_transition(self) -> None:
        if self.kind == "adaptive":
            self._adapter.reset()
        elif self.kind == "preview":
            self._preview.reset_step()


def run(
    scenario: ScenarioConfig,
    record: bool = True,
    freeze_pendulum: bool = False,
    early_stop: bool = False,
    min_post_event_steps: int = 10,
) -> tuple[TrajectoryRecord | None, Outcome]:
    """Run one closed-loop scenario.

    `freeze_pendulum` replaces the pendulum flow with pure double integration
    of the event accelerations (used to verify impulse bookkeeping).
    `early_stop` ends the run once the outcome cannot change: divergence, or
    recovery confirmed with at least `min_post_event_steps` steps taken after
    the last event.
    """
    params, bounds = scenario.params, scenario.bounds
    omega = params.omega
    dt = scenario.control_period
    nominal = nominal_gait(np.asarray(scenario.v_des), bounds, params)
    vbounds = compute_bounds(bounds, params)
    controller = _Controllers(scenario, nominal, vbounds)

    ini = scenario.initial
    foot = Foot(ini.stance_foot)
    contact = np.asarray(ini.contact, dtype=float)
    if ini.at_nominal:
        state, prev_foot = nominal_cyclic_state(
            nominal, bounds, params, foot, contact
        )
        if ini.com is not None or ini.com_vel is not None:
            raise ValueError("at_nominal excludes explicit com/com_vel")
    else:
        if ini.com is None or ini.com_vel is None:
            raise ValueError("explicit start needs com and com_vel")
        state = LipmState(com=np.asarray(ini.com, float), com_vel=np.asarray(ini.com_vel, float))
        prev_foot = contact - nominal.landing_displacement(foot.other, bounds)

    motion = np.asarray(scenario.v_des, dtype=float)
    if np.linalg.norm(motion) < 1e-12:
        motion = np.array([1.0, 0.0])
    pushes = [
        (ev.t_start, ev.t_start + ev.duration, ev.resolved_force(motion) / scenario.mass)
        for ev in scenario.events
        if isinstance(ev, PushEvent)
    ]
    displacements = sorted(
        (ev for ev in scenario.events if isinstance(ev, ContactDisplacementEvent)),
        key=lambda e: e.t_start,
    )
    last_event_end = max(
        [t1 for (t0, t1, _) in pushes] + [d.t_start for d in displacements],
        default=-math.inf,
    )

    divergence_threshold = scenario.divergence_factor * vbounds.sagittal_max
    recover_radius = scenario.recovered_radius_factor * float(
        np.linalg.norm(nominal.offset(Foot.RIGHT))
    )

    trace = TrajectoryRecord() if record else None
    plan = None
    swing_start = prev_foot.copy()
    n_cycles = int(round(scenario.duration / dt))
    j_step = 0
    step_index = 0
    step_durations: list[float] = []
    steps_at_min = 0
    in_ball = 0
    recovered_at: int | None = None
    post_event_steps = 0
    diverged_at: float | None = None
    t = 0.0
    decision: StepDecision | None = None

    for cycle in range(n_cycles):
        elapsed = j_step * dt
        xi = state.com + state.com_vel / omega
        if np.linalg.norm(xi - contact) > divergence_threshold:
            diverged_at = t
            break

        stance = StanceInfo(contact=contact, foot=foot, elapsed=elapsed)
        decision = controller.decide(state, stance, xi)

        swing_pos = np.array([swing_start[0], swing_start[1], 0.0])
        if scenario.swing_enabled:
            plan = _maintain_swing(plan, elapsed, decision, swing_start, bounds, dt)
            if plan is not None:
                swing_pos, _, _ = swing_mod.evaluate(plan, min(elapsed, plan.duration))

        if record:
            trace.append(
                (
                    t,
                    state.com[0], state.com[1],
                    state.com_vel[0], state.com_vel[1],
                    xi[0], xi[1],
                    contact[0], contact[1],
                    float(int(foot)),
                    float(step_index),
                    elapsed,
                    decision.target[0], decision.target[1],
                    decision.duration,
                    decision.offset[0], decision.offset[1],
                    float(np.linalg.norm(decision.slack)),
                    swing_pos[0], swing_pos[1], swing_pos[2],
                    1.0 if decision.status == "optimal" else 0.0,
                )
            )

        state = _propagate_cycle(state, contact, t, dt, pushes, params, freeze_pendulum)
        for ev in displacements:
            if t < ev.t_start <= t + dt:
                contact = contact + np.asarray(ev.offset, dtype=float)
        t += dt
        j_step += 1

        if j_step * dt >= decision.duration - 1e-9:
            realized = j_step * dt
            step_durations.append(realized)
            if abs(realized - bounds.duration_min) <= dt:
                steps_at_min += 1
            if scenario.swing_enabled and plan is not None:
                touchdown = swing_mod.evaluate(plan, plan.duration)[0]
                gap = np.linalg.norm(touchdown[:2] - decision.target)
                if gap > 1e-6:
                    raise AssertionError(
                        f"swing endpoint {touchdown[:2]} vs planned landing "
                        f"{decision.target} (|gap|={gap:.2e})"
                    )
            xi_end = state.com + state.com_vel / omega
            offset_meas = xi_end - decision.target
            if t > last_event_end:
                post_event_steps += 1
                err = np.linalg.norm(offset_meas - nominal.offset(foot))
                in_ball = in_ball + 1 if err <= recover_radius else 0
                if in_ball >= scenario.recovered_steps and recovered_at is None:
                    recovered_at = step_index
            swing_start = contact.copy()
            contact = decision.target.copy()
            foot = foot.other
            j_step = 0
            step_index += 1
            plan = None
            controller.on_transition()
            if (
                early_stop
                and recovered_at is not None
                and post_event_steps >= min_post_event_steps
            ):
                break

    if diverged_at is not None:
        kind = "DIVERGED"
    elif scenario.events and recovered_at is not None:
        kind = "RECOVERED"
    else:
        kind = "COMPLETED"
    outcome = Outcome(
        kind=kind,
        final_time=t,
        diverged_at=diverged_at,
        n_steps=step_index,
        steps_at_duration_min=steps_at_min,
        recovered_at_step=recovered_at,
        step_durations=step_durations,
    )
    return trace, outcome


def _maintain_swing(plan, elapsed, decision, swing_start, bounds, dt):
    """Create or re-plan the swing trajectory; skips the solve when nothing
    changed (the re-plan would reproduce the same polynomial) and freezes the
    plan inside the landing window."""
    apex, apex_max = bounds.swing_apex, bounds.swing_apex_max
    if plan is None:
        duration = max(decision.duration, elapsed + 2.0 * dt)
        return swing_mod.new_plan(swing_start, decision.target, duration, apex, apex_max)
    same_T = abs(decision.duration - plan.duration) < 1e-9
    same_target = np.linalg.norm(decision.target - plan.target()) < 1e-9
    if same_T and same_target:
        return plan
    try:
        return swing_mod.replan(
            plan, elapsed, decision.duration, decision.target, apex, apex_max,
            min_window=dt,
        )
    except swing_mod.InfeasibleWindow:
        return plan


def _propagate_cycle(state, contact, t, dt, pushes, params, freeze_pendulum):
    """Propagate one control period, splitting at push boundaries so each
    segment sees a constant acceleration."""
    cuts = {0.0, dt}
    for t0, t1, _ in pushes:
        for edge in (t0, t1):
            if t < edge < t + dt:
                cuts.add(edge - t)
    from . import _speed

    com = state.com
    vel = state.com_vel
    offsets = sorted(cuts)
    for a, b in zip(offsets[:-1], offsets[1:]):
        seg = b - a
        if seg <= 0.0:
            continue
        mid = t + 0.5 * (a + b)
        accel = np.zeros(2)
        for t0, t1, acc in pushes:
            if t0 <= mid < t1:
                accel = accel + acc
        if freeze_pendulum:
            com = com + vel * seg + 0.5 * accel * seg * seg
            vel = vel + accel * seg
        else:
            cx, cy, vx, vy = _speed.propagate_planar(
                com[0], com[1], vel[0], vel[1],
                contact[0], contact[1], accel[0], accel[1],
                params.omega, seg,
            )
            com = np.array([cx, cy])
            vel = np.array([vx, vy])
    return LipmState(com=com, com_vel=vel)


@dataclass
class EnvelopeEntry:
    theta_deg: float
    max_force: float
    impulse: float
    probes: int
    bracketed: bool
    monotone: bool


@dataclass
class EnvelopeResult:
    entries: list
    push_duration: float
    tolerance: float

    def force(self, theta: float) -> float:
        for e in self.entries:
            if abs(e.theta_deg - theta) < 1e-9:
                return e.max_force
        raise KeyError(theta)

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("theta_deg,max_force_N,impulse_Ns\n")
            for e in self.entries:
                fh.write(f"{_fmt(e.theta_deg)},{_fmt(e.max_force)},{_fmt(e.impulse)}\n")


class Unbracketed(RuntimeError):
    """The unperturbed base scenario already fails; no envelope exists."""


def _sweep_one(args) -> EnvelopeEntry:
    (scenario, theta, push_duration, push_start, tolerance, f_init, f_max,
     min_post_steps) = args
    horizon = push_start + push_duration + (min_post_steps + 6) * scenario.bounds.duration_max

    def probe(magnitude: float) -> bool:
        sc = replace(
            scenario,
            duration=horizon,
            events=(
                PushEvent(
                    t_start=push_start, duration=push_duration,
                    angle_deg=theta, magnitude=magnitude,
                ),
            ),
        )
        _, outcome = run(
            sc, record=False, early_stop=True, min_post_event_steps=min_post_steps
        )
        return outcome.kind == "RECOVERED"

    results: list[tuple[float, bool]] = []
    lo, hi = 0.0, f_init
    bracketed = True
    while probe(hi):
        results.append((hi, True))
        lo = hi
        hi *= 1.6
        if hi > f_max:
            bracketed = False
            hi = f_max
            break
    else:
        results.append((hi, False))
    if bracketed:
        while hi - lo > tolerance:
            mid = 0.5 * (lo + hi)
            ok = probe(mid)
            results.append((mid, ok))
            if ok:
                lo = mid
            else:
                hi = mid
    best_ok = max((m for m, ok in results if ok), default=0.0)
    worst_fail = min((m for m, ok in results if not ok), default=math.inf)
    return EnvelopeEntry(
        theta_deg=theta,
        max_force=lo,
        impulse=lo * push_duration,
        probes=len(results),
        bracketed=bracketed,
        monotone=best_ok <= worst_fail,
    )


def sweep_push_envelope(
    base: ScenarioConfig,
    thetas,
    push_duration: float = 0.1,
    tolerance: float = 4.0,
    push_start: float = 0.0,
    f_init: float = 100.0,
    f_max: float = 6000.0,
    min_post_steps: int = 10,
    parallel: bool = False,
) -> EnvelopeResult:
    """Per-direction maximum recoverable push by bisection.

    The push starts at `push_start` (default 0: the very start of a step of
    the configured initial stance foot, on the exact nominal orbit, so every
    controller is probed from the same state). Bisection keeps the invariant
    that the lower bracket recovered and the upper diverged; the reported
    force is the largest bracketed success.
    """
    if any(base.events):
        raise ValueError("sweep base scenario must have no events")
    check = replace(base, duration=push_start + 6.0 * base.bounds.duration_max)
    _, outcome = run(check, record=False)
    if outcome.kind == "DIVERGED":
        raise Unbracketed("base scenario diverges unperturbed")

    jobs = [
        (base, float(th), push_duration, push_start, tolerance, f_init, f_max, min_post_steps)
        for th in thetas
    ]
    if parallel and len(jobs) > 1:
        import multiprocessing as mp

        with mp.Pool(processes=min(len(jobs), mp.cpu_count())) as pool:
            entries = pool.map(_sweep_one, jobs)
    else:
        entries = [_sweep_one(j) for j in jobs]
    return EnvelopeResult(
        entries=entries, push_duration=push_duration, tolerance=tolerance
    )
