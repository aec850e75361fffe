"""Explicit time integration of the conformal flow d_t u = e^{-2u} lap(u).

Stepping in u avoids differentiating ln v where v is tiny (the far field
of cigar-like data).  The right-hand side equals -R/2, so this is the
curvature flow d_t g = -R g written in the log conformal factor.

Stability: the scheme is an explicit diffusion update with pointwise
diffusivity e^{-2u}, so steps obey dt <= h^2 / (4 max e^{-2u}); `step`
rejects larger steps unless explicitly told not to (the blow-up control
path).  The driver recomputes the bound every step because the
diffusivity grows wherever u decreases.

A heat companion w obeying d_t w = e^{-2u} lap(w) can ride along, stepped
with the same scheme, stages, and dt as the flow.  Under the stability
bound each stage update at a node is a convex combination of the previous
stage's values, so sup |w| cannot increase beyond roundoff; the sup-norm
checks rely on this.

Blow-up policy: a non-finite update aborts with FlowBlowupError rather
than clamping, since a clamped field would silently corrupt every
estimate downstream.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass

import numpy as np

from .analysis import DiagnosticSeries, record
from .conformal import ConformalMetric
from .grid import BCKind, BoundaryCondition, ScalarField, laplacian_array


class Scheme(enum.Enum):
    EXPLICIT_EULER = "euler"
    HEUN = "heun"


class FlowBlowupError(RuntimeError):
    """Non-finite update: instability or genuine blow-up. Carries the last
    finite state for post-mortem dumps."""

    def __init__(self, message: str, last_state: "FlowState"):
        super().__init__(message)
        self.last_state = last_state


class GuardExceededError(RuntimeError):
    """Step-count or wall-clock guard tripped before t_end."""


@dataclass(frozen=True)
class FlowState:
    metric: ConformalMetric
    bc: BoundaryCondition
    step_count: int = 0

    @property
    def t(self) -> float:
        return self.metric.t

    @property
    def u(self) -> ScalarField:
        return self.metric.u


def initial_state(u0: ScalarField, bc: BoundaryCondition,
                  t: float = 0.0) -> FlowState:
    return FlowState(metric=ConformalMetric(u=u0, t=t), bc=bc)


@dataclass(frozen=True)
class StepperConfig:
    t_end: float
    scheme: Scheme = Scheme.HEUN
    cfl_safety: float = 0.9
    snapshot_times: tuple[float, ...] = ()
    cadence: float = 0.05
    max_steps: int = 5_000_000
    max_wall_s: float | None = None

    def __post_init__(self):
        if not 0.0 < self.cfl_safety <= 1.0:
            raise ValueError(f"cfl_safety must be in (0, 1], got {self.cfl_safety}")
        if not (np.isfinite(self.t_end) and self.t_end >= 0.0):
            raise ValueError(f"t_end must be >= 0, got {self.t_end}")
        if not self.cadence > 0.0:
            raise ValueError(f"cadence must be > 0, got {self.cadence}")
        if any(s < 0.0 or s > self.t_end for s in self.snapshot_times):
            raise ValueError("snapshot times must lie in [0, t_end]")
        object.__setattr__(self, "snapshot_times",
                           tuple(sorted(set(float(s) for s in self.snapshot_times))))


def stable_dt(state: FlowState, cfl_safety: float) -> float:
    """dt = cfl_safety * h^2 / (4 max e^{-2u}), the explicit-scheme bound."""
    h = state.u.spec.h
    max_diffusivity = float(np.exp(-2.0 * state.u.data.min()))
    return cfl_safety * h * h / (4.0 * max_diffusivity)


def _rhs(u: np.ndarray, h: float, kind: BCKind) -> np.ndarray:
    return np.exp(-2.0 * u) * laplacian_array(u, h, kind)


def _advance(u: np.ndarray, w: np.ndarray | None, dt: float, h: float,
             kind: BCKind, scheme: Scheme):
    """One explicit step of the flow (and optional companion) on raw arrays."""
    with np.errstate(over="ignore", invalid="ignore"):
        k1 = _rhs(u, h, kind)
        if scheme is Scheme.EXPLICIT_EULER:
            u1 = u + dt * k1
            w1 = None
            if w is not None:
                w1 = w + dt * np.exp(-2.0 * u) * laplacian_array(w, h, kind)
            return u1, w1
        # Heun: average the slope at u and at the Euler predictor
        u_pred = u + dt * k1
        k2 = _rhs(u_pred, h, kind)
        u1 = u + 0.5 * dt * (k1 + k2)
        w1 = None
        if w is not None:
            k1w = np.exp(-2.0 * u) * laplacian_array(w, h, kind)
            w_pred = w + dt * k1w
            k2w = np.exp(-2.0 * u_pred) * laplacian_array(w_pred, h, kind)
            w1 = w + 0.5 * dt * (k1w + k2w)
        return u1, w1


def step(state: FlowState, dt: float, scheme: Scheme = Scheme.HEUN,
         enforce_stability: bool = True) -> FlowState:
    """Advance the flow by dt; rejects dt above the stability bound."""
    if not dt > 0.0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if enforce_stability and dt > stable_dt(state, 1.0) * (1.0 + 1e-12):
        raise ValueError(
            f"dt = {dt:g} exceeds the stability bound "
            f"{stable_dt(state, 1.0):g}; pass enforce_stability=False only "
            "for deliberate blow-up experiments")
    spec = state.u.spec
    u1, _ = _advance(state.u.data, None, dt, spec.h, state.bc.kind,
                     scheme)
    if not np.all(np.isfinite(u1)):
        raise FlowBlowupError(
            f"non-finite update at t = {state.t:g}, step {state.step_count}: "
            "instability or blow-up; aborting rather than clamping", state)
    return FlowState(metric=ConformalMetric(ScalarField(spec, u1),
                                            state.t + dt),
                     bc=state.bc, step_count=state.step_count + 1)


def heat_companion_step(w: ScalarField, state: FlowState, dt: float,
                        scheme: Scheme = Scheme.HEUN) -> ScalarField:
    """Advance w by d_t w = e^{-2u} lap(w), same staging and dt as the flow."""
    if w.spec != state.u.spec:
        raise ValueError("companion and flow live on different grids")
    if not dt > 0.0:
        raise ValueError(f"dt must be > 0, got {dt}")
    _, w1 = _advance(state.u.data, w.data, dt, w.spec.h, state.bc.kind,
                     scheme)
    if not np.all(np.isfinite(w1)):
        raise FlowBlowupError(
            f"non-finite companion update at t = {state.t:g}", state)
    return ScalarField(w.spec, w1)


def refresh_dirichlet_ring(state: FlowState, u_ref: ScalarField) -> FlowState:
    """Replace the boundary ring of u with values from u_ref and refreeze.

    Supports tracking a non-static exact solution with time-dependent
    Dirichlet data; a plain frozen run never needs this.
    """
    if state.bc.kind is not BCKind.DIRICHLET_FROZEN:
        raise ValueError("ring refresh only applies to frozen boundaries")
    if u_ref.spec != state.u.spec:
        raise ValueError("reference field lives on a different grid")
    data = state.u.data.copy()
    data[0, :] = u_ref.data[0, :]
    data[-1, :] = u_ref.data[-1, :]
    data[:, 0] = u_ref.data[:, 0]
    data[:, -1] = u_ref.data[:, -1]
    u_new = ScalarField(state.u.spec, data)
    return FlowState(metric=ConformalMetric(u_new, state.t),
                     bc=BoundaryCondition.dirichlet_frozen(u_new),
                     step_count=state.step_count)


def exact_ring_refresher(sol, spec):
    """step_transform imposing a closed-form solution on the boundary ring.

    Returns a callable that overwrites the four edges of u with the exact
    values at the state's current time and refreezes the boundary, so the
    flow tracks a non-static solution (Dirichlet data moving in time).
    """
    from .exact import eval_u
    xs = spec.x0 + spec.h * np.arange(spec.nx)
    ys = spec.y0 + spec.h * np.arange(spec.ny)
    y_bot, y_top = spec.y(0), spec.y(spec.ny - 1)
    x_left, x_right = spec.x(0), spec.x(spec.nx - 1)

    def refresh(state: FlowState) -> FlowState:
        t = state.t
        data = state.u.data.copy()
        data[0, :] = eval_u(sol, xs, np.full_like(xs, y_bot), t)
        data[-1, :] = eval_u(sol, xs, np.full_like(xs, y_top), t)
        data[:, 0] = eval_u(sol, np.full_like(ys, x_left), ys, t)
        data[:, -1] = eval_u(sol, np.full_like(ys, x_right), ys, t)
        u_new = ScalarField(spec, data)
        return FlowState(metric=ConformalMetric(u_new, t),
                         bc=BoundaryCondition.dirichlet_frozen(u_new),
                         step_count=state.step_count)

    return refresh



@dataclass(frozen=True)
class EvolveResult:
    state: FlowState
    series: DiagnosticSeries
    snapshots: tuple[tuple[float, ScalarField], ...]
    companion: ScalarField | None
    max_abs_u: float
    steps: int
    wall_s: float
    termination: str = "completed"


def _event_times(config: StepperConfig) -> list[float]:
    times = set()
    n = int(np.floor(config.t_end / config.cadence + 1e-9))
    for k in range(1, n + 1):
        times.add(round(k * config.cadence, 12))
    times.update(round(float(s), 12) for s in config.snapshot_times if s > 0.0)
    if config.t_end > 0.0:
        times.add(round(config.t_end, 12))
    return sorted(t for t in times if 0.0 < t <= config.t_end)


def evolve(state: FlowState, config: StepperConfig, hooks=(),
           companion: ScalarField | None = None, record_margin: int = 4,
           lam: float = 4.0, step_transform=None) -> EvolveResult:
    """Run to t_end with adaptive dt, recording diagnostics at the cadence.

    dt is recomputed each step from the current diffusivity and clipped so
    that every cadence tick, snapshot time, and t_end is hit exactly.
    Hooks are called with the state at each cadence tick.  step_transform,
    when given, maps the state to a replacement after every step (used to
    impose time-dependent Dirichlet data).  Raises GuardExceededError if
    max_steps or max_wall_s trips first.
    """
    t_start = time.monotonic()
    w = companion
    rows = [record(state, record_margin, lam=lam, companion=w)]
    snapshots = []
    if any(abs(s) <= 1e-12 for s in config.snapshot_times):
        snapshots.append((0.0, state.u))
    max_u = float(state.u.data.max())
    min_u = float(state.u.data.min())

    events = _event_times(config)
    for t_event in events:
        while state.t < t_event - 1e-12:
            if state.step_count >= config.max_steps:
                raise GuardExceededError(
                    f"step guard: {config.max_steps} steps before "
                    f"t = {t_event:g}")
            if (config.max_wall_s is not None
                    and time.monotonic() - t_start > config.max_wall_s):
                raise GuardExceededError(
                    f"wall-clock guard: {config.max_wall_s:g} s at "
                    f"t = {state.t:g}")
            dt = min(stable_dt(state, config.cfl_safety), t_event - state.t)
            spec = state.u.spec
            u1, w1 = _advance(state.u.data,
                              None if w is None else w.data,
                              dt, spec.h, state.bc.kind, config.scheme)
            if not np.all(np.isfinite(u1)) or (
                    w1 is not None and not np.all(np.isfinite(w1))):
                raise FlowBlowupError(
                    f"non-finite update at t = {state.t:g}, step "
                    f"{state.step_count}: instability or blow-up", state)
            state = FlowState(metric=ConformalMetric(ScalarField(spec, u1),
                                                     state.t + dt),
                              bc=state.bc,
                              step_count=state.step_count + 1)
            if w1 is not None:
                w = ScalarField(spec, w1)
            if step_transform is not None:
                state = step_transform(state)
            max_u = max(max_u, float(state.u.data.max()))
            min_u = min(min_u, float(state.u.data.min()))
        # land on the event exactly to keep snapshot names and rows clean
        state = FlowState(metric=ConformalMetric(state.u, t_event),
                          bc=state.bc, step_count=state.step_count)
        try:
            rows.append(record(state, record_margin, lam=lam, companion=w))
        except ValueError as exc:
            raise FlowBlowupError(
                f"diagnostics overflowed at t = {t_event:g}: {exc}",
                state) from exc
        if any(abs(s - t_event) <= 1e-12 for s in config.snapshot_times):
            snapshots.append((t_event, state.u))
        for hook in hooks:
            hook(state)

    series = DiagnosticSeries(np.vstack(rows))
    return EvolveResult(state=state, series=series,
                        snapshots=tuple(snapshots), companion=w,
                        max_abs_u=max(abs(max_u), abs(min_u)),
                        steps=state.step_count,
                        wall_s=time.monotonic() - t_start)
