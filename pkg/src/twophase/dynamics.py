"""Semi-discrete flow equations, explicit time integration, and the run loop.

The evolved system on the periodic box is

    m_t = -div(m u)
    n_t = -div(n u)
    u_t = [mu*Lap(u) + (mu+lam)*grad(div u) - grad P(m, n)] / m - (u . grad) u

which is the velocity form of the momentum balance, valid while m > 0. The
mass equations are kept in conservative (divergence) form so the discrete box
integrals of m and n are preserved to rounding. The velocity form keeps the
material derivative directly available to the diagnostics; exact conservation
of box momentum is given up and its drift is reported in the run summary
instead.

Positivity of m and n is a hard requirement: a violation raises rather than
clips, since clipped states would silently break every identity this package
exists to check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .eos import EosParams, ViscosityParams, pressure, pressure_grad
from .errors import DomainError, NonFiniteError, PositivityLoss
from .fields import (
    DiscretizationScheme,
    FlowState,
    Grid,
    ScalarField,
    VectorField,
    div,
    filter_dealias,
    grad,
    integrate,
    vector_gradient,
    _deriv_axis,
    _laplacian_raw,
)

INTEGRATOR_METHODS = ("rk4", "ssprk3")
IC_RECIPES = ("equilibrium", "gaussian_bump", "fourier_mode", "constant_ratio_bump")


@dataclass(frozen=True)
class RhsOutput:
    dm_dt: ScalarField
    dn_dt: ScalarField
    du_dt: VectorField


@dataclass(frozen=True)
class IntegratorSettings:
    method: str = "rk4"
    cfl: float = 0.4
    dt_max: float = math.inf
    t_end: float = 1.0
    positivity_floor: float = 1e-8

    def __post_init__(self):
        if self.method not in INTEGRATOR_METHODS:
            raise DomainError(f"unknown integrator method {self.method!r}")
        if not (0.0 < self.cfl <= 1.0):
            raise DomainError(f"cfl = {self.cfl} must be in (0, 1]")
        if not self.dt_max > 0:
            raise DomainError("dt_max must be positive")
        if self.t_end < 0:
            raise DomainError("t_end must be nonnegative")
        if not self.positivity_floor > 0:
            raise DomainError("positivity_floor must be positive")


@dataclass(frozen=True)
class InitialCondition:
    """Built-in initial data recipes.

    equilibrium: the constant far-field state with u = 0.
    gaussian_bump: far field plus per-field Gaussian bumps (amplitude_*,
        width, center); the bump must sit well inside the box for the
        periodic proxy of free space to be faithful.
    fourier_mode: single cosine perturbation of m and n and sine velocity on
        component 0, mode periods per box along axis 0.
    constant_ratio_bump: Gaussian bump in m with n = (n_tilde/m_tilde) * m
        pointwise, the constant-ratio configuration of the global theory.
    """

    recipe: str
    amplitude_m: float = 0.0
    amplitude_n: float = 0.0
    amplitude_u: float = 0.0
    width: float = 0.0
    center: float | None = None
    mode: int = 1

    def __post_init__(self):
        if self.recipe not in IC_RECIPES:
            raise DomainError(f"unknown IC recipe {self.recipe!r}")
        if self.recipe in ("gaussian_bump", "constant_ratio_bump") and not self.width > 0:
            raise DomainError(f"{self.recipe} requires a positive width")
        if self.recipe == "fourier_mode" and self.mode < 1:
            raise DomainError("fourier_mode requires mode >= 1")


def _check_positive(state: FlowState, floor: float):
    for name, field in (("m", state.m), ("n", state.n)):
        vals = field.values
        lo = vals.min()
        if not lo > floor:
            idx = int(np.argmin(vals))
            raise PositivityLoss(name, idx, float(lo), state.t)


def pressure_field(state: FlowState, params: EosParams) -> ScalarField:
    """Pointwise mixture pressure on the grid.

    Deliberately unfiltered: the 2/3 rule applies to the quadratic transport
    products, while P enters the momentum balance and every analysis identity
    as the same pointwise field, so filtering it would break the exact
    cancellation m*u_dot = mu*Lap(u) + (mu+lam)*grad(div u) - grad P."""
    p = pressure(state.m.values, state.n.values, params)
    if not np.all(np.isfinite(p)):
        raise NonFiniteError("pressure evaluation", state.t)
    return ScalarField(state.grid, p)


def advection_term(u: VectorField, scheme: DiscretizationScheme) -> VectorField:
    """(u . grad) u, dealiased as a quadratic product when configured."""
    g = u.grid
    jac = vector_gradient(u, scheme)
    out = np.zeros_like(u.values)
    for c in range(g.dim):
        for a in range(g.dim):
            out[c] += u.values[a] * jac[c, a]
    return filter_dealias(VectorField(g, out), scheme)


def rhs(
    state: FlowState,
    params: EosParams,
    visc: ViscosityParams,
    scheme: DiscretizationScheme,
    forcing=None,
    positivity_floor: float = 1e-8,
) -> RhsOutput:
    """Semi-discrete time derivative of (m, n, u).

    `forcing`, when given, is called as forcing(grid, t) and must return raw
    arrays (f_m, f_n, f_u) added to the three equations last (manufactured
    solution sources enter here).
    """
    _check_positive(state, positivity_floor)
    g = state.grid
    m, n = state.m.values, state.n.values
    u = state.u

    dm = -div(filter_dealias(VectorField(g, m * u.values), scheme), scheme).values
    dn = -div(filter_dealias(VectorField(g, n * u.values), scheme), scheme).values

    grad_p = grad(pressure_field(state, params), scheme).values
    visc_term = visc.mu * _laplacian_raw(g, u.values, scheme)
    div_u = div(u, scheme)
    for a in range(g.dim):
        visc_term[a] += (visc.lam + visc.mu) * _deriv_axis(g, div_u.values, a, scheme)
    du = (visc_term - grad_p) / m - advection_term(u, scheme).values

    if forcing is not None:
        f_m, f_n, f_u = forcing(g, state.t)
        dm = dm + f_m
        dn = dn + f_n
        du = du + f_u
    if not (np.all(np.isfinite(dm)) and np.all(np.isfinite(dn))
            and np.all(np.isfinite(du))):
        raise NonFiniteError("rhs evaluation", state.t)
    return RhsOutput(ScalarField(g, dm), ScalarField(g, dn), VectorField(g, du))


def cfl_dt(
    state: FlowState,
    params: EosParams,
    visc: ViscosityParams,
    settings: IntegratorSettings,
) -> float:
    """Stable step size: cfl times the tighter of the advective bound
    h/(max|u| + c_max) and the viscous bound h^2 * min(m)/(2*dim*(2mu+lam)),
    capped by dt_max. c_max is the grid maximum of sqrt(P_m + (n/m) P_n), an
    upper proxy for the mixture sound speed."""
    g = state.grid
    h = g.h
    m, n = state.m.values, state.n.values
    u_mag = np.sqrt(np.sum(state.u.values**2, axis=0))
    p_m, p_n = pressure_grad(m, n, params)
    c_max = math.sqrt(float(np.max(p_m + (n / m) * p_n)))
    speed = float(np.max(u_mag)) + c_max
    adv = h / speed if speed > 0 else math.inf
    visc_bound = h * h * float(m.min()) / (2.0 * g.dim * (2.0 * visc.mu + visc.lam))
    dt = settings.cfl * min(adv, visc_bound)
    if not math.isfinite(dt):
        return settings.dt_max
    return min(dt, settings.dt_max)


def _blend(state: FlowState, coeffs, parts, t_new: float, floor: float) -> FlowState:
    """Linear combination state' = sum(c_i * part_i) used by the RK stages.

    Parts are (m, n, u) raw-array triples; non-finite stage values raise."""
    g = state.grid
    m = sum(c * p[0] for c, p in zip(coeffs, parts))
    n = sum(c * p[1] for c, p in zip(coeffs, parts))
    u = sum(c * p[2] for c, p in zip(coeffs, parts))
    if not (np.all(np.isfinite(m)) and np.all(np.isfinite(n)) and np.all(np.isfinite(u))):
        raise NonFiniteError("integrator stage", t_new)
    return FlowState(ScalarField(g, m), ScalarField(g, n), VectorField(g, u), t_new)


def step(
    state: FlowState,
    dt: float,
    params: EosParams,
    visc: ViscosityParams,
    scheme: DiscretizationScheme,
    settings: IntegratorSettings,
    forcing=None,
    t_final: float | None = None,
) -> FlowState:
    """One explicit step (rk4 or ssprk3); positivity re-validated on accept.

    t_final, when given, is used as the accepted state's time instead of
    t + dt, so steps clamped to land on an output time do so exactly rather
    than one rounding error short."""
    if not dt > 0:
        raise DomainError("step requires dt > 0")
    if t_final is None:
        t_final = state.t + dt
    floor = settings.positivity_floor

    def f(s: FlowState):
        out = rhs(s, params, visc, scheme, forcing, floor)
        return out.dm_dt.values, out.dn_dt.values, out.du_dt.values

    y0 = (state.m.values, state.n.values, state.u.values)
    t = state.t
    if settings.method == "rk4":
        k1 = f(state)
        s2 = _blend(state, (1.0, 0.5 * dt), (y0, k1), t + 0.5 * dt, floor)
        k2 = f(s2)
        s3 = _blend(state, (1.0, 0.5 * dt), (y0, k2), t + 0.5 * dt, floor)
        k3 = f(s3)
        s4 = _blend(state, (1.0, dt), (y0, k3), t + dt, floor)
        k4 = f(s4)
        new = _blend(
            state,
            (1.0, dt / 6.0, dt / 3.0, dt / 3.0, dt / 6.0),
            (y0, k1, k2, k3, k4),
            t_final,
            floor,
        )
    else:  # ssprk3, Shu-Osher form
        k1 = f(state)
        s1 = _blend(state, (1.0, dt), (y0, k1), t + dt, floor)
        k2 = f(s1)
        y1 = (s1.m.values, s1.n.values, s1.u.values)
        s2 = _blend(state, (0.75, 0.25, 0.25 * dt), (y0, y1, k2), t + 0.5 * dt, floor)
        k3 = f(s2)
        y2 = (s2.m.values, s2.n.values, s2.u.values)
        new = _blend(
            state,
            (1.0 / 3.0, 2.0 / 3.0, 2.0 * dt / 3.0),
            (y0, y2, k3),
            t_final,
            floor,
        )
    _check_positive(new, floor)
    return new


def initial_state(grid: Grid, params: EosParams, ic: InitialCondition) -> FlowState:
    """Build the initial FlowState for a built-in recipe."""
    mt, nt = params.m_tilde, params.n_tilde
    m = np.full(grid.shape, mt)
    n = np.full(grid.shape, nt)
    u = np.zeros((grid.dim,) + grid.shape)
    mesh = grid.mesh()

    if ic.recipe == "equilibrium":
        pass
    elif ic.recipe in ("gaussian_bump", "constant_ratio_bump"):
        center = 0.5 * grid.length if ic.center is None else ic.center
        bump = np.ones(grid.shape)
        for x in mesh:
            bump = bump * np.exp(-((x - center) ** 2) / (2.0 * ic.width**2))
        m = m + ic.amplitude_m * bump
        if ic.recipe == "constant_ratio_bump":
            n = (nt / mt) * m
        else:
            n = n + ic.amplitude_n * bump
        u[0] += ic.amplitude_u * bump
    else:  # fourier_mode
        k = 2.0 * np.pi * ic.mode / grid.length
        phase = np.broadcast_to(mesh[0], grid.shape) * k
        m = m + ic.amplitude_m * np.cos(phase)
        n = n + ic.amplitude_n * np.cos(phase)
        u[0] += ic.amplitude_u * np.sin(phase)

    state = FlowState(ScalarField(grid, m), ScalarField(grid, n), VectorField(grid, u), 0.0)
    return state


@dataclass
class RunSummary:
    final_state: FlowState
    steps: int
    records_emitted: int
    momentum_initial: np.ndarray
    momentum_final: np.ndarray
    boundary_shell_perturbation: float

    @property
    def momentum_drift(self) -> np.ndarray:
        return self.momentum_final - self.momentum_initial


def _momentum(state: FlowState) -> np.ndarray:
    g = state.grid
    return np.array(
        [integrate(ScalarField(g, state.m.values * state.u.values[c])) for c in range(g.dim)]
    )


def run(config, sinks, initial: FlowState | None = None) -> RunSummary:
    """Integrate a configured problem to t_end, emitting diagnostics records
    and snapshots through `sinks`.

    `config` must expose grid, scheme, eos, visc, analysis, integrator, ic,
    record_every and snapshot_times attributes (SimConfig does). `sinks` must
    provide record(rec) and snapshot(state, index); an optional
    truncated(reason) is called when the run aborts on a numerical failure,
    after which the exception propagates. `initial` resumes from an existing
    state (its time included) instead of building one from the IC recipe; the
    A1/A2 accumulators then restart from the resume point. Deterministic:
    fixed iteration order, no time-dependent seeding.
    """
    from . import diagnostics as _diag  # deferred to avoid an import cycle

    settings: IntegratorSettings = config.integrator
    grid: Grid = config.grid
    scheme: DiscretizationScheme = config.scheme
    params: EosParams = config.eos
    visc: ViscosityParams = config.visc
    theta = config.analysis.theta

    if initial is None:
        state = initial_state(grid, params, config.ic)
    else:
        if initial.grid != grid:
            raise DomainError("resume state grid does not match the configuration")
        state = initial
    shell = _diag.boundary_shell_perturbation(state, params)
    mom0 = _momentum(state)

    schedule = list(enumerate(sorted(float(s) for s in config.snapshot_times)))
    for _, s in schedule:
        if not 0.0 <= s <= settings.t_end:
            raise DomainError(f"snapshot time {s} outside [0, t_end]")
    if initial is not None:
        # times at or before the resume point belong to the original run;
        # retained entries keep their configured indices
        schedule = [(i, s) for i, s in schedule if s > state.t]

    running = _diag.RunningFunctionals()
    e0 = None
    step_index = 0
    records = 0
    prev_state = None
    prev_dt = 0.0
    next_snap = 0

    def emit(dt_last: float):
        nonlocal records, e0
        rec = _diag.compute_record(
            step_index, dt_last, state, params, visc, scheme, theta,
            prev_state=prev_state, prev_dt=prev_dt, running=running, e0=e0,
        )
        if e0 is None:
            e0 = rec.E
        sinks.record(rec)
        records += 1

    try:
        _check_positive(state, settings.positivity_floor)
        while next_snap < len(schedule) and schedule[next_snap][1] <= state.t:
            sinks.snapshot(state, schedule[next_snap][0])
            next_snap += 1
        emit(0.0)
        while state.t < settings.t_end:
            dt = cfl_dt(state, params, visc, settings)
            t_target = settings.t_end
            if next_snap < len(schedule):
                t_target = min(t_target, schedule[next_snap][1])
            t_final = None
            if t_target - state.t <= dt:
                dt = t_target - state.t
                t_final = t_target  # land on output times exactly
            new_state = step(state, dt, params, visc, scheme, settings,
                             t_final=t_final)
            prev_state, prev_dt = state, dt
            state = new_state
            step_index += 1
            while next_snap < len(schedule) and state.t >= schedule[next_snap][1]:
                sinks.snapshot(state, schedule[next_snap][0])
                next_snap += 1
            if step_index % config.record_every == 0 or state.t >= settings.t_end:
                emit(dt)
    except (PositivityLoss, NonFiniteError) as err:
        truncated = getattr(sinks, "truncated", None)
        if truncated is not None:
            truncated(f"step {step_index}, t={state.t:.9e}: {err}")
        raise

    return RunSummary(
        final_state=state,
        steps=step_index,
        records_emitted=records,
        momentum_initial=mom0,
        momentum_final=_momentum(state),
        boundary_shell_perturbation=shell,
    )
