"""Scalar functionals and identity residuals evaluated on flow states.

Everything here is read-only over its inputs. The quantities fall into three
groups:

* energy bookkeeping: total/kinetic/potential energy, the viscous dissipation
  integral D = int(mu |grad u|^2 + (mu+lam)(div u)^2), masses and extrema;
* the effective viscous flux F = (lam+2mu) div u - (P - P~) and the elliptic
  identities it satisfies together with the vorticity matrix and the Lame
  decomposition of u (these are exact in the continuum, so their discrete
  residuals measure scheme error and must vanish under refinement);
* time-weighted functionals A1, A2 with weight sigma(t) = min(1, t), and the
  transport residuals of the logarithmic potentials (2mu+lam) ln(m/m~),
  (2mu+lam) ln(n/n~), both sourced by -F.

Residual norms are normalized by max(1, ||rhs-side||) so they stay meaningful
near equilibrium, where every residual is exactly zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import RhsOutput, advection_term, pressure_field, rhs
from .eos import EosParams, ViscosityParams, potential_energy_field, pressure
from .errors import DimensionError, DomainError
from .fields import (
    DiscretizationScheme,
    FlowState,
    ScalarField,
    VectorField,
    antisym_grad,
    div,
    grad,
    integrate,
    l2_norm,
    laplacian,
    linf_norm,
    solve_lame_periodic,
    vector_gradient,
    _deriv_axis,
)

CSV_FIELDS = (
    "step", "t", "dt", "E", "KE", "PE", "D", "M", "gradL2",
    "min_m", "max_m", "min_n", "max_n", "min_s", "max_s",
    "A1", "A2", "res_F", "res_omega", "res_hoff",
    "res_lambda1", "res_lambda2", "mass_m", "mass_n",
    "smallness_lhs", "smallness_rhs",
)


@dataclass(frozen=True)
class DiagnosticsRecord:
    """One row of scalar diagnostics; CSV_FIELDS is the serialized column set.

    int_udot_sq and int_grad_udot_sq are carried for the A1/A2 replay but are
    not serialized."""

    step: int
    t: float
    dt: float
    E: float
    KE: float
    PE: float
    D: float
    M: float
    gradL2: float
    min_m: float
    max_m: float
    min_n: float
    max_n: float
    min_s: float
    max_s: float
    A1: float
    A2: float
    res_F: float
    res_omega: float
    res_hoff: float
    res_lambda1: float
    res_lambda2: float
    mass_m: float
    mass_n: float
    smallness_lhs: float
    smallness_rhs: float
    int_udot_sq: float = 0.0
    int_grad_udot_sq: float = 0.0


@dataclass(frozen=True)
class HoffPair:
    """Lame-decomposition pair: u - mean(u) = v + w with v absorbing grad P
    and w absorbing m*u_dot. subtracted_means rows are the per-component means
    removed from the two right-hand sides (pressure row first)."""

    v: VectorField
    w: VectorField
    subtracted_means: np.ndarray


@dataclass(frozen=True)
class SmallnessReport:
    """Informational comparison A1+A2 vs 2*E0^theta; nothing is asserted
    since the smallness threshold on E0 is not quantified."""

    e0: float
    theta: float
    lhs: float
    rhs: float
    satisfied: bool


def sigma_weight(t: float) -> float:
    """The time weight min(1, t)."""
    return min(1.0, t)


def total_energy(state: FlowState, params: EosParams,
                 g_abs_tol: float = 1e-12) -> tuple[float, float, float]:
    """(E, KE, PE): kinetic integral of m|u|^2/2 plus the potential integral
    of G; E vanishes exactly on the equilibrium state."""
    g = state.grid
    ke = integrate(ScalarField(g, 0.5 * state.m.values * np.sum(state.u.values**2, axis=0)))
    pe = integrate(ScalarField(
        g, potential_energy_field(state.m.values, state.n.values, params, abs_tol=g_abs_tol)
    ))
    return ke + pe, ke, pe


def dissipation(state: FlowState, visc: ViscosityParams,
                scheme: DiscretizationScheme) -> tuple[float, float]:
    """(D, M): D = int(mu |grad u|^2 + (mu+lam)(div u)^2), M = int |grad u|^2."""
    g = state.grid
    jac = vector_gradient(state.u, scheme)
    int_grad_sq = integrate(ScalarField(g, np.sum(jac**2, axis=(0, 1))))
    div_u = div(state.u, scheme)
    d = visc.mu * int_grad_sq + (visc.mu + visc.lam) * integrate(
        ScalarField(g, div_u.values**2)
    )
    return d, int_grad_sq


def effective_viscous_flux(state: FlowState, params: EosParams,
                           visc: ViscosityParams,
                           scheme: DiscretizationScheme) -> ScalarField:
    """F = (lam + 2 mu) div u - (P(m, n) - P(m~, n~)), pointwise."""
    g = state.grid
    p = pressure_field(state, params)
    p_tilde = pressure(params.m_tilde, params.n_tilde, params)
    dv = div(state.u, scheme)
    return ScalarField(g, (visc.lam + 2.0 * visc.mu) * dv.values - p.values + p_tilde)


def material_derivative_u(state: FlowState, rhs_out: RhsOutput,
                          scheme: DiscretizationScheme) -> VectorField:
    """u_dot = u_t + (u . grad) u.

    Built from the rhs output plus the same advection helper the rhs used, so
    the advective parts cancel to rounding and m*u_dot equals
    mu*Lap(u) + (mu+lam)*grad(div u) - grad P identically."""
    adv = advection_term(state.u, scheme)
    return VectorField(state.grid, rhs_out.du_dt.values + adv.values)


def _mu_dot(state: FlowState, params: EosParams, visc: ViscosityParams,
            scheme: DiscretizationScheme, rhs_out: RhsOutput | None) -> VectorField:
    if rhs_out is None:
        rhs_out = rhs(state, params, visc, scheme)
    u_dot = material_derivative_u(state, rhs_out, scheme)
    return VectorField(state.grid, state.m.values * u_dot.values)


def check_elliptic_f(state: FlowState, params: EosParams, visc: ViscosityParams,
                     scheme: DiscretizationScheme,
                     rhs_out: RhsOutput | None = None) -> float:
    """Normalized residual of Lap(F) = div(m u_dot)."""
    f = effective_viscous_flux(state, params, visc, scheme)
    lhs = laplacian(f, scheme)
    rhs_side = div(_mu_dot(state, params, visc, scheme, rhs_out), scheme)
    return l2_norm(ScalarField(state.grid, lhs.values - rhs_side.values)) / max(
        1.0, l2_norm(rhs_side)
    )


def _composed_laplacian(g, values: np.ndarray, scheme: DiscretizationScheme) -> np.ndarray:
    """Laplacian realized as repeated first derivatives (sum_a d_a d_a)."""
    out = np.zeros_like(values)
    for a in range(g.dim):
        out += _deriv_axis(g, _deriv_axis(g, values, a, scheme), a, scheme)
    return out


def check_elliptic_omega(state: FlowState, params: EosParams,
                         visc: ViscosityParams, scheme: DiscretizationScheme,
                         rhs_out: RhsOutput | None = None) -> float:
    """Max over component pairs of the normalized residual of
    mu*Lap(w[j,k]) = d_k(m u_dot^j) - d_j(m u_dot^k); 3D only.

    The left side's Laplacian is composed from first derivatives: with the
    scheme's own Laplacian stencil the two sides cancel identically by
    operator commutation (m u_dot is built from that stencil), leaving pure
    roundoff, whereas the composed form measures the scheme's genuine
    commutation error, which vanishes under refinement at the scheme's order
    (and is exact spectrally on band-limited fields)."""
    g = state.grid
    if g.dim != 3:
        raise DimensionError("the vorticity identity is defined only in 3D")
    omega = antisym_grad(state.u, scheme)
    mu_dot = _mu_dot(state, params, visc, scheme, rhs_out)
    lap_vals = _composed_laplacian(g, omega.values, scheme)
    worst = 0.0
    for j in range(g.dim):
        for k in range(j + 1, g.dim):
            rhs_side = _deriv_axis(g, mu_dot.values[j], k, scheme) - _deriv_axis(
                g, mu_dot.values[k], j, scheme
            )
            resid = visc.mu * lap_vals[j, k] - rhs_side
            denom = max(1.0, l2_norm(ScalarField(g, rhs_side)))
            worst = max(worst, l2_norm(ScalarField(g, resid)) / denom)
    return worst


def check_laplacian_decomposition(state: FlowState, params: EosParams,
                                  visc: ViscosityParams,
                                  scheme: DiscretizationScheme) -> float:
    """Normalized inf-norm residual of
    Lap(u^j) = d_j((F + P - P~)/(lam+2mu)) + d_i w[j,i]."""
    g = state.grid
    f = effective_viscous_flux(state, params, visc, scheme)
    p = pressure_field(state, params)
    p_tilde = pressure(params.m_tilde, params.n_tilde, params)
    core = ScalarField(g, (f.values + p.values - p_tilde) / (visc.lam + 2.0 * visc.mu))
    lap_u = laplacian(state.u, scheme)
    grad_core = grad(core, scheme)
    resid = lap_u.values - grad_core.values
    if g.dim == 3:
        omega = antisym_grad(state.u, scheme)
        for j in range(g.dim):
            for i in range(g.dim):
                resid[j] -= _deriv_axis(g, omega.values[j, i], i, scheme)
    return linf_norm(VectorField(g, resid)) / max(1.0, linf_norm(lap_u))


def hoff_decomposition(state: FlowState, params: EosParams,
                       visc: ViscosityParams, scheme: DiscretizationScheme,
                       rhs_out: RhsOutput | None = None) -> tuple[HoffPair, float]:
    """Split u into v + w where the Lame operator maps v to grad P and w to
    m*u_dot; returns the pair and the normalized inf-norm residual of
    u - mean(u) = v + w (the torus solves are gauge-fixed to zero mean, and
    the continuum identity determines u only up to its mean mode)."""
    g = state.grid
    grad_p = grad(pressure_field(state, params), scheme)
    v, means_v = solve_lame_periodic(grad_p, visc)
    w, means_w = solve_lame_periodic(_mu_dot(state, params, visc, scheme, rhs_out), visc)
    u_means = state.u.values.reshape(g.dim, -1).mean(axis=1)
    resid = state.u.values - u_means.reshape((g.dim,) + (1,) * g.dim) \
        - v.values - w.values
    residual = linf_norm(VectorField(g, resid)) / max(1.0, linf_norm(state.u))
    return HoffPair(v, w, np.stack([means_v, means_w])), residual


def log_density_potential(values: np.ndarray, reference: float,
                          visc: ViscosityParams) -> np.ndarray:
    """(2mu+lam) * ln(field/reference): zero at the reference value, with
    derivative (2mu+lam)/field."""
    return (2.0 * visc.mu + visc.lam) * np.log(values / reference)


def check_lambda_transport(state_a: FlowState, state_b: FlowState, dt: float,
                           params: EosParams, visc: ViscosityParams,
                           scheme: DiscretizationScheme) -> tuple[float, float]:
    """Normalized residuals of the two transport identities
    d_t L + u . grad L + P - P~ = -F, with L the logarithmic potential of m
    (first) and of n (second). Time difference is forward from state_a to
    state_b; spatial terms are evaluated on state_a, so the residual is first
    order in dt on top of the scheme's spatial order."""
    if not dt > 0:
        raise DomainError("check_lambda_transport requires dt > 0")
    g = state_a.grid
    if state_b.grid != g:
        raise DomainError("states must share one grid")
    p = pressure_field(state_a, params).values
    p_tilde = pressure(params.m_tilde, params.n_tilde, params)
    f = effective_viscous_flux(state_a, params, visc, scheme).values
    out = []
    for field_a, field_b, ref in (
        (state_a.m, state_b.m, params.m_tilde),
        (state_a.n, state_b.n, params.n_tilde),
    ):
        lam_a = log_density_potential(field_a.values, ref, visc)
        lam_b = log_density_potential(field_b.values, ref, visc)
        d_dt = (lam_b - lam_a) / dt
        grad_lam = grad(ScalarField(g, lam_a), scheme)
        adv = np.sum(state_a.u.values * grad_lam.values, axis=0)
        resid = d_dt + adv + p - p_tilde + f
        denom = max(1.0, l2_norm(ScalarField(g, f)))
        out.append(l2_norm(ScalarField(g, resid)) / denom)
    return out[0], out[1]


def ratio_bounds(state: FlowState) -> tuple[float, float]:
    """Pointwise extrema of the gas-to-liquid ratio s = n/m."""
    s = state.n.values / state.m.values
    return float(s.min()), float(s.max())


class RunningFunctionals:
    """Incremental A1/A2 accumulator over the emitted record cadence.

    A1 = sup_t sigma * int|grad u|^2 + int_0^T sigma * int|u_dot|^2 dt
    A2 = sup_t sigma^3 * int|u_dot|^2 + int_0^T sigma^3 * int|grad u_dot|^2 dt

    Time integrals use the trapezoid rule over record times; both pieces of
    each functional are nondecreasing in T, so A1 and A2 are monotone."""

    def __init__(self):
        self._sup1 = 0.0
        self._sup2 = 0.0
        self._int1 = 0.0
        self._int2 = 0.0
        self._prev = None  # (t, sigma*int_udot_sq, sigma^3*int_grad_udot_sq)

    def update(self, t: float, int_grad_u_sq: float, int_udot_sq: float,
               int_grad_udot_sq: float) -> tuple[float, float]:
        s = sigma_weight(t)
        self._sup1 = max(self._sup1, s * int_grad_u_sq)
        self._sup2 = max(self._sup2, s**3 * int_udot_sq)
        y1 = s * int_udot_sq
        y2 = s**3 * int_grad_udot_sq
        if self._prev is not None:
            t0, y1_0, y2_0 = self._prev
            self._int1 += 0.5 * (y1_0 + y1) * (t - t0)
            self._int2 += 0.5 * (y2_0 + y2) * (t - t0)
        self._prev = (t, y1, y2)
        return self._sup1 + self._int1, self._sup2 + self._int2


def functionals_a1_a2(records, visc: ViscosityParams | None = None) -> tuple[float, float]:
    """Replay A1(T), A2(T) from a record stream up to its last time.

    Records must carry int_udot_sq and int_grad_udot_sq (M holds
    int|grad u|^2); raises on an empty stream. visc is accepted for signature
    stability but the functionals are viscosity-free."""
    records = list(records)
    if not records:
        raise DomainError("functionals_a1_a2 requires at least one record")
    running = RunningFunctionals()
    a1 = a2 = 0.0
    for rec in sorted(records, key=lambda r: r.t):
        a1, a2 = running.update(rec.t, rec.M, rec.int_udot_sq, rec.int_grad_udot_sq)
    return a1, a2


def smallness_report(e0: float, a1: float, a2: float, theta: float) -> SmallnessReport:
    """Compare A1+A2 against 2*E0^theta without asserting the inequality.

    The threshold is defined for positive initial energy; a nonpositive E0
    (possible for strongly off-ray data, where G has no sign) yields a zero
    threshold rather than a complex power."""
    if not (0.0 < theta < 1.0):
        raise DomainError(f"theta = {theta} not in (0, 1)")
    lhs = a1 + a2
    rhs_val = 2.0 * max(e0, 0.0) ** theta
    return SmallnessReport(e0=e0, theta=theta, lhs=lhs, rhs=rhs_val,
                           satisfied=lhs <= rhs_val)


def boundary_shell_perturbation(state: FlowState, params: EosParams,
                                shell_fraction: float = 0.1) -> float:
    """Largest deviation from the far-field state in the shell of cells within
    shell_fraction * L of a box face; flags initial data whose support leaks
    into the region standing in for spatial infinity."""
    g = state.grid
    mask = np.zeros(g.shape, dtype=bool)
    edge = shell_fraction * g.length
    for x in g.mesh():
        mask |= np.broadcast_to((x < edge) | (x > g.length - edge), g.shape)
    if not mask.any():
        return 0.0
    dev_m = np.abs(state.m.values[mask] - params.m_tilde) / params.m_tilde
    dev_n = np.abs(state.n.values[mask] - params.n_tilde) / params.n_tilde
    u_mag = np.sqrt(np.sum(state.u.values**2, axis=0))[mask]
    return float(max(dev_m.max(), dev_n.max(), u_mag.max()))


def compute_record(step_index: int, dt_last: float, state: FlowState,
                   params: EosParams, visc: ViscosityParams,
                   scheme: DiscretizationScheme, theta: float, *,
                   prev_state: FlowState | None = None, prev_dt: float = 0.0,
                   running: RunningFunctionals | None = None,
                   e0: float | None = None) -> DiagnosticsRecord:
    """Evaluate the full diagnostics set on one accepted state.

    prev_state/prev_dt feed the transport residuals (zero on the first record
    of a run, which has no predecessor); `running` accumulates A1/A2 across
    calls; e0 anchors the smallness threshold (the current E is used when the
    record itself is the initial one)."""
    g = state.grid
    rhs_out = rhs(state, params, visc, scheme)
    u_dot = material_derivative_u(state, rhs_out, scheme)

    e, ke, pe = total_energy(state, params)
    d, int_grad_u_sq = dissipation(state, visc, scheme)
    int_udot_sq = integrate(ScalarField(g, np.sum(u_dot.values**2, axis=0)))
    jac_udot = vector_gradient(u_dot, scheme)
    int_grad_udot_sq = integrate(ScalarField(g, np.sum(jac_udot**2, axis=(0, 1))))

    if running is None:
        running = RunningFunctionals()
    a1, a2 = running.update(state.t, int_grad_u_sq, int_udot_sq, int_grad_udot_sq)

    res_f = check_elliptic_f(state, params, visc, scheme, rhs_out)
    res_omega = (
        check_elliptic_omega(state, params, visc, scheme, rhs_out)
        if g.dim == 3 else 0.0
    )
    _, res_hoff = hoff_decomposition(state, params, visc, scheme, rhs_out)
    if prev_state is not None and prev_dt > 0:
        res_l1, res_l2 = check_lambda_transport(
            prev_state, state, prev_dt, params, visc, scheme
        )
    else:
        res_l1 = res_l2 = 0.0

    min_s, max_s = ratio_bounds(state)
    min_m = float(state.m.values.min())
    min_n = float(state.n.values.min())
    assert min_m > 0 and min_n > 0, "record computed on a non-positive state"
    e_anchor = e if e0 is None else e0
    report = smallness_report(e_anchor, a1, a2, theta)

    return DiagnosticsRecord(
        step=step_index,
        t=state.t,
        dt=dt_last,
        E=e, KE=ke, PE=pe, D=d, M=int_grad_u_sq, gradL2=math.sqrt(int_grad_u_sq),
        min_m=min_m, max_m=float(state.m.values.max()),
        min_n=min_n, max_n=float(state.n.values.max()),
        min_s=min_s, max_s=max_s,
        A1=a1, A2=a2,
        res_F=res_f, res_omega=res_omega, res_hoff=res_hoff,
        res_lambda1=res_l1, res_lambda2=res_l2,
        mass_m=integrate(state.m), mass_n=integrate(state.n),
        smallness_lhs=report.lhs, smallness_rhs=report.rhs,
        int_udot_sq=int_udot_sq, int_grad_udot_sq=int_grad_udot_sq,
    )
