import math

import numpy as np
import pytest
from scipy import integrate as sp_integrate

from twophase import dynamics
from twophase.diagnostics import (
    CSV_FIELDS,
    DiagnosticsRecord,
    RunningFunctionals,
    boundary_shell_perturbation,
    check_elliptic_f,
    check_elliptic_omega,
    check_lambda_transport,
    check_laplacian_decomposition,
    compute_record,
    effective_viscous_flux,
    functionals_a1_a2,
    hoff_decomposition,
    log_density_potential,
    material_derivative_u,
    ratio_bounds,
    sigma_weight,
    smallness_report,
    total_energy,
)
from twophase.dynamics import InitialCondition, initial_state, rhs
from twophase.eos import potential_energy_g, pressure
from twophase.errors import DimensionError, DomainError
from twophase.fields import (
    FlowState,
    Grid,
    ScalarField,
    VectorField,
    grad,
    linf_norm,
)

TWO_PI = 2.0 * np.pi
L = TWO_PI


def smooth_state_3d(n, with_flow=True):
    g = Grid(3, n, 1.0)
    X, Y, Z = g.mesh()
    c = TWO_PI
    m = 1.2 + 0.04 * np.cos(c * X) * np.cos(c * Y) * np.cos(c * Z)
    nn = 0.8 + 0.015 * np.cos(c * X) * np.sin(c * Y) * np.cos(c * Z)
    amp = 0.02 if with_flow else 0.0
    u = np.stack([
        amp * np.broadcast_to(np.sin(c * X) * np.cos(c * Y), g.shape),
        -amp * np.broadcast_to(np.cos(c * X) * np.sin(c * Y), g.shape),
        0.5 * amp * np.broadcast_to(np.sin(c * Z) * np.cos(c * X), g.shape),
    ])
    return FlowState(
        ScalarField(g, np.broadcast_to(m, g.shape).copy()),
        ScalarField(g, np.broadcast_to(nn, g.shape).copy()),
        VectorField(g, u), 0.0,
    )


def bump_state(params, n=128, amp_u=0.02):
    g = Grid(1, n, L)
    ic = InitialCondition("gaussian_bump", amplitude_m=0.05, amplitude_n=0.03,
                          amplitude_u=amp_u, width=L / 16)
    return initial_state(g, params, ic)


@pytest.fixture(scope="module")
def eq_state(params):
    return initial_state(Grid(1, 64, L), params, InitialCondition("equilibrium"))


class TestEnergy:
    def test_equilibrium_is_zero(self, params, eq_state):
        e, ke, pe = total_energy(eq_state, params)
        assert (e, ke, pe) == (0.0, 0.0, 0.0)

    def test_kinetic_energy_of_sine_mode(self, params):
        g = Grid(1, 128, L)
        a = 0.3
        x = g.mesh()[0].ravel()
        st = FlowState(
            ScalarField.full(g, params.m_tilde),
            ScalarField.full(g, params.n_tilde),
            VectorField(g, (a * np.sin(TWO_PI * x / L)).reshape(1, -1).copy()),
            0.0,
        )
        e, ke, pe = total_energy(st, params)
        assert pe == 0.0
        assert ke == pytest.approx(0.25 * params.m_tilde * a**2 * L, rel=1e-13)
        assert e == ke

    def test_potential_matches_pointwise_composition(self, params):
        st = bump_state(params, n=64)
        _, _, pe = total_energy(st, params)
        h = st.grid.h
        want = sum(
            potential_energy_g(float(m), float(n), params)
            for m, n in zip(st.m.values, st.n.values)
        ) * h
        assert pe == pytest.approx(want, abs=1e-10)

    def test_e_is_ke_plus_pe(self, params):
        st = bump_state(params)
        e, ke, pe = total_energy(st, params)
        assert e == pytest.approx(ke + pe, rel=1e-13)


class TestEffectiveViscousFlux:
    def test_equilibrium_vanishes_exactly(self, params, visc, spectral, eq_state):
        f = effective_viscous_flux(eq_state, params, visc, spectral)
        assert np.all(f.values == 0.0)

    def test_zero_velocity_reduces_to_pressure_difference(self, params, visc, spectral):
        st = bump_state(params, amp_u=0.0)
        f = effective_viscous_flux(st, params, visc, spectral)
        p = pressure(st.m.values, st.n.values, params)
        p_tilde = pressure(params.m_tilde, params.n_tilde, params)
        assert np.array_equal(f.values, p_tilde - p)


class TestMaterialDerivative:
    def test_equilibrium_zero(self, params, visc, spectral, eq_state):
        out = rhs(eq_state, params, visc, spectral)
        u_dot = material_derivative_u(eq_state, out, spectral)
        assert np.max(np.abs(u_dot.values)) == 0.0

    def test_zero_velocity_is_pressure_acceleration(self, params, visc, spectral):
        st = bump_state(params, amp_u=0.0)
        out = rhs(st, params, visc, spectral)
        u_dot = material_derivative_u(st, out, spectral)
        p = ScalarField(st.grid, pressure(st.m.values, st.n.values, params))
        want = -grad(p, spectral).values / st.m.values
        assert np.max(np.abs(u_dot.values - want)) <= 1e-14 * max(1.0, np.max(np.abs(want)))

    @pytest.mark.parametrize("dim", [1, 3])
    def test_construction_identity(self, params, visc, spectral, dim):
        st = bump_state(params) if dim == 1 else smooth_state_3d(16)
        g = st.grid
        out = rhs(st, params, visc, spectral)
        u_dot = material_derivative_u(st, out, spectral)
        from twophase.fields import _laplacian_raw, _deriv_axis, div
        grad_p = grad(dynamics.pressure_field(st, params), spectral)
        visc_term = visc.mu * _laplacian_raw(g, st.u.values, spectral)
        div_u = div(st.u, spectral)
        for a in range(g.dim):
            visc_term[a] += (visc.lam + visc.mu) * _deriv_axis(g, div_u.values, a, spectral)
        resid = st.m.values * u_dot.values - (visc_term - grad_p.values)
        assert np.max(np.abs(resid)) <= 1e-11 * (1.0 + linf_norm(grad_p))


class TestEllipticIdentities:
    def test_equilibrium_residuals_zero(self, params, visc, spectral, eq_state):
        assert check_elliptic_f(eq_state, params, visc, spectral) == 0.0
        assert check_laplacian_decomposition(eq_state, params, visc, spectral) == 0.0

    def test_flux_identity_spectral_small(self, params, visc, spectral):
        st = bump_state(params)
        assert check_elliptic_f(st, params, visc, spectral) <= 1e-8
        st3 = smooth_state_3d(16)
        assert check_elliptic_f(st3, params, visc, spectral) <= 1e-8

    def test_flux_identity_central2_order(self, params, visc, central2):
        errs = []
        for n in (64, 128, 256):
            st = bump_state(params, n=n)
            errs.append(check_elliptic_f(st, params, visc, central2))
        order = -np.polyfit(np.log((64, 128, 256)), np.log(errs), 1)[0]
        assert order == pytest.approx(2.0, abs=0.3)

    def test_omega_identity_needs_3d(self, params, visc, spectral, eq_state):
        with pytest.raises(DimensionError):
            check_elliptic_omega(eq_state, params, visc, spectral)

    def test_omega_identity_3d(self, params, visc, spectral, central2):
        st = smooth_state_3d(16)
        assert check_elliptic_omega(st, params, visc, spectral) <= 1e-8
        errs = []
        for n in (16, 32):
            errs.append(check_elliptic_omega(smooth_state_3d(n), params, visc, central2))
        assert errs[1] == pytest.approx(errs[0] / 4.0, rel=0.25)

    def test_omega_identity_gradient_velocity(self, params, visc, spectral):
        # u = grad(phi) has zero vorticity; both sides stay consistent
        g = Grid(3, 16, 1.0)
        X, Y, Z = g.mesh()
        phi = ScalarField(g, 0.01 * np.broadcast_to(
            np.cos(TWO_PI * X) * np.cos(TWO_PI * Y) * np.cos(TWO_PI * Z), g.shape).copy())
        u = grad(phi, spectral)
        base = smooth_state_3d(16)
        st = FlowState(base.m, base.n, u, 0.0)
        assert check_elliptic_omega(st, params, visc, spectral) <= 1e-8

    def test_laplacian_decomposition_spectral(self, params, visc, spectral):
        assert check_laplacian_decomposition(
            smooth_state_3d(16), params, visc, spectral) <= 1e-10
        assert check_laplacian_decomposition(
            bump_state(params), params, visc, spectral) <= 1e-10


class TestHoff:
    def test_equilibrium(self, params, visc, spectral, eq_state):
        pair, resid = hoff_decomposition(eq_state, params, visc, spectral)
        assert resid == 0.0
        assert np.all(pair.v.values == 0.0)
        assert np.all(pair.w.values == 0.0)
        assert np.all(pair.subtracted_means == 0.0)

    def test_constant_pressure_puts_everything_in_w(self, params, visc, spectral):
        g = Grid(1, 64, L)
        x = g.mesh()[0].ravel()
        st = FlowState(
            ScalarField.full(g, params.m_tilde),
            ScalarField.full(g, params.n_tilde),
            VectorField(g, (0.05 * np.sin(TWO_PI * x / L)).reshape(1, -1).copy()),
            0.0,
        )
        pair, resid = hoff_decomposition(st, params, visc, spectral)
        assert linf_norm(pair.v) <= 1e-14
        assert linf_norm(pair.w) > 0.0
        assert resid <= 1e-8

    @pytest.mark.parametrize("dim", [1, 3])
    def test_smooth_state_residual(self, params, visc, spectral, dim):
        st = bump_state(params) if dim == 1 else smooth_state_3d(16)
        _, resid = hoff_decomposition(st, params, visc, spectral)
        assert resid <= 1e-8

    def test_components_zero_mean(self, params, visc, spectral):
        st = smooth_state_3d(16)
        pair, _ = hoff_decomposition(st, params, visc, spectral)
        for field in (pair.v, pair.w):
            assert np.max(np.abs(field.values.reshape(3, -1).mean(axis=1))) <= 1e-14


class TestLambdaTransport:
    def test_equilibrium_pair(self, params, visc, spectral, eq_state):
        later = FlowState(eq_state.m, eq_state.n, eq_state.u, 1e-3)
        assert check_lambda_transport(eq_state, later, 1e-3, params, visc, spectral) == (0.0, 0.0)

    def test_log_potential_closed_form_vs_ode_quadrature(self, params, visc):
        # Lambda' = (2mu+lam)/s integrated from m_tilde reproduces the log form
        for m in (0.9, 1.5, 2.3):
            want, _ = sp_integrate.quad(
                lambda s: (2 * visc.mu + visc.lam) / s, params.m_tilde, m,
                epsabs=1e-13,
            )
            got = log_density_potential(np.array(m), params.m_tilde, visc)
            assert got == pytest.approx(want, abs=1e-10)

    def test_residual_first_order_in_dt(self, params, visc, spectral):
        st = bump_state(params)
        settings = dynamics.IntegratorSettings(t_end=1.0)
        resids = []
        for dt in (2e-3, 1e-3, 5e-4):
            nxt = dynamics.step(st, dt, params, visc, spectral, settings)
            r1, _ = check_lambda_transport(st, nxt, dt, params, visc, spectral)
            resids.append(r1)
        order = -np.polyfit(np.log((2e-3, 1e-3, 5e-4)), np.log(resids), 1)[0]
        assert -order == pytest.approx(1.0, abs=0.3)

    def test_requires_positive_dt(self, params, visc, spectral, eq_state):
        with pytest.raises(DomainError):
            check_lambda_transport(eq_state, eq_state, 0.0, params, visc, spectral)


class TestFunctionals:
    def test_sigma_weight(self):
        assert sigma_weight(0.3) == 0.3
        assert sigma_weight(2.5) == 1.0

    def test_zero_velocity_trajectory(self):
        running = RunningFunctionals()
        for t in np.linspace(0, 2, 21):
            a1, a2 = running.update(float(t), 0.0, 0.0, 0.0)
        assert (a1, a2) == (0.0, 0.0)

    def test_trapezoid_against_closed_form(self):
        # integrand sigma(t) * e^{-t}: closed form 1 - 2/e + (1/e - e^{-T})
        ts = np.arange(0.0, 2.0 + 1e-12, 1e-3)
        records = [
            DiagnosticsRecord(
                step=i, t=float(t), dt=1e-3, E=0, KE=0, PE=0, D=0, M=0.0,
                gradL2=0, min_m=1, max_m=1, min_n=1, max_n=1, min_s=1, max_s=1,
                A1=0, A2=0, res_F=0, res_omega=0, res_hoff=0, res_lambda1=0,
                res_lambda2=0, mass_m=0, mass_n=0, smallness_lhs=0,
                smallness_rhs=0, int_udot_sq=float(np.exp(-t)),
                int_grad_udot_sq=0.0,
            )
            for i, t in enumerate(ts)
        ]
        a1, _ = functionals_a1_a2(records)
        want = (1.0 - 2.0 * math.exp(-1.0)) + (math.exp(-1.0) - math.exp(-2.0))
        assert a1 == pytest.approx(want, abs=1e-4)

    def test_empty_stream_raises(self):
        with pytest.raises(DomainError):
            functionals_a1_a2([])

    def test_nondecreasing_in_horizon(self):
        rng = np.random.default_rng(9)
        running = RunningFunctionals()
        prev = (0.0, 0.0)
        for i, t in enumerate(np.linspace(0, 3, 50)):
            vals = rng.uniform(0, 1, size=3)
            a1, a2 = running.update(float(t), *map(float, vals))
            assert a1 >= prev[0] - 1e-15
            assert a2 >= prev[1] - 1e-15
            prev = (a1, a2)


class TestSmallnessReport:
    def test_zero_functionals_satisfied(self):
        rep = smallness_report(0.5, 0.0, 0.0, 0.5)
        assert rep.satisfied

    def test_unit_energy(self):
        assert smallness_report(1.0, 0.0, 0.0, 0.7).rhs == 2.0

    def test_stated_arithmetic(self):
        rep = smallness_report(0.01, 0.0, 0.0, 0.5)
        assert rep.rhs == pytest.approx(0.2, abs=1e-16)

    def test_theta_window(self):
        with pytest.raises(DomainError):
            smallness_report(1.0, 0.0, 0.0, 1.5)

    def test_nonpositive_energy_clamps(self):
        assert smallness_report(-1.0, 0.0, 0.0, 0.5).rhs == 0.0


class TestRatioAndShell:
    def test_ratio_bounds_double(self, params):
        g = Grid(1, 32, L)
        m = np.linspace(1.0, 2.0, 32)
        st = FlowState(ScalarField(g, m), ScalarField(g, 2.0 * m),
                       VectorField.zeros(g), 0.0)
        assert ratio_bounds(st) == (2.0, 2.0)

    def test_ratio_bounds_equilibrium(self, params, eq_state):
        lo, hi = ratio_bounds(eq_state)
        assert lo == hi == params.n_tilde / params.m_tilde

    def test_shell_zero_at_equilibrium(self, params, eq_state):
        assert boundary_shell_perturbation(eq_state, params) == 0.0

    def test_shell_flags_edge_support(self, params):
        g = Grid(1, 128, L)
        centered = initial_state(g, params, InitialCondition(
            "gaussian_bump", amplitude_m=0.05, width=L / 32))
        edge = initial_state(g, params, InitialCondition(
            "gaussian_bump", amplitude_m=0.05, width=L / 32, center=0.01 * L))
        assert boundary_shell_perturbation(centered, params) < 1e-10
        assert boundary_shell_perturbation(edge, params) > 1e-3


class TestComputeRecord:
    def test_equilibrium_record_all_zero(self, params, visc, spectral, eq_state):
        rec = compute_record(0, 0.0, eq_state, params, visc, spectral, 0.5)
        for name in ("E", "KE", "PE", "D", "M", "gradL2", "A1", "A2",
                     "res_F", "res_omega", "res_hoff", "res_lambda1",
                     "res_lambda2", "smallness_lhs"):
            assert getattr(rec, name) == 0.0
        assert rec.min_m == rec.max_m == params.m_tilde
        assert rec.min_n == rec.max_n == params.n_tilde

    def test_csv_field_list_is_stable(self):
        assert CSV_FIELDS == (
            "step", "t", "dt", "E", "KE", "PE", "D", "M", "gradL2",
            "min_m", "max_m", "min_n", "max_n", "min_s", "max_s",
            "A1", "A2", "res_F", "res_omega", "res_hoff",
            "res_lambda1", "res_lambda2", "mass_m", "mass_n",
            "smallness_lhs", "smallness_rhs",
        )
        for name in CSV_FIELDS:
            assert hasattr(DiagnosticsRecord(
                step=0, t=0, dt=0, E=0, KE=0, PE=0, D=0, M=0, gradL2=0,
                min_m=1, max_m=1, min_n=1, max_n=1, min_s=1, max_s=1,
                A1=0, A2=0, res_F=0, res_omega=0, res_hoff=0,
                res_lambda1=0, res_lambda2=0, mass_m=0, mass_n=0,
                smallness_lhs=0, smallness_rhs=0), name)

    def test_record_on_smooth_state(self, params, visc, spectral):
        st = bump_state(params)
        rec = compute_record(3, 1e-3, st, params, visc, spectral, 0.5)
        assert rec.E == pytest.approx(rec.KE + rec.PE, rel=1e-13)
        assert rec.gradL2 == pytest.approx(math.sqrt(rec.M), rel=1e-15)
        assert rec.res_omega == 0.0  # vacuous in 1D
        assert rec.res_F <= 1e-8 and rec.res_hoff <= 1e-8
        assert rec.smallness_rhs == pytest.approx(2.0 * rec.E**0.5, rel=1e-15)
