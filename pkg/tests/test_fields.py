import math

import numpy as np
import pytest

from twophase.errors import DomainError
from twophase.fields import (
    DiscretizationScheme,
    FlowState,
    Grid,
    ScalarField,
    VectorField,
    antisym_grad,
    div,
    filter_dealias,
    grad,
    integrate,
    lame_operator,
    laplacian,
    linf_norm,
    shift,
    solve_lame_periodic,
    vector_gradient,
)

TWO_PI = 2.0 * np.pi


def sine_field(grid, k=1):
    x = grid.mesh()[0]
    return ScalarField(grid, np.broadcast_to(
        np.sin(TWO_PI * k * x / grid.length), grid.shape).copy())


def random_smooth_scalar(grid, rng, modes=3, amp=1.0):
    """Band-limited random field: modes up to `modes` per axis."""
    vals = np.zeros(grid.shape)
    for _ in range(4):
        kvec = rng.integers(-modes, modes + 1, size=grid.dim)
        phase = rng.uniform(0, TWO_PI)
        theta = np.zeros(grid.shape)
        for a, x in enumerate(grid.mesh()):
            theta = theta + TWO_PI * kvec[a] * x / grid.length
        vals += amp * rng.uniform(0.2, 1.0) * np.cos(theta + phase)
    return ScalarField(grid, vals)


def random_smooth_vector(grid, rng, modes=3, amp=1.0):
    return VectorField(grid, np.stack(
        [random_smooth_scalar(grid, rng, modes, amp).values for _ in range(grid.dim)]
    ))


class TestGridAndTypes:
    def test_grid_properties(self):
        g = Grid(1, 16, 4.0)
        assert g.h == 0.25
        assert g.shape == (16,)
        assert g.volume == 4.0
        assert g.cell_count == 16

    def test_grid_validation(self):
        with pytest.raises(DomainError):
            Grid(2, 16, 1.0)
        with pytest.raises(DomainError):
            Grid(1, 4, 1.0)
        with pytest.raises(DomainError):
            Grid(1, 16, -1.0)

    def test_scheme_validation(self):
        with pytest.raises(DomainError):
            DiscretizationScheme("upwind")

    def test_central4_needs_16_points(self, central4):
        g = Grid(1, 8, 1.0)
        with pytest.raises(DomainError, match="central4"):
            grad(ScalarField(g, np.zeros(8)), central4)

    def test_field_shape_and_finiteness(self):
        g = Grid(1, 8, 1.0)
        with pytest.raises(DomainError):
            ScalarField(g, np.zeros(9))
        with pytest.raises(DomainError):
            ScalarField(g, np.full(8, np.nan))
        with pytest.raises(DomainError):
            VectorField(g, np.zeros(8))  # missing component axis

    def test_flow_state_requires_shared_grid(self):
        g1, g2 = Grid(1, 8, 1.0), Grid(1, 16, 1.0)
        with pytest.raises(DomainError):
            FlowState(ScalarField.full(g1, 1.0), ScalarField.full(g2, 1.0),
                      VectorField.zeros(g1), 0.0)


class TestDerivatives:
    @pytest.mark.parametrize("kind", ["spectral", "central2", "central4"])
    def test_grad_annihilates_constants(self, kind):
        g = Grid(1, 32, 1.0)
        out = grad(ScalarField.full(g, 3.7), DiscretizationScheme(kind, False))
        assert np.all(out.values == 0.0)

    def test_spectral_grad_exact_on_sine(self, spectral):
        g = Grid(1, 64, 2.0)
        f = sine_field(g)
        out = grad(f, spectral)
        x = g.mesh()[0].ravel()
        want = (TWO_PI / g.length) * np.cos(TWO_PI * x / g.length)
        assert np.max(np.abs(out.values[0] - want)) <= 1e-12 * np.max(np.abs(want))

    @pytest.mark.parametrize("kind,expected,slack", [("central2", 2.0, 0.1),
                                                     ("central4", 4.0, 0.2)])
    def test_central_grad_order(self, kind, expected, slack):
        scheme = DiscretizationScheme(kind, False)
        errs = []
        ns = (32, 64, 128)
        for n in ns:
            g = Grid(1, n, 2.0)
            x = g.mesh()[0].ravel()
            out = grad(sine_field(g), scheme)
            want = (TWO_PI / g.length) * np.cos(TWO_PI * x / g.length)
            errs.append(np.max(np.abs(out.values[0] - want)))
        order = -np.polyfit(np.log(ns), np.log(errs), 1)[0]
        assert order == pytest.approx(expected, abs=slack)

    def test_div_annihilates_constants(self, spectral):
        g = Grid(3, 8, 1.0)
        v = VectorField(g, np.ones((3,) + g.shape))
        assert np.all(div(v, spectral).values == 0.0)

    def test_div_of_grad_equals_laplacian_spectral(self, spectral):
        rng = np.random.default_rng(0)
        g = Grid(3, 16, 1.0)
        f = random_smooth_scalar(g, rng)
        got = div(grad(f, spectral), spectral)
        want = laplacian(f, spectral)
        scale = np.max(np.abs(want.values))
        assert np.max(np.abs(got.values - want.values)) <= 1e-12 * scale

    def test_div_matches_analytic(self, central2):
        # v = (sin x', cos y', sin z') has div = c(cos x' - sin y' + cos z')
        g = Grid(3, 32, 1.0)
        X, Y, Z = g.mesh()
        c = TWO_PI / g.length
        v = VectorField(g, np.stack([
            np.broadcast_to(np.sin(c * X), g.shape),
            np.broadcast_to(np.cos(c * Y), g.shape),
            np.broadcast_to(np.sin(c * Z), g.shape)]))
        want = c * (np.cos(c * X) - np.sin(c * Y) + np.cos(c * Z))
        got = div(v, central2)
        err = np.max(np.abs(got.values - want))
        assert err < 1e-2 * np.max(np.abs(want))  # N=32 central2 ballpark
        g2 = Grid(3, 64, 1.0)
        X, Y, Z = g2.mesh()
        v2 = VectorField(g2, np.stack([
            np.broadcast_to(np.sin(c * X), g2.shape),
            np.broadcast_to(np.cos(c * Y), g2.shape),
            np.broadcast_to(np.sin(c * Z), g2.shape)]))
        want2 = c * (np.cos(c * X) - np.sin(c * Y) + np.cos(c * Z))
        err2 = np.max(np.abs(div(v2, central2).values - want2))
        assert err2 == pytest.approx(err / 4.0, rel=0.15)  # second order

    def test_spectral_laplacian_exact_on_sine(self, spectral):
        g = Grid(1, 64, 3.0)
        f = sine_field(g, k=2)
        out = laplacian(f, spectral)
        want = -((TWO_PI * 2 / g.length) ** 2) * f.values
        assert np.max(np.abs(out.values - want)) <= 1e-12 * np.max(np.abs(want))

    def test_laplacian_annihilates_constants(self, central2):
        g = Grid(1, 32, 1.0)
        out = laplacian(ScalarField.full(g, 2.0), central2)
        assert np.max(np.abs(out.values)) < 1e-12


class TestAntisymGrad:
    def test_empty_in_1d(self, spectral):
        g = Grid(1, 16, 1.0)
        out = antisym_grad(VectorField.zeros(g), spectral)
        assert out.values.shape == (0, 0, 16)

    def test_zero_for_gradient_field(self, spectral):
        rng = np.random.default_rng(5)
        g = Grid(3, 16, 1.0)
        u = grad(random_smooth_scalar(g, rng), spectral)
        om = antisym_grad(u, spectral)
        assert np.max(np.abs(om.values)) <= 1e-12 * max(1.0, linf_norm(u))

    def test_antisymmetry_bitwise(self, central2):
        rng = np.random.default_rng(6)
        g = Grid(3, 16, 1.0)
        om = antisym_grad(random_smooth_vector(g, rng), central2)
        for j in range(3):
            for k in range(3):
                assert np.array_equal(om.values[j, k], -om.values[k, j])

    def test_matches_analytic_rotation_like(self, spectral):
        g = Grid(3, 16, 1.0)
        c = TWO_PI / g.length
        _, Y, _ = g.mesh()
        u = VectorField(g, np.stack([
            np.broadcast_to(np.sin(c * Y), g.shape),
            np.zeros(g.shape), np.zeros(g.shape)]))
        om = antisym_grad(u, spectral)
        want = c * np.cos(c * Y)  # om[0,1] = d_y u^0 - d_x u^1
        assert np.max(np.abs(om.values[0, 1] - np.broadcast_to(want, g.shape))) <= 1e-12 * c


class TestIntegrate:
    def test_constant_is_volume_weighted(self):
        g = Grid(3, 8, 2.0)
        assert integrate(ScalarField.full(g, 1.5)) == pytest.approx(1.5 * 8.0, rel=1e-15)

    def test_sine_mode_integrates_to_zero(self):
        g = Grid(1, 64, 2.0)
        assert abs(integrate(sine_field(g))) <= 1e-12

    def test_matches_compensated_summation(self):
        rng = np.random.default_rng(12)
        g = Grid(1, 512, 1.0)
        vals = rng.standard_normal(512)
        got = integrate(ScalarField(g, vals))
        want = math.fsum(vals) * g.h
        assert got == pytest.approx(want, rel=1e-13, abs=1e-15)


class TestOperatorProperties:
    @pytest.mark.parametrize("kind", ["spectral", "central2"])
    def test_linearity(self, kind):
        rng = np.random.default_rng(21)
        scheme = DiscretizationScheme(kind, False)
        g = Grid(1, 64, 1.0)
        f1 = random_smooth_scalar(g, rng)
        f2 = random_smooth_scalar(g, rng)
        a, b = 1.7, -0.3
        combo = ScalarField(g, a * f1.values + b * f2.values)
        lhs = grad(combo, scheme).values
        rhs = a * grad(f1, scheme).values + b * grad(f2, scheme).values
        assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, np.max(np.abs(rhs)))

    @pytest.mark.parametrize("kind", ["spectral", "central2", "central4"])
    def test_shift_equivariance(self, kind):
        rng = np.random.default_rng(22)
        scheme = DiscretizationScheme(kind, False)
        g = Grid(1, 64, 1.0)
        f = random_smooth_scalar(g, rng)
        shifted_then_grad = grad(shift(f, (5,)), scheme).values
        grad_then_shifted = shift(grad(f, scheme), (5,)).values
        assert np.max(np.abs(shifted_then_grad - grad_then_shifted)) <= 1e-12

    def test_spectral_exact_below_dealias_cutoff(self, spectral):
        g = Grid(1, 48, 1.0)  # cutoff index 16
        x = g.mesh()[0].ravel()
        k = 14
        f = ScalarField(g, np.sin(TWO_PI * k * x))
        kept = filter_dealias(f, spectral)
        assert np.max(np.abs(kept.values - f.values)) <= 1e-13
        out = grad(f, spectral)
        want = TWO_PI * k * np.cos(TWO_PI * k * x)
        assert np.max(np.abs(out.values[0] - want)) <= 1e-11 * np.max(np.abs(want))

    def test_dealias_removes_high_modes(self, spectral):
        g = Grid(1, 48, 1.0)
        x = g.mesh()[0].ravel()
        f = ScalarField(g, np.sin(TWO_PI * 20 * x))  # above cutoff 16
        assert linf_norm(filter_dealias(f, spectral)) <= 1e-13

    def test_vector_gradient_matches_componentwise(self, spectral):
        rng = np.random.default_rng(30)
        g = Grid(3, 16, 1.0)
        u = random_smooth_vector(g, rng)
        jac = vector_gradient(u, spectral)
        for c in range(3):
            gc = grad(u.component(c), spectral)
            assert np.max(np.abs(jac[c] - gc.values)) <= 1e-13


class TestLameSolver:
    def test_zero_rhs(self, visc):
        g = Grid(1, 32, 1.0)
        z, means = solve_lame_periodic(VectorField.zeros(g), visc)
        assert np.all(z.values == 0.0)
        assert np.all(means == 0.0)

    def test_longitudinal_mode_hand_inversion(self, visc):
        # rhs = cos(kx) e_x is longitudinal: z = -rhs / ((2mu+lam) k^2)
        g = Grid(1, 64, 2.0)
        x = g.mesh()[0].ravel()
        k = TWO_PI * 3 / g.length
        rhs_vals = np.cos(k * x).reshape(1, -1)
        z, _ = solve_lame_periodic(VectorField(g, rhs_vals.copy()), visc)
        want = -rhs_vals / ((2 * visc.mu + visc.lam) * k**2)
        assert np.max(np.abs(z.values - want)) <= 1e-12 * np.max(np.abs(want))

    @pytest.mark.parametrize("dim,n", [(1, 64), (3, 16)])
    def test_round_trip(self, visc, spectral, dim, n):
        rng = np.random.default_rng(40 + dim)
        g = Grid(dim, n, 1.0)
        rhs_f = random_smooth_vector(g, rng)
        z, means = solve_lame_periodic(rhs_f, visc)
        back = lame_operator(z, visc, spectral)
        target = rhs_f.values - means.reshape((dim,) + (1,) * dim)
        scale = max(1.0, np.max(np.abs(rhs_f.values)))
        assert np.max(np.abs(back.values - target)) <= 1e-10 * scale

    def test_mean_subtraction_reported(self, visc):
        g = Grid(1, 32, 1.0)
        vals = np.full((1, 32), 2.5)
        vals[0, :16] += 1.0  # mean 3.0
        z, means = solve_lame_periodic(VectorField(g, vals), visc)
        assert means[0] == pytest.approx(3.0, rel=1e-15)
        assert abs(np.mean(z.values)) <= 1e-14

    def test_solution_is_zero_mean(self, visc):
        rng = np.random.default_rng(50)
        g = Grid(3, 16, 1.0)
        z, _ = solve_lame_periodic(random_smooth_vector(g, rng), visc)
        assert np.max(np.abs(z.values.reshape(3, -1).mean(axis=1))) <= 1e-14
