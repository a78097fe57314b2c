"""Periodic grids, field containers, and discrete differential operators.

The box is cubic and periodic in every axis; it stands in for free space with
a constant far-field state, so initial perturbations are expected to be
localized well inside it. Fields are stored row-major, with vector components
as leading axis-major blocks; that layout is fixed so snapshot files are
bit-reproducible.

Three operator flavors are provided: `spectral` (exact for band-limited
fields, Nyquist mode zeroed in odd-order derivatives since the sampled
derivative of that mode vanishes), and `central2` / `central4` periodic
stencils of formal order 2 and 4. All operators are linear, annihilate
constants, and commute with periodic shifts.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import math
import numpy as np

from .errors import DomainError
from .eos import ViscosityParams

SCHEME_KINDS = ("spectral", "central2", "central4")


@dataclass(frozen=True)
class Grid:
    """Cubic periodic box: `dim` axes, `n` points per axis, extent `length`."""

    dim: int
    n: int
    length: float

    def __post_init__(self):
        if self.dim not in (1, 3):
            raise DomainError(f"grid dim must be 1 or 3, got {self.dim}")
        if self.n < 8:
            raise DomainError(f"n per axis must be >= 8, got {self.n}")
        if not (math.isfinite(self.length) and self.length > 0):
            raise DomainError(f"box length must be positive, got {self.length}")

    @property
    def h(self) -> float:
        return self.length / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def cell_count(self) -> int:
        return self.n**self.dim

    @property
    def volume(self) -> float:
        return self.length**self.dim

    def axis_points(self) -> np.ndarray:
        return np.arange(self.n) * self.h

    def mesh(self) -> list[np.ndarray]:
        """Per-axis coordinate arrays shaped for broadcasting."""
        x = self.axis_points()
        out = []
        for a in range(self.dim):
            shape = [1] * self.dim
            shape[a] = self.n
            out.append(x.reshape(shape))
        return out


@dataclass(frozen=True)
class DiscretizationScheme:
    kind: str = "spectral"
    dealias: bool = True

    def __post_init__(self):
        if self.kind not in SCHEME_KINDS:
            raise DomainError(f"unknown scheme kind {self.kind!r}")


def _check_values(grid: Grid, values: np.ndarray, expected_shape, what: str):
    if values.shape != expected_shape:
        raise DomainError(
            f"{what} shape {values.shape} does not match expected {expected_shape}"
        )
    if not np.all(np.isfinite(values)):
        raise DomainError(f"{what} contains non-finite entries")


@dataclass(frozen=True)
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        _check_values(self.grid, self.values, self.grid.shape, "ScalarField values")

    @staticmethod
    def full(grid: Grid, value: float) -> "ScalarField":
        return ScalarField(grid, np.full(grid.shape, float(value)))

    @staticmethod
    def from_function(grid: Grid, fn) -> "ScalarField":
        return ScalarField(grid, np.broadcast_to(fn(*grid.mesh()), grid.shape).copy())


@dataclass(frozen=True)
class VectorField:
    grid: Grid
    values: np.ndarray  # shape (dim,) + grid.shape

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        _check_values(
            self.grid, self.values, (self.grid.dim,) + self.grid.shape, "VectorField values"
        )

    @staticmethod
    def zeros(grid: Grid) -> "VectorField":
        return VectorField(grid, np.zeros((grid.dim,) + grid.shape))

    def component(self, c: int) -> ScalarField:
        return ScalarField(self.grid, self.values[c])


@dataclass(frozen=True)
class MatrixField:
    """Antisymmetric-derivative container; empty (0 x 0) in one dimension."""

    grid: Grid
    values: np.ndarray  # shape (k, k) + grid.shape with k = dim (3D) or 0 (1D)

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        k = self.values.shape[0] if self.values.ndim > 0 else 0
        _check_values(self.grid, self.values, (k, k) + self.grid.shape, "MatrixField values")


@dataclass(frozen=True)
class FlowState:
    """The evolving unknowns: liquid mass m, gas mass n, velocity u, time t."""

    m: ScalarField
    n: ScalarField
    u: VectorField
    t: float

    def __post_init__(self):
        if not (self.m.grid == self.n.grid == self.u.grid):
            raise DomainError("FlowState fields must share one grid")

    @property
    def grid(self) -> Grid:
        return self.m.grid

    def min_masses(self) -> tuple[float, float]:
        return float(self.m.values.min()), float(self.n.values.min())


@lru_cache(maxsize=64)
def _spectral_workspace(grid: Grid):
    """Precomputed wavenumber arrays for a grid.

    kd: per-axis first-derivative wavenumbers (Nyquist zeroed), broadcastable.
    k2: full |k|^2 for the Laplacian.
    mask: 2/3-rule dealias mask (True = keep).
    """
    n = grid.n
    scale = 2.0 * np.pi / grid.length
    idx = np.fft.fftfreq(n, d=1.0 / n)  # integer mode numbers
    k_full = scale * idx
    k_deriv = k_full.copy()
    if n % 2 == 0:
        k_deriv[n // 2] = 0.0
    cutoff = n // 3
    keep = np.abs(idx) <= cutoff

    kd, k2_parts, masks = [], [], []
    for a in range(grid.dim):
        shape = [1] * grid.dim
        shape[a] = n
        kd.append(k_deriv.reshape(shape))
        k2_parts.append((k_full**2).reshape(shape))
        masks.append(keep.reshape(shape))
    k2 = k2_parts[0].copy() if grid.dim == 1 else sum(k2_parts)
    mask = masks[0]
    for ma in masks[1:]:
        mask = mask & ma
    return kd, np.broadcast_to(k2, grid.shape), np.broadcast_to(mask, grid.shape)


def _require_central_support(grid: Grid, scheme: DiscretizationScheme):
    if scheme.kind == "central4" and grid.n < 16:
        raise DomainError("central4 requires at least 16 points per axis")


def _deriv_axis(grid: Grid, values: np.ndarray, axis: int, scheme: DiscretizationScheme):
    """First derivative along one spatial axis of a raw array."""
    _require_central_support(grid, scheme)
    if scheme.kind == "spectral":
        kd, _, _ = _spectral_workspace(grid)
        spatial_axes = tuple(range(values.ndim - grid.dim, values.ndim))
        fhat = np.fft.fftn(values, axes=spatial_axes)
        return np.fft.ifftn(1j * kd[axis] * fhat, axes=spatial_axes).real
    h = grid.h
    ax = values.ndim - grid.dim + axis
    if scheme.kind == "central2":
        return (np.roll(values, -1, ax) - np.roll(values, 1, ax)) / (2.0 * h)
    # paired differences so constants map to exactly zero
    near = np.roll(values, -1, ax) - np.roll(values, 1, ax)
    far = np.roll(values, -2, ax) - np.roll(values, 2, ax)
    return (8.0 * near - far) / (12.0 * h)


def _laplacian_raw(grid: Grid, values: np.ndarray, scheme: DiscretizationScheme):
    _require_central_support(grid, scheme)
    if scheme.kind == "spectral":
        _, k2, _ = _spectral_workspace(grid)
        spatial_axes = tuple(range(values.ndim - grid.dim, values.ndim))
        fhat = np.fft.fftn(values, axes=spatial_axes)
        return np.fft.ifftn(-k2 * fhat, axes=spatial_axes).real
    h2 = grid.h**2
    out = np.zeros_like(values)
    for a in range(grid.dim):
        ax = values.ndim - grid.dim + a
        if scheme.kind == "central2":
            out += (np.roll(values, -1, ax) - 2.0 * values + np.roll(values, 1, ax)) / h2
        else:
            near = np.roll(values, -1, ax) + np.roll(values, 1, ax)
            far = np.roll(values, -2, ax) + np.roll(values, 2, ax)
            out += (16.0 * near - far - 30.0 * values) / (12.0 * h2)
    return out


def grad(f: ScalarField, scheme: DiscretizationScheme) -> VectorField:
    """Discrete periodic gradient."""
    g = f.grid
    out = np.empty((g.dim,) + g.shape)
    if scheme.kind == "spectral":
        kd, _, _ = _spectral_workspace(g)
        fhat = np.fft.fftn(f.values)
        for a in range(g.dim):
            out[a] = np.fft.ifftn(1j * kd[a] * fhat).real
        return VectorField(g, out)
    for a in range(g.dim):
        out[a] = _deriv_axis(g, f.values, a, scheme)
    return VectorField(g, out)


def div(v: VectorField, scheme: DiscretizationScheme) -> ScalarField:
    """Discrete periodic divergence."""
    g = v.grid
    if scheme.kind == "spectral":
        kd, _, _ = _spectral_workspace(g)
        spatial_axes = tuple(range(1, 1 + g.dim))
        fhat = np.fft.fftn(v.values, axes=spatial_axes)
        acc = 1j * kd[0] * fhat[0]
        for a in range(1, g.dim):
            acc += 1j * kd[a] * fhat[a]
        return ScalarField(g, np.fft.ifftn(acc).real)
    out = _deriv_axis(g, v.values[0], 0, scheme)
    for a in range(1, g.dim):
        out += _deriv_axis(g, v.values[a], a, scheme)
    return ScalarField(g, out)


def laplacian(f, scheme: DiscretizationScheme):
    """Discrete periodic Laplacian of a scalar or vector field (same rank out)."""
    if isinstance(f, ScalarField):
        return ScalarField(f.grid, _laplacian_raw(f.grid, f.values, scheme))
    if isinstance(f, VectorField):
        return VectorField(f.grid, _laplacian_raw(f.grid, f.values, scheme))
    raise DomainError("laplacian expects a ScalarField or VectorField")


def antisym_grad(u: VectorField, scheme: DiscretizationScheme) -> MatrixField:
    """Antisymmetric velocity-derivative matrix w[j,k] = d_k u^j - d_j u^k.

    Each independent entry is computed once and mirrored, so antisymmetry is
    bitwise. In 1D the matrix is empty.
    """
    g = u.grid
    if g.dim == 1:
        return MatrixField(g, np.zeros((0, 0) + g.shape))
    out = np.zeros((g.dim, g.dim) + g.shape)
    if scheme.kind == "spectral":
        kd, _, _ = _spectral_workspace(g)
        spatial_axes = tuple(range(1, 1 + g.dim))
        fhat = np.fft.fftn(u.values, axes=spatial_axes)
        for j in range(g.dim):
            for k in range(j + 1, g.dim):
                w = np.fft.ifftn(1j * (kd[k] * fhat[j] - kd[j] * fhat[k])).real
                out[j, k] = w
                out[k, j] = -w
        return MatrixField(g, out)
    for j in range(g.dim):
        for k in range(j + 1, g.dim):
            w = _deriv_axis(g, u.values[j], k, scheme) - _deriv_axis(
                g, u.values[k], j, scheme
            )
            out[j, k] = w
            out[k, j] = -w
    return MatrixField(g, out)


def vector_gradient(u: VectorField, scheme: DiscretizationScheme) -> np.ndarray:
    """Full velocity Jacobian as a raw array: out[c, a] = d_a u^c."""
    g = u.grid
    out = np.empty((g.dim, g.dim) + g.shape)
    if scheme.kind == "spectral":
        kd, _, _ = _spectral_workspace(g)
        spatial_axes = tuple(range(1, 1 + g.dim))
        fhat = np.fft.fftn(u.values, axes=spatial_axes)
        for c in range(g.dim):
            for a in range(g.dim):
                out[c, a] = np.fft.ifftn(1j * kd[a] * fhat[c]).real
        return out
    for c in range(g.dim):
        for a in range(g.dim):
            out[c, a] = _deriv_axis(g, u.values[c], a, scheme)
    return out


def integrate(f: ScalarField) -> float:
    """Box integral: h^dim times the lattice sum (exact periodic trapezoid)."""
    return float(np.sum(f.values)) * f.grid.h**f.grid.dim


def l2_norm(f) -> float:
    """Continuum-normalized L2 norm, components summed for vectors/matrices."""
    g = f.grid
    return math.sqrt(float(np.sum(f.values**2)) * g.h**g.dim)


def linf_norm(f) -> float:
    if f.values.size == 0:
        return 0.0
    return float(np.max(np.abs(f.values)))


def filter_dealias(f, scheme: DiscretizationScheme):
    """2/3-rule spectral truncation of a field (identity for central schemes).

    Applied to quadratic products formed in physical space to suppress
    aliasing of the transport nonlinearities.
    """
    if scheme.kind != "spectral" or not scheme.dealias:
        return f
    g = f.grid
    _, _, mask = _spectral_workspace(g)
    spatial_axes = tuple(range(f.values.ndim - g.dim, f.values.ndim))
    fhat = np.fft.fftn(f.values, axes=spatial_axes)
    vals = np.fft.ifftn(np.where(mask, fhat, 0.0), axes=spatial_axes).real
    return type(f)(g, vals)


def lame_operator(z: VectorField, visc: ViscosityParams,
                  scheme: DiscretizationScheme) -> VectorField:
    """Forward operator mu*Lap(z) + (lam+mu)*grad(div z)."""
    g = z.grid
    dz = div(z, scheme)
    out = visc.mu * _laplacian_raw(g, z.values, scheme)
    for a in range(g.dim):
        out[a] += (visc.lam + visc.mu) * _deriv_axis(g, dz.values, a, scheme)
    return VectorField(g, out)


def solve_lame_periodic(
    rhs: VectorField, visc: ViscosityParams
) -> tuple[VectorField, np.ndarray]:
    """Solve mu*Lap(z) + (lam+mu)*grad(div z) = rhs on the periodic box.

    The torus problem is solvable only for zero-mean data, so the per-component
    means are subtracted first and returned alongside the zero-mean solution.
    Inversion is per wavenumber against exactly the discrete forward symbol
    (full k^2 in the Laplacian part, Nyquist-zeroed k in the grad-div part),
    so applying the forward operator recovers the mean-corrected data to
    rounding for any input.
    """
    g = rhs.grid
    kd, k2, _ = _spectral_workspace(g)
    spatial_axes = tuple(range(1, 1 + g.dim))
    means = rhs.values.reshape(g.dim, -1).mean(axis=1)
    fhat = np.fft.fftn(rhs.values - means.reshape((g.dim,) + (1,) * g.dim),
                       axes=spatial_axes)

    mu, lam = visc.mu, visc.lam
    # symbol S = -(mu*k2*I + (lam+mu) kd kd^T); invert by Sherman-Morrison
    kd_full = [np.broadcast_to(kd[a], g.shape) for a in range(g.dim)]
    kd2 = sum(k * k for k in kd_full)
    with np.errstate(invalid="ignore", divide="ignore"):
        inv_diag = np.where(k2 > 0, 1.0 / np.where(k2 > 0, mu * k2, 1.0), 0.0)
        denom = mu * k2 * (mu * k2 + (lam + mu) * kd2)
        corr = np.where(k2 > 0, (lam + mu) / np.where(k2 > 0, denom, 1.0), 0.0)
    k_dot_f = sum(kd_full[a] * fhat[a] for a in range(g.dim))
    zhat = np.empty_like(fhat)
    for a in range(g.dim):
        zhat[a] = -(inv_diag * fhat[a] - corr * k_dot_f * kd_full[a])
    z = np.fft.ifftn(zhat, axes=spatial_axes).real
    return VectorField(g, z), means


def shift(f, offsets: tuple[int, ...]):
    """Periodic lattice translation of a field by whole cells (test helper)."""
    g = f.grid
    vals = f.values
    for a, off in enumerate(offsets):
        vals = np.roll(vals, off, axis=vals.ndim - g.dim + a)
    return type(f)(g, vals)
