"""Mixture pressure law and potential energy of the liquid-gas model.

Both phases share one pressure P(m, n), obtained by eliminating the phase
densities between the liquid law rho_l = rho_l0 + (P - P_l0)/a_l^2 and the gas
law rho_g = P/a_g^2, where m and n are the liquid and gas masses (volume
fraction times phase density). The elimination gives the closed form

    P(m, n) = C0 * (-b + sqrt(b^2 + c)),
    b = k0 - m - a0*n,   c = 4*k0*a0*n,

with C0 = a_l^2/2, k0 = rho_l0 - P_l0/a_l^2 and a0 = (a_g/a_l)^2. P is
increasing in both arguments for m, n > 0, and its second n-derivative is
negative and blows up like n^{-3/2} approaching {m = k0, n = 0}; that set is
the degeneracy boundary all solver states must stay away from.

The potential energy density G(m, n/m) measures the energy of a state
relative to the far-field equilibrium (m_tilde, n_tilde) and vanishes there;
it is a one-dimensional integral of the pressure along the constant-ratio ray
and is evaluated by adaptive quadrature.

All functions are pure; scalar inputs return floats, array inputs arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import DegeneracyError, DomainError, QuadratureError

# b^2 + c below this triggers DegeneracyError in derivative evaluations.
DEGENERACY_FLOOR = 1e-30


@dataclass(frozen=True)
class EosParams:
    """Physical constants of the pressure law plus the far-field state.

    Derived constants: c0 = a_l^2/2, k0 = rho_l0 - P_l0/a_l^2 (must be
    positive), a0 = (a_g/a_l)^2.
    """

    a_l: float
    a_g: float
    rho_l0: float
    P_l0: float
    m_tilde: float
    n_tilde: float

    def __post_init__(self):
        vals = (self.a_l, self.a_g, self.rho_l0, self.P_l0, self.m_tilde, self.n_tilde)
        if not all(math.isfinite(v) for v in vals):
            raise DomainError("EosParams fields must be finite")
        if self.a_l <= 0 or self.a_g <= 0:
            raise DomainError("sonic speeds a_l, a_g must be positive")
        if self.rho_l0 <= 0:
            raise DomainError("reference density rho_l0 must be positive")
        if self.P_l0 < 0:
            raise DomainError("reference pressure P_l0 must be nonnegative")
        if self.k0 <= 0:
            raise DomainError(
                f"k0 = rho_l0 - P_l0/a_l^2 = {self.k0:.6e} must be positive"
            )
        if self.m_tilde <= 0 or self.n_tilde <= 0:
            raise DomainError("far-field masses m_tilde, n_tilde must be positive")

    @property
    def c0(self) -> float:
        return 0.5 * self.a_l**2

    @property
    def k0(self) -> float:
        return self.rho_l0 - self.P_l0 / self.a_l**2

    @property
    def a0(self) -> float:
        return (self.a_g / self.a_l) ** 2


@dataclass(frozen=True)
class ViscosityParams:
    """Shear viscosity mu and second viscosity lam.

    Requires mu > 0 and 2*mu + 3*lam >= 0, which implies mu + lam > 0 and
    2*mu + lam > 0 (both are checked consequences used by the elliptic
    solver).
    """

    mu: float
    lam: float

    def __post_init__(self):
        if not (math.isfinite(self.mu) and math.isfinite(self.lam)):
            raise DomainError("viscosities must be finite")
        if self.mu <= 0:
            raise DomainError(f"mu = {self.mu} must be positive")
        if 2.0 * self.mu + 3.0 * self.lam < 0:
            raise DomainError(
                f"2*mu + 3*lam = {2 * self.mu + 3 * self.lam:.6e} must be >= 0"
            )
        # consequence of the two constraints above; assert as a sanity check
        assert self.mu + self.lam > 0


@dataclass(frozen=True)
class AnalysisParams:
    """Reporting parameters of the smallness diagnostics.

    q is validated against the viscosities (q in (1, 4/3), q^2 < 4*mu/(mu+lam)
    and lam < 3*mu) but is otherwise inert; theta in (0, 1) sets the exponent
    of the smallness report threshold 2*E0^theta.
    """

    q: float
    theta: float

    def __post_init__(self):
        if not (1.0 < self.q < 4.0 / 3.0):
            raise DomainError(f"q = {self.q} not in (1, 4/3)")
        if not (0.0 < self.theta < 1.0):
            raise DomainError(f"theta = {self.theta} not in (0, 1)")

    @staticmethod
    def validated(q: float, theta: float, visc: ViscosityParams) -> "AnalysisParams":
        problems = []
        if not (1.0 < q < 4.0 / 3.0):
            problems.append(f"q = {q} not in (1, 4/3)")
        if not (visc.lam < 3.0 * visc.mu):
            problems.append(f"lam = {visc.lam} must be < 3*mu = {3 * visc.mu}")
        elif not (q * q < 4.0 * visc.mu / (visc.mu + visc.lam)):
            problems.append(
                f"q^2 = {q * q:.6f} must be < 4*mu/(mu+lam) = "
                f"{4 * visc.mu / (visc.mu + visc.lam):.6f}"
            )
        if not (0.0 < theta < 1.0):
            problems.append(f"theta = {theta} not in (0, 1)")
        if problems:
            raise DomainError("; ".join(problems))
        return AnalysisParams(q=q, theta=theta)

    @staticmethod
    def default_q(visc: ViscosityParams) -> float:
        """Midpoint of the admissible q interval for the given viscosities."""
        upper = min(4.0 / 3.0, math.sqrt(4.0 * visc.mu / (visc.mu + visc.lam)))
        return 0.5 * (1.0 + upper)


def _as_arrays(m, n):
    ma = np.asarray(m, dtype=float)
    na = np.asarray(n, dtype=float)
    if not (np.all(np.isfinite(ma)) and np.all(np.isfinite(na))):
        raise DomainError("non-finite m or n passed to an EOS operation")
    scalar = ma.ndim == 0 and na.ndim == 0
    return ma, na, scalar


def _b_c(m, n, p: EosParams):
    b = p.k0 - m - p.a0 * n
    c = 4.0 * p.k0 * p.a0 * n
    return b, c


def pressure(m, n, p: EosParams):
    """Common pressure P(m, n) of the two phases.

    Accepts m >= 0, n >= 0. Evaluated in the cancellation-free rearrangement
    P = C0*c/(b + sqrt(b^2+c)) for b >= 0, so the result is nonnegative by
    construction and exactly zero at n = 0, m <= k0.
    """
    ma, na, scalar = _as_arrays(m, n)
    if np.any(ma < 0) or np.any(na < 0):
        raise DomainError("pressure requires m >= 0 and n >= 0")
    b, c = _b_c(ma, na, p)
    # overflow on extreme states propagates as inf; callers check finiteness
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        root = np.sqrt(b * b + c)
        denom = b + root
        # b >= 0: use c/(b+root); denom == 0 only at (m=k0, n=0) where P = 0.
        stable = np.where(denom > 0.0, c / np.where(denom > 0.0, denom, 1.0), 0.0)
        vals = p.c0 * np.where(b >= 0.0, stable, -b + root)
    return float(vals) if scalar else vals


def pressure_grad(m, n, p: EosParams):
    """Partial derivatives (P_m, P_n); both strictly positive for m, n > 0.

    P_m = C0*(1 - b/sqrt(b^2+c)),
    P_n = C0*(a0 + a0*(m + a0*n + k0)/sqrt(b^2+c)).

    Raises DegeneracyError if b^2 + c falls below the floor, which happens
    only approaching {m = k0, n = 0}.
    """
    ma, na, scalar = _as_arrays(m, n)
    if np.any(ma <= 0) or np.any(na <= 0):
        raise DomainError("pressure_grad requires m > 0 and n > 0")
    b, c = _b_c(ma, na, p)
    disc = b * b + c
    _check_degeneracy(disc, ma, na, "pressure_grad")
    root = np.sqrt(disc)
    p_m = p.c0 * (1.0 - b / root)
    p_n = p.c0 * (p.a0 + p.a0 * (ma + p.a0 * na + p.k0) / root)
    if scalar:
        return float(p_m), float(p_n)
    return p_m, p_n


def pressure_hess_nn(m, n, p: EosParams):
    """Second derivative d^2P/dn^2; strictly negative for m, n > 0.

    Closed form -4*C0*a0^2*k0*m / (b^2 + c)^{3/2}; the magnitude diverges
    like n^{-3/2} approaching {m = k0, n = 0}.
    """
    ma, na, scalar = _as_arrays(m, n)
    if np.any(ma <= 0) or np.any(na <= 0):
        raise DomainError("pressure_hess_nn requires m > 0 and n > 0")
    b, c = _b_c(ma, na, p)
    disc = b * b + c
    _check_degeneracy(disc, ma, na, "pressure_hess_nn")
    vals = -4.0 * p.c0 * p.a0**2 * p.k0 * ma / disc**1.5
    return float(vals) if scalar else vals


def _check_degeneracy(disc, ma, na, opname: str):
    bad = disc < DEGENERACY_FLOOR
    if np.any(bad):
        idx = int(np.argmax(bad))
        m_bad = float(np.ravel(np.broadcast_to(ma, np.shape(bad)))[idx])
        n_bad = float(np.ravel(np.broadcast_to(na, np.shape(bad)))[idx])
        raise DegeneracyError(
            f"{opname}: b^2+c = {float(np.ravel(disc)[idx]):.3e} below floor "
            f"{DEGENERACY_FLOOR:.0e} at (m={m_bad!r}, n={n_bad!r})"
        )


def _ray_tail(m, n, p: EosParams):
    """The two non-integral terms of G, with the ray argument ordered so that
    (n/m)*m_tilde evaluates to exactly n when m == m_tilde."""
    ray_n = n * (p.m_tilde / m)
    p_tilde = pressure(p.m_tilde, p.n_tilde, p)
    return (m / p.m_tilde) * (p_tilde - pressure(p.m_tilde, ray_n, p)), p_tilde


def potential_energy_g(
    m: float,
    n: float,
    p: EosParams,
    abs_tol: float = 1e-12,
    max_subdiv: int = 10_000,
) -> float:
    """Potential energy density G relative to the far-field state.

    G(m, n/m) = m * int_{m_tilde}^{m} [P(s, (n/m)s) - P~] / s^2 ds
                + (m/m_tilde) * (P~ - P(m_tilde, (n/m)*m_tilde)),

    with P~ = P(m_tilde, n_tilde). Exactly zero at the far-field state (the
    integral is empty and the tail cancels, no quadrature performed). The
    integral uses adaptive Gauss-Kronrod quadrature to the given absolute
    tolerance; non-convergence raises QuadratureError with the achieved
    estimate. No sign is asserted for ratios n/m away from n_tilde/m_tilde.
    """
    if not (math.isfinite(m) and math.isfinite(n)):
        raise DomainError("non-finite m or n passed to potential_energy_g")
    if m <= 0 or n < 0:
        raise DomainError("potential_energy_g requires m > 0 and n >= 0")
    tail, p_tilde = _ray_tail(m, n, p)
    if m == p.m_tilde:
        return tail
    s_ratio = n / m

    def integrand(s):
        return (pressure(s, s_ratio * s, p) - p_tilde) / (s * s)

    out = integrate.quad(
        integrand, p.m_tilde, m, epsabs=abs_tol, epsrel=1e-12, limit=max_subdiv,
        full_output=True,
    )
    value, abserr = out[0], out[1]
    # a warning with the tolerance still met (e.g. an ulp-wide interval hitting
    # the roundoff limit) is convergence, not failure
    if len(out) > 3 and abserr > abs_tol:
        raise QuadratureError(f"potential_energy_g quadrature: {out[3]}", abserr)
    return m * value + tail


def potential_energy_field(
    m: np.ndarray,
    n: np.ndarray,
    p: EosParams,
    abs_tol: float = 1e-12,
) -> np.ndarray:
    """G evaluated at every cell of a pair of mass arrays.

    Same formula as potential_energy_g, but the integrals for all cells are
    mapped onto the shared parameter t in [0, 1] via s = m_tilde + t*(m -
    m_tilde) and integrated together with adaptive vector quadrature
    (max-norm error control), which shares subdivision work across cells.
    """
    ma, na, _ = _as_arrays(m, n)
    if np.any(ma <= 0) or np.any(na < 0):
        raise DomainError("potential_energy_field requires m > 0 and n >= 0")
    shape = ma.shape
    mf = ma.ravel()
    nf = na.ravel()
    delta = mf - p.m_tilde
    ratio = nf / mf
    p_tilde = pressure(p.m_tilde, p.n_tilde, p)

    def integrand(t):
        s = p.m_tilde + t * delta
        return delta * (pressure(s, ratio * s, p) - p_tilde) / (s * s)

    value, err = integrate.quad_vec(integrand, 0.0, 1.0, epsabs=abs_tol,
                                    epsrel=1e-12, norm="max")
    # the per-cell target is abs_tol; only estimates far beyond it (i.e. true
    # non-convergence, not a near miss on extreme states) are failures
    if err > max(1e4 * abs_tol, 1e-8):
        raise QuadratureError("potential_energy_field quadrature", err)
    tail, _ = _ray_tail(mf, nf, p)
    return (mf * value + tail).reshape(shape)
