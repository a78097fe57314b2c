"""Viscous liquid-gas two-phase flow simulator and analysis diagnostics."""

from .eos import (
    AnalysisParams,
    EosParams,
    ViscosityParams,
    potential_energy_g,
    pressure,
    pressure_grad,
    pressure_hess_nn,
)
from .fields import (
    DiscretizationScheme,
    FlowState,
    Grid,
    MatrixField,
    ScalarField,
    VectorField,
    antisym_grad,
    div,
    grad,
    integrate,
    laplacian,
    solve_lame_periodic,
)

__all__ = [
    "AnalysisParams",
    "EosParams",
    "ViscosityParams",
    "potential_energy_g",
    "pressure",
    "pressure_grad",
    "pressure_hess_nn",
    "DiscretizationScheme",
    "FlowState",
    "Grid",
    "MatrixField",
    "ScalarField",
    "VectorField",
    "antisym_grad",
    "div",
    "grad",
    "integrate",
    "laplacian",
    "solve_lame_periodic",
]
