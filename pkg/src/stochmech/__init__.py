"""Stochastic-momentum analysis of Gaussian states of the harmonic oscillator.

Madelung decomposition of a wavefunction into current and osmotic momenta,
grid and closed-form moment tables, uncertainty-relation checks, Bohm
equation residuals, a Crank-Nicolson cross-check and Nelson diffusion
Monte Carlo.
"""

from .madelung import MadelungFields, NodeError, decompose, quantum_potential, reconstruct_psi
from .moments import URRecord, URReport, grid_moments, r_p_from_moments, ur_report
from .numerics import Grid, GridError, PhysicalParams, derivative, integrate, make_grid, second_derivative
from .states import (
    FrequencyProfile,
    MomentReport,
    SqueezedStateParams,
    analytic_moments,
    coherent_params,
    eval_psi,
    evolve_params,
    r_p_closed_form,
    squeeze_params,
)

__version__ = "0.1.0"

__all__ = [
    "FrequencyProfile",
    "Grid",
    "GridError",
    "MadelungFields",
    "MomentReport",
    "NodeError",
    "PhysicalParams",
    "SqueezedStateParams",
    "URRecord",
    "URReport",
    "analytic_moments",
    "coherent_params",
    "decompose",
    "derivative",
    "eval_psi",
    "evolve_params",
    "grid_moments",
    "integrate",
    "make_grid",
    "quantum_potential",
    "r_p_closed_form",
    "r_p_from_moments",
    "reconstruct_psi",
    "second_derivative",
    "squeeze_params",
    "ur_report",
]
