"""Madelung decomposition psi = sqrt(rho) exp(i S / hbar).

The total stochastic momentum is split as p = p_c + p_s with the current
part p_c = dS/dx and the osmotic part p_s = (hbar/2) rho'/rho.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .numerics import Grid, PhysicalParams, derivative, integrate, norm_squared, second_derivative

DEFAULT_RHO_FLOOR = 1e-12
DEFAULT_ACCURACY = 8
NORM_TOL = 1e-6
_LOG_TINY = 1e-300


class NodeError(ValueError):
    """The density vanishes inside the support (a wavefunction node)."""


@dataclass(frozen=True)
class MadelungFields:
    grid: Grid
    rho: np.ndarray
    S: np.ndarray
    p_c: np.ndarray
    p_s: np.ndarray
    v_q: np.ndarray
    mask: np.ndarray  # True where rho >= rho_floor * max(rho)
    excluded_mass: float
    params: PhysicalParams

    @property
    def p(self) -> np.ndarray:
        return self.p_c + self.p_s

    @property
    def current_velocity(self) -> np.ndarray:
        return self.p_c / self.params.mass

    @property
    def osmotic_velocity(self) -> np.ndarray:
        return self.p_s / self.params.mass

    @property
    def forward_velocity(self) -> np.ndarray:
        return self.p / self.params.mass

    @property
    def S_s(self) -> np.ndarray:
        """Density-dependent action (hbar/2) ln(l rho); zero outside the mask."""
        out = np.zeros_like(self.rho)
        out[self.mask] = 0.5 * self.params.hbar * np.log(self.params.l * self.rho[self.mask])
        return out


def support_mask(rho: np.ndarray, rho_floor: float) -> np.ndarray:
    """Mask of points above the relative floor; rejects interior gaps."""
    peak = float(np.max(rho))
    if not peak > 0:
        raise ValueError("density is zero everywhere")
    mask = rho >= rho_floor * peak
    idx = np.flatnonzero(mask)
    if idx.size and idx[-1] - idx[0] + 1 != idx.size:
        gap = idx[0] + int(np.argmin(mask[idx[0] : idx[-1] + 1]))
        raise NodeError(f"density drops below the floor inside its support near index {gap}")
    return mask


def _log_density(rho: np.ndarray) -> np.ndarray:
    return np.log(np.maximum(rho, _LOG_TINY))


def quantum_potential(
    rho: np.ndarray,
    grid: Grid,
    p: PhysicalParams | None = None,
    rho_floor: float = DEFAULT_RHO_FLOOR,
    accuracy: int = DEFAULT_ACCURACY,
) -> np.ndarray:
    """V_q = (hbar^2/8m) [(rho'/rho)^2 - 2 rho''/rho], zero outside the mask.

    Evaluated through L = ln rho as -(hbar^2/8m) (L'^2 + 2 L''), which is the
    same expression but exact on quadratic L (Gaussian densities).
    """
    p = p or PhysicalParams()
    rho = grid.check(rho)
    if np.any(rho < 0):
        raise ValueError("density must be nonnegative")
    mask = support_mask(rho, rho_floor)
    L = _log_density(rho)
    dL = derivative(L, grid, accuracy)
    d2L = second_derivative(L, grid, accuracy)
    vq = -(p.hbar**2 / (8.0 * p.mass)) * (dL * dL + 2.0 * d2L)
    return np.where(mask, vq, 0.0)


def decompose(
    psi: np.ndarray,
    grid: Grid,
    p: PhysicalParams | None = None,
    rho_floor: float = DEFAULT_RHO_FLOOR,
    accuracy: int = DEFAULT_ACCURACY,
) -> MadelungFields:
    """Split a normalized wavefunction into (rho, S, p_c, p_s, V_q).

    p_c is hbar times the derivative of the locally unwrapped phase (every
    increment between neighbours is reduced to (-pi, pi], so no global
    unwrapping is involved). p_s is (hbar/2) d(ln rho)/dx. S is the running
    integral of the phase gradient from the grid midpoint, so S(mid) = 0.
    Nodes (density gaps or phase jumps above pi/2 between neighbours inside
    the support) raise :class:`NodeError`.
    """
    p = p or PhysicalParams()
    psi = grid.check(psi)
    if not np.all(np.isfinite(psi)):
        raise ValueError("wavefunction contains NaN or inf")
    if not 1e-300 <= rho_floor <= 1e-6:
        raise ValueError("rho_floor must lie in [1e-300, 1e-6]")
    nrm = norm_squared(psi, grid)
    if abs(nrm - 1.0) > NORM_TOL:
        raise ValueError(f"wavefunction is not normalized (norm^2 = {nrm:.6g})")

    rho = np.abs(psi) ** 2
    mask = support_mask(rho, rho_floor)

    phase = np.unwrap(np.angle(psi))
    jumps = np.abs(np.diff(phase)) > 0.5 * np.pi
    if np.any(jumps & mask[1:] & mask[:-1]):
        k = int(np.flatnonzero(jumps & mask[1:] & mask[:-1])[0])
        raise NodeError(f"phase jumps by more than pi/2 between x={grid.x[k]:.6g} and the next point "
                        "(a node, or a grid too coarse for the momentum)")
    grad = p.hbar * derivative(phase, grid, accuracy)
    p_c = np.where(mask, grad, 0.0)
    L = _log_density(rho)
    p_s = np.where(mask, 0.5 * p.hbar * derivative(L, grid, accuracy), 0.0)
    d2L = second_derivative(L, grid, accuracy)
    dL = 2.0 * p_s / p.hbar
    v_q = np.where(mask, -(p.hbar**2 / (8.0 * p.mass)) * (dL * dL + 2.0 * d2L), 0.0)

    # integrate the unmasked gradient so S keeps the right phase in the tails
    cum = cumulative_trapezoid(grad, dx=grid.dx, initial=0.0)
    S = cum - cum[grid.mid]

    excluded = float(integrate(np.where(mask, 0.0, rho), grid))
    return MadelungFields(grid, rho, S, p_c, p_s, v_q, mask, excluded, p)


def reconstruct_psi(mf: MadelungFields) -> np.ndarray:
    """psi = sqrt(rho) exp(i S / hbar)."""
    if np.any(mf.rho < 0):
        raise ValueError("density must be nonnegative")
    support_mask(mf.rho, DEFAULT_RHO_FLOOR)
    return np.sqrt(mf.rho) * np.exp(1j * mf.S / mf.params.hbar)

