"""Uniform grids, quadrature and finite-difference derivatives.

Fields are plain numpy arrays sampled on a :class:`Grid`; every routine here
checks that the array length matches ``grid.n``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, lru_cache

import numpy as np
from scipy import integrate as _integrate

MIN_POINTS = 16
EDGE_DENSITY_RATIO = 1e-14


class GridError(ValueError):
    """Raised for invalid grids or fields that do not match their grid."""


@dataclass(frozen=True)
class PhysicalParams:
    """Unit system: reduced Planck constant, mass and reference frequency."""

    hbar: float = 1.0
    mass: float = 1.0
    omega0: float = 1.0

    def __post_init__(self) -> None:
        for name in ("hbar", "mass", "omega0"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")

    @property
    def l(self) -> float:
        """Oscillator length sqrt(hbar / (mass * omega0))."""
        return math.sqrt(self.hbar / (self.mass * self.omega0))

    @property
    def diffusion(self) -> float:
        """Nelson diffusion coefficient hbar / (2 mass)."""
        return self.hbar / (2.0 * self.mass)


@dataclass(frozen=True)
class Grid:
    """Uniform mesh on [x_min, x_max] with both endpoints included."""

    x_min: float
    x_max: float
    n: int

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x_min) and math.isfinite(self.x_max)):
            raise GridError("grid bounds must be finite")
        if not self.x_max > self.x_min:
            raise GridError(f"degenerate interval [{self.x_min}, {self.x_max}]")
        if int(self.n) != self.n or self.n < MIN_POINTS:
            raise GridError(f"need an integer n >= {MIN_POINTS}, got {self.n!r}")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n - 1)

    @cached_property
    def x(self) -> np.ndarray:
        x = np.linspace(self.x_min, self.x_max, self.n)
        x.flags.writeable = False
        return x

    @property
    def mid(self) -> int:
        """Index of the grid midpoint (lower one for even n)."""
        return (self.n - 1) // 2

    def check(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f)
        if f.shape != (self.n,):
            raise GridError(f"field has shape {f.shape}, grid expects ({self.n},)")
        return f


def make_grid(x_min: float, x_max: float, n: int) -> Grid:
    return Grid(float(x_min), float(x_max), int(n))


def integrate(f: np.ndarray, grid: Grid, rule: str = "trapezoid") -> float | complex:
    """Quadrature of sampled ``f`` over the whole grid.

    ``rule`` is ``"trapezoid"`` (default) or ``"simpson"``. For the Gaussian
    states used here both are accurate to round-off once the tails vanish.
    """
    f = grid.check(f)
    # unit-spacing sum scaled last, so f = 1 integrates to the length exactly
    scale = (grid.x_max - grid.x_min) / (grid.n - 1)
    if rule == "trapezoid":
        return _integrate.trapezoid(f) * scale
    if rule == "simpson":
        return _integrate.simpson(f) * scale
    raise ValueError(f"unknown quadrature rule {rule!r}")


@lru_cache(maxsize=None)
def fd_weights(offsets: tuple[int, ...], deriv: int) -> tuple[float, ...]:
    """Finite-difference weights for ``deriv``-th derivative at offset 0.

    Fornberg's recursion evaluated in exact rational arithmetic, so one-sided
    high-order stencils do not lose digits to an ill-conditioned solve.
    """
    x = [Fraction(o) for o in offsets]
    n = len(x)
    if deriv >= n:
        raise ValueError("stencil too small for requested derivative")
    c = [[Fraction(0)] * (deriv + 1) for _ in range(n)]
    c[0][0] = Fraction(1)
    c1 = Fraction(1)
    c4 = x[0]
    for i in range(1, n):
        mn = min(i, deriv)
        c2 = Fraction(1)
        c5 = c4
        c4 = x[i]
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i][k] = c1 * (k * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2
            for k in range(mn, 0, -1):
                c[j][k] = (c4 * c[j][k] - k * c[j][k - 1]) / c3
            c[j][0] = c4 * c[j][0] / c3
        c1 = c2
    return tuple(float(row[deriv]) for row in c)


def _differentiate(f: np.ndarray, grid: Grid, deriv: int, accuracy: int) -> np.ndarray:
    f = grid.check(f)
    if accuracy < 2 or accuracy % 2:
        raise ValueError(f"accuracy must be an even integer >= 2, got {accuracy}")
    half = accuracy // 2
    width = accuracy + deriv  # one-sided stencil size for the same order
    n = grid.n
    if n < max(5, width + 1):
        raise GridError(f"need at least {max(5, width + 1)} points for this stencil")

    out = np.zeros(n, dtype=np.result_type(f.dtype, np.float64))
    central = fd_weights(tuple(range(-half, half + 1)), deriv)
    for k, w in zip(range(-half, half + 1), central):
        out[half : n - half] += w * f[half + k : n - half + k]
    for i in range(half):
        left = fd_weights(tuple(range(-i, width - i)), deriv)
        out[i] = np.dot(left, f[:width])
        # mirrored stencil: odd derivatives flip sign
        sign = -1.0 if deriv % 2 else 1.0
        out[n - 1 - i] = sign * np.dot(left, f[::-1][:width])
    return out / grid.dx**deriv


def derivative(f: np.ndarray, grid: Grid, accuracy: int = 2) -> np.ndarray:
    """First derivative; central differences inside, one-sided at the ends.

    ``accuracy`` is the order of the truncation error (2 by default).
    """
    return _differentiate(f, grid, 1, accuracy)


def second_derivative(f: np.ndarray, grid: Grid, accuracy: int = 2) -> np.ndarray:
    """Second derivative; the default is the 3-point stencil inside."""
    return _differentiate(f, grid, 2, accuracy)


def norm_squared(psi: np.ndarray, grid: Grid) -> float:
    return float(integrate(np.abs(psi) ** 2, grid))


def normalize(psi: np.ndarray, grid: Grid) -> np.ndarray:
    psi = grid.check(psi)
    if not np.all(np.isfinite(psi)):
        raise ValueError("wavefunction contains non-finite samples")
    nrm = norm_squared(psi, grid)
    if not nrm > 0:
        raise ValueError("cannot normalize a zero-norm field")
    return psi / math.sqrt(nrm)


def edge_ratio(rho: np.ndarray) -> float:
    """Largest edge density relative to the peak density."""
    peak = float(np.max(rho))
    if peak <= 0:
        return math.inf
    return max(float(rho[0]), float(rho[-1])) / peak


def check_tails(rho: np.ndarray, threshold: float = EDGE_DENSITY_RATIO) -> bool:
    """Warn when the density has not decayed at the grid edges."""
    ratio = edge_ratio(rho)
    if ratio >= threshold:
        warnings.warn(
            f"density at grid edge is {ratio:.3g} of its peak (limit {threshold:g}); "
            "widen the grid",
            RuntimeWarning,
            stacklevel=2,
        )
        return False
    return True


def tail_mass(rho: np.ndarray, grid: Grid, fraction: float = 0.02) -> float:
    """Probability mass in the outermost ``fraction`` of grid points, both ends."""
    rho = grid.check(rho)
    k = max(2, int(round(fraction * grid.n)))
    dx = grid.dx
    return float(_integrate.trapezoid(rho[:k], dx=dx) + _integrate.trapezoid(rho[-k:], dx=dx))
