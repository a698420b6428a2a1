"""Random nodeless Gaussian-mixture wavefunctions for property tests."""

import math

import numpy as np

from stochmech.numerics import Grid, normalize


def mixture_density(x, weights, centers, widths):
    rho = np.zeros_like(x)
    for w, c, s in zip(weights, centers, widths):
        rho += w * np.exp(-0.5 * ((x - c) / s) ** 2) / (s * math.sqrt(2 * math.pi))
    return rho / sum(weights)


def mixture_psi(grid: Grid, weights, centers, widths, phase_coeffs=(0.0, 0.0, 0.0)):
    """sqrt(rho) times a smooth polynomial phase; nodeless by construction."""
    x = grid.x
    rho = mixture_density(x, weights, centers, widths)
    phase = sum(c * x**k for k, c in enumerate(phase_coeffs, start=1))
    return normalize(np.sqrt(rho) * np.exp(1j * phase), grid)


def random_mixture(rng: np.random.Generator, k: int):
    weights = rng.uniform(0.2, 1.0, k)
    centers = rng.uniform(-2.5, 2.5, k)
    widths = rng.uniform(0.45, 1.0, k)
    return weights, centers, widths
