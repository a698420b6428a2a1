"""Monte Carlo sampling of the Nelson forward diffusion dX = v+(X, t) dt + sqrt(2D) dW.

Paths are split into fixed-size chunks; chunk ``k`` always draws from the
``k``-th child of ``SeedSequence(seed)`` through a Philox generator, so every
path is reproducible no matter how chunks are scheduled across threads.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import stats
from scipy.integrate import cumulative_trapezoid

from .madelung import MadelungFields
from .states import FrequencyProfile, SqueezedStateParams, linear_momentum_fields, params_trajectory

Drift = Callable[[np.ndarray, float], np.ndarray]

DEFAULT_CHUNK = 16384


class SdeError(RuntimeError):
    """Raised when the simulated ensemble becomes non-finite."""


@dataclass(frozen=True)
class SdeConfig:
    n_paths: int
    dt: float
    t_final: float
    seed: int = 0
    initial_sampling: str = "gaussian"  # or "grid"
    chunk_size: int = DEFAULT_CHUNK
    n_checkpoints: int = 10
    workers: int | None = None

    def __post_init__(self) -> None:
        if int(self.n_paths) != self.n_paths or self.n_paths < 100:
            raise ValueError("n_paths must be an integer >= 100")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError("dt must be positive")
        if not self.t_final > 0:
            raise ValueError("t_final must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.initial_sampling not in ("gaussian", "grid"):
            raise ValueError(f"unknown initial_sampling {self.initial_sampling!r}")
        if self.chunk_size < 1 or self.n_checkpoints < 1:
            raise ValueError("chunk_size and n_checkpoints must be positive")

    @property
    def n_steps(self) -> int:
        return max(1, math.ceil(self.t_final / self.dt - 1e-9))

    @property
    def step(self) -> float:
        """Actual step length; dt shortened so the run ends exactly at t_final."""
        return self.t_final / self.n_steps


@dataclass(frozen=True)
class PathEnsembleStats:
    t: float
    emp_mean: float
    emp_var: float
    stderr_mean: float
    stderr_var: float
    n_paths: int


@dataclass
class PathEnsemble:
    """Positions of every path at the checkpoint times (row per checkpoint)."""

    times: np.ndarray
    positions: np.ndarray
    seed: int

    def at(self, t: float) -> np.ndarray:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"no checkpoint at t={t}")
        return self.positions[k]


# ---------------------------------------------------------------------------
# drift fields


class LinearDrift:
    """v+(x, t) = a(t) x + b(t) for a Gaussian state, tabulated in time.

    The coefficients come from the epsilon-ODE on a uniform table and are
    linearly interpolated between nodes.
    """

    def __init__(
        self,
        sp: SqueezedStateParams,
        frequency: FrequencyProfile,
        t_final: float,
        table_step: float = 1e-3,
        ode_dt: float = 1e-3,
    ):
        n = max(2, math.ceil(t_final / table_step) + 1)
        self.times = np.linspace(0.0, t_final, n)
        self.states = params_trajectory(sp, frequency, self.times, ode_dt)
        m = sp.params.mass
        coeffs = np.array([self._coeffs(s, m) for s in self.states])
        self.slope, self.offset = coeffs[:, 0], coeffs[:, 1]

    @staticmethod
    def _coeffs(s: SqueezedStateParams, mass: float) -> tuple[float, float]:
        f = linear_momentum_fields(s)
        (ac, bc), (as_, bs) = f["p_c"], f["p_s"]
        return (ac + as_) / mass, (bc + bs) / mass

    @classmethod
    def stationary(cls, sp: SqueezedStateParams) -> "LinearDrift":
        """Time-independent drift of a state at t=0 (no table needed)."""
        obj = cls.__new__(cls)
        obj.times = np.array([0.0])
        obj.states = [sp]
        a, b = cls._coeffs(sp, sp.params.mass)
        obj.slope, obj.offset = np.array([a]), np.array([b])
        return obj

    def coefficients(self, t: float) -> tuple[float, float]:
        if self.times.size == 1:
            return float(self.slope[0]), float(self.offset[0])
        return float(np.interp(t, self.times, self.slope)), float(np.interp(t, self.times, self.offset))

    def __call__(self, x: np.ndarray, t: float) -> np.ndarray:
        a, b = self.coefficients(t)
        return a * x + b


class GridDrift:
    """v+ = (p_c + p_s)/m interpolated from a fixed set of Madelung fields.

    Outside the masked support the drift continues linearly with the slope of
    the outermost two unmasked points, so paths in the far tails are pushed
    back instead of seeing zeros.
    """

    def __init__(self, mf: MadelungFields):
        idx = np.flatnonzero(mf.mask)
        if idx.size < 2:
            raise ValueError("need at least two unmasked points")
        self.x = mf.grid.x[idx]
        self.v = mf.forward_velocity[idx]
        self.left_slope = (self.v[1] - self.v[0]) / (self.x[1] - self.x[0])
        self.right_slope = (self.v[-1] - self.v[-2]) / (self.x[-1] - self.x[-2])

    def __call__(self, x: np.ndarray, t: float) -> np.ndarray:
        out = np.interp(x, self.x, self.v)
        lo, hi = x < self.x[0], x > self.x[-1]
        out[lo] = self.v[0] + self.left_slope * (x[lo] - self.x[0])
        out[hi] = self.v[-1] + self.right_slope * (x[hi] - self.x[-1])
        return out


def drift_field(source: SqueezedStateParams | MadelungFields, frequency: FrequencyProfile | None = None,
                t_final: float = 0.0, **kw) -> Drift:
    """Forward drift for an analytic state (linear in x) or a grid state."""
    if isinstance(source, MadelungFields):
        return GridDrift(source)
    if frequency is None or t_final <= 0:
        return LinearDrift.stationary(source)
    return LinearDrift(source, frequency, t_final, **kw)


def zero_drift(x: np.ndarray, t: float) -> np.ndarray:
    return np.zeros_like(x)


# ---------------------------------------------------------------------------
# initial laws


@dataclass(frozen=True)
class GaussianLaw:
    mean: float
    sigma: float

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.mean + self.sigma * rng.standard_normal(n)


@dataclass(frozen=True)
class GridLaw:
    """Inverse-CDF sampling of a density tabulated on a grid."""

    x: np.ndarray
    cdf: np.ndarray

    @classmethod
    def from_density(cls, x: np.ndarray, rho: np.ndarray) -> "GridLaw":
        cdf = cumulative_trapezoid(rho, x, initial=0.0)
        if not cdf[-1] > 0:
            raise ValueError("density has zero mass")
        cdf /= cdf[-1]
        # drop flat stretches so the inverse is single valued
        keep = np.concatenate(([True], np.diff(cdf) > 0))
        return cls(np.asarray(x)[keep], cdf[keep])

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return np.interp(rng.random(n), self.cdf, self.x)


def initial_law(cfg: SdeConfig, sp: SqueezedStateParams | None = None,
                grid_x: np.ndarray | None = None, rho: np.ndarray | None = None):
    if cfg.initial_sampling == "gaussian":
        if sp is None:
            raise ValueError("gaussian sampling needs the state parameters")
        return GaussianLaw(sp.mean_x, sp.sigma_x)
    if grid_x is None or rho is None:
        raise ValueError("grid sampling needs x and rho")
    return GridLaw.from_density(grid_x, rho)


# ---------------------------------------------------------------------------
# sampling


def checkpoint_steps(cfg: SdeConfig, times: Sequence[float] | None = None) -> np.ndarray:
    """Step indices of the recorded times (snapped to the step lattice), always including 0."""
    if times is None:
        steps = np.linspace(0, cfg.n_steps, cfg.n_checkpoints + 1).round().astype(int)
    else:
        t = np.asarray(times, dtype=float)
        if np.any(t < 0) or np.any(t > cfg.t_final * (1 + 1e-12)):
            raise ValueError("checkpoint times must lie in [0, t_final]")
        steps = np.concatenate(([0], np.rint(t / cfg.step).astype(int)))
    return np.unique(steps)


def _run_chunk(seed_seq: np.random.SeedSequence, n: int, cfg: SdeConfig, drift: Drift,
               diffusion: float, law, steps: np.ndarray) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(seed_seq))
    h = cfg.step
    noise_scale = math.sqrt(2.0 * diffusion * h)
    x = np.asarray(law.sample(rng, n), dtype=float)
    out = np.empty((steps.size, n))
    noise = np.empty(n)
    rec = 0
    if steps[0] == 0:
        out[0] = x
        rec = 1
    for k in range(cfg.n_steps):
        v = drift(x, k * h)
        rng.standard_normal(out=noise)
        x += h * v
        x += noise_scale * noise
        if rec < steps.size and steps[rec] == k + 1:
            if not np.all(np.isfinite(x)):
                raise SdeError(f"non-finite positions at t={(k + 1) * h:g}")
            out[rec] = x
            rec += 1
    return out


def sample_paths(
    cfg: SdeConfig,
    drift: Drift,
    diffusion: float,
    law,
    times: Sequence[float] | None = None,
) -> PathEnsemble:
    """Euler-Maruyama ensemble recorded at checkpoint times.

    ``law`` provides ``sample(rng, n)`` for the initial positions. Results
    are bitwise reproducible for a fixed config, independent of ``workers``.
    """
    if not diffusion >= 0:
        raise ValueError("diffusion coefficient must be nonnegative")
    steps = checkpoint_steps(cfg, times)
    sizes = [cfg.chunk_size] * (cfg.n_paths // cfg.chunk_size)
    if cfg.n_paths % cfg.chunk_size:
        sizes.append(cfg.n_paths % cfg.chunk_size)
    children = np.random.SeedSequence(cfg.seed).spawn(len(sizes))
    workers = cfg.workers or min(len(sizes), os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda a: _run_chunk(a[0], a[1], cfg, drift, diffusion, law, steps),
                              zip(children, sizes)))
    return PathEnsemble(steps * cfg.step, np.concatenate(parts, axis=1), cfg.seed)


def empirical_moments(samples: np.ndarray, t: float) -> PathEnsembleStats:
    """Unbiased mean and variance with their Monte Carlo standard errors.

    The variance error uses the fourth central moment:
    Var(s^2) = (m4 - (n-3)/(n-1) s^4) / n.
    """
    x = np.asarray(samples, dtype=float)
    n = x.size
    if n < 2:
        raise ValueError("need at least two paths")
    mean = float(np.mean(x))
    d = x - mean
    d2 = d * d
    var = float(np.sum(d2) / (n - 1))
    m4 = float(np.mean(d2 * d2))
    var_of_var = max(0.0, (m4 - (n - 3) / (n - 1) * var * var) / n)
    return PathEnsembleStats(t, mean, var, math.sqrt(var / n), math.sqrt(var_of_var), n)


def ensemble_stats(ens: PathEnsemble) -> list[PathEnsembleStats]:
    return [empirical_moments(row, float(t)) for t, row in zip(ens.times, ens.positions)]


def ks_gaussian(samples: np.ndarray, mean: float, sigma: float) -> tuple[float, float]:
    """Kolmogorov-Smirnov statistic and p-value against N(mean, sigma^2)."""
    res = stats.kstest(samples, "norm", args=(mean, sigma))
    return float(res.statistic), float(res.pvalue)


def analytic_marginals(sp: SqueezedStateParams, frequency: FrequencyProfile,
                       times: Sequence[float], ode_dt: float = 1e-3) -> list[tuple[float, float]]:
    """(mean, sigma) of the exact Gaussian position law at each time."""
    return [(s.mean_x, s.sigma_x) for s in params_trajectory(sp, frequency, times, ode_dt)]
