"""Coherent and squeezed Gaussian states in closed form.

A squeezed state is labelled by a constant eigenvalue ``alpha`` and the pair
``(mu, nu)`` with ``2 Re(conj(mu) nu) = 1``. All time dependence lives in
``(mu, nu)``, which follow from a classical oscillator variable ``eps``:

    mu = -i eps_dot / sqrt(2 omega0),    nu = eps sqrt(omega0 / 2),
    eps_ddot + omega(t)**2 eps = 0.

The coherent state is the special case ``mu = nu = 1/sqrt(2)``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import erfc

from .numerics import Grid, PhysicalParams

CONSTRAINT_TOL = 1e-9
EPSILON_CONSTRAINT_TOL = 1e-6
TAIL_MASS_LIMIT = 1e-10


def constraint_value(mu: complex, nu: complex) -> float:
    """2 Re(conj(mu) nu); equals 1 for a valid squeezed state."""
    return 2.0 * (mu.conjugate() * nu).real


@dataclass(frozen=True)
class SqueezedStateParams:
    alpha: complex
    mu: complex
    nu: complex
    params: PhysicalParams = field(default_factory=PhysicalParams)

    def __post_init__(self) -> None:
        object.__setattr__(self, "alpha", complex(self.alpha))
        object.__setattr__(self, "mu", complex(self.mu))
        object.__setattr__(self, "nu", complex(self.nu))
        if self.nu == 0:
            raise ValueError("nu must be nonzero")
        c = constraint_value(self.mu, self.nu)
        if abs(c - 1.0) > CONSTRAINT_TOL:
            raise ValueError(f"2 Re(mu* nu) = {c!r}, expected 1")

    @property
    def im_mu_nustar(self) -> float:
        return (self.mu * self.nu.conjugate()).imag

    @property
    def mean_x(self) -> float:
        return 2.0 * self.params.l * (self.alpha * self.nu.conjugate()).real

    @property
    def sigma_x(self) -> float:
        return self.params.l * abs(self.nu)

    @property
    def u_tilde(self) -> complex:
        return (self.mu + self.nu) / math.sqrt(2.0)

    @property
    def v_tilde(self) -> complex:
        return (self.mu - self.nu) / math.sqrt(2.0)


def coherent_params(alpha: complex, p: PhysicalParams | None = None) -> SqueezedStateParams:
    s = 1.0 / math.sqrt(2.0)
    return SqueezedStateParams(complex(alpha), s, s, p or PhysicalParams())


def squeeze_params(r: float, alpha: complex = 0j, p: PhysicalParams | None = None) -> SqueezedStateParams:
    """Squeezed state with u~ = cosh r, v~ = sinh r (real squeezing)."""
    if not math.isfinite(r):
        raise ValueError("squeeze parameter must be finite")
    return SqueezedStateParams(
        complex(alpha), math.exp(r) / math.sqrt(2.0), math.exp(-r) / math.sqrt(2.0), p or PhysicalParams()
    )


def coherent_alpha_t(alpha: complex, omega: float, t: float) -> complex:
    """Eigenvalue of the stable coherent state, alpha exp(-i omega t)."""
    return complex(alpha) * cmath.exp(-1j * omega * t)


# ---------------------------------------------------------------------------
# frequency profiles


@dataclass(frozen=True)
class FrequencyProfile:
    """Oscillator frequency omega(t).

    ``kind`` is one of:

    * ``"constant"``: ``values = (omega,)``
    * ``"quench"``: piecewise constant, ``values[k]`` holds on
      ``[times[k-1], times[k])`` with ``times`` the switch instants
      (right-continuous at each switch).
    * ``"table"``: piecewise linear through ``(times[k], values[k])``,
      held constant outside the table.
    """

    kind: str
    values: tuple[float, ...]
    times: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        if any(not (math.isfinite(v) and v > 0) for v in self.values):
            raise ValueError("frequencies must be positive and finite")
        if self.kind == "constant":
            if len(self.values) != 1 or self.times:
                raise ValueError("constant profile takes exactly one value")
        elif self.kind == "quench":
            if len(self.values) != len(self.times) + 1 or not self.times:
                raise ValueError("quench profile needs len(values) == len(times) + 1")
        elif self.kind == "table":
            if len(self.values) != len(self.times) or len(self.times) < 2:
                raise ValueError("table profile needs matching times/values, at least two rows")
        else:
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if list(self.times) != sorted(set(self.times)):
            raise ValueError("profile times must be strictly increasing")

    @classmethod
    def constant(cls, omega: float) -> "FrequencyProfile":
        return cls("constant", (omega,))

    @classmethod
    def quench(cls, omegas: Sequence[float], switch_times: Sequence[float]) -> "FrequencyProfile":
        return cls("quench", tuple(omegas), tuple(switch_times))

    @classmethod
    def table(cls, times: Sequence[float], omegas: Sequence[float]) -> "FrequencyProfile":
        return cls("table", tuple(omegas), tuple(times))

    def __call__(self, t: float) -> float:
        if self.kind == "constant":
            return self.values[0]
        if self.kind == "quench":
            k = int(np.searchsorted(self.times, t, side="right"))
            return self.values[k]
        return float(np.interp(t, self.times, self.values))

    @property
    def max_omega(self) -> float:
        return max(self.values)

    def breakpoints(self, t0: float, t1: float) -> list[float]:
        """Profile nodes strictly inside (t0, t1)."""
        lo, hi = min(t0, t1), max(t0, t1)
        return [t for t in self.times if lo < t < hi]

    def on_segment(self, a: float, b: float) -> Callable[[float], float]:
        """omega(t) valid on the closed segment between two breakpoints."""
        if self.kind == "quench":
            w = self(0.5 * (a + b))
            return lambda t: w
        return self

    def describe(self) -> str:
        if self.kind == "constant":
            return f"const:{self.values[0]:g}"
        if self.kind == "quench":
            return "quench:" + ",".join(f"{v:g}" for v in self.values) + "@" + ",".join(f"{t:g}" for t in self.times)
        return "table:" + ",".join(f"{t:g}:{v:g}" for t, v in zip(self.times, self.values))


# ---------------------------------------------------------------------------
# epsilon parametrisation


@dataclass(frozen=True)
class EpsilonState:
    eps: complex
    eps_dot: complex
    t: float = 0.0


def epsilon_from_params(sp: SqueezedStateParams, t: float = 0.0) -> EpsilonState:
    c = constraint_value(sp.mu, sp.nu)
    if abs(c - 1.0) > EPSILON_CONSTRAINT_TOL:
        raise ValueError(f"constraint violated: 2 Re(mu* nu) = {c!r}")
    w0 = sp.params.omega0
    return EpsilonState(sp.nu * math.sqrt(2.0 / w0), 1j * sp.mu * math.sqrt(2.0 * w0), t)


def mu_nu_from_epsilon(e: EpsilonState, p: PhysicalParams | None = None) -> tuple[complex, complex]:
    w0 = (p or PhysicalParams()).omega0
    return -1j * e.eps_dot / math.sqrt(2.0 * w0), e.eps * math.sqrt(w0 / 2.0)


def wronskian_constraint(e: EpsilonState, p: PhysicalParams | None = None) -> float:
    mu, nu = mu_nu_from_epsilon(e, p)
    return constraint_value(mu, nu)


def _rk4_segment(y: np.ndarray, a: float, b: float, dt: float, omega: Callable[[float], float]) -> np.ndarray:
    span = b - a
    if span <= 0:
        return y
    steps = max(1, math.ceil(span / dt - 1e-9))
    h = span / steps
    eps, deps = y
    for k in range(steps):
        t = a + k * h
        w1 = omega(t) ** 2
        w2 = omega(t + 0.5 * h) ** 2
        w3 = omega(t + h) ** 2
        k1e, k1d = deps, -w1 * eps
        k2e, k2d = deps + 0.5 * h * k1d, -w2 * (eps + 0.5 * h * k1e)
        k3e, k3d = deps + 0.5 * h * k2d, -w2 * (eps + 0.5 * h * k2e)
        k4e, k4d = deps + h * k3d, -w3 * (eps + h * k3e)
        eps = eps + h / 6.0 * (k1e + 2 * k2e + 2 * k3e + k4e)
        deps = deps + h / 6.0 * (k1d + 2 * k2d + 2 * k3d + k4d)
    return np.array([eps, deps])


def _check_step(w: FrequencyProfile, dt: float) -> None:
    if not dt > 0:
        raise ValueError("dt must be positive")
    if dt * w.max_omega >= 0.1:
        raise ValueError(f"dt * max(omega) = {dt * w.max_omega:g} must stay below 0.1")


def epsilon_trajectory(
    e0: EpsilonState, w: FrequencyProfile, times: Sequence[float], dt: float = 1e-3
) -> list[EpsilonState]:
    """Integrate the oscillator equation and report it at ``times``.

    Classical fixed-step RK4 on (eps, eps_dot); steps are shortened so that
    every requested time and every profile breakpoint is hit exactly.
    """
    _check_step(w, dt)
    times = [float(t) for t in times]
    if any(t < e0.t for t in times):
        raise ValueError("requested times must not precede the initial state")
    order = np.argsort(times, kind="stable")
    out: list[EpsilonState | None] = [None] * len(times)
    y = np.array([e0.eps, e0.eps_dot], dtype=complex)
    t_now = e0.t
    for idx in order:
        target = times[idx]
        nodes = [t_now, *w.breakpoints(t_now, target), target]
        for a, b in zip(nodes[:-1], nodes[1:]):
            y = _rk4_segment(y, a, b, dt, w.on_segment(a, b))
        t_now = target
        out[idx] = EpsilonState(complex(y[0]), complex(y[1]), target)
    return out  # type: ignore[return-value]


def evolve_epsilon(e0: EpsilonState, w: FrequencyProfile, t_final: float, dt: float = 1e-3) -> EpsilonState:
    return epsilon_trajectory(e0, w, [t_final], dt)[0]


def evolve_params(
    sp: SqueezedStateParams, w: FrequencyProfile, t: float, dt: float = 1e-3, t0: float = 0.0
) -> SqueezedStateParams:
    """State parameters at time ``t`` for a state given at ``t0``."""
    e = evolve_epsilon(epsilon_from_params(sp, t0), w, t, dt)
    mu, nu = mu_nu_from_epsilon(e, sp.params)
    return SqueezedStateParams(sp.alpha, mu, nu, sp.params)


def params_trajectory(
    sp: SqueezedStateParams, w: FrequencyProfile, times: Sequence[float], dt: float = 1e-3, t0: float = 0.0
) -> list[SqueezedStateParams]:
    eps = epsilon_trajectory(epsilon_from_params(sp, t0), w, times, dt)
    out = []
    for e in eps:
        mu, nu = mu_nu_from_epsilon(e, sp.params)
        out.append(SqueezedStateParams(sp.alpha, mu, nu, sp.params))
    return out


# ---------------------------------------------------------------------------
# wavefunction and closed-form moments


def outside_mass(sp: SqueezedStateParams, grid: Grid) -> float:
    """Probability mass of |psi|^2 lying outside the grid interval."""
    s = math.sqrt(2.0) * sp.sigma_x
    lo = (sp.mean_x - grid.x_min) / s
    hi = (grid.x_max - sp.mean_x) / s
    return 0.5 * (float(erfc(lo)) + float(erfc(hi)))


def eval_psi(sp: SqueezedStateParams, grid: Grid) -> np.ndarray:
    """Sample the normalized squeezed-state wavefunction on ``grid``.

    The prefactor (l nu sqrt(2 pi))**-1/2 uses the principal square root, so
    the x-independent phase may jump by pi when arg(nu) crosses pi.
    """
    mass_out = outside_mass(sp, grid)
    if mass_out > TAIL_MASS_LIMIT:
        raise ValueError(f"grid too narrow: {mass_out:.3g} of the probability lies outside it")
    l = sp.params.l
    a, mu, nu = sp.alpha, sp.mu, sp.nu
    x = grid.x
    pref = (l * nu * math.sqrt(2.0 * math.pi)) ** -0.5
    shift = l * a / mu
    expo = -(mu / (2.0 * l * l * nu)) * (x - shift) ** 2 - 0.5 * (abs(a) ** 2 - mu.conjugate() * a * a / mu)
    return pref * np.exp(expo)


def auto_grid(sp: SqueezedStateParams, n: int = 4096, n_sigma: float = 12.0) -> Grid:
    """Grid centred on the state covering +-n_sigma position standard deviations."""
    half = n_sigma * sp.sigma_x
    return Grid(sp.mean_x - half, sp.mean_x + half, n)


@dataclass(frozen=True)
class MomentReport:
    """First and second moments of (x, p_c, p_s, p) plus quantum x-p moments."""

    mean_x: float
    mean_p: float
    var_x: float
    var_pc: float
    var_ps: float
    var_p: float
    cov_x_pc: float
    cov_x_ps: float
    cov_x_p: float
    cov_pc_ps: float
    q_var_x: float
    q_var_p: float
    q_cov_xp: float
    fisher_info: float
    fisher_length_sq: float
    mean_ps_cubed: float

    def to_dict(self) -> dict[str, float]:
        return {k: float(v) for k, v in asdict(self).items()}

    @classmethod
    def field_names(cls) -> list[str]:
        return list(cls.__dataclass_fields__)

    @staticmethod
    def units(p: PhysicalParams) -> dict[str, str]:
        """Unit of every field in the (hbar, mass, omega0) system."""
        length, mom = "l", "hbar/l"
        return {
            "mean_x": length,
            "mean_p": mom,
            "var_x": "l^2",
            "var_pc": "hbar^2/l^2",
            "var_ps": "hbar^2/l^2",
            "var_p": "hbar^2/l^2",
            "cov_x_pc": "hbar",
            "cov_x_ps": "hbar",
            "cov_x_p": "hbar",
            "cov_pc_ps": "hbar^2/l^2",
            "q_var_x": "l^2",
            "q_var_p": "hbar^2/l^2",
            "q_cov_xp": "hbar",
            "fisher_info": "1/l^2",
            "fisher_length_sq": "l^2",
            "mean_ps_cubed": "hbar^3/l^3",
        }


def analytic_moments(sp: SqueezedStateParams) -> MomentReport:
    hbar, l = sp.params.hbar, sp.params.l
    mu, nu, a = sp.mu, sp.nu, sp.alpha
    im = sp.im_mu_nustar
    nu2 = abs(nu) ** 2
    var_x = l * l * nu2
    var_ps = hbar**2 / (4.0 * l * l * nu2)
    dphi = cmath.phase(mu) - cmath.phase(nu)
    var_pc = (hbar / l) ** 2 * abs(mu) ** 2 * math.sin(dphi) ** 2
    cov_x_pc = -hbar * im
    cov_x_ps = -hbar / 2.0
    return MomentReport(
        mean_x=sp.mean_x,
        mean_p=2.0 * hbar / l * (a * mu.conjugate()).imag,
        var_x=var_x,
        var_pc=var_pc,
        var_ps=var_ps,
        var_p=hbar**2 / (l * l * nu2) * (0.5 + im) ** 2,
        cov_x_pc=cov_x_pc,
        cov_x_ps=cov_x_ps,
        cov_x_p=-hbar * (0.5 + im),
        cov_pc_ps=hbar**2 / (2.0 * l * l * nu2) * im,
        q_var_x=var_x,
        q_var_p=(hbar / l) ** 2 * abs(mu) ** 2,
        q_cov_xp=hbar * (mu.conjugate() * nu).imag,
        fisher_info=1.0 / var_x,
        fisher_length_sq=var_x,
        mean_ps_cubed=0.0,
    )


def r_p_closed_form(sp: SqueezedStateParams) -> float:
    """Relative excess of the quantum momentum variance over the stochastic one."""
    return -sp.im_mu_nustar / abs(sp.mu * sp.nu) ** 2


def linear_momentum_fields(sp: SqueezedStateParams) -> dict[str, tuple[float, float]]:
    """(slope, intercept) of p_c(x) and p_s(x); both are linear for Gaussians."""
    hbar, l = sp.params.hbar, sp.params.l
    nu2 = abs(sp.nu) ** 2
    slope_c = -hbar / (l * l) * sp.im_mu_nustar / nu2
    icpt_c = hbar / l * (sp.alpha / sp.nu).imag
    slope_s = -hbar / (2.0 * l * l * nu2)
    icpt_s = -slope_s * sp.mean_x
    return {"p_c": (slope_c, icpt_c), "p_s": (slope_s, icpt_s)}
