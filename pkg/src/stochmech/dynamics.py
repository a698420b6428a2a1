"""Grid Schroedinger evolution and Bohm / extremal-equation residuals."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.linalg import solve_banded

from .madelung import DEFAULT_ACCURACY, DEFAULT_RHO_FLOOR, decompose, support_mask
from .numerics import Grid, PhysicalParams, derivative, integrate, norm_squared, second_derivative, tail_mass
from .states import FrequencyProfile, SqueezedStateParams, eval_psi, params_trajectory

TAIL_TOL = 1e-12


class TailMassError(RuntimeError):
    """Probability reached the Dirichlet boundary region."""


@dataclass(frozen=True)
class PdeConfig:
    dt: float
    t_final: float
    frequency: FrequencyProfile = field(default_factory=lambda: FrequencyProfile.constant(1.0))
    boundary: str = "dirichlet"
    # "compact4": Numerov-type fourth-order kinetic operator; "second": 3-point Laplacian.
    scheme: str = "compact4"
    tail_tol: float = TAIL_TOL

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_final < 0:
            raise ValueError("t_final must be nonnegative")
        if self.boundary != "dirichlet":
            raise ValueError("only Dirichlet zero boundaries are supported")
        if self.scheme not in ("compact4", "second"):
            raise ValueError(f"unknown scheme {self.scheme!r}")


@dataclass
class PdeRun:
    times: np.ndarray
    snapshots: np.ndarray  # (len(times), n) complex
    norms: np.ndarray

    @property
    def norm_drift(self) -> float:
        return float(np.max(np.abs(self.norms - self.norms[0])))

    def at(self, t: float) -> np.ndarray:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-12 * max(1.0, abs(t)):
            raise KeyError(f"no snapshot at t={t}")
        return self.snapshots[k]


class _CrankNicolson:
    """(M + i tau MH) psi+ = (M - i tau MH) psi on the interior points.

    H = M^-1 K + V with K = -(hbar^2/2m) d2/dx2 (3-point) and
    M = 1 + d2/12 for the compact scheme (M = 1 otherwise). M and K are
    both functions of the same symmetric second difference, so H is
    symmetric and the Cayley step is unitary.
    """

    def __init__(self, grid: Grid, p: PhysicalParams, scheme: str):
        self.grid, self.p = grid, p
        self.x = grid.x[1:-1]
        self.kin = p.hbar**2 / (2.0 * p.mass * grid.dx**2)
        self.m_off = 1.0 / 12.0 if scheme == "compact4" else 0.0
        self.m_diag = 1.0 - 2.0 * self.m_off
        self._cache: dict[tuple[float, float], tuple[np.ndarray, np.ndarray]] = {}

    def potential(self, omega: float) -> np.ndarray:
        return 0.5 * self.p.mass * omega**2 * self.x**2

    def _bands(self, h: float, omega: float) -> tuple[np.ndarray, np.ndarray]:
        key = (h, omega)
        if key not in self._cache:
            v = self.potential(omega)
            tau = h / (2.0 * self.p.hbar)
            # banded M H: lower (i, i-1), diag, upper (i, i+1)
            mh_diag = 2.0 * self.kin + self.m_diag * v
            mh_up = -self.kin + self.m_off * v[1:]
            mh_lo = -self.kin + self.m_off * v[:-1]
            n = self.x.size
            lhs = np.zeros((3, n), dtype=complex)
            lhs[0, 1:] = self.m_off + 1j * tau * mh_up
            lhs[1] = self.m_diag + 1j * tau * mh_diag
            lhs[2, :-1] = self.m_off + 1j * tau * mh_lo
            rhs = np.zeros((3, n), dtype=complex)
            rhs[0, 1:] = self.m_off - 1j * tau * mh_up
            rhs[1] = self.m_diag - 1j * tau * mh_diag
            rhs[2, :-1] = self.m_off - 1j * tau * mh_lo
            self._cache[key] = (lhs, rhs)
        return self._cache[key]

    def step(self, psi: np.ndarray, h: float, omega: float) -> np.ndarray:
        lhs, rhs = self._bands(h, omega)
        b = rhs[1] * psi
        b[:-1] += rhs[0, 1:] * psi[1:]
        b[1:] += rhs[2, :-1] * psi[:-1]
        return solve_banded((1, 1), lhs, b, overwrite_b=True, check_finite=False)

    def apply_h(self, psi: np.ndarray, omega: float) -> np.ndarray:
        """H psi on the interior (M^-1 K psi + V psi)."""
        k = 2.0 * self.kin * psi
        k[:-1] -= self.kin * psi[1:]
        k[1:] -= self.kin * psi[:-1]
        if self.m_off:
            n = psi.size
            mb = np.zeros((3, n))
            mb[0, 1:] = self.m_off
            mb[1] = self.m_diag
            mb[2, :-1] = self.m_off
            k = solve_banded((1, 1), mb, k)
        return k + self.potential(omega) * psi


def _check_tails(psi: np.ndarray, grid: Grid, tol: float, t: float) -> None:
    tm = tail_mass(np.abs(psi) ** 2, grid, fraction=0.05)
    if tm > tol:
        raise TailMassError(f"tail mass {tm:.3g} exceeds {tol:g} at t={t:g}")


def evolve_pde(
    psi0: np.ndarray,
    grid: Grid,
    cfg: PdeConfig,
    p: PhysicalParams | None = None,
    snapshot_times: Sequence[float] | None = None,
    t0: float = 0.0,
) -> PdeRun:
    """Crank-Nicolson evolution of psi0 from t0 to t0 + cfg.t_final.

    Steps are shortened to land exactly on snapshot times and on frequency
    switch times; the potential on each step uses omega at the step midpoint.
    """
    p = p or PhysicalParams()
    psi0 = grid.check(psi0)
    if not np.all(np.isfinite(psi0)):
        raise ValueError("initial state has non-finite values")
    if abs(norm_squared(psi0, grid) - 1.0) > 1e-8:
        raise ValueError("initial state must be normalized")
    _check_tails(psi0, grid, cfg.tail_tol, t0)
    t_end = t0 + cfg.t_final
    times = sorted({t0, t_end, *(float(t) for t in (() if snapshot_times is None else snapshot_times))})
    if times[0] < t0 - 1e-15 or times[-1] > t_end + 1e-12:
        raise ValueError("snapshot times must lie within the run")

    cn = _CrankNicolson(grid, p, cfg.scheme)
    w = cfg.frequency
    psi = psi0[1:-1].astype(complex)
    snaps = [psi0.astype(complex)]
    norms = [norm_squared(psi0, grid)]
    t_now = t0
    steps_done = 0
    for target in times[1:]:
        nodes = [t_now, *w.breakpoints(t_now, target), target]
        for a, b in zip(nodes[:-1], nodes[1:]):
            span = b - a
            if span <= 0:
                continue
            nsteps = max(1, math.ceil(span / cfg.dt - 1e-9))
            h = span / nsteps
            for k in range(nsteps):
                omega = w(a + (k + 0.5) * h)
                psi = cn.step(psi, h, omega)
                steps_done += 1
                if steps_done % 256 == 0 and not np.all(np.isfinite(psi)):
                    raise FloatingPointError("non-finite values during evolution")
        t_now = target
        full = np.zeros(grid.n, dtype=complex)
        full[1:-1] = psi
        if not np.all(np.isfinite(full)):
            raise FloatingPointError("non-finite values during evolution")
        _check_tails(full, grid, cfg.tail_tol, t_now)
        snaps.append(full)
        norms.append(norm_squared(full, grid))
    return PdeRun(np.array(times), np.array(snaps), np.array(norms))


def energy(psi: np.ndarray, grid: Grid, omega: float, p: PhysicalParams | None = None, scheme: str = "compact4") -> float:
    """<H> with the same discrete Hamiltonian the propagator uses."""
    p = p or PhysicalParams()
    cn = _CrankNicolson(grid, p, scheme)
    inner = psi[1:-1]
    return float(np.real(np.vdot(inner, cn.apply_h(inner, omega))) * grid.dx)


def compare_states(a: np.ndarray, b: np.ndarray, grid: Grid) -> dict[str, float]:
    """Fidelity |<a|b>| and the L2 error after the best global phase."""
    a, b = grid.check(a), grid.check(b)
    ov = complex(integrate(np.conj(a) * b, grid))
    ph = ov / abs(ov) if abs(ov) > 0 else 1.0
    err = math.sqrt(max(float(integrate(np.abs(a - b / ph) ** 2, grid)), 0.0))
    return {"l2_error_mod_phase": err, "fidelity": abs(ov)}


def align_phase(ref: np.ndarray, other: np.ndarray, grid: Grid) -> np.ndarray:
    ov = complex(integrate(np.conj(ref) * other, grid))
    return other * (abs(ov) / ov) if abs(ov) > 0 else other


# ---------------------------------------------------------------------------
# residuals


@dataclass(frozen=True)
class ResidualReport:
    """RMS residuals over the unmasked region.

    ``hjm_rms`` and ``extremal2_rms`` have their rho-weighted spatial mean
    removed (a global phase only shifts them by a constant);
    ``hjm_raw_rms`` is the unaligned value. ``extremal2_printed_rms`` keeps
    the second extremal equation without its V + V_q terms.
    """

    continuity_rms: float | None = None
    hjm_rms: float | None = None
    extremal1_rms: float | None = None
    extremal2_rms: float | None = None
    excluded_mass: float = 0.0
    hjm_raw_rms: float | None = None
    extremal2_printed_rms: float | None = None

    def merged(self, other: "ResidualReport") -> "ResidualReport":
        mine, theirs = asdict(self), asdict(other)
        return ResidualReport(**{k: (mine[k] if mine[k] is not None else theirs[k]) for k in mine})

    def to_dict(self) -> dict:
        return asdict(self)


def _rms(r: np.ndarray, mask: np.ndarray) -> float:
    return float(np.sqrt(np.mean(r[mask] ** 2)))


def _demeaned_rms(r: np.ndarray, rho: np.ndarray, mask: np.ndarray) -> float:
    w = rho[mask]
    c = float(np.sum(w * r[mask]) / np.sum(w))
    return _rms(r - c, mask)


def _phase_rate(prev: np.ndarray, nxt: np.ndarray, mid: np.ndarray, delta: float) -> np.ndarray:
    """Centered d(arg psi)/dt from phase increments, immune to 2 pi wraps."""
    return (np.angle(nxt * np.conj(mid)) + np.angle(mid * np.conj(prev))) / (2.0 * delta)


class _Terms:
    """Shared pieces of the residual computations for one snapshot triple."""

    def __init__(self, snapshots, grid: Grid, delta: float, p: PhysicalParams, omega: float,
                 rho_floor: float, accuracy: int):
        prev, mid, nxt = (grid.check(s) for s in snapshots)
        if not delta > 0:
            raise ValueError("delta must be positive")
        self.grid, self.p, self.delta = grid, p, delta
        self.mf = decompose(mid, grid, p, rho_floor, accuracy)
        self.mask = self.mf.mask
        if self.mf.excluded_mass > 0.5:
            raise ValueError("masked region holds more than half of the probability")
        for s in (prev, nxt):
            support_mask(np.abs(s) ** 2, rho_floor)
        self.rho = self.mf.rho
        self.psi = mid
        rho_prev, rho_next = np.abs(prev) ** 2, np.abs(nxt) ** 2
        self.drho_dt = (rho_next - rho_prev) / (2.0 * delta)
        with np.errstate(divide="ignore", invalid="ignore"):
            self.dlnrho_dt = (np.log(rho_next) - np.log(rho_prev)) / (2.0 * delta)
        self.dS_dt_raw = p.hbar * _phase_rate(prev, nxt, mid, delta)
        self.dS_dt = p.hbar * _phase_rate(align_phase(mid, prev, grid), align_phase(mid, nxt, grid), mid, delta)
        self.V = 0.5 * p.mass * omega**2 * grid.x**2
        self.accuracy = accuracy

    def d(self, f: np.ndarray) -> np.ndarray:
        return derivative(f, self.grid, self.accuracy)

    def d2(self, f: np.ndarray) -> np.ndarray:
        return second_derivative(f, self.grid, self.accuracy)


def _bohm(t: _Terms) -> ResidualReport:
    mf, m = t.mf, t.p.mass
    cont = t.drho_dt + t.d(t.rho * mf.p_c) / m
    hjm_core = mf.p_c**2 / (2.0 * m) + t.V + mf.v_q
    hjm = t.dS_dt + hjm_core
    hjm_raw = t.dS_dt_raw + hjm_core
    return ResidualReport(
        continuity_rms=_rms(cont, t.mask),
        hjm_rms=_demeaned_rms(hjm, t.rho, t.mask),
        hjm_raw_rms=_rms(hjm_raw, t.mask),
        excluded_mass=mf.excluded_mass,
    )


def _extremal(t: _Terms) -> ResidualReport:
    """Extremal equations for (rho, S_-) with S_s = (hbar/2) ln(l rho).

    With dS_s/drho = hbar/(2 rho) the first equation is
        rho_t + (1/m) (rho S_-' + (hbar/2) rho')' = 0
    and the second, written out term by term, is
        S_-,t + S'^2/2m - (hbar/2m rho)(rho' S_-' + rho S_-'')
              - hbar^2 rho''/(4 m rho) + V + V_q = 0.
    The last two terms come from varying rho in rho V and in the Fisher
    term; without them the equation does not vanish on solutions.
    """
    mf, m, hb = t.mf, t.p.mass, t.p.hbar
    rho, mask = t.rho, t.mask
    drho = t.d(rho)
    d2rho = t.d2(rho)
    # S_- = S - S_s from the raw phase and log-density; differentiating the
    # masked p_c, p_s would put stencil artefacts at the mask edge
    with np.errstate(divide="ignore"):
        s_minus = hb * np.unwrap(np.angle(t.psi)) - 0.5 * hb * np.log(np.maximum(rho, 1e-300) * t.p.l)
    dS_minus = t.d(s_minus)
    d2S_minus = t.d2(s_minus)
    ext1 = t.drho_dt + t.d(rho * dS_minus + 0.5 * hb * drho) / m

    dSm_dt = t.dS_dt - 0.5 * hb * np.where(mask, t.dlnrho_dt, 0.0)
    safe_rho = np.where(mask, rho, 1.0)
    printed = (
        dSm_dt
        + mf.p_c**2 / (2.0 * m)
        - hb / (2.0 * m * safe_rho) * (drho * dS_minus + rho * d2S_minus)
        - hb * hb * d2rho / (4.0 * m * safe_rho)
    )
    full = printed + t.V + mf.v_q
    return ResidualReport(
        extremal1_rms=_rms(ext1, mask),
        extremal2_rms=_demeaned_rms(full, rho, mask),
        extremal2_printed_rms=_demeaned_rms(printed, rho, mask),
        excluded_mass=mf.excluded_mass,
    )


def bohm_residuals(
    snapshots: Sequence[np.ndarray],
    grid: Grid,
    delta: float,
    p: PhysicalParams | None = None,
    omega: float = 1.0,
    rho_floor: float = DEFAULT_RHO_FLOOR,
    accuracy: int = DEFAULT_ACCURACY,
) -> ResidualReport:
    """Continuity and Hamilton-Jacobi-Madelung residuals at the middle snapshot.

    ``snapshots`` holds psi at t - delta, t, t + delta; ``omega`` is the
    oscillator frequency at t.
    """
    return _bohm(_Terms(snapshots, grid, delta, p or PhysicalParams(), omega, rho_floor, accuracy))


def extremal_residuals(
    snapshots: Sequence[np.ndarray],
    grid: Grid,
    delta: float,
    p: PhysicalParams | None = None,
    omega: float = 1.0,
    rho_floor: float = DEFAULT_RHO_FLOOR,
    accuracy: int = DEFAULT_ACCURACY,
) -> ResidualReport:
    return _extremal(_Terms(snapshots, grid, delta, p or PhysicalParams(), omega, rho_floor, accuracy))


def all_residuals(
    snapshots: Sequence[np.ndarray],
    grid: Grid,
    delta: float,
    p: PhysicalParams | None = None,
    omega: float = 1.0,
    rho_floor: float = DEFAULT_RHO_FLOOR,
    accuracy: int = DEFAULT_ACCURACY,
) -> ResidualReport:
    terms = _Terms(snapshots, grid, delta, p or PhysicalParams(), omega, rho_floor, accuracy)
    return _bohm(terms).merged(_extremal(terms))


def analytic_snapshots(
    sp: SqueezedStateParams,
    w: FrequencyProfile,
    t: float,
    delta: float,
    grid: Grid,
    dt: float = 1e-3,
) -> list[np.ndarray]:
    """Closed-form psi at t - delta, t, t + delta for a state given at time 0."""
    if t - delta < 0:
        raise ValueError("t - delta must be nonnegative")
    states = params_trajectory(sp, w, [t - delta, t, t + delta], dt)
    return [eval_psi(s, grid) for s in states]


def corrupt(psi: np.ndarray, grid: Grid, amplitude: float, p: PhysicalParams | None = None) -> np.ndarray:
    """Multiply rho by 1 + amplitude sin(3 x / l) and renormalize (negative control)."""
    p = p or PhysicalParams()
    f = 1.0 + amplitude * np.sin(3.0 * grid.x / p.l)
    out = psi * np.sqrt(f)
    return out / math.sqrt(norm_squared(out, grid))


# ---------------------------------------------------------------------------
# snapshot dumps


def write_snapshot(path: str | Path, grid: Grid, psi: np.ndarray, meta: dict) -> tuple[Path, Path]:
    """CSV with columns x, re_psi, im_psi plus a JSON sidecar with metadata."""
    path = Path(path)
    psi = grid.check(psi)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "re_psi", "im_psi"])
        for x, z in zip(grid.x, psi):
            w.writerow([repr(float(x)), repr(float(z.real)), repr(float(z.imag))])
    side = path.with_suffix(path.suffix + ".json")
    side.write_text(json.dumps(meta, indent=2, sort_keys=True))
    return path, side
