"""Grid moments, Fisher information and the uncertainty-relation ledger."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterable

import numpy as np

from .madelung import DEFAULT_ACCURACY, MadelungFields
from .numerics import PhysicalParams, check_tails, derivative, integrate, tail_mass
from .states import MomentReport

TAIL_MASS_ERROR = 1e-6
TOL_ANALYTIC = 1e-6
TOL_GRID = 1e-4

# Relations saturated by every Gaussian (coherent or squeezed) state.
GAUSSIAN_SATURATED = (
    "RS_x_pc",
    "RS_x_ps",
    "RS_x_p",
    "RS_pc_ps",
    "osmotic",
    "cramer_rao",
    "exact_ps",
    "quantum_RS",
)


def grid_moments(
    mf: MadelungFields,
    psi: np.ndarray,
    accuracy: int = DEFAULT_ACCURACY,
) -> MomentReport:
    """Moments of (x, p_c, p_s, p) by quadrature against rho, plus quantum moments.

    Quantum momentum moments use psi' directly: <p^2> = int |hbar psi'|^2,
    which is manifestly nonnegative.
    """
    grid, p = mf.grid, mf.params
    psi = grid.check(psi)
    if not check_tails(mf.rho):
        tm = tail_mass(mf.rho, grid)
        if tm > TAIL_MASS_ERROR:
            raise ValueError(f"probability mass {tm:.3g} near the grid edges; widen the grid")
    x, rho = grid.x, mf.rho

    def mean(f: np.ndarray) -> float:
        return float(integrate(rho * f, grid))

    mean_x = mean(x)
    mean_pc = mean(mf.p_c)
    mean_ps = mean(mf.p_s)
    dx_ = x - mean_x
    dpc = mf.p_c - mean_pc
    dps = mf.p_s - mean_ps

    dpsi = derivative(psi, grid, accuracy)
    current = np.imag(np.conj(psi) * dpsi)
    q_mean_p = p.hbar * float(integrate(current, grid))
    q_var_p = p.hbar**2 * float(integrate(np.abs(dpsi) ** 2, grid)) - q_mean_p**2
    q_cov_xp = p.hbar * float(integrate(x * current, grid)) - mean_x * q_mean_p

    drho = derivative(rho, grid, accuracy)
    fisher_density = np.zeros_like(rho)
    fisher_density[mf.mask] = drho[mf.mask] ** 2 / rho[mf.mask]
    fisher_info = float(integrate(fisher_density, grid))

    var_x = mean(dx_ * dx_)
    var_pc = mean(dpc * dpc)
    var_ps = mean(dps * dps)
    cov_pc_ps = mean(dpc * dps)
    return MomentReport(
        mean_x=mean_x,
        mean_p=mean_pc + mean_ps,
        var_x=var_x,
        var_pc=var_pc,
        var_ps=var_ps,
        var_p=mean((dpc + dps) ** 2),
        cov_x_pc=mean(dx_ * dpc),
        cov_x_ps=mean(dx_ * dps),
        cov_x_p=mean(dx_ * (dpc + dps)),
        cov_pc_ps=cov_pc_ps,
        q_var_x=var_x,
        q_var_p=q_var_p,
        q_cov_xp=q_cov_xp,
        fisher_info=fisher_info,
        fisher_length_sq=1.0 / fisher_info if fisher_info > 0 else math.inf,
        mean_ps_cubed=mean(mf.p_s**3),
    )


@dataclass(frozen=True)
class URRecord:
    name: str
    lhs: float
    rhs: float
    gap: float
    tolerance: float
    saturated: bool
    holds: bool
    proven: bool
    kind: str  # "inequality" or "equality"

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class URReport:
    relations: dict[str, URRecord]
    tol: float

    def __getitem__(self, name: str) -> URRecord:
        return self.relations[name]

    def __iter__(self):
        return iter(self.relations.values())

    @property
    def all_proven_hold(self) -> bool:
        return all(r.holds for r in self if r.proven)

    def violations(self, expect_saturated: Iterable[str] = ()) -> list[str]:
        """Names of proven relations that fail, plus expected saturations that do not occur."""
        bad = [r.name for r in self if r.proven and not r.holds]
        bad += [n for n in expect_saturated if not self.relations[n].saturated and n not in bad]
        return bad

    def to_dict(self) -> dict:
        return {name: rec.to_dict() for name, rec in self.relations.items()}


def _record(name: str, lhs: float, rhs: float, scale: float, tol: float, *, proven: bool = True,
            kind: str = "inequality") -> URRecord:
    gap = lhs - rhs
    band = tol * max(abs(lhs), abs(rhs), scale)
    saturated = abs(gap) <= band
    holds = saturated if kind == "equality" else gap >= -band
    return URRecord(name, float(lhs), float(rhs), float(gap), float(band), bool(saturated), bool(holds), proven, kind)


def ur_report(mr: MomentReport, p: PhysicalParams | None = None, tol: float = TOL_ANALYTIC) -> URReport:
    """Evaluate every uncertainty relation for one moment table.

    ``tol`` is relative; each record's absolute band is
    ``tol * max(|lhs|, |rhs|, natural scale of the relation)``.
    """
    p = p or PhysicalParams()
    hb, l = p.hbar, p.l
    xp = hb * hb / 4.0  # scale of x-momentum products
    pp = hb**4 / (4.0 * l**4)  # scale of momentum-momentum products
    recs = [
        _record("RS_x_pc", mr.var_x * mr.var_pc, mr.cov_x_pc**2, xp, tol),
        _record("RS_x_ps", mr.var_x * mr.var_ps, mr.cov_x_ps**2, xp, tol),
        _record("RS_x_p", mr.var_x * mr.var_p, mr.cov_x_p**2, xp, tol),
        _record("RS_pc_ps", mr.var_pc * mr.var_ps, mr.cov_pc_ps**2, pp, tol),
        _record("osmotic", mr.var_x * mr.var_ps, xp, xp, tol),
        _record("cramer_rao", mr.var_x * mr.fisher_info, 1.0, 1.0, tol),
        _record("exact_ps", mr.fisher_length_sq * mr.var_ps, xp, xp, tol, kind="equality"),
        # first link of the chain; the second link is "osmotic"
        _record("chain", mr.q_var_x * mr.q_var_p, mr.var_x * mr.var_ps, xp, tol),
        _record("sum_quantum", mr.q_var_x / l**2 + mr.q_var_p * l**2 / hb**2, 1.0, 1.0, tol),
        _record("sum_stochastic", mr.var_x / l**2 + mr.var_p * l**2 / hb**2, 1.0, 1.0, tol, proven=False),
        _record("quantum_RS", mr.q_var_x * mr.q_var_p - mr.q_cov_xp**2, xp, xp, tol),
    ]
    return URReport({r.name: r for r in recs}, tol)


def r_p_from_moments(mr: MomentReport) -> float:
    if mr.q_var_p == 0:
        raise ZeroDivisionError("quantum momentum variance is zero")
    return (mr.q_var_p - mr.var_p) / mr.q_var_p


def covariance_matrix(mr: MomentReport, a: str, b: str) -> np.ndarray:
    """2x2 covariance matrix of a pair from {"x", "pc", "ps", "p"}."""
    var = {"x": mr.var_x, "pc": mr.var_pc, "ps": mr.var_ps, "p": mr.var_p}
    cov = {
        frozenset(("x", "pc")): mr.cov_x_pc,
        frozenset(("x", "ps")): mr.cov_x_ps,
        frozenset(("x", "p")): mr.cov_x_p,
        frozenset(("pc", "ps")): mr.cov_pc_ps,
        frozenset(("pc", "p")): mr.var_pc + mr.cov_pc_ps,
        frozenset(("ps", "p")): mr.var_ps + mr.cov_pc_ps,
    }
    c = cov[frozenset((a, b))]
    return np.array([[var[a], c], [c, var[b]]])


def moment_deltas(a: MomentReport, b: MomentReport) -> dict[str, float]:
    da, db = a.to_dict(), b.to_dict()
    return {k: db[k] - da[k] for k in da}

