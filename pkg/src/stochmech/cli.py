"""Command-line front end.

Exit codes: 0 success, 1 a checked property failed, 2 usage or configuration
error. Output goes to ``--out`` (``-`` for stdout), else to
``$STOCHMECH_OUT_DIR/<command>.<ext>``, else to ``./<command>.<ext>``.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_file, resolve
from .dynamics import (
    PdeConfig,
    TailMassError,
    all_residuals,
    analytic_snapshots,
    compare_states,
    corrupt,
    evolve_pde,
)
from .madelung import NodeError, decompose
from .moments import GAUSSIAN_SATURATED, grid_moments, moment_deltas, r_p_from_moments, ur_report
from .numerics import Grid
from .sde import (
    SdeConfig,
    SdeError,
    LinearDrift,
    analytic_marginals,
    empirical_moments,
    initial_law,
    ks_gaussian,
    sample_paths,
)
from .serialization import csv_text, dumps, human_table, write_text
from .states import (
    MomentReport,
    SqueezedStateParams,
    analytic_moments,
    auto_grid,
    eval_psi,
    evolve_params,
    params_trajectory,
    r_p_closed_form,
    squeeze_params,
)

OUT_DIR_ENV = "STOCHMECH_OUT_DIR"
EXIT_OK, EXIT_VIOLATION, EXIT_USAGE = 0, 1, 2
DEFAULT_FORMAT = {"report": "json", "verify": "json", "sde": "csv", "sweep": "csv", "dump-fields": "csv"}

# command-line flag -> config key (per command where the meaning differs)
COMMON_FLAGS = {
    "state": "state.kind",
    "alpha": "state.alpha",
    "r": "state.r",
    "mu": "state.mu",
    "nu": "state.nu",
    "omega": "evolution.omega",
    "hbar": "physics.hbar",
    "mass": "physics.mass",
    "omega0": "physics.omega0",
    "n": "grid.n",
    "x_min": "grid.x_min",
    "x_max": "grid.x_max",
    "format": "output.format",
    "out": "output.path",
}
COMMAND_FLAGS = {
    "report": {"t": "state.t"},
    "dump-fields": {"t": "state.t"},
    "verify": {"t": "verify.t", "delta": "verify.delta", "inject_error": "verify.inject_error",
               "pde_t_final": "pde.t_final", "pde_dt": "pde.dt"},
    "sde": {"paths": "sde.n_paths", "seed": "sde.seed", "dt": "sde.dt", "t_final": "sde.t_final",
            "sampling": "sde.sampling", "checkpoints": "sde.checkpoints"},
    "sweep": {"t": "state.t", "var": "sweep.var", "start": "sweep.start", "stop": "sweep.stop",
              "num": "sweep.num"},
}


class Violation(Exception):
    """A checked property failed; carries the already-built output document."""


# ---------------------------------------------------------------------------
# shared helpers


def state_at(cfg: RunConfig, t: float) -> SqueezedStateParams:
    sp0 = cfg.initial_state()
    if t == 0:
        return sp0
    return evolve_params(sp0, cfg.frequency, t, cfg["evolution.ode_dt"])


def grid_for(cfg: RunConfig, sp: SqueezedStateParams) -> Grid:
    if cfg["grid.auto"]:
        return auto_grid(sp, cfg["grid.n"], cfg["grid.n_sigma"])
    return cfg.fixed_grid()


def grid_meta(g: Grid) -> dict:
    return {"x_min": g.x_min, "x_max": g.x_max, "n": g.n, "dx": g.dx}


def state_meta(sp: SqueezedStateParams) -> dict:
    return {"alpha": sp.alpha, "mu": sp.mu, "nu": sp.nu}


def base_meta(cmd: str, cfg: RunConfig) -> dict:
    return {"command": cmd, "version": __version__, "config": dict(cfg.raw)}


def output_format(cmd: str, cfg: RunConfig) -> str:
    return cfg.raw.get("output.format") if cfg.raw.get("output.format") else DEFAULT_FORMAT[cmd]


def output_path(cmd: str, cfg: RunConfig, fmt: str) -> str:
    if cfg["output.path"]:
        return cfg["output.path"]
    return str(Path(os.environ.get(OUT_DIR_ENV, ".")) / f"{cmd}.{fmt}")


def gaussian_grid_report(sp: SqueezedStateParams, g: Grid, rho_floor: float = 1e-12) -> MomentReport:
    psi = eval_psi(sp, g)
    return grid_moments(decompose(psi, g, sp.params, rho_floor), psi)


# ---------------------------------------------------------------------------
# commands; each returns (exit code, document, csv header, csv rows, summary rows)


def cmd_report(cfg: RunConfig) -> tuple[int, dict, list, list, list]:
    p, t = cfg.physics, cfg["state.t"]
    sp = state_at(cfg, t)
    g = grid_for(cfg, sp)
    exact = analytic_moments(sp)
    grid = gaussian_grid_report(sp, g)
    delta = moment_deltas(exact, grid)
    ur_a = ur_report(exact, p, cfg["tol.analytic"])
    ur_g = ur_report(grid, p, cfg["tol.grid"])
    rp = {"closed_form": r_p_closed_form(sp), "moments": r_p_from_moments(exact), "grid_moments": r_p_from_moments(grid)}
    bad_a = ur_a.violations(GAUSSIAN_SATURATED)
    bad_g = ur_g.violations(GAUSSIAN_SATURATED)
    if abs(rp["closed_form"]) > 1.0 + 1e-12:
        bad_a.append("r_p_bound")
    code = EXIT_VIOLATION if bad_a or bad_g else EXIT_OK
    doc = {
        "meta": {**base_meta("report", cfg), "t": t, "state": state_meta(sp), "grid": grid_meta(g),
                 "omega": cfg.frequency.describe()},
        "moments": {"analytic": exact.to_dict(), "grid": grid.to_dict(), "delta": delta, "r_p": rp},
        "ur": {"analytic": ur_a.to_dict(), "grid": ur_g.to_dict(),
               "violations": {"analytic": bad_a, "grid": bad_g}},
        "residuals": None,
    }
    ea, eg = exact.to_dict(), grid.to_dict()
    rows = [[k, ea[k], eg[k], delta[k]] for k in MomentReport.field_names()]
    rows.append(["r_p", rp["closed_form"], rp["grid_moments"], rp["grid_moments"] - rp["closed_form"]])
    for name in ur_a.relations:
        ga, gg = ur_a[name].gap, ur_g[name].gap
        rows.append([f"ur.{name}.gap", ga, gg, gg - ga])
    summary = [(r[0], r[1:]) for r in rows]
    summary.append(("violations", [",".join(bad_a) or "none", ",".join(bad_g) or "none", ""]))
    return code, doc, ["quantity", "analytic", "grid", "delta"], rows, summary


def cmd_verify(cfg: RunConfig) -> tuple[int, dict, list, list, list]:
    p, w = cfg.physics, cfg.frequency
    t, delta = cfg["verify.t"], cfg["verify.delta"]
    sp0 = cfg.initial_state()
    sp_t = state_at(cfg, t)
    g = grid_for(cfg, sp_t)
    snaps = analytic_snapshots(sp0, w, t, delta, g, cfg["evolution.ode_dt"])
    amp = cfg["verify.inject_error"]
    if amp > 0:
        snaps = [corrupt(s, g, amp, p) for s in snaps]
    res = all_residuals(snaps, g, delta, p, w(t), cfg["verify.rho_floor"])
    checks = [
        ("continuity_rms", res.continuity_rms, cfg["tol.residual"]),
        ("hjm_rms", res.hjm_rms, cfg["tol.residual"]),
        ("extremal1_rms", res.extremal1_rms, cfg["tol.extremal"]),
        ("extremal2_rms", res.extremal2_rms, cfg["tol.extremal"]),
    ]
    pde_doc = None
    t_pde = cfg["pde.t_final"]
    if cfg["verify.pde"] and t_pde > 0:
        g0 = cfg.fixed_grid()
        pde_cfg = PdeConfig(cfg["pde.dt"], t_pde, w, scheme=cfg["pde.scheme"])
        run = evolve_pde(eval_psi(sp0, g0), g0, pde_cfg, p)
        ref = eval_psi(evolve_params(sp0, w, t_pde, cfg["evolution.ode_dt"]), g0)
        cmp = compare_states(ref, run.snapshots[-1], g0)
        pde_doc = {"t_final": t_pde, "dt": cfg["pde.dt"], "scheme": cfg["pde.scheme"], "grid": grid_meta(g0),
                   "norm_drift": run.norm_drift, **cmp}
        checks.append(("pde_l2_error", cmp["l2_error_mod_phase"], cfg["tol.pde_l2"]))
        checks.append(("pde_norm_drift", run.norm_drift, cfg["tol.norm_drift"]))
    rows = [[name, value, limit, bool(value < limit)] for name, value, limit in checks]
    failed = [r[0] for r in rows if not r[3]]
    doc = {
        "meta": {**base_meta("verify", cfg), "t": t, "delta": delta, "inject_error": amp,
                 "state": state_meta(sp_t), "grid": grid_meta(g), "omega": w.describe()},
        "moments": None,
        "ur": None,
        "residuals": {"analytic": res.to_dict(), "pde": pde_doc,
                      "checks": {r[0]: {"value": r[1], "threshold": r[2], "pass": r[3]} for r in rows},
                      "failed": failed},
    }
    summary = [(r[0], [r[1], r[2], "ok" if r[3] else "FAIL"]) for r in rows]
    summary += [("extremal2_printed_rms", [res.extremal2_printed_rms, "", "info"]),
                ("excluded_mass", [res.excluded_mass, "", "info"])]
    return (EXIT_VIOLATION if failed else EXIT_OK), doc, ["check", "value", "threshold", "pass"], rows, summary


SDE_HEADER = ["t", "emp_mean", "emp_var", "stderr_mean", "stderr_var", "n_paths", "seed",
              "exact_mean", "exact_var", "z_mean", "z_var", "ks_stat", "ks_pvalue"]


def cmd_sde(cfg: RunConfig) -> tuple[int, dict, list, list, list]:
    p, w = cfg.physics, cfg.frequency
    sc = SdeConfig(cfg["sde.n_paths"], cfg["sde.dt"], cfg["sde.t_final"], cfg["sde.seed"],
                   cfg["sde.sampling"], cfg["sde.chunk_size"], cfg["sde.checkpoints"])
    sp0 = cfg.initial_state()
    drift = LinearDrift(sp0, w, sc.t_final, table_step=sc.dt, ode_dt=cfg["evolution.ode_dt"])
    if sc.initial_sampling == "grid":
        g = cfg.fixed_grid()
        law = initial_law(sc, grid_x=g.x, rho=np.abs(eval_psi(sp0, g)) ** 2)
    else:
        law = initial_law(sc, sp0)
    ens = sample_paths(sc, drift, p.diffusion, law)
    marg = analytic_marginals(sp0, w, ens.times, cfg["evolution.ode_dt"])
    z_max, rows = cfg["sde.z_max"], []
    for t, xs, (m, s) in zip(ens.times, ens.positions, marg):
        st = empirical_moments(xs, float(t))
        z_mean = (st.emp_mean - m) / st.stderr_mean if st.stderr_mean > 0 else 0.0
        z_var = (st.emp_var - s * s) / st.stderr_var if st.stderr_var > 0 else 0.0
        ks, pv = ks_gaussian(xs, m, s)
        rows.append([st.t, st.emp_mean, st.emp_var, st.stderr_mean, st.stderr_var, st.n_paths, sc.seed,
                     m, s * s, z_mean, z_var, ks, pv])
    failed = [f"t={r[0]:.6g}:{what}" for r in rows for what, z in (("mean", r[9]), ("var", r[10])) if abs(z) > z_max]
    if rows[-1][12] < cfg["sde.ks_alpha"]:
        failed.append("ks_final")
    doc = {
        "meta": {**base_meta("sde", cfg), "seed": sc.seed, "n_paths": sc.n_paths, "step": sc.step,
                 "n_steps": sc.n_steps, "chunk_size": sc.chunk_size, "omega": w.describe()},
        "moments": [dict(zip(SDE_HEADER, r)) for r in rows],
        "ur": None,
        "residuals": None,
        "failed": failed,
    }
    summary = [(f"{r[0]:.6g}", [r[1], r[2], r[7], r[8], r[9], r[10], r[12]]) for r in rows]
    return (EXIT_VIOLATION if failed else EXIT_OK), doc, SDE_HEADER, rows, summary


def _sweep_points(cfg: RunConfig) -> list[tuple[float, float, SqueezedStateParams]]:
    start, stop, num = cfg["sweep.start"], cfg["sweep.stop"], cfg["sweep.num"]
    if num < 1 or stop < start or (num > 1 and stop == start):
        raise ConfigError(f"empty sweep range [{start}, {stop}] with {num} points")
    values = np.linspace(start, stop, num)
    if cfg["sweep.var"] == "t":
        if start < 0:
            raise ConfigError("time sweep must start at t >= 0")
        states = params_trajectory(cfg.initial_state(), cfg.frequency, values, cfg["evolution.ode_dt"])
        r = cfg["state.r"] if cfg["state.kind"] == "ss" else 0.0
        return [(float(v), r, s) for v, s in zip(values, states)]
    if cfg["state.kind"] != "ss" or cfg["state.mu"] is not None:
        raise ConfigError("an r sweep needs state.kind = ss given by r (not mu, nu)")
    t, out = cfg["state.t"], []
    for v in values:
        sp0 = squeeze_params(float(v), cfg["state.alpha"], cfg.physics)
        sp = sp0 if t == 0 else evolve_params(sp0, cfg.frequency, t, cfg["evolution.ode_dt"])
        out.append((t, float(v), sp))
    return out


def cmd_sweep(cfg: RunConfig) -> tuple[int, dict, list, list, list]:
    p = cfg.physics
    points = _sweep_points(cfg)
    names = list(ur_report(analytic_moments(points[0][2]), p).relations)
    header = ["t", "r", *MomentReport.field_names(), "r_p", "r_p_grid", "max_abs_grid_delta",
              *(f"gap_{n}" for n in names)]
    rows, moments_doc, ur_doc, bad = [], [], [], []
    for t, r, sp in points:
        exact = analytic_moments(sp)
        ur = ur_report(exact, p, cfg["tol.analytic"])
        rp = r_p_closed_form(sp)
        if cfg["sweep.grid"]:
            gm = gaussian_grid_report(sp, grid_for(cfg, sp))
            rp_g = r_p_from_moments(gm)
            dmax = max(abs(v) for v in moment_deltas(exact, gm).values())
        else:
            rp_g, dmax = math.nan, math.nan
        viol = ur.violations(GAUSSIAN_SATURATED)
        if abs(rp) > 1.0 + 1e-12:
            viol.append("r_p_bound")
        if viol:
            bad.append({"t": t, "r": r, "failed": viol})
        rows.append([t, r, *exact.to_dict().values(), rp, rp_g, dmax, *(ur[n].gap for n in names)])
        moments_doc.append({"t": t, "r": r, **exact.to_dict(), "r_p": rp, "r_p_grid": rp_g, "max_abs_grid_delta": dmax})
        ur_doc.append({"t": t, "r": r, **{n: ur[n].gap for n in names}})
    doc = {
        "meta": {**base_meta("sweep", cfg), "var": cfg["sweep.var"], "num": len(points), "omega": cfg.frequency.describe()},
        "moments": moments_doc,
        "ur": ur_doc,
        "residuals": None,
        "failed": bad,
    }
    rp_col = [r[header.index("r_p")] for r in rows]
    sq = [r[header.index("gap_sum_stochastic")] + 1.0 for r in rows]
    summary = [("points", [len(rows)]), ("min r_p", [min(rp_col)]), ("max r_p", [max(rp_col)]),
               ("min stochastic sum", [min(sq)]), ("failed points", [len(bad)])]
    return (EXIT_VIOLATION if bad else EXIT_OK), doc, header, rows, summary


def cmd_dump_fields(cfg: RunConfig) -> tuple[int, dict, list, list, list]:
    t = cfg["state.t"]
    sp = state_at(cfg, t)
    g = grid_for(cfg, sp)
    psi = eval_psi(sp, g)
    mf = decompose(psi, g, sp.params, cfg["verify.rho_floor"])
    header = ["x", "re_psi", "im_psi", "rho", "S", "p_c", "p_s", "v_q", "in_support"]
    cols = [g.x, psi.real, psi.imag, mf.rho, mf.S, mf.p_c, mf.p_s, mf.v_q]
    rows = [[*(float(c[i]) for c in cols), int(mf.mask[i])] for i in range(g.n)]
    doc = {
        "meta": {**base_meta("dump-fields", cfg), "t": t, "state": state_meta(sp), "grid": grid_meta(g),
                 "excluded_mass": mf.excluded_mass},
        "moments": None,
        "ur": None,
        "residuals": None,
        "fields": {h: [r[k] for r in rows] for k, h in enumerate(header)},
    }
    summary = [("points", [g.n]), ("excluded_mass", [mf.excluded_mass])]
    return EXIT_OK, doc, header, rows, summary


COMMANDS: dict[str, Callable[[RunConfig], tuple[int, dict, list, list, list]]] = {
    "report": cmd_report,
    "verify": cmd_verify,
    "sde": cmd_sde,
    "sweep": cmd_sweep,
    "dump-fields": cmd_dump_fields,
}


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stochmech", description="Stochastic-momentum analysis of Gaussian oscillator states.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat 'section.key = value' config file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
    common.add_argument("--state", choices=["cs", "ss"])
    common.add_argument("--alpha", help="complex displacement, e.g. 1+2i")
    common.add_argument("--r", help="squeeze parameter (ss)")
    common.add_argument("--mu", help="complex mu (ss, with --nu)")
    common.add_argument("--nu", help="complex nu (ss, with --mu)")
    common.add_argument("--omega", help="frequency profile: const:W | quench:W0,W1@T1 | table:T0:W0,T1:W1")
    common.add_argument("--hbar")
    common.add_argument("--mass")
    common.add_argument("--omega0")
    common.add_argument("--n", help="grid points")
    common.add_argument("--x-min", dest="x_min")
    common.add_argument("--x-max", dest="x_max")
    common.add_argument("--auto-grid", action="store_true", help="centre the grid on the state")
    common.add_argument("--format", choices=["json", "csv"])
    common.add_argument("--out", help="output file, '-' for stdout")
    common.add_argument("-q", "--quiet", action="store_true", help="no summary table")

    p = sub.add_parser("report", parents=[common], help="moments and uncertainty relations, analytic vs grid")
    p.add_argument("--t", help="evaluation time")

    p = sub.add_parser("verify", parents=[common], help="Bohm/extremal residuals and PDE cross-check")
    p.add_argument("--t", help="time of the residual check")
    p.add_argument("--delta", help="centred time step for the residuals")
    p.add_argument("--inject-error", dest="inject_error", help="relative density perturbation (negative control)")
    p.add_argument("--pde-t-final", dest="pde_t_final", help="PDE run length (0 skips it)")
    p.add_argument("--pde-dt", dest="pde_dt")

    p = sub.add_parser("sde", parents=[common], help="Nelson diffusion Monte Carlo")
    p.add_argument("--paths")
    p.add_argument("--seed")
    p.add_argument("--dt")
    p.add_argument("--t-final", dest="t_final")
    p.add_argument("--sampling", choices=["gaussian", "grid"])
    p.add_argument("--checkpoints")

    p = sub.add_parser("sweep", parents=[common], help="moment table over a range of t or r")
    p.add_argument("--t", help="evaluation time for an r sweep")
    p.add_argument("--var", choices=["t", "r"])
    p.add_argument("--start")
    p.add_argument("--stop")
    p.add_argument("--num")

    p = sub.add_parser("dump-fields", parents=[common], help="Madelung fields on the grid")
    p.add_argument("--t", help="evaluation time")
    return ap


def config_from_args(args: argparse.Namespace) -> RunConfig:
    layers: list[dict[str, str]] = []
    if args.config:
        layers.append(load_file(args.config))
    flags: dict[str, str] = {}
    mapping = {**COMMON_FLAGS, **COMMAND_FLAGS.get(args.command, {})}
    for attr, key in mapping.items():
        value = getattr(args, attr, None)
        if value is not None:
            flags[key] = str(value)
    if args.auto_grid:
        flags["grid.auto"] = "true"
    for item in args.set:
        key, eq, value = item.partition("=")
        if not eq:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        flags[key.strip()] = value.strip()
    layers.append(flags)
    return resolve(*layers)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = config_from_args(args)
        code, doc, header, rows, summary = COMMANDS[args.command](cfg)
    except (ConfigError, NodeError, TailMassError, ValueError) as exc:
        print(f"stochmech {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SdeError as exc:
        print(f"stochmech {args.command}: {exc}", file=sys.stderr)
        return EXIT_VIOLATION

    fmt = output_format(args.command, cfg)
    path = output_path(args.command, cfg, fmt)
    text = dumps(doc) if fmt == "json" else csv_text(header, rows)
    write_text(path, text)
    if fmt == "csv" and path != "-":
        meta_text = dumps({"meta": doc["meta"], "csv_header": header})
        write_text(path + ".json", meta_text)
    if not args.quiet and path != "-":
        print(human_table(summary), end="")
        status = "ok" if code == EXIT_OK else "VIOLATION"
        print(f"{args.command}: {status}; wrote {path}")
    return code


if __name__ == "__main__":
    raise SystemExit(main())
