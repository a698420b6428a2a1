"""Run configuration: flat ``section.key = value`` text plus command-line overrides.

A config file looks like::

    # squeezed state, quenched at t=0
    state.kind = ss
    state.r = 0.6931471805599453
    evolution.omega = quench:1,2@0
    grid.n = 1024

Blank lines and ``#`` comments are ignored. Every key must be one of
:data:`SCHEMA`; anything else is rejected.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Mapping

from .numerics import Grid, PhysicalParams
from .states import FrequencyProfile, SqueezedStateParams, coherent_params, squeeze_params

TWO_PI = repr(2.0 * math.pi)


class ConfigError(ValueError):
    """Malformed or inconsistent configuration (CLI exit code 2)."""


def parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def parse_complex(s: str) -> complex:
    """Complex number written with ``i`` or ``j``, e.g. ``1+2i``, ``-0.5i``, ``3``."""
    text = s.strip().replace(" ", "").replace("i", "j")
    if not text:
        raise ConfigError("empty complex number")
    try:
        z = complex(text)
    except ValueError:
        raise ConfigError(f"not a complex number: {s!r}") from None
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise ConfigError(f"complex number must be finite: {s!r}")
    return z


def _floats(text: str, what: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"bad number list in {what}: {text!r}") from None
    if not vals:
        raise ConfigError(f"empty number list in {what}")
    return vals


def parse_frequency(s: str) -> FrequencyProfile:
    """``const:W``, ``quench:W0,W1,...@T1,...`` or ``table:T0:W0,T1:W1,...``."""
    kind, _, body = s.strip().partition(":")
    try:
        if kind == "const":
            (w,) = _floats(body, "const")
            return FrequencyProfile.constant(w)
        if kind == "quench":
            ws, at, ts = body.partition("@")
            if not at:
                raise ConfigError(f"quench profile needs '@' switch times: {s!r}")
            return FrequencyProfile.quench(_floats(ws, "quench"), _floats(ts, "quench"))
        if kind == "table":
            rows = [r.split(":") for r in body.split(",") if r.strip()]
            if any(len(r) != 2 for r in rows):
                raise ConfigError(f"table rows must be T:W pairs: {s!r}")
            return FrequencyProfile.table([float(t) for t, _ in rows], [float(w) for _, w in rows])
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"bad frequency profile {s!r}: {exc}") from None
    raise ConfigError(f"unknown frequency profile {s!r}; use const:, quench: or table:")


def _choice(*options: str) -> Callable[[str], str]:
    def parse(s: str) -> str:
        v = s.strip()
        if v not in options:
            raise ConfigError(f"expected one of {', '.join(options)}, got {s!r}")
        return v

    return parse


def _opt_complex(s: str) -> complex | None:
    return None if not s.strip() else parse_complex(s)


def _seed(s: str) -> int:
    v = int(s, 0)
    if not 0 <= v < 2**64:
        raise ConfigError("seed must fit in 64 unsigned bits")
    return v


# key -> (parser, default text)
SCHEMA: dict[str, tuple[Callable[[str], Any], str]] = {
    "physics.hbar": (float, "1"),
    "physics.mass": (float, "1"),
    "physics.omega0": (float, "1"),
    "grid.x_min": (float, "-12"),
    "grid.x_max": (float, "12"),
    "grid.n": (int, "2048"),
    "grid.auto": (parse_bool, "false"),
    "grid.n_sigma": (float, "12"),
    "state.kind": (_choice("cs", "ss"), "cs"),
    "state.alpha": (parse_complex, "0"),
    "state.r": (float, "0"),
    "state.mu": (_opt_complex, ""),
    "state.nu": (_opt_complex, ""),
    "state.t": (float, "0"),
    "evolution.omega": (parse_frequency, "const:1"),
    "evolution.ode_dt": (float, "1e-3"),
    "pde.dt": (float, "1e-3"),
    "pde.t_final": (float, TWO_PI),
    "pde.scheme": (_choice("compact4", "second"), "compact4"),
    "verify.t": (float, "0.7"),
    "verify.delta": (float, "1e-4"),
    "verify.inject_error": (float, "0"),
    "verify.pde": (parse_bool, "true"),
    "verify.rho_floor": (float, "1e-12"),
    "sde.n_paths": (int, "100000"),
    "sde.dt": (float, "1e-3"),
    "sde.t_final": (float, "10"),
    "sde.seed": (_seed, "0"),
    "sde.sampling": (_choice("gaussian", "grid"), "gaussian"),
    "sde.chunk_size": (int, "16384"),
    "sde.checkpoints": (int, "10"),
    "sde.z_max": (float, "3"),
    "sde.ks_alpha": (float, "0.01"),
    "sweep.var": (_choice("t", "r"), "t"),
    "sweep.start": (float, "0"),
    "sweep.stop": (float, TWO_PI),
    "sweep.num": (int, "200"),
    "sweep.grid": (parse_bool, "true"),
    "tol.analytic": (float, "1e-6"),
    "tol.grid": (float, "1e-4"),
    "tol.residual": (float, "1e-5"),
    "tol.extremal": (float, "1e-4"),
    "tol.pde_l2": (float, "1e-4"),
    "tol.norm_drift": (float, "1e-10"),
    "output.format": (_choice("", "json", "csv"), ""),  # empty: per-command default
    "output.path": (str, ""),
}

_LINE = re.compile(r"^([A-Za-z_][\w]*\.[A-Za-z_][\w]*)\s*=\s*(.*?)\s*$")


def parse_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Raw ``key -> value`` pairs from config text; rejects unknown keys and duplicates."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _LINE.match(line)
        if not m:
            raise ConfigError(f"{source}:{lineno}: expected 'section.key = value', got {raw.strip()!r}")
        key, value = m.groups()
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def load_file(path: str | Path) -> dict[str, str]:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
    return parse_text(text, str(p))


@dataclass(frozen=True)
class RunConfig:
    """Resolved configuration; ``raw`` keeps the textual value of every key."""

    raw: Mapping[str, str]
    values: Mapping[str, Any]

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    @property
    def physics(self) -> PhysicalParams:
        return PhysicalParams(self["physics.hbar"], self["physics.mass"], self["physics.omega0"])

    @property
    def frequency(self) -> FrequencyProfile:
        return self["evolution.omega"]

    def fixed_grid(self) -> Grid:
        return Grid(self["grid.x_min"], self["grid.x_max"], self["grid.n"])

    def initial_state(self) -> SqueezedStateParams:
        """State parameters at t = 0."""
        p, a = self.physics, self["state.alpha"]
        if self["state.kind"] == "cs":
            return coherent_params(a, p)
        mu, nu = self["state.mu"], self["state.nu"]
        if (mu is None) != (nu is None):
            raise ConfigError("give both state.mu and state.nu, or neither")
        if mu is not None:
            try:
                return SqueezedStateParams(a, mu, nu, p)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        return squeeze_params(self["state.r"], a, p)

    def to_text(self) -> str:
        """Config file text that reproduces this run."""
        return "".join(f"{k} = {v}\n" for k, v in self.raw.items())


def resolve(*layers: Mapping[str, str]) -> RunConfig:
    """Defaults overlaid by each layer in turn (file, then command-line flags)."""
    raw = {k: default for k, (_, default) in SCHEMA.items()}
    for layer in layers:
        for k, v in layer.items():
            if k not in SCHEMA:
                raise ConfigError(f"unknown key {k!r}")
            raw[k] = str(v)
    values: dict[str, Any] = {}
    for k, (parse, _) in SCHEMA.items():
        try:
            values[k] = parse(raw[k])
        except ConfigError as exc:
            raise ConfigError(f"{k}: {exc}") from None
        except ValueError:
            raise ConfigError(f"{k}: cannot parse {raw[k]!r}") from None
        if isinstance(values[k], float) and not math.isfinite(values[k]):
            raise ConfigError(f"{k}: value must be finite")
    cfg = RunConfig(raw, values)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    try:
        cfg.physics
        cfg.fixed_grid()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    positive = ("grid.n_sigma", "evolution.ode_dt", "pde.dt", "verify.delta", "verify.rho_floor",
                "sde.dt", "sde.t_final", "sde.z_max", "sde.ks_alpha", "tol.analytic", "tol.grid",
                "tol.residual", "tol.extremal", "tol.pde_l2", "tol.norm_drift")
    for k in positive:
        if not cfg[k] > 0:
            raise ConfigError(f"{k} must be positive")
    for k in ("state.t", "pde.t_final", "verify.inject_error"):
        if cfg[k] < 0:
            raise ConfigError(f"{k} must be nonnegative")
    if cfg["verify.t"] < cfg["verify.delta"]:
        raise ConfigError("verify.t must be at least verify.delta")
    if cfg["sde.n_paths"] < 100:
        raise ConfigError("sde.n_paths must be at least 100")
    if cfg["sde.chunk_size"] < 1 or cfg["sde.checkpoints"] < 1:
        raise ConfigError("sde.chunk_size and sde.checkpoints must be positive")
