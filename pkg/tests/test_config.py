import math

import pytest

from stochmech.config import ConfigError, SCHEMA, load_file, parse_complex, parse_frequency, parse_text, resolve


def test_parse_complex():
    assert parse_complex("1+2i") == 1 + 2j
    assert parse_complex(" -0.5i ") == -0.5j
    assert parse_complex("3") == 3
    assert parse_complex("0.7071067811865476j") == 0.7071067811865476j
    for bad in ("", "1+", "abc", "inf"):
        with pytest.raises(ConfigError):
            parse_complex(bad)


def test_parse_frequency():
    assert parse_frequency("const:1")(5.0) == 1.0
    q = parse_frequency("quench:1,2@0")
    assert q(-1) == 1 and q(0) == 2
    q = parse_frequency("quench:1,2,0.5@1,2.5")
    assert q(2) == 2 and q(3) == 0.5
    t = parse_frequency("table:0:1,2:3")
    assert t(1) == 2
    for bad in ("const:", "const:-1", "quench:1,2", "quench:1@0", "table:0:1", "sine:1", "table:0-1,1:2"):
        with pytest.raises(ConfigError):
            parse_frequency(bad)


def test_parse_text():
    text = """
    # comment
    state.kind = ss   # trailing comment
    state.r=0.5
    evolution.omega = quench:1,2@0
    """
    raw = parse_text(text)
    assert raw == {"state.kind": "ss", "state.r": "0.5", "evolution.omega": "quench:1,2@0"}


@pytest.mark.parametrize(
    "text, match",
    [("state.colour = red", "unknown key"), ("state.r = 1\nstate.r = 2", "duplicate"), ("just words", "expected")],
)
def test_parse_text_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_text(text)


def test_defaults_resolve():
    cfg = resolve()
    assert set(cfg.raw) == set(SCHEMA)
    assert cfg.physics.l == 1.0
    assert cfg.fixed_grid().n == 2048
    assert cfg["pde.t_final"] == 2 * math.pi
    assert cfg.initial_state().mu == cfg.initial_state().nu


def test_layers_override_in_order():
    cfg = resolve({"state.kind": "ss", "state.r": "0.5"}, {"state.r": "0.25"})
    assert cfg["state.r"] == 0.25
    assert abs(cfg.initial_state().mu - math.exp(0.25) / math.sqrt(2)) < 1e-15


def test_explicit_mu_nu():
    cfg = resolve({"state.kind": "ss", "state.mu": "1+0.25i", "state.nu": "0.25+1i"})
    sp = cfg.initial_state()
    assert sp.mu == 1 + 0.25j
    with pytest.raises(ConfigError):
        resolve({"state.kind": "ss", "state.mu": "1"}).initial_state()
    with pytest.raises(ConfigError):
        resolve({"state.kind": "ss", "state.mu": "1", "state.nu": "1"}).initial_state()


@pytest.mark.parametrize(
    "layer",
    [
        {"grid.n": "8"},
        {"grid.x_min": "1", "grid.x_max": "1"},
        {"physics.hbar": "0"},
        {"pde.dt": "-1"},
        {"sde.n_paths": "10"},
        {"sde.seed": "-3"},
        {"verify.t": "0"},
        {"output.format": "xml"},
        {"grid.auto": "maybe"},
        {"grid.n": "many"},
        {"tol.grid": "nan"},
        {"nope.key": "1"},
    ],
)
def test_invalid_values_rejected(layer):
    with pytest.raises(ConfigError):
        resolve(layer)


def test_to_text_round_trips(tmp_path):
    cfg = resolve({"state.kind": "ss", "state.alpha": "1-2i", "sde.seed": "12345678901234567890"})
    path = tmp_path / "run.cfg"
    path.write_text(cfg.to_text())
    again = resolve(load_file(path))
    assert again.values == cfg.values


def test_missing_file():
    with pytest.raises(ConfigError, match="cannot read"):
        load_file("/nonexistent/run.cfg")
