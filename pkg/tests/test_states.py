import cmath
import math

import numpy as np
import pytest

from stochmech.numerics import PhysicalParams, integrate, make_grid, norm_squared
from stochmech.states import (
    EpsilonState,
    FrequencyProfile,
    SqueezedStateParams,
    analytic_moments,
    auto_grid,
    coherent_alpha_t,
    coherent_params,
    constraint_value,
    epsilon_from_params,
    epsilon_trajectory,
    eval_psi,
    evolve_epsilon,
    evolve_params,
    linear_momentum_fields,
    mu_nu_from_epsilon,
    r_p_closed_form,
    squeeze_params,
    wronskian_constraint,
)

LN2 = math.log(2)
S2 = math.sqrt(2)


def ss_quarter_period():
    """r = ln 2 evolved to t = pi/4 under omega = 1: mu = 1 + i/4, nu = 1/4 + i."""
    return evolve_params(squeeze_params(LN2), FrequencyProfile.constant(1.0), math.pi / 4)


def test_coherent_params():
    sp = coherent_params(0)
    assert sp.mu == pytest.approx(1 / S2) and sp.nu == pytest.approx(1 / S2)
    sp = coherent_params(1 + 2j)
    assert sp.alpha == 1 + 2j and sp.mu == sp.nu
    assert constraint_value(sp.mu, sp.nu) == pytest.approx(1.0, abs=1e-15)


def test_squeeze_params():
    assert squeeze_params(0, 0.3j).mu == coherent_params(0.3j).mu
    sp = squeeze_params(LN2)
    assert sp.mu == pytest.approx(S2) and sp.nu == pytest.approx(1 / (2 * S2))
    assert constraint_value(sp.mu, sp.nu) == pytest.approx(1.0, abs=1e-15)
    sp = squeeze_params(-LN2)
    assert sp.mu == pytest.approx(1 / (2 * S2)) and sp.nu == pytest.approx(S2)


def test_squeezed_params_validation():
    with pytest.raises(ValueError):
        SqueezedStateParams(0j, 1 + 0j, 1 + 0j, PhysicalParams())
    with pytest.raises(ValueError):
        SqueezedStateParams(0j, 1 + 0j, 0j, PhysicalParams())


def test_u_v_tilde_recover_mu_nu():
    sp = squeeze_params(0.4, 1j)
    assert sp.u_tilde == pytest.approx(math.cosh(0.4))
    assert sp.v_tilde == pytest.approx(math.sinh(0.4))


def test_epsilon_from_params():
    e = epsilon_from_params(coherent_params(0))
    assert e.eps == pytest.approx(1) and e.eps_dot == pytest.approx(1j)
    e = epsilon_from_params(squeeze_params(LN2))
    assert e.eps == pytest.approx(0.5) and e.eps_dot == pytest.approx(2j)
    sp = squeeze_params(0.3, 0.2 - 0.1j)
    mu, nu = mu_nu_from_epsilon(epsilon_from_params(sp), sp.params)
    assert abs(mu - sp.mu) < 1e-12 and abs(nu - sp.nu) < 1e-12


def test_epsilon_round_trip_with_other_reference_frequency():
    p = PhysicalParams(omega0=2.5)
    sp = squeeze_params(-0.7, 0.5, p)
    mu, nu = mu_nu_from_epsilon(epsilon_from_params(sp), p)
    assert abs(mu - sp.mu) < 1e-12 and abs(nu - sp.nu) < 1e-12


def test_mu_nu_from_epsilon():
    assert mu_nu_from_epsilon(EpsilonState(1, 1j)) == pytest.approx((1 / S2, 1 / S2))
    t = math.pi / 4
    mu, nu = mu_nu_from_epsilon(EpsilonState(0.5 * math.cos(t) + 2j * math.sin(t), -0.5 * math.sin(t) + 2j * math.cos(t)))
    assert mu == pytest.approx(S2 * math.cos(t) + 1j * math.sin(t) / (2 * S2))
    assert nu == pytest.approx(math.cos(t) / (2 * S2) + 1j * S2 * math.sin(t))
    assert (mu * nu.conjugate()).imag == pytest.approx(-15 / 16)


def test_evolve_epsilon_period_return():
    e = evolve_epsilon(EpsilonState(1, 1j), FrequencyProfile.constant(1), 2 * math.pi)
    assert abs(e.eps - 1) < 1e-8 and abs(e.eps_dot - 1j) < 1e-8


def test_evolve_epsilon_closed_form():
    t = math.pi / 4
    e = evolve_epsilon(EpsilonState(0.5, 2j), FrequencyProfile.constant(1), t)
    assert abs(e.eps - (math.cos(t) / 2 + 2j * math.sin(t))) < 1e-12
    e0 = EpsilonState(0.5, 2j)
    assert evolve_epsilon(e0, FrequencyProfile.constant(1), 0.0) == e0


def test_constraint_conserved_over_ten_periods():
    e0 = epsilon_from_params(squeeze_params(0.9, 0.1))
    times = np.linspace(0, 20 * math.pi, 101)
    for w in (FrequencyProfile.constant(1), FrequencyProfile.quench([1, 2, 0.5], [3, 30])):
        for e in epsilon_trajectory(e0, w, times):
            assert abs(wronskian_constraint(e) - 1) < 1e-9


def test_quench_matches_piecewise_closed_form():
    # omega jumps 1 -> 2 at t = 1: eps and eps_dot are continuous at the switch
    e0 = EpsilonState(1, 1j)
    w = FrequencyProfile.quench([1, 2], [1.0])
    e = evolve_epsilon(e0, w, 2.5)
    a, ad = cmath.exp(1j), 1j * cmath.exp(1j)
    s = 1.5
    exact = a * math.cos(2 * s) + ad / 2 * math.sin(2 * s)
    assert abs(e.eps - exact) < 1e-9


def test_step_limit_and_profile_validation():
    with pytest.raises(ValueError):
        evolve_epsilon(EpsilonState(1, 1j), FrequencyProfile.constant(200), 1.0, dt=1e-3)
    with pytest.raises(ValueError):
        FrequencyProfile.constant(-1)
    with pytest.raises(ValueError):
        FrequencyProfile.quench([1, 2], [1, 2])
    with pytest.raises(ValueError):
        FrequencyProfile.table([0, 0], [1, 2])


def test_frequency_profiles():
    q = FrequencyProfile.quench([1, 2], [0.0])
    assert q(-0.1) == 1 and q(0.0) == 2 and q(5) == 2
    tab = FrequencyProfile.table([0, 1], [1, 3])
    assert tab(0.5) == 2 and tab(4) == 3
    assert q.describe() == "quench:1,2@0"
    assert q.breakpoints(-1, 1) == [0.0]


def test_coherent_alpha_rotation_matches_parameter_evolution():
    a = 0.8 - 0.3j
    sp_t = evolve_params(coherent_params(a), FrequencyProfile.constant(1), 1.1)
    ref = coherent_params(coherent_alpha_t(a, 1.0, 1.1))
    assert analytic_moments(sp_t).mean_x == pytest.approx(analytic_moments(ref).mean_x, abs=1e-10)
    assert analytic_moments(sp_t).mean_p == pytest.approx(analytic_moments(ref).mean_p, abs=1e-10)


def test_eval_psi_ground_state():
    g = make_grid(-12, 12, 2048)
    psi = eval_psi(coherent_params(0), g)
    ref = math.pi**-0.25 * np.exp(-g.x**2 / 2)
    phase = np.vdot(psi, ref) / abs(np.vdot(psi, ref))
    assert np.max(np.abs(psi * phase - ref)) < 1e-12


@pytest.mark.parametrize("sp", [coherent_params(1 + 2j), squeeze_params(1.2, -0.5j), squeeze_params(-1.0, 0.7)])
def test_eval_psi_normalized(sp):
    psi = eval_psi(sp, auto_grid(sp, 2048))
    assert abs(norm_squared(psi, auto_grid(sp, 2048)) - 1) < 1e-8


def test_eval_psi_squeezed_width():
    g = make_grid(-12, 12, 2048)
    rho = np.abs(eval_psi(squeeze_params(LN2), g)) ** 2
    assert integrate(g.x**2 * rho, g) == pytest.approx(1 / 8, abs=1e-12)


def test_eval_psi_rejects_narrow_grid():
    with pytest.raises(ValueError, match="grid too narrow"):
        eval_psi(coherent_params(0), make_grid(-3, 3, 256))


def test_analytic_moments_ground_state():
    m = analytic_moments(coherent_params(0))
    assert (m.var_x, m.var_ps, m.var_pc, m.var_p) == pytest.approx((0.5, 0.5, 0, 0.5))
    assert (m.cov_x_ps, m.cov_pc_ps, m.q_var_p) == pytest.approx((-0.5, 0, 0.5))


def test_analytic_moments_squeezed_t0():
    m = analytic_moments(squeeze_params(LN2))
    assert (m.var_x, m.var_ps, m.var_pc, m.var_p) == pytest.approx((1 / 8, 2, 0, 2))
    assert (m.cov_x_p, m.q_var_p) == pytest.approx((-0.5, 2))


def test_analytic_moments_quarter_period():
    sp = ss_quarter_period()
    assert abs(sp.mu - (1 + 0.25j)) < 1e-12 and abs(sp.nu - (0.25 + 1j)) < 1e-12
    m = analytic_moments(sp)
    assert sp.im_mu_nustar == pytest.approx(-15 / 16, abs=1e-12)
    assert m.q_var_p == pytest.approx(17 / 16, abs=1e-12)
    assert m.var_p == pytest.approx(49 / 272, abs=1e-12)
    assert m.cov_x_p == pytest.approx(7 / 16, abs=1e-12)
    assert m.cov_pc_ps == pytest.approx(-15 / 34, abs=1e-12)


def test_mean_position_uses_real_part_of_alpha():
    # l sqrt(2) Re(alpha) for a coherent state
    m = analytic_moments(coherent_params(0.3 + 2j))
    assert m.mean_x == pytest.approx(S2 * 0.3)
    assert m.mean_p == pytest.approx(S2 * 2.0)
    p = PhysicalParams(hbar=1.0, mass=4.0, omega0=1.0)
    m = analytic_moments(coherent_params(0.3 + 2j, p))
    assert m.mean_p == pytest.approx(S2 * 2.0 / p.l)


def test_r_p_closed_form_values():
    assert r_p_closed_form(coherent_params(0.4j)) == 0
    assert r_p_closed_form(squeeze_params(LN2)) == 0
    assert r_p_closed_form(ss_quarter_period()) == pytest.approx(240 / 289, abs=1e-12)


def test_linear_momentum_fields_ground_state():
    f = linear_momentum_fields(coherent_params(0))
    assert f["p_c"] == pytest.approx((0, 0)) and f["p_s"] == pytest.approx((-1, 0))


def test_units_cover_every_field():
    from stochmech.states import MomentReport

    assert set(MomentReport.units(PhysicalParams())) == set(MomentReport.field_names())
