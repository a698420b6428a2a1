import math

import numpy as np
import pytest
from scipy import stats

from stochmech.madelung import decompose
from stochmech.numerics import PhysicalParams, make_grid
from stochmech.sde import (
    GaussianLaw,
    GridDrift,
    GridLaw,
    LinearDrift,
    SdeConfig,
    SdeError,
    analytic_marginals,
    drift_field,
    empirical_moments,
    ensemble_stats,
    initial_law,
    ks_gaussian,
    sample_paths,
    zero_drift,
)
from stochmech.states import FrequencyProfile, analytic_moments, coherent_params, eval_psi, evolve_params, squeeze_params

ONE = FrequencyProfile.constant(1.0)
X = np.linspace(-3, 3, 13)


def test_ground_state_drift():
    assert np.allclose(drift_field(coherent_params(0))(X, 0.0), -X)


def test_coherent_state_drift_follows_mean():
    sp = coherent_params(0.7 + 0.4j)
    drift = drift_field(sp, ONE, 3.0)
    for t in (0.0, 1.234, 3.0):
        m = analytic_moments(evolve_params(sp, ONE, t))
        assert np.allclose(drift(X, t), -(X - m.mean_x) + m.mean_p, atol=1e-6)


def test_squeezed_drift_slope():
    a, b = LinearDrift.stationary(squeeze_params(math.log(2))).coefficients(0.0)
    assert a == pytest.approx(-4.0) and b == pytest.approx(0.0, abs=1e-15)


def test_grid_drift_matches_linear_drift_and_extends_tails():
    g = make_grid(-12, 12, 2048)
    sp = squeeze_params(0.3, 0.4 + 0.2j)
    gd = GridDrift(decompose(eval_psi(sp, g), g))
    ld = LinearDrift.stationary(sp)
    xs = np.linspace(-4, 4, 41)
    assert np.allclose(gd(xs, 0.0), ld(xs, 0.0), atol=1e-8)
    far = np.array([-30.0, 30.0])
    assert np.allclose(gd(far, 0.0), ld(far, 0.0), atol=1e-6)


def test_config_validation():
    with pytest.raises(ValueError):
        SdeConfig(99, 1e-3, 1.0)
    with pytest.raises(ValueError):
        SdeConfig(100, 0.0, 1.0)
    with pytest.raises(ValueError):
        SdeConfig(100, 1e-3, 1.0, seed=-1)
    cfg = SdeConfig(100, 0.3, 1.0)
    assert cfg.n_steps == 4 and cfg.step == pytest.approx(0.25)


def test_empirical_moments_trivial_and_errors():
    s = empirical_moments(np.full(50, 2.5), 1.0)
    assert (s.emp_mean, s.emp_var, s.stderr_mean, s.stderr_var) == (2.5, 0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        empirical_moments(np.array([1.0]), 0.0)


def test_empirical_moments_against_scipy():
    x = np.random.default_rng(3).standard_normal(5000) * 1.7 + 0.2
    s = empirical_moments(x, 0.0)
    n = x.size
    assert s.emp_var == pytest.approx(np.var(x, ddof=1), rel=1e-12)
    m4 = stats.moment(x, 4)
    assert s.stderr_var == pytest.approx(math.sqrt((m4 - (n - 3) / (n - 1) * s.emp_var**2) / n), rel=1e-12)
    assert s.stderr_mean == pytest.approx(stats.sem(x), rel=1e-12)


def test_reference_stream_is_frozen():
    # one unit step of pure diffusion from the origin gives standard normal samples
    cfg = SdeConfig(1000, 1.0, 1.0, seed=2024, n_checkpoints=1)
    ens = sample_paths(cfg, zero_drift, 0.5, GaussianLaw(0.0, 0.0))
    s = empirical_moments(ens.positions[-1], 1.0)
    assert s.emp_mean == 0.08444305676378348
    assert s.emp_var == 0.9617471914215147
    assert s.stderr_var == 0.03934812949343702


def test_pure_diffusion_growth():
    cfg = SdeConfig(40000, 1e-2, 2.0, seed=5, n_checkpoints=4)
    ens = sample_paths(cfg, zero_drift, 0.5, GaussianLaw(0.0, math.sqrt(0.5)))
    for s in ensemble_stats(ens):
        assert abs(s.emp_var - (0.5 + s.t)) < 3 * s.stderr_var


def test_stderr_scales_with_paths():
    law = GaussianLaw(0.0, 1.0)
    ses = []
    for n in (10000, 40000):
        ens = sample_paths(SdeConfig(n, 0.5, 0.5, seed=9, n_checkpoints=1), zero_drift, 0.5, law)
        ses.append(empirical_moments(ens.positions[-1], 0.5))
    assert ses[0].stderr_mean / ses[1].stderr_mean == pytest.approx(2.0, rel=0.05)
    assert (ses[0].stderr_var / ses[1].stderr_var) ** 2 == pytest.approx(4.0, rel=0.15)


def test_ground_state_stationarity():
    sp = coherent_params(0)
    cfg = SdeConfig(20000, 1e-3, 3.0, seed=1, n_checkpoints=6)
    ens = sample_paths(cfg, drift_field(sp), PhysicalParams().diffusion, initial_law(cfg, sp))
    for s in ensemble_stats(ens):
        assert abs(s.emp_mean) < 3 * s.stderr_mean
        assert abs(s.emp_var - 0.5) < 3 * s.stderr_var


def test_coherent_mean_tracking_and_marginals():
    sp = coherent_params(1.0 - 0.5j)
    t_final = math.pi
    cfg = SdeConfig(20000, 1e-3, t_final, seed=4, n_checkpoints=5)
    ens = sample_paths(cfg, drift_field(sp, ONE, t_final), 0.5, initial_law(cfg, sp))
    k = ens.times.size
    for s, (m, sig), xs in zip(ensemble_stats(ens), analytic_marginals(sp, ONE, ens.times), ens.positions):
        assert abs(s.emp_mean - m) < 3 * s.stderr_mean
        assert ks_gaussian(xs, m, sig)[1] > 0.01 / k  # Bonferroni over the checkpoints


def test_squeezed_state_under_quench():
    sp = squeeze_params(math.log(2))
    w = FrequencyProfile.quench([1, 2], [0.0])
    cfg = SdeConfig(20000, 5e-4, 1.5, seed=8, n_checkpoints=3)
    ens = sample_paths(cfg, drift_field(sp, w, 1.5), 0.5, initial_law(cfg, sp))
    for s, (m, sig) in zip(ensemble_stats(ens), analytic_marginals(sp, w, ens.times)):
        assert abs(s.emp_var - sig**2) < 3 * s.stderr_var


def test_grid_initial_law():
    g = make_grid(-12, 12, 2048)
    sp = squeeze_params(-0.4, 0.6)
    law = GridLaw.from_density(g.x, np.abs(eval_psi(sp, g)) ** 2)
    x = law.sample(np.random.default_rng(0), 50000)
    assert ks_gaussian(x, sp.mean_x, sp.sigma_x)[1] > 0.01
    with pytest.raises(ValueError):
        GridLaw.from_density(g.x, np.zeros(g.n))


def test_seed_determinism_independent_of_workers():
    sp = squeeze_params(0.5, 0.3)
    drift = drift_field(sp, ONE, 1.0)
    law = GaussianLaw(sp.mean_x, sp.sigma_x)
    runs = [sample_paths(SdeConfig(3000, 1e-2, 1.0, seed=77, chunk_size=512, workers=w), drift, 0.5, law)
            for w in (1, 4, 4)]
    for r in runs[1:]:
        assert np.array_equal(r.positions, runs[0].positions)
    other = sample_paths(SdeConfig(3000, 1e-2, 1.0, seed=78, chunk_size=512), drift, 0.5, law)
    assert not np.array_equal(other.positions, runs[0].positions)


def test_time_step_bias_below_noise():
    # Euler-Maruyama variance recursion for v+ = -x, D = 1/2: v <- (1-h)^2 v + h
    def em_variance(h, t):
        v = 0.5
        for _ in range(round(t / h)):
            v = (1 - h) ** 2 * v + h
        return v

    sp = coherent_params(0)
    stats_by_dt = []
    for dt in (1e-3, 5e-4):
        cfg = SdeConfig(20000, dt, 2.0, seed=21, n_checkpoints=1)
        ens = sample_paths(cfg, drift_field(sp), 0.5, initial_law(cfg, sp))
        stats_by_dt.append(empirical_moments(ens.positions[-1], 2.0))
    bias_change = abs(em_variance(1e-3, 2.0) - em_variance(5e-4, 2.0))
    assert bias_change < stats_by_dt[1].stderr_var
    diff = stats_by_dt[0].emp_var - stats_by_dt[1].emp_var
    assert abs(diff) < 3 * math.hypot(stats_by_dt[0].stderr_var, stats_by_dt[1].stderr_var)


def test_checkpoints_snap_to_steps():
    cfg = SdeConfig(100, 0.1, 1.0, seed=0)
    ens = sample_paths(cfg, zero_drift, 0.5, GaussianLaw(0, 1), times=[0.3, 0.71])
    assert np.allclose(ens.times, [0.0, 0.3, 0.7])
    with pytest.raises(KeyError):
        ens.at(0.5)
    with pytest.raises(ValueError):
        sample_paths(cfg, zero_drift, 0.5, GaussianLaw(0, 1), times=[2.0])


def test_non_finite_drift_raises():
    cfg = SdeConfig(100, 0.1, 1.0, seed=0)
    with pytest.raises(SdeError):
        sample_paths(cfg, lambda x, t: np.full_like(x, np.nan), 0.5, GaussianLaw(0, 1))
