import math

import numpy as np
import pytest

from dressedspin.propagator import (
    EnsembleError, EvolutionConfig, LindbladChannel, NoiseModel, PropagationError, ensemble_average,
    magnus_propagator, propagate_lindblad, propagate_pure, sample_noise, shot_rng,
)
from dressedspin.spin import DRESSED_X, DRESSED_Z, SIGMA_X, SIGMA_Z, orbital_decoherence_rate, OrbitalBranch

TWO_PI = 2 * math.pi
FIXED = EvolutionConfig("fixed-step")


def constant(H, f_max=None):
    H = np.asarray(H, dtype=complex)

    def h(t):
        return np.broadcast_to(H, np.shape(t) + (2, 2))
    h.max_frequency = f_max
    return h


@pytest.mark.parametrize("cfg", [FIXED, EvolutionConfig()], ids=["fixed", "adaptive"])
def test_stationary_state_picks_up_phase(cfg):
    omega = 3.394e9
    h = constant(math.pi * omega * SIGMA_Z, omega)
    t = 2.3e-9
    psi = propagate_pure(h, [1, 0], 0.0, t, cfg)
    # |0> sits at -omega/2 in this basis.
    assert np.allclose(psi, [np.exp(1j * math.pi * omega * t), 0], atol=1e-7)
    assert abs(np.linalg.norm(psi) - 1) < 1e-9


@pytest.mark.parametrize("cfg", [FIXED, EvolutionConfig()], ids=["fixed", "adaptive"])
def test_resonant_pi_pulse(cfg):
    rabi = 9.2e6
    h = constant(math.pi * rabi * DRESSED_X, rabi)
    psi = propagate_pure(h, [1, 0], 0.0, 1 / (2 * rabi), cfg)
    assert abs(psi[1]) ** 2 == pytest.approx(1.0, abs=1e-9)


def test_zero_duration_and_bad_interval():
    h = constant(SIGMA_X)
    assert np.allclose(propagate_pure(h, [0, 1], 1.0, 1.0), [0, 1])
    with pytest.raises(ValueError):
        propagate_pure(h, [0, 1], 1.0, 0.0)
    with pytest.raises(ValueError):
        propagate_pure(h, [1, 1], 0.0, 1.0)


def test_config_validation():
    with pytest.raises(ValueError):
        EvolutionConfig(tolerance=1e-2)
    with pytest.raises(ValueError):
        EvolutionConfig(method="leapfrog")
    with pytest.raises(ValueError):
        EvolutionConfig(max_step=1e-9).step_for(1e9)
    assert EvolutionConfig(max_step=1e-12).step_for(1e9) == 1e-12


def test_halving_step_converges():
    omega, rabi = 1e9, 50e6

    def h(t):
        t = np.asarray(t)[..., None, None]
        return TWO_PI * (0.5 * omega * SIGMA_Z + rabi * np.cos(TWO_PI * omega * t) * SIGMA_X)
    h.max_frequency = omega
    dt = 1 / (20 * omega)
    cfg = EvolutionConfig()
    a = propagate_pure(h, [1, 0], 0.0, 40e-9, cfg)
    b = propagate_pure(h, [1, 0], 0.0, 40e-9, EvolutionConfig(max_step=dt / 2))
    assert np.linalg.norm(a - b) < 10 * cfg.tolerance
    # Fixed-step Magnus is fourth order: each halving shrinks the change about 16x.
    runs = [propagate_pure(h, [1, 0], 0.0, 40e-9, EvolutionConfig("fixed-step", max_step=dt / k)) for k in (1, 2, 4)]
    d1, d2 = np.linalg.norm(runs[0] - runs[1]), np.linalg.norm(runs[1] - runs[2])
    assert 12 < d1 / d2 < 20


def test_fixed_and_adaptive_agree():
    def h(t):
        t = np.asarray(t)[..., None, None]
        return TWO_PI * (30e6 * SIGMA_Z + 20e6 * np.sin(TWO_PI * 60e6 * t) * SIGMA_X)
    h.max_frequency = 60e6
    a = propagate_pure(h, [1, 0], 0.0, 200e-9, FIXED)
    b = propagate_pure(h, [1, 0], 0.0, 200e-9, EvolutionConfig(tolerance=1e-10))
    assert abs(np.vdot(a, b)) ** 2 == pytest.approx(1.0, abs=1e-8)


def test_magnus_product_is_unitary():
    h = constant(TWO_PI * 1e8 * (SIGMA_X + 0.3 * SIGMA_Z))
    U = magnus_propagator(h, 0.0, 1e-7, 1e-10)
    assert np.allclose(U.conj().T @ U, np.eye(2), atol=1e-12)


@pytest.mark.parametrize("cfg", [FIXED, EvolutionConfig(tolerance=1e-10)], ids=["fixed", "adaptive"])
def test_lindblad_closed_system_limit(cfg):
    def h(t):
        t = np.asarray(t)[..., None, None]
        return TWO_PI * (5e6 * SIGMA_Z + 3e6 * np.cos(TWO_PI * 10e6 * t) * SIGMA_X)
    h.max_frequency = 10e6
    psi0 = np.array([0.6, 0.8j])
    psi = propagate_pure(h, psi0, 0.0, 300e-9, cfg)
    rho = propagate_lindblad(h, [], np.outer(psi0, psi0.conj()), 0.0, 300e-9, cfg)
    assert np.allclose(rho, np.outer(psi, psi.conj()), atol=1e-8)


@pytest.mark.parametrize("cfg", [FIXED, EvolutionConfig()], ids=["fixed", "adaptive"])
def test_pure_dephasing_rate(cfg):
    gamma, t = 2e5, 3e-6
    rho0 = np.full((2, 2), 0.5, dtype=complex)
    rho = propagate_lindblad(constant(np.zeros((2, 2))), [LindbladChannel(SIGMA_Z, gamma)], rho0, 0.0, t, cfg)
    assert rho[0, 1].real == pytest.approx(0.5 * math.exp(-2 * gamma * t), rel=1e-7)
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-9)


def test_orbital_channel_envelope():
    gamma = orbital_decoherence_rate(OrbitalBranch())
    h = constant(math.pi * 76e6 * DRESSED_Z, 76e6)
    rho0 = np.full((2, 2), 0.5, dtype=complex)
    times = np.linspace(0, 5e-6, 6)
    coherence = [abs(propagate_lindblad(h, [LindbladChannel(DRESSED_Z, gamma)], rho0, 0.0, t, FIXED)[0, 1])
                 for t in times]
    assert np.allclose(coherence, 0.5 * np.exp(-2 * gamma * times), rtol=1e-6)
    # 1/e of the coherence lands at a few microseconds.
    assert 1e-6 < 1 / (2 * gamma) < 1e-5


def test_lindblad_rejects_invalid_density():
    with pytest.raises(ValueError):
        propagate_lindblad(constant(SIGMA_X), [], np.eye(2), 0.0, 1e-9)
    with pytest.raises(ValueError):
        LindbladChannel(SIGMA_Z, -1.0)


def test_noise_model_validation():
    with pytest.raises(ValueError):
        NoiseModel("ornstein-uhlenbeck", 1e5)
    with pytest.raises(ValueError):
        NoiseModel.quasi_static(-1.0)
    with pytest.raises(ValueError):
        NoiseModel("pink", 1.0)


def test_zero_sigma_gives_zero_path():
    for model in (NoiseModel.quasi_static(0.0), NoiseModel.ornstein_uhlenbeck(0.0, 1e-7), NoiseModel.white(1e5)):
        path = sample_noise(model, 1e-6, shot_rng(0, 0))
        assert np.all(path(np.linspace(0, 1e-6, 11)) == 0)


def test_white_noise_is_a_channel():
    (ch,) = NoiseModel.white(2e5).channels()
    rho0 = np.full((2, 2), 0.5, dtype=complex)
    rho = propagate_lindblad(constant(np.zeros((2, 2))), [ch], rho0, 0.0, 1e-6, FIXED)
    assert rho[0, 1].real == pytest.approx(0.5 * math.exp(-2e5 * 1e-6))


def test_quasi_static_statistics():
    sigma = 1.7e5
    rng = shot_rng(42, 0)
    values = np.array([sample_noise(NoiseModel.quasi_static(sigma), 1e-6, rng).values[0] for _ in range(100_000)])
    assert np.std(values) == pytest.approx(sigma, rel=0.01)


def test_ou_autocorrelation():
    sigma, tau = 1e5, 200e-9
    model = NoiseModel.ornstein_uhlenbeck(sigma, tau)
    paths = np.array([sample_noise(model, 2e-6, shot_rng(5, k)).values for k in range(4000)])
    dt = model.default_grid_step(2e-6)
    lags = [0, 10, 20, 40]
    for lag in lags:
        c = np.mean(paths[:, 0] * paths[:, lag])
        assert c == pytest.approx(sigma**2 * math.exp(-lag * dt / tau), abs=0.06 * sigma**2)


def test_ou_long_correlation_reproduces_quasi_static():
    sigma = 1e5
    model = NoiseModel.ornstein_uhlenbeck(sigma, 1e3)
    paths = np.array([sample_noise(model, 1e-6, shot_rng(9, k)).values for k in range(20000)])
    assert np.ptp(paths, axis=1).max() < 1e-3 * sigma
    assert np.std(paths[:, 0]) == pytest.approx(sigma, rel=0.02)


def _ramsey_phase(times):
    def shot(path, rng):
        return 0.5 * (1 + np.cos(TWO_PI * 2 * path(0.0) * times))
    return shot


def test_noiseless_ensemble_has_zero_error():
    times = np.linspace(0, 1e-6, 5)
    res = ensemble_average(_ramsey_phase(times), NoiseModel(), 10, seed=3, duration=1e-6)
    assert np.all(res.stderr == 0)
    assert np.allclose(res.mean, 1.0)


def test_ensemble_matches_gaussian_envelope():
    sigma = 2e5
    times = np.linspace(0, 2e-6, 21)
    res = ensemble_average(_ramsey_phase(times), NoiseModel.quasi_static(sigma), 10_000, seed=1, duration=2e-6)
    # <cos(4 pi eta t)> over eta ~ N(0, sigma).
    analytic = 0.5 * (1 + np.exp(-0.5 * (2 * TWO_PI * sigma * times) ** 2))
    assert np.all(np.abs(res.mean - analytic) <= 2 * res.stderr + 1e-12)


def test_ensemble_is_reproducible_across_threads():
    times = np.linspace(0, 1e-6, 7)
    model = NoiseModel.ornstein_uhlenbeck(2e5, 1e-7)
    runs = [ensemble_average(_ramsey_phase(times), model, 600, seed=11, duration=1e-6, threads=k)
            for k in (1, 2, 3)]
    for r in runs[1:]:
        assert np.array_equal(r.mean, runs[0].mean)
        assert np.array_equal(r.stderr, runs[0].stderr)
    other = ensemble_average(_ramsey_phase(times), model, 600, seed=12, duration=1e-6)
    assert not np.array_equal(other.mean, runs[0].mean)


def test_ensemble_needs_two_shots_and_reports_failures():
    with pytest.raises(ValueError):
        ensemble_average(_ramsey_phase(np.zeros(1)), NoiseModel(), 1, seed=0, duration=1e-6)

    def broken(path, rng):
        if rng.random() > 0.5:
            raise PropagationError("step underflow", time=1e-7)
        return np.zeros(1)

    with pytest.raises(EnsembleError) as info:
        ensemble_average(broken, NoiseModel(), 50, seed=0, duration=1e-6)
    assert isinstance(info.value.shot, int)
    assert f"shot {info.value.shot}" in str(info.value)
