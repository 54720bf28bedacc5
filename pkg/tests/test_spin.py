import math
import warnings

import numpy as np
import pytest

from dressedspin.propagator import EvolutionConfig, propagate_pure
from dressedspin.spin import (
    DRESSED_BASIS, SIGMA_X, SIGMA_Y, SIGMA_Z, DriveField, OrbitalBranch, PerturbativeValidityWarning,
    SpinSystem, dressing_unitary, from_dressed, lab_hamiltonian, noise_suppression_amplitude,
    orbital_decoherence_rate, resonance_set, rwa_hamiltonian, sideband_amplitude, sideband_rabi,
    to_dressed,
)

OMEGA = 3.394e9
OMEGA_D = 76e6
TWO_PI = 2 * math.pi


def hermitian_gap(H):
    return np.linalg.norm(H - H.conj().T) / max(np.linalg.norm(H), 1e-300)


def test_pauli_algebra():
    assert np.allclose(SIGMA_X @ SIGMA_Y - SIGMA_Y @ SIGMA_X, 2j * SIGMA_Z)
    for s in (SIGMA_X, SIGMA_Y, SIGMA_Z):
        assert np.allclose(s @ s, np.eye(2))


def test_free_hamiltonian():
    H = lab_hamiltonian(SpinSystem(OMEGA), 0.37e-9)
    # |1> is the upper level.
    assert np.allclose(H, np.diag([-math.pi * OMEGA, math.pi * OMEGA]))
    assert np.isclose(np.ptp(np.linalg.eigvalsh(H)), TWO_PI * OMEGA)


def test_dressing_drive_at_zero_time():
    system = SpinSystem(OMEGA, (DriveField(OMEGA_D, OMEGA, role="dressing"),))
    H = lab_hamiltonian(system, 0.0)
    # Full cos(0) = 1 coupling; its co-rotating half Omega_D/2 sets the dressed splitting Omega_D.
    assert H[0, 1] == pytest.approx(TWO_PI * OMEGA_D)
    assert H[0, 1] == H[1, 0]


def test_windowed_drive_is_off_outside_window():
    drive = DriveField(10e6, OMEGA, window=(1e-9, 2e-9))
    H_off = lab_hamiltonian(SpinSystem(OMEGA, (drive,)), 3e-9)
    assert np.allclose(H_off, lab_hamiltonian(SpinSystem(OMEGA), 3e-9))


def test_hamiltonians_are_hermitian_to_machine_precision():
    rng = np.random.default_rng(3)
    for _ in range(50):
        drives = (DriveField(rng.uniform(0, 3e8), rng.uniform(1e6, 5e9), lambda_z=rng.uniform(0, 5e7),
                             phase=rng.uniform(0, 6.3), role="dressing"),
                  DriveField(rng.uniform(0, 1e8), rng.uniform(1e6, 5e9), lambda_z=rng.uniform(0, 5e7)))
        t = rng.uniform(0, 1e-5)
        H = lab_hamiltonian(SpinSystem(rng.uniform(1e8, 5e9), drives), t, eta=rng.normal(0, 1e6))
        assert hermitian_gap(H) < 1e-12
        assert hermitian_gap(rwa_hamiltonian(rng.uniform(0, 3e8), rng.uniform(0, 1e8), t)) < 1e-12


def test_system_validation():
    with pytest.raises(ValueError):
        SpinSystem(0.0)
    with pytest.raises(ValueError):
        SpinSystem(OMEGA, (DriveField(1e6, OMEGA, role="dressing"), DriveField(2e6, OMEGA, role="dressing")))
    with pytest.raises(ValueError):
        DriveField(-1.0, OMEGA)
    with pytest.raises(ValueError):
        DriveField(1.0, OMEGA, window=(2e-9, 1e-9))


@pytest.mark.parametrize("t", [0.0, 0.3e-9, 12.5e-9])
def test_to_dressed_ground_state(t):
    assert np.allclose(to_dressed([1, 0], OMEGA, t), [math.sqrt(0.5), -math.sqrt(0.5)])


def test_to_dressed_plus_state():
    assert np.allclose(to_dressed([math.sqrt(0.5), math.sqrt(0.5)], OMEGA, 0.0), [1, 0])
    assert np.allclose(DRESSED_BASIS[:, 0], [math.sqrt(0.5), math.sqrt(0.5)])


def test_to_dressed_matches_explicit_matrix():
    rng = np.random.default_rng(7)
    psi = rng.normal(size=2) + 1j * rng.normal(size=2)
    psi /= np.linalg.norm(psi)
    t = 0.7e-9
    e = np.exp(1j * TWO_PI * OMEGA * t)
    W = np.array([[1, e], [-1, e]]) / math.sqrt(2)
    assert np.allclose(to_dressed(psi, OMEGA, t), W @ psi, atol=1e-14)
    assert np.allclose(dressing_unitary(OMEGA, t), W, atol=1e-14)


def test_dressed_round_trip_and_norm():
    rng = np.random.default_rng(11)
    psi = rng.normal(size=(20, 2)) + 1j * rng.normal(size=(20, 2))
    psi /= np.linalg.norm(psi, axis=1, keepdims=True)
    t = rng.uniform(0, 1e-6, size=20)
    d = to_dressed(psi, OMEGA, t)
    assert np.allclose(np.linalg.norm(d, axis=1), 1, atol=1e-12)
    assert np.allclose(from_dressed(d, OMEGA, t), psi, atol=1e-12)


def test_to_dressed_rejects_unnormalized():
    with pytest.raises(ValueError):
        to_dressed([1.0, 0.1], OMEGA)


def test_rwa_undriven_splitting():
    H = rwa_hamiltonian(OMEGA_D, 0.0, 4e-9)
    assert np.allclose(H, np.diag([math.pi * OMEGA_D, -math.pi * OMEGA_D]))


def test_rwa_sine_vanishes_at_zero():
    H = rwa_hamiltonian(OMEGA_D, 18.4e6, 0.0)
    assert np.allclose(H, rwa_hamiltonian(OMEGA_D, 0.0, 0.0))


def test_rwa_rabi_period():
    # Omega_P = 18.4 MHz rotates the dressed states at Omega_P / 2 = 9.2 MHz.
    omega_P = 18.4e6

    def h(t):
        return rwa_hamiltonian(OMEGA_D, omega_P, t)
    h.max_frequency = OMEGA_D
    cfg = EvolutionConfig("fixed-step")
    times = np.linspace(0, 130e-9, 261)
    p = [abs(propagate_pure(h, [0, 1], 0.0, t, cfg)[0]) ** 2 for t in times]
    t_flip = times[int(np.argmax(p))]
    assert max(p) > 0.99
    assert t_flip == pytest.approx(108.7e-9 / 2, abs=1.5e-9)


def test_resonance_set_paper_values():
    res = resonance_set(OMEGA, OMEGA_D)
    assert res.frequencies == pytest.approx((76e6, 3.318e9, 3.470e9))
    assert res.upper_sideband > res.lower_sideband > res.low
    assert res.detunings(3.318e9) == pytest.approx((OMEGA + 3.318e9, 76e6))


def test_resonance_set_undressed_limit():
    assert resonance_set(OMEGA, 0.0).frequencies == (0.0, OMEGA, OMEGA)


def test_resonance_set_rejects_strong_dressing():
    with pytest.raises(ValueError):
        resonance_set(OMEGA, OMEGA)


def test_resonance_set_ignores_dummy_drive():
    dressing = DriveField(OMEGA_D, OMEGA, role="dressing")
    plain = SpinSystem(OMEGA, (dressing,)).resonances()
    dummy = SpinSystem(OMEGA, (dressing, DriveField(5e6, 40e9))).resonances()
    assert plain.frequencies == dummy.frequencies


def test_orbital_rate_examples():
    assert orbital_decoherence_rate(OrbitalBranch(50e9, 0.0, 30e6)) == 0.0
    rate = orbital_decoherence_rate(OrbitalBranch(50e9, 3e9, 30e6))
    assert rate == pytest.approx(108e3)
    assert 1 / rate == pytest.approx(9.26e-6, rel=1e-3)  # a few microseconds of coherence
    doubled = orbital_decoherence_rate(OrbitalBranch(50e9, 6e9, 30e6))
    assert doubled == pytest.approx(4 * rate)


def test_orbital_rate_flags_strong_drive():
    with pytest.warns(PerturbativeValidityWarning):
        orbital_decoherence_rate(OrbitalBranch(10e9, 4e9, 30e6))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        orbital_decoherence_rate(OrbitalBranch(50e9, 3e9, 30e6))


def test_noise_suppression_examples():
    assert noise_suppression_amplitude(0.0, OMEGA_D, 0.0) == 0.0
    assert round(noise_suppression_amplitude(1e6, OMEGA_D, 0.0) / 1e3, 1) == 13.2
    ratio = noise_suppression_amplitude(1e6, 76e6, 0.0) / noise_suppression_amplitude(1e6, 150e6, 0.0)
    assert ratio == pytest.approx(150 / 76)
    with pytest.raises(ValueError):
        noise_suppression_amplitude(1e6, OMEGA_D, OMEGA_D)


@pytest.mark.parametrize("k", [1e-3, 0.5, 7.0, 1e4])
def test_rate_estimators_are_homogeneous(k):
    base = orbital_decoherence_rate(OrbitalBranch(50e9, 3e9, 30e6))
    assert orbital_decoherence_rate(OrbitalBranch(50e9 * k, 3e9 * k, 30e6 * k)) == pytest.approx(k * base)
    base = noise_suppression_amplitude(1e6, 76e6, 2e6)
    assert noise_suppression_amplitude(1e6 * k, 76e6 * k, 2e6 * k) == pytest.approx(k * base)


def test_sideband_rabi_small_drive_limit_and_inverse():
    assert sideband_rabi(1e3, OMEGA_D) == pytest.approx(0.5e3, rel=1e-9)
    amp = sideband_amplitude(9.2e6, OMEGA_D)
    assert sideband_rabi(amp, OMEGA_D) == pytest.approx(9.2e6, rel=1e-9)
    assert amp > 18.4e6
    with pytest.raises(ValueError):
        sideband_amplitude(80e6, OMEGA_D)


def test_longitudinal_dressing_term_negligible():
    # Lambda_D / omega = 1e-2 over ten dressing periods.
    lam = 1e-2 * OMEGA
    with_lam = SpinSystem(OMEGA, (DriveField(OMEGA_D, OMEGA, lambda_z=lam, role="dressing"),))
    without = SpinSystem(OMEGA, (DriveField(OMEGA_D, OMEGA, role="dressing"),))
    cfg = EvolutionConfig("fixed-step")
    t1 = 10 / OMEGA_D
    finals = []
    for system in (with_lam, without):
        def h(t, system=system):
            return lab_hamiltonian(system, t)
        h.max_frequency = system.max_frequency
        finals.append(propagate_pure(h, [1, 0], 0.0, t1, cfg))
    assert abs(np.vdot(*finals)) ** 2 >= 0.999
