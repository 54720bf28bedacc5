import numpy as np
import pytest

from dressedspin.tuning import CavitySpec, SivInstance, dressed_resonance, solve_pair

OMEGA_A = 3.40e9
B_STAR, A_STAR = 1.2, 1.0


def constructed_pair():
    siv1 = SivInstance(2.80e9, 80e6)
    omega_C = dressed_resonance(siv1.epsilon * B_STAR, OMEGA_A, siv1.eta_drive * A_STAR)
    c = omega_C - OMEGA_A
    eta2 = 60e6
    delta2 = (c * c - (eta2 * A_STAR) ** 2) / c
    return siv1, SivInstance((OMEGA_A + delta2) / B_STAR, eta2), CavitySpec(OMEGA_A, omega_C)


def test_dressed_resonance_examples():
    assert dressed_resonance(OMEGA_A, OMEGA_A, 76e6) == OMEGA_A - 76e6
    assert dressed_resonance(3.6e9, OMEGA_A, 0.0) == OMEGA_A
    assert dressed_resonance(3.394e9, 3.394e9, 76e6) == pytest.approx(3.318e9)
    with pytest.raises(ValueError):
        dressed_resonance(3.3e9, OMEGA_A, -1.0)


def test_dressed_resonance_monotone_in_drive():
    omegas = np.linspace(0, 500e6, 200)
    for wi in (3.2e9, 3.4e9, 3.7e9):
        r = dressed_resonance(wi, OMEGA_A, omegas)
        assert np.all(np.diff(r) < 0)


def test_dressed_resonance_lower_branch_bound():
    rng = np.random.default_rng(1)
    wi = rng.uniform(1e9, 6e9, 500)
    om = rng.uniform(0, 1e9, 500)
    r = dressed_resonance(wi, OMEGA_A, om)
    assert np.all(r <= np.minimum(wi, OMEGA_A) + np.abs(wi - OMEGA_A) / 2 + 1e-6)
    upper = dressed_resonance(wi, OMEGA_A, om, branch="upper")
    assert np.all(upper >= r)


def test_spec_instance_is_infeasible():
    # eps = 2.5 and 3.0 GHz/kG with eta = 80 and 60 MHz: the two SiVs cannot share omega_C at B* = 1.2, A* = 1.
    wC1 = dressed_resonance(2.5e9 * B_STAR, OMEGA_A, 80e6 * A_STAR)
    wC2 = dressed_resonance(3.0e9 * B_STAR, OMEGA_A, 60e6 * A_STAR)
    assert abs(wC1 - wC2) > 1e6


def test_constructed_instance_recovered():
    siv1, siv2, cavity = constructed_pair()
    sol = solve_pair(siv1, siv2, cavity, tol=1e3)
    assert sol.converged
    assert sol.max_residual < 1e3
    assert sol.B == pytest.approx(B_STAR, abs=1e-9)
    assert sol.A == pytest.approx(A_STAR, abs=1e-9)
    assert any(abs(b - B_STAR) < 1e-6 for b, _ in sol.roots)


def test_solution_forward_residuals():
    siv1, siv2, cavity = constructed_pair()
    sol = solve_pair(siv1, siv2, cavity)
    for s, r in zip((siv1, siv2), sol.residuals):
        forward = dressed_resonance(s.epsilon * sol.B, cavity.omega_A, s.eta_drive * sol.A) - cavity.omega_C
        assert forward == pytest.approx(r, abs=1e-3)
        assert abs(forward) < 1e3


def test_label_exchange_invariance():
    siv1, siv2, cavity = constructed_pair()
    a = solve_pair(siv1, siv2, cavity)
    b = solve_pair(siv2, siv1, cavity)
    assert (a.B, a.A) == pytest.approx((b.B, b.A), abs=1e-9)


def test_identical_closed_form():
    twin = SivInstance(3.0e9, 76e6)
    sol = solve_pair(twin, twin, CavitySpec(3.394e9, 3.318e9))
    assert sol.converged
    assert sol.B == pytest.approx(3.394e9 / 3.0e9, abs=1e-12)
    assert sol.A == pytest.approx(1.0, abs=1e-12)


def test_proportional_rejected():
    with pytest.raises(ValueError):
        solve_pair(SivInstance(2.5e9, 80e6), SivInstance(5.0e9, 160e6), CavitySpec(OMEGA_A, 3.3e9))


def test_cavity_above_auxiliary_is_infeasible(caplog):
    sol = solve_pair(SivInstance(2.5e9, 80e6), SivInstance(3.0e9, 60e6), CavitySpec(OMEGA_A, 3.5e9))
    assert not sol.converged
    assert sol.roots == ()
    twin = SivInstance(3.0e9, 60e6)
    assert not solve_pair(twin, twin, CavitySpec(OMEGA_A, 3.5e9)).converged


def test_instance_validation():
    with pytest.raises(ValueError):
        SivInstance(0.0, 1e6)
    with pytest.raises(ValueError):
        CavitySpec(3e9, 3e9)


def test_solution_records():
    siv1, siv2, cavity = constructed_pair()
    names = [r[0] for r in solve_pair(siv1, siv2, cavity).records()]
    assert names[:6] == ["B", "A", "residual_1", "residual_2", "converged", "iterations"]
