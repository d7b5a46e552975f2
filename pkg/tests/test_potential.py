import numpy as np
import pytest

from phasegeo.potential import (
    DoubleWell,
    PotentialError,
    get_well,
    interface_constant,
    optimal_profile,
    quartic_well,
)


def test_quartic_values():
    w = quartic_well()
    assert w.w(0.0) == pytest.approx(0.25, abs=1e-15)
    assert w.w(1.0) == 0.0 and w.w(-1.0) == 0.0
    assert w.dw(1.0) == 0.0 and w.dw(-1.0) == 0.0
    assert w.d2w(0.0) == pytest.approx(-1.0, abs=1e-15)
    assert w.d2w(1.0) == pytest.approx(2.0, abs=1e-15)


def test_quartic_passes_hypothesis_battery():
    assert quartic_well().check_hypotheses()


def test_registry_rejects_unknown():
    with pytest.raises(PotentialError):
        get_well("sextic")
    assert get_well("quartic").name == "quartic"


def test_bad_well_rejected():
    # single-well paraboloid: W' changes sign once, W''(c) not negative
    bad = DoubleWell(
        name="bad", a=-1.0, b=1.0, c=0.0,
        w=lambda s: (np.asarray(s) ** 2 - 1.0) ** 2 * 0.25 + 0.1,
        dw=lambda s: np.asarray(s) ** 3 - np.asarray(s),
        d2w=lambda s: 3.0 * np.asarray(s) ** 2 - 1.0,
    )
    with pytest.raises(PotentialError):
        bad.check_hypotheses()


def test_interface_constant_quartic():
    # antiderivative oracle: int_{-1}^{1} (1 - s^2)/2 ds = 2/3
    assert interface_constant(quartic_well()) == pytest.approx(2.0 / 3.0, abs=1e-8)


def test_interface_constant_scaling():
    # sqrt scaling: W -> 4W doubles c_W
    w = quartic_well()
    scaled = DoubleWell(
        name="scaled_quartic", a=-1.0, b=1.0, c=0.0,
        w=lambda s: 4.0 * w.w(s), dw=lambda s: 4.0 * w.dw(s),
        d2w=lambda s: 4.0 * w.d2w(s),
    )
    assert interface_constant(scaled) == pytest.approx(4.0 / 3.0, abs=1e-8)


def test_profile_closed_form():
    q = optimal_profile(quartic_well(), 0.1)
    assert q(0.0) == pytest.approx(0.0, abs=1e-15)
    # tanh(0.2 / 0.2) = tanh(1)
    assert q(0.2) == pytest.approx(np.tanh(1.0), abs=1e-6)


def test_profile_saturates():
    # decay oracle: 1 - tanh(x) <= 2 exp(-2x); 1e-6 needs x >= 7.3
    q = optimal_profile(quartic_well(), 0.05)
    assert abs(q(0.5) - 1.0) < 2 * np.exp(-2 * 5.0)
    for t in (0.75, 1.0):
        assert abs(q(t) - 1.0) < 1e-6
        assert abs(q(-t) + 1.0) < 1e-6


def test_profile_equipartition():
    # eps*(q')^2 = W(q)/eps along the optimal profile
    eps = 0.1
    w = quartic_well()
    q = optimal_profile(w, eps)
    t = np.linspace(-10 * eps, 10 * eps, 201)
    lhs = eps * q.derivative(t) ** 2
    rhs = w.w(q(t)) / eps
    assert np.max(np.abs(lhs - rhs) / np.maximum(np.abs(rhs), 1e-12)) < 1e-6


def test_profile_transition_cost():
    # quadrature of eps^-1 W(q) + eps (q')^2 over the line equals 2 c_W
    eps = 0.05
    w = quartic_well()
    q = optimal_profile(w, eps)
    t = np.linspace(-1.0, 1.0, 20001)
    dens = w.w(q(t)) / eps + eps * q.derivative(t) ** 2
    cost = np.trapezoid(dens, t)
    assert cost == pytest.approx(2.0 * interface_constant(w), abs=1e-5)


def test_profile_ode_fallback_matches_closed_form():
    # same quartic well registered under another name exercises the ODE path
    w = quartic_well()
    anon = DoubleWell(name="quartic_ode", a=-1.0, b=1.0, c=0.0,
                      w=w.w, dw=w.dw, d2w=w.d2w)
    eps = 0.1
    q_ode = optimal_profile(anon, eps)
    assert not q_ode.closed_form
    t = np.linspace(-0.5, 0.5, 101)
    assert np.max(np.abs(q_ode(t) - np.tanh(t / (2 * eps)))) < 1e-6


def test_profile_theta_scaling():
    # theta = 1/2 widens the profile by sqrt(2)
    eps = 0.1
    q = optimal_profile(quartic_well(), eps, theta=0.5)
    t = np.linspace(-0.3, 0.3, 31)
    assert np.max(np.abs(q(t) - np.tanh(t / (np.sqrt(2.0) * eps)))) < 1e-12


def test_cw_reflection_invariance():
    w = quartic_well()
    reflected = DoubleWell(
        name="reflected", a=-1.0, b=1.0, c=0.0,
        w=lambda s: w.w(-np.asarray(s)), dw=lambda s: -w.dw(-np.asarray(s)),
        d2w=lambda s: w.d2w(-np.asarray(s)),
    )
    assert interface_constant(reflected) == pytest.approx(
        interface_constant(w), abs=1e-10
    )
