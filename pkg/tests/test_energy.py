import numpy as np
import pytest

from phasegeo.energy import EnergyReport, ResolutionError, energy_deficit, diffuse_energy, sharp_diffuse_energy0
from phasegeo.geometry import ball, sharp_interface_field, stripe, well_prepared
from phasegeo.grid import make_grid
from phasegeo.potential import quartic_well


@pytest.fixture(scope="module")
def well():
    return quartic_well()


@pytest.fixture(scope="module")
def square256():
    return make_grid(2, (1, 1), (256, 256))


def test_constant_midpoint_energy(well):
    g = make_grid(1, 1.0, 64)
    rep = diffuse_energy(g.constant_field(0.0), 0.1, well)
    assert rep.total == pytest.approx(2.5, abs=1e-12)  # W(0)/eps
    assert rep.gradient == 0.0
    assert rep.mass == pytest.approx(0.0, abs=1e-14)


def test_constant_well_value_energy(well):
    g = make_grid(1, 1.0, 64)
    rep = diffuse_energy(g.constant_field(1.0), 0.1, well)
    assert rep.total == 0.0


def test_report_consistency(well, square256):
    u = square256.field_from_function(lambda x, y: 0.3 * np.cos(np.pi * x))
    rep = diffuse_energy(u, 0.05, well)
    assert rep.bulk >= 0 and rep.gradient >= 0
    assert rep.total == pytest.approx(rep.bulk + rep.gradient, abs=1e-12)
    assert rep.theta == 1.0


def test_stripe_transition_cost(well, square256):
    u = well_prepared(stripe(0.5), 0.05, well, square256)
    rep = diffuse_energy(u, 0.05, well)
    assert rep.total == pytest.approx(4.0 / 3.0, rel=0.02)


def test_stripe_transition_cost_half_theta(well, square256):
    # per-interface cost 2*sqrt(theta)*c_W
    u = well_prepared(stripe(0.5), 0.05, well, square256, theta=0.5)
    rep = diffuse_energy(u, 0.05, well, theta=0.5)
    assert rep.total == pytest.approx(np.sqrt(2.0) * 2.0 / 3.0, rel=0.02)


def test_sharp_energy_stripe(well):
    assert sharp_diffuse_energy0(stripe(0.5), well) == pytest.approx(4.0 / 3.0, abs=1e-9)


def test_sharp_energy_ball(well):
    # circumference oracle: 2 pi 0.25
    val = sharp_diffuse_energy0(ball((0.5, 0.5), 0.25), well)
    assert val == pytest.approx((4.0 / 3.0) * 2.0 * np.pi * 0.25, abs=1e-9)


def test_sharp_energy_empty_raster(well, square256):
    from phasegeo.geometry import IndicatorSet

    empty = IndicatorSet(square256, np.zeros(square256.shape, dtype=bool))
    assert sharp_diffuse_energy0(empty, well) == 0.0


def test_deficit_prepared_stripe_bounded(well, square256):
    u = well_prepared(stripe(0.5), 0.05, well, square256)
    d = energy_deficit(u, stripe(0.5), 0.05, well)
    assert abs(d) <= 5.0


def test_deficit_degenerate_constant(well, square256):
    d = energy_deficit(square256.constant_field(1.0), stripe(0.5), 0.05, well)
    assert d == pytest.approx((4.0 / 3.0) / 0.05, abs=1e-9)


def test_deficit_sharp_step_strongly_negative(well, square256):
    u = sharp_interface_field(stripe(0.5), square256)
    d = energy_deficit(u, stripe(0.5), 0.05, well)
    # raw step has O(1/(h eps)) gradient energy: far above the sharp limit
    assert d < -100.0


def test_energy_nonnegative_and_zero_iff_well(well, square256):
    rng = np.random.default_rng(0)
    for _ in range(10):
        u = square256.field(rng.uniform(-1.5, 1.5, square256.shape))
        assert diffuse_energy(u, 0.05, well).total >= 0.0
    assert diffuse_energy(square256.constant_field(-1.0), 0.05, well).total == 0.0
    u = square256.constant_field(1.0)
    u.values[0, 0] = 0.5
    assert diffuse_energy(u, 0.05, well).total > 1e-12


def test_mesh_consistency(well):
    # fixed smooth field: energies at 128^2 and 256^2 differ by O(h^2)
    vals = []
    for n in (128, 256):
        g = make_grid(2, (1, 1), (n, n))
        u = g.field_from_function(lambda x, y: 0.8 * np.cos(np.pi * x) * np.cos(np.pi * y))
        vals.append(diffuse_energy(u, 0.1, well).total)
    assert abs(vals[0] - vals[1]) < 1e-3 * max(vals)


def test_under_resolved_eps_rejected(well):
    g = make_grid(2, (1, 1), (32, 32))
    with pytest.raises(ResolutionError):
        diffuse_energy(g.constant_field(0.0), 0.01, well)
