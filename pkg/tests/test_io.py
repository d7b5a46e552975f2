import numpy as np
import pytest

from phasegeo.flow import FlowConfig, run_flow
from phasegeo.geometry import IndicatorSet, ball, stripe, well_prepared
from phasegeo.grid import make_grid
from phasegeo.io import (
    FormatError,
    manifest_bytes,
    read_checkpoint,
    read_pbm_mask,
    write_checkpoint,
    write_pbm_mask,
    write_profile_csv,
    write_rearrangement_csv,
    write_trajectory_csv,
)
from phasegeo.potential import quartic_well


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    g = make_grid(2, (1, 1), (64, 32))
    rng = np.random.default_rng(1)
    u = g.field(rng.standard_normal(g.shape))
    path = tmp_path / "state.pfck"
    write_checkpoint(path, u, t=1.25, eps=0.05)
    v, t, eps = read_checkpoint(path, grid=g)
    assert np.array_equal(v.values, u.values)  # bit-exact
    assert t == 1.25 and eps == 0.05


def test_checkpoint_grid_reconstruction(tmp_path):
    # square-cell convention: L1/L2 = n1/n2
    g = make_grid(2, (2.0, 0.5), (128, 32))
    u = g.constant_field(0.7)
    path = tmp_path / "aniso.pfck"
    write_checkpoint(path, u, t=0.0, eps=0.1)
    v, _, _ = read_checkpoint(path)
    assert v.grid.resolution == (128, 32)
    assert v.grid.extents[0] == pytest.approx(2.0, abs=1e-12)


def test_checkpoint_1d(tmp_path):
    g = make_grid(1, 1.0, 128)
    u = g.field_from_function(lambda x: np.sin(7 * x))
    path = tmp_path / "line.pfck"
    write_checkpoint(path, u, t=0.5, eps=0.02)
    v, t, eps = read_checkpoint(path)
    assert v.grid.dim == 1
    assert np.array_equal(v.values, u.values)


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "junk.pfck"
    path.write_bytes(b"NOPE" + b"\0" * 60)
    with pytest.raises(FormatError):
        read_checkpoint(path)


def test_pbm_roundtrip(tmp_path):
    g = make_grid(2, (1, 1), (32, 32))
    E = ball((0.5, 0.5), 0.3).rasterize(g)
    path = tmp_path / "mask.pbm"
    write_pbm_mask(path, E)
    F = read_pbm_mask(path, grid=g)
    assert np.array_equal(E.membership, F.membership)
    head = path.read_text().splitlines()
    assert head[0] == "P1"
    assert head[1] == "32 32"


def test_trajectory_csv_columns(tmp_path):
    g = make_grid(2, (1, 1), (64, 64))
    well = quartic_well()
    u0 = well_prepared(stripe(0.5), 0.08, well, g)
    cfg = FlowConfig(eps=0.08, dt=1e-3, t_end=0.01, equation="nlac")
    rec = run_flow(u0, cfg, well, reference=u0)
    path = tmp_path / "traj.csv"
    write_trajectory_csv(path, rec, "deadbeef")
    lines = path.read_text().splitlines()
    assert lines[0].startswith("#") and "deadbeef" in lines[0]
    assert lines[1] == ("t,mass,lambda,energy_total,energy_bulk,energy_grad,"
                        "dist_L1,dist_L2,dist_X2,identity_residual")
    assert len(lines) == 2 + len(rec.times)
    first = lines[2].split(",")
    assert float(first[0]) == 0.0
    assert float(first[1]) == pytest.approx(0.0, abs=1e-12)  # stripe mass


def test_profile_csv(tmp_path):
    from phasegeo.isoperimetry import iso_profile_analytic

    prof = iso_profile_analytic("unit_square", [0.1, 0.5])
    path = tmp_path / "profile.csv"
    write_profile_csv(path, prof, "cafebabe")
    lines = path.read_text().splitlines()
    assert lines[1] == "r,I,minimizer_tag,method"
    assert "corner_quarter_disk" in lines[2]
    assert "analytic_candidates" in lines[2]


def test_rearrangement_csv(tmp_path):
    from phasegeo.isoperimetry import iso_profile_analytic
    from phasegeo.rearrangement import build_minorant, rearrange, solve_weight

    g = make_grid(2, (1, 1), (32, 32))
    prof = iso_profile_analytic(
        "unit_square", np.linspace(0.01, 0.99, 99).tolist() + [0.5])
    weight = solve_weight(build_minorant(prof, 0.5))
    data = rearrange(g.constant_field(0.0), weight)
    path = tmp_path / "re.csv"
    write_rearrangement_csv(path, data, "00")
    lines = path.read_text().splitlines()
    assert lines[1] == "s,V,eta,f_u"
    assert len(lines) == 2 + len(data.s)


def test_manifest_bytes_deterministic():
    payload = {"b": 1.5, "a": [1, 2, 3], "c": {"y": 0.1, "x": True}}
    assert manifest_bytes(payload) == manifest_bytes(
        {"c": {"x": True, "y": 0.1}, "a": [1, 2, 3], "b": 1.5})
