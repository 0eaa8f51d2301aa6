import numpy as np
import pytest

from fvrom import fom
from fvrom.lifting import (build_lifting, homogenize, homogenized_trace,
                           lifting_divergence, reapply_lifting)
from fvrom.mesh import ChannelGeometry, generate_channel_cylinder_mesh, \
    generate_channel_mesh


@pytest.fixture(scope="module")
def cylinder_mesh():
    geom = ChannelGeometry(1.0, 0.41, (0.3, 0.2), 0.08)
    return generate_channel_cylinder_mesh(geom, 0.041)


@pytest.fixture(scope="module")
def parabolic_lifting(cylinder_mesh):
    return build_lifting(cylinder_mesh, fom.parabolic_inflow_2d(0.41))


def test_plug_profile_uniform():
    mesh = generate_channel_mesh(1.0, 0.5, 0.125)
    lift = build_lifting(mesh, fom.plug_inflow())
    # wall no-slip only holds to O((radius fraction)^2); cell values stay plug
    assert np.abs(lift.fields[0].field.values - [1.0, 0.0, 0.0]).max() <= 1e-5
    assert lifting_divergence(mesh, lift) <= 1e-8


def test_parabolic_lifting_invariants(cylinder_mesh, parabolic_lifting):
    assert lifting_divergence(cylinder_mesh, parabolic_lifting) <= 1e-8
    # inlet trace is the exact profile (imposed as Dirichlet data)
    inlet = cylinder_mesh.patch("inlet")
    centers = cylinder_mesh.face_centers[inlet.start:inlet.start + inlet.count]
    expected = fom.parabolic_inflow_2d(0.41)(centers)
    bc = parabolic_lifting.fields[0].field.bcs["inlet"]
    assert np.abs(np.asarray(bc.face_values(inlet.count, 3))
                  - expected).max() <= 1e-12


def test_zero_profile_gives_zero_field():
    mesh = generate_channel_mesh(1.0, 0.5, 0.25)
    lift = build_lifting(mesh, lambda pts: np.zeros((len(pts), 3)))
    assert np.abs(lift.fields[0].field.values).max() == 0.0
    assert np.abs(lift.fields[0].flux).max() == 0.0


def test_homogenize_exact_multiple(parabolic_lifting, cylinder_mesh):
    chi = parabolic_lifting.fields[0].field.values
    snapshot = 0.73 * chi
    hom = homogenize(snapshot, parabolic_lifting, [0.73])
    assert np.abs(hom).max() <= 1e-14


def test_homogenize_zero_amplitude_is_identity(parabolic_lifting,
                                               cylinder_mesh, rng):
    vals = rng.normal(size=(cylinder_mesh.n_cells, 3))
    hom = homogenize(vals, parabolic_lifting, [0.0])
    assert np.array_equal(hom, vals)


def test_homogenized_inlet_trace(cylinder_mesh, parabolic_lifting):
    # snapshot at peak amplitude: subtracting the carrier clears the trace
    case = fom.CaseSetup(cylinder_mesh, fom.parabolic_inflow_2d(0.41),
                         fom.ramp_amplitude(8.0))
    bcs = case.velocity_bcs(4.0)  # amplitude sin(pi/2) = 1
    assert homogenized_trace(cylinder_mesh, bcs, parabolic_lifting,
                             [1.0]) <= 1e-10


def test_roundtrip_identity(parabolic_lifting, cylinder_mesh, rng):
    for amp in (0.0, 1.0, -0.37):
        vals = rng.normal(size=(cylinder_mesh.n_cells, 3))
        back = reapply_lifting(homogenize(vals, parabolic_lifting, [amp]),
                               parabolic_lifting, [amp])
        assert np.abs(back - vals).max() <= 1e-14 * max(
            1.0, np.abs(vals).max())


def test_pod_modes_have_zero_dirichlet_trace(cylinder_mesh, parabolic_lifting):
    # run a short benchmark-style case and check basis boundary data
    from fvrom import pipeline
    from fvrom.config import load_config
    cfg = load_config(None, [
        "time.t_end=0.2", "time.dt=0.01", "time.snapshot_dt=0.02",
        "physics.alpha=0.01",
        "rom.rank_velocity=2", "rom.rank_filtered_velocity=2",
        "rom.rank_pressure=2", "rom.rank_filter_pressure=1"])
    case = fom.CaseSetup(cylinder_mesh, fom.parabolic_inflow_2d(0.41),
                         fom.ramp_amplitude(8.0))
    run = pipeline.run_fom(cfg, cylinder_mesh, case, parabolic_lifting)
    bases = pipeline.run_pod(cfg, run.snapshots)
    # homogenized snapshots carry zero Dirichlet data, so each mode's
    # boundary residual reduces to the amplitude-matching error
    for k in range(run.snapshots.n_samples):
        resid = homogenized_trace(
            cylinder_mesh, case.velocity_bcs(run.snapshots.times[k]),
            parabolic_lifting, [run.snapshots.amplitudes[k]])
        assert resid <= 1e-8
