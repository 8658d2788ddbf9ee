import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uwbsense.dsp import ComplexSeries
from uwbsense.imaging import (GradientField, UndersampledApertureWarning, VolumeGrid, cavity_decode,
                              diffraction_stack, extract_quasi_wavefront, fk_migrate, ibst,
                              image_grid, rpm_smooth_gradients, seabed, wavefront_gradients)
from uwbsense.scene import (C0, ApertureGrid, EchoCube, Plane, PointScatterer, PulseSpec,
                            QuasiWavefront, Scene, Sphere, bst_forward, cavity_encode,
                            gen_port_codebook, synth_echo_cube)

PULSE = PulseSpec(27e9, 6e9, 50e-12, 128)
GRID = ApertureGrid.centered(32, 32, 2.5e-3)


def sphere_truth(grid, center, r):
    X, Y = grid.mesh()
    cx, cy, cz = center
    D = np.sqrt((X - cx) ** 2 + (Y - cy) ** 2 + cz ** 2)
    return D - r, (X - cx) / D, (Y - cy) / D


def point_cube(pos, grid=GRID, pulse=PULSE):
    return synth_echo_cube(Scene(points=[PointScatterer(pos)]), grid, pulse)


# ---------------------------------------------------------------- F-K

@pytest.mark.parametrize("pos", [(0.0, 0.0, 0.15), (0.01, -0.0075, 0.2), (-0.02, 0.005, 0.12)])
def test_fk_argmax_agrees_with_stack(pos):
    cube = point_cube(pos)
    img = fk_migrate(cube)
    k = img.argmax()
    box = img.grid.sub(k, 3)
    ref = diffraction_stack(cube, box)
    kr = np.array(ref.argmax()) + np.array([round((box.x0 - img.grid.x0) / img.grid.dx),
                                            round((box.y0 - img.grid.y0) / img.grid.dy),
                                            round((box.z0 - img.grid.z0) / img.grid.dz)])
    assert np.all(np.abs(kr - np.array(k)) <= 1)
    # and both sit within a cell of the truth
    assert np.all(np.abs(img.argmax_position() - pos) <= np.array([GRID.dx, GRID.dy, img.grid.dz]))


def test_fk_range_psf_width():
    pos = (0.0, 0.0, 0.15)
    img = fk_migrate(point_cube(pos))
    i, j, k = img.argmax()
    prof = img.values[i, j, :]
    above = np.nonzero(prof >= prof[k] / 2)[0]
    # linear interpolation of the half-power crossings
    lo, hi = above[0], above[-1]
    h = prof[k] / 2
    left = lo - (prof[lo] - h) / (prof[lo] - prof[lo - 1])
    right = hi + (prof[hi] - h) / (prof[hi] - prof[hi + 1])
    fwhm = (right - left) * img.grid.dz
    assert fwhm == pytest.approx(C0 / (2 * PULSE.bandwidth), rel=0.3)


def test_fk_grid_and_zero_cube():
    cube = EchoCube(np.zeros((GRID.nx, GRID.ny, PULSE.nt)), GRID, PULSE)
    img = fk_migrate(cube)
    assert img.grid == image_grid(cube)
    assert img.grid.dz == pytest.approx(C0 * PULSE.dt / 2)
    assert not img.values.any()


def test_fk_flags_undersampled_aperture():
    coarse = ApertureGrid.centered(8, 8, 1e-2)
    with pytest.warns(UndersampledApertureWarning):
        fk_migrate(point_cube((0, 0, 0.2), coarse))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        fk_migrate(point_cube((0, 0, 0.2)))


def test_fk_rejects_nonfinite():
    data = np.zeros((GRID.nx, GRID.ny, PULSE.nt), complex)
    data[0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        fk_migrate(EchoCube(data, GRID, PULSE))


def test_volume_subgrid_clips():
    g = VolumeGrid(4, 4, 4, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0)
    s = g.sub((0, 3, 1), 1)
    assert s.shape == (2, 2, 3) and (s.x0, s.y0, s.z0) == (0.0, 2.0, 0.0)


# ---------------------------------------------------------------- wavefront

def test_extracted_wavefront_matches_sphere():
    center, r = (0.005, -0.01, 0.25), 0.05
    cube = synth_echo_cube(Scene([Sphere(center, r)]), GRID, PULSE)
    wf = extract_quasi_wavefront(cube)
    Z, _, _ = sphere_truth(GRID, center, r)
    assert wf.mask.all()
    assert np.abs(wf.Z - Z).max() < 0.1 * C0 * PULSE.dt / 2


def test_first_arrival_is_chosen():
    cube = synth_echo_cube(Scene([Plane(0.2), Plane(0.35)]), GRID, PULSE)
    wf = extract_quasi_wavefront(cube)
    # parabolic refinement is good to a fraction of a range cell
    np.testing.assert_allclose(wf.Z, 0.2, atol=0.25 * C0 * PULSE.dt / 2)


def test_extract_leaves_empty_elements_unmasked():
    data = np.zeros((GRID.nx, GRID.ny, PULSE.nt), complex)
    assert not extract_quasi_wavefront(EchoCube(data, GRID, PULSE)).mask.any()
    with pytest.raises(ValueError):
        extract_quasi_wavefront(EchoCube(data, GRID, PULSE), threshold_rel=1.5)


def test_gradients_on_sphere():
    center, r = (0.0, 0.0, 0.2), 0.03
    Z, zx, zy = sphere_truth(GRID, center, r)
    g = wavefront_gradients(QuasiWavefront(Z, np.ones_like(Z, bool), GRID))
    assert g.mask.all()
    assert np.abs(g.dZdX[1:-1] - zx[1:-1]).max() < 1e-3
    assert np.abs(g.dZdY[:, 1:-1] - zy[:, 1:-1]).max() < 1e-3


def test_isolated_samples_lose_mask():
    Z = np.full((GRID.nx, GRID.ny), 0.2)
    mask = np.zeros_like(Z, bool)
    mask[5, 5] = True
    mask[10:13, 10:13] = True
    g = wavefront_gradients(QuasiWavefront(Z, mask, GRID))
    assert not g.mask[5, 5] and g.mask[10:13, 10:13].all()


@settings(max_examples=30, deadline=None)
@given(st.floats(-0.6, 0.6), st.floats(-0.6, 0.6), st.floats(0.5, 3.0))
def test_smoothing_preserves_linear_wavefront(a, b, s):
    X, Y = GRID.mesh()
    Z = 0.3 + a * X + b * Y
    g = rpm_smooth_gradients(QuasiWavefront(Z, np.ones_like(Z, bool), GRID), s * GRID.dx, 0.01)
    np.testing.assert_allclose(g.dZdX, a, atol=1e-9)
    np.testing.assert_allclose(g.dZdY, b, atol=1e-9)


def test_smoothing_clamps_to_unit_norm():
    X, _ = GRID.mesh()
    Z = 0.3 + 1.5 * X
    g = rpm_smooth_gradients(QuasiWavefront(Z, np.ones_like(Z, bool), GRID), GRID.dx, 0.1)
    assert np.hypot(g.dZdX, g.dZdY).max() <= 1 + 1e-12


def test_ibst_exact_on_analytic_sphere():
    center, r = (0.01, -0.005, 0.3), 0.06
    Z, zx, zy = sphere_truth(GRID, center, r)
    pc = ibst(QuasiWavefront(Z, np.ones_like(Z, bool), GRID), (zx, zy))
    d = np.linalg.norm(pc.points - np.array(center), axis=1)
    assert len(pc) == Z.size and pc.n_dropped == 0
    assert np.abs(d - r).max() < 1e-9


def test_ibst_drops_steep_slopes():
    Z = np.full((GRID.nx, GRID.ny), 0.2)
    gx = np.zeros_like(Z)
    gx[0, :3] = 1.2
    pc = ibst(QuasiWavefront(Z, np.ones_like(Z, bool), GRID), GradientField(gx, 0 * gx, np.ones_like(Z, bool)))
    assert pc.n_dropped == 3 and len(pc) == Z.size - 3


def test_seabed_sphere_median_error_below_cell():
    center, r = (0.0, 0.0, 0.25), 0.04
    cube = synth_echo_cube(Scene([Sphere(center, r)]), GRID, PULSE)
    pc, wf = seabed(cube)
    err = np.abs(np.linalg.norm(pc.points - np.array(center), axis=1) - r)
    assert np.median(err) < GRID.dx


def test_seabed_plane_matches_bst_forward():
    scene = Scene([Plane(0.25)])
    cube = synth_echo_cube(scene, GRID, PULSE)
    pc, wf = seabed(cube)
    ref = bst_forward(scene, GRID)
    tol = 0.25 * C0 * PULSE.dt / 2
    assert np.abs(wf.Z - ref.Z).max() < tol
    assert np.median(np.abs(pc.points[:, 2] - 0.25)) < tol


# ---------------------------------------------------------------- cavity

def test_cavity_decode_recovers_taps():
    book = gen_port_codebook(4, 1024, 1e-9, seed=3)
    rng = np.random.default_rng(1)
    h = rng.standard_normal((4, 1)) + 1j * rng.standard_normal((4, 1))
    mix = cavity_encode([ComplexSeries(x, 1e-9) for x in h], book)
    est = cavity_decode(mix, book)
    for e, x in zip(est, h):
        assert len(e) == 1
        # cross-talk is bounded by the code correlation
        assert abs(e.samples[0] - x[0]) < 4 * book.max_cross_correlation * np.abs(h).max()


def test_cavity_decode_rejects_short_mixture():
    book = gen_port_codebook(2, 128, 1e-9)
    with pytest.raises(ValueError):
        cavity_decode(ComplexSeries(np.ones(10), 1e-9), book)
