"""Forward/adjoint operators, the TV solver, and quality metrics."""

import numpy as np
import pytest

import cassim.mapping as mp
import cassim.recon as rc
import cassim.render as rd
from cassim.render import Mask, SpectralCube


def _toy_table(h=6, w=6, bands=3, shift=2.0):
    """Hand-built mapping: column shift of ``shift`` per band, unit rows."""
    entries = np.empty((h, w, bands, 2))
    for b in range(bands):
        entries[..., b, 0] = np.arange(w)[None, :] + shift * b
        entries[..., b, 1] = np.arange(h)[:, None]
    wl = rd.band_wavelengths(450.0, 650.0, bands)
    return mp.MappingTable(entries=entries, wavelengths_nm=wl,
                           system_name="toy", pitch_um=10.0)


def _toy_op(h=6, w=6, bands=3, shift=2.0, mask=None):
    table = _toy_table(h, w, bands, shift)
    if mask is None:
        mask = Mask.ones((h, w))
    acq = (h, w + int(np.ceil(shift * (bands - 1))))
    return rc.ForwardOperator(table, mask, acq)


def test_forward_impulse_places_bilinear_weights():
    table = _toy_table()
    # move one entry off-grid to exercise the bilinear split
    table.entries[2, 3, 1, 0] = 5.25
    table.entries[2, 3, 1, 1] = 2.5
    op = rc.ForwardOperator(table, Mask.ones((6, 6)), (6, 10))
    cube = np.zeros((6, 6, 3))
    cube[2, 3, 1] = 1.0
    out = op.forward(cube)
    assert out[2, 5] == pytest.approx(0.5 * 0.75)
    assert out[2, 6] == pytest.approx(0.5 * 0.25)
    assert out[3, 5] == pytest.approx(0.5 * 0.75)
    assert out[3, 6] == pytest.approx(0.5 * 0.25)
    assert out.sum() == pytest.approx(1.0)


def test_forward_integer_positions_exact():
    op = _toy_op()
    cube = np.zeros((6, 6, 3))
    cube[1, 2, 0] = 3.0
    cube[1, 2, 2] = 2.0
    out = op.forward(cube)
    assert out[1, 2] == pytest.approx(3.0)
    assert out[1, 2 + 4] == pytest.approx(2.0)


def test_mask_zeroes_voxels():
    mask = Mask(np.zeros((6, 6)))
    op = _toy_op(mask=mask)
    out = op.forward(np.ones((6, 6, 3)))
    assert np.all(out == 0.0)


def test_adjoint_identity_random(rng):
    op = _toy_op(mask=Mask.random((6, 6), 0.5, 3))
    for _ in range(5):
        x = rng.standard_normal(op.scene_shape)
        y = rng.standard_normal(op.acq_shape)
        lhs = float((op.forward(x) * y).sum())
        rhs = float((x * op.adjoint(y)).sum())
        denom = max(abs(lhs), abs(rhs), 1e-30)
        assert abs(lhs - rhs) / denom < 1e-12


def test_operator_shape_validation():
    op = _toy_op()
    with pytest.raises(ValueError):
        op.forward(np.zeros((5, 6, 3)))
    with pytest.raises(ValueError):
        op.adjoint(np.zeros((6, 6)))
    with pytest.raises(ValueError):
        rc.ForwardOperator(_toy_table(), Mask.ones((5, 6)), (6, 10))


def test_subband_counts_must_divide():
    with pytest.raises(ValueError):
        rc.ForwardOperator(_toy_table(bands=3), Mask.ones((6, 6)), (6, 10),
                           subbands=2)


def test_out_of_canvas_positions_dropped():
    # a tight acquisition window clips the shifted bands
    op = _toy_op(shift=3.0)
    tight = rc.ForwardOperator(_toy_table(shift=3.0), Mask.ones((6, 6)),
                               (6, 6))
    cube = np.ones((6, 6, 3))
    full = op.forward(cube).sum()
    clipped = tight.forward(cube).sum()
    assert clipped < full
    assert tight.forward(cube).shape == (6, 6)


def test_norm_estimate_stability():
    op = _toy_op(mask=Mask.random((6, 6), 0.5, 1))
    a = op.norm_estimate(iterations=40)
    b = op.norm_estimate(iterations=80)
    assert a == pytest.approx(b, rel=1e-3)
    # dense singular value agrees on this small operator
    dense = op.matrix.toarray() @ np.diag(
        np.repeat(op.mask.data.reshape(-1), 3))
    s = np.linalg.svd(dense, compute_uv=False)[0]
    assert a == pytest.approx(s, rel=1e-3)


def test_shift_only_table_keeps_center_steps(sp):
    # odd grid: the center pixel sits exactly on the geometric center
    table = mp.build_mapping(sp, shape_hw=(17, 17))
    simple = rc.shift_only_table(table)
    s = mp.band_shifts(table)
    assert np.array_equal(mp.band_shifts(simple), s)
    # rows carry no wavelength motion at all
    assert np.ptp(simple.entries[..., 1], axis=2).max() == 0.0


def test_init_cube_reads_back_impulse():
    op = _toy_op()
    cube = np.zeros((6, 6, 3))
    cube[2, 3, 1] = 2.0
    acq = op.forward(cube)
    init, missing = rc.init_cube(acq, op.table)
    assert missing == 0
    assert init[2, 3, 1] == pytest.approx(2.0)


def test_init_cube_handles_nan_entries():
    table = _toy_table()
    table.entries[0, 0, :, :] = np.nan
    init, missing = rc.init_cube(np.ones((6, 10)), table)
    assert missing == 3
    assert np.all(init[0, 0, :] == 0.0)


def test_reconstruct_zero_acquisition_gives_zero():
    op = _toy_op(mask=Mask.random((6, 6), 0.5, 2))
    x, info = rc.reconstruct_tv(np.zeros(op.acq_shape), op, iterations=5)
    assert np.all(x == 0.0)


def test_reconstruct_zero_iterations_returns_init():
    op = _toy_op()
    cube = np.zeros((6, 6, 3))
    cube[3, 1, 0] = 1.0
    acq = op.forward(cube)
    x, info = rc.reconstruct_tv(acq, op, iterations=0)
    init, _ = rc.init_cube(acq, op.table)
    assert np.array_equal(x, np.maximum(init, 0.0))
    assert info["fidelity"] == []


def test_reconstruct_identity_operator_recovers_exactly(rng):
    # with a one-band identity mapping and no TV pull, the solver must
    # recover the scene to solver precision
    table = _toy_table(bands=1, shift=0.0)
    op = rc.ForwardOperator(table, Mask.ones((6, 6)), (6, 6))
    truth = rng.random((6, 6, 1))
    acq = op.forward(truth)
    x, info = rc.reconstruct_tv(acq, op, iterations=60, tv_weight=0.0)
    assert np.allclose(x, truth, atol=1e-6)
    assert info["fidelity"][-1] < 1e-12


def test_reconstruct_fidelity_trace_improves():
    op = _toy_op(mask=Mask.random((6, 6), 0.5, 7))
    rng = np.random.default_rng(0)
    truth = rng.random(op.scene_shape)
    acq = op.forward(truth)
    x, info = rc.reconstruct_tv(acq, op, iterations=30, tv_weight=1e-4)
    t = info["fidelity"]
    assert t[-1] <= t[0]
    assert info["best_iteration"] <= 30
    assert x.min() >= 0.0


def test_reconstruct_shape_mismatch():
    op = _toy_op()
    with pytest.raises(ValueError):
        rc.reconstruct_tv(np.zeros((4, 4)), op)


def test_metrics_identical_cubes_cap():
    cube = np.random.default_rng(1).random((8, 8, 4))
    rep = rc.metrics(cube, cube)
    assert rep.rmse == 0.0
    assert rep.psnr_db == rc.PSNR_CAP_DB
    assert rep.ssim == pytest.approx(1.0, abs=1e-12)
    assert rep.sam_rad == pytest.approx(0.0, abs=1e-7)
    assert rep.sam_excluded_pixels == 0


def test_metrics_known_mse():
    t = np.zeros((4, 4, 2))
    e = np.full((4, 4, 2), 0.01)
    rep = rc.metrics(t, e)
    assert rep.rmse == pytest.approx(0.01)
    assert rep.psnr_db == pytest.approx(40.0)
    # zero-norm truth pixels are excluded from SAM
    assert rep.sam_excluded_pixels == 16


def test_metrics_orthogonal_spectra():
    t = np.zeros((2, 2, 2))
    e = np.zeros((2, 2, 2))
    t[..., 0] = 1.0
    e[..., 1] = 1.0
    rep = rc.metrics(t, e)
    assert rep.sam_rad == pytest.approx(np.pi / 2)
    assert rep.sam_normalized == pytest.approx(1.0)


def test_metrics_shape_mismatch():
    with pytest.raises(ValueError):
        rc.metrics(np.zeros((4, 4, 2)), np.zeros((4, 4, 3)))


def test_build_operator_matches_manual(sp):
    mask = Mask.random((16, 16), 0.5, 5)
    op = rc.build_operator(sp, mask, scene_hw=(16, 16), bands=7,
                           oversampling=2)
    assert op.scene_shape == (16, 16, 7)
    assert op.acq_shape == rd.canvas_shape(sp, (16, 16))
    # native table drives initialization at native band count
    assert op.table.entries.shape[2] == 7
    cube = np.random.default_rng(2).random((16, 16, 7))
    out = op.forward(cube)
    assert out.shape == op.acq_shape
    assert out.sum() > 0
