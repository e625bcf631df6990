import numpy as np
import pytest

import segedit as se
from segedit.image import BinaryMask, MaskError, inner_boundary, mask_of
from segedit.levelset import CFLError, LevelSetField, RefineError, max_admissible_dt
from segedit.prng import SplitMix64
from helpers import brute_force_distance_inside


def disk_mask(n, r, cy=None, cx=None):
    cy = (n - 1) / 2 if cy is None else cy
    cx = (n - 1) / 2 if cx is None else cx
    yy, xx = np.mgrid[0:n, 0:n]
    return BinaryMask((yy - cy) ** 2 + (xx - cx) ** 2 <= r * r)


def uniform_speed(n, v=1.0):
    return se.StoppingFunction(np.full((n, n), v))


# --- signed distance ---------------------------------------------------------------


def test_adjacent_inside_pixel_is_plus_one():
    bits = np.zeros((8, 8), dtype=bool)
    bits[2:6, 2:6] = True
    phi = se.signed_distance_from_mask(BinaryMask(bits))
    assert phi.phi[2, 3] == 1.0  # touching the outside across one edge
    assert phi.phi[1, 3] == -1.0


def test_sign_round_trips_mask():
    rng = np.random.default_rng(2)
    bits = rng.random((16, 16)) < 0.4
    bits[0, 0], bits[-1, -1] = True, False
    phi = se.signed_distance_from_mask(BinaryMask(bits))
    assert np.array_equal(phi.phi > 0, bits)
    assert not (phi.phi == 0).any()


def test_disk_peak_matches_exact_distance():
    m = disk_mask(64, 10)
    phi = se.signed_distance_from_mask(m)
    assert abs(phi.phi.max() - 10) / 10 < 0.10
    exact = brute_force_distance_inside(m.bits)
    chamfer = phi.phi[m.bits]
    rel = np.abs(chamfer - exact) / np.maximum(exact, 1.0)
    assert rel.max() < 0.10


def test_degenerate_masks_rejected():
    with pytest.raises(MaskError):
        se.signed_distance_from_mask(BinaryMask(np.ones((4, 4), dtype=bool)))
    with pytest.raises(MaskError):
        se.signed_distance_from_mask(BinaryMask(np.zeros((4, 4), dtype=bool)))


# --- stopping function ----------------------------------------------------------------


def test_stopping_zero_when_identical():
    img = se.ImageBuffer(np.random.default_rng(0).random((8, 8, 3)))
    assert not se.stopping_function(img, img, 1).f.any()


def test_stopping_single_pixel_radius0():
    a = np.full((8, 8, 3), 0.5)
    b = a.copy()
    b[3, 4] = 0.9
    f = se.stopping_function(se.ImageBuffer(a), se.ImageBuffer(b), 0).f
    assert f[3, 4] == 1.0
    assert f.sum() == 1.0


def test_stopping_radius1_spreads_spike():
    a = np.full((9, 9, 3), 0.2)
    b = a.copy()
    b[4, 4] = 0.8
    f = se.stopping_function(se.ImageBuffer(a), se.ImageBuffer(b), 1).f
    # direct box-blur oracle: 3x3 neighborhood gets diff/9, max renormalized to 1
    assert np.allclose(f[3:6, 3:6], 1.0)
    assert f.sum() == pytest.approx(9.0)
    assert f[0, 0] == 0.0


def test_stopping_normalized_to_unit_max():
    rng = np.random.default_rng(5)
    a, b = rng.random((10, 10, 3)), rng.random((10, 10, 3))
    f = se.stopping_function(se.ImageBuffer(a), se.ImageBuffer(b), 2).f
    assert f.max() == pytest.approx(1.0)
    assert f.min() >= 0.0


# --- evolve ------------------------------------------------------------------------


def test_zero_speed_is_fixed_point():
    phi = se.signed_distance_from_mask(disk_mask(32, 6))
    out = se.evolve(phi, uniform_speed(32, 0.0), dt=5.0, iterations=17)
    assert np.array_equal(out.phi, phi.phi)


def test_linear_field_rises_by_dt():
    n = 32
    xx = np.mgrid[0:n, 0:n][1].astype(float)
    phi = LevelSetField(10.5 - xx)
    out = se.evolve(phi, uniform_speed(n), dt=0.4, iterations=1, reinit_every=100)
    rise = out.phi - phi.phi
    # every pixel except the no-inflow edge column rises by exactly dt,
    # and the zero crossing moves outward by dt
    assert np.allclose(rise[:, 1:], 0.4, atol=1e-12)
    assert (out.phi > 0).sum() - (phi.phi > 0).sum() == 0  # sub-pixel move keeps pixel signs
    many = se.evolve(phi, uniform_speed(n), dt=0.4, iterations=10, reinit_every=100)
    cross0 = (phi.phi > 0).sum(axis=1)[0]
    cross1 = (many.phi > 0).sum(axis=1)[0]
    assert cross1 - cross0 == 4  # 10 * 0.4 pixels of outward motion


def test_front_displacement_matches_speed():
    phi = se.signed_distance_from_mask(disk_mask(64, 10))
    dt, iters = 0.4, 10
    out = se.evolve(phi, uniform_speed(64), dt, iters, reinit_every=100)
    r0 = np.sqrt((phi.phi > 0).sum() / np.pi)
    r1 = np.sqrt((out.phi > 0).sum() / np.pi)
    assert abs((r1 - r0) - dt * iters) / (dt * iters) < 0.10


def test_cfl_violation_reports_max_dt():
    phi = se.signed_distance_from_mask(disk_mask(16, 4))
    f = uniform_speed(16, 0.8)
    assert max_admissible_dt(f) == pytest.approx(0.625)
    with pytest.raises(CFLError) as exc:
        se.evolve(phi, f, dt=0.7, iterations=1)
    assert exc.value.max_dt == pytest.approx(0.625)


def test_front_rests_on_low_speed_ring():
    n = 64
    yy, xx = np.mgrid[0:n, 0:n]
    rad = np.sqrt((yy - 31.5) ** 2 + (xx - 31.5) ** 2)
    disk = rad <= 10
    phi = se.signed_distance_from_mask(BinaryMask(disk))
    speed = np.where(rad < 13.0, 1.0, 0.02)
    out = se.evolve(phi, se.StoppingFunction(speed), dt=0.49, iterations=100, reinit_every=20)
    grown = BinaryMask(out.phi > 0)
    assert (disk <= grown.bits).all() and grown.pixel_count > disk.sum()
    boundary = inner_boundary(grown)
    assert speed[boundary.bits].mean() < 0.1


def test_monotone_growth_on_random_fields():
    for trial in range(20):
        rng = SplitMix64(300 + trial)
        n = 20
        field = rng.uniform(n * n).reshape(n, n)
        for _ in range(2):
            field = (field + np.roll(field, 1, 0) + np.roll(field, 1, 1)) / 3
        bits = field > np.median(field)
        if bits.all() or not bits.any():
            continue
        phi = se.signed_distance_from_mask(BinaryMask(bits))
        f = se.StoppingFunction(rng.uniform(n * n).reshape(n, n))
        out = se.evolve(phi, f, dt=0.45, iterations=25, reinit_every=10)
        assert (bits <= (out.phi > 0)).all()


def test_speed_ordering_on_synthetic_fields():
    for trial in range(8):
        rng = SplitMix64(400 + trial)
        n = 24
        field = rng.uniform(n * n).reshape(n, n)
        for _ in range(3):
            field = (field + np.roll(field, 1, 0) + np.roll(field, -1, 0) + np.roll(field, 1, 1) + np.roll(field, -1, 1)) / 5
        bits = field > np.median(field)
        if bits.all() or not bits.any():
            continue
        phi = se.signed_distance_from_mask(BinaryMask(bits))
        f1v = rng.uniform(n * n).reshape(n, n) * 0.8
        f2v = np.clip(f1v + rng.uniform(n * n).reshape(n, n) * 0.2, 0.0, 1.0)
        dt = 0.4
        slow = se.evolve(phi, se.StoppingFunction(f1v), dt, 15, reinit_every=1000)
        fast = se.evolve(phi, se.StoppingFunction(f2v), dt, 15, reinit_every=1000)
        assert ((slow.phi > 0) <= (fast.phi > 0)).all()


def test_reinit_preserves_zero_crossing():
    phi = se.signed_distance_from_mask(disk_mask(32, 6))
    stretched = LevelSetField(phi.phi * 3.7)  # distorted magnitudes, same crossing
    renewed = se.signed_distance_from_mask(BinaryMask(stretched.phi > 0))
    assert np.array_equal(renewed.phi > 0, phi.phi > 0)
    # and through evolve's periodic reinit path
    out = se.evolve(stretched, uniform_speed(32, 0.0), dt=1.0, iterations=2, reinit_every=1)
    assert np.array_equal(out.phi > 0, phi.phi > 0)


# --- refine_segment -------------------------------------------------------------------


def band_scene(n=32):
    lab = np.full((n, n), 2, dtype=np.int32)
    lab[:, :10] = 1
    labels = se.LabelMap(lab)
    orig = np.full((n, n, 3), 0.5)
    rend = orig.copy()
    rend[:, 11:13] = 0.95  # reconstruction disagrees on a band just outside segment 1
    return labels, se.ImageBuffer(orig), se.ImageBuffer(rend)


def default_params(**kw):
    args = dict(dt=0.49, iterations=100, smooth_radius=1, max_growth=8, reinit_every=20)
    args.update(kw)
    return se.RefineParams(**args)


def test_refine_identity_when_reconstruction_matches():
    labels, orig, _ = band_scene()
    out = se.refine_segment(labels, 1, orig, orig, default_params())
    assert np.array_equal(out.labels, labels.labels)


def test_refine_boundary_avoids_band():
    labels, orig, rend = band_scene()
    out = se.refine_segment(labels, 1, orig, rend, default_params())
    m1 = mask_of(out, 1)
    assert (mask_of(labels, 1).bits <= m1.bits).all()
    band = np.zeros(labels.shape, dtype=bool)
    band[:, 11:13] = True
    boundary = inner_boundary(m1)
    assert int((boundary.bits & band).sum()) == 0
    assert m1.pixel_count > mask_of(labels, 1).pixel_count


def test_refine_output_is_valid_partition():
    labels, orig, rend = band_scene()
    out = se.refine_segment(labels, 1, orig, rend, default_params())
    assert out.segment_count == labels.segment_count
    assert set(np.unique(out.labels)) <= {0, 1, 2}


def test_refine_growth_capped():
    labels, orig, rend = band_scene()
    out = se.refine_segment(labels, 1, orig, rend, default_params(max_growth=2))
    gained = mask_of(out, 1).bits & ~mask_of(labels, 1).bits
    allowed = se.dilate(mask_of(labels, 1), 2).bits
    assert (gained <= allowed).all()


def test_refine_refuses_to_consume_segment():
    n = 16
    lab = np.full((n, n), 1, dtype=np.int32)
    lab[7:9, 12:14] = 2  # tiny neighbor inside growth range
    labels = se.LabelMap(lab)
    lab1 = np.full((n, n), 1, dtype=np.int32)
    lab1[7:9, 12:14] = 2
    orig = se.ImageBuffer(np.full((n, n, 3), 0.5))
    rend = se.ImageBuffer(np.full((n, n, 3), 0.9))  # huge difference everywhere
    with pytest.raises(RefineError):
        se.refine_segment(labels, 1, orig, rend, default_params(iterations=200, max_growth=10))
    assert np.array_equal(labels.labels, lab1)  # input untouched
