import numpy as np
import pytest

from grasplab.learn.data import CAMERA_CROP, TACTILE_CROP, NormStats, augment, flip_horizontal, record_arrays, to_float


@pytest.fixture(scope="module")
def arrays(small_records):
    return record_arrays(small_records[:12])


def test_shapes_and_codes(arrays):
    assert arrays.rgb_a.shape == (12, 72, 72, 3) and arrays.rgb_a.dtype == np.uint8
    assert arrays.tactile_l.shape == (12, 54, 72, 3) and arrays.tactile_l.dtype == np.int16
    assert arrays.depth.shape == (12, 72, 72)
    assert arrays.theta.shape == (12, 5)


def test_tactile_stream_is_temporal_difference(small_records, arrays):
    r = small_records[0]
    f = to_float(arrays.take([0]), np.float64)["tactile_l"][0]
    expected = (r.frames["tactile_L_Tb"].data - r.frames["tactile_L_Ta"].data + 1) / 2
    assert np.allclose(f, expected)


def test_tc_frames_never_read(small_records):
    recs = small_records[:4]
    a = record_arrays(recs)
    for r in recs:
        for k in ("tactile_L_Tc", "tactile_R_Tc"):
            r.frames[k], saved = None, r.frames[k]
            r.frames[k + "_saved"] = saved
    try:
        b = record_arrays(recs)
    finally:
        for r in recs:
            for k in ("tactile_L_Tc", "tactile_R_Tc"):
                r.frames[k] = r.frames.pop(k + "_saved")
    for f in ("rgb_a", "rgb_b", "tactile_l", "tactile_r", "depth", "theta"):
        assert np.array_equal(getattr(a, f), getattr(b, f))


def test_eval_mode_deterministic_centre_crop(arrays):
    f = to_float(arrays)
    a = augment(f, None, train=False)
    b = augment(f, None, train=False)
    for k in a:
        assert np.array_equal(a[k], b[k])
    assert np.array_equal(a["rgb_a"], f["rgb_a"][:, 4:68, 4:68])
    assert np.array_equal(a["tactile_l"], f["tactile_l"][:, 3:51, 4:68])


def test_output_dims(arrays):
    rng = np.random.default_rng(0)
    out = augment(to_float(arrays), rng, train=True)
    assert out["rgb_a"].shape[1:3] == CAMERA_CROP
    assert out["depth"].shape[1:3] == CAMERA_CROP
    assert out["tactile_r"].shape[1:3] == TACTILE_CROP


def test_flip_is_involution(arrays):
    f = to_float(arrays)
    centre = augment(f, None, train=False)
    flipped = augment(f, None, train=False, flip_p=1.0)
    assert not np.array_equal(flipped["rgb_a"], centre["rgb_a"])
    back = flip_horizontal(flipped)
    for k in centre:
        assert np.array_equal(back[k], centre[k])


def test_pair_shares_crop_and_flip(arrays):
    # the Ta/Tb camera pair gets one window; equal inputs stay equal after augmentation
    f = to_float(arrays)
    f["rgb_b"] = f["rgb_a"].copy()
    out = augment(f, np.random.default_rng(3), train=True)
    assert np.array_equal(out["rgb_a"], out["rgb_b"])


def test_training_mode_needs_rng(arrays):
    with pytest.raises(ValueError):
        augment(to_float(arrays), None, train=True)


def test_norm_stats_match_numpy(arrays):
    stats = NormStats.fit(arrays, chunk=5)
    f = to_float(arrays, np.float64)
    rgb = np.concatenate([f["rgb_a"].reshape(-1, 3), f["rgb_b"].reshape(-1, 3)])
    assert np.allclose(stats.mean["rgb"], rgb.mean(0))
    assert np.allclose(stats.std["rgb"], rgb.std(0) + 1e-6)
    assert np.allclose(stats.mean["theta"], arrays.theta.mean(0))
    out = stats.apply({"rgb_a": f["rgb_a"]})
    assert np.allclose(out["rgb_a"].reshape(-1, 3).mean(0), (f["rgb_a"].reshape(-1, 3).mean(0) - rgb.mean(0)) / (rgb.std(0) + 1e-6))
