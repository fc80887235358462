import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nodulecad.detect import Candidate, Source
from nodulecad.fpr import (
    CUBE_SIZE,
    LOGIT_NODE,
    CubeParams,
    MsdNetSpec,
    bce_loss,
    build_msdnet,
    classify_cube,
    cube_box,
    extract_cube,
    heuristic_score,
    score_candidates,
)
from nodulecad.nnet import init_weights
from nodulecad.volume import CtVolume


def cand(center, r=4.0):
    return Candidate("s", tuple(float(v) for v in center), r, 0.5, Source.FUSED)


def test_constant_volume_gives_constant_cube():
    v = CtVolume(np.full((20, 20, 20), 102, dtype=np.int16))
    cube = extract_cube(v, cand((10, 10, 10)))
    assert cube.data.shape == (CUBE_SIZE,) * 3
    np.testing.assert_allclose(cube.data, 0.4)


def test_crop_of_exact_size_is_not_resampled():
    rng = np.random.default_rng(0)
    a = rng.integers(0, 256, size=(40, 40, 40)).astype(np.int16)
    v = CtVolume(a)
    # side = 2 * (12 + 4) = 32, starting 16 voxels before index 20
    cube = extract_cube(v, cand((20, 20, 20), r=12.0), margin_vox=4)
    np.testing.assert_allclose(cube.data, a[4:36, 4:36, 4:36] / 255.0)


def test_step_edge_profile():
    a = np.zeros((8, 8, 8), dtype=np.int16)
    a[:, :, 2:] = 255
    cube = extract_cube(CtVolume(a), cand((4, 4, 4)), margin_vox=0)
    profile = cube.data[16, 16, :]
    expect = [0.0] * 6 + [0.125, 0.375, 0.625, 0.875] + [1.0] * 22
    np.testing.assert_allclose(profile, expect, atol=1e-12)


def test_cube_outside_volume_is_zero_padded():
    a = np.full((10, 10, 10), 255, dtype=np.int16)
    cube = extract_cube(CtVolume(a), cand((0, 0, 0), r=6.0), margin_vox=2)
    assert cube.data[0, 0, 0] == 0.0 and cube.data[-1, -1, -1] == 1.0


def test_mask_option():
    a = np.full((16, 16, 16), 255, dtype=np.int16)
    v = CtVolume(a)
    with pytest.raises(ValueError):
        extract_cube(v, cand((8, 8, 8)), use_mask=True)
    cube = extract_cube(v, cand((8, 8, 8)), use_mask=True, mask=np.zeros(a.shape))
    assert np.all(cube.data == 0)


@settings(max_examples=50, deadline=None)
@given(st.tuples(*[st.floats(0, 30)] * 3), st.floats(0.5, 10), st.tuples(*[st.floats(0.5, 2.5)] * 3))
def test_larger_margin_box_contains_smaller(center, r, spacing):
    v = CtVolume(np.zeros((2, 2, 2), dtype=np.int16), spacing)
    boxes = [cube_box(v, cand(center, r), m) for m in (0, 4, 8)]
    for small, big in zip(boxes, boxes[1:]):
        for (s0, n0), (s1, n1) in zip(small, big):
            assert s1 <= s0 and s0 + n0 <= s1 + n1


def test_msdnet_channel_golden_values():
    net = build_msdnet()
    hist = net.meta["channels_by_depth"]
    assert hist[15] == {1: 80, 2: 160, 3: 320}
    # 160 + 8 * 16 and 320 + 8 * 32, each halved by the depth-24 transition
    assert hist[23] == {2: 144, 3: 288}
    assert hist[-1] == {3: 544}
    shapes = net.shapes()
    assert shapes["cls.conv1.conv"] == (128, 8, 8, 8)
    assert shapes["cls.pool"] == (128, 4, 4, 4)
    assert shapes[LOGIT_NODE] == (1,)


def test_bottleneck_widths():
    spec = MsdNetSpec()
    assert spec.bottleneck_width(32) == 8 and spec.bottleneck_width(160) == 40 and spec.bottleneck_width(1) == 1
    net = build_msdnet(spec)
    shapes = net.shapes()
    assert shapes["d1.s1.h.reduce.conv"][0] == 8
    assert shapes["d1.s1.h.conv3.conv"][0] == 8
    # scales with a finer neighbour split the growth between two paths
    assert shapes["d1.s2.h.conv3.conv"][0] == 8 and shapes["d1.s2.v.conv3.conv"][0] == 8
    assert shapes["d1.s2.v.conv3.conv"][1:] == (16, 16, 16)
    # scale 1 stops after depth 16, so scale 2 loses its downsampled path at 18
    assert "d17.s2.v.reduce.conv" in shapes and "d18.s2.v.reduce.conv" not in shapes


def test_spec_validation():
    with pytest.raises(ValueError):
        build_msdnet(MsdNetSpec(growth=(8, 15, 32)))
    with pytest.raises(ValueError):
        build_msdnet(MsdNetSpec(scale_end_depths=(16, 24, 30)))
    with pytest.raises(ValueError):
        build_msdnet(MsdNetSpec(bottleneck_reduction=1.0))


SMALL = MsdNetSpec(
    initial_filters=(2, 2, 2),
    growth=(2, 2, 2),
    scale_end_depths=(1, 2, 3),
    max_depth=3,
    transition_depths=(1,),
    classifier_channels=2,
    dense_units=(4,),
    dropout_rates=(0.5,),
)


def test_zero_weights_classify_to_half():
    net = build_msdnet(SMALL)
    w = {k: np.zeros(s) for k, (s, _) in net.param_shapes().items()}
    net.bind(w)
    assert classify_cube(net, np.random.default_rng(0).uniform(size=(32, 32, 32))) == 0.5


def test_classify_deterministic_and_in_range():
    net = build_msdnet(SMALL)
    net.bind(init_weights(net, seed=3, random_stats=True))
    x = np.random.default_rng(1).uniform(size=(32, 32, 32))
    p = classify_cube(net, x)
    assert 0.0 < p < 1.0 and classify_cube(net, x) == p


def _ball(radius):
    ax = np.arange(32) - 15.5
    z, y, x = np.meshgrid(ax, ax, ax, indexing="ij")
    return (x * x + y * y + z * z <= radius * radius).astype(float)


def test_heuristic_scorer_fixtures():
    assert heuristic_score(_ball(5)) > 0.9
    noise = heuristic_score(np.random.default_rng(0).uniform(size=(32, 32, 32)))
    assert 0.3 < noise < 0.7
    assert noise == pytest.approx(0.5058383438050646, abs=1e-12)
    assert heuristic_score(np.zeros((32, 32, 32))) == 0.5
    with pytest.raises(ValueError):
        heuristic_score(np.zeros((8, 8, 8)))


def test_heuristic_prefers_balls_over_tubes_and_walls():
    ax = np.arange(32) - 15.5
    z, y, x = np.meshgrid(ax, ax, ax, indexing="ij")
    tube = (x * x + y * y <= 9).astype(float)
    wall = (x < 0).astype(float)
    ball = heuristic_score(_ball(5))
    assert ball > heuristic_score(tube) and ball > heuristic_score(wall)


def test_score_candidates_preserves_order_and_threads():
    a = np.zeros((40, 40, 40), dtype=np.int16)
    a[18:23, 18:23, 18:23] = 255
    v = CtVolume(a)
    cs = [cand((20, 20, 20)), cand((5, 5, 5)), cand((30, 10, 20))]
    one = score_candidates(v, cs, params=CubeParams(margin_vox=4))
    many = score_candidates(v, cs, params=CubeParams(margin_vox=4), threads=3)
    assert [c.center for c in one] == [c.center for c in cs]
    assert [c.fpr_score for c in one] == [c.fpr_score for c in many]
    assert one[0].fpr_score > 0.9


def test_bce_examples_and_clamp():
    loss, grad = bce_loss(0.5, 1)
    assert loss == pytest.approx(np.log(2)) and grad == pytest.approx(-2.0)
    loss, grad = bce_loss(1.0, 1)
    assert loss == pytest.approx(-np.log(1 - 1e-7)) and grad == 0.0
    loss, _ = bce_loss(0.0, 1)
    assert loss == pytest.approx(-np.log(1e-7))
    losses, _ = bce_loss(np.array([0.2, 0.8]), np.array([0, 1]))
    np.testing.assert_allclose(losses, [-np.log(0.8)] * 2)
