"""Synthetic scenes, region encoding, and NDJSON file round trips."""

import numpy as np
import pytest

from crowddet.data import (
    Detection,
    EncoderConfig,
    Scene,
    SceneConfig,
    ScenePredictions,
    encode_region,
    encode_scene,
    generate_scene,
    generate_scenes,
    jitter_scene,
    read_predictions,
    read_scenes,
    region_origins,
    write_predictions,
    write_scenes,
)
from crowddet.geometry import BoxGeometry, intersects


def test_scene_config_validation():
    with pytest.raises(ValueError):
        SceneConfig(width=32, height=32, max_box_size=40).validate()
    with pytest.raises(ValueError):
        SceneConfig(min_box_size=30, max_box_size=20).validate()
    SceneConfig().validate()


def test_generate_scene_counts_and_bounds():
    cfg = SceneConfig()
    for seed in range(30):
        scene = generate_scene(np.random.default_rng(seed), cfg, f"s{seed}")
        assert len(scene.boxes) <= len(cfg.count_weights) - 1
        for b in scene.boxes:
            b.validate()
            assert 0.0 <= b.x_min and b.x_max <= cfg.width
            assert 0.0 <= b.y_min and b.y_max <= cfg.height
            assert cfg.min_box_size <= b.w <= cfg.max_box_size


def test_overlap_fraction_one_always_intersecting_pair():
    cfg = SceneConfig(count_weights=(0.0, 0.0, 1.0), overlap_fraction=1.0)
    for seed in range(50):
        scene = generate_scene(np.random.default_rng(seed), cfg)
        assert len(scene.boxes) == 2
        assert intersects(scene.boxes[0], scene.boxes[1])


def test_overlap_fraction_zero_keeps_boxes_disjoint():
    cfg = SceneConfig(count_weights=(0.0, 0.0, 0.0, 1.0), overlap_fraction=0.0)
    for seed in range(20):
        scene = generate_scene(np.random.default_rng(seed), cfg)
        a, b, c = scene.boxes
        assert not intersects(a, b)
        assert not intersects(a, c)
        assert not intersects(b, c)


def test_generate_scenes_deterministic_and_order_independent():
    cfg = SceneConfig()
    a = generate_scenes(5, 10, cfg, "x")
    b = generate_scenes(5, 10, cfg, "x")
    assert a == b
    # the k-th scene only depends on (seed, k), not on how many are drawn
    assert generate_scenes(5, 3, cfg, "x") == a[:3]
    assert [s.id for s in a[:2]] == ["x-000000", "x-000001"]


def test_jitter_scene_translates_and_scales():
    scene = Scene("s", 64, 64, [BoxGeometry(32, 32, 10, 10)])
    rng = np.random.default_rng(0)
    out = jitter_scene(scene, rng, max_shift=5.0)
    assert len(out.boxes) == 1
    b = out.boxes[0]
    assert 0.9 * 10 <= b.w <= 1.1 * 10
    assert abs(b.x - 32) <= 5.0 + 1e-9


def test_jitter_drops_boxes_leaving_the_image():
    scene = Scene("s", 64, 64, [BoxGeometry(2, 2, 4, 4)])
    rng = np.random.default_rng(1)
    # huge shift guarantees the center exits
    out = jitter_scene(scene, rng, max_shift=500.0)
    assert out.boxes == []


def test_region_origins_row_major_cover():
    assert region_origins(64, 64, 64, 32) == [(0.0, 0.0)]
    got = region_origins(128, 96, 64, 32)
    assert got[0] == (0.0, 0.0)
    assert got == sorted(got, key=lambda p: (p[1], p[0]))
    xs = {x for x, _ in got}
    ys = {y for _, y in got}
    assert max(xs) + 64 >= 128 and max(ys) + 64 >= 96


def test_encode_region_features_and_ground_truth():
    cfg = EncoderConfig(grid_size=8, bump_sigma=8.0)
    scene = Scene("s", 64, 64, [BoxGeometry(36, 36, 10, 10)])
    sample = encode_region(scene, (0.0, 0.0), cfg)
    assert sample.features.shape == (64,)
    grid = sample.features.reshape(8, 8)
    # peak response at the cell containing the box center
    assert np.unravel_index(np.argmax(grid), grid.shape) == (4, 4)
    assert sample.ground_truth == [BoxGeometry(36, 36, 10, 10)]


def test_encode_region_shifts_ground_truth_to_region_frame():
    scene = Scene("s", 128, 64, [BoxGeometry(80, 32, 10, 10)])
    cfg = EncoderConfig(grid_size=8)
    sample = encode_region(scene, (64.0, 0.0), cfg)
    assert sample.ground_truth == [BoxGeometry(16.0, 32.0, 10, 10)]
    assert sample.region_origin == (64.0, 0.0)


def test_encode_region_receptive_margin():
    # A box centered just outside the region contributes features but no gt.
    scene = Scene("s", 128, 64, [BoxGeometry(70, 32, 10, 10)])
    cfg = EncoderConfig(grid_size=8, receptive_margin=32.0)
    sample = encode_region(scene, (0.0, 0.0), cfg)
    assert sample.ground_truth == []
    assert np.max(sample.features) > 0.0


def test_encode_noise_requires_rng_and_is_seeded():
    scene = Scene("s", 64, 64, [BoxGeometry(32, 32, 10, 10)])
    cfg = EncoderConfig(noise_sigma=1.0)
    with pytest.raises(ValueError):
        encode_region(scene, (0.0, 0.0), cfg)
    a = encode_region(scene, (0.0, 0.0), cfg, np.random.default_rng(3))
    b = encode_region(scene, (0.0, 0.0), cfg, np.random.default_rng(3))
    assert np.array_equal(a.features, b.features)


def test_encode_scene_one_sample_per_region():
    scene = Scene("s", 128, 128, [])
    cfg = EncoderConfig()
    samples = encode_scene(scene, cfg, stride=32.0)
    assert len(samples) == len(region_origins(128, 128, 64, 32))


def test_scene_file_roundtrip(tmp_path):
    cfg = SceneConfig()
    scenes = generate_scenes(9, 5, cfg, "rt")
    path = tmp_path / "scenes.ndjson"
    write_scenes(scenes, path)
    assert read_scenes(path) == scenes


def test_read_scenes_reports_bad_line(tmp_path):
    path = tmp_path / "bad.ndjson"
    path.write_text(
        '{"id": "a", "width": 64, "height": 64, "boxes": []}\n'
        '{"id": "b", "width": 64, "boxes": []}\n'
    )
    with pytest.raises(ValueError, match="line 2"):
        read_scenes(path)


def test_read_scenes_rejects_degenerate_boxes(tmp_path):
    path = tmp_path / "bad.ndjson"
    path.write_text(
        '{"id": "a", "width": 64, "height": 64,'
        ' "boxes": [{"x": 1, "y": 1, "w": 0, "h": 5}]}\n'
    )
    with pytest.raises(ValueError, match="line 1"):
        read_scenes(path)


def test_predictions_file_roundtrip(tmp_path):
    preds = [
        ScenePredictions(
            "s0",
            [Detection(BoxGeometry(1.5, 2.5, 3.0, 4.0), 0.75, 1, 0),
             Detection(BoxGeometry(9.0, 9.0, -1.0, 2.0), 0.25, 2, 3)],
        ),
        ScenePredictions("s1", []),
    ]
    path = tmp_path / "preds.ndjson"
    write_predictions(preds, path)
    assert read_predictions(path) == preds


def test_read_predictions_reports_bad_line(tmp_path):
    path = tmp_path / "bad.ndjson"
    path.write_text('{"scene_id": "a", "boxes": [{"x": 1}]}\n')
    with pytest.raises(ValueError, match="line 1"):
        read_predictions(path)
