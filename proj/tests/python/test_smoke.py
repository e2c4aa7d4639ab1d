import json
import math

import pytest

import gridcascade as gc


def test_iou_examples():
    assert gc.iou(gc.BBox(0, 0, 2, 2), gc.BBox(0, 0, 2, 2)) == 1.0
    assert gc.iou(gc.BBox(0, 0, 1, 1), gc.BBox(2, 2, 3, 3)) == 0.0
    assert math.isclose(gc.iou(gc.BBox(0, 0, 2, 2), gc.BBox(1, 1, 3, 3)), 1 / 7, abs_tol=1e-12)


def test_expand_and_clip():
    assert gc.expand(gc.BBox(10, 10, 30, 30), 2.0) == gc.BBox(0, 0, 40, 40)
    assert gc.clip(gc.BBox(-5, -5, 10, 10), gc.ImageBounds(100, 100)) == gc.BBox(0, 0, 10, 10)


def test_invalid_box_raises():
    with pytest.raises(ValueError):
        gc.BBox(2, 0, 1, 1)


def test_codec_roundtrip_within_quantization():
    gt = gc.BBox(12, 14, 28, 27)
    back = gc.roundtrip_box(gt, gc.BBox(10, 10, 30, 30), 2.0)
    for a, b in zip(back.coords(), gt.coords()):
        assert abs(a - b) <= 40 / 28


def test_nms_keeps_best_duplicate():
    boxes = [gc.BBox(0, 0, 10, 10), gc.BBox(0, 0, 10, 10), gc.BBox(50, 50, 60, 60)]
    assert gc.nms(boxes, [0.8, 0.9, 0.1], 0.3) == [1, 2]


def test_average_precision_hand_cases():
    assert math.isclose(gc.average_precision([False, True], 1), 50 / 101, abs_tol=1e-12)
    assert math.isclose(gc.average_precision([True, False], 2), 51 / 101, abs_tol=1e-12)


def test_fused_score():
    assert math.isclose(gc.fused_score(0.9, 0.8, 0.7, 0.8), 0.7160, abs_tol=5e-5)


def test_generate_scene_is_deterministic():
    a = gc.generate_scene(5, 1, 4, 1.0)
    b = gc.generate_scene(5, 1, 4, 1.0)
    assert len(a) == 4
    assert all(g["truncated"] for g in a)
    assert [g["box"] for g in a] == [g["box"] for g in b]


def test_default_config_is_json_and_hash_ignores_seed():
    doc = json.loads(gc.default_config())
    assert doc["scoring"]["gamma"] == 0.8
    text = gc.default_config()
    assert gc.config_hash(text, 1) == gc.config_hash(text, 2)


def test_run_experiment_small_and_deterministic():
    first = gc.run_experiment("", 3, ["corpus.n_scenes=10"])
    second = gc.run_experiment("", 3, ["corpus.n_scenes=10"])
    assert first["AP"] == second["AP"]
    assert 0.0 <= first["AP"] <= 1.0
    assert first["n_detections"] > 0
    assert first["metrics_csv"].startswith("config_hash,seed,metric,value")


def test_unknown_config_key_raises():
    with pytest.raises(ValueError, match="unknown key"):
        gc.run_experiment("", 1, ["scoring.bogus=1"])
