"""Scene generation and persistence: determinism, structural guarantees,
exact round trips, and rejection of malformed files."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from setmatch.geometry import BBox
from setmatch.scenes import (
    CANONICAL_CONFIG,
    CANONICAL_SEED,
    GroundTruth,
    Prediction,
    Scene,
    SceneConfig,
    SceneFormatError,
    canonical_scene,
    generate_scene,
    load_scene,
    save_scene,
)

EXACT_CONFIG = SceneConfig(
    n_objects=3,
    duplicates_per_object=0.0,
    miss_rate=0.0,
    box_jitter=0.0,
    class_noise=0.0,
    num_classes=3,
    clutter=0,
)


class TestSceneConfig:
    def test_rejects_zero_objects(self):
        with pytest.raises(ValueError, match="n_objects"):
            SceneConfig(n_objects=0)

    def test_rejects_out_of_range_miss_rate(self):
        with pytest.raises(ValueError, match="miss_rate"):
            SceneConfig(n_objects=2, miss_rate=1.5)

    def test_rejects_negative_jitter(self):
        with pytest.raises(ValueError, match="box_jitter"):
            SceneConfig(n_objects=2, box_jitter=-0.1)


class TestGenerateScene:
    def test_fixed_seed_reproduces_identical_scene(self):
        a = generate_scene(CANONICAL_CONFIG, seed=42)
        b = generate_scene(CANONICAL_CONFIG, seed=42)
        assert a == b

    def test_different_seeds_differ(self):
        a = generate_scene(CANONICAL_CONFIG, seed=1)
        b = generate_scene(CANONICAL_CONFIG, seed=2)
        assert a != b

    def test_noiseless_config_reproduces_ground_truths(self):
        scene = generate_scene(EXACT_CONFIG, seed=7)
        assert scene.n_predictions == scene.n_ground_truths
        for pred, gt, src in zip(scene.predictions, scene.ground_truths, scene.provenance):
            assert src is not None and scene.ground_truths[src] == gt
            assert pred.box == gt.box
            expected = tuple(
                1.0 if k == gt.class_id else 0.0 for k in range(scene.num_classes)
            )
            assert pred.class_probs == expected

    @given(seed=st.integers(0, 99))
    @settings(max_examples=100, deadline=None)
    def test_predictions_at_least_ground_truths(self, seed):
        config = SceneConfig(n_objects=4, duplicates_per_object=0.5, clutter=1)
        scene = generate_scene(config, seed=seed)
        assert scene.n_ground_truths == 4
        assert scene.n_predictions >= 4

    @given(seed=st.integers(0, 60))
    @settings(max_examples=60, deadline=None)
    def test_heavy_misses_still_yield_enough_predictions(self, seed):
        config = SceneConfig(n_objects=3, miss_rate=0.9, clutter=0)
        scene = generate_scene(config, seed=seed)
        assert scene.n_predictions >= scene.n_ground_truths

    def test_all_misses_top_up_with_clutter(self):
        config = SceneConfig(n_objects=2, miss_rate=1.0, clutter=0)
        scene = generate_scene(config, seed=0)
        assert scene.n_predictions == 2
        assert all(src is None for src in scene.provenance)

    def test_provenance_tracks_spawning_object(self):
        config = SceneConfig(n_objects=3, duplicates_per_object=1.0, clutter=2)
        scene = generate_scene(config, seed=5)
        assert len(scene.provenance) == scene.n_predictions
        clutter = sum(1 for src in scene.provenance if src is None)
        assert clutter >= 2
        for src in scene.provenance:
            assert src is None or 0 <= src < scene.n_ground_truths

    @given(seed=st.integers(0, 40))
    @settings(max_examples=40, deadline=None)
    def test_boxes_stay_in_unit_square(self, seed):
        config = SceneConfig(n_objects=4, box_jitter=0.2, clutter=2)
        scene = generate_scene(config, seed=seed)
        for pred in scene.predictions:
            x_min, y_min, x_max, y_max = pred.box.corners()
            assert x_min >= -1e-12 and y_min >= -1e-12
            assert x_max <= 1.0 + 1e-12 and y_max <= 1.0 + 1e-12

    @given(seed=st.integers(0, 40))
    @settings(max_examples=40, deadline=None)
    def test_class_probabilities_normalized(self, seed):
        config = SceneConfig(n_objects=3, class_noise=0.5, clutter=1)
        scene = generate_scene(config, seed=seed)
        for pred in scene.predictions:
            assert math.isclose(sum(pred.class_probs), 1.0, abs_tol=1e-9)
            assert min(pred.class_probs) >= 0.0


class TestCanonicalScene:
    def test_shape_is_four_ground_truths_six_predictions(self):
        scene = canonical_scene()
        assert scene.seed == CANONICAL_SEED
        assert scene.n_ground_truths == 4
        assert scene.n_predictions == 6

    def test_two_objects_have_duplicate_detections(self):
        scene = canonical_scene()
        counts = np.bincount(
            [src for src in scene.provenance if src is not None], minlength=4
        )
        assert sorted(counts.tolist()) == [1, 1, 2, 2]


class TestPersistence:
    def test_round_trip_is_exact(self, tmp_path):
        scene = generate_scene(CANONICAL_CONFIG, seed=9)
        path = tmp_path / "scene.json"
        save_scene(scene, path)
        loaded = load_scene(path)
        assert loaded == scene
        for a, b in zip(loaded.predictions, scene.predictions):
            assert a.class_probs == b.class_probs
            assert (a.box.cx, a.box.cy, a.box.w, a.box.h) == (
                b.box.cx,
                b.box.cy,
                b.box.w,
                b.box.h,
            )

    def test_round_trip_without_provenance(self, tmp_path):
        box = BBox(0.5, 0.5, 0.2, 0.2)
        scene = Scene(
            ground_truths=(GroundTruth(class_id=0, box=box),),
            predictions=(Prediction(class_probs=(1.0, 0.0), box=box),),
            num_classes=2,
        )
        path = tmp_path / "scene.json"
        save_scene(scene, path)
        assert load_scene(path) == scene

    def test_numbers_serialized_with_17_significant_digits(self, tmp_path):
        scene = generate_scene(CANONICAL_CONFIG, seed=3)
        path = tmp_path / "scene.json"
        save_scene(scene, path)
        payload = json.loads(path.read_text())
        raw = payload["predictions"][0]["box"][0]
        assert raw == scene.predictions[0].box.cx

    def test_missing_file_reports_path(self, tmp_path):
        with pytest.raises(SceneFormatError, match="cannot read"):
            load_scene(tmp_path / "nope.json")

    def test_invalid_json_reports_line_and_column(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"format": "setmatch-scene",\n  "version": ]')
        with pytest.raises(SceneFormatError, match=r"line 2"):
            load_scene(path)

    def test_wrong_format_tag_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"format": "other", "version": 1}))
        with pytest.raises(SceneFormatError, match="format"):
            load_scene(path)

    def test_unsupported_version_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"format": "setmatch-scene", "version": 2}))
        with pytest.raises(SceneFormatError, match="version"):
            load_scene(path)

    def _valid_payload(self):
        scene = generate_scene(EXACT_CONFIG, seed=1)
        return {
            "format": "setmatch-scene",
            "version": 1,
            "num_classes": scene.num_classes,
            "seed": scene.seed,
            "ground_truths": [
                {"class_id": gt.class_id, "box": [gt.box.cx, gt.box.cy, gt.box.w, gt.box.h]}
                for gt in scene.ground_truths
            ],
            "predictions": [
                {
                    "class_probs": list(p.class_probs),
                    "box": [p.box.cx, p.box.cy, p.box.w, p.box.h],
                }
                for p in scene.predictions
            ],
        }

    def test_probs_summing_to_09_rejected(self, tmp_path):
        payload = self._valid_payload()
        payload["predictions"][0]["class_probs"] = [0.5, 0.2, 0.2]
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(payload))
        with pytest.raises(SceneFormatError, match=r"predictions\[0\]"):
            load_scene(path)

    def test_empty_ground_truth_list_rejected(self, tmp_path):
        payload = self._valid_payload()
        payload["ground_truths"] = []
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(payload))
        with pytest.raises(SceneFormatError, match="ground_truths"):
            load_scene(path)

    def test_out_of_range_provenance_rejected(self, tmp_path):
        payload = self._valid_payload()
        payload["provenance"] = [7] * len(payload["predictions"])
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(payload))
        with pytest.raises(SceneFormatError, match="provenance"):
            load_scene(path)

    def test_bad_box_payload_names_the_field(self, tmp_path):
        payload = self._valid_payload()
        payload["ground_truths"][1]["box"] = [0.5, 0.5, 0.2]
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(payload))
        with pytest.raises(SceneFormatError, match=r"ground_truths\[1\]"):
            load_scene(path)
