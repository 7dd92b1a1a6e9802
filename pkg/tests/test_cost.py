"""Cost-matrix construction: classification term, weighted sums,
background augmentation, and the default background cost."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from setmatch.cost import (
    PROB_FLOOR,
    CostMatrix,
    CostWeights,
    background_augmented_cost,
    classification_cost,
    default_background_cost,
    pairwise_cost_matrix,
)
from setmatch.geometry import BBox, giou
from setmatch.scenes import GroundTruth, Prediction, Scene, SceneConfig, generate_scene


def _identity_scene(n: int = 3, num_classes: int = 3) -> Scene:
    """Predictions that duplicate the ground truths with one-hot probs."""
    boxes = [BBox(0.2 + 0.2 * k, 0.3 + 0.1 * k, 0.1, 0.12) for k in range(n)]
    gts = [GroundTruth(class_id=k % num_classes, box=boxes[k]) for k in range(n)]
    preds = []
    for k in range(n):
        probs = [0.0] * num_classes
        probs[k % num_classes] = 1.0
        preds.append(Prediction(class_probs=tuple(probs), box=boxes[k]))
    return Scene(
        ground_truths=tuple(gts), predictions=tuple(preds), num_classes=num_classes
    )


class TestClassificationCost:
    def test_certain_probability_costs_nothing(self):
        assert classification_cost((1.0, 0.0, 0.0), 0) == 0.0

    def test_log_inverse(self):
        probs = (math.exp(-1.0), 1.0 - math.exp(-1.0), 0.0)
        assert classification_cost(probs, 0) == pytest.approx(1.0, abs=1e-12)

    def test_zero_probability_clamped_to_floor(self):
        cost = classification_cost((0.0, 1.0), 0)
        assert cost == pytest.approx(-math.log(PROB_FLOOR), abs=1e-12)
        assert cost == pytest.approx(18.420680743952367, abs=1e-9)

    def test_invalid_class_index_rejected(self):
        with pytest.raises(ValueError, match="class"):
            classification_cost((0.5, 0.5), 2)
        with pytest.raises(ValueError, match="class"):
            classification_cost((0.5, 0.5), -1)

    def test_unnormalized_probs_rejected(self):
        with pytest.raises(ValueError, match="sum"):
            classification_cost((0.5, 0.4), 0)


class TestCostWeights:
    def test_defaults(self):
        weights = CostWeights()
        assert (weights.lambda_class, weights.lambda_bbox, weights.lambda_giou) == (
            1.0,
            5.0,
            2.0,
        )

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError, match="lambda_bbox"):
            CostWeights(lambda_bbox=-0.1)

    def test_non_finite_weight_rejected(self):
        with pytest.raises(ValueError, match="lambda_giou"):
            CostWeights(lambda_giou=math.inf)


class TestCostMatrix:
    def test_values_are_read_only_copies(self):
        raw = np.array([[1.0, 2.0], [3.0, 4.0]])
        matrix = CostMatrix(raw)
        raw[0, 0] = 99.0
        assert matrix.values[0, 0] == 1.0
        with pytest.raises(ValueError):
            matrix.values[0, 0] = 5.0

    def test_rejects_negative_and_non_finite(self):
        with pytest.raises(ValueError):
            CostMatrix(np.array([[-1.0]]))
        with pytest.raises(ValueError):
            CostMatrix(np.array([[math.nan]]))

    def test_shape_accessors(self):
        matrix = CostMatrix(np.zeros((3, 2)))
        assert matrix.n_predictions == 3
        assert matrix.n_ground_truths == 2
        assert matrix.shape == (3, 2)


class TestPairwiseCostMatrix:
    def test_identity_scene_has_zero_diagonal(self):
        cost = pairwise_cost_matrix(_identity_scene())
        assert np.allclose(np.diag(cost.values), 0.0, atol=1e-12)

    def test_identical_boxes_class_term_only(self):
        box = BBox(0.5, 0.5, 0.2, 0.2)
        scene = Scene(
            ground_truths=(GroundTruth(class_id=0, box=box),),
            predictions=(
                Prediction(class_probs=(math.exp(-1.0), 1.0 - math.exp(-1.0)), box=box),
            ),
            num_classes=2,
        )
        cost = pairwise_cost_matrix(scene)
        assert cost.values[0, 0] == pytest.approx(1.0, abs=1e-12)

    def test_hand_value_for_shifted_unit_squares(self):
        # l1 = 0.5, giou = 1/3, certain class: 5*0.5 + 2*(1 - 1/3)
        gt_box = BBox(0.5, 0.5, 1.0, 1.0)
        pred_box = BBox(1.0, 0.5, 1.0, 1.0)
        scene = Scene(
            ground_truths=(GroundTruth(class_id=0, box=gt_box),),
            predictions=(Prediction(class_probs=(1.0, 0.0), box=pred_box),),
            num_classes=2,
        )
        cost = pairwise_cost_matrix(scene)
        assert cost.values[0, 0] == pytest.approx(2.5 + 4.0 / 3.0, abs=1e-12)

    def test_orientation_rows_are_predictions(self):
        config = SceneConfig(n_objects=3, duplicates_per_object=1.0, clutter=2)
        scene = generate_scene(config, seed=11)
        cost = pairwise_cost_matrix(scene)
        assert cost.shape == (scene.n_predictions, scene.n_ground_truths)

    def test_zero_class_and_bbox_weights_leave_giou_term(self):
        scene = generate_scene(SceneConfig(n_objects=3), seed=2)
        weights = CostWeights(lambda_class=0.0, lambda_bbox=0.0, lambda_giou=2.0)
        cost = pairwise_cost_matrix(scene, weights)
        assert np.all(cost.values >= 0.0)
        assert np.all(cost.values <= 4.0 + 1e-12)
        for j, pred in enumerate(scene.predictions):
            for i, gt in enumerate(scene.ground_truths):
                expected = 2.0 * (1.0 - giou(pred.box, gt.box))
                assert cost.values[j, i] == pytest.approx(expected, abs=1e-12)

    @given(scale=st.floats(0.1, 3.0), seed=st.integers(0, 50))
    @settings(max_examples=25, deadline=None)
    def test_weight_monotonicity(self, scale, seed):
        scene = generate_scene(SceneConfig(n_objects=3, class_noise=0.2), seed=seed)
        base = pairwise_cost_matrix(scene, CostWeights(1.0, 5.0, 2.0))
        bumped = pairwise_cost_matrix(scene, CostWeights(1.0 + scale, 5.0, 2.0))
        assert np.all(bumped.values >= base.values - 1e-12)


class TestBackgroundAugmentation:
    def test_square_input_unchanged(self):
        cost = CostMatrix(np.array([[1.0, 2.0], [3.0, 4.0]]))
        augmented = background_augmented_cost(cost, 0.7)
        assert np.array_equal(augmented, cost.values)

    def test_rectangular_padded_with_constant_columns(self):
        cost = CostMatrix(np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]))
        augmented = background_augmented_cost(cost, 0.7)
        assert augmented.shape == (3, 3)
        assert np.array_equal(augmented[:, 2], [0.7, 0.7, 0.7])
        assert np.array_equal(augmented[:, :2], cost.values)

    def test_per_prediction_background_costs(self):
        cost = CostMatrix(np.zeros((3, 1)))
        augmented = background_augmented_cost(cost, np.array([0.1, 0.2, 0.3]))
        assert np.array_equal(augmented[:, 1], [0.1, 0.2, 0.3])
        assert np.array_equal(augmented[:, 2], [0.1, 0.2, 0.3])

    def test_more_ground_truths_than_predictions_rejected(self):
        cost = CostMatrix(np.zeros((2, 3)))
        with pytest.raises(ValueError, match="background"):
            background_augmented_cost(cost, 1.0)


class TestDefaultBackgroundCost:
    def test_fallback_constant_without_no_object_slot(self):
        scene = _identity_scene()
        value = default_background_cost(scene, fallback=0.9)
        assert np.allclose(value, 0.9)

    def test_no_object_slot_drives_the_cost(self):
        box = BBox(0.5, 0.5, 0.2, 0.2)
        scene = Scene(
            ground_truths=(GroundTruth(class_id=0, box=box),),
            predictions=(
                Prediction(class_probs=(0.6, 0.2, 0.2), box=box),  # no-object 0.2
                Prediction(class_probs=(0.1, 0.1, 0.8), box=box),  # no-object 0.8
            ),
            num_classes=2,
        )
        value = default_background_cost(scene, CostWeights(2.0, 5.0, 2.0))
        assert value[0] == pytest.approx(-2.0 * math.log(0.2), abs=1e-12)
        assert value[1] == pytest.approx(-2.0 * math.log(0.8), abs=1e-12)
