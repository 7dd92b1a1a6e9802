"""Pairwise matching costs between predictions and ground truths.

The price of pairing prediction ``j`` with ground truth ``i`` combines a
classification term (negative log-likelihood of the true class) with two
localization terms (L1 distance in center-size coordinates and a GIoU
complement), each scaled by a configurable weight.  Cost matrices are laid
out with predictions along rows and ground truths along columns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .geometry import giou, l1_box_distance

if TYPE_CHECKING:  # pragma: no cover
    from .scenes import Scene

# Probabilities are clamped from below before taking logs so that a
# confidently wrong classifier yields a large but finite cost.
PROB_FLOOR = 1e-8

# Tolerance for validating that a probability vector sums to one.
PROB_SUM_TOL = 1e-6


@dataclass(frozen=True)
class CostWeights:
    """Weights of the three cost terms.

    Defaults follow common practice for detection matching: the L1 term is
    weighted heaviest, the GIoU term next, the classification term least.
    """

    lambda_class: float = 1.0
    lambda_bbox: float = 5.0
    lambda_giou: float = 2.0

    def __post_init__(self) -> None:
        for name in ("lambda_class", "lambda_bbox", "lambda_giou"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0.0:
                raise ValueError(f"CostWeights.{name} must be finite and >= 0, got {value!r}")


@dataclass(frozen=True)
class CostMatrix:
    """Dense cost matrix with shape ``(n_predictions, n_ground_truths)``.

    ``values[j, i]`` is the cost of assigning prediction ``j`` to ground
    truth ``i``.  Entries are finite and nonnegative; the array is
    read-only.
    """

    values: np.ndarray
    weights: CostWeights = field(default_factory=CostWeights)

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError(f"cost matrix must be 2-D, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("cost matrix entries must be finite")
        if np.any(values < 0.0):
            raise ValueError("cost matrix entries must be nonnegative")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n_predictions(self) -> int:
        return self.values.shape[0]

    @property
    def n_ground_truths(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def classification_cost(class_probs: Sequence[float] | np.ndarray, gt_class: int) -> float:
    """Negative log-probability assigned to the true class.

    The probability is clamped to at least :data:`PROB_FLOOR` before the
    log, so the result is always finite.  The vector must be nonnegative
    and sum to one within :data:`PROB_SUM_TOL`.
    """
    probs = np.asarray(class_probs, dtype=np.float64)
    if probs.ndim != 1 or probs.size == 0:
        raise ValueError(f"class probabilities must be a nonempty 1-D vector, got shape {probs.shape}")
    if not np.all(np.isfinite(probs)) or np.any(probs < 0.0):
        raise ValueError("class probabilities must be finite and nonnegative")
    if abs(float(probs.sum()) - 1.0) > PROB_SUM_TOL:
        raise ValueError(f"class probabilities must sum to 1, got {float(probs.sum())!r}")
    if not 0 <= gt_class < probs.size:
        raise ValueError(f"class index {gt_class} out of range for {probs.size} classes")
    return -math.log(max(float(probs[gt_class]), PROB_FLOOR))


def pairwise_cost_matrix(scene: "Scene", weights: CostWeights | None = None) -> CostMatrix:
    """Full prediction-by-ground-truth cost matrix for a scene.

    Each entry combines classification, L1, and GIoU-complement terms:

    ``lambda_class * (-log p_j(c_i)) + lambda_bbox * l1(b_j, b_i)
    + lambda_giou * (1 - giou(b_j, b_i))``
    """
    if weights is None:
        weights = CostWeights()
    if not scene.ground_truths:
        raise ValueError("scene has no ground truths; cost matrix would be empty")
    if not scene.predictions:
        raise ValueError("scene has no predictions; cost matrix would be empty")
    m = len(scene.predictions)
    n = len(scene.ground_truths)
    values = np.empty((m, n), dtype=np.float64)
    for j, pred in enumerate(scene.predictions):
        for i, gt in enumerate(scene.ground_truths):
            cls = classification_cost(pred.class_probs, gt.class_id)
            loc = l1_box_distance(pred.box, gt.box)
            overlap = 1.0 - giou(pred.box, gt.box)
            values[j, i] = (
                weights.lambda_class * cls
                + weights.lambda_bbox * loc
                + weights.lambda_giou * overlap
            )
    return CostMatrix(values=values, weights=weights)


def background_augmented_cost(
    cost: CostMatrix | np.ndarray, bg_cost: float | Sequence[float] | np.ndarray
) -> np.ndarray:
    """Square cost matrix with ``m - n`` virtual background columns appended.

    Requires at least as many predictions as ground truths.  ``bg_cost`` may
    be a scalar (one price for leaving any prediction unmatched) or a
    length-``m`` vector of per-prediction prices; it fills every appended
    column.
    """
    values = cost.values if isinstance(cost, CostMatrix) else np.asarray(cost, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError(f"cost matrix must be 2-D, got shape {values.shape}")
    m, n = values.shape
    if m < n:
        raise ValueError(
            f"cannot pad {m} predictions out to {n} ground truths; "
            "background columns only absorb surplus predictions"
        )
    bg = np.asarray(bg_cost, dtype=np.float64)
    if bg.ndim == 0:
        bg = np.full(m, float(bg))
    if bg.shape != (m,):
        raise ValueError(f"background cost must be a scalar or length-{m} vector, got shape {bg.shape}")
    if not np.all(np.isfinite(bg)) or np.any(bg < 0.0):
        raise ValueError("background costs must be finite and nonnegative")
    out = np.empty((m, m), dtype=np.float64)
    out[:, :n] = values
    out[:, n:] = bg[:, None]
    return out


def default_background_cost(
    scene: "Scene", weights: CostWeights | None = None, fallback: float = 1.0
) -> np.ndarray | float:
    """Per-prediction background price derived from a no-object class.

    When every prediction carries one more probability slot than the scene
    has classes, the extra final slot is read as the no-object probability
    and the price of backgrounding prediction ``j`` is
    ``lambda_class * (-log p_j(no-object))``.  Otherwise the scalar
    ``fallback`` is returned.
    """
    if weights is None:
        weights = CostWeights()
    k = scene.num_classes
    if all(len(p.class_probs) == k + 1 for p in scene.predictions):
        probs = np.array([p.class_probs[k] for p in scene.predictions], dtype=np.float64)
        return weights.lambda_class * -np.log(np.maximum(probs, PROB_FLOOR))
    if not math.isfinite(fallback) or fallback < 0.0:
        raise ValueError(f"fallback background cost must be finite and >= 0, got {fallback!r}")
    return float(fallback)
