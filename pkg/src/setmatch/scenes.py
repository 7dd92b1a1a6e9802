"""Synthetic detection scenes: ground truths, noisy predictions, and I/O.

A scene holds ``n`` ground-truth objects and ``m >= n`` predictions.  The
generator starts from perfect detections and degrades them in controlled
ways: duplicate detections per object, dropped objects, box jitter, class
noise, and clutter (predictions with no underlying object).  Every
prediction records which object produced it, so matchers can be scored
against the truth.

Scenes round-trip exactly through JSON: floats are written in shortest
round-trip form, so ``load_scene(save_scene(s)) == s``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cost import PROB_SUM_TOL
from .geometry import BBox


class SceneFormatError(ValueError):
    """Raised when a scene file is missing, malformed, or inconsistent."""


@dataclass(frozen=True)
class GroundTruth:
    """A true object: class label plus box."""

    class_id: int
    box: BBox

    def __post_init__(self) -> None:
        if not isinstance(self.class_id, int) or isinstance(self.class_id, bool):
            raise ValueError(f"GroundTruth.class_id must be an int, got {self.class_id!r}")
        if self.class_id < 0:
            raise ValueError(f"GroundTruth.class_id must be >= 0, got {self.class_id}")
        if not isinstance(self.box, BBox):
            raise ValueError("GroundTruth.box must be a BBox")


@dataclass(frozen=True)
class Prediction:
    """A detector output: class distribution plus box.

    ``class_probs`` may carry one extra trailing slot relative to the
    scene's class count, read as a no-object probability.
    """

    class_probs: tuple[float, ...]
    box: BBox

    def __post_init__(self) -> None:
        probs = tuple(float(p) for p in self.class_probs)
        if len(probs) == 0:
            raise ValueError("Prediction.class_probs must be nonempty")
        if any(not math.isfinite(p) or p < 0.0 for p in probs):
            raise ValueError(f"Prediction.class_probs must be finite and >= 0, got {probs!r}")
        if abs(sum(probs) - 1.0) > PROB_SUM_TOL:
            raise ValueError(f"Prediction.class_probs must sum to 1, got sum {sum(probs)!r}")
        if not isinstance(self.box, BBox):
            raise ValueError("Prediction.box must be a BBox")
        object.__setattr__(self, "class_probs", probs)


@dataclass(frozen=True)
class Scene:
    """A matched set problem: ground truths, predictions, class count.

    ``provenance`` optionally records, per prediction, the index of the
    ground truth that spawned it (``None`` for clutter); it is carried
    through save/load and used only for scoring.
    """

    ground_truths: tuple[GroundTruth, ...]
    predictions: tuple[Prediction, ...]
    num_classes: int
    seed: int | None = None
    provenance: tuple[int | None, ...] | None = None

    def __post_init__(self) -> None:
        gts = tuple(self.ground_truths)
        preds = tuple(self.predictions)
        object.__setattr__(self, "ground_truths", gts)
        object.__setattr__(self, "predictions", preds)
        if not isinstance(self.num_classes, int) or self.num_classes < 1:
            raise ValueError(f"Scene.num_classes must be a positive int, got {self.num_classes!r}")
        if len(gts) == 0:
            raise ValueError("Scene.ground_truths must be nonempty")
        if len(preds) == 0:
            raise ValueError("Scene.predictions must be nonempty")
        for i, gt in enumerate(gts):
            if not isinstance(gt, GroundTruth):
                raise ValueError(f"Scene.ground_truths[{i}] must be a GroundTruth")
            if gt.class_id >= self.num_classes:
                raise ValueError(
                    f"Scene.ground_truths[{i}].class_id {gt.class_id} "
                    f"out of range for {self.num_classes} classes"
                )
        for j, pred in enumerate(preds):
            if not isinstance(pred, Prediction):
                raise ValueError(f"Scene.predictions[{j}] must be a Prediction")
            if len(pred.class_probs) not in (self.num_classes, self.num_classes + 1):
                raise ValueError(
                    f"Scene.predictions[{j}] has {len(pred.class_probs)} probability slots; "
                    f"expected {self.num_classes} (or {self.num_classes + 1} with a no-object slot)"
                )
        if self.provenance is not None:
            prov = tuple(self.provenance)
            object.__setattr__(self, "provenance", prov)
            if len(prov) != len(preds):
                raise ValueError(
                    f"Scene.provenance has {len(prov)} entries for {len(preds)} predictions"
                )
            for j, src in enumerate(prov):
                if src is None:
                    continue
                if not isinstance(src, int) or isinstance(src, bool) or not 0 <= src < len(gts):
                    raise ValueError(
                        f"Scene.provenance[{j}] must be None or a ground-truth index, got {src!r}"
                    )

    @property
    def n_ground_truths(self) -> int:
        return len(self.ground_truths)

    @property
    def n_predictions(self) -> int:
        return len(self.predictions)


@dataclass(frozen=True)
class SceneConfig:
    """Knobs for the scene generator.

    ``duplicates_per_object`` is the Poisson mean of extra detections per
    object; ``miss_rate`` is the probability that any single detection is
    dropped; ``clutter`` adds that many predictions with no underlying
    object.  The generator always emits at least ``max(1, n_objects)``
    predictions, topping up with clutter if drops would leave fewer.
    """

    n_objects: int
    duplicates_per_object: float = 0.0
    miss_rate: float = 0.0
    box_jitter: float = 0.0
    class_noise: float = 0.0
    num_classes: int = 3
    clutter: int = 0

    def __post_init__(self) -> None:
        if not isinstance(self.n_objects, int) or self.n_objects < 1:
            raise ValueError(f"SceneConfig.n_objects must be a positive int, got {self.n_objects!r}")
        if not isinstance(self.num_classes, int) or self.num_classes < 1:
            raise ValueError(f"SceneConfig.num_classes must be a positive int, got {self.num_classes!r}")
        if not isinstance(self.clutter, int) or self.clutter < 0:
            raise ValueError(f"SceneConfig.clutter must be a nonnegative int, got {self.clutter!r}")
        if not math.isfinite(self.duplicates_per_object) or self.duplicates_per_object < 0.0:
            raise ValueError("SceneConfig.duplicates_per_object must be finite and >= 0")
        if not 0.0 <= self.miss_rate <= 1.0:
            raise ValueError(f"SceneConfig.miss_rate must lie in [0, 1], got {self.miss_rate!r}")
        if not math.isfinite(self.box_jitter) or self.box_jitter < 0.0:
            raise ValueError("SceneConfig.box_jitter must be finite and >= 0")
        if not math.isfinite(self.class_noise) or self.class_noise < 0.0:
            raise ValueError("SceneConfig.class_noise must be finite and >= 0")


# Ground-truth boxes are sampled with margins so they always fit in the
# unit square; jittered copies are clamped back inside it.
_CENTER_LO, _CENTER_HI = 0.15, 0.85
_SIDE_LO, _SIDE_HI = 0.05, 0.25
_MIN_SIDE = 1e-3
# Logit scale for class distributions: the true class gets this logit and
# noise perturbs all logits around it.
_LOGIT_SCALE = 4.0


def _clamped_box(cx: float, cy: float, w: float, h: float) -> BBox:
    w = min(max(w, _MIN_SIDE), 1.0)
    h = min(max(h, _MIN_SIDE), 1.0)
    cx = min(max(cx, 0.5 * w), 1.0 - 0.5 * w)
    cy = min(max(cy, 0.5 * h), 1.0 - 0.5 * h)
    return BBox(cx, cy, w, h)


def _jittered_box(box: BBox, sigma: float, rng: np.random.Generator) -> BBox:
    d = rng.normal(0.0, sigma, 4) if sigma > 0.0 else np.zeros(4)
    return _clamped_box(box.cx + d[0], box.cy + d[1], box.w + d[2], box.h + d[3])


def _class_probabilities(
    true_class: int, num_classes: int, noise: float, rng: np.random.Generator
) -> tuple[float, ...]:
    """Distribution peaked at ``true_class``; exactly one-hot when noise is 0."""
    if noise == 0.0:
        probs = [0.0] * num_classes
        probs[true_class] = 1.0
        return tuple(probs)
    logits = rng.normal(0.0, _LOGIT_SCALE * noise, num_classes)
    logits[true_class] += _LOGIT_SCALE
    logits -= logits.max()
    weights = np.exp(logits)
    return tuple(float(p) for p in weights / weights.sum())


def _clutter_prediction(
    config: SceneConfig, rng: np.random.Generator
) -> Prediction:
    fake_class = int(rng.integers(0, config.num_classes))
    cx, cy = rng.uniform(_CENTER_LO, _CENTER_HI, 2)
    w, h = rng.uniform(_SIDE_LO, _SIDE_HI, 2)
    probs = _class_probabilities(fake_class, config.num_classes, config.class_noise, rng)
    return Prediction(class_probs=probs, box=_clamped_box(cx, cy, w, h))


def generate_scene(config: SceneConfig, seed: int) -> Scene:
    """Deterministically generate a scene from a config and seed.

    Draw order is fixed: ground truths first (class, center, size per
    object), then per object a Poisson duplicate count and per detection a
    drop draw, box jitter, and class noise; clutter last.  The same config
    and seed always produce the same scene.
    """
    rng = np.random.default_rng(seed)
    ground_truths = []
    for _ in range(config.n_objects):
        class_id = int(rng.integers(0, config.num_classes))
        cx, cy = rng.uniform(_CENTER_LO, _CENTER_HI, 2)
        w, h = rng.uniform(_SIDE_LO, _SIDE_HI, 2)
        ground_truths.append(GroundTruth(class_id=class_id, box=_clamped_box(cx, cy, w, h)))

    predictions: list[Prediction] = []
    provenance: list[int | None] = []
    for i, gt in enumerate(ground_truths):
        copies = 1 + int(rng.poisson(config.duplicates_per_object))
        for _ in range(copies):
            dropped = rng.random() < config.miss_rate
            box = _jittered_box(gt.box, config.box_jitter, rng)
            probs = _class_probabilities(gt.class_id, config.num_classes, config.class_noise, rng)
            if dropped:
                continue
            predictions.append(Prediction(class_probs=probs, box=box))
            provenance.append(i)

    for _ in range(config.clutter):
        predictions.append(_clutter_prediction(config, rng))
        provenance.append(None)

    # Matching needs at least as many predictions as ground truths; drops
    # can violate that, so top up with clutter.
    while len(predictions) < max(1, config.n_objects):
        predictions.append(_clutter_prediction(config, rng))
        provenance.append(None)

    return Scene(
        ground_truths=tuple(ground_truths),
        predictions=tuple(predictions),
        num_classes=config.num_classes,
        seed=seed,
        provenance=tuple(provenance),
    )


# Frozen reference scene: four objects, six detections.  Two objects are
# detected twice (near-duplicate boxes), so one-to-one matchers must send
# two predictions to background while soft matchers can split mass.
CANONICAL_CONFIG = SceneConfig(
    n_objects=4,
    duplicates_per_object=0.6,
    miss_rate=0.0,
    box_jitter=0.012,
    class_noise=0.08,
    num_classes=4,
    clutter=0,
)
CANONICAL_SEED = 5


def canonical_scene() -> Scene:
    """The frozen 4-object, 6-prediction demonstration scene."""
    return generate_scene(CANONICAL_CONFIG, seed=CANONICAL_SEED)


def _box_payload(box: BBox) -> list[float]:
    return [box.cx, box.cy, box.w, box.h]


def _dump_json(value: object, indent: int) -> str:
    """JSON text with floats at 17 significant digits (exact round trip)."""
    pad = "  " * indent
    if isinstance(value, float):
        return format(value, ".17g")
    if isinstance(value, bool) or value is None or isinstance(value, (int, str)):
        return json.dumps(value)
    if isinstance(value, list):
        if not value:
            return "[]"
        inner = ",\n".join(f"{pad}  {_dump_json(v, indent + 1)}" for v in value)
        return f"[\n{inner}\n{pad}]"
    if isinstance(value, dict):
        inner = ",\n".join(
            f"{pad}  {json.dumps(k)}: {_dump_json(v, indent + 1)}" for k, v in value.items()
        )
        return f"{{\n{inner}\n{pad}}}"
    raise TypeError(f"cannot serialize {type(value).__name__}")


def save_scene(scene: Scene, path: str | Path) -> None:
    """Write a scene as JSON with 17-significant-digit numbers; exact round
    trip through :func:`load_scene`."""
    payload: dict = {
        "format": "setmatch-scene",
        "version": 1,
        "num_classes": scene.num_classes,
        "seed": scene.seed,
        "ground_truths": [
            {"class_id": gt.class_id, "box": _box_payload(gt.box)} for gt in scene.ground_truths
        ],
        "predictions": [
            {"class_probs": list(p.class_probs), "box": _box_payload(p.box)}
            for p in scene.predictions
        ],
    }
    if scene.provenance is not None:
        payload["provenance"] = list(scene.provenance)
    Path(path).write_text(_dump_json(payload, 0) + "\n", encoding="utf-8")


def _parse_box(raw: object, where: str) -> BBox:
    if not isinstance(raw, list) or len(raw) != 4:
        raise SceneFormatError(f"{where}.box must be a list [cx, cy, w, h], got {raw!r}")
    values = []
    for k, item in enumerate(raw):
        if not isinstance(item, (int, float)) or isinstance(item, bool):
            raise SceneFormatError(f"{where}.box[{k}] must be a number, got {item!r}")
        values.append(float(item))
    try:
        return BBox(*values)
    except ValueError as exc:
        raise SceneFormatError(f"{where}.box is invalid: {exc}") from exc


def load_scene(path: str | Path) -> Scene:
    """Read a scene written by :func:`save_scene`, validating every field."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise SceneFormatError(f"cannot read scene file {path}: {exc}") from exc
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneFormatError(
            f"{path} is not valid JSON (line {exc.lineno}, column {exc.colno}): {exc.msg}"
        ) from exc
    if not isinstance(payload, dict):
        raise SceneFormatError(f"{path}: top level must be an object, got {type(payload).__name__}")
    if payload.get("format") != "setmatch-scene":
        raise SceneFormatError(f"{path}: 'format' must be 'setmatch-scene', got {payload.get('format')!r}")
    if payload.get("version") != 1:
        raise SceneFormatError(f"{path}: unsupported scene version {payload.get('version')!r}")

    num_classes = payload.get("num_classes")
    if not isinstance(num_classes, int) or isinstance(num_classes, bool):
        raise SceneFormatError(f"{path}: 'num_classes' must be an int, got {num_classes!r}")
    seed = payload.get("seed")
    if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool)):
        raise SceneFormatError(f"{path}: 'seed' must be an int or null, got {seed!r}")

    raw_gts = payload.get("ground_truths")
    if not isinstance(raw_gts, list):
        raise SceneFormatError(f"{path}: 'ground_truths' must be a list")
    ground_truths = []
    for i, raw in enumerate(raw_gts):
        where = f"ground_truths[{i}]"
        if not isinstance(raw, dict):
            raise SceneFormatError(f"{path}: {where} must be an object")
        class_id = raw.get("class_id")
        if not isinstance(class_id, int) or isinstance(class_id, bool):
            raise SceneFormatError(f"{path}: {where}.class_id must be an int, got {class_id!r}")
        try:
            ground_truths.append(GroundTruth(class_id=class_id, box=_parse_box(raw.get("box"), where)))
        except ValueError as exc:
            raise SceneFormatError(f"{path}: {where} is invalid: {exc}") from exc

    raw_preds = payload.get("predictions")
    if not isinstance(raw_preds, list):
        raise SceneFormatError(f"{path}: 'predictions' must be a list")
    predictions = []
    for j, raw in enumerate(raw_preds):
        where = f"predictions[{j}]"
        if not isinstance(raw, dict):
            raise SceneFormatError(f"{path}: {where} must be an object")
        raw_probs = raw.get("class_probs")
        if not isinstance(raw_probs, list) or not all(
            isinstance(p, (int, float)) and not isinstance(p, bool) for p in raw_probs
        ):
            raise SceneFormatError(f"{path}: {where}.class_probs must be a list of numbers")
        try:
            predictions.append(
                Prediction(
                    class_probs=tuple(float(p) for p in raw_probs),
                    box=_parse_box(raw.get("box"), where),
                )
            )
        except ValueError as exc:
            raise SceneFormatError(f"{path}: {where} is invalid: {exc}") from exc

    provenance = None
    if "provenance" in payload:
        raw_prov = payload["provenance"]
        if not isinstance(raw_prov, list):
            raise SceneFormatError(f"{path}: 'provenance' must be a list")
        entries: list[int | None] = []
        for j, src in enumerate(raw_prov):
            if src is not None and (not isinstance(src, int) or isinstance(src, bool)):
                raise SceneFormatError(f"{path}: provenance[{j}] must be an int or null, got {src!r}")
            entries.append(src)
        provenance = tuple(entries)

    try:
        return Scene(
            ground_truths=tuple(ground_truths),
            predictions=tuple(predictions),
            num_classes=num_classes,
            seed=seed,
            provenance=provenance,
        )
    except ValueError as exc:
        raise SceneFormatError(f"{path}: {exc}") from exc
