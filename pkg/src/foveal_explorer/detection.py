"""Detection data model, ground-truth ingestion, and detection sources.

Three sources produce detections: replay from a JSON-lines file, a
simulated detector driven by scene ground truth, and an HTTP client for
an external detector service. All share one record schema:

    {"image_id": str, "fixation": [x, y],
     "boxes": [[x0, y0, x1, y1], ...], "scores": [[s0, ..., sK], ...]}

with one record per line in detection files and a single record as the
HTTP response body.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
import requests

from .dirichlet import dirichlet_sample
from .errors import (
    BridgeNetworkError,
    BridgeSchemaError,
    BridgeTimeoutError,
    ContractError,
    ValidationError,
)
from .geometry import GazeState, bin_of, fovea_distance

if TYPE_CHECKING:
    from .observation import ObservationModel


@dataclass(frozen=True)
class BoundingBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ContractError(f"degenerate box {self}")

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def contains(self, x: float, y: float) -> bool:
        return self.x_min <= x < self.x_max and self.y_min <= y < self.y_max

    def as_list(self) -> list[float]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]


@dataclass(frozen=True)
class Detection:
    """One detector output: a box plus unit-sum scores over K+1 classes
    (index 0 is the background class)."""

    box: BoundingBox
    scores: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=float)
        if s.ndim != 1 or s.size < 2:
            raise ContractError("scores must be a vector over at least 2 classes")
        if np.any(s < 0) or abs(s.sum() - 1.0) > 1e-6:
            raise ContractError("scores must be non-negative and sum to 1")
        s = s / s.sum()
        s.flags.writeable = False
        object.__setattr__(self, "scores", s)

    @property
    def num_classes(self) -> int:
        """Number of object classes K (scores carry K+1 entries)."""
        return self.scores.size - 1


@dataclass(frozen=True)
class GroundTruthObject:
    box: BoundingBox
    class_id: int

    def __post_init__(self):
        if self.class_id < 1:
            raise ContractError("ground-truth class ids start at 1 (0 is background)")


@dataclass(frozen=True)
class SceneGroundTruth:
    image_id: str
    width: int
    height: int
    objects: tuple[GroundTruthObject, ...]

    def to_json_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "width": self.width,
            "height": self.height,
            "objects": [{"box": o.box.as_list(), "class_id": o.class_id} for o in self.objects],
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "SceneGroundTruth":
        try:
            objects = tuple(
                GroundTruthObject(BoundingBox(*map(float, o["box"])), int(o["class_id"]))
                for o in obj["objects"]
            )
            return cls(str(obj["image_id"]), int(obj["width"]), int(obj["height"]), objects)
        except (KeyError, TypeError, ContractError) as exc:
            raise ValidationError(f"bad ground-truth record: {exc}") from exc


def load_ground_truth(path) -> list[SceneGroundTruth]:
    """Read one scene record or a list of them from a JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    records = data if isinstance(data, list) else [data]
    return [SceneGroundTruth.from_json_dict(r) for r in records]


def save_ground_truth(path, scenes) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([s.to_json_dict() for s in scenes], fh, indent=1)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes; 0 when disjoint."""
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


@dataclass
class SimulatedDetectorConfig:
    """Distance-driven stand-in for a real detector.

    Detectability is logistic in the fovea distance (probability
    1/(1+exp(slope*(d - midpoint)))), box corners are jittered with std
    ``jitter_scale * d``, scores are drawn from the generator model's
    Dirichlet for (true class, distance bin), and Poisson-many false
    positives carry background-class scores.
    """

    generator_model: "ObservationModel"
    miss_midpoint: float | None = None  # None -> 0.6 * generator max radius
    miss_slope: float = 0.02
    jitter_scale: float = 0.02
    false_positive_rate: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.jitter_scale < 0 or self.false_positive_rate < 0:
            raise ContractError("rates and jitter must be non-negative")

    @property
    def midpoint(self) -> float:
        if self.miss_midpoint is not None:
            return self.miss_midpoint
        return 0.6 * self.generator_model.binning.max_radius

    def detectability(self, distance) -> np.ndarray:
        d = np.asarray(distance, dtype=float)
        return 1.0 / (1.0 + np.exp(self.miss_slope * (d - self.midpoint)))


def _random_box(rng: np.random.Generator, width: float, height: float) -> BoundingBox:
    x = np.sort(rng.uniform(0.0, width, 2))
    y = np.sort(rng.uniform(0.0, height, 2))
    x[1] = max(x[1], min(x[0] + 2.0, width))
    y[1] = max(y[1], min(y[0] + 2.0, height))
    if x[1] <= x[0]:
        x[0] = x[1] - 2.0
    if y[1] <= y[0]:
        y[0] = y[1] - 2.0
    return BoundingBox(x[0], y[0], x[1], y[1])


def detect_simulated(
    ground_truth: SceneGroundTruth,
    gaze: GazeState,
    config: SimulatedDetectorConfig,
    rng: np.random.Generator | None = None,
) -> list[Detection]:
    """Emit simulated detections for one fixation.

    Without an explicit ``rng`` the stream is seeded from the config, so a
    bare call is reproducible; exploration loops pass their own exclusive
    stream.
    """
    model = config.generator_model
    if model is None:
        raise ContractError("simulated detector needs a generator observation model")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    width, height = float(ground_truth.width), float(ground_truth.height)

    detections: list[Detection] = []
    for obj in ground_truth.objects:
        d_true = fovea_distance(obj.box.center, gaze)
        if rng.uniform() >= config.detectability(d_true):
            continue
        std = config.jitter_scale * d_true
        corners = np.array(obj.box.as_list()) + (rng.normal(0.0, std, 4) if std > 0 else 0.0)
        x0, x1 = sorted((corners[0], corners[2]))
        y0, y1 = sorted((corners[1], corners[3]))
        x0 = float(np.clip(x0, 0.0, width - 1.0))
        y0 = float(np.clip(y0, 0.0, height - 1.0))
        x1 = float(np.clip(x1, x0 + 1.0, width))
        y1 = float(np.clip(y1, y0 + 1.0, height))
        box = BoundingBox(x0, y0, x1, y1)
        # The reported box is the only geometry the detector exposes, so the
        # score draw uses its center; training then sees a consistent pair.
        d_emit = fovea_distance(box.center, gaze)
        alpha = model.alphas[obj.class_id, bin_of(d_emit, model.binning)]
        detections.append(Detection(box, dirichlet_sample(alpha, rng)))

    for _ in range(rng.poisson(config.false_positive_rate)):
        box = _random_box(rng, width, height)
        d_fp = fovea_distance(box.center, gaze)
        alpha = model.alphas[0, bin_of(d_fp, model.binning)]
        detections.append(Detection(box, dirichlet_sample(alpha, rng)))
    return detections


def parse_detection_record(obj: dict, num_classes: int | None = None):
    """Validate one record dict -> (image_id, fixation, detections)."""
    try:
        image_id = str(obj["image_id"])
        fixation = (float(obj["fixation"][0]), float(obj["fixation"][1]))
        boxes = obj["boxes"]
        scores = obj["scores"]
    except (KeyError, TypeError, IndexError) as exc:
        raise ValidationError(f"record missing or malformed field: {exc}") from exc
    if len(obj["fixation"]) != 2:
        raise ValidationError("fixation must have exactly 2 coordinates")
    if len(boxes) != len(scores):
        raise ValidationError(f"{len(boxes)} boxes but {len(scores)} score vectors")
    detections = []
    for i, (b, s) in enumerate(zip(boxes, scores)):
        if len(b) != 4:
            raise ValidationError(f"box {i} does not have 4 coordinates")
        s = np.asarray(s, dtype=float)
        if num_classes is not None and s.size != num_classes + 1:
            raise ValidationError(f"score vector {i} has {s.size} entries, expected {num_classes + 1}")
        if s.size < 2 or np.any(s < 0) or abs(s.sum() - 1.0) > 1e-6:
            raise ValidationError(f"score vector {i} is not a unit-sum probability vector")
        try:
            detections.append(Detection(BoundingBox(*map(float, b)), s / s.sum()))
        except ContractError as exc:
            raise ValidationError(f"detection {i}: {exc}") from exc
    return image_id, fixation, detections


def load_detections(path) -> dict[tuple[str, tuple[float, float]], list[Detection]]:
    """Parse a JSON-lines detections file into a replay table."""
    table: dict[tuple[str, tuple[float, float]], list[Detection]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
            try:
                image_id, fixation, dets = parse_detection_record(obj)
            except ValidationError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from exc
            table[(image_id, fixation)] = dets
    return table


def save_detections(path, records) -> None:
    """Write (image_id, fixation, detections) triples as JSON lines."""
    with open(path, "w", encoding="utf-8") as fh:
        for image_id, fixation, dets in records:
            fh.write(json.dumps(detection_record_dict(image_id, fixation, dets)) + "\n")


def detection_record_dict(image_id, fixation, detections) -> dict:
    return {
        "image_id": image_id,
        "fixation": [float(fixation[0]), float(fixation[1])],
        "boxes": [d.box.as_list() for d in detections],
        "scores": [d.scores.tolist() for d in detections],
    }


def detect_via_bridge(
    image: np.ndarray,
    fixation,
    endpoint: str,
    foveate_remote: bool = False,
    timeout: float = 30.0,
    num_classes: int | None = None,
) -> list[Detection]:
    """POST an image to a detector service and parse the response.

    Raises BridgeTimeoutError / BridgeNetworkError / BridgeSchemaError so
    callers can fall back to another source per failure mode.
    """
    from PIL import Image as PILImage

    buf = io.BytesIO()
    PILImage.fromarray(np.asarray(image)).save(buf, format="PNG")
    meta = {"fixation": [float(fixation[0]), float(fixation[1])], "foveate": bool(foveate_remote)}
    try:
        resp = requests.post(
            endpoint.rstrip("/") + "/detect",
            files={
                "image": ("image.png", buf.getvalue(), "image/png"),
                "meta": (None, json.dumps(meta), "application/json"),
            },
            timeout=timeout,
        )
    except requests.Timeout as exc:
        raise BridgeTimeoutError(f"bridge did not answer within {timeout}s") from exc
    except requests.RequestException as exc:
        raise BridgeNetworkError(f"bridge unreachable: {exc}") from exc
    if resp.status_code != 200:
        raise BridgeSchemaError(f"bridge returned HTTP {resp.status_code}: {resp.text[:200]}")
    try:
        payload = resp.json()
    except ValueError as exc:
        raise BridgeSchemaError(f"bridge response is not JSON: {exc}") from exc
    try:
        _, _, detections = parse_detection_record(payload, num_classes=num_classes)
    except ValidationError as exc:
        raise BridgeSchemaError(f"bridge response violates the record schema: {exc}") from exc
    return detections
