"""Synthetic scenes and generator models for closed-loop benchmarks.

Scenes are colored rectangles (one palette color per class) on a noisy
gray background, so a classical color detector can run on the rendered
images while the simulated detector runs on the ground truth alone. The
generator observation model produces concentrated scores near the fovea
and progressively flatter ones with distance, which is the behavior the
calibration pipeline is meant to recover.
"""

from __future__ import annotations

import colorsys

import numpy as np

from .detection import (
    BoundingBox,
    GroundTruthObject,
    SceneGroundTruth,
    SimulatedDetectorConfig,
    detect_simulated,
    iou,
)
from .errors import ContractError
from .geometry import DistanceBinning, GazeState
from .observation import ObservationModel, TrainingScene, train


def class_palette(num_classes: int) -> np.ndarray:
    """(K, 3) uint8 colors, evenly spaced hues. Class k uses row k-1."""
    cols = []
    for k in range(num_classes):
        r, g, b = colorsys.hsv_to_rgb(k / num_classes, 0.78, 0.88)
        cols.append([int(255 * r), int(255 * g), int(255 * b)])
    return np.array(cols, dtype=np.uint8)


def confusion_partner(class_id: int, num_classes: int) -> int:
    """The class a detector mixes a given class up with in the periphery.

    Classes pair up mutually ((1,2), (3,4), ...): a far-away sample then
    carries the pair's joint signature and cannot say which member it came
    from, so only closer views disambiguate. With an odd class count the
    last class has no partner and stays unambiguous.
    """
    if class_id % 2 == 1:
        return class_id + 1 if class_id + 1 <= num_classes else class_id
    return class_id - 1


def make_generator_model(
    num_classes: int,
    binning: DistanceBinning,
    own_start: float = 18.0,
    own_decay: float = 0.45,
    own_floor: float = 1.3,
    off_value: float = 0.55,
    confusion_max: float = 0.9,
    confusion_full_bin: int = 2,
    bg_own_start: float | None = None,
    bg_off_value: float | None = None,
) -> ObservationModel:
    """Ground-truth score model with distance-dependent class confusion.

    The true class's channel concentration decays geometrically across
    distance bins, so foveal scores are sharp. In peripheral bins a
    growing share of that concentration leaks onto a fixed partner class:
    far detections are not merely flat but actively ambiguous between two
    classes, and only closer views disambiguate them. Background (class 0)
    follows the distance pattern on channel 0 with its own sharpness."""
    k1 = num_classes + 1
    alphas = np.full((k1, binning.num_bins, k1), off_value)
    if bg_own_start is None:
        bg_own_start = own_start
    if bg_off_value is None:
        bg_off_value = off_value
    rise = max(confusion_full_bin, 1)
    for b in range(binning.num_bins):
        own = own_start * np.exp(-own_decay * b) + own_floor
        leak = confusion_max * min(1.0, b / rise)
        for k in range(1, k1):
            partner = confusion_partner(k, num_classes)
            if partner == k:
                alphas[k, b, k] = own
                continue
            alphas[k, b, k] = off_value + (own - off_value) * (1.0 - 0.5 * leak)
            alphas[k, b, partner] = off_value + (own - off_value) * 0.5 * leak
        alphas[0, b, :] = bg_off_value
        alphas[0, b, 0] = bg_own_start * np.exp(-own_decay * b) + own_floor
    counts = np.zeros((k1, binning.num_bins), dtype=int)
    converged = np.ones((k1, binning.num_bins), dtype=bool)
    return ObservationModel(alphas, binning, num_classes, counts, converged)


def generate_scene(
    rng: np.random.Generator,
    image_id: str,
    width: int = 256,
    height: int = 256,
    num_classes: int = 4,
    num_objects: tuple[int, int] = (5, 8),
    size_range: tuple[int, int] = (28, 56),
    cluster_radius: float | None = None,
    background_level: int = 120,
    noise: int = 6,
) -> tuple[np.ndarray, SceneGroundTruth]:
    """Render one scene and its ground truth.

    Objects are axis-aligned rectangles with non-overlapping boxes placed
    by rejection sampling; crowded draws may end with fewer objects than
    requested. With ``cluster_radius`` set, object centers concentrate
    around one randomly placed cluster center, the way things of interest
    group on desks and tabletops rather than scattering uniformly.
    """
    if num_classes < 1:
        raise ContractError("need at least one object class")
    palette = class_palette(num_classes)
    img = np.clip(
        background_level + rng.integers(-noise, noise + 1, (height, width, 3)),
        0,
        255,
    ).astype(np.uint8)

    cluster: tuple[float, float] | None = None
    if cluster_radius is not None:
        margin = cluster_radius
        cluster = (
            float(rng.uniform(margin, width - margin)),
            float(rng.uniform(margin, height - margin)),
        )

    objects: list[GroundTruthObject] = []
    target = int(rng.integers(num_objects[0], num_objects[1] + 1))
    tries = 0
    while len(objects) < target and tries < 200:
        tries += 1
        w = int(rng.integers(size_range[0], size_range[1] + 1))
        h = int(rng.integers(size_range[0], size_range[1] + 1))
        if cluster is None:
            x0 = float(rng.uniform(0, width - w))
            y0 = float(rng.uniform(0, height - h))
        else:
            ang = rng.uniform(0, 2 * np.pi)
            rad = cluster_radius * np.sqrt(rng.uniform())
            x0 = float(np.clip(cluster[0] + rad * np.cos(ang) - w / 2, 0, width - w))
            y0 = float(np.clip(cluster[1] + rad * np.sin(ang) - h / 2, 0, height - h))
        box = BoundingBox(x0, y0, x0 + w, y0 + h)
        grown = BoundingBox(max(0, x0 - 4), max(0, y0 - 4), min(width, x0 + w + 4), min(height, y0 + h + 4))
        if any(iou(grown, o.box) > 0 for o in objects):
            continue
        class_id = int(rng.integers(1, num_classes + 1))
        color = palette[class_id - 1].astype(int)
        ys, xs = slice(int(round(y0)), int(round(y0 + h))), slice(int(round(x0)), int(round(x0 + w)))
        jitter = rng.integers(-8, 9, 3)
        img[ys, xs] = np.clip(color + jitter, 0, 255).astype(np.uint8)
        objects.append(GroundTruthObject(box, class_id))
    gt = SceneGroundTruth(image_id, width, height, tuple(objects))
    return img, gt


def generate_dataset(seed: int, num_scenes: int, **scene_kwargs):
    """List of (image, ground_truth) pairs with per-scene derived seeds."""
    out = []
    for i in range(num_scenes):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        out.append(generate_scene(rng, image_id=f"scene_{i:03d}", **scene_kwargs))
    return out


def closed_loop_benchmark(seed: int = 20260811, num_eval_scenes: int = 20):
    """The standard desk-scale benchmark world.

    Scenes are 640 px with one ~55 px-radius object cluster (things of
    interest group, they do not scatter uniformly). Score quality is tied
    to an absolute 255 px binning radius: the two innermost bins resolve
    classes, everything further collapses into symmetric pairwise
    confusion that tilts map cells without ever deciding between the pair
    members. Peripheral glimpses therefore leave planning hints anywhere
    in the scene while classification demands a close fixation, which is
    the regime where choosing fixations matters. Returns (simulator
    config, trained observation model, evaluation scenes).
    """
    size = 640
    binning = DistanceBinning.uniform(7, 255.0)
    generator = make_generator_model(
        4,
        binning,
        own_start=20.0,
        own_decay=0.6,
        own_floor=0.9,
        off_value=0.55,
        confusion_max=1.0,
        confusion_full_bin=2,
    )
    sim = SimulatedDetectorConfig(
        generator,
        miss_midpoint=429.0,
        miss_slope=0.005,
        jitter_scale=0.02,
        false_positive_rate=0.3,
    )
    scene_kwargs = dict(
        width=size,
        height=size,
        num_classes=4,
        num_objects=(7, 10),
        size_range=(24, 38),
        cluster_radius=55.0,
    )
    train_scenes = generate_dataset(seed + 1, 8, **scene_kwargs)
    model = train(
        collect_training_scenes(train_scenes, sim, fixations_per_scene=50, seed=seed + 2),
        binning,
    )
    eval_scenes = generate_dataset(seed + 3, num_eval_scenes, **scene_kwargs)
    return sim, model, eval_scenes


def collect_training_scenes(
    scenes,
    sim_config: SimulatedDetectorConfig,
    fixations_per_scene: int,
    seed: int,
) -> list[TrainingScene]:
    """Observe each scene at uniformly random fixations with the simulated
    detector, producing the input the model trainer expects."""
    out = []
    for idx, item in enumerate(scenes):
        gt = item[1] if isinstance(item, tuple) else item
        rng = np.random.default_rng(np.random.SeedSequence([seed, 7001, idx]))
        observations = []
        for _ in range(fixations_per_scene):
            fx = float(rng.uniform(0, gt.width))
            fy = float(rng.uniform(0, gt.height))
            dets = detect_simulated(gt, GazeState((fx, fy)), sim_config, rng=rng)
            observations.append(((fx, fy), dets))
        out.append(TrainingScene(gt, tuple(observations)))
    return out
