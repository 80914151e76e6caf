"""Per-(class, distance-bin) Dirichlet score model: training and calibration.

Each table cell holds the concentration vector of the score distribution a
detector produces for a given true class at a given fovea distance. Raw
score vectors are calibrated by evaluating all class likelihoods in log
space and normalizing, which turns an ambiguous peripheral score vector
into a sharp class posterior.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .dirichlet import DirichletParams, dirichlet_log_pdf, fit_dirichlet_mle
from .errors import ContractError, ModelCorruptError, ModelVersionError
from .detection import Detection, SceneGroundTruth, iou
from .geometry import DistanceBinning, GazeState, bin_of, fovea_distance

log = logging.getLogger(__name__)

MODEL_FILE_VERSION = 1


@dataclass
class ObservationModel:
    """Dirichlet parameters indexed by (class 0..K, distance bin 0..B-1).

    ``alphas`` has shape (K+1, B, K+1): class 0 is the background class and
    score vectors carry K+1 channels. ``counts`` and ``converged`` record
    how each cell was fitted; cells without enough samples fall back to the
    all-ones uniform prior.
    """

    alphas: np.ndarray
    binning: DistanceBinning
    num_classes: int
    counts: np.ndarray
    converged: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alphas, dtype=float)
        k1 = self.num_classes + 1
        if a.shape != (k1, self.binning.num_bins, k1):
            raise ContractError(
                f"alphas shape {a.shape} does not match {k1} classes x {self.binning.num_bins} bins"
            )
        if not np.all(np.isfinite(a)) or not np.all(a > 0):
            raise ContractError("all table entries must be strictly positive")
        self.alphas = a
        self.counts = np.asarray(self.counts, dtype=int)
        self.converged = np.asarray(self.converged, dtype=bool)
        if self.counts.shape != (k1, self.binning.num_bins) or self.converged.shape != self.counts.shape:
            raise ContractError("counts/converged must be (classes, bins) tables")
        self._mean_tables: np.ndarray | None = None

    @property
    def num_channels(self) -> int:
        return self.num_classes + 1

    def params_for(self, class_id: int, bin_index: int) -> DirichletParams:
        return DirichletParams(self.alphas[class_id, bin_index])

    def mean_table(self, bin_index: int) -> np.ndarray:
        """Row-stochastic (K+1, K+1) matrix: row k is the mean score vector
        the model expects from class k in this bin."""
        if self._mean_tables is None:
            sums = self.alphas.sum(axis=-1, keepdims=True)
            self._mean_tables = self.alphas / sums
        return self._mean_tables[:, bin_index, :]

    def fallback_cells(self) -> list[tuple[int, int]]:
        """(class, bin) cells that kept the uniform prior for lack of data."""
        ks, bs = np.nonzero(self.counts < 2)
        return list(zip(ks.tolist(), bs.tolist()))


@dataclass(frozen=True)
class TrainingScene:
    """One scene's ground truth plus detections gathered at several
    fixations: a list of ((x, y), [Detection, ...]) pairs."""

    ground_truth: SceneGroundTruth
    observations: tuple


def match_detections(detections, objects, iou_threshold: float = 0.3):
    """Greedy one-to-one assignment by descending IoU above the threshold.

    Ties break toward the lower detection index, then the lower object
    index. Returns (matches, unmatched_detection_indices).
    """
    pairs = []
    for di, det in enumerate(detections):
        for oi, obj in enumerate(objects):
            v = iou(det.box, obj.box)
            if v > iou_threshold:
                pairs.append((-v, di, oi))
    pairs.sort()
    used_d: set[int] = set()
    used_o: set[int] = set()
    matches = []
    for _, di, oi in pairs:
        if di in used_d or oi in used_o:
            continue
        used_d.add(di)
        used_o.add(oi)
        matches.append((di, oi))
    unmatched = [di for di in range(len(detections)) if di not in used_d]
    return matches, unmatched


def train(
    dataset,
    binning: DistanceBinning,
    iou_threshold: float = 0.3,
    num_classes: int | None = None,
) -> ObservationModel:
    """Fit the score model from scenes observed at random fixations.

    Detections matched to a ground-truth object (IoU above the threshold)
    train that object's class at the detection's distance bin; unmatched
    detections train the background class. Cells with fewer than two
    samples keep the uniform prior and are logged.
    """
    dataset = list(dataset)
    if not dataset:
        raise ContractError("training dataset is empty")
    if num_classes is None:
        for scene in dataset:
            for _, dets in scene.observations:
                if dets:
                    num_classes = dets[0].num_classes
                    break
            if num_classes is not None:
                break
        if num_classes is None:
            raise ContractError("no detections in dataset; pass num_classes explicitly")

    k1 = num_classes + 1
    groups: dict[tuple[int, int], list[np.ndarray]] = {}
    for scene in dataset:
        objects = scene.ground_truth.objects
        for class_ref in (o.class_id for o in objects):
            if class_ref > num_classes:
                raise ContractError(f"ground-truth class {class_ref} exceeds num_classes={num_classes}")
        for fixation, dets in scene.observations:
            gaze = GazeState((float(fixation[0]), float(fixation[1])))
            matches, unmatched = match_detections(dets, objects, iou_threshold)
            for di, oi in matches:
                d = fovea_distance(dets[di].box.center, gaze)
                key = (objects[oi].class_id, bin_of(d, binning))
                groups.setdefault(key, []).append(dets[di].scores)
            for di in unmatched:
                d = fovea_distance(dets[di].box.center, gaze)
                key = (0, bin_of(d, binning))
                groups.setdefault(key, []).append(dets[di].scores)

    alphas = np.ones((k1, binning.num_bins, k1))
    counts = np.zeros((k1, binning.num_bins), dtype=int)
    converged = np.zeros((k1, binning.num_bins), dtype=bool)
    for k in range(k1):
        for b in range(binning.num_bins):
            samples = groups.get((k, b), [])
            counts[k, b] = len(samples)
            if len(samples) < 2:
                log.warning("class %d bin %d: %d sample(s); keeping uniform prior", k, b, len(samples))
                continue
            fit = fit_dirichlet_mle(np.stack(samples))
            alphas[k, b] = fit.params.alpha
            converged[k, b] = fit.converged
            if not fit.converged:
                log.warning("class %d bin %d: MLE hit the iteration cap", k, b)
    return ObservationModel(alphas, binning, num_classes, counts, converged)


def calibrate(raw_scores, distance: float, model: ObservationModel) -> np.ndarray:
    """Replace raw scores with normalized per-class likelihoods.

    Evaluates the log density of the (clamped) raw score vector under every
    class's Dirichlet for the distance bin and applies a log-sum-exp
    normalization, yielding a unit-sum vector over all K+1 classes.
    """
    s = np.asarray(raw_scores, dtype=float)
    if s.shape != (model.num_channels,):
        raise ContractError(f"expected {model.num_channels} scores, got shape {s.shape}")
    b = bin_of(float(distance), model.binning)
    loglik = dirichlet_log_pdf(model.alphas[:, b, :], s[None, :])
    loglik = loglik - loglik.max()
    w = np.exp(loglik)
    return w / w.sum()


def save_model(model: ObservationModel, path) -> None:
    payload = {
        "version": MODEL_FILE_VERSION,
        "num_classes": model.num_classes,
        "bin_edges": model.binning.edges.tolist(),
        "alphas": model.alphas.tolist(),
        "counts": model.counts.tolist(),
        "converged": model.converged.astype(int).tolist(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_model(path) -> ObservationModel:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelCorruptError(f"{path}: not a valid model file: {exc}") from exc
    if not isinstance(payload, dict) or "version" not in payload:
        raise ModelCorruptError(f"{path}: missing version field")
    if int(payload["version"]) != MODEL_FILE_VERSION:
        raise ModelVersionError(
            f"{path}: file version {payload['version']}, reader supports {MODEL_FILE_VERSION}"
        )
    try:
        binning = DistanceBinning(np.asarray(payload["bin_edges"], dtype=float))
        model = ObservationModel(
            np.asarray(payload["alphas"], dtype=float),
            binning,
            int(payload["num_classes"]),
            np.asarray(payload["counts"], dtype=int),
            np.asarray(payload["converged"], dtype=bool),
        )
    except (KeyError, TypeError, ValueError, ContractError) as exc:
        raise ModelCorruptError(f"{path}: structurally invalid: {exc}") from exc
    return model
