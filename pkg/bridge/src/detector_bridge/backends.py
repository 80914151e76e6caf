"""Detector backends behind the bridge.

The default is a classical palette-distance blob detector matched to the
engine's synthetic scene renderer, so the whole stack runs hermetically.
A torchvision backend is available where pretrained weights exist.
Backends return (boxes, scores) with one score per object class; the app
synthesizes the background score.
"""

from __future__ import annotations

import colorsys

import numpy as np
from scipy import ndimage


class BackendError(RuntimeError):
    """The wrapped detector failed or cannot be loaded."""


def class_palette(num_classes: int) -> np.ndarray:
    """Evenly spaced hues; must match the scene renderer's palette."""
    cols = []
    for k in range(num_classes):
        r, g, b = colorsys.hsv_to_rgb(k / num_classes, 0.78, 0.88)
        cols.append([int(255 * r), int(255 * g), int(255 * b)])
    return np.array(cols, dtype=float)


class BlobColorBackend:
    """Connected components of palette-colored regions.

    Class confidences come from the component's mean color: a softmax
    over negative squared distances to the palette scaled by an
    objectness term that fades as blur washes colors toward the
    background, so peripheral detections naturally carry flatter scores.
    """

    name = "blob"

    def __init__(self, num_classes: int, color_threshold: float = 90.0,
                 min_area: int = 64, softmax_temp: float = 45.0, objectness_scale: float = 110.0):
        self.num_classes = num_classes
        self.palette = class_palette(num_classes)
        self.color_threshold = color_threshold
        self.min_area = min_area
        self.softmax_temp = softmax_temp
        self.objectness_scale = objectness_scale

    def detect(self, image: np.ndarray):
        img = np.asarray(image, dtype=float)
        if img.ndim == 2:
            img = np.stack([img] * 3, axis=-1)
        dists = np.linalg.norm(img[:, :, None, :] - self.palette[None, None, :, :], axis=-1)
        nearest = dists.min(axis=-1)
        mask = nearest < self.color_threshold
        labels, count = ndimage.label(mask)
        boxes = []
        scores = []
        for region in ndimage.find_objects(labels):
            if region is None:
                continue
            ys, xs = region
            patch = labels[region] > 0
            area = int(patch.sum())
            if area < self.min_area:
                continue
            mean_color = img[region][patch].mean(axis=0)
            d = np.linalg.norm(mean_color - self.palette, axis=-1)
            logits = -(d / self.softmax_temp) ** 2
            w = np.exp(logits - logits.max())
            conf = float(np.exp(-((d.min() / self.objectness_scale) ** 2)))
            scores.append((w / w.sum()) * conf)
            boxes.append([float(xs.start), float(ys.start), float(xs.stop), float(ys.stop)])
        return boxes, scores


class TorchvisionBackend:
    """Pretrained torchvision detection model (needs cached weights)."""

    def __init__(self, model_name: str, num_classes: int, score_floor: float = 0.0):
        self.name = f"torchvision:{model_name}"
        self.num_classes = num_classes
        self.score_floor = score_floor
        try:
            import torch
            import torchvision
        except ImportError as exc:
            raise BackendError(f"torch/torchvision not installed: {exc}") from exc
        try:
            factory = getattr(torchvision.models.detection, model_name)
            self._model = factory(weights="DEFAULT")
        except Exception as exc:  # weights unavailable offline
            raise BackendError(f"could not load {model_name}: {exc}") from exc
        self._model.eval()
        self._torch = torch

    def detect(self, image: np.ndarray):
        torch = self._torch
        img = np.asarray(image)
        if img.ndim == 2:
            img = np.stack([img] * 3, axis=-1)
        tensor = torch.from_numpy(img.astype(np.float32) / 255.0).permute(2, 0, 1)
        with torch.no_grad():
            out = self._model([tensor])[0]
        boxes = []
        scores = []
        for box, label, score in zip(out["boxes"], out["labels"], out["scores"]):
            s = float(score)
            if s < self.score_floor:
                continue
            k = int(label)
            if not (1 <= k <= self.num_classes):
                continue
            vec = np.zeros(self.num_classes)
            vec[k - 1] = s
            scores.append(vec)
            boxes.append([float(v) for v in box])
        return boxes, scores


def build_backend(model_id: str, num_classes: int):
    if model_id == "blob":
        return BlobColorBackend(num_classes)
    if model_id.startswith("torchvision:"):
        return TorchvisionBackend(model_id.split(":", 1)[1], num_classes)
    raise BackendError(f"unknown backend {model_id!r}")
