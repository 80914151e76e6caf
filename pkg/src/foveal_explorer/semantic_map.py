"""Cell-grid belief map over the scene and its sequential fusion rules.

Each cell tracks a class belief over K+1 channels (channel 0 is
background). Three of the rules maintain a Dirichlet concentration vector
per cell; the product rule maintains an unnormalized log posterior
instead, because a repeated product of sharp score vectors underflows in
probability space long before the run ends.
"""

from __future__ import annotations

import math
from enum import Enum

import numpy as np

from .dirichlet import clamp_simplex, dirichlet_entropy, dirichlet_kl
from .errors import ContractError
from .geometry import GazeState, fovea_distance
from .observation import ObservationModel, calibrate


class FusionRule(str, Enum):
    PRODUCT = "product"
    SUM = "sum"
    KAPLAN_RAW = "kaplan_raw"
    KAPLAN_MODIFIED = "kaplan_modified"

    @property
    def uses_raw_scores(self) -> bool:
        return self is FusionRule.KAPLAN_RAW

    @property
    def is_dirichlet(self) -> bool:
        return self is not FusionRule.PRODUCT


def cell_posterior(beta) -> np.ndarray:
    """Expected class probabilities of a cell: beta / sum(beta)."""
    b = np.asarray(beta, dtype=float)
    return b / b.sum(axis=-1, keepdims=True)


def fuse_product(posterior, scores) -> np.ndarray:
    """Multiply the posterior by the (clamped) score vector and renormalize.

    Only the incoming scores are clamped; the running posterior passes
    through untouched so that stepwise fusion stays exactly associative.
    """
    m = np.asarray(posterior, dtype=float)
    s = clamp_simplex(scores)
    out = m * s
    return out / out.sum(axis=-1, keepdims=True)


def fuse_sum(beta, scores) -> np.ndarray:
    """Add the (clamped) score vector onto the concentration vector."""
    return np.asarray(beta, dtype=float) + clamp_simplex(scores)


def fuse_kaplan(beta, scores) -> np.ndarray:
    """Multiplicative concentration update from a score vector.

    beta_k' = beta_k * (1 + s_k / sum_j beta_j s_j)
                     / (1 + min_j s_j / sum_j beta_j s_j)

    Fed raw detector scores this is the plain update; fed calibrated
    scores it is the modified variant. Scores are eps-clamped so every
    factor stays strictly positive.
    """
    b = np.asarray(beta, dtype=float)
    s = clamp_simplex(scores)
    w = (b * s).sum(axis=-1, keepdims=True)
    s_min = s.min(axis=-1, keepdims=True)
    return b * (1.0 + s / w) / (1.0 + s_min / w)


class SemanticMap:
    """Grid of per-cell beliefs covering a width x height pixel extent.

    The fusion rule is bound at construction: Dirichlet rules store a
    concentration grid initialized to all ones, the product rule stores a
    log-posterior grid initialized to uniform. ``obs_count`` tracks how
    many score vectors each cell has absorbed.
    """

    def __init__(
        self,
        width: int,
        height: int,
        num_channels: int,
        cell_size: int = 16,
        rule: FusionRule = FusionRule.KAPLAN_MODIFIED,
    ):
        if width < 1 or height < 1 or cell_size < 1:
            raise ContractError("map extent and cell size must be positive")
        if num_channels < 2:
            raise ContractError("need at least 2 channels (background + 1 class)")
        self.width = int(width)
        self.height = int(height)
        self.cell_size = int(cell_size)
        self.num_channels = int(num_channels)
        self.rule = FusionRule(rule)
        self.rows = math.ceil(height / cell_size)
        self.cols = math.ceil(width / cell_size)
        if self.rule.is_dirichlet:
            self.beta = np.ones((self.rows, self.cols, num_channels))
            self.log_m = None
        else:
            self.beta = None
            self.log_m = np.zeros((self.rows, self.cols, num_channels))
        self.obs_count = np.zeros((self.rows, self.cols), dtype=int)

    @property
    def grid_shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    def copy(self) -> "SemanticMap":
        dup = SemanticMap.__new__(SemanticMap)
        dup.__dict__.update(self.__dict__)
        dup.beta = None if self.beta is None else self.beta.copy()
        dup.log_m = None if self.log_m is None else self.log_m.copy()
        dup.obs_count = self.obs_count.copy()
        return dup

    def cell_centers(self) -> np.ndarray:
        """(rows, cols, 2) array of cell-center world coordinates (x, y).

        Truncated boundary cells use the center of their actual pixel span.
        """
        xs = np.minimum((np.arange(self.cols) + 0.5) * self.cell_size,
                        0.5 * (np.arange(self.cols) * self.cell_size + self.width))
        ys = np.minimum((np.arange(self.rows) + 0.5) * self.cell_size,
                        0.5 * (np.arange(self.rows) * self.cell_size + self.height))
        out = np.empty((self.rows, self.cols, 2))
        out[:, :, 0] = xs[None, :]
        out[:, :, 1] = ys[:, None]
        return out

    def cells_intersecting(self, box) -> tuple[int, int, int, int]:
        """Half-open cell index ranges (i0, i1, j0, j1) whose pixel spans
        overlap the box with positive area."""
        j0 = max(0, int(math.floor(box.x_min / self.cell_size)))
        i0 = max(0, int(math.floor(box.y_min / self.cell_size)))
        j1 = min(self.cols, int(math.ceil(box.x_max / self.cell_size)))
        i1 = min(self.rows, int(math.ceil(box.y_max / self.cell_size)))
        return i0, i1, j0, j1

    def posteriors(self) -> np.ndarray:
        """(rows, cols, channels) expected class probabilities."""
        if self.rule.is_dirichlet:
            return cell_posterior(self.beta)
        shifted = self.log_m - self.log_m.max(axis=-1, keepdims=True)
        w = np.exp(shifted)
        return w / w.sum(axis=-1, keepdims=True)

    def cell_beta(self, row: int, col: int) -> np.ndarray:
        if not self.rule.is_dirichlet:
            raise ContractError("product-rule maps do not carry concentration vectors")
        return self.beta[row, col]

    def kl_from_prior(self) -> float:
        """Total divergence of all cells from their initial belief."""
        if self.rule.is_dirichlet:
            ones = np.ones(self.num_channels)
            return float(dirichlet_kl(self.beta, ones).sum())
        p = self.posteriors()
        # Categorical divergence from uniform for the product rule.
        return float((p * np.log(np.maximum(p, 1e-300) * self.num_channels)).sum())

    def mean_entropy(self) -> float:
        if self.rule.is_dirichlet:
            return float(dirichlet_entropy(self.beta).mean())
        p = self.posteriors()
        return float(-(p * np.log(np.maximum(p, 1e-300))).sum(axis=-1).mean())

    def to_snapshot_dict(self) -> dict:
        cells = self.beta if self.rule.is_dirichlet else self.posteriors()
        return {
            "cell_size": self.cell_size,
            "width_cells": self.cols,
            "height_cells": self.rows,
            "kind": "dirichlet" if self.rule.is_dirichlet else "posterior",
            "betas": cells.tolist(),
        }


def update_map(
    semantic_map: SemanticMap,
    detections,
    gaze: GazeState,
    rule: FusionRule,
    model: ObservationModel,
    event_log: list | None = None,
) -> SemanticMap:
    """Fuse each detection into every cell its box overlaps, in input order.

    Scores are calibrated once per detection at its box-center distance
    (the raw-score rule skips calibration). When ``event_log`` is given,
    one (flat_cell_index, count_after, argmax_after) triple is appended
    per cell update, which the evaluation harness consumes.
    """
    rule = FusionRule(rule)
    if rule is not semantic_map.rule:
        raise ContractError(f"map was built for rule {semantic_map.rule.value}, got {rule.value}")
    for det in detections:
        d = fovea_distance(det.box.center, gaze)
        scores = det.scores if rule.uses_raw_scores else calibrate(det.scores, d, model)
        i0, i1, j0, j1 = semantic_map.cells_intersecting(det.box)
        if i0 >= i1 or j0 >= j1:
            continue
        if rule is FusionRule.PRODUCT:
            block = semantic_map.log_m[i0:i1, j0:j1]
            block += np.log(clamp_simplex(scores))
            arg = np.argmax(block, axis=-1)
        else:
            block = semantic_map.beta[i0:i1, j0:j1]
            if rule is FusionRule.SUM:
                block += clamp_simplex(scores)
            else:
                semantic_map.beta[i0:i1, j0:j1] = fuse_kaplan(block, scores)
                block = semantic_map.beta[i0:i1, j0:j1]
            arg = np.argmax(block, axis=-1)
        semantic_map.obs_count[i0:i1, j0:j1] += 1
        if event_log is not None:
            counts = semantic_map.obs_count[i0:i1, j0:j1]
            for local_i in range(i1 - i0):
                for local_j in range(j1 - j0):
                    flat = (i0 + local_i) * semantic_map.cols + (j0 + local_j)
                    event_log.append((flat, int(counts[local_i, local_j]), int(arg[local_i, local_j])))
    return semantic_map
