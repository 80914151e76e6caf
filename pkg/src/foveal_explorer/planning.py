"""Next-fixation selection by minimizing expected map uncertainty.

For a candidate fixation, every cell's next observation is predicted as
the mixture of the model's per-class mean scores weighted by the cell's
class posterior. Fusing that predicted score once per cell yields the
expected next-step map, whose summed uncertainty scores the candidate;
the candidate with the lowest total wins.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .dirichlet import dirichlet_entropy, dirichlet_kl
from .errors import ContractError
from .geometry import bin_of
from .observation import ObservationModel
from .semantic_map import FusionRule, SemanticMap, fuse_kaplan, fuse_sum

# Relative slack for treating candidate totals as tied; ties resolve to the
# lowest (y, x) so runs are reproducible across evaluation orders.
TIE_RTOL = 1e-9


class AcquisitionFunction(str, Enum):
    KL_GAIN = "kl_gain"
    DIRICHLET_ENTROPY = "dirichlet_entropy"
    TWO_PEAKS = "two_peaks"
    RANDOM = "random"

    @property
    def needs_dirichlet(self) -> bool:
        return self in (AcquisitionFunction.KL_GAIN, AcquisitionFunction.DIRICHLET_ENTROPY)


@dataclass(frozen=True)
class CandidateGrid:
    """Candidate fixation points: cell centers sampled at a fixed stride."""

    points: np.ndarray  # (N, 2) world coordinates, row-major in (y, x)
    stride: float

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] == 0:
            raise ContractError("candidate grid must be a non-empty (N, 2) array")
        pts = pts.copy()
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    @classmethod
    def from_map(cls, semantic_map: SemanticMap, stride_cells: int = 4) -> "CandidateGrid":
        if stride_cells < 1:
            raise ContractError("stride must be at least one cell")
        centers = semantic_map.cell_centers()
        pts = centers[::stride_cells, ::stride_cells].reshape(-1, 2)
        return cls(pts, stride=float(stride_cells * semantic_map.cell_size))


def predicted_scores(beta, distance: float, model: ObservationModel) -> np.ndarray:
    """Expected next score vector for one cell observed at ``distance``:
    the posterior-weighted mixture of the model's class mean scores."""
    b = np.asarray(beta, dtype=float)
    if b.shape != (model.num_channels,):
        raise ContractError(f"expected a {model.num_channels}-channel cell, got shape {b.shape}")
    table = model.mean_table(bin_of(float(distance), model.binning))
    return (b / b.sum()) @ table


def _predicted_grid(posteriors: np.ndarray, dists: np.ndarray, model: ObservationModel) -> np.ndarray:
    """Per-cell predicted scores for flattened cells at given distances."""
    bins = bin_of(dists, model.binning)
    out = np.empty_like(posteriors)
    for b in np.unique(bins):
        mask = bins == b
        out[mask] = posteriors[mask] @ model.mean_table(int(b))
    return out


def _expected_cells(semantic_map: SemanticMap, candidate, model: ObservationModel):
    """Expected per-cell state after one observation from ``candidate``.

    Returns the fused concentration grid for Dirichlet rules or the fused
    log-posterior grid for the product rule, flattened to (N, channels).
    """
    centers = semantic_map.cell_centers().reshape(-1, 2)
    dists = np.hypot(centers[:, 0] - candidate[0], centers[:, 1] - candidate[1])
    post = semantic_map.posteriors().reshape(-1, semantic_map.num_channels)
    s_bar = _predicted_grid(post, dists, model)
    rule = semantic_map.rule
    if rule is FusionRule.PRODUCT:
        return semantic_map.log_m.reshape(-1, semantic_map.num_channels) + np.log(s_bar)
    beta = semantic_map.beta.reshape(-1, semantic_map.num_channels)
    if rule is FusionRule.SUM:
        return fuse_sum(beta, s_bar)
    return fuse_kaplan(beta, s_bar)


def expected_map(
    semantic_map: SemanticMap,
    candidate,
    rule: FusionRule,
    model: ObservationModel,
) -> SemanticMap:
    """Predicted map after a hypothetical fixation; the input is untouched."""
    rule = FusionRule(rule)
    if rule is not semantic_map.rule:
        raise ContractError(f"map was built for rule {semantic_map.rule.value}, got {rule.value}")
    out = semantic_map.copy()
    cells = _expected_cells(semantic_map, candidate, model)
    shape = (semantic_map.rows, semantic_map.cols, semantic_map.num_channels)
    if rule is FusionRule.PRODUCT:
        out.log_m = cells.reshape(shape)
    else:
        out.beta = cells.reshape(shape)
    out.obs_count = semantic_map.obs_count + 1
    return out


def uncertainty(beta, acquisition: AcquisitionFunction):
    """Per-cell uncertainty; lower is better (less remaining uncertainty).

    kl_gain:           negated divergence from the all-ones prior
    dirichlet_entropy: differential entropy of the cell's Dirichlet
    two_peaks:         negated gap between the two largest posteriors
    """
    acquisition = AcquisitionFunction(acquisition)
    b = np.asarray(beta, dtype=float)
    if acquisition is AcquisitionFunction.KL_GAIN:
        return -dirichlet_kl(b, np.ones(b.shape[-1]))
    if acquisition is AcquisitionFunction.DIRICHLET_ENTROPY:
        return dirichlet_entropy(b)
    if acquisition is AcquisitionFunction.TWO_PEAKS:
        p = b / b.sum(axis=-1, keepdims=True)
        top2 = -np.partition(-p, 1, axis=-1)[..., :2]
        return -np.abs(top2[..., 0] - top2[..., 1])
    raise ContractError("the random policy has no per-cell uncertainty")


def _total_uncertainty(cells: np.ndarray, rule: FusionRule, acquisition: AcquisitionFunction) -> float:
    if rule is FusionRule.PRODUCT:
        if acquisition.needs_dirichlet:
            raise ContractError(f"{acquisition.value} needs a Dirichlet map; the product rule tracks a bare posterior")
        shifted = cells - cells.max(axis=-1, keepdims=True)
        w = np.exp(shifted)
        p = w / w.sum(axis=-1, keepdims=True)
        top2 = -np.partition(-p, 1, axis=-1)[..., :2]
        return float(-np.abs(top2[..., 0] - top2[..., 1]).sum())
    return float(np.asarray(uncertainty(cells, acquisition)).sum())


def _per_cell_uncertainty(cells: np.ndarray, rule: FusionRule, acquisition: AcquisitionFunction) -> np.ndarray:
    if rule is FusionRule.PRODUCT:
        if acquisition.needs_dirichlet:
            raise ContractError(f"{acquisition.value} needs a Dirichlet map; the product rule tracks a bare posterior")
        shifted = cells - cells.max(axis=-1, keepdims=True)
        w = np.exp(shifted)
        p = w / w.sum(axis=-1, keepdims=True)
        top2 = -np.partition(-p, 1, axis=-1)[..., :2]
        return -np.abs(top2[..., 0] - top2[..., 1])
    return np.asarray(uncertainty(cells, acquisition))


def candidate_scores(
    semantic_map: SemanticMap,
    candidates: CandidateGrid,
    acquisition: AcquisitionFunction,
    rule: FusionRule,
    model: ObservationModel,
) -> np.ndarray:
    """Total expected uncertainty for every candidate fixation.

    A cell's expected next state depends on the candidate only through
    the distance bin, so per-(bin, cell) uncertainties are computed once
    and each candidate just gathers its own bin pattern and sums.
    """
    rule = FusionRule(rule)
    acquisition = AcquisitionFunction(acquisition)
    if rule is not semantic_map.rule:
        raise ContractError(f"map was built for rule {semantic_map.rule.value}, got {rule.value}")
    centers = semantic_map.cell_centers().reshape(-1, 2)
    num_cells = centers.shape[0]
    post = semantic_map.posteriors().reshape(num_cells, semantic_map.num_channels)
    pts = candidates.points
    dists = np.hypot(
        centers[None, :, 0] - pts[:, 0, None],
        centers[None, :, 1] - pts[:, 1, None],
    )  # (candidates, cells)
    bins = bin_of(dists, model.binning)
    u_table = np.empty((model.binning.num_bins, num_cells))
    if rule.is_dirichlet:
        state = semantic_map.beta.reshape(num_cells, semantic_map.num_channels)
    else:
        state = semantic_map.log_m.reshape(num_cells, semantic_map.num_channels)
    for b in np.unique(bins):
        s_bar = post @ model.mean_table(int(b))
        if rule is FusionRule.PRODUCT:
            fused = state + np.log(s_bar)
        elif rule is FusionRule.SUM:
            fused = fuse_sum(state, s_bar)
        else:
            fused = fuse_kaplan(state, s_bar)
        u_table[b] = _per_cell_uncertainty(fused, rule, acquisition)
    return u_table[bins, np.arange(num_cells)[None, :]].sum(axis=1)


def select_gaze(
    semantic_map: SemanticMap,
    candidates: CandidateGrid,
    acquisition: AcquisitionFunction,
    rule: FusionRule,
    model: ObservationModel,
    rng: np.random.Generator,
) -> tuple[float, float]:
    """Pick the next fixation from the candidate grid.

    The random policy draws uniformly; the others minimize the summed
    expected uncertainty, breaking near-ties (relative 1e-9) toward the
    lowest (y, x).
    """
    acquisition = AcquisitionFunction(acquisition)
    if acquisition is AcquisitionFunction.RANDOM:
        pt = candidates.points[int(rng.integers(len(candidates)))]
        return (float(pt[0]), float(pt[1]))
    totals = candidate_scores(semantic_map, candidates, acquisition, rule, model)
    best = totals.min()
    tied = np.flatnonzero(totals <= best + TIE_RTOL * max(1.0, abs(best)))
    pts = candidates.points[tied]
    order = np.lexsort((pts[:, 0], pts[:, 1]))  # lowest y, then lowest x
    pick = pts[order[0]]
    return (float(pick[0]), float(pick[1]))
