"""The closed exploration loop, evaluation metrics, and experiment runner.

One iteration foveates at the current fixation, fetches detections,
fuses them into the map, records metrics, and picks the next fixation.
Runs are reproducible: every random choice flows from the config seed
through three split streams (initial fixation, detector noise, random
policy draws).
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .detection import Detection, SceneGroundTruth, SimulatedDetectorConfig, detect_simulated, detect_via_bridge
from .errors import ContractError, DetectorSourceError
from .foveation import FoveationConfig, foveate
from .geometry import GazeState
from .observation import ObservationModel
from .planning import AcquisitionFunction, CandidateGrid, select_gaze
from .semantic_map import FusionRule, SemanticMap, update_map

log = logging.getLogger(__name__)

CSV_HEADER = [
    "config",
    "image_id",
    "seed",
    "iteration",
    "fixation_x",
    "fixation_y",
    "num_detections",
    "precision",
    "recall",
    "f1",
    "accuracy",
    "map_kl_from_prior",
    "map_mean_entropy",
]


@dataclass(frozen=True)
class FileReplaySpec:
    """Replay detections recorded per (image_id, fixation); a missing key
    fails the source, truncating the trace."""

    table: dict

    @property
    def needs_image(self) -> bool:
        return False


@dataclass(frozen=True)
class BridgeSpec:
    endpoint: str
    timeout: float = 30.0
    foveate_remote: bool = False

    @property
    def needs_image(self) -> bool:
        return True


class _SimulatedSource:
    needs_image = False

    def __init__(self, spec: SimulatedDetectorConfig, ground_truth: SceneGroundTruth, rng: np.random.Generator):
        self.spec = spec
        self.ground_truth = ground_truth
        self.rng = rng

    def detect(self, image, gaze: GazeState) -> list[Detection]:
        return detect_simulated(self.ground_truth, gaze, self.spec, rng=self.rng)


class _ReplaySource:
    needs_image = False

    def __init__(self, spec: FileReplaySpec, image_id: str):
        self.table = spec.table
        self.image_id = image_id

    def detect(self, image, gaze: GazeState) -> list[Detection]:
        key = (self.image_id, (float(gaze.fixation[0]), float(gaze.fixation[1])))
        if key not in self.table:
            raise DetectorSourceError(f"no recorded detections for {key}")
        return self.table[key]


class _BridgeSource:
    needs_image = True

    def __init__(self, spec: BridgeSpec, num_classes: int):
        self.spec = spec
        self.num_classes = num_classes

    def detect(self, image, gaze: GazeState) -> list[Detection]:
        return detect_via_bridge(
            image,
            gaze.fixation,
            self.spec.endpoint,
            foveate_remote=self.spec.foveate_remote,
            timeout=self.spec.timeout,
            num_classes=self.num_classes,
        )


def _build_source(detector, ground_truth: SceneGroundTruth, model: ObservationModel, rng: np.random.Generator):
    if isinstance(detector, SimulatedDetectorConfig):
        return _SimulatedSource(detector, ground_truth, rng)
    if isinstance(detector, FileReplaySpec):
        return _ReplaySource(detector, ground_truth.image_id)
    if isinstance(detector, BridgeSpec):
        return _BridgeSource(detector, model.num_classes)
    raise ContractError(f"unknown detector spec {type(detector).__name__}")


@dataclass(frozen=True)
class ExplorationConfig:
    detector: object
    rule: FusionRule = FusionRule.KAPLAN_MODIFIED
    acquisition: AcquisitionFunction = AcquisitionFunction.KL_GAIN
    num_iterations: int = 10
    seed: int = 0
    cell_size: int = 16
    stride_cells: int = 4
    foveation: FoveationConfig = field(default_factory=FoveationConfig)
    name: str = ""

    def __post_init__(self):
        if self.num_iterations < 1:
            raise ContractError("need at least one iteration")
        object.__setattr__(self, "rule", FusionRule(self.rule))
        object.__setattr__(self, "acquisition", AcquisitionFunction(self.acquisition))
        if not self.name:
            object.__setattr__(self, "name", f"{self.acquisition.value}+{self.rule.value}")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    fixation: tuple[float, float]
    num_detections: int
    precision: float
    recall: float
    f1: float
    accuracy: float
    map_kl_from_prior: float
    map_mean_entropy: float


@dataclass
class ExplorationTrace:
    image_id: str
    config_name: str
    seed: int
    records: list[IterationRecord]
    cell_events: list[tuple[int, int, int, int]]  # (iteration, flat_cell, count_after, argmax)
    cell_truth: np.ndarray
    final_map: SemanticMap | None = None
    error: str | None = None


def cell_truth_grid(semantic_map: SemanticMap, ground_truth: SceneGroundTruth) -> np.ndarray:
    """Ground-truth class per cell: the smallest-area object containing the
    cell center (ties to the lowest index), background otherwise."""
    centers = semantic_map.cell_centers()
    truth = np.zeros(semantic_map.grid_shape, dtype=int)
    best_area = np.full(semantic_map.grid_shape, np.inf)
    for obj in ground_truth.objects:
        b = obj.box
        inside = (
            (centers[..., 0] >= b.x_min)
            & (centers[..., 0] < b.x_max)
            & (centers[..., 1] >= b.y_min)
            & (centers[..., 1] < b.y_max)
        )
        take = inside & (b.area < best_area)
        truth[take] = obj.class_id
        best_area[take] = b.area
    return truth


def _object_predictions(semantic_map: SemanticMap, ground_truth: SceneGroundTruth) -> list[int]:
    """Predicted class per ground-truth object: argmax of the mean posterior
    over cells whose centers fall inside its box (falling back to the cell
    containing the box center when the box is narrower than a cell)."""
    post = semantic_map.posteriors()
    centers = semantic_map.cell_centers()
    preds = []
    for obj in ground_truth.objects:
        b = obj.box
        inside = (
            (centers[..., 0] >= b.x_min)
            & (centers[..., 0] < b.x_max)
            & (centers[..., 1] >= b.y_min)
            & (centers[..., 1] < b.y_max)
        )
        if inside.any():
            mean_post = post[inside].mean(axis=0)
        else:
            cx, cy = b.center
            j = min(int(cx // semantic_map.cell_size), semantic_map.cols - 1)
            i = min(int(cy // semantic_map.cell_size), semantic_map.rows - 1)
            mean_post = post[i, j]
        preds.append(int(np.argmax(mean_post)))  # ties resolve to the lowest class
    return preds


def evaluate_f1(semantic_map: SemanticMap, ground_truth: SceneGroundTruth) -> tuple[float, float, float]:
    """Object-level precision/recall/F1 read off the map.

    Per object: correct class is a true positive, a wrong non-background
    class a false positive, background a false negative.
    """
    preds = _object_predictions(semantic_map, ground_truth)
    tp = sum(1 for p, o in zip(preds, ground_truth.objects) if p == o.class_id)
    fp = sum(1 for p, o in zip(preds, ground_truth.objects) if p != 0 and p != o.class_id)
    fn = sum(1 for p in preds if p == 0)
    precision = tp / (tp + fp) if (tp + fp) > 0 else 1.0
    recall = tp / (tp + fn) if (tp + fn) > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if (precision + recall) > 0 else 0.0
    return precision, recall, f1


def evaluate_accuracy(semantic_map: SemanticMap, ground_truth: SceneGroundTruth) -> float:
    """Fraction of ground-truth objects whose map prediction is correct."""
    if not ground_truth.objects:
        return 0.0
    preds = _object_predictions(semantic_map, ground_truth)
    return sum(1 for p, o in zip(preds, ground_truth.objects) if p == o.class_id) / len(preds)


def explore(
    image: np.ndarray | None,
    ground_truth: SceneGroundTruth,
    config: ExplorationConfig,
    model: ObservationModel,
    initial_fixation: tuple[float, float] | None = None,
    keep_final_map: bool = True,
) -> ExplorationTrace:
    """Run the foveate/detect/fuse/plan loop for the configured iterations.

    The image may be None for sources that work from ground truth alone;
    image-consuming sources get the foveated frame each iteration. A
    detector failure truncates the trace and stores the error.
    """
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(config.seed).spawn(3)]
    init_rng, det_rng, acq_rng = streams

    width, height = ground_truth.width, ground_truth.height
    semantic_map = SemanticMap(width, height, model.num_channels, config.cell_size, config.rule)
    candidates = CandidateGrid.from_map(semantic_map, config.stride_cells)
    source = _build_source(config.detector, ground_truth, model, det_rng)
    if source.needs_image and image is None:
        raise ContractError("this detector source needs the scene image")

    if initial_fixation is None:
        fixation = (float(init_rng.uniform(0, width)), float(init_rng.uniform(0, height)))
    else:
        fixation = (float(initial_fixation[0]), float(initial_fixation[1]))

    trace = ExplorationTrace(
        image_id=ground_truth.image_id,
        config_name=config.name,
        seed=config.seed,
        records=[],
        cell_events=[],
        cell_truth=cell_truth_grid(semantic_map, ground_truth),
    )
    for step in range(config.num_iterations):
        gaze = GazeState(fixation, step)
        try:
            frame = foveate(image, fixation, config.foveation) if source.needs_image else None
            detections = source.detect(frame, gaze)
        except DetectorSourceError as exc:
            trace.error = str(exc)
            log.warning("run %s/%s truncated at iteration %d: %s", ground_truth.image_id, config.name, step, exc)
            break
        events: list = []
        update_map(semantic_map, detections, gaze, config.rule, model, event_log=events)
        trace.cell_events.extend((step, *e) for e in events)
        precision, recall, f1 = evaluate_f1(semantic_map, ground_truth)
        trace.records.append(
            IterationRecord(
                iteration=step,
                fixation=fixation,
                num_detections=len(detections),
                precision=precision,
                recall=recall,
                f1=f1,
                accuracy=evaluate_accuracy(semantic_map, ground_truth),
                map_kl_from_prior=semantic_map.kl_from_prior(),
                map_mean_entropy=semantic_map.mean_entropy(),
            )
        )
        if step + 1 < config.num_iterations:
            fixation = select_gaze(semantic_map, candidates, config.acquisition, config.rule, model, acq_rng)
    if keep_final_map:
        trace.final_map = semantic_map
    return trace


def evaluate_accuracy_vs_count(traces) -> list[tuple[int, float]]:
    """Mean cell-classification accuracy after exactly n fusions, n = 1...

    For each trace, cells with at least n recorded score fusions contribute
    the indicator that their argmax right after the n-th fusion matched the
    cell's ground-truth class; per-trace means are averaged.
    """
    per_trace: list[dict[int, tuple[int, int]]] = []
    max_n = 0
    for trace in traces:
        truth = trace.cell_truth.reshape(-1)
        hits: dict[int, list[int]] = {}
        for _, flat, count_after, argmax_after in trace.cell_events:
            hits.setdefault(count_after, []).append(int(argmax_after == truth[flat]))
            max_n = max(max_n, count_after)
        per_trace.append({n: (sum(v), len(v)) for n, v in hits.items()})
    curve = []
    for n in range(1, max_n + 1):
        trace_means = [good / total for stats in per_trace for good, total in [stats.get(n, (0, 0))] if total > 0]
        if trace_means:
            curve.append((n, float(np.mean(trace_means))))
    return curve


@dataclass(frozen=True)
class RunSpec:
    config: ExplorationConfig
    image: np.ndarray | None
    ground_truth: SceneGroundTruth
    initial_fixation: tuple[float, float]
    image_index: int
    repetition: int


@dataclass
class ExperimentReport:
    rows: list[dict]
    summary: list[dict]
    failures: list[dict]


def experiment_runs(dataset, configs, repetitions: int, base_seed: int = 0) -> list[RunSpec]:
    """Deterministic run list: per (image, repetition) every config gets the
    same initial fixation and the same run seed, so policies are compared
    pairwise and identical configs reproduce identical runs."""
    runs = []
    for img_idx, item in enumerate(dataset):
        image, gt = item if isinstance(item, tuple) else (None, item)
        for rep in range(repetitions):
            shared_rng = np.random.default_rng(np.random.SeedSequence([base_seed, img_idx, rep, 0]))
            init = (float(shared_rng.uniform(0, gt.width)), float(shared_rng.uniform(0, gt.height)))
            run_seed = int(np.random.SeedSequence([base_seed, img_idx, rep, 1]).generate_state(1)[0])
            for cfg in configs:
                runs.append(
                    RunSpec(replace(cfg, seed=run_seed), image, gt, init, img_idx, rep)
                )
    return runs


def execute_run(run: RunSpec, model: ObservationModel) -> list[dict]:
    """One exploration run -> CSV-ready row dicts."""
    trace = explore(
        run.image,
        run.ground_truth,
        run.config,
        model,
        initial_fixation=run.initial_fixation,
        keep_final_map=False,
    )
    if trace.error is not None:
        raise DetectorSourceError(trace.error)
    rows = []
    for rec in trace.records:
        rows.append(
            {
                "config": run.config.name,
                "image_id": trace.image_id,
                "seed": trace.seed,
                "iteration": rec.iteration,
                "fixation_x": rec.fixation[0],
                "fixation_y": rec.fixation[1],
                "num_detections": rec.num_detections,
                "precision": rec.precision,
                "recall": rec.recall,
                "f1": rec.f1,
                "accuracy": rec.accuracy,
                "map_kl_from_prior": rec.map_kl_from_prior,
                "map_mean_entropy": rec.map_mean_entropy,
            }
        )
    return rows


def summarize_rows(rows, configs) -> list[dict]:
    """Per-config per-iteration means plus deltas against the random policy."""
    by_config: dict[str, dict[int, list[tuple[float, float]]]] = {}
    for row in rows:
        by_config.setdefault(row["config"], {}).setdefault(int(row["iteration"]), []).append(
            (float(row["f1"]), float(row["accuracy"]))
        )
    random_names = [c.name for c in configs if c.acquisition is AcquisitionFunction.RANDOM]
    baseline = random_names[0] if random_names else None
    summary = []
    for cfg in configs:
        iters = by_config.get(cfg.name, {})
        for it in sorted(iters):
            vals = np.asarray(iters[it])
            entry = {
                "config": cfg.name,
                "iteration": it,
                "runs": len(vals),
                "mean_f1": float(vals[:, 0].mean()),
                "mean_accuracy": float(vals[:, 1].mean()),
                "delta_f1_vs_random": "",
                "delta_accuracy_vs_random": "",
            }
            if baseline is not None and baseline != cfg.name and baseline in by_config and it in by_config[baseline]:
                base = np.asarray(by_config[baseline][it])
                entry["delta_f1_vs_random"] = float(vals[:, 0].mean() - base[:, 0].mean())
                entry["delta_accuracy_vs_random"] = float(vals[:, 1].mean() - base[:, 1].mean())
            summary.append(entry)
    return summary


def run_experiment(dataset, configs, repetitions: int, model: ObservationModel, base_seed: int = 0) -> ExperimentReport:
    """Run the full policy matrix; failed runs are recorded and excluded."""
    if not configs:
        raise ContractError("need at least one exploration config")
    rows: list[dict] = []
    failures: list[dict] = []
    for run in experiment_runs(dataset, configs, repetitions, base_seed):
        try:
            rows.extend(execute_run(run, model))
        except Exception as exc:  # noqa: BLE001 - failed runs must not sink the report
            failures.append(
                {
                    "config": run.config.name,
                    "image_id": run.ground_truth.image_id,
                    "seed": run.config.seed,
                    "error": str(exc),
                }
            )
    return ExperimentReport(rows, summarize_rows(rows, configs), failures)


def write_rows_csv(rows, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_HEADER)
        writer.writeheader()
        writer.writerows(rows)


def write_summary_csv(summary, path) -> None:
    fields = [
        "config",
        "iteration",
        "runs",
        "mean_f1",
        "mean_accuracy",
        "delta_f1_vs_random",
        "delta_accuracy_vs_random",
    ]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(summary)
