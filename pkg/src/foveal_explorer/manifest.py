"""Run manifest: one JSON file holding paths and every tunable.

Unknown keys are rejected so typos fail loudly; path existence is checked
per command (training does not need a model file, replay needs the
detections file, and so on). Command-line flags override manifest values
after loading.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import ManifestError


@dataclass
class PathsSection:
    images_dir: str | None = None
    ground_truth: str | None = None
    detections_file: str | None = None
    model_file: str = "obs_model.json"
    output_dir: str = "out"


@dataclass
class FoveationSection:
    levels: int = 5
    sigma0: float = 60.0
    growth: float = 2.0


@dataclass
class BinningSection:
    num_bins: int = 7
    max_radius: float | None = None  # None -> half diagonal of the largest scene


@dataclass
class MapSection:
    cell_size: int = 16


@dataclass
class PlannerSection:
    stride_cells: int = 4


@dataclass
class GeneratorSection:
    own_start: float = 20.0
    own_decay: float = 0.9
    own_floor: float = 0.55
    off_value: float = 0.55
    confusion_max: float = 0.6
    confusion_full_bin: int = 2


@dataclass
class DetectorSection:
    source: str = "simulated"  # simulated | file | bridge
    endpoint: str | None = None
    timeout: float = 30.0
    miss_midpoint_fraction: float = 0.7
    miss_slope: float = 0.02
    jitter_scale: float = 0.02
    false_positive_rate: float = 0.3
    generator: GeneratorSection = field(default_factory=GeneratorSection)


@dataclass
class TrainSection:
    fixations_per_image: int = 50
    iou_threshold: float = 0.3


@dataclass
class ExploreSection:
    num_iterations: int = 10
    fusion_rule: str = "kaplan_modified"
    acquisition: str = "kl_gain"


@dataclass
class PolicySection:
    name: str
    fusion_rule: str = "kaplan_modified"
    acquisition: str = "kl_gain"


@dataclass
class CompareSection:
    repetitions: int = 5
    policies: list[PolicySection] = field(
        default_factory=lambda: [
            PolicySection(name="active", acquisition="kl_gain"),
            PolicySection(name="random", acquisition="random"),
        ]
    )


@dataclass
class RunManifest:
    seed: int = 0
    num_classes: int = 4
    paths: PathsSection = field(default_factory=PathsSection)
    foveation: FoveationSection = field(default_factory=FoveationSection)
    binning: BinningSection = field(default_factory=BinningSection)
    map: MapSection = field(default_factory=MapSection)
    planner: PlannerSection = field(default_factory=PlannerSection)
    detector: DetectorSection = field(default_factory=DetectorSection)
    train: TrainSection = field(default_factory=TrainSection)
    explore: ExploreSection = field(default_factory=ExploreSection)
    compare: CompareSection = field(default_factory=CompareSection)

    base_dir: Path = field(default_factory=Path, repr=False)

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.base_dir / p

    def validate_for(self, command: str) -> None:
        """Check that every path the command will read exists."""
        need: list[tuple[str, str | None]] = []
        if command in ("train-obs-model", "explore", "compare"):
            need.append(("paths.ground_truth", self.paths.ground_truth))
        if command in ("explore", "compare"):
            need.append(("paths.model_file", self.paths.model_file))
        if self.detector.source == "file":
            need.append(("paths.detections_file", self.paths.detections_file))
        if self.detector.source == "bridge":
            if not self.detector.endpoint:
                raise ManifestError("detector.endpoint is required for the bridge source")
            if self.paths.images_dir is not None:
                need.append(("paths.images_dir", self.paths.images_dir))
            else:
                raise ManifestError("paths.images_dir is required for the bridge source")
        for label, value in need:
            if value is None:
                raise ManifestError(f"{label} is required for `{command}`")
            if not self.resolve(value).exists():
                raise ManifestError(f"{label}: {self.resolve(value)} does not exist")


def _build(cls, data, context: str):
    if not isinstance(data, dict):
        raise ManifestError(f"{context or 'manifest'}: expected an object, got {type(data).__name__}")
    known = {f.name: f for f in fields(cls) if f.name != "base_dir"}
    unknown = set(data) - set(known)
    if unknown:
        raise ManifestError(f"{context or 'manifest'}: unknown key(s) {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        sub = known[name].type
        label = f"{context}.{name}" if context else name
        if name == "policies":
            if not isinstance(value, list):
                raise ManifestError(f"{label}: expected a list")
            kwargs[name] = [_build(PolicySection, v, f"{label}[{i}]") for i, v in enumerate(value)]
        elif isinstance(value, dict):
            section = {
                "paths": PathsSection,
                "foveation": FoveationSection,
                "binning": BinningSection,
                "map": MapSection,
                "planner": PlannerSection,
                "detector": DetectorSection,
                "generator": GeneratorSection,
                "train": TrainSection,
                "explore": ExploreSection,
                "compare": CompareSection,
            }.get(name)
            if section is None:
                raise ManifestError(f"{label}: unexpected object value")
            kwargs[name] = _build(section, value, label)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ManifestError(f"{context or 'manifest'}: {exc}") from exc


def load_manifest(path) -> RunManifest:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ManifestError(f"manifest {path} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON: {exc}") from exc
    manifest = _build(RunManifest, data, "")
    manifest.base_dir = path.parent.resolve()
    return manifest


def save_manifest(manifest: RunManifest, path) -> None:
    data = asdict(manifest)
    data.pop("base_dir", None)
    Path(path).write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


def binning_max_radius(manifest: RunManifest, scenes) -> float:
    if manifest.binning.max_radius is not None:
        return manifest.binning.max_radius
    return max(0.5 * float(np.hypot(s.width, s.height)) for s in scenes)
