"""Command-line entry point.

Subcommands: train-obs-model, explore, compare, foveate (debug), and
simulate-dataset. A JSON manifest supplies paths and tunables; flags
override manifest values. Exit codes: 0 success, 1 runtime failure,
2 validation failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .detection import SimulatedDetectorConfig, load_detections, load_ground_truth, save_ground_truth
from .errors import FovealExplorerError, ManifestError, ValidationError
from .explorer import (
    CSV_HEADER,
    BridgeSpec,
    ExplorationConfig,
    FileReplaySpec,
    execute_run,
    experiment_runs,
    explore,
    summarize_rows,
    write_rows_csv,
    write_summary_csv,
)
from .foveation import FoveationConfig, foveate, load_image, save_image
from .geometry import DistanceBinning
from .manifest import RunManifest, binning_max_radius, load_manifest
from .observation import load_model, save_model, train
from .synthetic import collect_training_scenes, generate_scene, make_generator_model

log = logging.getLogger("foveal_explorer")


def _load_scenes(manifest: RunManifest):
    scenes = load_ground_truth(manifest.resolve(manifest.paths.ground_truth))
    if not scenes:
        raise ValidationError("ground-truth file contains no scenes")
    return scenes


def _scene_image(manifest: RunManifest, image_id: str):
    if manifest.paths.images_dir is None:
        return None
    path = manifest.resolve(manifest.paths.images_dir) / f"{image_id}.png"
    return load_image(path) if path.exists() else None


def _detector_spec(manifest: RunManifest, binning: DistanceBinning):
    det = manifest.detector
    if det.source == "simulated":
        generator = make_generator_model(
            manifest.num_classes,
            binning,
            own_start=det.generator.own_start,
            own_decay=det.generator.own_decay,
            own_floor=det.generator.own_floor,
            off_value=det.generator.off_value,
            confusion_max=det.generator.confusion_max,
            confusion_full_bin=det.generator.confusion_full_bin,
        )
        return SimulatedDetectorConfig(
            generator,
            miss_midpoint=det.miss_midpoint_fraction * binning.max_radius,
            miss_slope=det.miss_slope,
            jitter_scale=det.jitter_scale,
            false_positive_rate=det.false_positive_rate,
        )
    if det.source == "file":
        return FileReplaySpec(load_detections(manifest.resolve(manifest.paths.detections_file)))
    if det.source == "bridge":
        return BridgeSpec(det.endpoint, timeout=det.timeout)
    raise ManifestError(f"unknown detector source {det.source!r}")


def _exploration_config(manifest: RunManifest, detector, rule=None, acquisition=None, name="") -> ExplorationConfig:
    return ExplorationConfig(
        detector=detector,
        rule=rule or manifest.explore.fusion_rule,
        acquisition=acquisition or manifest.explore.acquisition,
        num_iterations=manifest.explore.num_iterations,
        seed=manifest.seed,
        cell_size=manifest.map.cell_size,
        stride_cells=manifest.planner.stride_cells,
        foveation=FoveationConfig(
            manifest.foveation.levels, manifest.foveation.sigma0, manifest.foveation.growth
        ),
        name=name,
    )


def cmd_train_obs_model(manifest: RunManifest) -> int:
    manifest.validate_for("train-obs-model")
    scenes = _load_scenes(manifest)
    binning = DistanceBinning.uniform(manifest.binning.num_bins, binning_max_radius(manifest, scenes))
    spec = _detector_spec(manifest, binning)
    rng = np.random.default_rng(manifest.seed)

    training = []
    if isinstance(spec, SimulatedDetectorConfig):
        training = collect_training_scenes(scenes, spec, manifest.train.fixations_per_image, manifest.seed)
    elif isinstance(spec, FileReplaySpec):
        from .observation import TrainingScene

        by_image: dict[str, list] = {}
        for (image_id, fixation), dets in spec.table.items():
            by_image.setdefault(image_id, []).append((fixation, dets))
        training = [TrainingScene(s, tuple(by_image.get(s.image_id, []))) for s in scenes]
    else:  # bridge
        from .detection import detect_via_bridge
        from .observation import TrainingScene

        fov = FoveationConfig(manifest.foveation.levels, manifest.foveation.sigma0, manifest.foveation.growth)
        for scene in scenes:
            image = _scene_image(manifest, scene.image_id)
            if image is None:
                raise ValidationError(f"no image for scene {scene.image_id}; the bridge needs frames")
            observations = []
            for _ in range(manifest.train.fixations_per_image):
                fx = (float(rng.uniform(0, scene.width)), float(rng.uniform(0, scene.height)))
                frame = foveate(image, fx, fov)
                observations.append((fx, detect_via_bridge(frame, fx, spec.endpoint, timeout=spec.timeout)))
            training.append(TrainingScene(scene, tuple(observations)))

    model = train(training, binning, manifest.train.iou_threshold, num_classes=manifest.num_classes)
    out = manifest.resolve(manifest.paths.model_file)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, out)
    print(f"wrote {out}")
    print(f"samples per (class, bin):\n{model.counts}")
    fallback = model.fallback_cells()
    if fallback:
        print(f"cells kept at the uniform prior for lack of data: {fallback}")
    unconverged = [
        (k, b)
        for k in range(model.num_channels)
        for b in range(model.binning.num_bins)
        if model.counts[k, b] >= 2 and not model.converged[k, b]
    ]
    if unconverged:
        print(f"cells whose fit hit the iteration cap: {unconverged}")
    return 0


def _explore_scene(args):
    manifest, scene, model, spec = args
    image = _scene_image(manifest, scene.image_id)
    config = _exploration_config(manifest, spec)
    trace = explore(image, scene, config, model)
    rows = []
    for rec in trace.records:
        rows.append(
            {
                "config": config.name,
                "image_id": scene.image_id,
                "seed": config.seed,
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
    return rows, trace.final_map.to_snapshot_dict(), trace.error


def cmd_explore(manifest: RunManifest, jobs: int = 1) -> int:
    manifest.validate_for("explore")
    scenes = _load_scenes(manifest)
    model = load_model(manifest.resolve(manifest.paths.model_file))
    spec = _detector_spec(manifest, model.binning)
    out_dir = manifest.resolve(manifest.paths.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    tasks = [(manifest, scene, model, spec) for scene in scenes]
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_explore_scene, tasks))
    else:
        results = [_explore_scene(t) for t in tasks]

    all_rows = []
    failed = None
    for scene, (rows, snapshot, error) in zip(scenes, results):
        all_rows.extend(rows)
        write_rows_csv(rows, out_dir / f"explore_{scene.image_id}.csv")
        with open(out_dir / f"map_{scene.image_id}.json", "w", encoding="utf-8") as fh:
            json.dump(snapshot, fh)
        if error is not None and failed is None:
            failed = f"{scene.image_id}: detector source failed: {error}"
    write_rows_csv(all_rows, out_dir / "explore_all.csv")
    if failed is not None:
        print(failed, file=sys.stderr)
        return 1
    print(f"wrote {out_dir / 'explore_all.csv'} ({len(all_rows)} rows)")
    return 0


def _run_one(args):
    run, model = args
    try:
        return execute_run(run, model), None
    except FovealExplorerError as exc:
        return [], str(exc)


def cmd_compare(manifest: RunManifest, jobs: int = 1, resume: bool = False) -> int:
    manifest.validate_for("compare")
    scenes = _load_scenes(manifest)
    model = load_model(manifest.resolve(manifest.paths.model_file))
    spec = _detector_spec(manifest, model.binning)
    out_dir = manifest.resolve(manifest.paths.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows_path = out_dir / "compare_rows.csv"
    marker_path = Path(str(rows_path) + ".resume.json")

    configs = [
        _exploration_config(manifest, spec, rule=p.fusion_rule, acquisition=p.acquisition, name=p.name)
        for p in manifest.compare.policies
    ]
    dataset = [(_scene_image(manifest, s.image_id), s) for s in scenes]
    runs = experiment_runs(dataset, configs, manifest.compare.repetitions, base_seed=manifest.seed)

    done: set[tuple] = set()
    if resume and marker_path.exists():
        done = {tuple(k) for k in json.loads(marker_path.read_text())["completed"]}
        print(f"resuming: {len(done)} run(s) already recorded")
    fresh = not (resume and rows_path.exists())

    failures = []
    rows = []
    if not fresh:
        with open(rows_path, "r", encoding="utf-8", newline="") as fh:
            rows = list(csv.DictReader(fh))
    fh = open(rows_path, "w" if fresh else "a", encoding="utf-8", newline="")
    writer = csv.DictWriter(fh, fieldnames=CSV_HEADER)
    if fresh:
        writer.writeheader()
    pending = [r for r in runs if (r.config.name, r.ground_truth.image_id, r.config.seed) not in done]
    try:
        if jobs > 1:
            with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
                results = pool.map(_run_one, [(r, model) for r in pending])
                outcomes = zip(pending, results)
        else:
            outcomes = ((run, _run_one((run, model))) for run in pending)
        for run, (result, error) in outcomes:
            if error is not None:
                failures.append(
                    {"config": run.config.name, "image_id": run.ground_truth.image_id,
                     "seed": run.config.seed, "error": error}
                )
                continue
            rows.extend(result)
            writer.writerows(result)
            fh.flush()
            done.add((run.config.name, run.ground_truth.image_id, run.config.seed))
    except KeyboardInterrupt:
        fh.flush()
        marker_path.write_text(json.dumps({"completed": [list(k) for k in sorted(done)]}))
        print(f"interrupted; partial rows in {rows_path}, resume marker in {marker_path}", file=sys.stderr)
        return 1
    finally:
        fh.close()

    marker_path.unlink(missing_ok=True)
    summary = summarize_rows(rows, configs)
    write_summary_csv(summary, out_dir / "compare_summary.csv")
    print(f"wrote {rows_path} ({len(rows)} rows) and {out_dir / 'compare_summary.csv'}")
    if failures:
        print(f"{len(failures)} run(s) failed and were excluded:", file=sys.stderr)
        for f in failures:
            print(f"  {f['config']} / {f['image_id']} / seed {f['seed']}: {f['error']}", file=sys.stderr)
    return 0


def cmd_foveate(args) -> int:
    image = load_image(args.input)
    fx, fy = (float(v) for v in args.fixation.split(","))
    config = FoveationConfig(levels=args.levels, sigma0=args.sigma0, growth=args.growth)
    save_image(args.output, foveate(image, (fx, fy), config))
    print(f"wrote {args.output}")
    return 0


def cmd_simulate_dataset(args) -> int:
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scenes = []
    for i in range(args.num_scenes):
        rng = np.random.default_rng(np.random.SeedSequence([args.seed, i]))
        image, gt = generate_scene(
            rng,
            image_id=f"scene_{i:03d}",
            width=args.width,
            height=args.height,
            num_classes=args.num_classes,
            num_objects=(args.objects_min, args.objects_max),
            cluster_radius=args.cluster_radius,
        )
        save_image(out_dir / f"{gt.image_id}.png", image)
        scenes.append(gt)
    save_ground_truth(out_dir / "ground_truth.json", scenes)
    print(f"wrote {args.num_scenes} scene(s) and {out_dir / 'ground_truth.json'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="foveal-explorer", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def with_manifest(p):
        p.add_argument("--manifest", required=True, help="path to the run manifest JSON")
        p.add_argument("--seed", type=int, help="override manifest seed")
        p.add_argument("--detector", choices=["simulated", "file", "bridge"], help="override detector source")
        p.add_argument("--endpoint", help="override bridge endpoint URL")
        p.add_argument("--model-file", help="override model file path")
        p.add_argument("--output-dir", help="override output directory")
        return p

    with_manifest(sub.add_parser("train-obs-model", help="fit the score model from random fixations"))

    p = with_manifest(sub.add_parser("explore", help="run the exploration loop on every scene"))
    p.add_argument("--acquisition", choices=["kl_gain", "dirichlet_entropy", "two_peaks", "random"])
    p.add_argument("--fusion-rule", choices=["product", "sum", "kaplan_raw", "kaplan_modified"])
    p.add_argument("--iterations", type=int)
    p.add_argument("--jobs", type=int, default=1)

    p = with_manifest(sub.add_parser("compare", help="run the policy matrix and summarize"))
    p.add_argument("--repetitions", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--resume", action="store_true", help="skip runs recorded in the resume marker")

    p = sub.add_parser("foveate", help="write a foveated PNG (debug)")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--fixation", required=True, help="X,Y in pixels")
    p.add_argument("--levels", type=int, default=5)
    p.add_argument("--sigma0", type=float, default=60.0)
    p.add_argument("--growth", type=float, default=2.0)

    p = sub.add_parser("simulate-dataset", help="emit synthetic scenes plus ground truth")
    p.add_argument("--output-dir", required=True)
    p.add_argument("--num-scenes", type=int, default=10)
    p.add_argument("--width", type=int, default=512)
    p.add_argument("--height", type=int, default=512)
    p.add_argument("--num-classes", type=int, default=4)
    p.add_argument("--objects-min", type=int, default=7)
    p.add_argument("--objects-max", type=int, default=10)
    p.add_argument("--cluster-radius", type=float, default=65.0)
    p.add_argument("--seed", type=int, default=0)
    return parser


def _apply_overrides(manifest: RunManifest, args) -> None:
    if getattr(args, "seed", None) is not None:
        manifest.seed = args.seed
    if getattr(args, "detector", None):
        manifest.detector.source = args.detector
    if getattr(args, "endpoint", None):
        manifest.detector.endpoint = args.endpoint
    if getattr(args, "model_file", None):
        manifest.paths.model_file = args.model_file
    if getattr(args, "output_dir", None):
        manifest.paths.output_dir = args.output_dir
    if getattr(args, "acquisition", None):
        manifest.explore.acquisition = args.acquisition
    if getattr(args, "fusion_rule", None):
        manifest.explore.fusion_rule = args.fusion_rule
    if getattr(args, "iterations", None) is not None:
        manifest.explore.num_iterations = args.iterations
    if getattr(args, "repetitions", None) is not None:
        manifest.compare.repetitions = args.repetitions


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "foveate":
            return cmd_foveate(args)
        if args.command == "simulate-dataset":
            return cmd_simulate_dataset(args)
        manifest = load_manifest(args.manifest)
        _apply_overrides(manifest, args)
        if args.command == "train-obs-model":
            return cmd_train_obs_model(manifest)
        if args.command == "explore":
            return cmd_explore(manifest, jobs=args.jobs)
        if args.command == "compare":
            return cmd_compare(manifest, jobs=args.jobs, resume=args.resume)
        raise ManifestError(f"unknown command {args.command}")
    except (ManifestError, ValidationError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except FovealExplorerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
