"""End-to-end CLI tests driven through main() with temp workspaces."""

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from foveal_explorer.cli import main
from foveal_explorer.foveation import load_image, save_image


def write_manifest(path: Path, **overrides) -> Path:
    data = {
        "seed": 3,
        "num_classes": 4,
        "paths": {
            "images_dir": "scenes",
            "ground_truth": "scenes/ground_truth.json",
            "model_file": "model.json",
            "output_dir": "out",
        },
        "train": {"fixations_per_image": 12},
        "explore": {"num_iterations": 10},
        "compare": {
            "repetitions": 5,
            "policies": [
                {"name": "active", "acquisition": "kl_gain"},
                {"name": "random", "acquisition": "random"},
            ],
        },
    }
    for key, value in overrides.items():
        if isinstance(value, dict):
            data.setdefault(key, {}).update(value)
        else:
            data[key] = value
    path.write_text(json.dumps(data))
    return path


@pytest.fixture()
def workspace(tmp_path):
    assert main([
        "simulate-dataset", "--output-dir", str(tmp_path / "scenes"),
        "--num-scenes", "3", "--width", "160", "--height", "160", "--seed", "5",
        "--objects-min", "4", "--objects-max", "6", "--cluster-radius", "45",
    ]) == 0
    manifest = write_manifest(tmp_path / "manifest.json")
    return tmp_path, manifest


class TestSimulateDataset:
    def test_writes_scenes_and_ground_truth(self, workspace):
        tmp_path, _ = workspace
        assert (tmp_path / "scenes" / "ground_truth.json").exists()
        assert (tmp_path / "scenes" / "scene_000.png").exists()
        img = load_image(tmp_path / "scenes" / "scene_000.png")
        assert img.shape == (160, 160, 3)


class TestTrain:
    def test_writes_model(self, workspace, capsys):
        tmp_path, manifest = workspace
        assert main(["train-obs-model", "--manifest", str(manifest)]) == 0
        assert (tmp_path / "model.json").exists()
        out = capsys.readouterr().out
        assert "samples per (class, bin)" in out

    def test_missing_ground_truth_exits_2(self, tmp_path, capsys):
        manifest = write_manifest(
            tmp_path / "m.json", paths={"ground_truth": "nope/gt.json", "images_dir": None}
        )
        assert main(["train-obs-model", "--manifest", str(manifest)]) == 2
        assert "nope" in capsys.readouterr().err

    def test_sparse_dataset_warns_but_succeeds(self, tmp_path, capsys):
        (tmp_path / "scenes").mkdir()
        gt = [{
            "image_id": "only", "width": 160, "height": 160,
            "objects": [{"box": [10, 10, 50, 50], "class_id": 1}],
        }]
        (tmp_path / "scenes" / "ground_truth.json").write_text(json.dumps(gt))
        manifest = write_manifest(tmp_path / "m.json", train={"fixations_per_image": 4})
        assert main(["train-obs-model", "--manifest", str(manifest)]) == 0
        out = capsys.readouterr().out
        assert "uniform prior" in out  # classes 2..4 never observed

    def test_idempotent(self, workspace):
        tmp_path, manifest = workspace
        assert main(["train-obs-model", "--manifest", str(manifest)]) == 0
        first = (tmp_path / "model.json").read_bytes()
        assert main(["train-obs-model", "--manifest", str(manifest)]) == 0
        assert (tmp_path / "model.json").read_bytes() == first


class TestExplore:
    @pytest.fixture()
    def trained(self, workspace):
        tmp_path, manifest = workspace
        assert main(["train-obs-model", "--manifest", str(manifest)]) == 0
        return tmp_path, manifest

    def test_csv_row_counts_and_map_snapshots(self, trained):
        tmp_path, manifest = trained
        assert main(["explore", "--manifest", str(manifest)]) == 0
        rows = list(csv.DictReader(open(tmp_path / "out" / "explore_scene_000.csv")))
        assert len(rows) == 10
        snap = json.loads((tmp_path / "out" / "map_scene_000.json").read_text())
        assert snap["cell_size"] == 16
        assert snap["width_cells"] == 10
        combined = list(csv.DictReader(open(tmp_path / "out" / "explore_all.csv")))
        assert len(combined) == 30

    def test_random_policy_reproducible(self, trained):
        tmp_path, manifest = trained
        args = ["explore", "--manifest", str(manifest), "--acquisition", "random", "--seed", "7"]
        assert main(args) == 0
        first = (tmp_path / "out" / "explore_all.csv").read_bytes()
        assert main(args) == 0
        assert (tmp_path / "out" / "explore_all.csv").read_bytes() == first

    def test_unreachable_bridge_exits_1(self, trained, capsys):
        tmp_path, manifest = trained
        code = main([
            "explore", "--manifest", str(manifest),
            "--detector", "bridge", "--endpoint", "http://127.0.0.1:1",
        ])
        assert code == 1
        assert "failed" in capsys.readouterr().err


class TestCompare:
    @pytest.fixture()
    def trained(self, workspace):
        tmp_path, manifest = workspace
        assert main(["train-obs-model", "--manifest", str(manifest)]) == 0
        return tmp_path, manifest

    def test_full_matrix_row_count(self, trained):
        tmp_path, manifest = trained
        assert main(["compare", "--manifest", str(manifest)]) == 0
        rows = list(csv.DictReader(open(tmp_path / "out" / "compare_rows.csv")))
        assert len(rows) == 2 * 5 * 3 * 10  # policies x repetitions x scenes x iterations
        summary = list(csv.DictReader(open(tmp_path / "out" / "compare_summary.csv")))
        active = [s for s in summary if s["config"] == "active"]
        assert len(active) == 10
        assert all(s["delta_f1_vs_random"] != "" for s in active)
        assert not (tmp_path / "out" / "compare_rows.csv.resume.json").exists()

    def test_single_policy_empty_deltas(self, trained):
        tmp_path, manifest = trained
        m = json.loads(Path(manifest).read_text())
        m["compare"]["policies"] = [{"name": "solo", "acquisition": "kl_gain"}]
        m["compare"]["repetitions"] = 2
        Path(manifest).write_text(json.dumps(m))
        assert main(["compare", "--manifest", str(manifest)]) == 0
        summary = list(csv.DictReader(open(tmp_path / "out" / "compare_summary.csv")))
        assert all(s["delta_f1_vs_random"] == "" for s in summary)

    def test_resume_completes_partial_run(self, trained):
        tmp_path, manifest = trained
        assert main(["compare", "--manifest", str(manifest)]) == 0
        rows_path = tmp_path / "out" / "compare_rows.csv"
        complete = list(csv.DictReader(open(rows_path)))

        # Simulate an interruption: keep the first half of the runs' rows
        # and a matching resume marker.
        keys = []
        for row in complete:
            key = (row["config"], row["image_id"], int(row["seed"]))
            if key not in keys:
                keys.append(key)
        kept = keys[: len(keys) // 2]
        kept_rows = [r for r in complete if (r["config"], r["image_id"], int(r["seed"])) in set(kept)]
        with open(rows_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=complete[0].keys())
            writer.writeheader()
            writer.writerows(kept_rows)
        marker = Path(str(rows_path) + ".resume.json")
        marker.write_text(json.dumps({"completed": [list(k) for k in kept]}))

        assert main(["compare", "--manifest", str(manifest), "--resume"]) == 0
        resumed = list(csv.DictReader(open(rows_path)))
        key_of = lambda r: (r["config"], r["image_id"], r["seed"], r["iteration"])
        assert sorted(map(key_of, resumed)) == sorted(map(key_of, complete))
        assert not marker.exists()


class TestFoveateCommand:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        src = tmp_path / "in.png"
        save_image(src, rng.integers(0, 255, (64, 64, 3), dtype=np.uint8))
        dst = tmp_path / "out.png"
        assert main([
            "foveate", "--input", str(src), "--output", str(dst),
            "--fixation", "32,30", "--sigma0", "10",
        ]) == 0
        assert load_image(dst).shape == (64, 64, 3)


class TestParsing:
    def test_unknown_flag_is_hard_error(self):
        with pytest.raises(SystemExit) as excinfo:
            main(["explore", "--manifest", "x.json", "--bogus"])
        assert excinfo.value.code == 2

    def test_unknown_manifest_key_exits_2(self, tmp_path, capsys):
        path = tmp_path / "m.json"
        path.write_text(json.dumps({"seed": 1, "typo_key": True}))
        assert main(["explore", "--manifest", str(path)]) == 2
        assert "typo_key" in capsys.readouterr().err

    def test_help_lists_subcommands(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            main(["--help"])
        assert excinfo.value.code == 0
        out = capsys.readouterr().out
        for name in ("train-obs-model", "explore", "compare", "foveate", "simulate-dataset"):
            assert name in out


class TestParallelJobs:
    def test_compare_jobs_matches_serial(self, tmp_path):
        assert main([
            "simulate-dataset", "--output-dir", str(tmp_path / "scenes"),
            "--num-scenes", "2", "--width", "160", "--height", "160", "--seed", "5",
            "--objects-min", "4", "--objects-max", "5", "--cluster-radius", "45",
        ]) == 0
        manifest = write_manifest(tmp_path / "m.json", compare={"repetitions": 2})
        assert main(["train-obs-model", "--manifest", str(manifest)]) == 0

        assert main(["compare", "--manifest", str(manifest)]) == 0
        serial = sorted(
            tuple(r.items()) for r in csv.DictReader(open(tmp_path / "out" / "compare_rows.csv"))
        )
        assert main(["compare", "--manifest", str(manifest), "--jobs", "2"]) == 0
        parallel = sorted(
            tuple(r.items()) for r in csv.DictReader(open(tmp_path / "out" / "compare_rows.csv"))
        )
        assert parallel == serial
