"""End-to-end command-line behavior: exit codes, files, precedence."""

import json
import math
import os

import numpy as np
import pytest

from repcone.cli import main
from repcone.embstore import EmbeddingSet, save_embeddings


def write_config(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
    return str(path)


def explicit_scenario_config(tmp_path, count=150, test_count=50):
    axes = np.eye(8)
    return write_config(tmp_path / "scenario_cfg.json", {
        "dimension": 8,
        "min_separation_deg": 30.0,
        "test_count": test_count,
        "tasks": [
            {"classes": {
                "0": {"axis": axes[0].tolist(), "half_angle_deg": 12.0,
                      "count": count, "seed": 100},
                "1": {"axis": axes[1].tolist(), "half_angle_deg": 12.0,
                      "count": count, "seed": 200},
            }},
            {"classes": {
                "2": {"axis": axes[2].tolist(), "half_angle_deg": 12.0,
                      "count": count, "seed": 300},
                "3": {"axis": axes[3].tolist(), "half_angle_deg": 12.0,
                      "count": count, "seed": 400},
            }},
        ],
    })


@pytest.fixture(scope="module")
def scenario_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("scenario")
    cfg = explicit_scenario_config(out)
    assert main(["gen-synthetic", "--config", cfg, "--out-dir", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory, scenario_dir):
    out = tmp_path_factory.mktemp("run")
    cfg = write_config(out / "train_cfg.json", {
        "scenario": {
            "tasks": [str(scenario_dir / "task0-train.emb"),
                      str(scenario_dir / "task1-train.emb")],
            "tests": [str(scenario_dir / "task0-test.emb"),
                      str(scenario_dir / "task1-test.emb")],
        },
        "record_replay_snapshots": True,
    })
    rc = main([
        "train-seq", "--config", cfg, "--out-dir", str(out), "--seed", "3",
        "--schedule", "80:0.1", "--gamma", "0.2", "--cadence", "64",
        "--batch", "16", "--lr", "1e-3", "--hidden", "16", "--d-rep", "4",
    ])
    assert rc == 0
    return out


# ----------------------------------------------------------- gen-synthetic


def test_gen_synthetic_explicit_layout(scenario_dir):
    names = ["task0-train.emb", "task0-test.emb", "task1-train.emb", "task1-test.emb"]
    for name in names:
        assert (scenario_dir / name).exists()
    doc = json.loads((scenario_dir / "scenario.json").read_text())
    assert doc["config"]["source"] == "explicit"
    assert sorted(doc["files"]) == sorted(n[:-4] for n in names)
    assert [t["class_id"] for t in doc["truth"]] == [0, 1, 2, 3]
    axis = np.array(doc["truth"][0]["axis"])
    assert abs(np.linalg.norm(axis) - 1.0) < 1e-12
    assert abs(doc["truth"][0]["half_angle"] - math.radians(12.0)) < 1e-12


def test_gen_synthetic_requires_out_dir(tmp_path):
    cfg = explicit_scenario_config(tmp_path)
    assert main(["gen-synthetic", "--config", cfg]) == 1


def test_gen_synthetic_calibrated(tmp_path):
    out = tmp_path / "cal"
    rc = main(["gen-synthetic", "--kind", "lean", "--seed", "9",
               "--n-train", "200", "--n-test", "50", "--out-dir", str(out)])
    assert rc == 0
    doc = json.loads((out / "scenario.json").read_text())
    assert doc["config"]["source"] == "calibrated"
    assert doc["config"]["settings"]["d_in"] == 12
    for name in ("task1_train.emb", "task2_train.emb",
                 "task1_test.emb", "task2_test.emb"):
        assert (out / name).exists()


# ----------------------------------------------------------------- fit-cone


def test_fit_cone_report(scenario_dir, tmp_path):
    out = tmp_path / "cone.json"
    rc = main(["fit-cone", "--in", str(scenario_dir / "task0-train.emb"),
               "--class", "0", "--out", str(out)])
    assert rc == 0
    doc = json.loads(out.read_text())
    assert doc["kept_count"] == math.ceil(0.95 * 150)
    assert doc["converged"] is True
    assert doc["config"]["coverage"] == 0.95
    truth_axis = np.eye(8)[0]
    assert abs(np.array(doc["axis"]) @ truth_axis) >= 0.995
    # 12 deg generating cap: fitted aperture at least as tight
    assert math.degrees(math.acos(doc["aperture"])) <= 12.5


def test_fit_cone_missing_input(tmp_path, capsys):
    rc = main(["fit-cone", "--in", str(tmp_path / "absent.emb"),
               "--out", str(tmp_path / "o.json")])
    assert rc == 1
    assert "absent.emb" in capsys.readouterr().err


def test_fit_cone_unknown_class(scenario_dir, tmp_path):
    rc = main(["fit-cone", "--in", str(scenario_dir / "task0-train.emb"),
               "--class", "9", "--out", str(tmp_path / "o.json")])
    assert rc == 1


def test_unknown_flag_exits_one(capsys):
    assert main(["fit-cone", "--nope"]) == 1
    assert "error" in capsys.readouterr().err


def test_missing_subcommand_exits_one(capsys):
    assert main([]) == 1


def test_help_exits_zero(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0


def test_flag_beats_config_beats_default(scenario_dir, tmp_path):
    emb = str(scenario_dir / "task0-train.emb")
    cfg = write_config(tmp_path / "cfg.json",
                       {"in": emb, "coverage": 0.8, "out": str(tmp_path / "a.json")})
    assert main(["fit-cone", "--config", cfg]) == 0
    assert json.loads((tmp_path / "a.json").read_text())["coverage_target"] == 0.8
    assert main(["fit-cone", "--config", cfg, "--coverage", "0.9",
                 "--out", str(tmp_path / "b.json")]) == 0
    assert json.loads((tmp_path / "b.json").read_text())["coverage_target"] == 0.9
    assert main(["fit-cone", "--in", emb, "--out", str(tmp_path / "c.json")]) == 0
    assert json.loads((tmp_path / "c.json").read_text())["coverage_target"] == 0.95


def test_config_file_not_found(tmp_path, capsys):
    rc = main(["fit-cone", "--config", str(tmp_path / "nope.json")])
    assert rc == 1
    assert "nope.json" in capsys.readouterr().err


# ------------------------------------------------------------------ cosdist


def test_cosdist_histogram_and_sidecar(scenario_dir, tmp_path):
    out = tmp_path / "hist.csv"
    argv = ["cosdist", "--a", str(scenario_dir / "task0-train.emb"),
            "--b", str(scenario_dir / "task1-train.emb"),
            "--samples", "5000", "--bins", "40", "--seed", "3",
            "--out", str(out)]
    assert main(argv) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "bin_lo,bin_hi,count"
    assert len(lines) == 41
    counts = [int(l.split(",")[2]) for l in lines[1:]]
    assert sum(counts) == 5000
    sidecar = json.loads((tmp_path / "hist.csv.config.json").read_text())
    assert sidecar["samples"] == 5000 and sidecar["seed"] == 3
    first = out.read_bytes()
    assert main(argv) == 0
    assert out.read_bytes() == first


# ------------------------------------------------------------- metrics topo


def test_metrics_topo_identity_full_neighborhood(scenario_dir, tmp_path):
    emb = str(scenario_dir / "task0-train.emb")
    out = tmp_path / "topo.csv"
    rc = main(["metrics", "topo", "--before", emb, "--after", emb,
               "--neighbors", "149", "--out", str(out)])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "class,n,pearson"
    assert len(lines) == 3  # one row per class
    for line in lines[1:]:
        cid, n, val = line.split(",")
        assert n == "149"
        assert abs(float(val) - (-1.0)) < 1e-9


def test_metrics_topo_multiple_neighbor_counts(scenario_dir, tmp_path):
    emb = str(scenario_dir / "task0-train.emb")
    out = tmp_path / "topo.csv"
    rc = main(["metrics", "topo", "--before", emb, "--after", emb,
               "--neighbors", "5,10,25", "--out", str(out)])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 7
    assert [l.split(",")[1] for l in lines[1:]] == ["5", "10", "25"] * 2


def test_metrics_topo_unlabeled_uses_minus_one(tmp_path):
    rng = np.random.Generator(np.random.PCG64(0))
    v = rng.standard_normal((30, 4))
    v[:, 0] += 2.0
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    p = tmp_path / "plain.emb"
    save_embeddings(p, EmbeddingSet("plain", v))
    out = tmp_path / "topo.csv"
    assert main(["metrics", "topo", "--before", str(p), "--after", str(p),
                 "--neighbors", "29", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[1].startswith("-1,29,")


def test_metrics_topo_misaligned_rows(scenario_dir, tmp_path):
    rc = main(["metrics", "topo",
               "--before", str(scenario_dir / "task0-train.emb"),
               "--after", str(scenario_dir / "task0-test.emb"),
               "--out", str(tmp_path / "t.csv")])
    assert rc == 1


def test_metrics_topo_zero_variance_exits_two(tmp_path, capsys):
    v = np.tile(np.array([[1.0, 0.0, 0.0]]), (12, 1))
    p = tmp_path / "flat.emb"
    save_embeddings(p, EmbeddingSet(
        "flat", v, labels=np.zeros(12, dtype=np.uint32), class_space=(0,)
    ))
    rc = main(["metrics", "topo", "--before", str(p), "--after", str(p),
               "--out", str(tmp_path / "t.csv")])
    assert rc == 2


# ----------------------------------------------------- train-seq + friends


def test_train_seq_outputs(run_dir):
    doc = json.loads((run_dir / "runlog.json").read_text())
    assert doc["replay_events"]
    for ev in doc["replay_events"]:
        assert ev["pre_path"] and ev["post_path"]
        assert os.path.exists(ev["pre_path"])
    assert (run_dir / "ckpt0000.ckpt").exists()
    assert (run_dir / "final.ckpt").exists()
    manifest = json.loads((run_dir / "run_manifest.json").read_text())
    assert manifest["config"]["schedule"] == {"interval": 80, "rate": 0.1}
    assert manifest["config"]["seed"] == 3


def test_train_seq_bad_schedule_flag(tmp_path, scenario_dir):
    cfg = write_config(tmp_path / "c.json", {
        "scenario": {"tasks": [str(scenario_dir / "task0-train.emb")]},
    })
    rc = main(["train-seq", "--config", cfg, "--out-dir", str(tmp_path / "r"),
               "--schedule", "80"])
    assert rc == 1


def test_train_seq_needs_scenario(tmp_path):
    cfg = write_config(tmp_path / "c.json", {})
    assert main(["train-seq", "--config", cfg,
                 "--out-dir", str(tmp_path / "r")]) == 1


def test_timeline_grid(run_dir, scenario_dir, tmp_path):
    out = tmp_path / "tl.csv"
    argv = ["timeline", "--run-dir", str(run_dir),
            "--tasks",
            f"{scenario_dir / 'task0-train.emb'}:{scenario_dir / 'task0-test.emb'}",
            f"{scenario_dir / 'task1-train.emb'}:{scenario_dir / 'task1-test.emb'}",
            "--out", str(out), "--epochs", "5", "--seed", "1"]
    assert main(argv) == 0
    lines = out.read_text().splitlines()
    n_ckpts = len(json.loads((run_dir / "runlog.json").read_text())["checkpoints"])
    assert len(lines) == 1 + 2 * n_ckpts
    assert lines[0] == "checkpoint_id,examples_seen,task_id,probe_score,original_score"
    for line in lines[1:]:
        parts = line.split(",")
        assert parts[2] in ("task0-train", "task1-train")
        assert 0.0 <= float(parts[3]) <= 1.0
    first = out.read_bytes()
    assert main(argv) == 0
    assert out.read_bytes() == first


def test_probe_single_checkpoint(run_dir, scenario_dir, tmp_path):
    out = tmp_path / "probe.csv"
    rc = main(["probe", "--ckpt", str(run_dir / "final.ckpt"),
               "--train", str(scenario_dir / "task0-train.emb"),
               "--test", str(scenario_dir / "task0-test.emb"),
               "--out", str(out), "--epochs", "10", "--seed", "2"])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 2
    parts = lines[1].split(",")
    assert parts[2] == "task0-test"
    assert 0.0 <= float(parts[3]) <= 1.0
    assert (tmp_path / "probe.csv.config.json").exists()


def test_metrics_rotation_reports(run_dir, scenario_dir, tmp_path):
    out = tmp_path / "rot.csv"
    rc = main(["metrics", "rotation", "--run-dir", str(run_dir),
               "--old-task", str(scenario_dir / "task0-train.emb"),
               "--out", str(out)])
    assert rc == 0
    doc = json.loads((run_dir / "runlog.json").read_text())
    later_events = [ev for ev in doc["replay_events"]
                    if ev["task_id"] != "task0-train"]
    lines = out.read_text().splitlines()
    assert lines[0] == "event,class,delta_zeta"
    assert len(lines) == 1 + 2 * len(later_events)  # two old classes
    drift_lines = (tmp_path / "rot.csv.drift.csv").read_text().splitlines()
    assert drift_lines[0] == "event,class,drift"
    assert len(drift_lines) == len(lines)


def test_metrics_rotation_needs_snapshots(tmp_path, scenario_dir):
    cfg = write_config(tmp_path / "c.json", {
        "scenario": {
            "tasks": [str(scenario_dir / "task0-train.emb"),
                      str(scenario_dir / "task1-train.emb")],
        },
        "record_replay_snapshots": False,
    })
    rdir = tmp_path / "bare"
    assert main(["train-seq", "--config", cfg, "--out-dir", str(rdir),
                 "--seed", "3", "--schedule", "80:0.1", "--cadence", "64",
                 "--batch", "16", "--hidden", "16", "--d-rep", "4"]) == 0
    rc = main(["metrics", "rotation", "--run-dir", str(rdir),
               "--old-task", str(scenario_dir / "task0-train.emb"),
               "--out", str(tmp_path / "r.csv")])
    assert rc == 1


def test_repeat_run_byte_identical_reports(tmp_path, scenario_dir):
    cfg = write_config(tmp_path / "c.json", {
        "scenario": {
            "tasks": [str(scenario_dir / "task0-train.emb"),
                      str(scenario_dir / "task1-train.emb")],
        },
        "record_replay_snapshots": True,
    })
    rdir = tmp_path / "rep"
    argv = ["train-seq", "--config", cfg, "--out-dir", str(rdir),
            "--seed", "7", "--schedule", "100:0.05", "--cadence", "64",
            "--batch", "16", "--hidden", "16", "--d-rep", "4"]
    assert main(argv) == 0
    runlog = (rdir / "runlog.json").read_bytes()
    final = (rdir / "final.ckpt").read_bytes()
    assert main(argv) == 0
    assert (rdir / "runlog.json").read_bytes() == runlog
    assert (rdir / "final.ckpt").read_bytes() == final
