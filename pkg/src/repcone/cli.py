"""Command-line surface tying the modules into reproducible experiments.

Subcommands: gen-synthetic, fit-cone, probe, train-seq, timeline,
metrics topo, metrics rotation, cosdist. Every run with the same config
and seed writes byte-identical report files; wall-clock timestamps go
only into the run manifest. Flag values override config-file values,
which override defaults.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from .embstore import EmbeddingSet, load_embeddings, save_embeddings
from .errors import (
    NonFiniteGradientError,
    RepconeError,
    UndefinedCorrelationError,
    ValidationError,
)
from .geometry import (
    Cone,
    ConeFitConfig,
    cone_report,
    cosine_pair_distribution,
    fit_cone,
    histogram_csv,
)
from .learner import Model, encode, init_decoder, init_encoder, load_checkpoint
from .metrics import RotationReport, TopoReport, decoder_drift, rotation_delta, topo_pearson
from .probe import ProbeConfig, evaluate_probe, probe_timeline, train_probe
from .replay import CheckpointPlan, MemoryBuffer, ReplaySchedule, RunLog, sequential_train
from .synth import CapSpec, ScenarioSpec, build_scenario, two_task_scenario


def _load_config(path) -> dict:
    if path is None:
        return {}
    if not os.path.exists(path):
        raise ValidationError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ValidationError("config must be a JSON object")
    return cfg


def _resolve(flag_value, config: dict, key: str, default):
    # precedence: flag > config > default
    if flag_value is not None:
        return flag_value
    if key in config:
        return config[key]
    return default


def _write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _sidecar(out_path, config: dict) -> None:
    # resolved-config companion so every report carries its provenance
    _write_json(str(out_path) + ".config.json", config)


def _require_file(path, what: str) -> None:
    if not os.path.exists(path):
        raise ValidationError(f"{what} not found: {path}")


# ---------------------------------------------------------------- commands


def _cmd_gen_synthetic(args) -> int:
    cfg = _load_config(args.config)
    out_dir = _resolve(args.out_dir, cfg, "out_dir", None)
    if out_dir is None:
        raise ValidationError("gen-synthetic needs --out-dir")
    os.makedirs(out_dir, exist_ok=True)
    if "tasks" in cfg:
        # explicit cap table: every class spelled out with its own axis
        dim = cfg.get("dimension")
        if dim is None:
            raise ValidationError("explicit scenario config needs 'dimension'")
        tasks = []
        for task in cfg["tasks"]:
            caps = {}
            for cid, c in task["classes"].items():
                caps[int(cid)] = CapSpec(
                    axis=np.asarray(c["axis"], dtype=np.float64),
                    half_angle=np.radians(float(c["half_angle_deg"])),
                    count=int(c["count"]),
                    dimension=int(dim),
                    seed=int(c["seed"]),
                )
            tasks.append(caps)
        spec = ScenarioSpec(
            tasks=tuple(tasks),
            dimension=int(dim),
            min_separation=np.radians(float(cfg.get("min_separation_deg", 0.0))),
            test_count=int(cfg.get("test_count", 0)),
        )
        sets, truth = build_scenario(spec)
        files = {}
        for s in sets:
            name = f"{s.task_id}.emb"
            save_embeddings(os.path.join(out_dir, name), s)
            files[s.task_id] = name
        resolved = {"dimension": spec.dimension, "out_dir": str(out_dir),
                    "source": "explicit", "test_count": spec.test_count}
        truth_rows = [
            {"class_id": t.class_id, "axis": [float(x) for x in t.axis],
             "half_angle": float(t.half_angle)}
            for t in truth
        ]
    else:
        kind = _resolve(args.kind, cfg, "kind", "lean")
        seed = int(_resolve(args.seed, cfg, "seed", 9))
        n_train = int(_resolve(args.n_train, cfg, "n_train", 15000))
        n_test = int(_resolve(args.n_test, cfg, "n_test", 2000))
        scn = two_task_scenario(kind, seed=seed, n_train=n_train, n_test=n_test)
        files = {}
        for split, pair in (("train", scn.trains), ("test", scn.tests)):
            for s in pair:
                name = f"{s.task_id}_{split}.emb"
                save_embeddings(os.path.join(out_dir, name), s)
                files[f"{s.task_id}_{split}"] = name
        resolved = {"kind": kind, "seed": seed, "n_train": n_train,
                    "n_test": n_test, "out_dir": str(out_dir),
                    "source": "calibrated", "settings": scn.settings}
        truth_rows = []  # axes live inside the generator for calibrated kinds
    _write_json(os.path.join(out_dir, "scenario.json"),
                {"config": resolved, "files": files, "truth": truth_rows})
    print(f"gen-synthetic: wrote {len(files)} embedding files to {out_dir}")
    return 0


def _cmd_fit_cone(args) -> int:
    cfg = _load_config(args.config)
    in_path = _resolve(args.in_path, cfg, "in", None)
    if in_path is None:
        raise ValidationError("fit-cone needs --in")
    _require_file(in_path, "embedding file")
    out = _resolve(args.out, cfg, "out", None)
    if out is None:
        raise ValidationError("fit-cone needs --out")
    coverage = float(_resolve(args.coverage, cfg, "coverage", 0.95))
    class_id = _resolve(args.class_id, cfg, "class", None)
    emb = load_embeddings(in_path)
    vectors = emb.vectors
    if class_id is not None:
        if emb.labels is None:
            raise ValidationError("--class given but the file has no labels")
        vectors = emb.vectors[emb.labels == int(class_id)]
        if vectors.shape[0] == 0:
            raise ValidationError(f"no rows with class {class_id}")
    cone = fit_cone(vectors, ConeFitConfig(coverage=coverage))
    resolved = {"in": str(in_path), "class": class_id, "coverage": coverage,
                "out": str(out)}
    payload = cone_report(cone)
    payload["config"] = resolved
    _write_json(out, payload)
    print(
        f"fit-cone: {vectors.shape[0]} vectors -> aperture="
        f"{np.degrees(np.arccos(cone.aperture)):.3f} deg kept={cone.kept_count} "
        f"converged={cone.converged}"
    )
    return 0


def _probe_config(args, cfg: dict, seed_default: int = 0) -> ProbeConfig:
    return ProbeConfig(
        epochs=int(_resolve(args.epochs, cfg, "epochs", 20)),
        learning_rate=float(_resolve(args.probe_lr, cfg, "probe_lr", 1e-3)),
        batch_size=int(_resolve(args.probe_batch, cfg, "probe_batch", 32)),
        seed=int(_resolve(args.seed, cfg, "seed", seed_default)),
        metric=_resolve(args.metric, cfg, "metric", "accuracy"),
    )


def _cmd_probe(args) -> int:
    cfg = _load_config(args.config)
    ckpt = _resolve(args.ckpt, cfg, "ckpt", None)
    train = _resolve(args.train, cfg, "train", None)
    test = _resolve(args.test, cfg, "test", None)
    out = _resolve(args.out, cfg, "out", None)
    for val, name in ((ckpt, "--ckpt"), (train, "--train"), (test, "--test"),
                      (out, "--out")):
        if val is None:
            raise ValidationError(f"probe needs {name}")
    _require_file(ckpt, "checkpoint")
    _require_file(train, "train embedding file")
    _require_file(test, "test embedding file")
    pc = _probe_config(args, cfg)
    model, _, examples_seen = load_checkpoint(ckpt)
    train_set = load_embeddings(train)
    test_set = load_embeddings(test)
    dec = train_probe(model.enc, train_set, pc)
    probe_score = evaluate_probe(model.enc, dec, test_set, pc.metric)
    reps = encode(model.enc, test_set.vectors)
    ids = np.asarray(model.dec.class_ids)
    pred = ids[np.argmax(reps @ model.dec.columns, axis=1)]
    original = float(np.mean(pred == test_set.labels))
    lines = ["checkpoint_id,examples_seen,task_id,probe_score,original_score"]
    lines.append(
        f"0,{int(examples_seen)},{test_set.task_id},"
        f"{repr(float(probe_score))},{repr(float(original))}"
    )
    _write_text(out, "\n".join(lines) + "\n")
    _sidecar(out, {"ckpt": str(ckpt), "train": str(train), "test": str(test),
                   "epochs": pc.epochs, "probe_lr": pc.learning_rate,
                   "probe_batch": pc.batch_size, "seed": pc.seed,
                   "metric": pc.metric})
    print(f"probe: {test_set.task_id} probe={probe_score:.4f} original={original:.4f}")
    return 0


def _load_task_files(paths: list[str]) -> list[EmbeddingSet]:
    sets = []
    for p in paths:
        _require_file(p, "task embedding file")
        s = load_embeddings(p)
        if s.labels is None:
            raise ValidationError(f"task file {p} has no labels")
        sets.append(s)
    return sets


def _cmd_train_seq(args) -> int:
    cfg = _load_config(args.config)
    out_dir = _resolve(args.out_dir, cfg, "out_dir", None)
    if out_dir is None:
        raise ValidationError("train-seq needs --out-dir (or out_dir in config)")
    seed = _resolve(args.seed, cfg, "seed", None)
    scenario = cfg.get("scenario", {})
    t_start = time.time()
    if "tasks" in scenario:
        trains = _load_task_files(scenario["tasks"])
        tests = _load_task_files(scenario.get("tests", [])) or None
        defaults = {}
    elif "kind" in scenario:
        scn = two_task_scenario(
            scenario["kind"],
            seed=int(scenario.get("seed", 9)),
            n_train=int(scenario.get("n_train", 15000)),
            n_test=int(scenario.get("n_test", 2000)),
        )
        trains, tests, defaults = list(scn.trains), list(scn.tests), scn.settings
    else:
        raise ValidationError("config needs scenario.tasks or scenario.kind")
    if seed is None:
        seed = cfg.get("seed", defaults.get("seed", 0))
    seed = int(seed)
    schedule_cfg = _resolve(args.schedule, cfg, "schedule", "seq")
    if schedule_cfg == "seq":
        schedule = ReplaySchedule.seq()
    elif isinstance(schedule_cfg, str):
        # flag form: interval:rate
        parts = schedule_cfg.split(":")
        if len(parts) != 2:
            raise ValidationError("schedule flag must be 'seq' or INTERVAL:RATE")
        schedule = ReplaySchedule(interval=int(parts[0]), rate=float(parts[1]))
    else:
        schedule = ReplaySchedule(
            interval=int(schedule_cfg["interval"]), rate=float(schedule_cfg["rate"])
        )
    gamma = float(_resolve(args.gamma, cfg, "gamma", defaults.get("gamma", 0.01)))
    cadence = int(_resolve(args.cadence, cfg, "cadence", defaults.get("cadence", 5000)))
    batch = int(_resolve(args.batch, cfg, "batch", defaults.get("batch", 32)))
    lr = float(_resolve(args.lr, cfg, "lr", defaults.get("lr", 3e-5)))
    hidden = int(_resolve(args.hidden, cfg, "hidden", defaults.get("hidden", 32)))
    d_rep = int(_resolve(args.d_rep, cfg, "d_rep", defaults.get("d_rep", 8)))
    epochs_per_task = int(cfg.get("epochs_per_task", 1))
    snapshots = bool(cfg.get("record_replay_snapshots", not schedule.is_seq))

    d_in = trains[0].d
    class_ids = sorted(
        {int(c) for t in trains for c in np.unique(t.labels).tolist()}
    )
    model = Model(
        init_encoder(d_in, hidden, d_rep, seed=seed),
        init_decoder(d_rep, class_ids, seed=seed + 1),
    )
    buf = MemoryBuffer(gamma, seed=seed + 2)
    os.makedirs(out_dir, exist_ok=True)
    final, log = sequential_train(
        trains, model, schedule, CheckpointPlan(cadence=cadence, batch_size=batch),
        buf, out_dir=out_dir, epochs_per_task=epochs_per_task, learning_rate=lr,
        seed=seed + 3, record_replay_snapshots=snapshots,
    )
    resolved = {
        "scenario": scenario, "schedule": ("seq" if schedule.is_seq else
                                           {"interval": schedule.interval,
                                            "rate": schedule.rate}),
        "gamma": gamma, "cadence": cadence, "batch": batch, "lr": lr,
        "hidden": hidden, "d_rep": d_rep, "seed": seed,
        "epochs_per_task": epochs_per_task, "out_dir": str(out_dir),
        "record_replay_snapshots": snapshots,
    }
    _write_json(os.path.join(out_dir, "run_manifest.json"),
                {"config": resolved, "wall_time_s": time.time() - t_start,
                 "finished_unix": time.time()})
    summary = []
    eval_sets = tests if tests else trains
    for s in eval_sets:
        reps = encode(final.enc, s.vectors)
        ids = np.asarray(final.dec.class_ids)
        pred = ids[np.argmax(reps @ final.dec.columns, axis=1)]
        summary.append(f"{s.task_id}={float(np.mean(pred == s.labels)):.4f}")
    print(
        f"train-seq: {len(trains)} tasks, {len(log.checkpoints)} checkpoints, "
        f"{len(log.replay_events)} replay events; final " + " ".join(summary)
    )
    return 0


def _parse_task_pairs(pairs: list[str]) -> list[tuple[str, object, object]]:
    tasks = []
    for item in pairs:
        parts = item.split(":")
        if len(parts) != 2:
            raise ValidationError(f"--tasks entries must be TRAIN:TEST, got {item!r}")
        _require_file(parts[0], "train embedding file")
        _require_file(parts[1], "test embedding file")
        train_set = load_embeddings(parts[0])
        test_set = load_embeddings(parts[1])
        tasks.append((train_set.task_id, train_set, test_set))
    return tasks


def _cmd_timeline(args) -> int:
    cfg = _load_config(args.config)
    run_dir = _resolve(args.run_dir, cfg, "run_dir", None)
    out = _resolve(args.out, cfg, "out", None)
    task_pairs = args.tasks if args.tasks else cfg.get("tasks")
    if run_dir is None or out is None or not task_pairs:
        raise ValidationError("timeline needs --run-dir, --tasks and --out")
    runlog_path = os.path.join(run_dir, "runlog.json")
    _require_file(runlog_path, "run log")
    run = RunLog.load(runlog_path)
    tasks = _parse_task_pairs(list(task_pairs))
    pc = _probe_config(args, cfg)
    tl = probe_timeline(run, tasks, pc)
    _write_text(out, tl.csv())
    _sidecar(out, {"run_dir": str(run_dir), "tasks": list(task_pairs),
                   "probe": tl.config})
    print(f"timeline: {len(tl.rows)} cells ({len(run.checkpoints)} checkpoints x "
          f"{len(tasks)} tasks) -> {out}")
    return 0


def _cmd_metrics_topo(args) -> int:
    cfg = _load_config(args.config)
    before = _resolve(args.before, cfg, "before", None)
    after = _resolve(args.after, cfg, "after", None)
    out = _resolve(args.out, cfg, "out", None)
    if before is None or after is None or out is None:
        raise ValidationError("metrics topo needs --before, --after, --out")
    _require_file(before, "before embedding file")
    _require_file(after, "after embedding file")
    n_list = [int(x) for x in
              str(_resolve(args.neighbors, cfg, "neighbors", "10")).split(",")]
    set_b = load_embeddings(before)
    set_a = load_embeddings(after)
    if set_b.n != set_a.n:
        raise ValidationError("before/after sets must be row-aligned")
    report = TopoReport(config={"before": str(before), "after": str(after),
                                "neighbors": n_list})
    if set_b.labels is None:
        class_ids = [None]
    else:
        class_ids = sorted(int(c) for c in np.unique(set_b.labels))
    for cid in class_ids:
        if cid is None:
            xb, xa = set_b.vectors, set_a.vectors
        else:
            sel = set_b.labels == cid
            xb, xa = set_b.vectors[sel], set_a.vectors[sel]
        cone_after = fit_cone(xa, ConeFitConfig())
        for n in n_list:
            val = topo_pearson(xb, xa, cone_after, n)
            report.add(-1 if cid is None else cid, n, val)
    _write_text(out, report.csv())
    _sidecar(out, report.config)
    print(f"metrics topo: {len(report.rows)} rows -> {out}")
    return 0


def _cmd_metrics_rotation(args) -> int:
    cfg = _load_config(args.config)
    run_dir = _resolve(args.run_dir, cfg, "run_dir", None)
    old_path = _resolve(args.old_task, cfg, "old_task", None)
    out = _resolve(args.out, cfg, "out", None)
    if run_dir is None or old_path is None or out is None:
        raise ValidationError("metrics rotation needs --run-dir, --old-task, --out")
    runlog_path = os.path.join(run_dir, "runlog.json")
    _require_file(runlog_path, "run log")
    _require_file(old_path, "old-task embedding file")
    max_per_class = int(_resolve(args.max_per_class, cfg, "max_per_class", 2000))
    run = RunLog.load(runlog_path)
    old = load_embeddings(old_path)
    if old.labels is None:
        raise ValidationError("old-task file needs labels")
    report = RotationReport(config={"run_dir": str(run_dir),
                                    "old_task": str(old_path),
                                    "max_per_class": max_per_class})
    old_ids = sorted(int(c) for c in np.unique(old.labels))
    fit_cfg = ConeFitConfig()
    for ev in run.replay_events:
        if ev["task_id"] == old.task_id:
            continue  # rotation is about events after the old task finished
        if ev.get("pre_path") is None:
            raise ValidationError(
                "run log has no replay snapshots; train with "
                "record_replay_snapshots enabled"
            )
        pre, _, _ = load_checkpoint(ev["pre_path"])
        post, _, _ = load_checkpoint(ev["post_path"])
        for cid in old_ids:
            x = old.vectors[old.labels == cid][:max_per_class]
            cone_b = fit_cone(encode(pre.enc, x), fit_cfg)
            cone_a = fit_cone(encode(post.enc, x), fit_cfg)
            col = list(pre.dec.class_ids).index(cid)
            w_pre = pre.dec.columns[:, col]
            report.add(int(ev["event"]), cid, rotation_delta(cone_b, cone_a, w_pre))
            report.add_drift(int(ev["event"]), cid,
                             decoder_drift(w_pre, post.dec.columns[:, col]))
    _write_text(out, report.csv())
    drift_lines = ["event,class,drift"]
    for r in report.drifts:
        drift_lines.append(f"{r['event']},{r['class']},{repr(float(r['angle']))}")
    _write_text(str(out) + ".drift.csv", "\n".join(drift_lines) + "\n")
    _sidecar(out, report.config)
    print(f"metrics rotation: {len(report.rows)} rows -> {out}")
    return 0


def _cmd_cosdist(args) -> int:
    cfg = _load_config(args.config)
    a_path = _resolve(args.a, cfg, "a", None)
    b_path = _resolve(args.b, cfg, "b", None)
    out = _resolve(args.out, cfg, "out", None)
    if a_path is None or b_path is None or out is None:
        raise ValidationError("cosdist needs --a, --b, --out")
    _require_file(a_path, "embedding file")
    _require_file(b_path, "embedding file")
    samples = int(_resolve(args.samples, cfg, "samples", 100000))
    bins = int(_resolve(args.bins, cfg, "bins", 100))
    seed = int(_resolve(args.seed, cfg, "seed", 0))
    set_a = load_embeddings(a_path)
    set_b = load_embeddings(b_path)
    hist = cosine_pair_distribution(set_a.vectors, set_b.vectors,
                                    samples=samples, bins=bins, seed=seed)
    _write_text(out, histogram_csv(hist))
    _sidecar(out, {"a": str(a_path), "b": str(b_path), "samples": samples,
                   "bins": bins, "seed": seed})
    lo = hist.bin_edges[np.flatnonzero(hist.counts)[0]] if hist.counts.any() else 0.0
    print(f"cosdist: {samples} pairs, lowest occupied bin edge {float(lo):.4f}")
    return 0


# ---------------------------------------------------------------- wiring


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the contract wants 1
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _build_parser() -> argparse.ArgumentParser:
    top = _Parser(prog="repcone", description=__doc__)
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", parents=[], help="write scenario EMBV1 files")
    p.add_argument("--config")
    p.add_argument("--kind", choices=["lean", "xor"])
    p.add_argument("--seed", type=int)
    p.add_argument("--n-train", type=int, dest="n_train")
    p.add_argument("--n-test", type=int, dest="n_test")
    p.add_argument("--out-dir", dest="out_dir")
    p.set_defaults(func=_cmd_gen_synthetic)

    p = sub.add_parser("fit-cone", help="fit a minimal enclosing cone to one class")
    p.add_argument("--config")
    p.add_argument("--in", dest="in_path")
    p.add_argument("--class", dest="class_id", type=int)
    p.add_argument("--coverage", type=float)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_fit_cone)

    def probe_flags(p):
        p.add_argument("--epochs", type=int)
        p.add_argument("--probe-lr", dest="probe_lr", type=float)
        p.add_argument("--probe-batch", dest="probe_batch", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--metric", choices=["accuracy", "span_f1"])

    p = sub.add_parser("probe", help="probe one checkpoint on one task")
    p.add_argument("--config")
    p.add_argument("--ckpt")
    p.add_argument("--train")
    p.add_argument("--test")
    p.add_argument("--out")
    probe_flags(p)
    p.set_defaults(func=_cmd_probe)

    p = sub.add_parser("train-seq", help="sequential/replay training run")
    p.add_argument("--config")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--schedule", help="'seq' or INTERVAL:RATE")
    p.add_argument("--gamma", type=float)
    p.add_argument("--cadence", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--hidden", type=int)
    p.add_argument("--d-rep", dest="d_rep", type=int)
    p.set_defaults(func=_cmd_train_seq)

    p = sub.add_parser("timeline", help="probe every checkpoint x task")
    p.add_argument("--config")
    p.add_argument("--run-dir", dest="run_dir")
    p.add_argument("--tasks", nargs="+", help="TRAIN:TEST file pairs")
    p.add_argument("--out")
    probe_flags(p)
    p.set_defaults(func=_cmd_timeline)

    p = sub.add_parser("metrics", help="topology / rotation reports")
    msub = p.add_subparsers(dest="metric_command", required=True)

    m = msub.add_parser("topo", help="neighborhood-order correlation")
    m.add_argument("--config")
    m.add_argument("--before")
    m.add_argument("--after")
    m.add_argument("--neighbors", help="comma-separated n values")
    m.add_argument("--out")
    m.set_defaults(func=_cmd_metrics_topo)

    m = msub.add_parser("rotation", help="axis-vs-decoder rotation per replay event")
    m.add_argument("--config")
    m.add_argument("--run-dir", dest="run_dir")
    m.add_argument("--old-task", dest="old_task")
    m.add_argument("--max-per-class", dest="max_per_class", type=int)
    m.add_argument("--out")
    m.set_defaults(func=_cmd_metrics_rotation)

    p = sub.add_parser("cosdist", help="cross-set cosine histogram")
    p.add_argument("--config")
    p.add_argument("--a")
    p.add_argument("--b")
    p.add_argument("--samples", type=int)
    p.add_argument("--bins", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_cosdist)

    return top


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except (NonFiniteGradientError, UndefinedCorrelationError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    except RepconeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
