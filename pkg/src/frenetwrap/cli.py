"""Command-line harness: generate | perturb | predict | evaluate |
train-scorer | export-frenet | plot.

Every command is deterministic given its flags and seed, and every output
directory receives a ``manifest.json`` with the fully resolved
configuration.  A simple ``key=value`` config file can preset any flag;
explicit flags win.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import synthgen
from .aggregation import AggregationConfig, PredictionSet, aggregate
from .attack import DIRECTIONS, AttackSpec, apply_attack
from .centerlines import enumerate_sequences, assign_gt_centerline
from .geometry import scene_to_frenet
from .metrics import METRIC_KEYS, aggregate_rows, evaluate_scene
from .plot import render_svg
from .predictors import CAPredictor, ExternalPredictor, predict_cartesian, wrap_frenet
from .scene import Scene, Trajectory, load_scene, save_scene, scene_to_dict
from .scorer import CenterlineScorer, build_training_set


def _load_config(path) -> dict:
    cfg = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            cfg[key.strip().replace("-", "_")] = value.strip()
    return cfg


def _scene_files(directory) -> list:
    files = sorted(Path(directory).glob("*.json"))
    return [f for f in files if not f.name.endswith("manifest.json")
            and not f.name.endswith(".pred.json")]


def _write_manifest(out_dir, kind: str, config: dict, entries: list) -> None:
    doc = {"kind": kind, "config": config, "entries": entries}
    with open(Path(out_dir) / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_mix(text: str) -> dict:
    mix = {}
    for part in text.split(","):
        name, _, weight = part.partition("=")
        mix[name.strip()] = float(weight) if weight else 1.0
    return mix


# ---------------------------------------------------------------- generate

def cmd_generate(args) -> int:
    params = synthgen.GenParams(
        speed=args.speed, noise=args.noise, radius=args.radius,
        fork_angle_deg=args.fork_angle, drift=args.drift,
    )
    synthgen.generate_corpus(_parse_mix(args.mix), args.n, args.seed,
                             args.out, params)
    print(f"generated {args.n} scenes in {args.out}")
    return 0


# ---------------------------------------------------------------- perturb

def _perturb_one(task) -> list:
    in_path, out_dir, family, b, shape = task
    scene = load_scene(in_path)
    entries = []
    for direction in DIRECTIONS:
        spec = AttackSpec(family=family, direction=direction, b=b, **shape)
        perturbed = apply_attack(scene, spec)
        out_id = f"{scene.scene_id}__{family}_{direction}"
        out_scene = Scene(out_id, perturbed.scene.agents, perturbed.scene.lanes,
                          perturbed.scene.tv_id, perturbed.scene.dt,
                          perturbed.scene.gt_future, perturbed.scene.frame)
        fname = f"{out_id}.json"
        save_scene(out_scene, Path(out_dir) / fname)
        entries.append({
            "file": fname, "scene_id": out_id,
            "source_scene_id": scene.scene_id, "source_file": Path(in_path).name,
            "direction": direction, "speed_scale": perturbed.speed_scale,
            "attack": spec.to_dict(),
        })
    return entries


def cmd_perturb(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    shape = {}
    if args.amplitude is not None:
        shape["amplitude"] = args.amplitude
    if args.wavelength is not None:
        shape["wavelength"] = args.wavelength
    if args.c is not None:
        shape["c"] = args.c
    if args.u_sat is not None:
        shape["u_sat"] = args.u_sat

    files = _scene_files(args.in_dir)
    if not files:
        print(f"no scene files in {args.in_dir}", file=sys.stderr)
        return 1
    tasks = [(str(f), str(out_dir), args.attack, args.b, shape) for f in files]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_perturb_one, tasks))
    else:
        results = [_perturb_one(t) for t in tasks]
    entries = [e for batch in results for e in batch]
    entries.sort(key=lambda e: e["scene_id"])

    _self_check_onset(files[:10], entries, out_dir)
    config = {"attack": args.attack, "b": args.b, **shape, "in_dir": str(args.in_dir)}
    _write_manifest(out_dir, "perturbed", config, entries)
    print(f"perturbed {len(files)} scenes -> {len(entries)} files in {out_dir}")
    return 0


def _self_check_onset(sample_files, entries, out_dir) -> None:
    """Verify on a few scenes that lane points before the onset kept their bits."""
    by_source = {}
    for e in entries:
        by_source.setdefault(e["source_file"], []).append(e)
    for f in sample_files:
        original = load_scene(f)
        tv = original.tv.current
        cos_h, sin_h = np.cos(tv[3]), np.sin(tv[3])
        for e in by_source.get(Path(f).name, []):
            perturbed = load_scene(Path(out_dir) / e["file"])
            b = e["attack"]["b"]
            for lane_o, lane_p in zip(original.lanes, perturbed.lanes):
                rel = lane_o.points - tv[1:3]
                ahead = rel[:, 0] * cos_h + rel[:, 1] * sin_h
                keep = ahead <= b
                if not np.array_equal(lane_o.points[keep], lane_p.points[keep]):
                    raise AssertionError(
                        f"onset invariance violated for {e['scene_id']}")


# ---------------------------------------------------------------- predict

def _make_predictor(model: str):
    if model == "ca":
        return None
    if model == "ca-sd":
        return CAPredictor()
    if model.startswith("external:"):
        return ExternalPredictor(model[len("external:"):].split())
    raise SystemExit(f"unknown model {model!r}")


def _predict_scene(scene, model, predictor, config, scorer):
    if model == "ca":
        candidates = predict_cartesian(scene)
        return aggregate(scene, candidates, config), None
    candidates, seqs = wrap_frenet(scene, predictor)
    return aggregate(scene, candidates, config, seqs=seqs, scorer=scorer), seqs


def cmd_predict(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    k_hat = 0 if args.khat == "all" else int(args.khat)
    strategy = "all" if args.khat == "all" else args.agg
    config = AggregationConfig(strategy=strategy, k_hat=max(k_hat, 1),
                               nms_radius=args.nms_radius,
                               prior_source=args.prior, seed=args.seed)
    scorer = CenterlineScorer.load(args.scorer) if args.scorer else None
    predictor = _make_predictor(args.model)

    entries, failures = [], []
    try:
        for f in _scene_files(args.in_dir):
            scene = load_scene(f)
            try:
                pred_set, _ = _predict_scene(scene, args.model, predictor,
                                             config, scorer)
            except Exception as exc:  # per-scene failures are enumerated
                failures.append((scene.scene_id, str(exc)))
                continue
            doc = {
                "scene_id": scene.scene_id,
                "trajectories": [t.waypoints.tolist()
                                 for t in pred_set.trajectories],
                "probs": [t.probability for t in pred_set.trajectories],
                "source_centerlines": [t.source_centerline
                                       for t in pred_set.trajectories],
            }
            fname = f"{scene.scene_id}.pred.json"
            with open(out_dir / fname, "w", encoding="utf-8") as fh:
                json.dump(doc, fh)
            entries.append({"file": fname, "scene_id": scene.scene_id,
                            "k": len(pred_set.trajectories)})
    finally:
        if predictor is not None:
            predictor.close()

    config_doc = {"model": args.model, "agg": args.agg, "khat": args.khat,
                  "prior": args.prior, "nms_radius": args.nms_radius,
                  "scorer": args.scorer, "seed": args.seed}
    _write_manifest(out_dir, "predictions", config_doc, entries)
    for scene_id, msg in failures:
        print(f"FAILED {scene_id}: {msg}", file=sys.stderr)
    print(f"predicted {len(entries)} scenes in {out_dir}")
    return 1 if failures else 0


# ---------------------------------------------------------------- evaluate

def _load_prediction(path) -> PredictionSet:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    trajs = tuple(
        Trajectory(np.asarray(w, dtype=float), float(p), src)
        for w, p, src in zip(doc["trajectories"], doc["probs"],
                             doc["source_centerlines"])
    )
    return PredictionSet(trajs)


def cmd_evaluate(args) -> int:
    scenes_dir = Path(args.scenes)
    preds_dir = Path(args.preds)
    manifest_path = scenes_dir / "manifest.json"
    perturb_manifest = None
    if manifest_path.exists():
        with open(manifest_path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        if doc.get("kind") == "perturbed":
            perturb_manifest = doc

    rows = []
    for f in _scene_files(scenes_dir):
        scene = load_scene(f)
        pred_file = preds_dir / f"{scene.scene_id}.pred.json"
        if not pred_file.exists():
            print(f"no prediction for scene {scene.scene_id}", file=sys.stderr)
            return 1
        pred = _load_prediction(pred_file)
        rows.append(evaluate_scene(pred, scene.gt_future, scene.lanes,
                                   scene_id=scene.scene_id))

    if perturb_manifest is not None:
        meta = {e["scene_id"]: e for e in perturb_manifest["entries"]}
        for row in rows:
            e = meta.get(row["scene_id"], {})
            row["attack"] = e.get("attack", {}).get("family")
            row["direction"] = e.get("direction")
            row["speed_scale"] = e.get("speed_scale")
            row["source_scene_id"] = e.get("source_scene_id")
        if args.worst_of_directions:
            rows = _worst_rows(rows)

    report = {"rows": rows, "aggregate": aggregate_rows(rows)}
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if args.csv:
        _write_csv(args.csv, rows)
    agg = report["aggregate"]
    print("  ".join(f"{k}={agg[k]:.4f}" for k in METRIC_KEYS))
    return 0


def _worst_rows(rows) -> list:
    """Collapse left/right rows of the same source scene + attack family."""
    groups = {}
    for row in rows:
        key = (row.get("source_scene_id") or row["scene_id"], row.get("attack"))
        groups.setdefault(key, []).append(row)
    out = []
    for (source, family), group in sorted(groups.items(),
                                          key=lambda kv: (str(kv[0][0]), str(kv[0][1]))):
        worst = {"scene_id": source, "attack": family, "direction": "worst"}
        for key in METRIC_KEYS:
            values = [g[key] for g in group]
            worst[key] = min(values) if key == "mied" else max(values)
        worst["speed_scale"] = min(g.get("speed_scale") or 1.0 for g in group)
        out.append(worst)
    return out


def _write_csv(path, rows) -> None:
    keys = sorted({k for row in rows for k in row})
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys)
        writer.writeheader()
        writer.writerows(rows)


# ---------------------------------------------------------------- train-scorer

def cmd_train_scorer(args) -> int:
    scenes = [load_scene(f) for f in _scene_files(args.corpus)]
    samples = build_training_set(scenes)
    if not samples:
        print("warning: corpus has no multi-centerline scenes; "
              "nothing to train on", file=sys.stderr)
        return 1
    if len(samples) < len(scenes):
        print(f"note: {len(scenes) - len(samples)} scene(s) skipped "
              "(single centerline or no ground truth)", file=sys.stderr)
    model = CenterlineScorer(lr=args.lr, epochs=args.epochs,
                             batch_size=args.batch_size, seed=args.seed)
    model.fit(samples, callback=lambda e, l: print(f"epoch {e}: loss {l:.4f}"))
    model.save(args.out)
    print(f"saved scorer to {args.out} "
          f"(train accuracy {model.score(samples):.3f})")
    return 0


# ---------------------------------------------------------------- export-frenet

def cmd_export_frenet(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries, skipped = [], 0
    for f in _scene_files(args.in_dir):
        scene = load_scene(f)
        if scene.gt_future is None:
            skipped += 1
            continue
        seqs = enumerate_sequences(scene)
        gt_idx = assign_gt_centerline(scene, seqs)
        fscene = scene_to_frenet(scene, seqs[gt_idx].polyline, gt_idx)
        fname = f"{scene.scene_id}.frenet.json"
        with open(out_dir / fname, "w", encoding="utf-8") as fh:
            json.dump(scene_to_dict(fscene.scene), fh)
        entries.append({"file": fname, "scene_id": scene.scene_id,
                        "gt_centerline": gt_idx,
                        "lane_ids": list(seqs[gt_idx].lane_ids)})
    _write_manifest(out_dir, "frenet_samples",
                    {"in_dir": str(args.in_dir)}, entries)
    print(f"exported {len(entries)} scenes ({skipped} skipped without gt)")
    return 0


# ---------------------------------------------------------------- plot

def cmd_plot(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    preds_dir = Path(args.preds) if args.preds else None
    count = 0
    for f in _scene_files(args.in_dir):
        scene = load_scene(f)
        pred = None
        if preds_dir is not None:
            pred_file = preds_dir / f"{scene.scene_id}.pred.json"
            if pred_file.exists():
                pred = _load_prediction(pred_file)
        svg = render_svg(scene, pred)
        with open(out_dir / f"{scene.scene_id}.svg", "w", encoding="utf-8") as fh:
            fh.write(svg)
        count += 1
    print(f"plotted {count} scenes in {out_dir}")
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="frenetwrap",
        description="Frenet-frame wrapper toolkit and road-perturbation benchmark",
    )
    parser.add_argument("--config", help="key=value config file presetting flags")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("generate", help="write a synthetic scene corpus")
    common(p)
    p.add_argument("--mix", default="fork=0.4,curve=0.4,straight=0.2",
                   help="topology=weight list, e.g. fork=0.5,curve=0.5")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--speed", type=float, default=12.0)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--radius", type=float, default=40.0)
    p.add_argument("--fork-angle", type=float, default=30.0)
    p.add_argument("--drift", type=float, default=0.8)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("perturb", help="apply one attack family (both directions)")
    common(p)
    p.add_argument("--attack", required=True, choices=("smooth", "double", "ripple"))
    p.add_argument("--b", type=float, default=15.0)
    p.add_argument("--amplitude", type=float)
    p.add_argument("--wavelength", type=float)
    p.add_argument("--c", type=float)
    p.add_argument("--u-sat", type=float)
    p.add_argument("in_dir")
    p.add_argument("out_dir")
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("predict", help="run a predictor over a corpus")
    common(p)
    p.add_argument("--model", default="ca-sd",
                   help="ca | ca-sd | external:<command>")
    p.add_argument("--agg", default="greedy_sampling",
                   choices=("greedy_sampling", "lane_scoring", "kmeans",
                            "uniform", "privileged", "all"))
    p.add_argument("--khat", default="6", help="output set size, or 'all'")
    p.add_argument("--prior", default="uniform",
                   choices=("uniform", "scorer", "privileged"))
    p.add_argument("--nms-radius", type=float, default=1.0)
    p.add_argument("--scorer", help="scorer model file for the scorer prior")
    p.add_argument("in_dir")
    p.add_argument("out_dir")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score predictions against scenes")
    common(p)
    p.add_argument("--scenes", required=True)
    p.add_argument("--preds", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--csv")
    p.add_argument("--worst-of-directions", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("train-scorer", help="train the centerline scorer")
    common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--batch-size", type=int, default=128)
    p.set_defaults(func=cmd_train_scorer)

    p = sub.add_parser("export-frenet",
                       help="emit gt-frame training samples per scene")
    common(p)
    p.add_argument("in_dir")
    p.add_argument("out_dir")
    p.set_defaults(func=cmd_export_frenet)

    p = sub.add_parser("plot", help="render scenes (and predictions) as SVG")
    common(p)
    p.add_argument("--preds")
    p.add_argument("in_dir")
    p.add_argument("out_dir")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    if args.config:
        explicit = {a[2:].split("=")[0].replace("-", "_")
                    for a in argv if a.startswith("--")}
        for key, value in _load_config(args.config).items():
            if not hasattr(args, key) or key in explicit or key == "config":
                continue
            current = getattr(args, key)
            if isinstance(current, bool):
                setattr(args, key, value.lower() in ("1", "true", "yes"))
            elif current is not None:
                setattr(args, key, type(current)(value))
            else:
                setattr(args, key, value)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
