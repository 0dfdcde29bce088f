"""Command-line entry point: ``coverap <command> [options]``.

Every command writes its outputs plus one ``manifest.json`` into ``--out``.
Exit codes: 0 ok, 2 usage, 3 missing input, 4 invalid data, 5 training
diverged, 6 scene rejected by synchronization, 1 anything else.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_MISSING, EXIT_INVALID, EXIT_DIVERGED, EXIT_SYNC = range(7)

DEFAULTS = {
    "seed": 0,
    "scenes": 1,
    "frames": 600,
    "fill": False,
    "variant": "fused_rear",
    "thresholds": "0.1:0.9:0.1",
    "epochs": 600,
    "batch": 8,
    "lr": 5e-4,
    "split": "test",
    "no_intensity": False,
}


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_ERROR):
        super().__init__(message)
        self.code = code


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: Optional[int]
    inputs: list
    outputs: list = field(default_factory=list)
    started: str = ""
    finished: str = ""
    input_hash: str = ""

    def write(self, out_dir: Path) -> Path:
        path = Path(out_dir) / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=1, sort_keys=True))
        return path


def _stamp() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


def content_hash(paths: Sequence[Path]) -> str:
    """SHA-1 over git-style blob hashes of every input file, in sorted path order."""
    files = []
    for p in paths:
        p = Path(p)
        files.extend(sorted(q for q in p.rglob("*") if q.is_file()) if p.is_dir() else [p])
    outer = hashlib.sha1()
    for f in sorted(set(files)):
        data = f.read_bytes()
        blob = hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()
        outer.update(f"{blob} {f.name}\n".encode())
    return outer.hexdigest()


def command_defaults(command: str) -> dict:
    """Built-in defaults; ``benchmark`` trains with the shorter benchmark recipe."""
    if command != "benchmark":
        return DEFAULTS
    from .benchmark import BENCH_CONFIG
    return {**DEFAULTS, "epochs": BENCH_CONFIG.epochs, "batch": BENCH_CONFIG.batch_size,
            "lr": BENCH_CONFIG.learning_rate}


def resolve_config(args: argparse.Namespace, keys: Sequence[str]) -> dict:
    """Flag, then ``--config`` JSON, then built-in default."""
    defaults = command_defaults(getattr(args, "command", ""))
    from_file = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise CliError(f"config file {path} not found", EXIT_MISSING)
        try:
            from_file = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise CliError(f"config file {path}: {exc}", EXIT_INVALID) from exc
    out = {}
    for k in keys:
        flag = getattr(args, k, None)
        if flag is not None and flag is not False:
            out[k] = flag
        elif k in from_file:
            out[k] = from_file[k]
        else:
            out[k] = defaults[k]
    return out


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("COVERAP_THREADS", "1")))
    except ValueError:
        raise CliError("COVERAP_THREADS must be an integer", EXIT_USAGE)


def _need(path: Path, what: str) -> Path:
    path = Path(path)
    if not path.exists():
        raise CliError(f"{what} {path} not found", EXIT_MISSING)
    return path


def _load_scenes(paths: Sequence[str]) -> list:
    from .dataset import read_scene
    return [read_scene(_need(Path(p), "scene directory")) for p in paths]


# ---------------------------------------------------------------------------
# commands


def _simulate_one(job: tuple):
    from .benchmark import scene_seed
    from .dataset import synth_scenario, write_scene
    seed, j, frames, fill, out = job
    bundle = synth_scenario(scene_seed(seed, j), n_frames=frames, scene_id=str(j), fill=fill)
    return str(write_scene(bundle, Path(out)))


def cmd_simulate(args, cfg: dict, out: Path) -> tuple:
    jobs = [(cfg["seed"], j, cfg["frames"], cfg["fill"], str(out)) for j in range(cfg["scenes"])]
    workers = min(_threads(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            dirs = list(pool.map(_simulate_one, jobs))
    else:
        dirs = [_simulate_one(j) for j in jobs]
    return [], dirs


def cmd_process(args, cfg: dict, out: Path) -> tuple:
    from .radar_dsp import DataCube, RadarConfig, process_cube
    src = _need(Path(args.cubes), "cube directory")
    files = sorted(src.glob("*.npy"))
    if not files:
        raise CliError(f"no .npy cubes in {src}", EXIT_MISSING)
    rcfg = RadarConfig()
    outputs = []
    for i, f in enumerate(files):
        cube = DataCube(np.load(f), i * rcfg.frame_period_ms)
        try:
            cube.check(rcfg)
        except ValueError as exc:
            raise CliError(f"{f}: {exc}", EXIT_INVALID) from exc
        path = out / f"{f.stem}.csv"
        path.write_text(process_cube(cube, rcfg).to_csv())
        outputs.append(str(path))
    return [src], outputs


def cmd_sync(args, cfg: dict, out: Path) -> tuple:
    from .sync_align import align_scene, drift_report_json, read_tracks
    path = _need(Path(args.tracks), "tracks file")
    ego, asst = read_tracks(path)
    shifts = align_scene(ego, asst, args.max_delay_ms)
    report = out / "drift_report.json"
    report.write_text(drift_report_json(shifts))
    return [path.parent], [str(report)]


def cmd_fuse(args, cfg: dict, out: Path) -> tuple:
    from .detector import variant_data
    from .radar_dsp import PointFrame
    (bundle,) = _load_scenes([args.scene])
    variant = cfg["variant"]
    if variant not in ("fused_rear", "fused_side"):
        raise CliError(f"fuse needs a fused variant, got {variant}", EXIT_USAGE)
    data = variant_data([bundle], variant)
    vdir = out / variant
    vdir.mkdir(exist_ok=True)
    for i, (p, m) in enumerate(zip(data.points, data.masks)):
        (vdir / f"frame_{i}.csv").write_text(PointFrame(int(bundle.timestamps[i]), p[m]).to_csv())
    gt = out / f"{variant}_ground_truth.json"
    gt.write_text(json.dumps([list(map(float, b)) for b in data.boxes], indent=1))
    return [Path(args.scene)], [str(vdir), str(gt)]


def _train_config(cfg: dict):
    from .nn.optim import TrainConfig
    return TrainConfig(epochs=int(cfg["epochs"]), batch_size=int(cfg["batch"]),
                       learning_rate=float(cfg["lr"]), seed=int(cfg["seed"]))


def cmd_train(args, cfg: dict, out: Path) -> tuple:
    from .detector import save_checkpoint, train
    bundles = _load_scenes(args.scene)
    tcfg = _train_config(cfg)
    log = None
    if args.verbose:
        def log(row):
            print(json.dumps(row), file=sys.stderr)
    result = train(bundles, cfg["variant"], tcfg, use_intensity=not cfg["no_intensity"], log=log)
    ckpt = out / "checkpoint.json"
    save_checkpoint(result, ckpt)
    metrics = out / "metrics.json"
    metrics.write_text(result.metrics_json())
    return [Path(s) for s in args.scene], [str(ckpt), str(metrics)]


def cmd_eval(args, cfg: dict, out: Path) -> tuple:
    from .boxes import BBox7
    from .detector import load_checkpoint, predict, predict_late, variant_data
    from .eval_geom import EvalReport, parse_thresholds, rotated_iou_3d
    ckpt = _need(Path(args.checkpoint), "checkpoint")
    model, meta, members = load_checkpoint(ckpt)
    bundles = _load_scenes(args.scene)
    split = cfg["split"]
    split = None if split == "all" else split
    if members:
        boxes, _, data = predict_late(model, members["ego"], members["assistant"], bundles,
                                      "rear" if meta["variant"] == "late" else "side", split)
    else:
        data = variant_data(bundles, meta["variant"], split)
        boxes, _ = predict(model, data)
    ious = [rotated_iou_3d(BBox7.from_array(p), BBox7.from_array(g))
            for p, g in zip(boxes, data.boxes)]
    report = EvalReport(parse_thresholds(cfg["thresholds"]))
    name = args.name or meta["variant"]
    report.add(name, ious)
    csv_path, json_path = out / "report.csv", out / "report.json"
    csv_path.write_text(report.to_csv())
    json_path.write_text(report.to_json())
    return [ckpt, *[Path(s) for s in args.scene]], [str(csv_path), str(json_path)]


def cmd_plot(args, cfg: dict, out: Path) -> tuple:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from .eval_geom import EvalReport
    reports = [EvalReport.from_json(_need(Path(p), "report").read_text()) for p in args.report]
    fig, ax = plt.subplots(figsize=(5, 3.6))
    for rep in reports:
        for name, maps in rep.maps.items():
            ax.plot(rep.thresholds, maps, marker="o", label=name)
    ax.set_xlabel("IoU threshold")
    ax.set_ylabel("mAP")
    ax.set_ylim(0, 1.02)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = out / "map_curves.svg"
    plt.rcParams["svg.hashsalt"] = "coverap"
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return [Path(p) for p in args.report], [str(path)]


def cmd_benchmark(args, cfg: dict, out: Path) -> tuple:
    from .benchmark import benchmark_scenes, run_benchmark
    from .eval_geom import parse_thresholds
    bundles = benchmark_scenes(cfg["seed"], cache_dir=out / "scenes")
    report = run_benchmark(bundles, _train_config(cfg), parse_thresholds(cfg["thresholds"]),
                           log=lambda name, maps, ep: print(name, np.round(maps, 4), file=sys.stderr))
    csv_path, json_path = out / "benchmark.csv", out / "benchmark.json"
    csv_path.write_text(report.to_csv())
    json_path.write_text(report.to_json())
    return [], [str(csv_path), str(json_path)]


COMMANDS = {
    "simulate": (cmd_simulate, ("seed", "scenes", "frames", "fill")),
    "process": (cmd_process, ()),
    "sync": (cmd_sync, ()),
    "fuse": (cmd_fuse, ("variant",)),
    "train": (cmd_train, ("seed", "variant", "epochs", "batch", "lr", "no_intensity")),
    "eval": (cmd_eval, ("thresholds", "split")),
    "plot": (cmd_plot, ()),
    "benchmark": (cmd_benchmark, ("seed", "epochs", "batch", "lr", "thresholds")),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coverap", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--config", help="JSON file with option defaults")
        return sp

    sp = add("simulate", "render synthetic scenes into scene directories")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--scenes", type=int)
    sp.add_argument("--frames", type=int)
    sp.add_argument("--fill", action="store_true", help="stretch the manoeuvre over the scene")

    sp = add("process", "turn raw .npy data cubes into point CSVs")
    sp.add_argument("--cubes", required=True)

    sp = add("sync", "estimate per-track drift corrections")
    sp.add_argument("--tracks", required=True, help="tracks.json")
    sp.add_argument("--max-delay-ms", type=int, default=100)

    sp = add("fuse", "write middle-fused point frames for a scene")
    sp.add_argument("--scene", required=True)
    sp.add_argument("--variant", choices=("fused_rear", "fused_side"))

    sp = add("train", "train a detector variant")
    sp.add_argument("--scene", action="append", required=True)
    sp.add_argument("--variant", choices=("rear", "side", "fused_rear", "fused_side", "late"))
    sp.add_argument("--seed", type=int)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--batch", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--no-intensity", action="store_true")
    sp.add_argument("--verbose", action="store_true")

    sp = add("eval", "score a checkpoint on a split")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--scene", action="append", required=True)
    sp.add_argument("--split", choices=("train", "val", "test", "all"))
    sp.add_argument("--thresholds")
    sp.add_argument("--name", help="column name in the report")

    sp = add("plot", "draw mAP-vs-threshold curves as SVG")
    sp.add_argument("--report", action="append", required=True)

    sp = add("benchmark", "train and score every variant on synthetic scenes")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--batch", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--thresholds")
    return p


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE

    from .dataset import SceneFormatError
    from .detector import TrainingDivergence
    from .sync_align import SyncError

    fn, keys = COMMANDS[args.command]
    started = _stamp()
    try:
        cfg = resolve_config(args, keys)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        inputs, outputs = fn(args, cfg, out)
    except CliError as exc:
        print(f"coverap {args.command}: {exc}", file=sys.stderr)
        return exc.code
    except FileNotFoundError as exc:
        print(f"coverap {args.command}: missing input: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except SyncError as exc:
        print(f"coverap {args.command}: scene rejected: {exc}", file=sys.stderr)
        return EXIT_SYNC
    except TrainingDivergence as exc:
        print(f"coverap {args.command}: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (SceneFormatError, ValueError, KeyError) as exc:
        print(f"coverap {args.command}: invalid data: {exc}", file=sys.stderr)
        return EXIT_INVALID
    manifest = RunManifest(args.command, cfg, cfg.get("seed"), [str(p) for p in inputs],
                           [str(o) for o in outputs], started, _stamp(), content_hash(inputs))
    manifest.write(out)
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
