"""Scene construction: scripted ground truth, top-k framing, splits and synthetic scenes.

Scene directory layout::

    scene_<id>/rear/frame_<i>.csv      x,y,z,range,velocity,bearing,intensity
    scene_<id>/side/frame_<i>.csv
    scene_<id>/gps_offsets.csv         frame,dx,dy,dz (side -> rear)
    scene_<id>/ground_truth.json       one box per frame, rear-radar frame
    scene_<id>/splits.json
    scene_<id>/scene.json              timestamps, script, radar config
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .boxes import BBox7
from .radar_dsp import (PointFrame, PointTarget, RadarConfig, cube_to_heatmap,
                        extract_point_array, synth_if_cube)
from .sync_align import (GpsFix, RigidOffset, enu_to_ecef, geodetic_to_ecef,
                         interpolate_gps, match_nearest, offset_from_gps)

PHASE_KINDS = ("static", "forward", "pause", "backward")
VIEWS = ("rear", "side")
TOP_K = 70
SPLIT_RATIOS = (0.8, 0.1, 0.1)


@dataclass(frozen=True)
class MotionPhase:
    kind: str
    start_frame: int
    end_frame: int
    start_pos: tuple
    end_pos: tuple

    def __post_init__(self):
        if self.kind not in PHASE_KINDS:
            raise ValueError(f"unknown phase kind {self.kind!r}")
        if self.end_frame < self.start_frame:
            raise ValueError("phase ends before it starts")
        object.__setattr__(self, "start_pos", tuple(float(v) for v in self.start_pos))
        object.__setattr__(self, "end_pos", tuple(float(v) for v in self.end_pos))
        if self.kind in ("static", "pause") and self.start_pos != self.end_pos:
            raise ValueError(f"{self.kind} phase must not move")


@dataclass(frozen=True)
class MotionScript:
    phases: tuple
    dims: tuple  # (length, height, width)
    orientation: float = math.pi / 2
    bearing: float = 0.0

    def __post_init__(self):
        phases = tuple(p if isinstance(p, MotionPhase) else MotionPhase(**p) for p in self.phases)
        if not phases:
            raise ValueError("script has no phases")
        for a, b in zip(phases, phases[1:]):
            if b.start_frame != a.end_frame + 1:
                raise ValueError("phases must be contiguous and non-overlapping")
        object.__setattr__(self, "phases", phases)
        object.__setattr__(self, "dims", tuple(float(v) for v in self.dims))
        if min(self.dims) <= 0:
            raise ValueError("vehicle dimensions must be positive")

    @property
    def first_frame(self) -> int:
        return self.phases[0].start_frame

    @property
    def last_frame(self) -> int:
        return self.phases[-1].end_frame

    @property
    def n_frames(self) -> int:
        return self.last_frame - self.first_frame + 1

    def phase_at(self, frame: int) -> MotionPhase:
        for p in self.phases:
            if p.start_frame <= frame <= p.end_frame:
                return p
        raise ValueError(f"frame {frame} outside script coverage")

    def velocity_at(self, frame: int, frame_period_s: float) -> np.ndarray:
        """Centre velocity (m/s) while inside ``frame``'s phase."""
        p = self.phase_at(frame)
        span = p.end_frame - p.start_frame
        if span == 0:
            return np.zeros(3)
        return (np.array(p.end_pos) - np.array(p.start_pos)) / (span * frame_period_s)

    def onset_frame(self) -> Optional[int]:
        for p in self.phases:
            if p.kind in ("forward", "backward") and p.start_pos != p.end_pos:
                return p.start_frame
        return None

    def to_dict(self) -> dict:
        return {"phases": [asdict(p) for p in self.phases], "dims": list(self.dims),
                "orientation": self.orientation, "bearing": self.bearing}

    @classmethod
    def from_dict(cls, d: Mapping) -> "MotionScript":
        return cls(tuple(MotionPhase(**p) for p in d["phases"]), tuple(d["dims"]),
                   float(d.get("orientation", math.pi / 2)), float(d.get("bearing", 0.0)))


def interpolate_ground_truth(script: MotionScript, frame: int) -> BBox7:
    """Box for ``frame``: centre lerped inside its phase, size and yaw fixed."""
    p = script.phase_at(frame)
    span = p.end_frame - p.start_frame
    frac = 0.0 if span == 0 else (frame - p.start_frame) / span
    a, b = np.array(p.start_pos), np.array(p.end_pos)
    c = a + frac * (b - a)
    length, height, width = script.dims
    return BBox7(width, height, length, c[0], c[1], c[2], script.orientation)


@dataclass(frozen=True)
class SplitIndex:
    train: tuple
    val: tuple
    test: tuple

    def to_dict(self) -> dict:
        return {"train": list(self.train), "val": list(self.val), "test": list(self.test)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "SplitIndex":
        return cls(tuple(d["train"]), tuple(d["val"]), tuple(d["test"]))

    def subset(self, name: str) -> tuple:
        if name not in ("train", "val", "test"):
            raise ValueError(f"unknown split {name!r}")
        return getattr(self, name)


def split_sizes(n_frames: int) -> tuple:
    n_train = int(math.floor(SPLIT_RATIOS[0] * n_frames + 1e-9))
    n_val = int(math.floor(SPLIT_RATIOS[1] * n_frames + 1e-9))
    return n_train, n_val, n_frames - n_train - n_val


def make_splits(n_frames: int, seed: int = 0) -> SplitIndex:
    """Contiguous 80/10/10 blocks in temporal order.

    Blocks keep neighbouring frames out of different subsets, so the result
    depends only on ``n_frames``; ``seed`` is accepted for interface symmetry.
    """
    if n_frames < 10:
        raise ValueError(f"need at least 10 frames to split, got {n_frames}")
    n_train, n_val, _ = split_sizes(n_frames)
    idx = range(n_frames)
    return SplitIndex(tuple(idx[:n_train]), tuple(idx[n_train:n_train + n_val]),
                      tuple(idx[n_train + n_val:]))


def top_k_points(points: np.ndarray, k: int = TOP_K) -> tuple:
    """Zero-padded (k, 7) array of the k strongest points and its validity mask."""
    pts = np.asarray(points, dtype=float).reshape(-1, 7)
    if np.any(pts[:, 6] < 0):
        raise ValueError("negative intensity")
    order = np.argsort(-pts[:, 6], kind="stable")[:k]
    out = np.zeros((k, 7))
    out[: len(order)] = pts[order]
    mask = np.zeros(k, dtype=bool)
    mask[: len(order)] = True
    return out, mask


@dataclass
class SceneBundle:
    """Index-aligned views of one scene.

    ``points[view]`` is (F, k, 7) and ``masks[view]`` is (F, k). Offsets take
    side-radar coordinates into the rear-radar frame, in which the ground
    truth is expressed.
    """

    scene_id: str
    timestamps: np.ndarray
    points: dict
    masks: dict
    offsets: list
    ground_truth: list
    splits: SplitIndex
    script: Optional[MotionScript] = None
    cfg: RadarConfig = field(default_factory=RadarConfig)
    k: int = TOP_K

    def __post_init__(self):
        n = len(self.timestamps)
        for view in self.points:
            if len(self.points[view]) != n or len(self.masks[view]) != n:
                raise ValueError(f"view {view} length differs from the scene length {n}")
        if len(self.offsets) != n or len(self.ground_truth) != n:
            raise ValueError("offsets and ground truth must cover every frame")

    def __len__(self) -> int:
        return len(self.timestamps)

    def frame(self, view: str, i: int) -> PointFrame:
        return PointFrame(int(self.timestamps[i]), self.points[view][i][self.masks[view][i]])

    def gt_in(self, view: str, i: int) -> BBox7:
        """Ground-truth box for frame ``i`` expressed in ``view``'s sensor frame."""
        box = self.ground_truth[i]
        if view == "rear":
            return box
        if view == "side":
            inv = self.offsets[i].inverse()
            return box.transformed(inv.translation, inv.yaw)
        raise ValueError(f"unknown view {view!r}")

    def offset_into(self, ego: str, i: int) -> RigidOffset:
        """Offset taking the other view's points into ``ego``'s frame."""
        return self.offsets[i] if ego == "rear" else self.offsets[i].inverse()


def build_frames(raw_points: Mapping[str, Sequence], script: MotionScript, k: int = TOP_K,
                 timestamps: Optional[Sequence[int]] = None,
                 offsets: Optional[Sequence[RigidOffset]] = None, scene_id: str = "0",
                 cfg: Optional[RadarConfig] = None, seed: int = 0) -> SceneBundle:
    """Keep each frame's ``k`` strongest points and attach scripted ground truth.

    ``raw_points`` maps a view name to per-frame point arrays or
    :class:`PointFrame` objects; a bare sequence is taken as the rear view.
    """
    if not isinstance(raw_points, Mapping):
        raw_points = {"rear": raw_points}
    lengths = {len(v) for v in raw_points.values()}
    if not raw_points or lengths == {0}:
        raise ValueError("empty frame list")
    if len(lengths) != 1:
        raise ValueError("views have different frame counts")
    n = lengths.pop()
    pts, masks = {}, {}
    for view, frames in raw_points.items():
        arrays = [f.points if isinstance(f, PointFrame) else f for f in frames]
        packed = [top_k_points(a, k) for a in arrays]
        pts[view] = np.stack([p for p, _ in packed])
        masks[view] = np.stack([m for _, m in packed])
    if timestamps is None:
        first = next(iter(raw_points.values()))[0]
        ts0 = first.ts_ms if isinstance(first, PointFrame) else 0
        period = (cfg or RadarConfig()).frame_period_ms
        timestamps = [int(ts0 + i * period) for i in range(n)]
    gt = [interpolate_ground_truth(script, script.first_frame + i) for i in range(n)]
    return SceneBundle(
        scene_id=str(scene_id),
        timestamps=np.asarray(timestamps, dtype=np.int64),
        points=pts,
        masks=masks,
        offsets=list(offsets) if offsets is not None else [RigidOffset()] * n,
        ground_truth=gt,
        splits=make_splits(n, seed) if n >= 10 else SplitIndex(tuple(range(n)), (), ()),
        script=script,
        cfg=cfg or RadarConfig(),
        k=k,
    )


# ---------------------------------------------------------------------------
# synthetic scenes


@dataclass(frozen=True)
class SceneLayout:
    """Sensor placement and nuisance model for synthetic parking-lot scenes.

    Positions are in the rear-radar frame (x right, y forward, z up); both
    radars look along +y as in the parallel-lane configuration.
    """

    side_position: tuple = (-5.0, 3.0, 0.0)
    side_yaw: float = 0.0
    fov_deg: float = 70.0
    noise_std: float = 1.0
    ref_range_m: float = 10.0
    rcs_jitter: float = 0.2
    # fraction of frames each view spends behind an occluder, and mean dwell
    occlusion_rate: Mapping = field(default_factory=lambda: {"rear": 0.35, "side": 0.1})
    occlusion_dwell_frames: float = 12.0
    occluded_keep_prob: float = 0.25
    ghost_prob: float = 0.3
    static_clutter: int = 6
    gps_noise_m: float = 0.01
    anchor_lat_lon: tuple = (38.5382, -121.7617)


def random_script(rng: np.random.Generator, n_frames: int = 600,
                  frame_period_s: float = 0.1, fill: bool = False) -> MotionScript:
    """Static, forward, pause, backward and final rest, as in the parking-lot runs.

    With ``fill`` the manoeuvre is slowed down to span the whole scene, so the
    final frames (the test block of a contiguous split) still see motion.
    """
    length = rng.uniform(3.9, 5.0)
    width = rng.uniform(1.7, 2.0)
    height = rng.uniform(1.4, 1.8)
    start = np.array([rng.uniform(-0.6, 0.6), rng.uniform(6.5, 9.5), height / 2 - 0.5])
    distance = rng.uniform(4.0, 8.0)
    speed = rng.uniform(1.5, 3.0)
    move = max(2, int(round(distance / (speed * frame_period_s))))
    back_speed = rng.uniform(1.5, 2.5)
    back_dist = distance * rng.uniform(0.6, 1.0)
    back = max(2, int(round(back_dist / (back_speed * frame_period_s))))
    pause = max(2, int(round(rng.uniform(0.05, 0.1) * n_frames)))
    static = max(2, int(round(rng.uniform(0.1, 0.2) * n_frames)))
    if fill:
        static = max(2, int(round(rng.uniform(0.05, 0.1) * n_frames)))
        rest = max(1, int(round(0.02 * n_frames)))
        move = int(round(rng.uniform(0.4, 0.5) * (n_frames - static - pause - rest)))
        back = n_frames - static - pause - rest - move
    if static + move + pause + back + 1 > n_frames:
        raise ValueError(f"{n_frames} frames too short for the scripted manoeuvre")
    drift = np.array([rng.uniform(-0.2, 0.2), 0.0, 0.0])
    fwd_end = start + np.array([0.0, distance, 0.0]) + drift
    back_end = fwd_end - np.array([0.0, back_dist, 0.0])
    edges = np.cumsum([0, static, move, pause, back, n_frames - static - move - pause - back])
    kinds = ("static", "forward", "pause", "backward", "static")
    positions = ((start, start), (start, fwd_end), (fwd_end, fwd_end), (fwd_end, back_end),
                 (back_end, back_end))
    phases = [MotionPhase(k, int(edges[i]), int(edges[i + 1] - 1), tuple(a), tuple(b))
              for i, (k, (a, b)) in enumerate(zip(kinds, positions)) if edges[i + 1] > edges[i]]
    # adjacent phases share the boundary position, so the lerp stays continuous
    return MotionScript(tuple(phases), (length, height, width),
                        math.pi / 2 + rng.uniform(-0.05, 0.05), 0.0)


def box_reflectors(box: BBox7, inset: float = 0.15) -> tuple:
    """Eight corners plus the four vertical face centres, with their face normals.

    Scatterers sit ``inset`` metres inside the box surface.
    """
    c, s = math.cos(box.theta), math.sin(box.theta)
    head, left = np.array([c, s, 0.0]), np.array([-s, c, 0.0])
    centre = box.center
    hl, hw, hh = (max(v / 2 - inset, v / 4) for v in (box.l, box.w, box.h))
    faces = [head, -head, left, -left]
    face_half = [hl, hl, hw, hw]
    pts, normals = [], []
    for sx in (1, -1):
        for sy in (1, -1):
            for sz in (1, -1):
                pts.append(centre + sx * hl * head + sy * hw * left + np.array([0, 0, sz * hh]))
                normals.append((sx * head, sy * left))
    for n, d in zip(faces, face_half):
        pts.append(centre + d * n)
        normals.append((n,))
    return np.array(pts), normals


def _occlusion_states(rng: np.random.Generator, n: int, rate: float, dwell: float) -> np.ndarray:
    """Two-state Markov chain with stationary occupancy ``rate`` and mean dwell ``dwell``."""
    if rate <= 0:
        return np.zeros(n, dtype=bool)
    p_exit = 1.0 / dwell
    p_enter = min(1.0, rate * p_exit / max(1e-9, 1.0 - rate))
    out = np.zeros(n, dtype=bool)
    state = rng.random() < rate
    for i in range(n):
        out[i] = state
        state = (rng.random() >= p_exit) if state else (rng.random() < p_enter)
    return out


def _view_targets(rng, box, velocity, radar_pos, radar_yaw, occluded, layout, clutter,
                  cfg) -> list:
    pts, normals = box_reflectors(box)
    base = np.array([1.0] * 8 + [1.3] * 4)
    c, s = math.cos(-radar_yaw), math.sin(-radar_yaw)
    rot = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
    targets = []
    max_r = cfg.max_range - 2 * cfg.range_resolution
    for p, ns, b in zip(pts, normals, base):
        los = radar_pos - p
        if not any(np.dot(n, los) > 0 for n in ns):
            continue
        if occluded and rng.random() > layout.occluded_keep_prob:
            continue
        rel = rot @ (p - radar_pos)
        r = np.linalg.norm(rel)
        az = math.degrees(math.atan2(rel[0], rel[1]))
        if abs(az) > layout.fov_deg or not (0.5 < r < max_r):
            continue
        vr = float(np.dot(velocity, p - radar_pos) / r)
        amp = b * rng.lognormal(0.0, layout.rcs_jitter) * (layout.ref_range_m / r) ** 2
        targets.append(PointTarget(tuple(rel), vr, amp))
        if rng.random() < layout.ghost_prob:
            scale = rng.uniform(1.15, 1.6)
            if r * scale < max_r:
                targets.append(PointTarget(tuple(rel * scale), vr, amp * rng.uniform(0.1, 0.35)))
    for pos, amp in clutter:
        targets.append(PointTarget(tuple(pos), 0.0, amp * rng.lognormal(0.0, 0.1)))
    return targets


def _static_clutter(rng, layout, cfg) -> list:
    out = []
    for _ in range(layout.static_clutter):
        r = rng.uniform(3.0, 30.0)
        az = math.radians(rng.uniform(-60, 60))
        pos = np.array([r * math.sin(az), r * math.cos(az), rng.uniform(-0.4, 1.0)])
        out.append((pos, rng.uniform(0.15, 0.5) * (layout.ref_range_m / r) ** 2))
    return out


def render_view_frame(targets, cfg: RadarConfig, noise_std: float, seed: int,
                      ts_ms: int) -> PointFrame:
    cube = synth_if_cube(targets, cfg, noise_std, seed, ts_ms)
    return PointFrame(ts_ms, extract_point_array(cube_to_heatmap(cube, cfg), cfg))


def synth_gps_offsets(rng, timestamps, layout: SceneLayout) -> list:
    """Simulated 1 Hz RTK fixes for both radars, resampled and matched per frame."""
    ref = geodetic_to_ecef(*layout.anchor_lat_lon, 16.0)
    t0 = int(timestamps[0]) // 1000 * 1000
    t_end = int(timestamps[-1]) // 1000 * 1000 + 1000
    fix_ts = np.arange(t0, t_end + 1, 1000)
    ego, asst = [], []
    for t in fix_ts:
        e = rng.normal(0.0, layout.gps_noise_m, 3) * np.array([1, 1, 0])
        a = rng.normal(0.0, layout.gps_noise_m, 3) * np.array([1, 1, 0])
        ego.append(GpsFix(int(t), tuple(enu_to_ecef(e, ref))))
        asst.append(GpsFix(int(t), tuple(enu_to_ecef(np.asarray(layout.side_position) + a, ref))))
    ego_i, asst_i = interpolate_gps(ego), interpolate_gps(asst)
    ego_idx = match_nearest(timestamps, [f.ts_ms for f in ego_i])
    asst_idx = match_nearest(timestamps, [f.ts_ms for f in asst_i])
    return [offset_from_gps(ego_i[i].position, asst_i[j].position, 0.0, layout.side_yaw)
            for i, j in zip(ego_idx, asst_idx)]


def synth_scenario(seed: int, cfg: Optional[RadarConfig] = None,
                   script: Optional[MotionScript] = None, layout: Optional[SceneLayout] = None,
                   n_frames: int = 600, scene_id: Optional[str] = None,
                   k: int = TOP_K, fill: bool = False) -> SceneBundle:
    """Render a scripted target through both radars and package the scene.

    ``fill`` stretches the random manoeuvre over the whole scene.
    """
    cfg = cfg or RadarConfig()
    layout = layout or SceneLayout()
    ss = np.random.SeedSequence(seed)
    script_ss, scene_ss, gps_ss, frame_ss = ss.spawn(4)
    script_rng = np.random.default_rng(script_ss)
    scene_rng = np.random.default_rng(scene_ss)
    gps_rng = np.random.default_rng(gps_ss)
    if script is None:
        script = random_script(script_rng, n_frames, cfg.frame_period_ms / 1000.0, fill)
    n = script.n_frames
    ts0 = 1_700_000_000_000 + (seed % 100_000) * 60_000
    timestamps = [int(ts0 + i * cfg.frame_period_ms) for i in range(n)]
    period_s = cfg.frame_period_ms / 1000.0

    radar_pose = {"rear": (np.zeros(3), 0.0),
                  "side": (np.asarray(layout.side_position, dtype=float), layout.side_yaw)}
    clutter = {v: _static_clutter(scene_rng, layout, cfg) for v in VIEWS}
    occl = {v: _occlusion_states(scene_rng, n, layout.occlusion_rate.get(v, 0.0),
                                 layout.occlusion_dwell_frames) for v in VIEWS}

    frames = {v: [] for v in VIEWS}
    children = frame_ss.spawn(n)
    for i in range(n):
        fidx = script.first_frame + i
        box = interpolate_ground_truth(script, fidx)
        vel = script.velocity_at(fidx, period_s)
        frng = np.random.default_rng(children[i])
        seen = 0
        for v in VIEWS:
            pos, yaw = radar_pose[v]
            targets = _view_targets(frng, box, vel, pos, yaw, occl[v][i], layout, clutter[v], cfg)
            seen += len(targets) > len(clutter[v])
            frames[v].append(render_view_frame(targets, cfg, layout.noise_std,
                                               int(frng.integers(2**31)), timestamps[i]))
        if seen == 0 and not any(occl[v][i] for v in VIEWS):
            raise ValueError(f"frame {i}: target outside both radars' fields of view")
    offsets = synth_gps_offsets(gps_rng, timestamps, layout)
    return build_frames(frames, script, k, timestamps, offsets,
                        scene_id if scene_id is not None else str(seed), cfg, seed)


# ---------------------------------------------------------------------------
# scene directory I/O


def write_scene(bundle: SceneBundle, root: Path) -> Path:
    root = Path(root)
    sdir = root / f"scene_{bundle.scene_id}"
    for view in bundle.points:
        (sdir / view).mkdir(parents=True, exist_ok=True)
        for i in range(len(bundle)):
            (sdir / view / f"frame_{i}.csv").write_text(bundle.frame(view, i).to_csv())
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["frame", "dx", "dy", "dz"])
    for i, off in enumerate(bundle.offsets):
        w.writerow([i, *(repr(float(v)) for v in off.translation)])
    (sdir / "gps_offsets.csv").write_text(buf.getvalue())
    gt = [dict(zip(("w", "h", "l", "x", "y", "z", "theta"), map(float, b.to_array())))
          for b in bundle.ground_truth]
    (sdir / "ground_truth.json").write_text(json.dumps(gt, indent=1))
    (sdir / "splits.json").write_text(json.dumps(bundle.splits.to_dict()))
    yaws = sorted({round(o.yaw, 12) for o in bundle.offsets})
    meta = {
        "scene_id": bundle.scene_id,
        "n_frames": len(bundle),
        "k": bundle.k,
        "timestamps_ms": [int(t) for t in bundle.timestamps],
        "offset_yaw": yaws[0] if len(yaws) == 1 else None,
        "radar_config": asdict(bundle.cfg),
        "script": bundle.script.to_dict() if bundle.script else None,
    }
    (sdir / "scene.json").write_text(json.dumps(meta, indent=1))
    return sdir


class SceneFormatError(ValueError):
    pass


def read_scene(sdir: Path, k: Optional[int] = None) -> SceneBundle:
    """Load a scene directory; ``scene.json`` is optional for externally produced data."""
    sdir = Path(sdir)
    try:
        meta = json.loads((sdir / "scene.json").read_text()) if (sdir / "scene.json").exists() else {}
        gt_raw = json.loads((sdir / "ground_truth.json").read_text())
        offs_rows = list(csv.reader(io.StringIO((sdir / "gps_offsets.csv").read_text())))
    except (OSError, json.JSONDecodeError) as exc:
        raise SceneFormatError(f"{sdir}: {exc}") from exc
    if not offs_rows or [c.strip() for c in offs_rows[0]] != ["frame", "dx", "dy", "dz"]:
        raise SceneFormatError(f"{sdir}/gps_offsets.csv: bad header")
    gt = [BBox7(**g) if isinstance(g, dict) else BBox7.from_array(g) for g in gt_raw]
    n = len(gt)
    yaw = meta.get("offset_yaw") or 0.0
    offsets = [RigidOffset((float(r[1]), float(r[2]), float(r[3])), yaw) for r in offs_rows[1:] if r]
    if len(offsets) != n:
        raise SceneFormatError(f"{sdir}: {len(offsets)} offsets for {n} ground-truth boxes")
    k = k or int(meta.get("k", TOP_K))
    ts = meta.get("timestamps_ms") or [i * 100 for i in range(n)]
    pts, masks = {}, {}
    for view in VIEWS:
        vdir = sdir / view
        if not vdir.is_dir():
            continue
        packed = []
        for i in range(n):
            path = vdir / f"frame_{i}.csv"
            if not path.exists():
                raise SceneFormatError(f"missing {path}")
            packed.append(top_k_points(PointFrame.from_csv(path.read_text()).points, k))
        pts[view] = np.stack([p for p, _ in packed])
        masks[view] = np.stack([m for _, m in packed])
    if not pts:
        raise SceneFormatError(f"{sdir}: no rear/ or side/ frames")
    splits_path = sdir / "splits.json"
    splits = (SplitIndex.from_dict(json.loads(splits_path.read_text())) if splits_path.exists()
              else make_splits(n))
    cfg = RadarConfig(**meta["radar_config"]) if meta.get("radar_config") else RadarConfig()
    script = MotionScript.from_dict(meta["script"]) if meta.get("script") else None
    return SceneBundle(str(meta.get("scene_id", sdir.name.removeprefix("scene_"))),
                       np.asarray(ts, dtype=np.int64), pts, masks, offsets, gt, splits,
                       script, cfg, k)
