"""Intra- and inter-vehicle time alignment plus GPS-offset coordinate transforms."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .radar_dsp import PointFrame

# WGS-84
_A = 6378137.0
_F = 1.0 / 298.257223563
_E2 = _F * (2.0 - _F)

DEFAULT_V_THRESH = 1.0
DEFAULT_INTENSITY_PCT = 60.0
MAX_INITIAL_DELAY_MS = 100


class SyncError(ValueError):
    """A scene that cannot be aligned."""


class InitialDelayError(SyncError):
    pass


class OnsetMissingError(SyncError):
    pass


@dataclass(frozen=True)
class GpsFix:
    ts_ms: int
    position: tuple  # ECEF metres

    def __post_init__(self):
        pos = tuple(float(v) for v in self.position)
        if len(pos) != 3 or not all(math.isfinite(v) for v in pos):
            raise ValueError(f"invalid ECEF position {self.position!r}")
        object.__setattr__(self, "position", pos)


@dataclass
class SensorTrack:
    """One sensor stream of one vehicle.

    ``payload`` holds per-frame data; radar tracks carry :class:`PointFrame`
    objects. Non-radar tracks may carry an externally verified
    ``onset_ts_ms`` (e.g. a camera frame checked by eye); otherwise they
    inherit the drift of their vehicle's radar.
    """

    track_id: str
    kind: str
    timestamps: np.ndarray
    payload: Optional[list] = None
    onset_ts_ms: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("radar", "camera", "gps"):
            raise ValueError(f"unknown sensor kind {self.kind!r}")
        self.timestamps = np.asarray(self.timestamps, dtype=np.int64)
        if self.timestamps.ndim != 1 or self.timestamps.size == 0:
            raise ValueError(f"track {self.track_id} has no timestamps")
        if np.any(np.diff(self.timestamps) <= 0):
            raise ValueError(f"track {self.track_id} timestamps are not strictly increasing")


@dataclass(frozen=True)
class RigidOffset:
    """Planar rigid motion ``p -> R(yaw) p + translation``."""

    translation: tuple = (0.0, 0.0, 0.0)
    yaw: float = 0.0

    def __post_init__(self):
        t = tuple(float(v) for v in self.translation)
        if len(t) != 3 or not all(math.isfinite(v) for v in t) or not math.isfinite(self.yaw):
            raise ValueError("rigid offset must be finite")
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "yaw", (self.yaw + math.pi) % (2 * math.pi) - math.pi)

    def apply(self, xyz: np.ndarray) -> np.ndarray:
        xyz = np.asarray(xyz, dtype=float).reshape(-1, 3)
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        out = np.empty_like(xyz)
        out[:, 0] = c * xyz[:, 0] - s * xyz[:, 1] + self.translation[0]
        out[:, 1] = s * xyz[:, 0] + c * xyz[:, 1] + self.translation[1]
        out[:, 2] = xyz[:, 2] + self.translation[2]
        return out

    def inverse(self) -> "RigidOffset":
        c, s = math.cos(-self.yaw), math.sin(-self.yaw)
        tx, ty, tz = self.translation
        return RigidOffset((-(c * tx - s * ty), -(s * tx + c * ty), -tz), -self.yaw)


def interpolate_gps(track: Sequence[GpsFix], rate_hz: int = 1000) -> list:
    """Linearly resample a GPS track on a uniform grid from first to last fix."""
    if len(track) < 2:
        raise ValueError("need at least two GPS fixes to interpolate")
    ts = np.array([f.ts_ms for f in track], dtype=np.int64)
    if np.any(np.diff(ts) <= 0):
        raise ValueError("GPS timestamps must be strictly increasing")
    step = 1000 / rate_hz
    if step != int(step) or step < 1:
        raise ValueError(f"rate {rate_hz} Hz does not give an integer millisecond step")
    grid = np.arange(ts[0], ts[-1] + 1, int(step), dtype=np.int64)
    if grid[-1] != ts[-1]:
        grid = np.append(grid, ts[-1])
    pos = np.array([f.position for f in track])
    cols = [np.interp(grid, ts, pos[:, k]) for k in range(3)]
    return [GpsFix(int(t), (x, y, z)) for t, x, y, z in zip(grid, *cols)]


def match_nearest(radar_ts: Sequence[int], other_ts: Sequence[int]) -> np.ndarray:
    """For each radar stamp, the index of the closest stamp in ``other_ts``.

    Equidistant candidates resolve to the earlier stamp.
    """
    a = np.asarray(radar_ts, dtype=np.int64)
    b = np.asarray(other_ts, dtype=np.int64)
    if a.size == 0 or b.size == 0:
        raise ValueError("empty timestamp list")
    hi = np.clip(np.searchsorted(b, a, side="left"), 0, b.size - 1)
    lo = np.clip(hi - 1, 0, b.size - 1)
    take_lo = np.abs(a - b[lo]) <= np.abs(b[hi] - a)
    return np.where(take_lo, lo, hi)


def _frame_qualifies(frame: PointFrame, v_thresh: float, intensity_pct: float) -> bool:
    pts = frame.points
    if len(pts) == 0:
        return False
    floor = np.percentile(pts[:, 6], intensity_pct)
    return bool(np.any((np.abs(pts[:, 4]) >= v_thresh) & (pts[:, 6] >= floor)))


def detect_motion_onset(frames: Sequence[PointFrame], v_thresh: float = DEFAULT_V_THRESH,
                        intensity_pct: float = DEFAULT_INTENSITY_PCT) -> Optional[int]:
    """First frame with a strong fast return whose predecessor has none.

    Returns ``None`` when no such frame exists.
    """
    if len(frames) < 2:
        raise ValueError("need at least two frames to detect a motion onset")
    flags = [_frame_qualifies(f, v_thresh, intensity_pct) for f in frames]
    for i in range(1, len(flags)):
        if flags[i] and not flags[i - 1]:
            return i
    return None


def _radar_track(tracks: Sequence[SensorTrack], who: str) -> SensorTrack:
    for t in tracks:
        if t.kind == "radar":
            return t
    raise SyncError(f"{who} vehicle has no radar track")


def align_scene(ego: Sequence[SensorTrack], assistant: Sequence[SensorTrack],
                max_initial_delay_ms: int = MAX_INITIAL_DELAY_MS,
                v_thresh: float = DEFAULT_V_THRESH,
                intensity_pct: float = DEFAULT_INTENSITY_PCT) -> dict:
    """Per-track millisecond shifts that bring every motion onset onto the ego radar's.

    Raises :class:`InitialDelayError` when the two radars start more than
    ``max_initial_delay_ms`` apart and :class:`OnsetMissingError` when a
    radar track shows no motion onset.
    """
    ego_radar = _radar_track(ego, "ego")
    asst_radar = _radar_track(assistant, "assistant")
    delay = abs(int(ego_radar.timestamps[0]) - int(asst_radar.timestamps[0]))
    if delay > max_initial_delay_ms:
        raise InitialDelayError(f"initial radar delay {delay} ms exceeds {max_initial_delay_ms} ms")

    def radar_onset(track: SensorTrack) -> int:
        if not track.payload:
            raise OnsetMissingError(f"radar track {track.track_id} has no frames")
        idx = detect_motion_onset(track.payload, v_thresh, intensity_pct)
        if idx is None:
            raise OnsetMissingError(f"no motion onset on radar track {track.track_id}")
        return int(track.timestamps[idx])

    ref = radar_onset(ego_radar)
    shifts = {}
    for tracks, radar in ((ego, ego_radar), (assistant, asst_radar)):
        radar_shift = ref - radar_onset(radar)
        for t in tracks:
            if t is radar:
                shifts[t.track_id] = radar_shift
            elif t.kind == "radar":
                shifts[t.track_id] = ref - radar_onset(t)
            elif t.onset_ts_ms is not None:
                shifts[t.track_id] = ref - int(t.onset_ts_ms)
            else:
                shifts[t.track_id] = radar_shift
    return shifts


def drift_report_json(shifts: dict) -> str:
    return json.dumps({k: int(v) for k, v in shifts.items()}, indent=1, sort_keys=True)


def transform_frame(frame: PointFrame, offset: RigidOffset) -> PointFrame:
    """Move points into another sensor frame; range and bearing follow the new position."""
    pts = frame.points.copy()
    if len(pts):
        xyz = offset.apply(pts[:, :3])
        pts[:, :3] = xyz
        pts[:, 3] = np.linalg.norm(xyz, axis=1)
        pts[:, 5] = np.degrees(np.arctan2(xyz[:, 0], xyz[:, 1]))
    return PointFrame(frame.ts_ms, pts)


def geodetic_to_ecef(lat_deg: float, lon_deg: float, alt_m: float = 0.0) -> np.ndarray:
    lat, lon = math.radians(lat_deg), math.radians(lon_deg)
    n = _A / math.sqrt(1.0 - _E2 * math.sin(lat) ** 2)
    return np.array([(n + alt_m) * math.cos(lat) * math.cos(lon),
                     (n + alt_m) * math.cos(lat) * math.sin(lon),
                     (n * (1.0 - _E2) + alt_m) * math.sin(lat)])


def ecef_to_geodetic(p) -> tuple:
    """Latitude/longitude in degrees and altitude in metres (Bowring iteration)."""
    x, y, z = (float(v) for v in p)
    lon = math.atan2(y, x)
    rho = math.hypot(x, y)
    lat = math.atan2(z, rho * (1.0 - _E2))
    for _ in range(6):
        n = _A / math.sqrt(1.0 - _E2 * math.sin(lat) ** 2)
        alt = rho / math.cos(lat) - n
        lat = math.atan2(z, rho * (1.0 - _E2 * n / (n + alt)))
    n = _A / math.sqrt(1.0 - _E2 * math.sin(lat) ** 2)
    alt = rho / math.cos(lat) - n
    return math.degrees(lat), math.degrees(lon), alt


def _enu_rotation(ref) -> np.ndarray:
    lat, lon, _ = ecef_to_geodetic(ref)
    la, lo = math.radians(lat), math.radians(lon)
    return np.array([
        [-math.sin(lo), math.cos(lo), 0.0],
        [-math.sin(la) * math.cos(lo), -math.sin(la) * math.sin(lo), math.cos(la)],
        [math.cos(la) * math.cos(lo), math.cos(la) * math.sin(lo), math.sin(la)],
    ])


def ecef_to_enu(p, ref) -> np.ndarray:
    """East-north-up coordinates of ECEF point(s) ``p`` about the ECEF anchor ``ref``."""
    d = np.asarray(p, dtype=float) - np.asarray(ref, dtype=float)
    return d @ _enu_rotation(ref).T


def enu_to_ecef(enu, ref) -> np.ndarray:
    return np.asarray(enu, dtype=float) @ _enu_rotation(ref) + np.asarray(ref, dtype=float)


def offset_from_gps(ego_ecef, assistant_ecef, ego_heading: float = 0.0,
                    assistant_heading: float = 0.0) -> RigidOffset:
    """Offset taking assistant sensor coordinates into the ego sensor frame.

    Headings are compass bearings (radians, clockwise from north) of each
    radar's boresight; sensor axes are x right, y forward, z up.
    """
    d = ecef_to_enu(assistant_ecef, ego_ecef)
    c, s = math.cos(ego_heading), math.sin(ego_heading)
    t = (c * d[0] - s * d[1], s * d[0] + c * d[1], d[2])
    return RigidOffset(t, ego_heading - assistant_heading)


def gps_track_to_csv(track: Sequence[GpsFix]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["ts_ms", "x", "y", "z"])
    for f in track:
        w.writerow([f.ts_ms, *(repr(v) for v in f.position)])
    return buf.getvalue()


def gps_track_from_csv(text: str) -> list:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [c.strip() for c in rows[0]] != ["ts_ms", "x", "y", "z"]:
        raise ValueError("GPS CSV header must be ts_ms,x,y,z")
    return [GpsFix(int(r[0]), (float(r[1]), float(r[2]), float(r[3]))) for r in rows[1:] if r]


def synth_sync_scene(seed: int, drifts: Optional[dict] = None, initial_delay_ms: int = 0,
                     n_frames: int = 120, period_ms: int = 100) -> tuple:
    """Point-level radar and camera tracks for two vehicles watching one moving target.

    ``drifts`` maps track ids (``ego_radar``, ``ego_camera``, ``asst_radar``,
    ``asst_camera``) to clock offsets in ms: a track with drift ``d`` stamps an
    event at true time ``t`` as ``t + d``. Radar stamps start
    ``initial_delay_ms`` apart regardless of drift. Cameras run at 30 Hz and
    carry an annotated onset stamp. Returns ``(ego, assistant, expected)``
    with ``expected`` the shift that should be recovered for every track.
    """
    rng = np.random.default_rng(seed)
    drifts = {"ego_radar": 0, "ego_camera": 0, "asst_radar": 0, "asst_camera": 0, **(drifts or {})}
    t0 = 1_700_000_000_000 + int(rng.integers(0, 10**6))
    onset_true = t0 + int(rng.integers(2000, 6000))
    move_end = onset_true + int(rng.integers(3000, 5000))
    clutter = [(rng.uniform(2, 30), rng.uniform(-60, 60), rng.uniform(1, 5)) for _ in range(5)]

    def radar_frames(start: int, drift: int) -> tuple:
        stamps = start + period_ms * np.arange(n_frames)
        frames = []
        for ts in stamps:
            true = int(ts) - drift
            rows = []
            for r, az, p in clutter:
                rows.append((r, 0.0, az, p * rng.uniform(0.8, 1.2)))
            for _ in range(2):
                rows.append((rng.uniform(2, 30), rng.uniform(-0.4, 0.4), rng.uniform(-60, 60),
                             rng.uniform(0.2, 1.0)))
            if onset_true <= true < move_end:
                for _ in range(3):
                    rows.append((rng.uniform(6, 10), rng.uniform(1.5, 2.5), rng.uniform(-10, 10),
                                 rng.uniform(8, 15)))
            pts = np.array([(r * math.sin(math.radians(a)), r * math.cos(math.radians(a)), 0.0,
                             r, v, a, p) for r, v, a, p in rows])
            frames.append(PointFrame(int(ts), pts))
        return stamps, frames

    def camera(track_id: str, start: int) -> SensorTrack:
        d = drifts[track_id]
        stamps = start + d + np.round(np.arange(3 * n_frames) * 1000 / 30).astype(np.int64)
        return SensorTrack(track_id, "camera", stamps, onset_ts_ms=onset_true + d)

    e_ts, e_frames = radar_frames(t0, drifts["ego_radar"])
    a_ts, a_frames = radar_frames(t0 + initial_delay_ms, drifts["asst_radar"])
    ego = [SensorTrack("ego_radar", "radar", e_ts, e_frames), camera("ego_camera", t0)]
    asst = [SensorTrack("asst_radar", "radar", a_ts, a_frames), camera("asst_camera", t0)]
    expected = {k: drifts["ego_radar"] - d for k, d in drifts.items()}
    return ego, asst, expected


def write_tracks(ego: Sequence[SensorTrack], assistant: Sequence[SensorTrack], root: Path) -> Path:
    """Store tracks as ``tracks.json`` plus one CSV per radar frame under ``<track_id>/``."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    doc = {}
    for role, tracks in (("ego", ego), ("assistant", assistant)):
        entries = []
        for t in tracks:
            entry = {"track_id": t.track_id, "kind": t.kind,
                     "timestamps_ms": [int(v) for v in t.timestamps]}
            if t.onset_ts_ms is not None:
                entry["onset_ts_ms"] = int(t.onset_ts_ms)
            if t.kind == "radar" and t.payload:
                (root / t.track_id).mkdir(exist_ok=True)
                for i, f in enumerate(t.payload):
                    (root / t.track_id / f"frame_{i}.csv").write_text(f.to_csv())
                entry["frames_dir"] = t.track_id
            entries.append(entry)
        doc[role] = entries
    path = root / "tracks.json"
    path.write_text(json.dumps(doc, indent=1))
    return path


def read_tracks(path: Path) -> tuple:
    """Inverse of :func:`write_tracks`; returns ``(ego, assistant)`` track lists."""
    path = Path(path)
    doc = json.loads(path.read_text())
    out = []
    for role in ("ego", "assistant"):
        tracks = []
        for e in doc[role]:
            ts = e["timestamps_ms"]
            payload = None
            if e.get("frames_dir"):
                fdir = path.parent / e["frames_dir"]
                payload = [PointFrame.from_csv((fdir / f"frame_{i}.csv").read_text(), int(t))
                           for i, t in enumerate(ts)]
            tracks.append(SensorTrack(e["track_id"], e["kind"], ts, payload, e.get("onset_ts_ms")))
        out.append(tracks)
    return tuple(out)
