"""FMCW simulation and raw-cube to point-cloud processing.

The virtual array follows the usual 3-Tx/4-Rx cascade: eight channels form a
half-wavelength azimuth row and the four channels of the middle transmitter
sit one half-wavelength higher, above azimuth positions 2..5.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

C = 3e8

POINT_COLUMNS = ("x", "y", "z", "range", "velocity", "bearing", "intensity")
ANGLE_FFT_SIZE = 64
MULTIPATH_ALPHA = 0.1
RANGE_GATE_M = (0.5, 50.0)
TOP_CANDIDATES = 128
KEEP_FRACTION = 0.2


@dataclass(frozen=True)
class RadarConfig:
    center_freq_ghz: float = 77.0
    sweep_rate_mhz_per_us: float = 30.0
    samples_per_chirp: int = 256
    chirps_per_frame: int = 64
    frame_period_ms: float = 100.0
    tx_count: int = 3
    rx_count: int = 4
    adc_rate_ksps: float = 10_000.0
    azimuth_res_deg: float = 15.0
    elevation_res_deg: float = 60.0
    chirp_period_us: float = 100.0

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"RadarConfig.{name} must be finite and positive, got {value}")
        if (self.tx_count, self.rx_count) != (3, 4):
            raise ValueError("only the 3-Tx/4-Rx virtual array layout is supported")

    @property
    def virtual_channels(self) -> int:
        return self.tx_count * self.rx_count

    @property
    def wavelength(self) -> float:
        return C / (self.center_freq_ghz * 1e9)

    @property
    def slope(self) -> float:
        return self.sweep_rate_mhz_per_us * 1e12

    @property
    def fs(self) -> float:
        return self.adc_rate_ksps * 1e3

    @property
    def range_resolution(self) -> float:
        return C * self.fs / (2.0 * self.slope * self.samples_per_chirp)

    @property
    def max_range(self) -> float:
        return C * self.fs / (2.0 * self.slope)

    @property
    def velocity_resolution(self) -> float:
        return self.wavelength / (2.0 * self.chirp_period_us * 1e-6 * self.chirps_per_frame)

    def range_bin(self, r: float) -> int:
        return int(round(2.0 * r * self.slope * self.samples_per_chirp / (C * self.fs)))

    def doppler_bin(self, v: float) -> int:
        """Signed Doppler bin of radial velocity ``v`` (0 = stationary)."""
        return int(round(2.0 * v * self.chirp_period_us * 1e-6 * self.chirps_per_frame / self.wavelength))


def virtual_layout(cfg: RadarConfig) -> np.ndarray:
    """(channels, 2) integer (azimuth, elevation) positions in half wavelengths."""
    az = [(i, 0) for i in range(8)] + [(2 + i, 1) for i in range(4)]
    return np.array(az[: cfg.virtual_channels])


@dataclass(frozen=True)
class PointTarget:
    position: tuple
    radial_velocity: float = 0.0
    reflectivity: float = 1.0

    @property
    def range(self) -> float:
        return float(np.linalg.norm(self.position))


@dataclass
class DataCube:
    samples: np.ndarray  # complex [chirps, virtual_channels, samples_per_chirp]
    frame_ts_ms: int = 0

    def check(self, cfg: RadarConfig) -> None:
        want = (cfg.chirps_per_frame, cfg.virtual_channels, cfg.samples_per_chirp)
        if self.samples.shape != want:
            raise ValueError(f"cube shape {self.samples.shape} does not match config {want}")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("cube contains non-finite samples")


@dataclass
class RDHeatmap:
    magnitude: np.ndarray      # [range_bins, doppler_bins], peak angle-spectrum magnitude
    range_m: np.ndarray        # [range_bins]
    velocity: np.ndarray       # [doppler_bins]
    azimuth_deg: np.ndarray    # [range_bins, doppler_bins]
    elevation_deg: np.ndarray  # [range_bins, doppler_bins]
    frame_ts_ms: int = 0

    @property
    def intensity(self) -> np.ndarray:
        return self.magnitude ** 2


@dataclass(frozen=True)
class RadarPoint:
    x: float
    y: float
    z: float
    range: float
    velocity: float
    bearing: float
    intensity: float

    def as_tuple(self) -> tuple:
        return (self.x, self.y, self.z, self.range, self.velocity, self.bearing, self.intensity)


@dataclass
class PointFrame:
    """Timestamped point set; ``points`` is an (N, 7) array in ``POINT_COLUMNS`` order."""

    ts_ms: int
    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 7)))

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 7)

    def __len__(self) -> int:
        return len(self.points)

    @classmethod
    def from_points(cls, ts_ms: int, points: Iterable[RadarPoint]) -> "PointFrame":
        return cls(ts_ms, np.array([p.as_tuple() for p in points], dtype=float).reshape(-1, 7))

    def to_points(self) -> list:
        return [RadarPoint(*map(float, row)) for row in self.points]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(POINT_COLUMNS)
        for row in self.points:
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, ts_ms: int = 0) -> "PointFrame":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or tuple(c.strip() for c in rows[0]) != POINT_COLUMNS:
            raise ValueError(f"point CSV header must be {','.join(POINT_COLUMNS)}")
        data = [[float(v) for v in r] for r in rows[1:] if r]
        return cls(ts_ms, np.array(data, dtype=float).reshape(-1, 7))


def write_frame_csv(path: Path, frame: PointFrame) -> None:
    Path(path).write_text(frame.to_csv())


def read_frame_csv(path: Path, ts_ms: int = 0) -> PointFrame:
    return PointFrame.from_csv(Path(path).read_text(), ts_ms)


def synth_if_cube(targets: Sequence[PointTarget], cfg: RadarConfig, noise_std: float = 0.0,
                  seed: int = 0, frame_ts_ms: int = 0) -> DataCube:
    """Complex IF samples for a set of point scatterers.

    Every target adds a beat tone at 2RS/c along fast time, a Doppler phase
    ramp across chirps and a steering phase across the virtual array. Each
    target's contribution is separable, so the cube is built as a sum of
    outer products.
    """
    if not (math.isfinite(noise_std) and noise_std >= 0):
        raise ValueError(f"noise_std must be finite and non-negative, got {noise_std}")
    nc, nv, ns = cfg.chirps_per_frame, cfg.virtual_channels, cfg.samples_per_chirp
    cube = np.zeros((nc, nv, ns), dtype=np.complex128)
    if targets:
        pos = np.array([t.position for t in targets], dtype=float).reshape(-1, 3)
        vel = np.array([t.radial_velocity for t in targets], dtype=float)
        amp = np.array([t.reflectivity for t in targets], dtype=float)
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(vel)) and np.all(np.isfinite(amp))):
            raise ValueError("non-finite target parameters")
        if np.any(amp <= 0):
            raise ValueError("target reflectivity must be positive")
        rng_m = np.linalg.norm(pos, axis=1)
        if np.any(rng_m >= cfg.max_range):
            raise ValueError(f"target beyond unambiguous range {cfg.max_range:.2f} m")
        if np.any(rng_m <= 0):
            raise ValueError("target at the sensor origin")
        lam = cfg.wavelength
        u = pos[:, 0] / rng_m                    # sin(az) cos(el)
        w = pos[:, 2] / rng_m                    # sin(el)
        t_fast = np.arange(ns) / cfg.fs
        f_beat = 2.0 * rng_m * cfg.slope / C
        fast = np.exp(2j * np.pi * (f_beat[:, None] * t_fast[None, :] + 2.0 * rng_m[:, None] / lam))
        slow = np.exp(4j * np.pi * vel[:, None] * cfg.chirp_period_us * 1e-6 * np.arange(nc)[None, :] / lam)
        layout = virtual_layout(cfg)
        steer = np.exp(1j * np.pi * (u[:, None] * layout[None, :, 0] + w[:, None] * layout[None, :, 1]))
        outer = (amp[:, None, None] * slow[:, :, None] * steer[:, None, :]).reshape(len(amp), nc * nv)
        cube += (outer.T @ fast).reshape(nc, nv, ns)
    if noise_std > 0:
        rng = np.random.default_rng(seed)
        noise = rng.standard_normal((2, nc, nv, ns)) * (noise_std / math.sqrt(2.0))
        cube += noise[0] + 1j * noise[1]
    return DataCube(cube, int(frame_ts_ms))


def cube_to_heatmap(cube: DataCube, cfg: RadarConfig) -> RDHeatmap:
    """Range FFT, Doppler FFT and a per-cell angle FFT over the virtual array."""
    cube.check(cfg)
    nc, ns = cfg.chirps_per_frame, cfg.samples_per_chirp
    x = cube.samples * np.hanning(ns)[None, None, :]
    rfft = np.fft.fft(x, axis=2)
    rfft = rfft * np.hanning(nc)[:, None, None]
    rd = np.fft.fftshift(np.fft.fft(rfft, axis=0), axes=0)   # [doppler, channel, range]
    rd = rd.transpose(2, 0, 1)                                # [range, doppler, channel]

    layout = virtual_layout(cfg)
    n_range, n_dopp = rd.shape[:2]
    row0 = layout[:, 1] == 0
    # zero-padded azimuth DFT as a matmul, bins already in signed order
    kbins = np.arange(ANGLE_FFT_SIZE) - ANGLE_FFT_SIZE // 2
    steer0 = np.exp(-2j * np.pi * np.outer(layout[row0, 0], kbins) / ANGLE_FFT_SIZE)
    spec = rd[:, :, row0].reshape(-1, int(row0.sum())) @ steer0
    power = spec.real ** 2 + spec.imag ** 2
    k = np.argmax(power, axis=1)
    peak0 = spec[np.arange(len(k)), k].reshape(n_range, n_dopp)
    k = k.reshape(n_range, n_dopp)
    # elevated row: evaluate its DFT only at each cell's azimuth peak
    kk = (k - ANGLE_FFT_SIZE // 2)[..., None]
    pos1 = layout[~row0, 0][None, None, :]
    peak1 = np.sum(rd[:, :, ~row0] * np.exp(-2j * np.pi * kk * pos1 / ANGLE_FFT_SIZE), axis=2)
    magnitude = np.abs(peak0)

    u = (k - ANGLE_FFT_SIZE // 2) * 2.0 / ANGLE_FFT_SIZE
    sin_el = np.clip(np.angle(peak1 * np.conj(peak0)) / np.pi, -1.0, 1.0)
    cos_el = np.sqrt(1.0 - sin_el ** 2)
    sin_az = np.clip(np.divide(u, cos_el, out=np.zeros_like(u), where=cos_el > 1e-9), -1.0, 1.0)

    range_m = np.arange(n_range) * cfg.range_resolution
    velocity = (np.arange(n_dopp) - n_dopp // 2) * cfg.velocity_resolution
    return RDHeatmap(
        magnitude=magnitude,
        range_m=range_m,
        velocity=velocity,
        azimuth_deg=np.degrees(np.arcsin(sin_az)),
        elevation_deg=np.degrees(np.arcsin(sin_el)),
        frame_ts_ms=cube.frame_ts_ms,
    )


def select_cells(hm: RDHeatmap, top: int = TOP_CANDIDATES, alpha: float = MULTIPATH_ALPHA,
                 range_gate: tuple = RANGE_GATE_M, keep_fraction: float = KEEP_FRACTION):
    """Linear cell indices of (candidates, survivors, retained) after each filter stage."""
    mag = hm.magnitude.ravel()
    if mag.size == 0:
        empty = np.zeros(0, dtype=int)
        return empty, empty, empty
    # stable sort on -magnitude: ties resolve to the lower linear index
    cand = np.argsort(-mag, kind="stable")[:top]
    inten = mag[cand] ** 2
    peak = inten.max()
    if peak <= 0:
        empty = np.zeros(0, dtype=int)
        return cand, empty, empty
    r = hm.range_m[cand // hm.magnitude.shape[1]]
    ok = (inten >= alpha * peak) & (r >= range_gate[0]) & (r <= range_gate[1])
    surv = cand[ok]
    if surv.size == 0:
        return cand, surv, surv
    n_keep = max(1, math.ceil(keep_fraction * surv.size - 1e-9))
    # survivors are already in descending-magnitude order
    return cand, surv, surv[:n_keep]


def extract_point_array(hm: RDHeatmap, cfg: RadarConfig | None = None, **kwargs) -> np.ndarray:
    """Array form of :func:`extract_point_cloud`, rows in ``POINT_COLUMNS`` order."""
    _, _, kept = select_cells(hm, **kwargs)
    n_dopp = hm.magnitude.shape[1]
    ri, di = kept // n_dopp, kept % n_dopp
    r = hm.range_m[ri]
    az = np.radians(hm.azimuth_deg[ri, di])
    el = np.radians(hm.elevation_deg[ri, di])
    pts = np.column_stack([
        r * np.cos(el) * np.sin(az),
        r * np.cos(el) * np.cos(az),
        r * np.sin(el),
        r,
        hm.velocity[di],
        np.degrees(az),
        hm.magnitude[ri, di] ** 2,
    ])
    return pts.reshape(-1, 7)


def extract_point_cloud(hm: RDHeatmap, cfg: RadarConfig | None = None) -> list:
    """Top-128 candidates, multipath and range gating, then the strongest 20%."""
    return [RadarPoint(*map(float, row)) for row in extract_point_array(hm, cfg)]


def process_cube(cube: DataCube, cfg: RadarConfig) -> PointFrame:
    return PointFrame(cube.frame_ts_ms, extract_point_array(cube_to_heatmap(cube, cfg), cfg))
