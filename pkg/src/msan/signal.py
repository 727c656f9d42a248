"""Raw multichannel time-series to 3D band-entropy feature maps.

Pipeline: split each channel into five frequency bands with an ideal FFT
mask, compute the differential entropy of every 1-second window per band,
and place the per-channel values on a 2D electrode grid. Each window then
becomes an H x W x num_bands block with unmapped grid cells exactly zero.

The FFT mask keeps bins with lo_hz <= |f| < hi_hz, so the five default
bands partition the [1, 50) Hz spectrum exactly: summing the five filtered
signals reconstructs the original signal restricted to that range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import LayoutError, ParseError

__all__ = [
    "BandSpec",
    "DEFAULT_BANDS",
    "Recording",
    "ElectrodeLayout",
    "FeatureMap",
    "bandpass",
    "differential_entropy",
    "extract_features",
    "load_layout",
    "save_layout",
    "grid_layout",
]


@dataclass(frozen=True)
class BandSpec:
    """Half-open frequency band [lo_hz, hi_hz)."""

    name: str
    lo_hz: float
    hi_hz: float

    def __post_init__(self):
        if not (0 < self.lo_hz < self.hi_hz):
            raise ValueError(
                f"band {self.name!r}: need 0 < lo < hi, got [{self.lo_hz}, {self.hi_hz})")


# Conventional edges for the five named bands (the usual SEED-literature split).
DEFAULT_BANDS: tuple[BandSpec, ...] = (
    BandSpec("delta", 1.0, 4.0),
    BandSpec("theta", 4.0, 8.0),
    BandSpec("alpha", 8.0, 14.0),
    BandSpec("beta", 14.0, 31.0),
    BandSpec("gamma", 31.0, 50.0),
)


@dataclass
class Recording:
    """Multichannel signal: samples[c, t] at a fixed sampling rate."""

    channel_names: list[str]
    rate_hz: float
    samples: np.ndarray

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=np.float64))
        if self.rate_hz <= 0:
            raise ValueError(f"rate_hz must be positive, got {self.rate_hz}")
        if len(self.channel_names) != self.samples.shape[0]:
            raise ValueError(
                f"{len(self.channel_names)} channel names vs "
                f"{self.samples.shape[0]} sample rows")
        if len(set(self.channel_names)) != len(self.channel_names):
            raise ValueError("channel names must be unique")

    @property
    def num_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return self.samples.shape[1] / self.rate_hz


@dataclass(frozen=True)
class ElectrodeLayout:
    """Injective map channel name -> (row, col) on a grid_h x grid_w grid."""

    grid_h: int
    grid_w: int
    placements: dict[str, tuple[int, int]]

    def __post_init__(self):
        if self.grid_h < 1 or self.grid_w < 1:
            raise ValueError(f"grid must be positive, got {self.grid_h}x{self.grid_w}")
        seen: set[tuple[int, int]] = set()
        for name, (r, c) in self.placements.items():
            if not (0 <= r < self.grid_h and 0 <= c < self.grid_w):
                raise ValueError(
                    f"electrode {name!r} at ({r}, {c}) is outside the "
                    f"{self.grid_h}x{self.grid_w} grid")
            if (r, c) in seen:
                raise ValueError(f"grid cell ({r}, {c}) assigned twice")
            seen.add((r, c))

    def position(self, channel: str) -> tuple[int, int]:
        try:
            return self.placements[channel]
        except KeyError:
            raise LayoutError(f"channel {channel!r} is not in the layout") from None


@dataclass
class FeatureMap:
    """One window's H x W x num_bands entropy block."""

    values: np.ndarray
    window_index: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3:
            raise ValueError(f"feature map must be 3-d, got shape {self.values.shape}")


def bandpass(rec: Recording, band: BandSpec) -> Recording:
    """Keep only [lo_hz, hi_hz) content of every channel via an ideal FFT mask."""
    nyquist = rec.rate_hz / 2.0
    if band.hi_hz >= nyquist:
        raise ValueError(
            f"band {band.name!r} edge {band.hi_hz} Hz is at or above the "
            f"Nyquist frequency {nyquist} Hz")
    n = rec.samples.shape[1]
    spectrum = np.fft.rfft(rec.samples, axis=1)
    freqs = np.fft.rfftfreq(n, d=1.0 / rec.rate_hz)
    keep = (freqs >= band.lo_hz) & (freqs < band.hi_hz)
    spectrum[:, ~keep] = 0.0
    filtered = np.fft.irfft(spectrum, n=n, axis=1)
    return Recording(list(rec.channel_names), rec.rate_hz, filtered)


def differential_entropy(window, eps: float = 1e-8) -> float:
    """Closed-form DE of a band-limited Gaussian window: 0.5*ln(2*pi*e*var).

    Uses the unbiased sample variance, floored at ``eps`` so constant
    windows stay finite.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    w = np.asarray(window, dtype=np.float64).reshape(-1)
    if w.size < 2:
        raise ValueError(f"window needs at least 2 samples, got {w.size}")
    var = float(np.var(w, ddof=1))
    return 0.5 * math.log(2.0 * math.pi * math.e * max(var, eps))


def _de_rows(rows: np.ndarray, eps: float) -> np.ndarray:
    var = np.var(rows, axis=1, ddof=1)
    return 0.5 * np.log(2.0 * math.pi * math.e * np.maximum(var, eps))


def extract_features(rec: Recording, bands=DEFAULT_BANDS, layout: ElectrodeLayout = None,
                     window_s: float = 1.0, stride_s: float = 1.0,
                     eps: float = 1e-8) -> list[FeatureMap]:
    """Full feature pipeline for one recording.

    Per band: filter once, then slide a window of ``window_s`` seconds with
    stride ``stride_s`` (non-overlapping by default) and compute each
    channel's differential entropy; place values at the channel's grid cell.

    Returns floor((T - window_s)/stride_s) + 1 maps of shape
    (grid_h, grid_w, len(bands)). Cells without an electrode are exactly 0.
    """
    if layout is None:
        raise ValueError("extract_features requires an electrode layout")
    if window_s <= 0 or stride_s <= 0:
        raise ValueError(f"window_s and stride_s must be positive, got {window_s}, {stride_s}")
    if rec.duration_s < window_s:
        raise ValueError(
            f"recording of {rec.duration_s:.3f} s is shorter than the "
            f"{window_s} s window")
    positions = [layout.position(name) for name in rec.channel_names]

    win = int(round(window_s * rec.rate_hz))
    stride = int(round(stride_s * rec.rate_hz))
    total = rec.samples.shape[1]
    num_windows = (total - win) // stride + 1

    filtered = [bandpass(rec, band).samples for band in bands]
    maps = []
    for i in range(num_windows):
        start = i * stride
        values = np.zeros((layout.grid_h, layout.grid_w, len(bands)))
        for b, sig in enumerate(filtered):
            de = _de_rows(sig[:, start:start + win], eps)
            for (r, c), v in zip(positions, de):
                values[r, c, b] = v
        maps.append(FeatureMap(values, window_index=i))
    return maps


def load_layout(path) -> ElectrodeLayout:
    """Parse a layout file: `grid H W` header, then `NAME row col` lines.

    Blank lines and `#` comments are ignored.
    """
    grid = None
    placements: dict[str, tuple[int, int]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if parts[0] == "grid":
                if len(parts) != 3:
                    raise ParseError(f"{path}:{lineno}: grid header needs H and W")
                try:
                    grid = (int(parts[1]), int(parts[2]))
                except ValueError:
                    raise ParseError(f"{path}:{lineno}: grid sizes must be integers") from None
                continue
            if len(parts) != 3:
                raise ParseError(f"{path}:{lineno}: expected `NAME row col`, got {line!r}")
            name = parts[0]
            try:
                r, c = int(parts[1]), int(parts[2])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: row/col must be integers") from None
            if name in placements:
                raise ParseError(f"{path}:{lineno}: duplicate electrode {name!r}")
            placements[name] = (r, c)
    if grid is None:
        raise ParseError(f"{path}: missing `grid H W` header line")
    try:
        return ElectrodeLayout(grid[0], grid[1], placements)
    except ValueError as exc:
        raise LayoutError(f"{path}: {exc}") from None


def save_layout(path, layout: ElectrodeLayout) -> None:
    lines = [f"grid {layout.grid_h} {layout.grid_w}"]
    for name, (r, c) in layout.placements.items():
        lines.append(f"{name} {r} {c}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def grid_layout(channel_names: list[str], grid_h: int, grid_w: int) -> ElectrodeLayout:
    """Place channels row-major on the grid; handy for toy recordings."""
    if len(channel_names) > grid_h * grid_w:
        raise ValueError(
            f"{len(channel_names)} channels do not fit a {grid_h}x{grid_w} grid")
    placements = {name: divmod(i, grid_w) for i, name in enumerate(channel_names)}
    return ElectrodeLayout(grid_h, grid_w, placements)
