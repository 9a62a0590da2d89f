"""Recordings from a pressure-sensitive mat and the average-pressure trace.

A recording is a stack of 2D contact-pressure frames (psi) sampled at a fixed
frame rate. The breathing signal is the mean pressure over a rectangular
region of interest (the thorax), where sensels reading below the calibrated
noise floor are left out of the mean.

File format (``PSMREC 1``), line oriented::

    PSMREC 1
    rows=<int> cols=<int> frame_rate=<float> noise_floor=<float>
    meta position=supine pattern=normal ...        (optional line)
    frame 0
    <cols numbers>
    ...                                            (rows lines per frame)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

DEFAULT_NOISE_FLOOR = 0.0773  # psi, neonatal-simulator calibration
MAGIC = "PSMREC"
FORMAT_VERSION = 1


class RecordingFormatError(ValueError):
    """Raised when a recording file or its contents are malformed."""


@dataclass(frozen=True)
class PressureFrame:
    index: int
    grid: np.ndarray

    def __post_init__(self):
        grid = np.array(self.grid, dtype=float)
        if grid.ndim != 2 or grid.size == 0:
            raise ValueError("frame grid must be a non-empty 2D array")
        if not np.all(np.isfinite(grid)) or np.any(grid < 0):
            raise ValueError(f"frame {self.index}: pressures must be finite and >= 0")
        grid.setflags(write=False)
        object.__setattr__(self, "grid", grid)


@dataclass(frozen=True)
class RegionOfInterest:
    """Inclusive sensel rectangle."""

    row_start: int
    row_end: int
    col_start: int
    col_end: int

    def __post_init__(self):
        if self.row_start < 0 or self.col_start < 0:
            raise ValueError("ROI indices must be non-negative")
        if self.row_end < self.row_start or self.col_end < self.col_start:
            raise ValueError("ROI rectangle is empty")

    @classmethod
    def full(cls, rows: int, cols: int) -> "RegionOfInterest":
        return cls(0, rows - 1, 0, cols - 1)

    @classmethod
    def parse(cls, text: str) -> "RegionOfInterest":
        """Parse ``r0:r1,c0:c1`` (inclusive bounds)."""
        try:
            rows, cols = text.split(",")
            r0, r1 = (int(v) for v in rows.split(":"))
            c0, c1 = (int(v) for v in cols.split(":"))
        except ValueError as exc:
            raise ValueError(f"bad ROI {text!r}, expected r0:r1,c0:c1") from exc
        return cls(r0, r1, c0, c1)

    def __str__(self) -> str:
        return f"{self.row_start}:{self.row_end},{self.col_start}:{self.col_end}"

    @property
    def shape(self) -> tuple[int, int]:
        return (self.row_end - self.row_start + 1, self.col_end - self.col_start + 1)

    def check_within(self, rows: int, cols: int) -> None:
        if self.row_end >= rows or self.col_end >= cols:
            raise ValueError(f"ROI {self} outside {rows}x{cols} grid")

    def slices(self) -> tuple[slice, slice]:
        return (slice(self.row_start, self.row_end + 1),
                slice(self.col_start, self.col_end + 1))


@dataclass(frozen=True)
class Recording:
    """A validated stack of pressure frames.

    ``pressure`` has shape (frames, rows, cols). ``meta`` holds free-form
    condition labels such as position, pattern, mattress and true_rr_bpm.
    """

    pressure: np.ndarray
    frame_rate: float
    noise_floor: float = DEFAULT_NOISE_FLOOR
    meta: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        p = np.array(self.pressure, dtype=float)
        if p.ndim != 3 or p.shape[0] == 0 or p.shape[1] == 0 or p.shape[2] == 0:
            raise ValueError("pressure must have shape (frames, rows, cols) with frames >= 1")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise ValueError("pressures must be finite and >= 0")
        if not (self.frame_rate > 0 and math.isfinite(self.frame_rate)):
            raise ValueError(f"frame_rate must be positive, got {self.frame_rate}")
        if not (self.noise_floor >= 0 and math.isfinite(self.noise_floor)):
            raise ValueError(f"noise_floor must be >= 0, got {self.noise_floor}")
        p.setflags(write=False)
        object.__setattr__(self, "pressure", p)
        object.__setattr__(self, "frame_rate", float(self.frame_rate))
        object.__setattr__(self, "noise_floor", float(self.noise_floor))
        object.__setattr__(self, "meta", dict(self.meta))

    @classmethod
    def from_frames(cls, frames: Iterable[PressureFrame], frame_rate: float,
                    noise_floor: float = DEFAULT_NOISE_FLOOR,
                    meta: Mapping[str, str] | None = None) -> "Recording":
        grids = [f.grid for f in frames]
        if not grids:
            raise ValueError("a recording needs at least one frame")
        shape = grids[0].shape
        for i, g in enumerate(grids):
            if g.shape != shape:
                raise ValueError(f"frame {i} has shape {g.shape}, expected {shape}")
        return cls(np.stack(grids), frame_rate, noise_floor, meta or {})

    @property
    def frames(self) -> list[PressureFrame]:
        return [PressureFrame(i, g) for i, g in enumerate(self.pressure)]

    @property
    def frame_count(self) -> int:
        return self.pressure.shape[0]

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.pressure.shape[1], self.pressure.shape[2]

    @property
    def duration(self) -> float:
        return self.frame_count / self.frame_rate


@dataclass(frozen=True)
class SignalTrace:
    """A 1D sampled signal and the ordered list of transforms applied to it."""

    samples: np.ndarray
    frame_rate: float
    stages: tuple[str, ...] = ("raw",)
    gated_frames: tuple[int, ...] = ()

    def __post_init__(self):
        x = np.array(self.samples, dtype=float)
        if x.ndim != 1 or x.size < 2:
            raise ValueError("a trace needs at least 2 samples")
        if not np.all(np.isfinite(x)):
            raise ValueError("trace samples must be finite")
        if not (self.frame_rate > 0 and math.isfinite(self.frame_rate)):
            raise ValueError(f"frame_rate must be positive, got {self.frame_rate}")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "frame_rate", float(self.frame_rate))
        object.__setattr__(self, "stages", tuple(self.stages))
        object.__setattr__(self, "gated_frames", tuple(self.gated_frames))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def stage(self) -> str:
        return self.stages[-1]

    @property
    def duration(self) -> float:
        return self.samples.size / self.frame_rate

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.samples.size) / self.frame_rate

    def derive(self, samples: np.ndarray, stage: str) -> "SignalTrace":
        """New trace with ``stage`` appended to the transform history."""
        return SignalTrace(samples, self.frame_rate, self.stages + (stage,), self.gated_frames)


def extract_avg_pressure(rec: Recording, roi: RegionOfInterest) -> SignalTrace:
    """Mean ROI pressure per frame, excluding sensels below the noise floor.

    Frames with no sensel at or above the floor get a sample of 0.0 and their
    index is listed in ``gated_frames`` of the returned trace.
    """
    roi.check_within(*rec.grid_shape)
    block = rec.pressure[(slice(None),) + roi.slices()].reshape(rec.frame_count, -1)
    keep = block >= rec.noise_floor
    counts = keep.sum(axis=1)
    sums = np.where(keep, block, 0.0).sum(axis=1)
    samples = np.zeros(rec.frame_count)
    ok = counts > 0
    samples[ok] = sums[ok] / counts[ok]
    gated = tuple(int(i) for i in np.flatnonzero(~ok))
    return SignalTrace(samples, rec.frame_rate, ("raw",), gated)


def _fmt(v: float) -> str:
    return repr(float(v))


def write_recording(rec: Recording, path: str | Path) -> None:
    """Write ``rec`` in PSMREC text format; values round-trip bit-exactly."""
    rows, cols = rec.grid_shape
    lines = [
        f"{MAGIC} {FORMAT_VERSION}",
        f"rows={rows} cols={cols} frame_rate={_fmt(rec.frame_rate)} "
        f"noise_floor={_fmt(rec.noise_floor)}",
    ]
    if rec.meta:
        for k, v in rec.meta.items():
            if not k or any(c.isspace() or c == "=" for c in k) or any(c.isspace() for c in str(v)):
                raise ValueError(f"meta entry {k!r}={v!r} cannot contain whitespace")
        lines.append("meta " + " ".join(f"{k}={v}" for k, v in rec.meta.items()))
    for i, grid in enumerate(rec.pressure):
        lines.append(f"frame {i}")
        lines.extend(" ".join(_fmt(v) for v in row) for row in grid)
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_pairs(tokens: list[str], lineno: int) -> dict[str, str]:
    out = {}
    for tok in tokens:
        key, sep, val = tok.partition("=")
        if not sep or not key:
            raise RecordingFormatError(f"line {lineno}: expected key=value, got {tok!r}")
        out[key] = val
    return out


def load_recording(path: str | Path) -> Recording:
    """Parse a PSMREC file.

    Raises
    ------
    FileNotFoundError
        If ``path`` does not exist.
    RecordingFormatError
        On a bad header, inconsistent frame dimensions, invalid frame rate or
        noise floor, or a non-numeric cell.
    """
    lines = Path(path).read_text().splitlines()
    lines = [(n, ln.strip()) for n, ln in enumerate(lines, start=1) if ln.strip()]
    if len(lines) < 2:
        raise RecordingFormatError("file too short for a PSMREC header")

    n, magic = lines[0]
    if magic.split() != [MAGIC, str(FORMAT_VERSION)]:
        raise RecordingFormatError(f"line {n}: expected '{MAGIC} {FORMAT_VERSION}'")

    n, header = lines[1]
    fields = _parse_pairs(header.split(), n)
    try:
        rows = int(fields["rows"])
        cols = int(fields["cols"])
        frame_rate = float(fields["frame_rate"])
        noise_floor = float(fields.get("noise_floor", DEFAULT_NOISE_FLOOR))
    except KeyError as exc:
        raise RecordingFormatError(f"line {n}: header missing {exc.args[0]}") from None
    except ValueError as exc:
        raise RecordingFormatError(f"line {n}: {exc}") from None
    if rows <= 0 or cols <= 0:
        raise RecordingFormatError(f"line {n}: rows and cols must be positive")
    if not (frame_rate > 0 and math.isfinite(frame_rate)):
        raise RecordingFormatError(f"line {n}: frame_rate must be positive")
    if not (noise_floor >= 0 and math.isfinite(noise_floor)):
        raise RecordingFormatError(f"line {n}: noise_floor must be >= 0")

    pos = 2
    meta: dict[str, str] = {}
    if pos < len(lines) and lines[pos][1].split()[0] == "meta":
        n, text = lines[pos]
        meta = _parse_pairs(text.split()[1:], n)
        pos += 1

    grids = []
    last_index = None
    while pos < len(lines):
        n, text = lines[pos]
        parts = text.split()
        if parts[0] != "frame" or len(parts) != 2:
            raise RecordingFormatError(f"line {n}: expected 'frame <index>'")
        try:
            index = int(parts[1])
        except ValueError:
            raise RecordingFormatError(f"line {n}: bad frame index {parts[1]!r}") from None
        if last_index is not None and index <= last_index:
            raise RecordingFormatError(f"line {n}: frame indices must increase")
        last_index = index
        if pos + rows > len(lines) - 1:
            raise RecordingFormatError(f"frame {index}: expected {rows} rows, file ends early")
        grid = np.empty((rows, cols))
        for r in range(rows):
            rn, row_text = lines[pos + 1 + r]
            cells = row_text.split()
            if len(cells) != cols:
                raise RecordingFormatError(
                    f"line {rn}: frame {index} row {r} has {len(cells)} columns, expected {cols}")
            try:
                grid[r] = [float(c) for c in cells]
            except ValueError:
                raise RecordingFormatError(f"line {rn}: non-numeric cell in frame {index}") from None
        if not np.all(np.isfinite(grid)) or np.any(grid < 0):
            raise RecordingFormatError(f"frame {index}: pressures must be finite and >= 0")
        grids.append(grid)
        pos += 1 + rows

    if not grids:
        raise RecordingFormatError("recording has no frames")
    return Recording(np.stack(grids), frame_rate, noise_floor, meta)
