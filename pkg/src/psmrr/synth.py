"""Synthetic neonatal breathing on a pressure mat, with known ground truth.

A trial is DC bias + breathing waveform + slow sinusoidal drift + white
noise. Grunting corrupts the expiratory (falling) half of each breath with a
per-cycle amplitude jitter and gated band-limited noise bursts. Position and
mattress labels scale the breathing amplitude and noise to mimic their
signal-to-noise differences; prone and crib are the unscaled reference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import signal

from psmrr.psm_data import DEFAULT_NOISE_FLOOR, Recording, RegionOfInterest, SignalTrace

PATTERNS = ("normal", "grunting")
POSITIONS = ("supine", "prone")
MATTRESSES = ("warmer", "crib")

AMPLITUDE_SCALE = {"supine": 0.7, "prone": 1.0, "warmer": 0.8, "crib": 1.0}
NOISE_SCALE = {"supine": 1.4, "prone": 1.0, "warmer": 1.25, "crib": 1.0}

GRUNT_BAND_HZ = (1.5, 4.0)


@dataclass(frozen=True)
class Drift:
    amplitude: float = 0.0
    frequency: float = 0.03


@dataclass(frozen=True)
class Grunt:
    noise_gain: float = 2.0
    amplitude_jitter: float = 0.2


SUB_BAND_DRIFT = Drift(0.01, 0.03)
# stationary contaminant just above the low band edge; preprocessing can't remove it
NEAR_BAND_DRIFT = Drift(0.08, 0.34)


@dataclass(frozen=True)
class TrialSpec:
    """Parameters of one synthetic trial. Amplitudes are in psi.

    ``grunt.noise_gain`` is relative to the effective breathing amplitude.
    ``harmonic`` is the relative amplitude of the second harmonic in the
    breathing waveform (0 gives a pure sinusoid).
    """

    true_rr_bpm: float
    duration_s: float = 60.0
    frame_rate: float = 20.0
    pattern: str = "normal"
    position: str = "prone"
    mattress: str = "crib"
    breathing_amplitude: float = 0.05
    dc_bias: float = 0.3
    drift: Drift = field(default_factory=lambda: SUB_BAND_DRIFT)
    noise_sigma: float = 0.01
    grunt: Grunt = field(default_factory=Grunt)
    harmonic: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not (self.duration_s > 0 and self.frame_rate > 0):
            raise ValueError("duration and frame rate must be positive")
        if not (0 < self.true_rr_bpm / 60.0 < self.frame_rate / 2):
            raise ValueError(f"breathing at {self.true_rr_bpm} bpm is not resolvable at "
                             f"{self.frame_rate} fps")
        if self.pattern not in PATTERNS:
            raise ValueError(f"pattern must be one of {PATTERNS}")
        if self.position not in POSITIONS:
            raise ValueError(f"position must be one of {POSITIONS}")
        if self.mattress not in MATTRESSES:
            raise ValueError(f"mattress must be one of {MATTRESSES}")
        amps = (self.breathing_amplitude, self.dc_bias, self.drift.amplitude, self.noise_sigma,
                self.grunt.noise_gain, self.grunt.amplitude_jitter, self.harmonic)
        if any(a < 0 or not math.isfinite(a) for a in amps):
            raise ValueError("amplitudes, gains and noise levels must be finite and >= 0")
        if self.drift.frequency < 0:
            raise ValueError("drift frequency must be >= 0")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_s * self.frame_rate))

    def clean(self) -> "TrialSpec":
        """Same rate and timing with every nuisance term switched off."""
        return replace(self, dc_bias=0.0, drift=Drift(0.0, self.drift.frequency),
                       noise_sigma=0.0, harmonic=0.0, pattern="normal",
                       grunt=Grunt(0.0, 0.0))


@dataclass(frozen=True)
class GroundTruth:
    true_rr_bpm: float
    fundamental_hz: float
    spec: TrialSpec


def _band_noise(white: np.ndarray, fs: float) -> np.ndarray:
    low, high = GRUNT_BAND_HZ
    high = min(high, 0.45 * fs)
    if low >= high:
        return white
    sos = signal.butter(2, [low, high], btype="bandpass", fs=fs, output="sos")
    shaped = signal.sosfiltfilt(sos, white)
    sd = shaped.std()
    return shaped / sd if sd > 0 else shaped


def generate_trace(spec: TrialSpec) -> tuple[SignalTrace, GroundTruth]:
    """Average thorax pressure for ``spec``; deterministic given ``spec.seed``."""
    n = spec.n_samples
    fs = spec.frame_rate
    f0 = spec.true_rr_bpm / 60.0
    t = np.arange(n) / fs
    phase = 2 * np.pi * f0 * t

    amp = spec.breathing_amplitude * AMPLITUDE_SCALE[spec.position] * AMPLITUDE_SCALE[spec.mattress]
    sigma = spec.noise_sigma * NOISE_SCALE[spec.position] * NOISE_SCALE[spec.mattress]

    # fixed draw order so every spec with the same seed shares its noise
    rng = np.random.default_rng(spec.seed)
    white = rng.standard_normal(n)
    n_cycles = int(math.floor(f0 * n / fs)) + 1
    jitter = rng.standard_normal(n_cycles)
    burst = _band_noise(rng.standard_normal(n), fs)

    wave = np.sin(phase) + spec.harmonic * np.sin(2 * phase)
    if spec.pattern == "grunting":
        expiring = np.cos(phase) + 2 * spec.harmonic * np.cos(2 * phase) < 0
        cycle = np.minimum((phase // (2 * np.pi)).astype(int), n_cycles - 1)
        scale = 1.0 + spec.grunt.amplitude_jitter * jitter[cycle]
        wave = np.where(expiring, wave * scale, wave)
        wave = wave + np.where(expiring, spec.grunt.noise_gain * burst, 0.0)

    x = (spec.dc_bias + amp * wave
         + spec.drift.amplitude * np.sin(2 * np.pi * spec.drift.frequency * t)
         + sigma * white)
    truth = GroundTruth(spec.true_rr_bpm, f0, spec)
    return SignalTrace(x, fs), truth


def body_template(rows: int, cols: int, roi: RegionOfInterest) -> np.ndarray:
    """Static pressure image: graded values in the ROI, a mix of loaded and
    sub-floor sensels elsewhere."""
    r, c = np.mgrid[0:rows, 0:cols]
    tmpl = np.where((r + c) % 3 == 0, 0.25, 0.05)
    rs, cs = roi.slices()
    tmpl[rs, cs] = 0.1 + 0.05 * (r[rs, cs] + c[rs, cs]) / (rows + cols)
    return tmpl


def generate_recording(spec: TrialSpec, grid: tuple[int, int] = (10, 10),
                       roi: RegionOfInterest | None = None,
                       noise_floor: float = DEFAULT_NOISE_FLOOR) -> tuple[Recording, GroundTruth]:
    """Frame stack whose ROI carries the :func:`generate_trace` signal.

    The trace is added to every ROI sensel on top of a static template. The
    template in the ROI is lifted as needed so no ROI sensel falls below the
    noise floor, which makes the ROI mean equal to trace + constant.
    """
    rows, cols = grid
    if rows < 1 or cols < 1:
        raise ValueError(f"grid must be at least 1x1, got {grid}")
    roi = roi or RegionOfInterest(rows // 4, rows - 1 - rows // 4, cols // 4, cols - 1 - cols // 4)
    roi.check_within(rows, cols)

    trace, truth = generate_trace(spec)
    tmpl = body_template(rows, cols, roi)
    rs, cs = roi.slices()
    lift = noise_floor - (tmpl[rs, cs].min() + trace.samples.min())
    if lift > 0:
        tmpl[rs, cs] += lift + 1e-6

    pressure = np.broadcast_to(tmpl, (len(trace), rows, cols)).copy()
    pressure[:, rs, cs] += trace.samples[:, None, None]
    meta = {
        "position": spec.position,
        "pattern": spec.pattern,
        "mattress": spec.mattress,
        "true_rr_bpm": repr(float(spec.true_rr_bpm)),
        "roi": str(roi),
        "seed": str(spec.seed),
    }
    return Recording(pressure, spec.frame_rate, noise_floor, meta), truth
