"""Frequency-domain respiratory rate: bandpass, periodogram, in-band peak ranking.

The rate is 60 times the frequency of the strongest in-band spectral peak.
The ratio of the strongest to the second-strongest peak power is reported as
a confidence score (larger is better).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal

from psmrr.psm_data import SignalTrace

DEFAULT_BAND = (0.3, 1.5)
DEFAULT_ORDER = 2
DEFAULT_PAD = 4
PEAK_SEPARATION_HZ = 0.05
ROUNDOFF_FLOOR = 1e-12  # maxima below this fraction of the spectrum maximum are rounding noise


class NoEstimateError(RuntimeError):
    """No local spectral maximum inside the search band."""


@dataclass(frozen=True)
class BandpassFilter:
    """Digital Butterworth bandpass as second-order sections.

    ``sos`` rows are ``[b0, b1, b2, 1, a1, a2]``. A prototype of order n
    yields n sections (2n poles).
    """

    low_cut: float
    high_cut: float
    order: int
    sample_rate: float
    sos: np.ndarray

    def response(self, freqs) -> np.ndarray:
        """Complex frequency response at ``freqs`` (Hz)."""
        z = np.exp(-2j * np.pi * np.asarray(freqs, dtype=float) / self.sample_rate)
        h = np.ones_like(z)
        for b0, b1, b2, _, a1, a2 in self.sos:
            h = h * (b0 + b1 * z + b2 * z * z) / (1 + a1 * z + a2 * z * z)
        return h


def design_bandpass(low: float, high: float, order: int = DEFAULT_ORDER,
                    sample_rate: float = 20.0) -> BandpassFilter:
    """Butterworth bandpass via the bilinear transform with prewarped band edges.

    The analog lowpass prototype is shifted to the band with
    s -> (s^2 + w0^2) / (s * bw), then mapped to z with both corners
    prewarped so the -3 dB points land exactly on ``low`` and ``high``.
    """
    if order < 1:
        raise ValueError(f"filter order must be >= 1, got {order}")
    if not (0 < low < high < sample_rate / 2):
        raise ValueError(
            f"band edges must satisfy 0 < low < high < {sample_rate / 2} Hz, got ({low}, {high})")

    fs2 = 2.0 * sample_rate
    w1 = fs2 * math.tan(math.pi * low / sample_rate)
    w2 = fs2 * math.tan(math.pi * high / sample_rate)
    bw = w2 - w1
    w0sq = w1 * w2

    k = np.arange(1, order + 1)
    proto = np.exp(1j * np.pi * (2 * k + order - 1) / (2 * order))
    half = proto * bw / 2
    root = np.sqrt(half * half - w0sq + 0j)
    s_poles = np.concatenate([half + root, half - root])

    z_poles = (fs2 + s_poles) / (fs2 - s_poles)
    # n zeros at s=0 -> z=1 and n at infinity -> z=-1
    gain = (bw * fs2) ** order / np.prod(fs2 - s_poles)
    gain = float(gain.real)

    upper = sorted((p for p in z_poles if p.imag > 1e-12), key=lambda p: abs(p))
    real = sorted(p.real for p in z_poles if abs(p.imag) <= 1e-12)
    denoms = [[1.0, -2.0 * p.real, abs(p) ** 2] for p in upper]
    denoms += [[1.0, -(real[i] + real[i + 1]), real[i] * real[i + 1]]
               for i in range(0, len(real), 2)]
    if len(denoms) != order:
        raise RuntimeError("pole pairing failed")
    sos = np.array([[1.0, 0.0, -1.0] + d for d in denoms])
    sos[0, :3] *= gain
    sos.setflags(write=False)
    return BandpassFilter(float(low), float(high), int(order), float(sample_rate), sos)


def apply_filter(t: SignalTrace, f: BandpassFilter) -> SignalTrace:
    """Single causal pass from zero initial state."""
    if not math.isclose(t.frame_rate, f.sample_rate, rel_tol=1e-12):
        raise ValueError(f"trace rate {t.frame_rate} Hz != filter rate {f.sample_rate} Hz")
    return t.derive(signal.sosfilt(np.array(f.sos), t.samples), "bandpassed")


@dataclass(frozen=True)
class Spectrum:
    freqs: np.ndarray
    power: np.ndarray
    n_fft: int
    n_samples: int

    @property
    def resolution(self) -> float:
        return float(self.freqs[1] - self.freqs[0])


def periodogram(t: SignalTrace, pad_factor: int = DEFAULT_PAD) -> Spectrum:
    """|DFT|^2 / N over 0..fs/2, zero-padded to a power of two >= pad_factor * N."""
    if pad_factor < 1:
        raise ValueError(f"pad_factor must be >= 1, got {pad_factor}")
    n = len(t)
    n_fft = 1
    while n_fft < pad_factor * n:
        n_fft <<= 1
    spec = np.fft.rfft(t.samples, n_fft)
    power = (spec.real ** 2 + spec.imag ** 2) / n
    freqs = np.fft.rfftfreq(n_fft, 1.0 / t.frame_rate)
    return Spectrum(freqs, power, n_fft, n)


@dataclass(frozen=True)
class Peak:
    freq: float
    power: float
    bin: int


def _refine(s: Spectrum, i: int) -> tuple[float, float]:
    ym, y0, yp = s.power[i - 1], s.power[i], s.power[i + 1]
    if min(ym, y0, yp) <= 0:
        return float(s.freqs[i]), float(y0)
    lm, l0, lp = np.log(ym), np.log(y0), np.log(yp)
    denom = lm - 2 * l0 + lp
    if denom >= 0:
        return float(s.freqs[i]), float(y0)
    delta = 0.5 * (lm - lp) / denom
    logp = l0 - 0.25 * (lm - lp) * delta
    return float(s.freqs[i] + delta * s.resolution), float(np.exp(logp))


def find_peaks(s: Spectrum, band: tuple[float, float] = DEFAULT_BAND,
               min_separation: float = PEAK_SEPARATION_HZ) -> list[Peak]:
    """In-band local maxima, strongest first.

    Each peak is refined by a parabola through the log power of the peak bin
    and its neighbours. A peak closer than ``min_separation`` Hz to a stronger
    one is dropped, as is any maximum at rounding-noise level. Returns an
    empty list when the band holds no maximum.
    """
    low, high = band
    if not (low < high) or low < 0 or high > s.freqs[-1]:
        raise ValueError(f"band {band} outside spectrum range 0..{s.freqs[-1]} Hz")
    p = s.power
    idx = np.arange(1, p.size - 1)
    is_max = (p[1:-1] > p[:-2]) & (p[1:-1] > p[2:])
    in_band = (s.freqs[1:-1] >= low) & (s.freqs[1:-1] <= high)
    in_band &= p[1:-1] > ROUNDOFF_FLOOR * p.max()
    candidates = [Peak(*_refine(s, int(i)), int(i)) for i in idx[is_max & in_band]]
    candidates.sort(key=lambda pk: (-pk.power, pk.freq))

    kept: list[Peak] = []
    for pk in candidates:
        if all(abs(pk.freq - q.freq) >= min_separation for q in kept):
            kept.append(pk)
    return kept


@dataclass(frozen=True)
class FdEstimate:
    rr_bpm: float
    f_a: float
    p_a: float
    f_b: float | None
    p_b: float | None
    confidence: float
    stage: str

    @property
    def has_second_peak(self) -> bool:
        return self.f_b is not None


def estimate_rr_fd(t: SignalTrace, band: tuple[float, float] = DEFAULT_BAND,
                   pad_factor: int = DEFAULT_PAD, order: int = DEFAULT_ORDER) -> FdEstimate:
    """Bandpass, periodogram, and pick the strongest in-band peak.

    Raises
    ------
    NoEstimateError
        If the filtered spectrum has no local maximum inside ``band``.
    """
    stage = t.stage
    filt = design_bandpass(band[0], band[1], order, t.frame_rate)
    spec = periodogram(apply_filter(t, filt), pad_factor)
    peaks = find_peaks(spec, band)
    if not peaks:
        raise NoEstimateError(f"no spectral peak in {band[0]}-{band[1]} Hz")
    a = peaks[0]
    if len(peaks) > 1:
        b = peaks[1]
        return FdEstimate(60.0 * a.freq, a.freq, a.power, b.freq, b.power, a.power / b.power, stage)
    return FdEstimate(60.0 * a.freq, a.freq, a.power, None, None, math.inf, stage)
