"""Time-domain respiratory rate from threshold-crossing counts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from psmrr.psm_data import SignalTrace

THRESHOLD_MODES = ("raw", "preprocessed")
PERCENTILE = 75.0


@dataclass(frozen=True)
class TdEstimate:
    rr_bpm: float
    threshold: float
    crossings: int
    stage: str
    mode: str


def default_mode(t: SignalTrace) -> str:
    """``raw`` for an untouched trace, ``preprocessed`` once any stage has run."""
    return "raw" if t.stages == ("raw",) else "preprocessed"


def compute_threshold(t: SignalTrace, mode: str) -> float:
    """75th percentile for raw data, half of it for preprocessed data.

    The percentile interpolates linearly between order statistics at
    fractional rank (n - 1) * 0.75.
    """
    if mode not in THRESHOLD_MODES:
        raise ValueError(f"threshold mode must be one of {THRESHOLD_MODES}, got {mode!r}")
    p75 = float(np.percentile(t.samples, PERCENTILE, method="linear"))
    return p75 if mode == "raw" else 0.5 * p75


def count_crossings(t: SignalTrace, threshold: float) -> int:
    """Upward plus downward transitions across ``threshold``.

    A sample equal to the threshold counts as above it.
    """
    above = t.samples >= threshold
    return int(np.count_nonzero(above[1:] != above[:-1]))


def estimate_rr_td(t: SignalTrace, mode: str | None = None) -> TdEstimate:
    """Breaths per minute = crossings / (2 N) * 60 * frame_rate."""
    mode = default_mode(t) if mode is None else mode
    thr = compute_threshold(t, mode)
    c = count_crossings(t, thr)
    rr = c * 60.0 * t.frame_rate / (2 * len(t))
    return TdEstimate(rr, thr, c, t.stage, mode)
