"""Whole-recording artifact suppression: mean removal, detrending, median smoothing."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from psmrr.psm_data import SignalTrace

STAGES = ("raw", "normalized", "detrended", "median_filtered")
DEFAULT_MEDIAN_WINDOW = 5  # 0.25 s at 20 fps


def normalize(t: SignalTrace) -> SignalTrace:
    """Subtract the mean of the whole trace (removes the static-load DC bias)."""
    x = t.samples
    return t.derive(x - x.mean(), "normalized")


def _line_residual(x: np.ndarray) -> np.ndarray:
    n = x.size
    idx = np.arange(n, dtype=float)
    xc = idx - idx.mean()
    ym = x.mean()
    slope = np.dot(xc, x - ym) / np.dot(xc, xc)
    return x - ym - slope * xc


def detrend(t: SignalTrace) -> SignalTrace:
    """Remove the least-squares straight line through (index, sample)."""
    return t.derive(_line_residual(t.samples), "detrended")


def median_filter(t: SignalTrace, k: int = DEFAULT_MEDIAN_WINDOW) -> SignalTrace:
    """Centered running median of odd length ``k``; edges replicate the end samples."""
    k = int(k)
    if k < 1 or k % 2 == 0:
        raise ValueError(f"median window must be odd and >= 1, got {k}")
    if k > len(t):
        raise ValueError(f"median window {k} longer than trace ({len(t)} samples)")
    half = k // 2
    padded = np.pad(t.samples, half, mode="edge")
    out = np.median(sliding_window_view(padded, k), axis=-1)
    return t.derive(out, "median_filtered")


def canonical_stage(name: str) -> str:
    """Accept CLI spellings such as ``median-filtered``."""
    stage = name.strip().lower().replace("-", "_")
    if stage not in STAGES:
        raise ValueError(f"unknown stage {name!r}; choose from {', '.join(STAGES)}")
    return stage


def run_pipeline(t: SignalTrace, upto: str, median_window: int = DEFAULT_MEDIAN_WINDOW) -> SignalTrace:
    """Apply normalize -> detrend -> median_filter, stopping after ``upto``."""
    stop = STAGES.index(canonical_stage(upto))
    if stop >= 1:
        t = normalize(t)
    if stop >= 2:
        t = detrend(t)
    if stop >= 3:
        t = median_filter(t, median_window)
    return t


def all_stages(t: SignalTrace, median_window: int = DEFAULT_MEDIAN_WINDOW) -> dict[str, SignalTrace]:
    """Every pipeline stage of ``t``, computed incrementally."""
    out = {"raw": t}
    out["normalized"] = normalize(t)
    out["detrended"] = detrend(out["normalized"])
    out["median_filtered"] = median_filter(out["detrended"], median_window)
    return out
