"""Slow, independent reference implementations used only by the tests."""

import math

import numpy as np


def dft_power(x, n_fft):
    """O(N^2) DFT of zero-padded x, |X|^2 / N for bins 0..n_fft/2."""
    n = len(x)
    out = []
    for k in range(n_fft // 2 + 1):
        re = im = 0.0
        for i, v in enumerate(x):
            ang = -2.0 * math.pi * k * i / n_fft
            re += v * math.cos(ang)
            im += v * math.sin(ang)
        out.append((re * re + im * im) / n)
    return np.array(out)


def crossings(x, threshold):
    count = 0
    for i in range(1, len(x)):
        if (x[i - 1] >= threshold) != (x[i] >= threshold):
            count += 1
    return count


def windowed_median(x, k):
    half = k // 2
    n = len(x)
    out = []
    for i in range(n):
        window = [x[min(max(j, 0), n - 1)] for j in range(i - half, i + half + 1)]
        out.append(sorted(window)[half])
    return np.array(out)


def line_fit(y):
    """Closed-form least-squares slope and intercept against the sample index."""
    n = len(y)
    sx = n * (n - 1) / 2
    sxx = (n - 1) * n * (2 * n - 1) / 6
    sy = float(sum(y))
    sxy = float(sum(i * v for i, v in enumerate(y)))
    slope = (n * sxy - sx * sy) / (n * sxx - sx * sx)
    return slope, (sy - slope * sx) / n


def percentile_linear(x, q):
    s = sorted(x)
    rank = (len(s) - 1) * q
    lo = math.floor(rank)
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (rank - lo) * (s[hi] - s[lo])


def butterworth_bandpass_gain(f, low, high, order, fs):
    """Closed-form magnitude of the bilinear Butterworth bandpass at f Hz.

    |H| = 1 / sqrt(1 + ((W^2 - W0^2) / (W * BW))^(2n)) with W the prewarped
    analog frequency of f.
    """
    warp = lambda v: 2 * fs * math.tan(math.pi * v / fs)
    if f <= 0 or f >= fs / 2:
        return 0.0
    w, w1, w2 = warp(f), warp(low), warp(high)
    x = (w * w - w1 * w2) / (w * (w2 - w1))
    return 1.0 / math.sqrt(1.0 + x ** (2 * order))
