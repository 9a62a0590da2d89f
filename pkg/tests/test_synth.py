import numpy as np
import pytest

from oracles import crossings
from psmrr import (
    Drift,
    Grunt,
    Recording,
    RegionOfInterest,
    TrialSpec,
    estimate_rr_fd,
    estimate_rr_td,
    extract_avg_pressure,
    generate_recording,
    generate_trace,
    normalize,
    periodogram,
    run_pipeline,
)
from psmrr.evaluation import percent_error
from psmrr.fd_estimator import find_peaks

PURE = dict(dc_bias=0.0, drift=Drift(0.0), noise_sigma=0.0, harmonic=0.0, breathing_amplitude=1.0)


def test_clean_case_is_pure_sinusoid():
    tr, truth = generate_trace(TrialSpec(45, 60, 20, **PURE))
    assert len(tr) == 1200
    expected = np.sin(2 * np.pi * 0.75 * np.arange(1200) / 20)
    np.testing.assert_allclose(tr.samples, expected, atol=1e-12)
    assert truth.fundamental_hz * 60 == truth.true_rr_bpm
    assert truth.fundamental_hz == 0.75


def test_deterministic_per_seed():
    spec = TrialSpec(60, 40, pattern="grunting", drift=Drift(0.05, 0.1), seed=11)
    a, _ = generate_trace(spec)
    b, _ = generate_trace(spec)
    np.testing.assert_array_equal(a.samples, b.samples)
    c, _ = generate_trace(TrialSpec(60, 40, pattern="grunting", drift=Drift(0.05, 0.1), seed=12))
    assert not np.array_equal(a.samples, c.samples)


def test_clean_45_bpm_has_45_cycles():
    tr, _ = generate_trace(TrialSpec(45, 60).clean())
    x = tr.samples
    # the first sample sits on the mean, so the boundary crossing is lost
    assert crossings(x, x.mean()) in (89, 90)
    assert round(crossings(x, x.mean()) / 2) == 45


@pytest.mark.parametrize("rr", [45, 60, 75])
def test_clean_case_fidelity(rr):
    tr, _ = generate_trace(TrialSpec(rr, 60, noise_sigma=0.02, seed=3).clean())
    assert estimate_rr_td(normalize(tr)).rr_bpm == rr
    assert estimate_rr_fd(normalize(tr)).rr_bpm == pytest.approx(rr, abs=0.5)


@pytest.mark.parametrize("rr", [45, 60, 75])
def test_spectral_placement(rr):
    tr, truth = generate_trace(TrialSpec(rr, 50).clean())
    s = periodogram(tr, 4)
    top = find_peaks(s, (0.3, 1.5))[0]
    assert abs(top.freq - truth.fundamental_hz) <= s.resolution


def test_grunting_monotone_in_gain():
    means = []
    for gain in (0.0, 0.5, 1.0, 2.0, 4.0):
        errs = [percent_error(estimate_rr_td(run_pipeline(
            generate_trace(TrialSpec(60, pattern="grunting", grunt=Grunt(gain), seed=s))[0],
            "median_filtered")).rr_bpm, 60) for s in range(20)]
        means.append(np.mean(errs))
    assert all(b >= a for a, b in zip(means, means[1:])), means


def test_conditions_scale_signal_to_noise():
    def snr(position, mattress):
        base = dict(position=position, mattress=mattress, dc_bias=0.0, drift=Drift(0.0), harmonic=0.0)
        signal_only, _ = generate_trace(TrialSpec(60, noise_sigma=0.0, **base))
        noise_only, _ = generate_trace(TrialSpec(60, breathing_amplitude=0.0, **base))
        return np.std(signal_only.samples) / np.std(noise_only.samples)
    assert snr("prone", "crib") > snr("supine", "crib")
    assert snr("prone", "crib") > snr("prone", "warmer")
    assert snr("supine", "warmer") < min(snr("supine", "crib"), snr("prone", "warmer"))


@pytest.mark.parametrize("kwargs", [
    dict(true_rr_bpm=0), dict(true_rr_bpm=600), dict(duration_s=0), dict(frame_rate=-1),
    dict(pattern="sighing"), dict(position="side"), dict(mattress="floor"),
    dict(noise_sigma=-0.1), dict(breathing_amplitude=float("nan")), dict(seed=-1),
    dict(drift=Drift(0.1, -1.0)),
])
def test_spec_validation(kwargs):
    args = {"true_rr_bpm": 45, **kwargs}
    with pytest.raises(ValueError):
        TrialSpec(**args)


def test_recording_recovers_trace_up_to_constant():
    spec = TrialSpec(45, 30, pattern="grunting", seed=5)
    rec, _ = generate_recording(spec, (8, 6), RegionOfInterest(2, 5, 1, 4), noise_floor=0.0)
    tr, _ = generate_trace(spec)
    got = extract_avg_pressure(rec, RegionOfInterest(2, 5, 1, 4)).samples
    diff = got - tr.samples
    np.testing.assert_allclose(diff, diff[0], atol=1e-9)
    assert rec.meta["true_rr_bpm"] == "45.0" and rec.meta["roi"] == "2:5,1:4"


def test_single_sensel_roi_is_that_sensel():
    roi = RegionOfInterest(3, 3, 4, 4)
    rec, _ = generate_recording(TrialSpec(60, 20), (7, 7), roi)
    t = extract_avg_pressure(rec, roi)
    np.testing.assert_array_equal(t.samples, rec.pressure[:, 3, 4])


def test_off_roi_sensels_do_not_leak():
    roi = RegionOfInterest(2, 4, 2, 4)
    rec, _ = generate_recording(TrialSpec(60, 20, seed=2), (8, 8), roi)
    outside = np.ones((8, 8), bool)
    outside[2:5, 2:5] = False
    assert np.any(rec.pressure[:, outside] == 0.05)
    assert np.any(rec.pressure[:, outside] > rec.noise_floor)
    # the ROI never drops below the floor, so the trace is its plain mean
    assert rec.pressure[:, 2:5, 2:5].min() >= rec.noise_floor
    base = extract_avg_pressure(rec, roi).samples
    altered = rec.pressure.copy()
    altered[:, outside] = 9.0
    other = Recording(altered, rec.frame_rate, rec.noise_floor)
    np.testing.assert_array_equal(extract_avg_pressure(other, roi).samples, base)
    # loaded sensels exist in every frame, so no frame is gated on the full grid
    full = extract_avg_pressure(rec, RegionOfInterest.full(8, 8))
    assert not full.gated_frames


def test_recording_rejects_bad_roi():
    with pytest.raises(ValueError):
        generate_recording(TrialSpec(60, 10), (4, 4), RegionOfInterest(0, 4, 0, 1))
    with pytest.raises(ValueError):
        generate_recording(TrialSpec(60, 10), (0, 4))
