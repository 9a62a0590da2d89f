"""Respiratory-rate estimation from pressure-sensitive-mat recordings."""

from psmrr.psm_data import (
    DEFAULT_NOISE_FLOOR,
    PressureFrame,
    Recording,
    RecordingFormatError,
    RegionOfInterest,
    SignalTrace,
    extract_avg_pressure,
    load_recording,
    write_recording,
)
from psmrr.preprocess import STAGES, detrend, median_filter, normalize, run_pipeline
from psmrr.td_estimator import TdEstimate, compute_threshold, count_crossings, estimate_rr_td
from psmrr.fd_estimator import (
    BandpassFilter,
    FdEstimate,
    NoEstimateError,
    Peak,
    Spectrum,
    apply_filter,
    design_bandpass,
    estimate_rr_fd,
    find_peaks,
    periodogram,
)
from psmrr.evaluation import (
    Divergence,
    ExperimentSummary,
    TrialResult,
    aggregate,
    grunting_divergence,
    percent_error,
    rms,
)
from psmrr.synth import Drift, Grunt, GroundTruth, TrialSpec, generate_recording, generate_trace

__version__ = "0.1.0"
