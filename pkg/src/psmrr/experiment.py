"""Batch experiments: trial matrices, per-trial evaluation, and table output.

A matrix file is line oriented. Blank lines and ``#`` comments are ignored.
``key=value`` lines set defaults for every trial; ``trial key=value ...``
lines declare one trial each. Trials are synthetic unless they name a
recording with ``file=`` (optionally with ``roi=r0:r1,c0:c1``)::

    seed=2018
    duration=60
    trial id=T01 rr=60 position=supine pattern=normal mattress=warmer
    trial id=T02 rr=45 position=prone pattern=grunting mattress=crib duration=30
    trial id=T03 file=bench/t03.psmrec roi=3:6,2:7

Unless a trial sets ``seed``, trial i (0-based, file order) uses ``seed + i``.

Recognised keys (defaults or per trial): rr, duration, rate, position,
pattern, mattress, amplitude, bias, noise, drift_amp, drift_freq,
grunt_gain, grunt_jitter, harmonic, seed; per trial only: id, file, roi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from psmrr.evaluation import (
    CONDITIONS,
    DEFAULT_DIVERGENCE_THRESHOLD,
    TrialResult,
    aggregate,
    grunting_divergence,
    SUMMARY_COLUMNS,
    summary_rows,
)
from psmrr.fd_estimator import DEFAULT_BAND, DEFAULT_PAD, estimate_rr_fd
from psmrr.preprocess import DEFAULT_MEDIAN_WINDOW, STAGES, all_stages
from psmrr.psm_data import RegionOfInterest, SignalTrace, extract_avg_pressure, load_recording
from psmrr.synth import SUB_BAND_DRIFT, Drift, Grunt, TrialSpec, generate_trace
from psmrr.td_estimator import estimate_rr_td

DIVERGENCE_STAGE = "median_filtered"

SPEC_KEYS = {
    "rr": ("true_rr_bpm", float),
    "duration": ("duration_s", float),
    "rate": ("frame_rate", float),
    "position": ("position", str),
    "pattern": ("pattern", str),
    "mattress": ("mattress", str),
    "amplitude": ("breathing_amplitude", float),
    "bias": ("dc_bias", float),
    "noise": ("noise_sigma", float),
    "harmonic": ("harmonic", float),
    "seed": ("seed", int),
}
EXTRA_KEYS = {"drift_amp", "drift_freq", "grunt_gain", "grunt_jitter"}
TRIAL_ONLY_KEYS = {"id", "file", "roi"}

# 20 trials: 10 supine / 10 prone, 12 normal / 8 grunting, 12 warmer / 8 crib
DEFAULT_MATRIX = """\
# aggregate-results trial design, synthetic stand-in
seed=2018
rate=20
trial id=T01 rr=60 position=supine pattern=normal   mattress=warmer duration=45
trial id=T02 rr=45 position=supine pattern=normal   mattress=warmer duration=30
trial id=T03 rr=75 position=supine pattern=normal   mattress=warmer duration=60
trial id=T04 rr=60 position=supine pattern=normal   mattress=warmer duration=80
trial id=T05 rr=45 position=supine pattern=grunting mattress=warmer duration=55
trial id=T06 rr=75 position=supine pattern=grunting mattress=warmer duration=70
trial id=T07 rr=60 position=prone  pattern=normal   mattress=warmer duration=40
trial id=T08 rr=45 position=prone  pattern=normal   mattress=warmer duration=65
trial id=T09 rr=75 position=prone  pattern=normal   mattress=warmer duration=50
trial id=T10 rr=60 position=prone  pattern=normal   mattress=warmer duration=35
trial id=T11 rr=45 position=prone  pattern=grunting mattress=warmer duration=75
trial id=T12 rr=75 position=prone  pattern=grunting mattress=warmer duration=60
trial id=T13 rr=45 position=supine pattern=normal   mattress=crib   duration=60
trial id=T14 rr=60 position=supine pattern=normal   mattress=crib   duration=30
trial id=T15 rr=75 position=supine pattern=grunting mattress=crib   duration=45
trial id=T16 rr=60 position=supine pattern=grunting mattress=crib   duration=80
trial id=T17 rr=45 position=prone  pattern=normal   mattress=crib   duration=55
trial id=T18 rr=75 position=prone  pattern=normal   mattress=crib   duration=40
trial id=T19 rr=60 position=prone  pattern=grunting mattress=crib   duration=70
trial id=T20 rr=45 position=prone  pattern=grunting mattress=crib   duration=50
"""


class MatrixError(ValueError):
    """Malformed experiment matrix."""


@dataclass(frozen=True)
class TrialEntry:
    trial_id: str
    spec: TrialSpec | None = None
    file: Path | None = None
    roi: RegionOfInterest | None = None
    labels: Mapping[str, str] | None = None
    true_rr_bpm: float | None = None


def _pairs(tokens: Sequence[str], lineno: int) -> dict[str, str]:
    out = {}
    for tok in tokens:
        key, sep, val = tok.partition("=")
        if not sep or not key or not val:
            raise MatrixError(f"line {lineno}: expected key=value, got {tok!r}")
        out[key] = val
    return out


def _spec_from(fields: Mapping[str, str], seed: int, lineno: int) -> TrialSpec:
    kwargs = {}
    try:
        for key, (name, conv) in SPEC_KEYS.items():
            if key in fields:
                kwargs[name] = conv(fields[key])
        kwargs.setdefault("seed", seed)
        drift = Drift(float(fields.get("drift_amp", SUB_BAND_DRIFT.amplitude)),
                      float(fields.get("drift_freq", SUB_BAND_DRIFT.frequency)))
        grunt = Grunt(float(fields.get("grunt_gain", Grunt().noise_gain)),
                      float(fields.get("grunt_jitter", Grunt().amplitude_jitter)))
        if "true_rr_bpm" not in kwargs:
            raise MatrixError(f"line {lineno}: synthetic trial needs rr=")
        return TrialSpec(drift=drift, grunt=grunt, **kwargs)
    except MatrixError:
        raise
    except ValueError as exc:
        raise MatrixError(f"line {lineno}: {exc}") from None


def parse_matrix(text: str, base_dir: Path | None = None) -> list[TrialEntry]:
    """Parse a matrix description into trial entries (in file order)."""
    defaults: dict[str, str] = {}
    raw_trials: list[tuple[int, dict[str, str]]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if tokens[0] == "trial":
            raw_trials.append((lineno, _pairs(tokens[1:], lineno)))
            continue
        fields = _pairs(tokens, lineno)
        bad = set(fields) - set(SPEC_KEYS) - EXTRA_KEYS
        if bad:
            raise MatrixError(f"line {lineno}: unknown default key(s) {sorted(bad)}")
        defaults.update(fields)

    if not raw_trials:
        raise MatrixError("matrix declares no trials")
    try:
        base_seed = int(defaults.get("seed", 0))
    except ValueError:
        raise MatrixError(f"bad default seed {defaults['seed']!r}") from None
    entries = []
    seen = set()
    for i, (lineno, fields) in enumerate(raw_trials):
        bad = set(fields) - set(SPEC_KEYS) - EXTRA_KEYS - TRIAL_ONLY_KEYS
        if bad:
            raise MatrixError(f"line {lineno}: unknown trial key(s) {sorted(bad)}")
        trial_id = fields.get("id", f"T{i + 1:02d}")
        if trial_id in seen:
            raise MatrixError(f"line {lineno}: duplicate trial id {trial_id}")
        seen.add(trial_id)
        merged = {**defaults, **fields}
        if "file" in fields:
            path = Path(fields["file"])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            roi = RegionOfInterest.parse(fields["roi"]) if "roi" in fields else None
            labels = {k: merged[k] for k in CONDITIONS if k in merged}
            rr = float(merged["rr"]) if "rr" in merged else None
            entries.append(TrialEntry(trial_id, file=path, roi=roi, labels=labels, true_rr_bpm=rr))
        else:
            merged.pop("seed", None)
            try:
                seed = int(fields["seed"]) if "seed" in fields else base_seed + i
            except ValueError:
                raise MatrixError(f"line {lineno}: bad seed {fields['seed']!r}") from None
            entries.append(TrialEntry(trial_id, spec=_spec_from(merged, seed, lineno)))
    return entries


def load_matrix(path: str | Path) -> list[TrialEntry]:
    path = Path(path)
    return parse_matrix(path.read_text(), base_dir=path.parent)


def entry_trace(entry: TrialEntry) -> tuple[SignalTrace, dict[str, str], float]:
    """Raw trace, condition labels and true rate for one matrix entry."""
    if entry.spec is not None:
        s = entry.spec
        trace, truth = generate_trace(s)
        labels = {"position": s.position, "pattern": s.pattern, "mattress": s.mattress}
        return trace, labels, truth.true_rr_bpm
    rec = load_recording(entry.file)
    roi = entry.roi
    if roi is None:
        roi = (RegionOfInterest.parse(rec.meta["roi"]) if "roi" in rec.meta
               else RegionOfInterest.full(*rec.grid_shape))
    labels = {k: rec.meta[k] for k in CONDITIONS if k in rec.meta}
    labels.update(entry.labels or {})
    rr = entry.true_rr_bpm
    if rr is None:
        if "true_rr_bpm" not in rec.meta:
            raise MatrixError(f"trial {entry.trial_id}: true rate unknown (no rr= or meta)")
        rr = float(rec.meta["true_rr_bpm"])
    return extract_avg_pressure(rec, roi), labels, rr


def evaluate_trace(trial_id: str, trace: SignalTrace, labels: Mapping[str, str],
                   true_rr_bpm: float, median_window: int = DEFAULT_MEDIAN_WINDOW,
                   band: tuple[float, float] = DEFAULT_BAND,
                   pad_factor: int = DEFAULT_PAD) -> TrialResult:
    """Run both estimators at every pipeline stage."""
    stages = all_stages(trace, median_window)
    td = {s: estimate_rr_td(t) for s, t in stages.items()}
    fd = {s: estimate_rr_fd(t, band, pad_factor) for s, t in stages.items()}
    return TrialResult(trial_id, dict(labels), float(true_rr_bpm), td, fd)


class TrialFailure(RuntimeError):
    def __init__(self, trial_id: str, cause: Exception):
        super().__init__(f"trial {trial_id} failed: {cause}")
        self.trial_id = trial_id
        self.cause = cause


def run_batch(entries: Sequence[TrialEntry], median_window: int = DEFAULT_MEDIAN_WINDOW,
              band: tuple[float, float] = DEFAULT_BAND,
              pad_factor: int = DEFAULT_PAD) -> list[TrialResult]:
    """Evaluate every entry; results sorted by trial id."""
    results = []
    for entry in entries:
        try:
            trace, labels, rr = entry_trace(entry)
            results.append(evaluate_trace(entry.trial_id, trace, labels, rr,
                                          median_window, band, pad_factor))
        except Exception as exc:
            raise TrialFailure(entry.trial_id, exc) from exc
    return sorted(results, key=lambda r: r.trial_id)


def summarize(results: Sequence[TrialResult]) -> list:
    """Per-class summaries for each condition every trial is labelled with."""
    out = []
    for condition in CONDITIONS:
        if all(condition in r.labels for r in results):
            out.extend(aggregate(results, condition))
    return out


DETAIL_COLUMNS = (
    ["trial_id", "position", "pattern", "mattress", "true_rr_bpm"]
    + [f"{s}_{m}" for s in STAGES
       for m in ("td_bpm", "td_err", "td_threshold", "td_crossings", "fd_bpm", "fd_err", "lc")]
    + ["divergence", "grunt_flag"]
)


def _f(v: float, digits: int = 6) -> str:
    return "inf" if math.isinf(v) else f"{v:.{digits}f}"


def detail_rows(results: Sequence[TrialResult],
                rel_threshold: float = DEFAULT_DIVERGENCE_THRESHOLD) -> list[list[str]]:
    rows = []
    for r in results:
        row = [r.trial_id] + [r.labels.get(k, "") for k in CONDITIONS] + [_f(r.true_rr_bpm, 3)]
        for s in STAGES:
            td, fd = r.td[s], r.fd[s]
            row += [_f(td.rr_bpm), _f(r.td_error(s)), f"{td.threshold:.9g}", str(td.crossings),
                    _f(fd.rr_bpm), _f(r.fd_error(s)), _f(fd.confidence)]
        div = grunting_divergence(r.td[DIVERGENCE_STAGE], r.fd[DIVERGENCE_STAGE], rel_threshold)
        row += [_f(div.value), "1" if div.flagged else "0"]
        rows.append(row)
    return rows


def _tsv(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    return "\n".join("\t".join(r) for r in [list(header), *rows]) + "\n"


def write_tables(results: Sequence[TrialResult], out_dir: str | Path,
                 rel_threshold: float = DEFAULT_DIVERGENCE_THRESHOLD) -> tuple[Path, Path]:
    """Write ``summary.tsv`` and ``trials.tsv`` into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = out_dir / "summary.tsv"
    detail = out_dir / "trials.tsv"
    summary.write_text(_tsv(SUMMARY_COLUMNS, summary_rows(summarize(results))))
    detail.write_text(_tsv(DETAIL_COLUMNS, detail_rows(results, rel_threshold)))
    return summary, detail
