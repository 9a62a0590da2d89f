"""Error metrics, per-condition RMS aggregation and the grunting indicator."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from psmrr.fd_estimator import FdEstimate
from psmrr.preprocess import STAGES
from psmrr.td_estimator import TdEstimate

CONDITIONS = {
    "position": ("supine", "prone"),
    "pattern": ("normal", "grunting"),
    "mattress": ("warmer", "crib"),
}
DEFAULT_DIVERGENCE_THRESHOLD = 0.25


def percent_error(estimate: float, truth: float) -> float:
    """100 * |estimate - truth| / truth."""
    if not truth > 0:
        raise ValueError(f"true rate must be positive, got {truth}")
    return 100.0 * abs(estimate - truth) / truth


def rms(values: Sequence[float]) -> float:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("rms of an empty sequence")
    m = np.max(np.abs(v))
    if m == 0 or not np.isfinite(m):
        return float(m)
    # scale first so tiny or huge inputs don't under/overflow when squared
    return float(m * np.sqrt(np.mean((v / m) ** 2)))


@dataclass(frozen=True)
class TrialResult:
    trial_id: str
    labels: Mapping[str, str]
    true_rr_bpm: float
    td: Mapping[str, TdEstimate] = field(default_factory=dict)
    fd: Mapping[str, FdEstimate] = field(default_factory=dict)

    def td_error(self, stage: str) -> float:
        return percent_error(self.td[stage].rr_bpm, self.true_rr_bpm)

    def fd_error(self, stage: str) -> float:
        return percent_error(self.fd[stage].rr_bpm, self.true_rr_bpm)


@dataclass(frozen=True)
class ExperimentSummary:
    """RMS metrics for one class of one experimental condition.

    ``td_rms``, ``fd_rms`` and ``lc_rms`` map stage name to the RMS of the
    time-domain percentage error, frequency-domain percentage error and
    confidence ratio over the class's trials.
    """

    condition: str
    label: str
    n_trials: int
    td_rms: dict[str, float]
    fd_rms: dict[str, float]
    lc_rms: dict[str, float]


def aggregate(results: Sequence[TrialResult], condition: str) -> list[ExperimentSummary]:
    """One summary per class of ``condition``, in canonical class order."""
    if condition not in CONDITIONS:
        raise ValueError(f"unknown condition {condition!r}; choose from {', '.join(CONDITIONS)}")
    groups: dict[str, list[TrialResult]] = {}
    for r in results:
        label = r.labels.get(condition)
        if label is None:
            raise ValueError(f"trial {r.trial_id} has no {condition} label")
        groups.setdefault(label, []).append(r)

    order = list(CONDITIONS[condition]) + sorted(set(groups) - set(CONDITIONS[condition]))
    out = []
    for label in order:
        trials = groups.get(label)
        if not trials:
            continue
        stages = [s for s in STAGES if all(s in t.td and s in t.fd for t in trials)]
        out.append(ExperimentSummary(
            condition=condition,
            label=label,
            n_trials=len(trials),
            td_rms={s: rms([t.td_error(s) for t in trials]) for s in stages},
            fd_rms={s: rms([t.fd_error(s) for t in trials]) for s in stages},
            lc_rms={s: rms([t.fd[s].confidence for t in trials]) for s in stages},
        ))
    return out


@dataclass(frozen=True)
class Divergence:
    value: float
    flagged: bool


def grunting_divergence(td: TdEstimate, fd: FdEstimate,
                        rel_threshold: float = DEFAULT_DIVERGENCE_THRESHOLD) -> Divergence:
    """Relative gap between the two estimates, normalised by the FD rate.

    A large gap suggests grunting, which corrupts the time-domain count but
    leaves the spectral fundamental intact.
    """
    if not fd.rr_bpm > 0:
        raise ValueError("frequency-domain rate must be positive")
    value = abs(td.rr_bpm - fd.rr_bpm) / fd.rr_bpm
    return Divergence(value, value > rel_threshold)


SUMMARY_COLUMNS = (
    ["condition", "class", "n_trials", "raw_fd_err", "raw_td_err"]
    + [f"{s}_{m}" for s in STAGES[1:] for m in ("lc", "td_err", "fd_err")]
)


def _num(v: float) -> str:
    return "inf" if math.isinf(v) else f"{v:.2f}"


def summary_rows(summaries: Sequence[ExperimentSummary]) -> list[list[str]]:
    """Table rows mirroring the aggregate-results layout.

    The raw stage reports FD and TD error; preprocessed stages report the
    confidence ratio and TD error, followed by their FD error.
    """
    rows = []
    for s in summaries:
        row = [s.condition, s.label, str(s.n_trials),
               _num(s.fd_rms["raw"]), _num(s.td_rms["raw"])]
        for stage in STAGES[1:]:
            row += [_num(s.lc_rms[stage]), _num(s.td_rms[stage]), _num(s.fd_rms[stage])]
        rows.append(row)
    return rows
