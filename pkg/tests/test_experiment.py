import re

import pytest

from psmrr import TrialSpec, generate_recording, write_recording
from psmrr.evaluation import SUMMARY_COLUMNS
from psmrr.experiment import (
    DETAIL_COLUMNS,
    DEFAULT_MATRIX,
    MatrixError,
    TrialFailure,
    load_matrix,
    parse_matrix,
    run_batch,
    write_tables,
)


def read_tsv(path):
    lines = path.read_text().splitlines()
    header = lines[0].split("\t")
    return header, [dict(zip(header, ln.split("\t"))) for ln in lines[1:]]


def test_defaults_and_seeds():
    entries = parse_matrix("seed=10\nduration=30\ntrial rr=45\ntrial rr=60 seed=3 duration=40\ntrial rr=75\n")
    assert [e.trial_id for e in entries] == ["T01", "T02", "T03"]
    assert [e.spec.seed for e in entries] == [10, 3, 12]
    assert [e.spec.duration_s for e in entries] == [30, 40, 30]


def test_extra_keys_reach_the_spec():
    (e,) = parse_matrix("trial id=X rr=60 drift_amp=0.08 drift_freq=0.34 grunt_gain=1.5 noise=0")
    assert e.spec.drift.amplitude == 0.08 and e.spec.drift.frequency == 0.34
    assert e.spec.grunt.noise_gain == 1.5 and e.spec.noise_sigma == 0


@pytest.mark.parametrize("text, match", [
    ("seed=1\n", "no trials"),
    ("trial rr=60 colour=red\n", "unknown trial key"),
    ("speed=3\ntrial rr=60\n", "unknown default key"),
    ("trial rr=60 position\n", "key=value"),
    ("trial id=A rr=60\ntrial id=A rr=45\n", "duplicate"),
    ("trial duration=30\n", "needs rr"),
    ("trial rr=60 pattern=sighing\n", "line 1"),
    ("trial rr=abc\n", "line 1"),
])
def test_matrix_errors(text, match):
    with pytest.raises(MatrixError, match=match):
        parse_matrix(text)


def test_file_trials(tmp_path):
    rec, _ = generate_recording(TrialSpec(45, 30, position="supine", seed=4), (6, 6))
    write_recording(rec, tmp_path / "a.psmrec")
    (tmp_path / "m.txt").write_text("trial id=F1 file=a.psmrec\ntrial id=F2 file=a.psmrec rr=50 roi=2:3,2:3\n")
    results = run_batch(load_matrix(tmp_path / "m.txt"))
    assert [r.trial_id for r in results] == ["F1", "F2"]
    assert results[0].true_rr_bpm == 45 and results[0].labels["position"] == "supine"
    assert results[1].true_rr_bpm == 50
    assert results[0].fd["detrended"].rr_bpm == pytest.approx(45, abs=0.5)


def test_missing_file_fails_with_trial_id(tmp_path):
    entries = parse_matrix("trial id=Z9 file=none.psmrec\n", tmp_path)
    with pytest.raises(TrialFailure, match="Z9"):
        run_batch(entries)


def test_single_trial_matrix(tmp_path):
    results = run_batch(parse_matrix("trial id=only rr=60 duration=30\n"))
    summary, detail = write_tables(results, tmp_path)
    header, rows = read_tsv(detail)
    assert header == DETAIL_COLUMNS and len(rows) == 1 and rows[0]["trial_id"] == "only"
    header, rows = read_tsv(summary)
    assert header == SUMMARY_COLUMNS
    assert [(r["condition"], r["class"], r["n_trials"]) for r in rows] == [
        ("position", "prone", "1"), ("pattern", "normal", "1"), ("mattress", "crib", "1")]


def test_default_matrix_summary_has_six_class_rows(tmp_path):
    summary, detail = write_tables(run_batch(parse_matrix(DEFAULT_MATRIX)), tmp_path)
    _, rows = read_tsv(summary)
    assert [(r["class"], r["n_trials"]) for r in rows] == [
        ("supine", "10"), ("prone", "10"), ("normal", "12"), ("grunting", "8"),
        ("warmer", "12"), ("crib", "8")]
    _, trials = read_tsv(detail)
    assert [t["trial_id"] for t in trials] == [f"T{i:02d}" for i in range(1, 21)]


def test_clean_matrix_has_zero_fd_error(tmp_path):
    # clean: no noise, bias, drift, harmonic or grunting, and whole-period durations
    text = re.sub(r"duration=\d+", "duration=60", DEFAULT_MATRIX.replace("grunting", "normal"))
    text += "noise=0\nbias=0\ndrift_amp=0\nharmonic=0\n"
    summary, _ = write_tables(run_batch(parse_matrix(text)), tmp_path)
    _, rows = read_tsv(summary)
    fd_cols = [c for c in SUMMARY_COLUMNS if c.endswith("_fd_err")]
    assert {r[c] for r in rows for c in fd_cols} == {"0.00"}


def test_results_sorted_by_id():
    results = run_batch(parse_matrix("trial id=b rr=60 duration=20\ntrial id=a rr=45 duration=20\n"))
    assert [r.trial_id for r in results] == ["a", "b"]
