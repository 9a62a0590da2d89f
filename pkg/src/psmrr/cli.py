"""Command-line front end: ``psmrr {synth,estimate,trace,spectrum,batch}``.

Exit codes: 0 success, 2 usage, 3 input format, 4 no estimate, 5 internal.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from psmrr.evaluation import DEFAULT_DIVERGENCE_THRESHOLD, grunting_divergence, percent_error
from psmrr.experiment import (
    DEFAULT_MATRIX,
    MatrixError,
    TrialFailure,
    parse_matrix,
    run_batch,
    write_tables,
)
from psmrr.fd_estimator import (
    DEFAULT_BAND,
    DEFAULT_PAD,
    NoEstimateError,
    apply_filter,
    design_bandpass,
    estimate_rr_fd,
    periodogram,
)
from psmrr.preprocess import DEFAULT_MEDIAN_WINDOW, canonical_stage, run_pipeline
from psmrr.psm_data import (
    DEFAULT_NOISE_FLOOR,
    RecordingFormatError,
    RegionOfInterest,
    extract_avg_pressure,
    load_recording,
    write_recording,
)
from psmrr.synth import MATTRESSES, PATTERNS, POSITIONS, SUB_BAND_DRIFT, Drift, Grunt, TrialSpec, generate_recording
from psmrr.td_estimator import THRESHOLD_MODES, estimate_rr_td

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_NO_ESTIMATE = 4
EXIT_INTERNAL = 5


class InputError(Exception):
    pass


def _stage(text: str) -> str:
    try:
        return canonical_stage(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _band(text: str) -> tuple[float, float]:
    try:
        low, high = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"band must be 'low,high' in Hz, got {text!r}") from None
    return low, high


def _odd(text: str) -> int:
    k = int(text)
    if k < 1 or k % 2 == 0:
        raise argparse.ArgumentTypeError(f"median window must be an odd integer >= 1, got {k}")
    return k


def _roi(text: str) -> RegionOfInterest:
    try:
        return RegionOfInterest.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _load_trace(args):
    try:
        rec = load_recording(args.input)
    except FileNotFoundError:
        raise InputError(f"no such file: {args.input}") from None
    except RecordingFormatError as exc:
        raise InputError(f"{args.input}: {exc}") from None
    roi = args.roi
    if roi is None:
        roi = RegionOfInterest.parse(rec.meta["roi"]) if "roi" in rec.meta \
            else RegionOfInterest.full(*rec.grid_shape)
    try:
        trace = extract_avg_pressure(rec, roi)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    if trace.gated_frames:
        print(f"warning: {len(trace.gated_frames)} frame(s) had no sensel above the noise floor",
              file=sys.stderr)
    return rec, trace


def _staged(args):
    rec, trace = _load_trace(args)
    try:
        return rec, run_pipeline(trace, args.stage, args.median_window)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _emit(lines, out):
    text = "\n".join(lines) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_synth(args) -> int:
    spec = TrialSpec(
        true_rr_bpm=args.rr, duration_s=args.duration, frame_rate=args.rate,
        pattern=args.pattern, position=args.position, mattress=args.mattress,
        breathing_amplitude=args.amplitude, dc_bias=args.bias,
        drift=Drift(args.drift_amp, args.drift_freq), noise_sigma=args.noise,
        grunt=Grunt(args.grunt_gain, args.grunt_jitter), harmonic=args.harmonic, seed=args.seed,
    )
    rec, truth = generate_recording(spec, (args.rows, args.cols), args.roi, args.noise_floor)
    write_recording(rec, args.out)
    print(f"wrote={args.out}")
    print(f"frames={rec.frame_count}")
    print(f"true_rr_bpm={truth.true_rr_bpm:g}")
    print(f"roi={rec.meta['roi']}")
    return EXIT_OK


def cmd_estimate(args) -> int:
    if args.method == "fd" and args.threshold_mode is not None:
        raise _Usage("--threshold-mode only applies to --method td or both")
    rec, trace = _staged(args)
    truth = float(rec.meta["true_rr_bpm"]) if "true_rr_bpm" in rec.meta else None
    lines = []
    td = fd = None
    if args.method in ("td", "both"):
        td = estimate_rr_td(trace, args.threshold_mode)
        lines += ["method=td", f"stage={trace.stage}", f"rr_bpm={td.rr_bpm:.6g}",
                  f"threshold={td.threshold:.9g}", f"threshold_mode={td.mode}",
                  f"crossings={td.crossings}"]
        if truth:
            lines.append(f"error_pct={percent_error(td.rr_bpm, truth):.4f}")
    status = EXIT_OK
    if args.method in ("fd", "both"):
        try:
            fd = estimate_rr_fd(trace, args.band, args.pad)
        except NoEstimateError as exc:
            lines += ["method=fd", f"stage={trace.stage}", "rr_bpm=nan", f"error={exc}"]
            status = EXIT_NO_ESTIMATE
        else:
            lines += ["method=fd", f"stage={trace.stage}", f"rr_bpm={fd.rr_bpm:.6g}",
                      f"f_a={fd.f_a:.6g}", f"p_a={fd.p_a:.6g}",
                      f"f_b={'none' if fd.f_b is None else f'{fd.f_b:.6g}'}",
                      f"p_b={'none' if fd.p_b is None else f'{fd.p_b:.6g}'}",
                      f"confidence={fd.confidence:.6g}"]
            if truth:
                lines.append(f"error_pct={percent_error(fd.rr_bpm, truth):.4f}")
    if td is not None and fd is not None:
        div = grunting_divergence(td, fd, args.divergence_threshold)
        lines += [f"divergence={div.value:.6g}", f"grunt_flag={int(div.flagged)}"]
    _emit(lines, None)
    if status == EXIT_NO_ESTIMATE:
        print("error: no spectral peak in the search band", file=sys.stderr)
    return status


def cmd_trace(args) -> int:
    _, trace = _staged(args)
    lines = [f"# stage={trace.stage} frame_rate={trace.frame_rate:g}", "# time_s\tvalue"]
    lines += [f"{t:.6f}\t{v:.9g}" for t, v in zip(trace.times, trace.samples)]
    _emit(lines, args.out)
    return EXIT_OK


def cmd_spectrum(args) -> int:
    _, trace = _staged(args)
    filt = design_bandpass(args.band[0], args.band[1], 2, trace.frame_rate)
    spec = periodogram(apply_filter(trace, filt), args.pad)
    lines = [f"# stage={trace.stage} bandpass={args.band[0]:g}-{args.band[1]:g} "
             f"n_fft={spec.n_fft} n_samples={spec.n_samples}", "# freq_hz\tpower"]
    lines += [f"{f:.6f}\t{p:.9g}" for f, p in zip(spec.freqs, spec.power)]
    _emit(lines, args.out)
    return EXIT_OK


def cmd_batch(args) -> int:
    if args.matrix:
        try:
            text = Path(args.matrix).read_text()
        except FileNotFoundError:
            raise InputError(f"no such file: {args.matrix}") from None
        base = Path(args.matrix).parent
    else:
        text, base = DEFAULT_MATRIX, None
    if args.seed is not None:
        text += f"\nseed={args.seed}\n"
    entries = parse_matrix(text, base)
    results = run_batch(entries, args.median_window, args.band, args.pad)
    summary, detail = write_tables(results, args.out_dir, args.divergence_threshold)
    sys.stdout.write(summary.read_text())
    print(f"# trials={len(results)} summary={summary} detail={detail}")
    return EXIT_OK


class _Usage(Exception):
    pass


def _add_input(p, stage_default="normalized"):
    p.add_argument("input", help="recording file (PSMREC format)")
    p.add_argument("--roi", type=_roi, help="r0:r1,c0:c1 inclusive; default from file meta or full grid")
    p.add_argument("--stage", type=_stage, default=stage_default,
                   help="raw | normalized | detrended | median-filtered")
    p.add_argument("--median-window", type=_odd, default=DEFAULT_MEDIAN_WINDOW)


def _add_fd(p):
    p.add_argument("--pad", type=int, default=DEFAULT_PAD, help="zero-padding factor")
    p.add_argument("--band", type=_band, default=DEFAULT_BAND, help="low,high in Hz")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="psmrr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic recording")
    p.add_argument("--rr", type=float, required=True, help="true rate, breaths/min")
    p.add_argument("--duration", type=float, default=60.0)
    p.add_argument("--rate", type=float, default=20.0, help="frames per second")
    p.add_argument("--pattern", choices=PATTERNS, default="normal")
    p.add_argument("--position", choices=POSITIONS, default="prone")
    p.add_argument("--mattress", choices=MATTRESSES, default="crib")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--amplitude", type=float, default=0.05, help="breathing amplitude, psi")
    p.add_argument("--bias", type=float, default=0.3, help="DC bias, psi")
    p.add_argument("--noise", type=float, default=0.01, help="white-noise sigma, psi")
    p.add_argument("--drift-amp", type=float, default=SUB_BAND_DRIFT.amplitude)
    p.add_argument("--drift-freq", type=float, default=SUB_BAND_DRIFT.frequency)
    p.add_argument("--grunt-gain", type=float, default=Grunt().noise_gain)
    p.add_argument("--grunt-jitter", type=float, default=Grunt().amplitude_jitter)
    p.add_argument("--harmonic", type=float, default=0.1)
    p.add_argument("--rows", type=int, default=10)
    p.add_argument("--cols", type=int, default=10)
    p.add_argument("--roi", type=_roi)
    p.add_argument("--noise-floor", type=float, default=DEFAULT_NOISE_FLOOR)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("estimate", help="estimate the respiratory rate of a recording")
    _add_input(p)
    _add_fd(p)
    p.add_argument("--method", choices=("td", "fd", "both"), default="both")
    p.add_argument("--threshold-mode", choices=THRESHOLD_MODES,
                   help="TD threshold rule; default follows the stage")
    p.add_argument("--divergence-threshold", type=float, default=DEFAULT_DIVERGENCE_THRESHOLD)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("trace", help="emit (time_s, value) at a pipeline stage")
    _add_input(p, "raw")
    p.add_argument("--out")
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("spectrum", help="emit bandpassed (freq_hz, power) at a pipeline stage")
    _add_input(p)
    _add_fd(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("batch", help="run a trial matrix and write RMS summary tables")
    p.add_argument("--matrix", help="matrix file; default is the built-in 20-trial design")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, help="override the matrix base seed")
    p.add_argument("--median-window", type=_odd, default=DEFAULT_MEDIAN_WINDOW)
    p.add_argument("--divergence-threshold", type=float, default=DEFAULT_DIVERGENCE_THRESHOLD)
    _add_fd(p)
    p.set_defaults(func=cmd_batch)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _Usage as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InputError, MatrixError, RecordingFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NoEstimateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_ESTIMATE
    except TrialFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc.cause, NoEstimateError):
            return EXIT_NO_ESTIMATE
        if isinstance(exc.cause, (ValueError, OSError)):
            return EXIT_INPUT
        return EXIT_INTERNAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # pragma: no cover
        print(f"internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
