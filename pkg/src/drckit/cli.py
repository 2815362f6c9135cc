"""Command-line entry point wiring the toolkit into reproducible subcommands."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import analysis, corpus, metrics
from .compressor import compress
from .core import (
    AudioClip,
    DrcParams,
    ProfileCatalog,
    UnknownCatalog,
    builtin_catalog,
    load_catalog,
    parse_profile_obj,
)
from .inverter import SolverKind, invert

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PROCESSING = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad flags; the CLI contract wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0, help="RNG seed for seeded operations (default 0)")
    parser.add_argument("--solver", choices=["newton", "hybrid"], default="hybrid",
                        help="root finder used by inversion (default hybrid)")
    parser.add_argument("--tol", type=float, default=1e-12,
                        help="characteristic-function residual tolerance (default 1e-12)")


def _merged_builtin() -> ProfileCatalog:
    entries = list(builtin_catalog("small"))
    known = {e.label for e in entries}
    entries += [e for e in builtin_catalog("large") if e.label not in known]
    return ProfileCatalog(entries)


def _resolve_catalog(name: str) -> ProfileCatalog:
    if name in ("small", "large"):
        return builtin_catalog(name)
    path = Path(name)
    if not path.exists():
        raise UsageError(f"--catalog {name!r} is neither a builtin name nor an existing file")
    return load_catalog(path)


def _resolve_params(args) -> DrcParams:
    if args.profile is not None:
        try:
            entry = _merged_builtin().get(args.profile)
        except KeyError:
            raise UsageError(f"unknown profile label {args.profile!r}")
        if entry.params is None:
            raise UsageError(f"profile {args.profile!r} is the neutral class and has no parameters")
        return entry.params
    with open(args.params, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if isinstance(data, list):
        if len(data) != 1:
            raise UsageError(f"--params file must hold exactly one profile, found {len(data)}")
        data = data[0]
    if not isinstance(data, dict):
        raise UsageError("--params file must contain a profile object")
    data.setdefault("label", "custom")
    try:
        return parse_profile_obj(data).params
    except ValueError as exc:
        raise UsageError(f"--params file: {exc}")


def _load_corpus(corpus_dir, clip_secs: float, gate_db: float) -> list[AudioClip]:
    clips = []
    for path in sorted(Path(corpus_dir).glob("*.wav"), key=str):
        try:
            clip = corpus.read_audio(path)
        except ValueError as exc:
            print(f"skipping {path}: {exc}", file=sys.stderr)
            continue
        chunks = corpus.chunk_and_gate(clip, clip_secs, gate_db)
        if not chunks:
            print(f"skipping {path}: no retained {clip_secs}s chunk above {gate_db} dBFS",
                  file=sys.stderr)
            continue
        clips.append(chunks[0][1])
    return clips


def _emit(text: str, path) -> None:
    if path is None:
        print(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")


def build_parser() -> _Parser:
    parser = _Parser(prog="drckit", description="Reversible dynamic range compression toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compress", help="apply a compressor profile to a WAV file")
    _common_flags(p)
    grp = p.add_mutually_exclusive_group(required=True)
    grp.add_argument("--profile", help="built-in profile label (A-E or 1-30)")
    grp.add_argument("--params", help="JSON file with one profile object (times in ms)")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--trace", help="write the per-sample internal state as CSV")
    p.add_argument("--format", choices=["pcm16", "float32"], default="float32")

    p = sub.add_parser("invert", help="reconstruct the original signal from a compressed WAV")
    _common_flags(p)
    grp = p.add_mutually_exclusive_group(required=True)
    grp.add_argument("--profile", help="built-in profile label (A-E or 1-30)")
    grp.add_argument("--params", help="JSON file with one profile object (times in ms)")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--diagnostics", help="write inversion diagnostics as JSON")
    p.add_argument("--format", choices=["pcm16", "float32"], default="float32")

    p = sub.add_parser("eval", help="compute MSE, log-mel L2 and SI-SDR between two WAVs")
    _common_flags(p)
    p.add_argument("--ref", required=True)
    p.add_argument("--est", required=True)
    p.add_argument("--report", help="write the metric report JSON here instead of stdout")

    p = sub.add_parser("dataset", help="dataset construction commands")
    dsub = p.add_subparsers(dest="dataset_command", required=True)
    d = dsub.add_parser("build", help="chunk, gate and compress a directory of WAVs")
    _common_flags(d)
    d.add_argument("--input-dir", required=True)
    d.add_argument("--catalog", default="small", help='"small", "large" or a profile JSON file')
    d.add_argument("--chunk-secs", type=float, default=5.0)
    d.add_argument("--gate-db", type=float, default=-30.0)
    d.add_argument("--out-dir", required=True)
    d.add_argument("--manifest", required=True)

    p = sub.add_parser("augment", help="noise augmentation and its SNR schedule")
    _common_flags(p)
    asub = p.add_subparsers(dest="augment_command")
    s = asub.add_parser("schedule", help="print the scheduled SNR for an epoch")
    s.add_argument("--epoch", type=int, required=True)
    p.add_argument("--input")
    p.add_argument("--snr-db", type=float)
    p.add_argument("--output")

    p = sub.add_parser("sweep", help="parameter-sensitivity sweep over a corpus")
    _common_flags(p)
    p.add_argument("--corpus", required=True, help="directory of WAV files")
    p.add_argument("--catalog", default="small")
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--range", type=float, default=0.5, dest="range_frac")
    p.add_argument("--clip-secs", type=float, default=1.0)
    p.add_argument("--gate-db", type=float, default=-30.0)
    p.add_argument("--out", required=True, help="per-cell results CSV")
    p.add_argument("--summary", help="optional per-parameter box-statistics CSV")

    p = sub.add_parser("bench", help="benchmark harnesses")
    bsub = p.add_subparsers(dest="bench_command", required=True)
    b = bsub.add_parser("solvers", help="compare the two root finders on a corpus")
    _common_flags(b)
    b.add_argument("--corpus", required=True)
    b.add_argument("--catalog", default="small")
    b.add_argument("--clip-secs", type=float, default=5.0)
    b.add_argument("--gate-db", type=float, default=-30.0)
    b.add_argument("--out", help="report JSON path (default stdout)")

    p = sub.add_parser("identify", help="rank catalog profiles by inversion self-consistency")
    _common_flags(p)
    p.add_argument("--input", required=True)
    p.add_argument("--catalog", default="small")
    p.add_argument("--out", help="report JSON path (default stdout)")

    return parser


def _cmd_compress(args) -> int:
    params = _resolve_params(args)
    clip = corpus.read_audio(args.input)
    y, trace = compress(clip, params, with_trace=args.trace is not None)
    corpus.write_audio(y, args.output, args.format)
    if args.trace is not None:
        trace.write_csv(args.trace)
    return EXIT_OK


def _cmd_invert(args) -> int:
    params = _resolve_params(args)
    clip = corpus.read_audio(args.input)
    x_hat, diag = invert(clip, params, solver=SolverKind(args.solver), tol=args.tol)
    corpus.write_audio(x_hat, args.output, args.format)
    if args.diagnostics is not None:
        diag.write_json(args.diagnostics)
    return EXIT_OK


def _cmd_eval(args) -> int:
    ref = corpus.read_audio(args.ref)
    est = corpus.read_audio(args.est)
    report = metrics.evaluate(est, ref)
    _emit(report.to_json(), args.report)
    return EXIT_OK


def _cmd_dataset_build(args) -> int:
    catalog = _resolve_catalog(args.catalog)
    manifest = corpus.build_dataset(
        args.input_dir, catalog, args.chunk_secs, args.gate_db, args.out_dir
    )
    corpus.write_manifest(manifest, args.manifest)
    print(f"wrote {len(manifest)} files to {args.out_dir}; manifest {args.manifest}")
    return EXIT_OK


def _cmd_augment(args) -> int:
    if args.augment_command == "schedule":
        value = corpus.snr_at_epoch(corpus.SnrSchedule(), args.epoch)
        print("%g" % value)
        return EXIT_OK
    if args.input is None or args.snr_db is None or args.output is None:
        raise UsageError("augment requires --input, --snr-db and --output")
    clip = corpus.read_audio(args.input)
    noisy = corpus.inject_noise_at_snr(clip, args.snr_db, args.seed)
    corpus.write_audio(noisy, args.output, "float32")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    clips = _load_corpus(args.corpus, args.clip_secs, args.gate_db)
    if not clips:
        raise ValueError(f"no usable clips in {args.corpus}")
    catalog = _resolve_catalog(args.catalog)
    result = analysis.perturbation_sweep(
        clips, catalog, steps=args.steps, range_frac=args.range_frac,
        solver=SolverKind(args.solver), tol=args.tol,
    )
    result.write_csv(args.out)
    if args.summary is not None:
        analysis.write_box_summary_csv(result, args.summary)
    print(f"wrote {len(result.rows)} sweep rows to {args.out}")
    return EXIT_OK


def _cmd_bench_solvers(args) -> int:
    clips = _load_corpus(args.corpus, args.clip_secs, args.gate_db)
    if not clips:
        raise ValueError(f"no usable clips in {args.corpus}")
    catalog = _resolve_catalog(args.catalog)
    newton, hybrid = analysis.solver_benchmark(clips, catalog, tol=args.tol)
    _emit(analysis.solver_reports_to_json([newton, hybrid]), args.out)
    return EXIT_OK


def _cmd_identify(args) -> int:
    clip = corpus.read_audio(args.input)
    catalog = _resolve_catalog(args.catalog)
    report = analysis.identify_profile(clip, catalog, solver=SolverKind(args.solver), tol=args.tol)
    _emit(report.to_json(), args.out)
    return EXIT_OK


def dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "compress":
            return _cmd_compress(args)
        if args.command == "invert":
            return _cmd_invert(args)
        if args.command == "eval":
            return _cmd_eval(args)
        if args.command == "dataset":
            return _cmd_dataset_build(args)
        if args.command == "augment":
            return _cmd_augment(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        if args.command == "bench":
            return _cmd_bench_solvers(args)
        if args.command == "identify":
            return _cmd_identify(args)
        raise UsageError(f"unknown command {args.command!r}")
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UnknownCatalog as exc:
        print(f"error: unknown catalog {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, KeyError, ArithmeticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PROCESSING


def main(argv=None) -> int:
    return dispatch(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
