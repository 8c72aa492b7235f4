"""Command-line entry point: ``ecgseg <subcommand> [flags]``.

Every subcommand writes its outputs plus ``manifest.json`` into ``--out``
(default: ``$ECGSEG_OUT`` or ``./out``).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .errors import EcgSegError, NotConverged
from .evaluate import (
    CompareConfig,
    _mask_for,
    _predict_chunks,
    compare_preprocessing,
    host_descriptor,
    method_spectra,
    score_records,
    segmentation_metrics,
    single_threaded,
    time_inference,
    write_report,
    write_spectra_csv,
)
from .ingest import (
    check_spans,
    export_mask,
    load_directory,
    rasterize,
    read_annotations,
    spans_from_mask,
    write_annotations,
)
from .neural import checkpoint
from .neural.model import WINDOW
from .neural.train import TrainConfig, train
from .pipeline import METHODS, PreprocessConfig, apply_method, prepare
from .signal import (
    SampledSignal,
    WaveClass,
    condition,
    format_number,
    read_signal_csv,
    write_signal_csv,
)
from .spectral import DEFAULT_NFFT, dft, dominant_frequency, segment_spectra, write_spectrum_csv
from .synth import (
    GaussianBeatConfig,
    Record,
    adjust_until_valid,
    synth_beat,
    synth_corpus,
    validate_spectrum,
)
from .transforms import DEFAULT_DT, DEFAULT_GL_NODES, DEFAULT_GL_WINDOW, effective_dt, hilbert

log = logging.getLogger("ecgseg")

SUBCOMMANDS = ("synth", "preprocess", "fft", "train", "eval", "compare", "plot-data")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(2, f"{self.prog}: error: {message}\n")


class _Formatter(argparse.ArgumentDefaultsHelpFormatter):
    pass


def _csv_list(kind, choices):
    def parse(text):
        items = [t.strip() for t in text.split(",") if t.strip()]
        bad = [t for t in items if t not in choices]
        if not items or bad:
            raise argparse.ArgumentTypeError(f"invalid {kind} {bad or text!r}; choose from {', '.join(choices)}")
        return tuple(items)

    return parse


def _parents():
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="random seed, recorded in the manifest")
    common.add_argument(
        "--out",
        default=os.environ.get("ECGSEG_OUT", "out"),
        help="output directory (env ECGSEG_OUT overrides the default)",
    )
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    prep = _Parser(add_help=False)
    prep.add_argument("--method", choices=METHODS, default="raw", help="preprocessing transform")
    prep.add_argument("--dt", type=float, default=DEFAULT_DT, help="Euler step in seconds (rounded to whole samples)")
    prep.add_argument("--gl-nodes", type=int, default=DEFAULT_GL_NODES, help="Gauss-Legendre nodes")
    prep.add_argument("--window", type=float, default=DEFAULT_GL_WINDOW, help="Gauss-Legendre window in seconds")
    prep.add_argument("--band-lo", type=float, default=0.5, help="band-pass lower edge (Hz)")
    prep.add_argument("--band-hi", type=float, default=50.0, help="band-pass upper edge (Hz)")
    prep.add_argument("--target-fs", type=float, default=250.0, help="decimation target rate (Hz)")

    corpus = _Parser(add_help=False)
    corpus.add_argument("--data", default=None, help="directory of <name>.csv + <name>.json records; synthetic corpus if omitted")
    corpus.add_argument("--corpus-beats", type=int, default=200, help="beats in the synthetic corpus")
    corpus.add_argument("--corpus-noise", type=float, default=0.05, help="synthetic corpus noise std (mV)")
    corpus.add_argument("--corpus-jitter", type=float, default=0.1, help="per-record relative morphology jitter")
    corpus.add_argument("--corpus-seed", type=int, default=0, help="synthetic corpus seed")

    training = _Parser(add_help=False)
    training.add_argument("--epochs", type=int, default=6, help="training epochs")
    training.add_argument("--lr", type=float, default=3e-3, help="Adam learning rate")
    training.add_argument("--batch-size", type=int, default=1, help="windows per gradient step")
    training.add_argument("--dtype", choices=("float64", "float32"), default="float32", help="training arithmetic")
    training.add_argument("--model-window", type=int, default=WINDOW, help="model input length in samples")
    training.add_argument("--target-loss", type=float, default=None, help="stop early once epoch loss falls below this")
    return common, prep, corpus, training


def build_parser() -> argparse.ArgumentParser:
    common, prep, corpus, training = _parents()
    parser = _Parser(prog="ecgseg", description="Physics-informed ECG wave segmentation toolkit", formatter_class=_Formatter)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="{" + ",".join(SUBCOMMANDS) + "}")
    sub.required = True

    p = sub.add_parser("synth", parents=[common], formatter_class=_Formatter, help="generate a synthetic record")
    p.add_argument("--beats", type=int, default=4, help="number of beats")
    p.add_argument("--fs", type=float, default=250.0, help="sampling rate (Hz)")
    p.add_argument("--period", type=float, default=0.8, help="beat period (s)")
    p.add_argument("--noise", type=float, default=0.0, help="white-noise std (mV)")
    p.add_argument("--reference", default=None, help="reference signal CSV for spectral validation")
    p.add_argument("--threshold", type=float, default=0.9, help="spectral similarity needed to accept")
    p.add_argument("--max-iters", type=int, default=50, help="adjustment iterations before giving up")
    p.add_argument("--n-fft", type=int, default=DEFAULT_NFFT, help="FFT length for validation")

    p = sub.add_parser("preprocess", parents=[common, prep], formatter_class=_Formatter, help="apply a transform to a signal CSV")
    p.add_argument("--input", required=True, help="signal CSV")
    p.add_argument("--condition", action="store_true", help="band-pass, normalize and decimate before the transform")

    p = sub.add_parser("fft", parents=[common], formatter_class=_Formatter, help="magnitude spectrum of a signal CSV")
    p.add_argument("--input", required=True, help="signal CSV")
    p.add_argument("--n-fft", type=int, default=DEFAULT_NFFT, help="FFT length")
    p.add_argument("--annotations", default=None, help="annotation JSON; adds per-wave spectra")

    p = sub.add_parser("train", parents=[common, prep, corpus, training], formatter_class=_Formatter, help="train one segmenter")
    p.add_argument("--wave", choices=("P", "QRS", "T"), default="QRS", help="target wave")

    p = sub.add_parser("eval", parents=[common, prep, corpus], formatter_class=_Formatter, help="score a checkpoint")
    p.add_argument("--checkpoint", required=True, help="model checkpoint file")
    p.add_argument("--wave", choices=("P", "QRS", "T"), default="QRS", help="target wave")
    p.add_argument("--repeats", type=int, default=5, help="timed inference repeats")

    p = sub.add_parser("compare", parents=[common, prep, corpus, training], formatter_class=_Formatter, help="preprocessing comparison report")
    p.add_argument("--methods", type=_csv_list("method", METHODS), default=METHODS, help="comma-separated methods")
    p.add_argument("--waves", type=_csv_list("wave", ("P", "QRS", "T")), default=("P", "QRS", "T"), help="comma-separated waves")
    p.add_argument("--seeds", type=int, default=3, help="number of seeds, counted up from --seed")
    p.add_argument("--jobs", type=int, default=1, help="parallel training processes")
    p.add_argument("--repeats", type=int, default=5, help="timed inference repeats")
    p.add_argument("--n-fft", type=int, default=DEFAULT_NFFT, help="FFT length for segment spectra")

    p = sub.add_parser("plot-data", parents=[common, prep], formatter_class=_Formatter, help="CSV data for the signal, spectrum and loss figures")
    p.add_argument("--beats", type=int, default=4, help="beats in the synthetic signal")
    p.add_argument("--noise", type=float, default=0.0, help="synthetic noise std (mV)")
    p.add_argument("--reference", default=None, help="real signal CSV to compare against")
    p.add_argument("--report-dir", default=None, help="compare output directory (adds loss-curve data)")
    p.add_argument("--methods", type=_csv_list("method", METHODS), default=METHODS, help="comma-separated methods")
    p.add_argument("--n-fft", type=int, default=DEFAULT_NFFT, help="FFT length")
    return parser


# --- helpers ------------------------------------------------------------------


def _prep_config(args, method=None) -> PreprocessConfig:
    return PreprocessConfig(
        method=method or args.method,
        band_lo=args.band_lo,
        band_hi=args.band_hi,
        target_fs=args.target_fs,
        dt=args.dt,
        gl_nodes=args.gl_nodes,
        gl_window=args.window,
    )


def _train_config(args, wave="QRS", method="raw") -> TrainConfig:
    return TrainConfig(
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
        target_wave=wave,
        preprocessing=method,
        window=args.model_window,
        dtype=args.dtype,
        target_loss=args.target_loss,
    )


def _records(args) -> tuple[list[Record], dict]:
    if args.data:
        recs = [Record(name, sig, mask) for name, sig, mask in load_directory(args.data)]
        if not recs:
            raise EcgSegError(f"no annotated records found in {args.data}")
        return recs, {"source": "directory", "path": str(args.data), "records": len(recs)}
    recs = synth_corpus(
        total_beats=args.corpus_beats,
        window=args.model_window if hasattr(args, "model_window") else WINDOW,
        noise_std=args.corpus_noise,
        seed=args.corpus_seed,
        jitter=args.corpus_jitter,
    )
    meta = {
        "source": "synthetic",
        "beats": args.corpus_beats,
        "noise_std": args.corpus_noise,
        "jitter": args.corpus_jitter,
        "seed": args.corpus_seed,
        "records": len(recs),
    }
    return recs, meta


def _write_manifest(out: Path, args, argv, inputs, outputs, extra=None) -> None:
    config = {k: (list(v) if isinstance(v, tuple) else v) for k, v in vars(args).items()}
    manifest = {
        "subcommand": args.command,
        "argv": list(argv),
        "config": config,
        "seed": args.seed,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "version": __version__,
        "host": host_descriptor(),
    }
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# --- subcommands ----------------------------------------------------------------


def cmd_synth(args, out):
    cfg = GaussianBeatConfig(
        beat_period=args.period,
        n_beats=args.beats,
        fs=args.fs,
        noise_std=args.noise,
        seed=args.seed,
    )
    inputs, extra = [], {}
    if args.reference:
        ref = dft(read_signal_csv(args.reference), args.n_fft)
        inputs.append(args.reference)
        cfg, score = adjust_until_valid(cfg, ref, args.threshold, args.max_iters)
        signal, _ = synth_beat(cfg)
        accepted, score = validate_spectrum(signal, ref, args.threshold)
        extra["spectral_validation"] = {"score": score, "accepted": accepted, "threshold": args.threshold}
    signal, mask = synth_beat(cfg)
    paths = [out / "signal.csv", out / "annotations.json", out / "mask.csv", out / "beat_config.json"]
    write_signal_csv(signal, paths[0])
    write_annotations(spans_from_mask(mask, signal.fs, source=f"ecgseg synth seed={args.seed}"), paths[1])
    export_mask(mask, paths[2])
    paths[3].write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return inputs, paths, extra


def cmd_preprocess(args, out):
    signal = read_signal_csv(args.input)
    cfg = _prep_config(args)
    if args.condition:
        signal = condition(signal, cfg.band_lo, cfg.band_hi, cfg.target_fs)
    result = apply_method(signal, cfg)
    paths = [out / "preprocessed.csv"]
    write_signal_csv(result, paths[0])
    extra = {"main_parameter": cfg.main_parameter(signal.fs)}
    if cfg.method == "euler":
        extra["effective_dt"] = effective_dt(cfg.dt, signal.fs)
    if cfg.method == "hilbert":
        phase = hilbert(signal).phase
        paths.append(out / "phase.csv")
        write_signal_csv(SampledSignal(phase, signal.fs), paths[-1])
    return [args.input], paths, extra


def cmd_fft(args, out):
    signal = read_signal_csv(args.input)
    spec = dft(signal, args.n_fft)
    paths = [out / "spectrum.csv"]
    write_spectrum_csv(spec, paths[0])
    inputs = [args.input]
    extra = {"dominant_hz": dominant_frequency(spec)}
    if args.annotations:
        ann = read_annotations(args.annotations)
        check_spans(ann, signal.duration)
        inputs.append(args.annotations)
        mask = rasterize(ann, signal.fs, len(signal))
        rows = []
        present = [w for w in WaveClass.waves() if np.any(mask.classes == int(w))]
        for wave, s in segment_spectra(signal, mask, args.n_fft, present).items():
            rows.append({"method": "input", "wave": wave.name, "freqs": s.freqs, "mags": s.mags, "dominant_hz": dominant_frequency(s)})
        paths.append(out / "segment_spectra.csv")
        write_spectra_csv(rows, paths[-1])
        extra["segment_dominant_hz"] = {r["wave"]: r["dominant_hz"] for r in rows}
    return inputs, paths, extra


def _inputs_and_labels(records, pcfg, wave):
    xs, ys = [], []
    for r in records:
        xs.append(prepare(r.signal, pcfg).samples)
        ys.append(_mask_for(r, pcfg).binary(WaveClass.parse(wave)))
    return xs, ys


def cmd_train(args, out):
    records, meta = _records(args)
    pcfg = _prep_config(args)
    tcfg = _train_config(args, args.wave, args.method)
    xs, ys = _inputs_and_labels(records, pcfg, args.wave)
    with single_threaded():
        params, curve = train(tcfg, list(zip(xs, ys)))
    paths = [out / "model.ckpt", out / "loss_curve.csv"]
    checkpoint.save(params.astype(np.float64), paths[0])
    with open(paths[1], "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(["epoch", "loss"])
        for e, loss in enumerate(curve):
            wr.writerow([e, format_number(loss)])
    extra = {"corpus": meta, "train_config": tcfg.to_dict(), "preprocess": pcfg.to_dict(), "final_loss": curve[-1]}
    return ([args.data] if args.data else []), paths, extra


def cmd_eval(args, out):
    params = checkpoint.load(args.checkpoint, expect_total=None)
    records, meta = _records(args)
    pcfg = _prep_config(args)
    xs, ys = _inputs_and_labels(records, pcfg, args.wave)
    paths = [out / "metrics.csv"]
    with single_threaded():
        with open(paths[0], "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh)
            wr.writerow(["record", "accuracy_pct", "iou", "f1"])
            for r, x, y in zip(records, xs, ys):
                pred = np.argmax(_predict_chunks(params, x, WINDOW), axis=-1)
                m = segmentation_metrics(pred, y)
                wr.writerow([r.name, format_number(100 * m.accuracy), format_number(m.iou), format_number(m.f1)])
            pooled, loss = score_records(params, xs, ys, WINDOW)
            wr.writerow(["ALL", format_number(100 * pooled.accuracy), format_number(pooled.iou), format_number(pooled.f1)])
    probe = np.zeros(WINDOW)
    probe[: min(WINDOW, xs[0].size)] = xs[0][:WINDOW]
    timing = time_inference(params, probe, args.repeats)
    extra = {
        "corpus": meta,
        "test_loss": loss,
        "accuracy_pct": 100 * pooled.accuracy,
        "inference_ms": timing.median_ms,
        "inference_host": timing.host,
    }
    return [args.checkpoint] + ([args.data] if args.data else []), paths, extra


def cmd_compare(args, out):
    records, meta = _records(args)
    cfg = CompareConfig(
        methods=tuple(args.methods),
        waves=tuple(args.waves),
        seeds=tuple(range(args.seed, args.seed + args.seeds)),
        train=_train_config(args),
        preprocess=_prep_config(args),
        timing_repeats=args.repeats,
        n_fft=args.n_fft,
        jobs=args.jobs,
    )
    report = compare_preprocessing(records, cfg)
    report.corpus = meta
    paths = write_report(report, out)
    return ([args.data] if args.data else []), list(paths.values()), {"corpus": meta}


def cmd_plot_data(args, out):
    cfg = GaussianBeatConfig(n_beats=args.beats, noise_std=args.noise, seed=args.seed)
    signal, mask = synth_beat(cfg)
    inputs, paths = [], []
    ref = read_signal_csv(args.reference) if args.reference else None
    if ref is not None:
        inputs.append(args.reference)
    # signal overlay
    paths.append(out / "signal_overlay.csv")
    with open(paths[-1], "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(["time_s", "synthetic_mv", "reference_mv"])
        n = len(signal) if ref is None else max(len(signal), len(ref))
        for i in range(n):
            s = format_number(signal.samples[i]) if i < len(signal) else ""
            r = format_number(ref.samples[i]) if ref is not None and i < len(ref) else ""
            wr.writerow([format_number(i / signal.fs), s, r])
    # spectrum overlay
    syn_spec = dft(signal, args.n_fft)
    ref_spec = dft(ref, args.n_fft) if ref is not None else None
    paths.append(out / "spectrum_overlay.csv")
    with open(paths[-1], "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(["freq_hz", "synthetic", "reference"])
        for j, f in enumerate(syn_spec.freqs):
            r = format_number(ref_spec.mags[j]) if ref_spec is not None and ref_spec.same_grid(syn_spec) else ""
            wr.writerow([format_number(f), format_number(syn_spec.mags[j]), r])
    # per-wave spectra under each method
    ccfg = CompareConfig(methods=tuple(args.methods), preprocess=_prep_config(args), n_fft=args.n_fft)
    rows = method_spectra(ccfg, replace(cfg, noise_std=args.noise))
    paths.append(out / "method_segment_spectra.csv")
    write_spectra_csv(rows, paths[-1])
    extra = {"dominant_hz": {f"{r['method']}/{r['wave']}": r["dominant_hz"] for r in rows}}
    if ref_spec is not None and ref_spec.same_grid(syn_spec):
        extra["spectral_similarity"] = validate_spectrum(signal, ref_spec, 0.0)[1]
    # mean loss per epoch from a compare run
    if args.report_dir:
        src = Path(args.report_dir) / "loss_curves.csv"
        inputs.append(src)
        curves: dict[tuple[str, str], dict[int, list[float]]] = {}
        with open(src, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                key = (row["method"], row["wave"])
                curves.setdefault(key, {}).setdefault(int(row["epoch"]), []).append(float(row["loss"]))
        paths.append(out / "loss_by_epoch.csv")
        with open(paths[-1], "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh)
            wr.writerow(["method", "wave", "epoch", "mean_loss", "n_seeds"])
            for (method, wave), by_epoch in curves.items():
                for epoch in sorted(by_epoch):
                    vals = by_epoch[epoch]
                    wr.writerow([method, wave, epoch, format_number(float(np.mean(vals))), len(vals)])
    return inputs, paths, extra


COMMANDS = {
    "synth": cmd_synth,
    "preprocess": cmd_preprocess,
    "fft": cmd_fft,
    "train": cmd_train,
    "eval": cmd_eval,
    "compare": cmd_compare,
    "plot-data": cmd_plot_data,
}


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        inputs, outputs, extra = COMMANDS[args.command](args, out)
        _write_manifest(out, args, argv, inputs, outputs, extra)
    except NotConverged as exc:
        print(f"ecgseg {args.command}: NotConverged: {exc}", file=sys.stderr)
        return 1
    except (EcgSegError, ValueError, OSError, FloatingPointError) as exc:
        print(f"ecgseg {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
