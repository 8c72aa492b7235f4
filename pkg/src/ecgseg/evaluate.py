"""Correlation-based segment classification, segmentation metrics, timing,
and the preprocessing comparison harness."""

from __future__ import annotations

import contextlib
import csv
import json
import logging
import math
import os
import platform
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import stats
from threadpoolctl import threadpool_limits

from .errors import (
    EmptyInput,
    InsufficientSeeds,
    LengthMismatch,
    SegmentTooShort,
)
from .neural.layers import softmax_xent
from .neural.model import WINDOW, ModelParams, model_forward
from .neural.train import TrainConfig, train
from .pipeline import METHODS, PreprocessConfig, prepare
from .signal import LabelMask, WaveClass, decimation_factor, format_number
from .spectral import DEFAULT_NFFT, dominant_frequency, segment_spectra
from .synth import GaussianBeatConfig, Record, synth_beat, wave_prototypes

log = logging.getLogger(__name__)


# --- cross-correlation classification -------------------------------------------


@dataclass(frozen=True, eq=False)
class Correlation:
    lags: np.ndarray
    raw: np.ndarray
    normalized: np.ndarray


def cross_correlation(x, y, max_lag: int) -> Correlation:
    """``r[l] = sum_t x[t] * y[t - l]`` for ``l`` in ``[-max_lag, max_lag]``.

    ``t`` runs over the indices of ``x``; terms where ``t - l`` falls outside
    ``y`` are zero. ``normalized`` divides by ``||x|| * ||y||``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size == 0 or y.size == 0:
        raise EmptyInput("cross-correlation needs non-empty sequences")
    if not 0 <= max_lag < x.size:
        raise ValueError(f"max_lag must lie in [0, {x.size - 1}], got {max_lag}")
    lags = np.arange(-max_lag, max_lag + 1)
    r = _correlate(x, y, lags)
    # Normalize from peak-scaled copies so tiny or huge inputs do not under/overflow.
    sx, sy = np.max(np.abs(x)), np.max(np.abs(y))
    if sx > 0 and sy > 0:
        xs, ys = x / sx, y / sy
        rn = np.clip(_correlate(xs, ys, lags) / (np.linalg.norm(xs) * np.linalg.norm(ys)), -1.0, 1.0)
    else:
        rn = np.zeros_like(r)
    return Correlation(lags, r, rn)


def _correlate(x: np.ndarray, y: np.ndarray, lags: np.ndarray) -> np.ndarray:
    r = np.zeros(lags.size)
    for j, lag in enumerate(lags):
        # t - lag in [0, len(y))  and  t in [0, len(x))
        t0 = max(0, lag)
        t1 = min(x.size, y.size + lag)
        if t1 > t0:
            r[j] = np.dot(x[t0:t1], y[t0 - lag : t1 - lag])
    return r


def fit_template(template, length: int) -> np.ndarray:
    """Centre ``template`` on a ``length``-sample grid at its own sampling rate.

    Shorter templates are zero-padded on both sides, longer ones cropped
    around their centre. Shapes are never stretched, so a narrow and a wide
    lobe stay distinguishable.
    """
    t = np.asarray(template, dtype=float)
    if t.size >= length:
        start = (t.size - length) // 2
        return t[start : start + length].copy()
    out = np.zeros(length)
    start = (length - t.size) // 2
    out[start : start + t.size] = t
    return out


def classify_segment(segment, templates=None) -> tuple[WaveClass, float]:
    """Wave class whose template gives the highest normalized correlation peak.

    Lags span +-10% of the segment length. Ties resolve in the order
    P < QRS < T. ``templates`` maps wave classes to sequences sampled at the
    segment's rate; the default is the noise-free synthetic prototypes.
    """
    seg = np.asarray(segment, dtype=float)
    if seg.size < 3:
        raise SegmentTooShort(f"segment has {seg.size} samples, need at least 3")
    templates = templates if templates is not None else wave_prototypes()
    if not templates:
        raise ValueError("no templates supplied")
    max_lag = int(0.1 * seg.size)
    best, best_score = None, -np.inf
    for wave in sorted(templates, key=int):
        ref = fit_template(templates[wave], seg.size)
        score = float(cross_correlation(ref, seg, max_lag).normalized.max())
        if score > best_score:
            best, best_score = wave, score
    return best, best_score


# --- metrics ------------------------------------------------------------------


@dataclass(frozen=True)
class SegmentationMetrics:
    accuracy: float
    iou: float
    f1: float


def segmentation_metrics(pred, truth) -> SegmentationMetrics:
    p = np.asarray(pred).astype(bool)
    t = np.asarray(truth).astype(bool)
    if p.shape != t.shape:
        raise LengthMismatch(f"prediction has {p.size} steps, truth has {t.size}")
    if p.size == 0:
        raise EmptyInput("no timesteps to score")
    tp = int(np.sum(p & t))
    fp = int(np.sum(p & ~t))
    fn = int(np.sum(~p & t))
    accuracy = float(np.mean(p == t))
    union = tp + fp + fn
    iou = 1.0 if union == 0 else tp / union
    f1 = 1.0 if union == 0 else 2 * tp / (2 * tp + fp + fn)
    return SegmentationMetrics(accuracy, iou, f1)


# --- timing -------------------------------------------------------------------


def host_descriptor() -> str:
    return (
        f"{platform.system()} {platform.machine()} {platform.processor() or 'cpu'} "
        f"ncpu={os.cpu_count()} python={platform.python_version()} numpy={np.__version__}"
    )


@contextlib.contextmanager
def single_threaded():
    """Pin BLAS/OpenMP pools to one thread for reproducible arithmetic."""
    with threadpool_limits(limits=1):
        yield


@dataclass(frozen=True)
class Timing:
    median_ms: float
    repeats: int
    host: str


def time_inference(params: ModelParams, signal, repeats: int = 5) -> Timing:
    """Median wall-clock of one eval-mode forward pass, after a warm-up run."""
    if repeats < 3:
        raise ValueError("repeats must be >= 3")
    x = np.asarray(signal)
    samples = []
    with single_threaded():
        model_forward(params, x, "eval")
        for _ in range(repeats):
            t0 = time.perf_counter()
            model_forward(params, x, "eval")
            samples.append((time.perf_counter() - t0) * 1e3)
    return Timing(statistics.median(samples), repeats, host_descriptor())


# --- comparison harness ----------------------------------------------------------


@dataclass(frozen=True)
class CompareConfig:
    methods: tuple[str, ...] = METHODS
    waves: tuple[str, ...] = ("P", "QRS", "T")
    seeds: tuple[int, ...] = (0, 1, 2)
    train: TrainConfig = field(default_factory=lambda: TrainConfig(learning_rate=3e-3, epochs=6, dtype="float32"))
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    test_fraction: float = 0.2
    timing_repeats: int = 5
    n_fft: int = DEFAULT_NFFT
    jobs: int = 1

    def to_dict(self) -> dict:
        return {
            "methods": list(self.methods),
            "waves": list(self.waves),
            "seeds": list(self.seeds),
            "train": self.train.to_dict(),
            "preprocess": self.preprocess.to_dict(),
            "test_fraction": self.test_fraction,
            "timing_repeats": self.timing_repeats,
            "n_fft": self.n_fft,
            "jobs": self.jobs,
        }


@dataclass
class RunResult:
    method: str
    wave: str
    seed: int
    train_accuracy: float
    train_iou: float
    test_accuracy: float
    test_iou: float
    test_f1: float
    test_loss: float
    final_train_loss: float
    inference_ms: float
    preprocess_ms: float
    main_parameter: str
    n_train: int
    n_test: int
    loss_curve: list[float]


@dataclass
class EvalReport:
    config: dict
    runs: list[RunResult]
    aggregates: list[dict]
    spectra: list[dict]
    host: str
    corpus: dict = field(default_factory=dict)

    def run(self, method, wave, seed) -> RunResult:
        for r in self.runs:
            if (r.method, r.wave, r.seed) == (method, wave, seed):
                return r
        raise KeyError((method, wave, seed))

    def aggregate(self, method, wave) -> dict:
        for a in self.aggregates:
            if (a["method"], a["wave"]) == (method, wave):
                return a
        raise KeyError((method, wave))


def split_records(n: int, seed: int, test_fraction: float = 0.2) -> tuple[list[int], list[int]]:
    """Seeded shuffle of record indices into train / test (by record)."""
    if n < 2:
        raise ValueError("need at least two records to split")
    order = np.random.default_rng(seed).permutation(n)
    n_test = min(n - 1, max(1, int(round(test_fraction * n))))
    return sorted(order[n_test:].tolist()), sorted(order[:n_test].tolist())


def _mask_for(record: Record, cfg: PreprocessConfig) -> LabelMask:
    k = decimation_factor(record.signal.fs, cfg.target_fs)
    return LabelMask(record.mask.classes[::k]) if k > 1 else record.mask


def _prepared(records, cfg: PreprocessConfig):
    """Preprocessed inputs, masks, and mean preprocessing time per record (ms)."""
    xs, masks, spent = [], [], 0.0
    with single_threaded():
        for r in records:
            t0 = time.perf_counter()
            xs.append(prepare(r.signal, cfg).samples)
            spent += time.perf_counter() - t0
            masks.append(_mask_for(r, cfg))
    return xs, masks, spent * 1e3 / max(1, len(records))


def _predict_chunks(params: ModelParams, x: np.ndarray, window: int):
    """Eval-mode logits for a record of any length, in zero-padded windows."""
    out = []
    for start in range(0, x.size, window):
        chunk = x[start : start + window]
        padded = np.zeros(window, dtype=params.dtype)
        padded[: chunk.size] = chunk
        out.append(model_forward(params, padded, "eval")[: chunk.size])
    return np.concatenate(out)


def score_records(params: ModelParams, xs, labels, window: int = WINDOW):
    """Pooled metrics and mean cross-entropy over a set of records."""
    preds, truths, loss_sum, n = [], [], 0.0, 0
    for x, y in zip(xs, labels):
        logits = _predict_chunks(params, x, window)
        loss, _ = softmax_xent(logits[None].astype(np.float64), np.asarray(y)[None])
        loss_sum += loss * y.size
        n += y.size
        preds.append(np.argmax(logits, axis=-1))
        truths.append(y)
    m = segmentation_metrics(np.concatenate(preds), np.concatenate(truths))
    return m, loss_sum / n


def _run_job(job):
    method, wave, seed, cfg, records = job
    pcfg = replace(cfg.preprocess, method=method)
    tcfg = replace(cfg.train, seed=seed, target_wave=wave, preprocessing=method)
    w = WaveClass.parse(wave)
    train_idx, test_idx = split_records(len(records), seed, cfg.test_fraction)
    with single_threaded():
        xs, masks, prep_ms = _prepared(records, pcfg)
        ys = [m.binary(w) for m in masks]
        data = [(xs[i], ys[i]) for i in train_idx]
        params, curve = train(tcfg, data)
        train_m, _ = score_records(params, [xs[i] for i in train_idx], [ys[i] for i in train_idx], tcfg.window)
        test_m, test_loss = score_records(params, [xs[i] for i in test_idx], [ys[i] for i in test_idx], tcfg.window)
    probe = np.zeros(tcfg.window, dtype=params.dtype)
    probe[: min(tcfg.window, xs[test_idx[0]].size)] = xs[test_idx[0]][: tcfg.window]
    timing = time_inference(params, probe, cfg.timing_repeats)
    log.info("%s/%s seed %d: test acc %.4f iou %.4f", method, wave, seed, test_m.accuracy, test_m.iou)
    return RunResult(
        method=method,
        wave=wave,
        seed=seed,
        train_accuracy=train_m.accuracy,
        train_iou=train_m.iou,
        test_accuracy=test_m.accuracy,
        test_iou=test_m.iou,
        test_f1=test_m.f1,
        test_loss=test_loss,
        final_train_loss=curve[-1],
        inference_ms=timing.median_ms,
        preprocess_ms=prep_ms,
        main_parameter=pcfg.main_parameter(records[0].signal.fs),
        n_train=len(train_idx),
        n_test=len(test_idx),
        loss_curve=curve,
    )


def paired_p_value(a, b) -> float:
    """Two-sided paired t-test; identical samples give p = 1."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = a - b
    if np.all(d == 0):
        return 1.0
    if np.all(d == d[0]):
        # zero variance but a consistent shift: infinitely significant
        return 0.0
    return float(stats.ttest_rel(a, b).pvalue)


def _aggregate(runs: list[RunResult], methods, waves) -> list[dict]:
    rows = []
    by = {(r.method, r.wave, r.seed): r for r in runs}
    seeds = sorted({r.seed for r in runs})
    for method in methods:
        for wave in waves:
            rs = [by[(method, wave, s)] for s in seeds]
            row = {"method": method, "wave": wave, "n_seeds": len(rs)}
            for key in (
                "train_accuracy",
                "train_iou",
                "test_accuracy",
                "test_iou",
                "test_f1",
                "test_loss",
                "final_train_loss",
                "inference_ms",
                "preprocess_ms",
            ):
                vals = [getattr(r, key) for r in rs]
                row[key] = float(np.mean(vals))
                row[key + "_std"] = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
            row["main_parameter"] = rs[0].main_parameter
            if "raw" in methods and method != "raw":
                raw = [by[("raw", wave, s)].test_accuracy for s in seeds]
                row["p_value_vs_raw"] = paired_p_value([r.test_accuracy for r in rs], raw)
            else:
                row["p_value_vs_raw"] = None
            rows.append(row)
    return rows


def method_spectra(cfg: CompareConfig, beat: GaussianBeatConfig | None = None) -> list[dict]:
    """Per-wave spectra of a noise-free synthetic record under each method."""
    beat = beat or replace(GaussianBeatConfig(), n_beats=4, noise_std=0.0)
    signal, mask = synth_beat(beat)
    rows = []
    for method in cfg.methods:
        pcfg = replace(cfg.preprocess, method=method)
        x = prepare(signal, pcfg)
        m = _mask_for(Record("ref", signal, mask), pcfg)
        for wave, spec in segment_spectra(x, m, cfg.n_fft).items():
            if wave.name not in cfg.waves:
                continue
            rows.append(
                {
                    "method": method,
                    "wave": wave.name,
                    "dominant_hz": dominant_frequency(spec),
                    "freqs": spec.freqs,
                    "mags": spec.mags,
                }
            )
    return rows


def compare_preprocessing(records: list[Record], cfg: CompareConfig) -> EvalReport:
    """Train one model per (method, wave, seed) and assemble the report."""
    if len(cfg.seeds) < 3:
        raise InsufficientSeeds(f"significance testing needs >= 3 seeds, got {len(cfg.seeds)}")
    if not records:
        raise EmptyInput("corpus is empty")
    for m in cfg.methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}")
    for w in cfg.waves:
        WaveClass.parse(w)
    jobs = [(m, w, s, cfg, records) for m in cfg.methods for w in cfg.waves for s in cfg.seeds]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            runs = list(pool.map(_run_job, jobs))
    else:
        runs = [_run_job(j) for j in jobs]
    return EvalReport(
        config=cfg.to_dict(),
        runs=runs,
        aggregates=_aggregate(runs, cfg.methods, cfg.waves),
        spectra=method_spectra(cfg),
        host=host_descriptor(),
    )


# --- report files ---------------------------------------------------------------

REPORT_COLUMNS = (
    "row_type",
    "method",
    "wave",
    "seed",
    "n_seeds",
    "train_accuracy_pct",
    "test_accuracy_pct",
    "test_accuracy_pct_std",
    "train_iou",
    "test_iou",
    "test_f1",
    "test_loss",
    "final_train_loss",
    "inference_ms",
    "preprocess_ms",
    "main_parameter",
    "p_value_vs_raw",
    "learning_rate",
    "epochs",
    "batch_size",
    "dtype",
    "host",
)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return format_number(float(v)) if math.isfinite(v) else str(float(v))
    return str(v)


def write_report(report: EvalReport, out_dir) -> dict[str, Path]:
    """Write report.csv, loss_curves.csv, segment_spectra.csv and report.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t = report.config["train"]
    common = {
        "learning_rate": t["learning_rate"],
        "epochs": t["epochs"],
        "batch_size": t["batch_size"],
        "dtype": t["dtype"],
        "host": report.host,
    }
    paths = {
        "report": out / "report.csv",
        "loss_curves": out / "loss_curves.csv",
        "segment_spectra": out / "segment_spectra.csv",
        "json": out / "report.json",
    }
    with open(paths["report"], "w", newline="", encoding="utf-8") as fh:
        wr = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        wr.writeheader()
        for r in report.runs:
            wr.writerow(
                {
                    k: _fmt(v)
                    for k, v in {
                        "row_type": "run",
                        "method": r.method,
                        "wave": r.wave,
                        "seed": r.seed,
                        "n_seeds": 1,
                        "train_accuracy_pct": 100 * r.train_accuracy,
                        "test_accuracy_pct": 100 * r.test_accuracy,
                        "test_accuracy_pct_std": None,
                        "train_iou": r.train_iou,
                        "test_iou": r.test_iou,
                        "test_f1": r.test_f1,
                        "test_loss": r.test_loss,
                        "final_train_loss": r.final_train_loss,
                        "inference_ms": r.inference_ms,
                        "preprocess_ms": r.preprocess_ms,
                        "main_parameter": r.main_parameter,
                        "p_value_vs_raw": None,
                        **common,
                    }.items()
                }
            )
        for a in report.aggregates:
            wr.writerow(
                {
                    k: _fmt(v)
                    for k, v in {
                        "row_type": "mean",
                        "method": a["method"],
                        "wave": a["wave"],
                        "seed": ";".join(str(s) for s in report.config["seeds"]),
                        "n_seeds": a["n_seeds"],
                        "train_accuracy_pct": 100 * a["train_accuracy"],
                        "test_accuracy_pct": 100 * a["test_accuracy"],
                        "test_accuracy_pct_std": 100 * a["test_accuracy_std"],
                        "train_iou": a["train_iou"],
                        "test_iou": a["test_iou"],
                        "test_f1": a["test_f1"],
                        "test_loss": a["test_loss"],
                        "final_train_loss": a["final_train_loss"],
                        "inference_ms": a["inference_ms"],
                        "preprocess_ms": a["preprocess_ms"],
                        "main_parameter": a["main_parameter"],
                        "p_value_vs_raw": a["p_value_vs_raw"],
                        **common,
                    }.items()
                }
            )
    with open(paths["loss_curves"], "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(["method", "wave", "seed", "epoch", "loss"])
        for r in report.runs:
            for e, loss in enumerate(r.loss_curve):
                wr.writerow([r.method, r.wave, r.seed, e, _fmt(loss)])
    write_spectra_csv(report.spectra, paths["segment_spectra"])
    summary = {
        "config": report.config,
        "host": report.host,
        "corpus": report.corpus,
        "runs": [{k: v for k, v in asdict(r).items()} for r in report.runs],
        "aggregates": report.aggregates,
        "dominant_hz": [
            {"method": s["method"], "wave": s["wave"], "dominant_hz": s["dominant_hz"]}
            for s in report.spectra
        ],
    }
    paths["json"].write_text(json.dumps(summary, indent=2, sort_keys=True), encoding="utf-8")
    return paths


def write_spectra_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(["method", "wave", "freq_hz", "magnitude"])
        for s in rows:
            for f, m in zip(s["freqs"], s["mags"]):
                wr.writerow([s["method"], s["wave"], _fmt(f), _fmt(m)])
