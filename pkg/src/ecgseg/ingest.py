"""Annotated record I/O: signal CSV + span JSON in, label-mask CSV out.

Annotation JSON::

    {"source": "label-studio export 2024-03-01",
     "spans": [{"start": 0.10, "end": 0.20, "label": "P"}, ...]}

Times are seconds from the first sample; spans are half-open ``[start, end)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import IoFailure, ParseError, SpanOutOfRange
from .signal import LabelMask, SampledSignal, WaveClass, format_number, read_signal_csv
from .spectral import occurrences

WAVE_LABELS = {w.name: w for w in WaveClass.waves()}
# Later entries overwrite earlier ones: QRS > P > T.
PAINT_ORDER = (WaveClass.T, WaveClass.P, WaveClass.QRS)
_EPS = 1e-9


@dataclass(frozen=True)
class Span:
    start: float
    end: float
    label: str


@dataclass
class AnnotationSet:
    spans: list[Span] = field(default_factory=list)
    source: str = ""

    def to_json(self) -> str:
        return json.dumps(
            {
                "source": self.source,
                "spans": [{"start": s.start, "end": s.end, "label": s.label} for s in self.spans],
            },
            indent=2,
        )


def _number(v, path, field_name):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ParseError(f"expected a finite number, got {v!r}", path, field=field_name)
    return float(v)


def parse_annotations(text: str, path=None) -> AnnotationSet:
    """Parse and validate annotation JSON; errors name the offending field."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path, exc.lineno) from None
    if not isinstance(doc, dict):
        raise ParseError("top level must be an object", path, 1)
    source = doc.get("source", "")
    if not isinstance(source, str):
        raise ParseError("must be a string", path, field="source")
    raw = doc.get("spans")
    if not isinstance(raw, list):
        raise ParseError("missing or non-list 'spans'", path, field="spans")
    spans = []
    for i, item in enumerate(raw):
        where = f"spans[{i}]"
        if not isinstance(item, dict):
            raise ParseError("span must be an object", path, field=where)
        missing = {"start", "end", "label"} - item.keys()
        if missing:
            raise ParseError(f"missing {sorted(missing)}", path, field=where)
        start = _number(item["start"], path, f"{where}.start")
        end = _number(item["end"], path, f"{where}.end")
        label = item["label"]
        if not isinstance(label, str) or label not in WAVE_LABELS:
            raise ParseError(
                f"label must be exactly one of {sorted(WAVE_LABELS)}, got {label!r}",
                path,
                field=f"{where}.label",
            )
        if not start < end:
            raise ParseError(f"start {start} must be < end {end}", path, field=where)
        if start < 0:
            raise ParseError(f"start {start} is negative", path, field=f"{where}.start")
        spans.append(Span(start, end, label))
    for label in WAVE_LABELS:
        same = sorted((s.start, s.end, i) for i, s in enumerate(spans) if s.label == label)
        for (a0, a1, _), (b0, _b1, j) in zip(same, same[1:]):
            if b0 < a1:
                raise ParseError(f"overlaps another {label} span", path, field=f"spans[{j}]")
    return AnnotationSet(spans, source)


def read_annotations(path) -> AnnotationSet:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise ParseError(f"not UTF-8: {exc}", path) from exc
    return parse_annotations(text, path)


def write_annotations(ann: AnnotationSet, path) -> None:
    try:
        Path(path).write_text(ann.to_json() + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def check_spans(ann: AnnotationSet, duration: float) -> None:
    for i, s in enumerate(ann.spans):
        if s.end > duration + _EPS:
            raise SpanOutOfRange(i, f"end {s.end} s exceeds record duration {duration} s")


def load_record(signal_path, annotation_path) -> tuple[SampledSignal, AnnotationSet]:
    signal = read_signal_csv(signal_path)
    ann = read_annotations(annotation_path)
    check_spans(ann, signal.duration)
    return signal, ann


def rasterize(ann: AnnotationSet, fs: float, length: int) -> LabelMask:
    """Label sample ``i`` with the span containing ``i/fs`` (half-open spans)."""
    classes = np.zeros(length, dtype=np.int8)
    for wave in PAINT_ORDER:
        for s in ann.spans:
            if WAVE_LABELS[s.label] != wave:
                continue
            # start <= i/fs < end  <=>  ceil(start*fs) <= i < ceil(end*fs)
            lo = max(0, math.ceil(s.start * fs - _EPS))
            hi = min(length, math.ceil(s.end * fs - _EPS))
            if hi > lo:
                classes[lo:hi] = int(wave)
    return LabelMask(classes)


def spans_from_mask(mask: LabelMask, fs: float, source: str = "") -> AnnotationSet:
    """Inverse of :func:`rasterize` for masks without cross-label overlap."""
    spans = []
    for wave in WaveClass.waves():
        for a, b in occurrences(mask, wave):
            spans.append(Span(a / fs, b / fs, wave.name))
    spans.sort(key=lambda s: s.start)
    return AnnotationSet(spans, source)


def export_mask(mask: LabelMask, path) -> None:
    """CSV with header ``index,class`` and one row per sample (class by name)."""
    names = [w.name for w in WaveClass]
    lines = ["index,class"]
    lines.extend(f"{i},{names[c]}" for i, c in enumerate(mask.classes.tolist()))
    try:
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def load_mask(path) -> LabelMask:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if not lines or lines[0] != "index,class":
        raise ParseError("header must be 'index,class'", path, 1)
    classes = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 2:
            raise ParseError(f"expected 2 fields, got {len(parts)}", path, lineno)
        if parts[0] != str(len(classes)):
            raise ParseError(f"expected index {len(classes)}, got {parts[0]!r}", path, lineno, "index")
        try:
            classes.append(int(WaveClass[parts[1]]))
        except KeyError:
            raise ParseError(f"unknown class {parts[1]!r}", path, lineno, "class") from None
    return LabelMask(np.array(classes, dtype=np.int8))


def load_directory(path) -> list[tuple[str, SampledSignal, LabelMask]]:
    """Every ``<name>.csv`` with a sibling ``<name>.json`` in ``path``, rasterized."""
    out = []
    root = Path(path)
    if not root.is_dir():
        raise IoFailure(f"{path} is not a directory")
    for csv_path in sorted(root.glob("*.csv")):
        ann_path = csv_path.with_suffix(".json")
        if not ann_path.exists():
            continue
        signal, ann = load_record(csv_path, ann_path)
        out.append((csv_path.stem, signal, rasterize(ann, signal.fs, len(signal))))
    return out


def format_span(s: Span) -> str:
    return f"{format_number(s.start)}-{format_number(s.end)} {s.label}"
