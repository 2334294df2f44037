"""Interval-level confusion matrix and per-class precision/recall/F1."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import TruthError


@dataclass(frozen=True)
class Interval:
    start: int
    end: int
    label: int


@dataclass
class GroundTruth:
    total_frames: int
    intervals: list

    @classmethod
    def from_dict(cls, doc) -> "GroundTruth":
        """Validate a truth document; errors name the offending field."""
        if not isinstance(doc, dict):
            raise TruthError("truth: expected a JSON object")
        total = doc.get("total_frames")
        if not isinstance(total, int) or isinstance(total, bool) or total < 1:
            raise TruthError("total_frames: expected a positive integer")
        raw = doc.get("intervals")
        if not isinstance(raw, list) or not raw:
            raise TruthError("intervals: expected a non-empty list")
        intervals = []
        for i, item in enumerate(raw):
            if not isinstance(item, dict):
                raise TruthError(f"intervals[{i}]: expected an object")
            vals = {}
            for key in ("start", "end", "label"):
                v = item.get(key)
                if not isinstance(v, int) or isinstance(v, bool):
                    raise TruthError(f"intervals[{i}].{key}: expected an integer")
                vals[key] = v
            if vals["label"] not in (0, 1):
                raise TruthError(f"intervals[{i}].label: must be 0 or 1")
            if vals["start"] >= vals["end"]:
                raise TruthError(f"intervals[{i}]: start must be < end")
            intervals.append(Interval(**vals))
        intervals.sort(key=lambda iv: iv.start)
        for a, b in zip(intervals, intervals[1:]):
            if b.start < a.end:
                raise TruthError("intervals overlap")
        pos = 0
        for iv in intervals:
            if iv.start != pos:
                raise TruthError(f"intervals: frames [{pos}, {iv.start}) are not covered")
            pos = iv.end
        if pos != total:
            raise TruthError(f"intervals: coverage ends at {pos}, total_frames is {total}")
        return cls(total, intervals)

    @classmethod
    def load(cls, path) -> "GroundTruth":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise TruthError(f"cannot read truth file {path}: {exc}") from exc
        return cls.from_dict(doc)


@dataclass
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.tp + other.tp, self.fp + other.fp,
                               self.fn + other.fn, self.tn + other.tn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


def match_intervals(keyframes, truth: GroundTruth) -> ConfusionMatrix:
    """An interval is predicted positive iff it holds at least one keyframe."""
    frames = sorted(set(int(k) for k in keyframes))
    for k in frames:
        if not 0 <= k < truth.total_frames:
            raise ValueError(f"keyframe {k} outside [0, {truth.total_frames})")
    cm = ConfusionMatrix()
    for iv in truth.intervals:
        hit = any(iv.start <= k < iv.end for k in frames)
        if iv.label == 1:
            if hit:
                cm.tp += 1
            else:
                cm.fn += 1
        elif hit:
            cm.fp += 1
        else:
            cm.tn += 1
    return cm


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def _prf(tp: int, fp: int, fn: int) -> dict:
    p = _ratio(tp, tp + fp)
    r = _ratio(tp, tp + fn)
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return {"precision": p, "recall": r, "f1": f1}


def scores(cm: ConfusionMatrix) -> dict:
    """One-vs-rest scores for both classes; 0/0 counts as 0."""
    return {
        "class0": _prf(cm.tn, cm.fn, cm.fp),
        "class1": _prf(cm.tp, cm.fp, cm.fn),
    }


def score_report(cm: ConfusionMatrix) -> dict:
    return {"confusion": cm.to_dict(), **scores(cm)}


def format_table(report: dict) -> str:
    lines = [f"{'class':<6}{'precision':>10}{'recall':>10}{'f1':>10}"]
    for cls in (0, 1):
        s = report[f"class{cls}"]
        lines.append(f"{cls:<6}{s['precision']:>10.2f}{s['recall']:>10.2f}{s['f1']:>10.2f}")
    return "\n".join(lines)
