"""Evaluation: classification metrics, window labelling, overlap analysis,
and the deployment annotation report.

Metrics are macro-averaged percentages over the two classes; balanced
accuracy is exactly the mean of sensitivity and specificity. Ground-truth
windows exclude rather than mislabel the ambiguous cases: detections nobody
answered, "maybe" answers, and windows whose foreground-speech fraction falls
inside the ambiguity band.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConflictError, InvalidConfigError, InvalidDataError, UndefinedMetricError


@dataclass(frozen=True)
class MetricReport:
    """Counts plus percentage metrics; positive class = interaction/speech."""

    tp: int
    fn: int
    tn: int
    fp: int
    accuracy: float
    sensitivity: float
    specificity: float
    balanced_accuracy: float
    precision_macro: float
    f1_macro: float


def compute_metrics(predictions, labels) -> MetricReport:
    """Confusion counts and macro-averaged percentage metrics.

    Raises UndefinedMetricError naming the offending metric when the labels
    contain a single class or some class is never predicted.
    """
    pred = np.asarray(predictions).astype(int)
    y = np.asarray(labels).astype(int)
    if pred.shape != y.shape or pred.ndim != 1 or pred.size == 0:
        raise InvalidDataError(
            f"predictions {pred.shape} and labels {y.shape} must be equal-length 1-d"
        )
    if np.any((pred != 0) & (pred != 1)) or np.any((y != 0) & (y != 1)):
        raise InvalidDataError("predictions and labels must be binary")

    tp = int(np.sum((pred == 1) & (y == 1)))
    fn = int(np.sum((pred == 0) & (y == 1)))
    tn = int(np.sum((pred == 0) & (y == 0)))
    fp = int(np.sum((pred == 1) & (y == 0)))

    if tp + fn == 0:
        raise UndefinedMetricError("sensitivity: no positive labels")
    if tn + fp == 0:
        raise UndefinedMetricError("specificity: no negative labels")
    if tp + fp == 0 or tn + fn == 0:
        raise UndefinedMetricError("precision: a class is never predicted")

    sens = 100.0 * tp / (tp + fn)
    spec = 100.0 * tn / (tn + fp)
    prec_pos = 100.0 * tp / (tp + fp)
    prec_neg = 100.0 * tn / (tn + fn)

    def f1(p, r):
        return 0.0 if p + r == 0 else 2.0 * p * r / (p + r)

    return MetricReport(
        tp=tp, fn=fn, tn=tn, fp=fp,
        accuracy=100.0 * (tp + tn) / pred.size,
        sensitivity=sens,
        specificity=spec,
        balanced_accuracy=(sens + spec) / 2.0,
        precision_macro=(prec_pos + prec_neg) / 2.0,
        f1_macro=(f1(prec_pos, sens) + f1(prec_neg, spec)) / 2.0,
    )


def balanced_accuracy(predictions, labels) -> float:
    return compute_metrics(predictions, labels).balanced_accuracy


# ---------------------------------------------------------------------------
# Ground-truth window labelling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WindowLabel:
    start_ms: int
    end_ms: int
    label: str  # interaction | none | excluded
    reason: str | None = None  # unresponded | maybe | ambiguous-fs


def _overlaps(a0, a1, b0, b1) -> bool:
    return a0 < b1 and b0 < a1


def label_windows(windows, confirmed, unresponded=(), maybe=(),
                  fs_fractions=None,
                  ambiguity_band: tuple[float, float] = (0.05, 0.15)) -> list[WindowLabel]:
    """Label evaluation windows as interaction, none, or excluded.

    Args:
        windows: list of (start_ms, end_ms) half-open intervals.
        confirmed: participant-confirmed interaction intervals.
        unresponded: detection intervals nobody answered.
        maybe: intervals answered "maybe".
        fs_fractions: optional per-window foreground-speech fraction; windows
            with a fraction strictly inside the ambiguity band are excluded.
        ambiguity_band: (low, high) exclusion band, exclusive on both ends.

    Raises:
        ConflictError: when a confirmed interval overlaps an unresponded or
            maybe interval, the two claims contradict each other.
    """
    lo, hi = ambiguity_band
    if not 0.0 <= lo <= hi <= 1.0:
        raise InvalidConfigError(f"bad ambiguity band {ambiguity_band}")
    conflicts = []
    for c in confirmed:
        for u in unresponded:
            if _overlaps(c[0], c[1], u[0], u[1]):
                conflicts.append((tuple(c), tuple(u), "unresponded"))
        for m in maybe:
            if _overlaps(c[0], c[1], m[0], m[1]):
                conflicts.append((tuple(c), tuple(m), "maybe"))
    if conflicts:
        raise ConflictError(f"contradictory intervals: {conflicts}")
    if fs_fractions is not None and len(fs_fractions) != len(windows):
        raise InvalidDataError("fs_fractions must match windows")

    out = []
    for i, (s, e) in enumerate(windows):
        if e <= s:
            raise InvalidDataError(f"window interval inverted: ({s}, {e})")
        label, reason = "none", None
        if any(_overlaps(s, e, c[0], c[1]) for c in confirmed):
            label = "interaction"
        elif any(_overlaps(s, e, u[0], u[1]) for u in unresponded):
            label, reason = "excluded", "unresponded"
        elif any(_overlaps(s, e, m[0], m[1]) for m in maybe):
            label, reason = "excluded", "maybe"
        elif fs_fractions is not None and lo < fs_fractions[i] < hi:
            label, reason = "excluded", "ambiguous-fs"
        out.append(WindowLabel(start_ms=s, end_ms=e, label=label, reason=reason))
    return out


# ---------------------------------------------------------------------------
# Overlap between participant-added and automatic intervals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OverlapRow:
    added: tuple[int, int]
    criterion1: bool  # an automatic endpoint falls inside the added interval
    criterion2: bool  # an added endpoint falls inside an automatic segment

    @property
    def overlap(self) -> bool:
        return self.criterion1 or self.criterion2


def added_overlap(added, autos) -> list[OverlapRow]:
    """Check each participant-added interval against automatic segments.

    Both criteria use closed intervals: criterion 1 asks whether any
    automatic segment starts or ends inside the added interval, criterion 2
    whether the added interval starts or ends inside an automatic segment.
    """
    rows = []
    for a0, a1 in added:
        c1 = any(a0 <= s <= a1 or a0 <= e <= a1 for s, e in autos)
        c2 = any(s <= a0 <= e or s <= a1 <= e for s, e in autos)
        rows.append(OverlapRow(added=(a0, a1), criterion1=c1, criterion2=c2))
    return rows


# ---------------------------------------------------------------------------
# Deployment report
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PromptOutcome:
    """One detected-interaction prompt and what the participant did with it."""

    participant: str
    segment: tuple[int, int]
    issued_at: int
    answered_at: int | None = None
    answer: str | None = None  # yes | no | maybe | None
    mode: str | None = None


@dataclass
class DeploymentReport:
    accuracy_by_participant: dict[str, float]
    overall_accuracy: float
    latency_buckets: dict[str, int]
    duration_histogram: dict[str, int]
    mode_breakdown: dict[str, int]
    reconciled: int = 0
    details: dict = field(default_factory=dict)


LATENCY_EDGES_MS = (60_000, 1_800_000, 7_200_000)
LATENCY_NAMES = ("<=1min", "<=30min", "<=2h", ">2h")

DURATION_EDGES_MIN = (1, 5, 10, 30, 60)


def _duration_bin(ms: int) -> str:
    minutes = ms / 60_000.0
    prev = 0
    for edge in DURATION_EDGES_MIN:
        if minutes < edge:
            return f"[{prev},{edge})min" if prev else "<1min"
        prev = edge
    return ">=60min"


def reconcile_no_responses(outcomes: list[PromptOutcome],
                           confirmed_by_participant: dict[str, list[tuple[int, int]]]):
    """Flip "no" answers whose segment lies inside a confirmed interval.

    A participant who edited or added an interval covering the detection has
    confirmed it; the earlier "no" is treated as a mis-tap. Returns the
    adjusted outcome list and the number of flips.
    """
    adjusted = []
    flips = 0
    for o in outcomes:
        if o.answer == "no":
            intervals = confirmed_by_participant.get(o.participant, [])
            s, e = o.segment
            if any(c0 <= s and e <= c1 for c0, c1 in intervals):
                adjusted.append(PromptOutcome(
                    participant=o.participant, segment=o.segment,
                    issued_at=o.issued_at, answered_at=o.answered_at,
                    answer="yes", mode=o.mode))
                flips += 1
                continue
        adjusted.append(o)
    return adjusted, flips


def deployment_report(outcomes: list[PromptOutcome],
                      confirmed_by_participant: dict[str, list[tuple[int, int]]] | None = None
                      ) -> DeploymentReport:
    """Summarise a deployment: accuracy, latency, durations, modes.

    Per-participant accuracy is yes / (yes + no) after reconciliation;
    "maybe" and unanswered prompts stay out of the denominator. Latency
    buckets are disjoint (within 1 min, 1-30 min, 30 min - 2 h, later);
    segment durations are binned from under a minute to an hour or more.
    """
    if confirmed_by_participant:
        outcomes, flips = reconcile_no_responses(outcomes, confirmed_by_participant)
    else:
        flips = 0

    by_pid: dict[str, list[PromptOutcome]] = {}
    for o in outcomes:
        by_pid.setdefault(o.participant, []).append(o)

    accuracy = {}
    for pid, rows in sorted(by_pid.items()):
        yes = sum(1 for o in rows if o.answer == "yes")
        no = sum(1 for o in rows if o.answer == "no")
        if yes + no > 0:
            accuracy[pid] = 100.0 * yes / (yes + no)

    yes_all = sum(1 for o in outcomes if o.answer == "yes")
    no_all = sum(1 for o in outcomes if o.answer == "no")
    overall = 100.0 * yes_all / (yes_all + no_all) if yes_all + no_all else float("nan")

    latency = {name: 0 for name in LATENCY_NAMES}
    for o in outcomes:
        if o.answered_at is None:
            continue
        dt = o.answered_at - o.issued_at
        for edge, name in zip(LATENCY_EDGES_MS, LATENCY_NAMES):
            if dt <= edge:
                latency[name] += 1
                break
        else:
            latency[">2h"] += 1

    durations: dict[str, int] = {}
    for o in outcomes:
        key = _duration_bin(o.segment[1] - o.segment[0])
        durations[key] = durations.get(key, 0) + 1

    modes: dict[str, int] = {}
    for o in outcomes:
        if o.answer in ("yes", "maybe"):
            key = o.mode or "unknown"
            modes[key] = modes.get(key, 0) + 1

    return DeploymentReport(
        accuracy_by_participant=accuracy,
        overall_accuracy=overall,
        latency_buckets=latency,
        duration_histogram=durations,
        mode_breakdown=modes,
        reconciled=flips,
        details={"prompts": len(outcomes)},
    )
