"""Temporal segmentation of social interactions from probe-level cues.

A candidate opens when a probe's cue fraction reaches the onset threshold,
extends while subsequent probes stay at or above the continuation threshold,
and closes at the first probe below it; the detected interval runs from the
candidate's first probe start to the last qualifying probe's end. Closed
candidates are confirmed by the foreground-speech fraction over every
recorded 1-s slot of the interval (at least 15% by default). Probes with
missing audio count as cue-negative; going off-body truncates the candidate
at the last recorded probe. Manually started recordings skip the speech
check and stop automatically once cues drop below half of the last 15 slots.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .audiofrontend import SlotScore, cue_fraction, profile_probe
from .errors import (
    InvalidConfigError,
    InvalidDataError,
    MissingModalityError,
    SequencingError,
)
from .fsd import fs_fraction
from .sensorstream import ProbeWindow


@dataclass(frozen=True)
class DetectorConfig:
    """Thresholds for onset, continuation and confirmation.

    continuation_threshold defaults to the onset threshold; with
    strict_positive_continuation a candidate instead survives on any cue slot
    at all (cue fraction > 0).
    """

    cue_threshold: float = 0.5
    continuation_threshold: float | None = None
    strict_positive_continuation: bool = False
    fs_threshold: float = 0.15

    def __post_init__(self):
        for name in ("cue_threshold", "fs_threshold"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidConfigError(f"{name} must lie in [0, 1], got {v}")
        if self.continuation_threshold is not None:
            if not 0.0 <= self.continuation_threshold <= 1.0:
                raise InvalidConfigError(
                    f"continuation_threshold must lie in [0, 1], "
                    f"got {self.continuation_threshold}"
                )

    @property
    def effective_continuation(self) -> float:
        if self.continuation_threshold is None:
            return self.cue_threshold
        return self.continuation_threshold


@dataclass
class SlotRecord:
    """Per-slot outcome: cue decision plus (for cue slots) the speech call."""

    slot: int
    t_ms: int
    cue: bool
    class_name: str
    fg: bool | None = None
    p1: float | None = None
    p2: float | None = None


@dataclass
class ProbeResult:
    """What one probe contributed: cue profile and slot records."""

    index: int
    start: int
    end: int
    on_body: bool
    recorded: bool
    slots: list[SlotRecord] = field(default_factory=list)

    @property
    def cue_fraction(self) -> float:
        if not self.recorded or not self.slots:
            return 0.0
        return sum(1 for s in self.slots if s.cue) / len(self.slots)


@dataclass
class Candidate:
    """A closed candidate interval awaiting confirmation."""

    start: int
    end: int
    slots: list[SlotRecord]
    probes: int
    close_reason: str  # below-threshold | off-body | end-of-stream


@dataclass
class InteractionSegment:
    start_ms: int
    end_ms: int
    fs_fraction: float
    probes: int
    provenance: str = "auto"

    @property
    def duration_ms(self) -> int:
        return self.end_ms - self.start_ms


@dataclass
class RejectedCandidate:
    start_ms: int
    end_ms: int
    fs_fraction: float
    probes: int
    reason: str = "fs-below-threshold"


class TemporalDetector:
    """Probe-by-probe state machine; emits closed candidates."""

    def __init__(self, cfg: DetectorConfig | None = None):
        self.cfg = cfg or DetectorConfig()
        self._last_index = None
        self._candidate_start = None
        self._last_positive_end = None
        self._last_recorded_end = None
        self._slots: list[SlotRecord] = []
        self._probes = 0

    @property
    def in_candidate(self) -> bool:
        return self._candidate_start is not None

    def _close(self, end: int, reason: str) -> Candidate:
        cand = Candidate(start=self._candidate_start, end=end,
                         slots=self._slots, probes=self._probes,
                         close_reason=reason)
        self._candidate_start = None
        self._last_positive_end = None
        self._slots = []
        self._probes = 0
        return cand

    def _extends(self, probe: ProbeResult) -> bool:
        cf = probe.cue_fraction
        if self.cfg.strict_positive_continuation:
            return cf > 0.0
        return cf >= self.cfg.effective_continuation

    def process(self, probe: ProbeResult) -> list[Candidate]:
        """Advance the state machine by one probe, in schedule order."""
        if self._last_index is not None and probe.index <= self._last_index:
            raise SequencingError(
                f"probe {probe.index} arrived after probe {self._last_index}"
            )
        self._last_index = probe.index

        closed: list[Candidate] = []
        if self.in_candidate:
            if not probe.on_body:
                # recording stopped mid-candidate: truncate to what was heard
                end = self._last_recorded_end
                if end is None or end < self._candidate_start:
                    end = self._last_positive_end
                closed.append(self._close(end, "off-body"))
            elif probe.recorded and self._extends(probe):
                self._last_positive_end = probe.end
                self._slots.extend(probe.slots)
                self._probes += 1
            else:
                closed.append(self._close(self._last_positive_end, "below-threshold"))
        if not self.in_candidate:
            # the probe that closed a candidate marks the boundary and never
            # opens the next one
            if (probe.on_body and probe.recorded
                    and probe.cue_fraction >= self.cfg.cue_threshold
                    and not closed):
                self._candidate_start = probe.start
                self._last_positive_end = probe.end
                self._slots = list(probe.slots)
                self._probes = 1

        if probe.on_body and probe.recorded:
            self._last_recorded_end = probe.end
        return closed

    def flush(self) -> list[Candidate]:
        """Close any open candidate when the stream ends."""
        if not self.in_candidate:
            return []
        return [self._close(self._last_positive_end, "end-of-stream")]


def confirm_segment(candidate: Candidate, cfg: DetectorConfig,
                    manual: bool = False):
    """Apply the foreground-speech check to a closed candidate.

    Returns an InteractionSegment when confirmed (manual candidates always
    are), else a RejectedCandidate. The fraction counts foreground-classified
    slots over every recorded slot of the interval, cue slots or not.
    """
    n_slots = len(candidate.slots)
    n_fg = sum(1 for s in candidate.slots if s.cue and s.fg)
    fs = fs_fraction(n_fg, n_slots)
    if manual or fs >= cfg.fs_threshold:
        return InteractionSegment(start_ms=candidate.start, end_ms=candidate.end,
                                  fs_fraction=fs, probes=candidate.probes,
                                  provenance="manual" if manual else "auto")
    return RejectedCandidate(start_ms=candidate.start, end_ms=candidate.end,
                             fs_fraction=fs, probes=candidate.probes)


def manual_autostop(recent_cues: list[bool], window: int = 15) -> bool:
    """Stop a manual recording when cue slots fall below half the window.

    Evaluated over the last `window` recorded slots: 7 of 15 stops,
    8 of 15 continues.
    """
    if not recent_cues:
        raise InvalidDataError("autostop needs at least one recorded slot")
    tail = recent_cues[-window:]
    return sum(1 for c in tail if c) < len(tail) / 2.0


class ManualSession:
    """User-initiated recording; closes itself via the autostop rule."""

    def __init__(self, start_ms: int, cfg: DetectorConfig | None = None):
        self.cfg = cfg or DetectorConfig()
        self.start_ms = start_ms
        self._cues: list[bool] = []
        self._slots: list[SlotRecord] = []
        self._probes = 0

    def process(self, probe: ProbeResult) -> InteractionSegment | None:
        if probe.recorded:
            self._slots.extend(probe.slots)
            self._cues.extend(s.cue for s in probe.slots)
            self._probes += 1
        if self._cues and manual_autostop(self._cues):
            cand = Candidate(start=self.start_ms, end=probe.end,
                             slots=self._slots, probes=self._probes,
                             close_reason="autostop")
            return confirm_segment(cand, self.cfg, manual=True)
        return None


# ---------------------------------------------------------------------------
# Foreground-speech pipelines
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FsdDecision:
    p1: float
    p2: float
    fg: bool


class TrainedFsd:
    """Frame classifier plus meta-learner, as produced by the fsd module."""

    def __init__(self, classifier, meta):
        self.classifier = classifier
        self.meta = meta

    def classify_pair(self, emb1, emb2) -> FsdDecision:
        p = self.classifier.predict_proba(np.stack([emb1, emb2]))
        fg = bool(self.meta.predict(np.array([[p[0], p[1]]]))[0])
        return FsdDecision(p1=float(p[0]), p2=float(p[1]), fg=fg)


class EmbeddingSignFsd:
    """Thresholds one embedding axis; pairs with the synthetic provider,
    which encodes foreground as a positive shift on axis 0."""

    def __init__(self, axis: int = 0):
        self.axis = axis

    def classify_pair(self, emb1, emb2) -> FsdDecision:
        s1 = 1.0 / (1.0 + np.exp(-float(emb1[self.axis])))
        s2 = 1.0 / (1.0 + np.exp(-float(emb2[self.axis])))
        return FsdDecision(p1=s1, p2=s2, fg=bool((s1 + s2) / 2.0 > 0.5))


# ---------------------------------------------------------------------------
# Replay
# ---------------------------------------------------------------------------


@dataclass
class ProbeLogEntry:
    index: int
    start: int
    end: int
    on_body: bool
    recorded: bool
    cue_fraction: float
    fg_slots: int
    latency_ms: float
    note: str = ""


@dataclass
class ReplayResult:
    segments: list[InteractionSegment]
    rejected: list[RejectedCandidate]
    probe_log: list[ProbeLogEntry]


def build_probe_result(probe: ProbeWindow, provider, pipeline,
                       vocabulary) -> ProbeResult:
    """Score one probe: cue profile for every slot, speech calls on cue slots."""
    if not probe.on_body:
        return ProbeResult(index=probe.index, start=probe.start, end=probe.end,
                           on_body=False, recorded=False)
    try:
        frames = provider.embed_probe(probe)
    except MissingModalityError:
        return ProbeResult(index=probe.index, start=probe.start, end=probe.end,
                           on_body=True, recorded=False)
    scores: list[SlotScore] = profile_probe(frames, probe, vocabulary)
    slots = []
    for s in scores:
        rec = SlotRecord(slot=s.slot, t_ms=s.t_ms, cue=s.cue,
                         class_name=s.class_name)
        if s.cue and pipeline is not None:
            decision = pipeline.classify_pair(frames[2 * s.slot].embedding,
                                              frames[2 * s.slot + 1].embedding)
            rec.fg = decision.fg
            rec.p1, rec.p2 = decision.p1, decision.p2
        slots.append(rec)
    return ProbeResult(index=probe.index, start=probe.start, end=probe.end,
                       on_body=True, recorded=True, slots=slots)


def run_replay(probes: list[ProbeWindow], provider, pipeline,
               cfg: DetectorConfig | None = None) -> ReplayResult:
    """Drive the detector over a full probe schedule.

    Args:
        probes: probe windows with samples attached (generate_scenario or
            fill_probes output).
        provider: embedding provider with embed_probe().
        pipeline: foreground-speech pipeline with classify_pair().
        cfg: detector thresholds.

    Returns:
        ReplayResult with confirmed segments, rejected candidates and the
        per-probe log (cue fraction, speech slots, processing latency).
    """
    cfg = cfg or DetectorConfig()
    detector = TemporalDetector(cfg)
    vocabulary = provider.vocabulary
    segments: list[InteractionSegment] = []
    rejected: list[RejectedCandidate] = []
    log: list[ProbeLogEntry] = []

    def settle(cands):
        for cand in cands:
            outcome = confirm_segment(cand, cfg)
            if isinstance(outcome, InteractionSegment):
                segments.append(outcome)
            else:
                rejected.append(outcome)

    for probe in probes:
        t0 = time.perf_counter()
        result = build_probe_result(probe, provider, pipeline, vocabulary)
        closed = detector.process(result)
        settle(closed)
        note = ""
        if not result.on_body:
            note = "off-body"
        elif not result.recorded:
            note = "missing-audio"
        elif closed:
            note = "closed-candidate"
        log.append(ProbeLogEntry(
            index=result.index, start=result.start, end=result.end,
            on_body=result.on_body, recorded=result.recorded,
            cue_fraction=result.cue_fraction,
            fg_slots=sum(1 for s in result.slots if s.cue and s.fg),
            latency_ms=(time.perf_counter() - t0) * 1000.0,
            note=note,
        ))
    settle(detector.flush())
    return ReplayResult(segments=segments, rejected=rejected, probe_log=log)


# ---------------------------------------------------------------------------
# Segment files
# ---------------------------------------------------------------------------


def write_segments(path: str, segments: list[InteractionSegment]) -> None:
    """JSONL, one segment per line: start, end, fs fraction, probe count,
    provenance."""
    with open(path, "w", encoding="utf-8") as fh:
        for s in segments:
            fh.write(json.dumps({
                "start_ms": s.start_ms,
                "end_ms": s.end_ms,
                "fs_fraction": s.fs_fraction,
                "probes": s.probes,
                "provenance": s.provenance,
            }) + "\n")


def read_segments(path: str) -> list[InteractionSegment]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                seg = InteractionSegment(
                    start_ms=int(obj["start_ms"]), end_ms=int(obj["end_ms"]),
                    fs_fraction=float(obj["fs_fraction"]),
                    probes=int(obj["probes"]),
                    provenance=obj.get("provenance", "auto"),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise InvalidDataError(f"{path}:{lineno}: bad segment: {exc}") from exc
            if seg.end_ms < seg.start_ms:
                raise SequencingError(f"{path}:{lineno}: segment interval inverted")
            out.append(seg)
    return out
