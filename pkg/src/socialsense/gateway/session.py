"""Replay session: drives detection and prompting off a virtual clock.

The session owns a probe cursor over the scenario. advance_to(t) processes
every probe window that has fully elapsed by virtual time t: the missed-query
policy is consulted at each probe start, the detector consumes the probe's
cue profile, and freshly closed segments are persisted and offered to the
prompt policy at the closing probe's end. Seeking forward processes the
skipped span silently: detections still land in the store, but their prompts
are suppressed with reason "seek-skip" and pending missed queries wait for
the first probe past the target.
"""

from __future__ import annotations

from ..detector import (
    DetectorConfig,
    InteractionSegment,
    TemporalDetector,
    build_probe_result,
    confirm_segment,
)
from ..errors import ValidationError
from ..sensorstream import ScenarioData
from .clock import ReplayClock
from .policy import NotificationPolicy, PromptEvent, PromptScheduler
from .store import AnnotationStore


class ReplaySession:
    def __init__(self, data: ScenarioData, provider, pipeline,
                 store: AnnotationStore,
                 det_cfg: DetectorConfig | None = None,
                 policy: NotificationPolicy | None = None,
                 seed: int = 0,
                 clock: ReplayClock | None = None):
        self.data = data
        self.provider = provider
        self.pipeline = pipeline
        self.store = store
        self.det_cfg = det_cfg or DetectorConfig()
        self.policy = policy or NotificationPolicy()
        self.start_ms = data.spec.epoch_ms
        self.end_ms = data.spec.epoch_ms + data.spec.duration_ms
        self.detector = TemporalDetector(self.det_cfg)
        self.scheduler = PromptScheduler(self.policy, session_start_ms=self.start_ms,
                                         seed=seed)
        self.clock = clock or ReplayClock(start_virtual_ms=self.start_ms)
        self.segments: list[dict] = []
        self.rejected: list[dict] = []
        self.on_prompt = None        # callable(dict), set by the API layer
        self._cursor = 0
        self._flushed = False
        self._suppress_before: int | None = None

    # -- processing --------------------------------------------------------

    def _emit_prompt(self, prompt: PromptEvent) -> None:
        row = self.store.record_prompt(prompt)
        if self.on_prompt is not None:
            self.on_prompt(row)

    def _settle(self, closed, detected_at: int) -> None:
        for cand in closed:
            outcome = confirm_segment(cand, self.det_cfg)
            if isinstance(outcome, InteractionSegment):
                sid = self.store.register_segment(
                    outcome.start_ms, outcome.end_ms, outcome.provenance,
                    fs_fraction=outcome.fs_fraction)
                self.segments.append({
                    "id": sid, "start_ms": outcome.start_ms,
                    "end_ms": outcome.end_ms, "fs_fraction": outcome.fs_fraction,
                    "probes": outcome.probes,
                })
                suppress = None
                if self._suppress_before is not None and detected_at < self._suppress_before:
                    suppress = "seek-skip"
                result = self.scheduler.on_segment(outcome.start_ms, outcome.end_ms,
                                                   detected_at, suppress_reason=suppress)
                if isinstance(result, PromptEvent):
                    self._emit_prompt(result)
                else:
                    self.store.record_suppressed(result)
            else:
                self.rejected.append({
                    "start_ms": outcome.start_ms, "end_ms": outcome.end_ms,
                    "fs_fraction": outcome.fs_fraction, "reason": outcome.reason,
                })

    def _process_probe(self, probe) -> None:
        allow = self._suppress_before is None or probe.start >= self._suppress_before
        missed = self.scheduler.on_probe_start(probe.start, allow=allow)
        if missed is not None:
            self._emit_prompt(missed)
        result = build_probe_result(probe, self.provider, self.pipeline,
                                    self.provider.vocabulary)
        closed = self.detector.process(result)
        self._settle(closed, detected_at=probe.end)

    def advance_to(self, virtual_ms: int) -> None:
        probes = self.data.probes
        while self._cursor < len(probes) and probes[self._cursor].end <= virtual_ms:
            self._process_probe(probes[self._cursor])
            self._cursor += 1
        if (not self._flushed and self._cursor == len(probes)
                and virtual_ms >= self.end_ms):
            last_end = probes[-1].end if probes else self.start_ms
            self._settle(self.detector.flush(), detected_at=last_end)
            self._flushed = True

    def tick(self) -> None:
        self.advance_to(self.clock.now())

    # -- control -------------------------------------------------------------

    def control(self, command: str, speed: float | None = None,
                target_ms: int | None = None) -> dict:
        if command == "play":
            self.clock.play()
        elif command == "pause":
            self.clock.pause()
        elif command == "set-speed":
            if speed is None:
                raise ValidationError("set-speed needs a speed")
            self.clock.set_speed(speed)
        elif command == "seek":
            if target_ms is None:
                raise ValidationError("seek needs target_ms")
            if target_ms < self.start_ms:
                raise ValidationError(
                    f"seek target {target_ms} is before session start {self.start_ms}"
                )
            now = self.clock.now()
            if target_ms < now:
                raise ValidationError(
                    f"cannot seek backward (now {now}, target {target_ms})"
                )
            self._suppress_before = target_ms
            self.clock.seek(target_ms)
            self.advance_to(target_ms)
        else:
            raise ValidationError(f"unknown command {command!r}")
        return self.clock_state()

    def clock_state(self) -> dict:
        return {
            "virtual_ms": self.clock.now(),
            "speed": self.clock.speed,
            "playing": self.clock.playing,
            "start_ms": self.start_ms,
            "end_ms": self.end_ms,
        }

    def probe_rows(self, from_ms: int | None = None,
                   to_ms: int | None = None) -> list[dict]:
        rows = []
        for p in self.data.probes:
            if from_ms is not None and p.end < from_ms:
                continue
            if to_ms is not None and p.start > to_ms:
                continue
            rows.append({"index": p.index, "start_ms": p.start, "end_ms": p.end,
                         "on_body": p.on_body})
        return rows
