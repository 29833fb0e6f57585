"""Prompt scheduling policy.

Two prompt kinds reach the wearer: a detected-interaction prompt right after
a segment closes, and a periodic missed-interaction query. Quiet hours
(midnight to 8 am by default) silence everything; detected prompts also
respect a rolling hourly cap. Missed queries become due 80 minutes after the
previous one plus a uniform jitter of up to 5 minutes, and fire at the first
probe start at or after the due time, so consecutive queries during
continuous wear land 80 to 90 minutes apart.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidConfigError
from ..sensorstream import MS_PER_DAY

VIBRATION_MS = 200


@dataclass(frozen=True)
class NotificationPolicy:
    quiet_start_ms: int = 0             # time of day, inclusive
    quiet_end_ms: int = 28_800_000      # time of day, exclusive (08:00)
    hourly_cap: int = 4
    cap_window_ms: int = 3_600_000
    missed_base_ms: int = 4_800_000     # 80 min
    missed_jitter_ms: int = 300_000     # up to 5 min extra

    def __post_init__(self):
        for name in ("quiet_start_ms", "quiet_end_ms"):
            v = getattr(self, name)
            if not 0 <= v <= MS_PER_DAY:
                raise InvalidConfigError(f"{name} must be a time of day in ms, got {v}")
        if self.hourly_cap < 0 or self.cap_window_ms <= 0:
            raise InvalidConfigError("cap must be non-negative over a positive window")
        if self.missed_base_ms <= 0 or self.missed_jitter_ms < 0:
            raise InvalidConfigError("missed-query timing must be positive")

    def is_quiet(self, t_ms: int) -> bool:
        tod = t_ms % MS_PER_DAY
        if self.quiet_start_ms <= self.quiet_end_ms:
            return self.quiet_start_ms <= tod < self.quiet_end_ms
        return tod >= self.quiet_start_ms or tod < self.quiet_end_ms


@dataclass(frozen=True)
class PromptEvent:
    id: str
    kind: str                      # detected-interaction | missed-query
    issued_at: int
    interval: tuple[int, int]      # segment, or span a missed query covers
    vibration_ms: int = VIBRATION_MS


@dataclass(frozen=True)
class SuppressedPrompt:
    kind: str
    at: int
    reason: str                    # quiet-hours | hourly-cap | seek-skip
    interval: tuple[int, int] | None = None


@dataclass
class PromptScheduler:
    """Stateful policy engine; all times are virtual session milliseconds."""

    policy: NotificationPolicy
    session_start_ms: int
    seed: int = 0
    issued: list[PromptEvent] = field(default_factory=list)
    suppressed: list[SuppressedPrompt] = field(default_factory=list)

    def __post_init__(self):
        self._rng = np.random.default_rng([self.seed, 301])
        self._counter = 0
        self._detected_times: list[int] = []
        self._covered_from = self.session_start_ms
        self._next_missed_due = self.session_start_ms + self._missed_delay()

    def _missed_delay(self) -> int:
        return self.policy.missed_base_ms + int(
            self._rng.integers(0, self.policy.missed_jitter_ms + 1)
        )

    def _next_id(self) -> str:
        self._counter += 1
        return f"prompt-{self._counter:05d}"

    def _cap_reached(self, t_ms: int) -> bool:
        window_lo = t_ms - self.policy.cap_window_ms
        recent = sum(1 for x in self._detected_times if window_lo < x <= t_ms)
        return recent >= self.policy.hourly_cap

    def on_segment(self, start_ms: int, end_ms: int, detected_at: int,
                   suppress_reason: str | None = None):
        """Offer a detected-interaction prompt for a freshly closed segment."""
        interval = (start_ms, end_ms)
        reason = suppress_reason
        if reason is None and self.policy.is_quiet(detected_at):
            reason = "quiet-hours"
        if reason is None and self._cap_reached(detected_at):
            reason = "hourly-cap"
        if reason is not None:
            sup = SuppressedPrompt(kind="detected-interaction", at=detected_at,
                                   reason=reason, interval=interval)
            self.suppressed.append(sup)
            return sup
        prompt = PromptEvent(id=self._next_id(), kind="detected-interaction",
                             issued_at=detected_at, interval=interval)
        self.issued.append(prompt)
        self._detected_times.append(detected_at)
        return prompt

    def on_probe_start(self, t_ms: int, allow: bool = True):
        """Fire the missed-interaction query if it is due at this probe."""
        if t_ms < self._next_missed_due:
            return None
        if self.policy.is_quiet(t_ms):
            return None
        if not allow:
            # a seek jumped over this probe; the query stays pending and
            # fires at the first probe start after the seek target
            return None
        prompt = PromptEvent(id=self._next_id(), kind="missed-query",
                             issued_at=t_ms,
                             interval=(self._covered_from, t_ms))
        self.issued.append(prompt)
        self._covered_from = t_ms
        self._next_missed_due = t_ms + self._missed_delay()
        return prompt
