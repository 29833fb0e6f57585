"""Virtual replay clock: play, pause, speed, seek.

The clock maps wall time onto the scenario's millisecond timeline through an
anchor (virtual_at_anchor, wall_at_anchor, speed); every control operation
re-anchors. The wall-time source is injectable so tests stay deterministic.
"""

from __future__ import annotations

import time

from ..errors import InvalidConfigError, ValidationError


class ReplayClock:
    def __init__(self, start_virtual_ms: int = 0, speed: float = 1.0,
                 wall_fn=time.monotonic):
        if speed <= 0:
            raise InvalidConfigError(f"speed must be positive, got {speed}")
        self._wall_fn = wall_fn
        self._virtual_anchor = int(start_virtual_ms)
        self._wall_anchor = self._wall_fn()
        self._speed = float(speed)
        self._playing = False

    @property
    def speed(self) -> float:
        return self._speed

    @property
    def playing(self) -> bool:
        return self._playing

    def now(self) -> int:
        if not self._playing:
            return self._virtual_anchor
        elapsed = self._wall_fn() - self._wall_anchor
        return self._virtual_anchor + int(elapsed * 1000.0 * self._speed)

    def _reanchor(self) -> None:
        self._virtual_anchor = self.now()
        self._wall_anchor = self._wall_fn()

    def play(self) -> None:
        if not self._playing:
            self._wall_anchor = self._wall_fn()
            self._playing = True

    def pause(self) -> None:
        self._reanchor()
        self._playing = False

    def set_speed(self, speed: float) -> None:
        if speed <= 0:
            raise InvalidConfigError(f"speed must be positive, got {speed}")
        self._reanchor()
        self._speed = float(speed)

    def seek(self, target_ms: int) -> None:
        if target_ms < 0:
            raise ValidationError(f"cannot seek to negative time {target_ms}")
        self._virtual_anchor = int(target_ms)
        self._wall_anchor = self._wall_fn()
