"""Duty-cycled sensor streams for a wrist wearable.

Sensing runs in short probe windows (15 s every 90 s by default). Each probe
collects raw samples per sensor kind; downstream stages normalise each stream
to a fixed per-modality rate before feature extraction. Synthetic scenarios
generate deterministic streams with planted social interactions so the whole
pipeline can be exercised without hardware.
"""

from __future__ import annotations

import json
import math
import os
from bisect import bisect_left
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InsufficientSamplesError,
    InvalidConfigError,
    InvalidDataError,
    InvalidSpecError,
    SequencingError,
    ShapeError,
)

SENSOR_KINDS = ("audio-feature", "ppg", "accel", "gravity", "light")

# Number of values carried per sample. audio-feature packs
# (class_index, foreground_flag) for one 1-second slot.
VALUE_ARITY = {"accel": 3, "gravity": 3, "light": 1, "ppg": 1, "audio-feature": 2}

MS_PER_SECOND = 1_000
MS_PER_DAY = 86_400_000

SLOT_MS = 1_000  # audio is scored in 1-second slots

INTERACTION_MODES = ("in-person", "virtual", "hybrid")


@dataclass(frozen=True)
class SensorSample:
    """One reading: integer-ms timestamp, sensor kind, value tuple."""

    t: int
    kind: str
    values: tuple[float, ...]


@dataclass(frozen=True)
class DutyCycleConfig:
    """Probe window length and the gap between consecutive windows."""

    window_ms: int = 15_000
    gap_ms: int = 75_000

    def __post_init__(self):
        if self.window_ms <= 0 or self.gap_ms < 0:
            raise InvalidConfigError(
                "window_ms must be positive and gap_ms non-negative, got "
                f"window_ms={self.window_ms} gap_ms={self.gap_ms}"
            )

    @property
    def period_ms(self) -> int:
        return self.window_ms + self.gap_ms

    @property
    def slots_per_window(self) -> int:
        return self.window_ms // SLOT_MS


@dataclass
class ProbeWindow:
    """One duty-cycle window with the samples recorded inside it."""

    index: int
    start: int
    end: int
    samples: dict[str, list[SensorSample]] = field(default_factory=dict)
    on_body: bool = True

    def slot_starts(self) -> list[int]:
        return list(range(self.start, self.end, SLOT_MS))


def schedule_probes(epoch_ms: int, horizon_ms: int,
                    cfg: DutyCycleConfig | None = None) -> list[ProbeWindow]:
    """Lay out probe windows over [epoch, epoch + horizon).

    Window i starts at ``epoch_ms + i * cfg.period_ms``; only windows that fit
    entirely inside the horizon are returned, so a 24 h horizon with the
    default 15 s / 75 s cycle yields 960 probes.

    Args:
        epoch_ms: scenario clock value of the first window start.
        horizon_ms: total span to cover, in ms.
        cfg: duty-cycle parameters; defaults to 15 s windows every 90 s.

    Returns:
        List of ProbeWindow shells (no samples) in start order.
    """
    if epoch_ms < 0 or horizon_ms < 0:
        raise InvalidConfigError("epoch_ms and horizon_ms must be non-negative")
    cfg = cfg or DutyCycleConfig()
    probes = []
    i = 0
    while epoch_ms + i * cfg.period_ms + cfg.window_ms <= epoch_ms + horizon_ms:
        start = epoch_ms + i * cfg.period_ms
        probes.append(ProbeWindow(index=i, start=start, end=start + cfg.window_ms))
        i += 1
    return probes


def normalize_rate(times_ms, values, target_hz: float,
                   window_start_ms: int, window_ms: int = 15_000) -> np.ndarray:
    """Resample an irregular series to a fixed rate by bin averaging.

    The window is divided into ``round(window_ms / 1000 * target_hz)``
    half-open bins of width 1000/target_hz ms. Samples landing in a bin are
    averaged; empty interior bins are filled by linear interpolation between
    the nearest non-empty bin values and empty edge bins clamp to the nearest
    observed value.

    Args:
        times_ms: sample timestamps (ms), any order, within the window.
        values: matching array of shape (n,) or (n, d).
        target_hz: output rate, must be positive.
        window_start_ms: window start on the same clock as times_ms.
        window_ms: window length; defaults to one probe window.

    Returns:
        Array of shape (m,) or (m, d) with m = round(window_ms/1000 * target_hz).
    """
    if target_hz <= 0:
        raise InvalidConfigError(f"target_hz must be positive, got {target_hz}")
    times = np.asarray(times_ms, dtype=np.float64)
    vals = np.asarray(values, dtype=np.float64)
    squeeze = vals.ndim == 1
    if squeeze:
        vals = vals[:, None]
    if vals.shape[0] != times.shape[0]:
        raise ShapeError(f"{times.shape[0]} timestamps but {vals.shape[0]} values")

    m = int(round(window_ms / MS_PER_SECOND * target_hz))
    rel = times - float(window_start_ms)
    idx = np.floor(rel * target_hz / MS_PER_SECOND).astype(np.int64)
    keep = (rel >= 0) & (rel < window_ms) & (idx >= 0) & (idx < m)
    idx = idx[keep]
    vals = vals[keep]
    if idx.size == 0:
        raise InsufficientSamplesError("no samples inside the window")

    d = vals.shape[1]
    sums = np.zeros((m, d))
    np.add.at(sums, idx, vals)
    counts = np.bincount(idx, minlength=m).astype(np.float64)
    filled = counts > 0
    means = np.empty((m, d))
    means[filled] = sums[filled] / counts[filled, None]

    # np.interp clamps beyond the first/last known bin, which is exactly the
    # edge behaviour we want.
    grid = np.arange(m, dtype=np.float64)
    known = np.flatnonzero(filled).astype(np.float64)
    out = np.empty((m, d))
    for j in range(d):
        out[:, j] = np.interp(grid, known, means[filled, j])
    return out[:, 0] if squeeze else out


def magnitude(values) -> np.ndarray:
    """Euclidean norm across the last axis (3-axis accel/gravity to scalar)."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ShapeError(f"expected (n, 3) array, got {arr.shape}")
    return np.linalg.norm(arr, axis=1)


# ---------------------------------------------------------------------------
# Synthetic scenarios
# ---------------------------------------------------------------------------

DEFAULT_RAW_RATES = {"accel": 20.0, "gravity": 20.0, "light": 5.0, "ppg": 25.0}


@dataclass(frozen=True)
class PlantedInteraction:
    """A ground-truth social interaction to embed in a scenario.

    cue_density is the fraction of covered 1-s slots carrying a conversational
    cue class; fg_density the fraction carrying actual foreground speech
    (always a subset of the cue slots).
    """

    start_ms: int
    end_ms: int
    mode: str = "in-person"
    cue_density: float = 1.0
    fg_density: float = 0.4
    cue_class: str = "Conversation"

    def __post_init__(self):
        if self.end_ms <= self.start_ms:
            raise InvalidSpecError(f"interaction interval inverted: {self}")
        if self.mode not in INTERACTION_MODES:
            raise InvalidSpecError(f"unknown mode {self.mode!r}")
        for name in ("cue_density", "fg_density"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidSpecError(f"{name} must lie in [0, 1], got {v}")


@dataclass(frozen=True)
class SyntheticScenario:
    """Deterministic description of a simulated recording.

    All timestamps live on one clock where 0 is midnight of day 0, so
    time-of-day logic is a plain modulo. The scenario spans
    [epoch_ms, epoch_ms + duration_ms).
    """

    duration_ms: int
    epoch_ms: int = 0
    seed: int = 0
    interactions: tuple[PlantedInteraction, ...] = ()
    off_body: tuple[tuple[int, int], ...] = ()
    ambient_class: str = "Silence"
    pulse_hz: float = 1.2
    raw_rates: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_RAW_RATES))

    def __post_init__(self):
        if self.duration_ms <= 0:
            raise InvalidSpecError("duration_ms must be positive")
        if self.epoch_ms < 0:
            raise InvalidSpecError("epoch_ms must be non-negative")
        for a, b in self.off_body:
            if b <= a:
                raise InvalidSpecError(f"off-body interval inverted: ({a}, {b})")
        for kind, hz in self.raw_rates.items():
            if kind not in DEFAULT_RAW_RATES:
                raise InvalidSpecError(f"unknown raw-rate kind {kind!r}")
            if hz <= 0:
                raise InvalidSpecError(f"raw rate for {kind} must be positive")


@dataclass(frozen=True)
class SlotTruth:
    """Ground truth for one 1-s slot of one probe."""

    probe_index: int
    slot_index: int
    t_ms: int
    cue: bool
    fg: bool
    class_name: str


@dataclass
class ScenarioData:
    """Generated probes (with samples), flat streams, and slot ground truth."""

    spec: SyntheticScenario
    duty: DutyCycleConfig
    probes: list[ProbeWindow]
    truth: list[SlotTruth]

    def streams(self) -> dict[str, list[SensorSample]]:
        out: dict[str, list[SensorSample]] = {k: [] for k in SENSOR_KINDS}
        for probe in self.probes:
            for kind, samples in probe.samples.items():
                out[kind].extend(samples)
        return {k: sorted(v, key=lambda s: s.t) for k, v in out.items() if v}


def parse_scenario(obj: dict) -> SyntheticScenario:
    """Build a SyntheticScenario from its JSON dict form."""
    if not isinstance(obj, dict):
        raise InvalidSpecError("scenario spec must be a JSON object")
    try:
        interactions = tuple(
            PlantedInteraction(**item) for item in obj.get("interactions", ())
        )
        off_body = tuple((int(a), int(b)) for a, b in obj.get("off_body", ()))
        return SyntheticScenario(
            duration_ms=int(obj["duration_ms"]),
            epoch_ms=int(obj.get("epoch_ms", 0)),
            seed=int(obj.get("seed", 0)),
            interactions=interactions,
            off_body=off_body,
            ambient_class=obj.get("ambient_class", "Silence"),
            pulse_hz=float(obj.get("pulse_hz", 1.2)),
            raw_rates={**DEFAULT_RAW_RATES, **obj.get("raw_rates", {})},
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidSpecError(f"bad scenario spec: {exc}") from exc


def _intersects(a0: int, a1: int, b0: int, b1: int) -> bool:
    return a0 < b1 and b0 < a1


def _covering_interaction(spec: SyntheticScenario, slot_start: int):
    for inter in spec.interactions:
        if slot_start >= inter.start_ms and slot_start + SLOT_MS <= inter.end_ms:
            return inter
    return None


def _slot_flags(spec, probe, rng, vocab_index):
    """Assign (cue, fg, class) per 1-s slot with exact per-probe counts."""
    slots = []
    ambient_idx = vocab_index[spec.ambient_class]
    starts = probe.slot_starts()
    covered = [(i, _covering_interaction(spec, t)) for i, t in enumerate(starts)]
    by_inter: dict[PlantedInteraction, list[int]] = {}
    for i, inter in covered:
        if inter is not None:
            by_inter.setdefault(inter, []).append(i)
    flags = {i: (False, False, ambient_idx) for i in range(len(starts))}
    for inter, idxs in by_inter.items():
        n_cue = int(round(inter.cue_density * len(idxs)))
        n_fg = min(n_cue, int(round(inter.fg_density * len(idxs))))
        order = rng.permutation(len(idxs))
        cue_slots = [idxs[k] for k in order[:n_cue]]
        for j, slot in enumerate(cue_slots):
            flags[slot] = (True, j < n_fg, vocab_index[inter.cue_class])
    for i, t in enumerate(starts):
        cue, fg, cls = flags[i]
        slots.append((i, t, cue, fg, cls))
    return slots


def _gen_probe_samples(spec, probe, rng):
    """Raw physical streams (everything except audio-feature) for one probe."""
    out: dict[str, list[SensorSample]] = {}
    dur_s = (probe.end - probe.start) / MS_PER_SECOND
    in_interaction = any(
        _intersects(probe.start, probe.end, i.start_ms, i.end_ms)
        for i in spec.interactions
    )
    for kind in ("accel", "gravity", "light", "ppg"):
        hz = spec.raw_rates[kind]
        n = int(math.floor(dur_s * hz))
        t = probe.start + np.floor(np.arange(n) * MS_PER_SECOND / hz).astype(np.int64)
        ts = (t - probe.start) / MS_PER_SECOND
        if kind == "accel":
            wiggle = 1.2 if in_interaction else 0.3
            base = np.stack([
                0.3 * np.sin(2 * np.pi * 0.8 * ts),
                0.2 * np.cos(2 * np.pi * 0.5 * ts),
                9.7 + 0.1 * np.sin(2 * np.pi * 0.2 * ts),
            ], axis=1)
            vals = base + rng.normal(0.0, wiggle, size=(n, 3))
        elif kind == "gravity":
            theta = rng.uniform(0, 2 * np.pi)
            direction = np.array([np.sin(theta) * 0.3, np.cos(theta) * 0.3, 0.95])
            direction = direction / np.linalg.norm(direction)
            vals = 9.81 * direction[None, :] + rng.normal(0.0, 0.05, size=(n, 3))
        elif kind == "light":
            tod = ((probe.start % MS_PER_DAY) / MS_PER_DAY) * 2 * np.pi
            level = max(5.0, 250.0 * (1 + np.sin(tod - np.pi / 2)))
            vals = np.clip(level + rng.normal(0.0, 8.0, size=(n, 1)), 0.0, None)
        else:  # ppg
            phase = rng.uniform(0, 2 * np.pi)
            wave = (
                np.sin(2 * np.pi * spec.pulse_hz * ts + phase)
                + 0.35 * np.sin(4 * np.pi * spec.pulse_hz * ts + phase)
            )
            drift = 0.4 * np.sin(2 * np.pi * 0.05 * ts)
            vals = (wave + drift + rng.normal(0.0, 0.05, size=n))[:, None]
        out[kind] = [
            SensorSample(int(t[i]), kind, tuple(float(x) for x in vals[i]))
            for i in range(n)
        ]
    return out


def generate_scenario(spec: SyntheticScenario,
                      duty: DutyCycleConfig | None = None,
                      vocabulary=None) -> ScenarioData:
    """Generate deterministic streams and ground truth for a scenario.

    Probes intersecting an off-body interval record nothing. Audio features
    are one sample per 1-s slot carrying (class_index, foreground_flag);
    physical streams are synthesised at the scenario's raw rates. The same
    (spec, duty) pair always produces identical output.

    Args:
        spec: scenario description.
        duty: duty-cycle parameters (default 15 s / 75 s).
        vocabulary: object with a ``name_to_index`` mapping; defaults to the
            built-in 521-class vocabulary.

    Returns:
        ScenarioData with filled probes and per-slot ground truth.
    """
    duty = duty or DutyCycleConfig()
    if vocabulary is None:
        from .audiofrontend import Vocabulary  # local to avoid a module cycle
        vocabulary = Vocabulary.default()
    vocab_index = vocabulary.name_to_index
    for inter in spec.interactions:
        if inter.cue_class not in vocab_index:
            raise InvalidSpecError(f"cue class {inter.cue_class!r} not in vocabulary")
    if spec.ambient_class not in vocab_index:
        raise InvalidSpecError(f"ambient class {spec.ambient_class!r} not in vocabulary")

    probes = schedule_probes(spec.epoch_ms, spec.duration_ms, duty)
    truth: list[SlotTruth] = []
    names = vocabulary.names
    for probe in probes:
        rng = np.random.default_rng([spec.seed, probe.index])
        if any(_intersects(probe.start, probe.end, a, b) for a, b in spec.off_body):
            probe.on_body = False
            probe.samples = {}
            continue
        probe.samples = _gen_probe_samples(spec, probe, rng)
        audio = []
        for i, t, cue, fg, cls in _slot_flags(spec, probe, rng, vocab_index):
            audio.append(SensorSample(t, "audio-feature", (float(cls), float(fg))))
            truth.append(SlotTruth(probe.index, i, t, cue, fg, names[cls]))
        probe.samples["audio-feature"] = audio
    return ScenarioData(spec=spec, duty=duty, probes=probes, truth=truth)


# ---------------------------------------------------------------------------
# Stream files
# ---------------------------------------------------------------------------


def write_streams(directory: str, streams: dict[str, list[SensorSample]]) -> None:
    """Write one JSONL file per sensor kind: {"t_ms": int, "values": [...]}."""
    os.makedirs(directory, exist_ok=True)
    for kind, samples in streams.items():
        if kind not in VALUE_ARITY:
            raise InvalidDataError(f"unknown sensor kind {kind!r}")
        path = os.path.join(directory, f"{kind}.jsonl")
        with open(path, "w", encoding="utf-8") as fh:
            for s in sorted(samples, key=lambda s: s.t):
                fh.write(json.dumps({"t_ms": s.t, "values": list(s.values)}) + "\n")


def read_streams(directory: str) -> dict[str, list[SensorSample]]:
    """Read per-kind JSONL streams, validating order, arity and timestamps."""
    streams: dict[str, list[SensorSample]] = {}
    for kind in SENSOR_KINDS:
        path = os.path.join(directory, f"{kind}.jsonl")
        if not os.path.exists(path):
            continue
        samples = []
        last_t = -1
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                    t = int(obj["t_ms"])
                    values = tuple(float(v) for v in obj["values"])
                except (KeyError, TypeError, ValueError) as exc:
                    raise InvalidDataError(f"{path}:{lineno}: bad record: {exc}") from exc
                if t < 0:
                    raise InvalidDataError(f"{path}:{lineno}: negative timestamp {t}")
                if len(values) != VALUE_ARITY[kind]:
                    raise ShapeError(
                        f"{path}:{lineno}: {kind} expects {VALUE_ARITY[kind]} values, "
                        f"got {len(values)}"
                    )
                if t < last_t:
                    raise SequencingError(f"{path}:{lineno}: timestamps decrease")
                last_t = t
                samples.append(SensorSample(t, kind, values))
        streams[kind] = samples
    return streams


def fill_probes(streams: dict[str, list[SensorSample]],
                probes: list[ProbeWindow]) -> list[ProbeWindow]:
    """Assign stream samples to the probe windows containing them.

    A probe with no samples of any kind is marked off-body. Samples outside
    every window (in the duty-cycle gaps) are dropped.
    """
    times = {kind: [s.t for s in samples] for kind, samples in streams.items()}
    out = []
    for probe in probes:
        collected: dict[str, list[SensorSample]] = {}
        for kind, samples in streams.items():
            lo = bisect_left(times[kind], probe.start)
            hi = bisect_left(times[kind], probe.end)
            if hi > lo:
                collected[kind] = samples[lo:hi]
        out.append(ProbeWindow(
            index=probe.index, start=probe.start, end=probe.end,
            samples=collected, on_body=bool(collected),
        ))
    return out
