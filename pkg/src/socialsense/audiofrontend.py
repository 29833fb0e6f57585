"""Audio frontend: per-slot embeddings, class scores, and cue detection.

The wearable never stores raw audio. Each 1-second slot of a probe window is
summarised by two 0.48 s analysis frames, each carrying an embedding vector
and scores over a 521-class vocabulary. A slot whose top class (argmax of the
two-frame mean score) is conversational counts as a cue slot; the foreground
speech decision for cue slots is made downstream from the embeddings.

Two providers produce frames: a deterministic synthetic one driven by the
audio-feature stream of a scenario, and a reader for precomputed embedding
files captured on-device.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import InvalidDataError, MissingModalityError, ShapeError
from .sensorstream import ProbeWindow

VOCAB_SIZE = 521

FRAMES_PER_SLOT = 2
FRAME_SPAN_MS = 480

# Conversational cue classes, matched against vocabulary names verbatim.
CUE_CLASSES = frozenset([
    "Conversation",
    "Chatter",
    "Whispering",
    "Speech",
    "Shout",
    "Screaming",
    "Laughter",
    "Wail, Moan",
    "Groan",
    "Narration, Monologue",
    "Child speech, Kid Speaking",
    "Clapping",
])

_HEAD_NAMES = [
    "Speech",
    "Child speech, Kid Speaking",
    "Conversation",
    "Narration, Monologue",
    "Babbling",
    "Shout",
    "Bellow",
    "Yell",
    "Children shouting",
    "Screaming",
    "Whispering",
    "Laughter",
    "Baby laughter",
    "Giggle",
    "Snicker",
    "Chuckle",
    "Crying, sobbing",
    "Baby cry",
    "Whimper",
    "Wail, Moan",
    "Sigh",
    "Singing",
    "Choir",
    "Chant",
    "Child singing",
    "Rapping",
    "Humming",
    "Groan",
    "Grunt",
    "Whistling",
    "Breathing",
    "Wheeze",
    "Snoring",
    "Gasp",
    "Cough",
    "Throat clearing",
    "Sneeze",
    "Sniff",
    "Walk, footsteps",
    "Chewing",
    "Clapping",
    "Finger snapping",
    "Cheering",
    "Applause",
    "Chatter",
    "Crowd",
    "Children playing",
    "Dog",
    "Cat",
    "Bird",
    "Music",
    "Musical instrument",
    "Guitar",
    "Piano",
    "Drum",
    "Television",
    "Radio",
    "Vehicle",
    "Car",
    "Traffic noise",
    "Rail transport",
    "Aircraft",
    "Wind",
    "Rain",
    "Water",
    "Door",
    "Knock",
    "Typing",
    "Telephone",
    "Alarm",
    "Siren",
    "Mechanical fan",
    "Air conditioning",
    "Kettle whistle",
    "Dishes, pots, and pans",
    "Cutlery, silverware",
    "Microwave oven",
    "Vacuum cleaner",
    "White noise",
    "Static",
    "Silence",
]


@dataclass(frozen=True)
class Vocabulary:
    """Ordered class names; a class index is its line number in the file."""

    names: tuple[str, ...]

    def __post_init__(self):
        if not self.names:
            raise InvalidDataError("vocabulary must contain at least one class")

    @property
    def name_to_index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.names)}

    @property
    def cue_indices(self) -> frozenset[int]:
        return frozenset(
            i for i, name in enumerate(self.names) if name in CUE_CLASSES
        )

    def __len__(self) -> int:
        return len(self.names)

    @classmethod
    def default(cls) -> "Vocabulary":
        filler = [f"Class {i:03d}" for i in range(len(_HEAD_NAMES), VOCAB_SIZE)]
        return cls(names=tuple(_HEAD_NAMES + filler))

    @classmethod
    def load(cls, path: str) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            names = tuple(line.rstrip("\n") for line in fh if line.rstrip("\n"))
        return cls(names=names)

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for name in self.names:
                fh.write(name + "\n")


@dataclass(frozen=True)
class FrameResult:
    """One 0.48 s analysis frame: embedding plus class scores."""

    embedding: np.ndarray
    scores: np.ndarray


@dataclass(frozen=True)
class SlotScore:
    """Cue decision for one 1-s slot."""

    slot: int
    t_ms: int
    class_index: int
    class_name: str
    cue: bool


def detect_cue(scores_a, scores_b, vocabulary: Vocabulary) -> SlotScore:
    """Top class of a slot from its two frames' mean scores.

    Ties resolve to the lowest class index (np.argmax convention). The slot
    is a cue slot when the winning class is conversational.
    """
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeError(f"score shapes differ: {a.shape} vs {b.shape}")
    if a.shape[0] != len(vocabulary):
        raise ShapeError(
            f"{a.shape[0]} scores for a {len(vocabulary)}-class vocabulary"
        )
    mean = (a + b) / 2.0
    idx = int(np.argmax(mean))
    name = vocabulary.names[idx]
    return SlotScore(slot=-1, t_ms=-1, class_index=idx, class_name=name,
                     cue=name in CUE_CLASSES)


def profile_probe(frames: list[FrameResult], probe: ProbeWindow,
                  vocabulary: Vocabulary) -> list[SlotScore]:
    """Pair up frames (2 per second) and score every slot of a probe."""
    n_slots = len(probe.slot_starts())
    if len(frames) != FRAMES_PER_SLOT * n_slots:
        raise ShapeError(
            f"probe {probe.index} has {len(frames)} frames, "
            f"expected {FRAMES_PER_SLOT * n_slots}"
        )
    out = []
    for i, t in enumerate(probe.slot_starts()):
        s = detect_cue(frames[2 * i].scores, frames[2 * i + 1].scores, vocabulary)
        out.append(SlotScore(slot=i, t_ms=t, class_index=s.class_index,
                             class_name=s.class_name, cue=s.cue))
    return out


def cue_fraction(slots: list[SlotScore]) -> float:
    if not slots:
        return 0.0
    return sum(1 for s in slots if s.cue) / len(slots)


class SyntheticEmbeddingProvider:
    """Deterministic frames derived from a scenario's audio-feature stream.

    The stream stores (class_index, foreground_flag) per slot. Scores put the
    stored class on top with margin; embeddings separate foreground from
    background along the first axis so a frame classifier can be trained on
    them. Each slot's randomness is seeded by (seed, slot time), so replaying
    a probe always yields identical frames.
    """

    def __init__(self, vocabulary: Vocabulary | None = None, dim: int = 32,
                 seed: int = 0, separation: float = 3.0, noise_sd: float = 0.3):
        self.vocabulary = vocabulary or Vocabulary.default()
        self.dim = dim
        self.seed = seed
        self.separation = separation
        self.noise_sd = noise_sd

    def _frame(self, rng, class_index: int, fg: bool) -> FrameResult:
        scores = rng.uniform(0.0, 0.04, size=len(self.vocabulary))
        scores[class_index] = 0.7 + rng.uniform(0.0, 0.1)
        emb = rng.normal(0.0, self.noise_sd, size=self.dim)
        emb[0] += self.separation / 2.0 if fg else -self.separation / 2.0
        return FrameResult(embedding=emb, scores=scores)

    def embed_probe(self, probe: ProbeWindow) -> list[FrameResult]:
        samples = probe.samples.get("audio-feature")
        if not samples:
            raise MissingModalityError(
                f"probe {probe.index} has no audio-feature samples"
            )
        n_slots = len(probe.slot_starts())
        if len(samples) != n_slots:
            raise InvalidDataError(
                f"probe {probe.index} has {len(samples)} audio-feature slots, "
                f"expected {n_slots}"
            )
        frames = []
        for s in samples:
            class_index = int(s.values[0])
            fg = bool(s.values[1])
            if not 0 <= class_index < len(self.vocabulary):
                raise InvalidDataError(f"class index {class_index} out of range")
            rng = np.random.default_rng([self.seed, s.t])
            frames.append(self._frame(rng, class_index, fg))
            frames.append(self._frame(rng, class_index, fg))
        return frames


class PrecomputedEmbeddingProvider:
    """Frames read from per-probe binary files named probe_<start_ms>.emb."""

    def __init__(self, directory: str, vocabulary: Vocabulary | None = None):
        self.directory = directory
        self.vocabulary = vocabulary or Vocabulary.default()

    def embed_probe(self, probe: ProbeWindow) -> list[FrameResult]:
        path = os.path.join(self.directory, f"probe_{probe.start}.emb")
        if not os.path.exists(path):
            raise MissingModalityError(f"no embedding file for probe {probe.index}")
        embeddings, scores = read_embeddings(path)
        if scores.shape[1] != len(self.vocabulary):
            raise ShapeError(
                f"{path}: {scores.shape[1]} score columns for a "
                f"{len(self.vocabulary)}-class vocabulary"
            )
        return [FrameResult(embedding=embeddings[i], scores=scores[i])
                for i in range(embeddings.shape[0])]


def write_embeddings(path: str, embeddings, scores) -> None:
    """Write frames as {frames u32, E u32, frames x E f32, frames x C f32}."""
    emb = np.asarray(embeddings, dtype=np.float64)
    sc = np.asarray(scores, dtype=np.float64)
    if emb.ndim != 2 or sc.ndim != 2 or emb.shape[0] != sc.shape[0]:
        raise ShapeError(
            f"embeddings {emb.shape} and scores {sc.shape} do not align"
        )
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", emb.shape[0], emb.shape[1]))
        fh.write(np.ascontiguousarray(emb, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(sc, dtype="<f4").tobytes())


def read_embeddings(path: str, n_classes: int = VOCAB_SIZE):
    """Read an embedding file; returns (embeddings, scores) float64 arrays."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 8:
        raise InvalidDataError(f"{path}: truncated embedding file")
    n_frames, dim = struct.unpack_from("<II", blob, 0)
    expect = 8 + 4 * n_frames * (dim + n_classes)
    if len(blob) != expect:
        raise InvalidDataError(
            f"{path}: {len(blob)} bytes, expected {expect} for "
            f"{n_frames} frames, E={dim}, {n_classes} classes"
        )
    flat = np.frombuffer(blob, dtype="<f4", offset=8).astype(np.float64)
    emb = flat[: n_frames * dim].reshape(n_frames, dim)
    scores = flat[n_frames * dim:].reshape(n_frames, n_classes)
    return emb, scores
