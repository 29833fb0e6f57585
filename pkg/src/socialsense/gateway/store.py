"""Durable annotation storage.

Every mutation is one JSON line appended to an event log and fsynced, so a
killed process loses at most the line being written; restart rebuilds state
by replaying the log (a truncated final line is tolerated and dropped). A
compacted snapshot can be written at any point for inspection or archival.
Annotations live entirely apart from the sensor feature files.

Response records follow the wearer-facing flow: every answer branch carries
exactly three follow-ups. yes/maybe ask people count (or "?"), mode, and a
1-5 rating (or "?"); no asks what was wrong and two boolean speech probes.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict

from ..errors import InvalidDataError, NotFoundError, ValidationError
from .policy import PromptEvent, SuppressedPrompt

ANSWERS = ("yes", "no", "maybe")
MODES = ("in-person", "virtual", "hybrid")
NO_REASONS = ("time-wrong", "no-interaction")
RATING_MIN, RATING_MAX = 1, 5

FOLLOWUP_FIELDS = {
    "yes": ("people_count", "mode", "rating"),
    "maybe": ("people_count", "mode", "rating"),
    "no": ("reason", "device_speech", "nearby_speech"),
}


def validate_annotation(record: dict) -> dict:
    """Validate a response record; returns a normalised copy.

    Raises ValidationError on a wrong answer value, missing or unknown
    follow-ups, or follow-up values outside their domain.
    """
    if not isinstance(record, dict):
        raise ValidationError("annotation must be an object")
    answer = record.get("answer")
    if answer not in ANSWERS:
        raise ValidationError(f"answer must be one of {ANSWERS}, got {answer!r}")
    fields = FOLLOWUP_FIELDS[answer]
    allowed = {"answer", *fields}
    unknown = set(record) - allowed
    if unknown:
        raise ValidationError(f"unknown fields for {answer!r}: {sorted(unknown)}")
    missing = [f for f in fields if f not in record]
    if missing:
        raise ValidationError(f"missing follow-ups for {answer!r}: {missing}")

    out = {"answer": answer}
    if answer in ("yes", "maybe"):
        people = record["people_count"]
        if people != "?" and (isinstance(people, bool) or not isinstance(people, int) or people < 1):
            raise ValidationError(f"people_count must be a positive int or '?', got {people!r}")
        if record["mode"] not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {record['mode']!r}")
        rating = record["rating"]
        if rating != "?" and (isinstance(rating, bool) or not isinstance(rating, int)
                              or not RATING_MIN <= rating <= RATING_MAX):
            raise ValidationError(
                f"rating must be an int in [{RATING_MIN}, {RATING_MAX}] or '?', got {rating!r}"
            )
        out.update(people_count=people, mode=record["mode"], rating=rating)
    else:
        if record["reason"] not in NO_REASONS:
            raise ValidationError(f"reason must be one of {NO_REASONS}, got {record['reason']!r}")
        for key in ("device_speech", "nearby_speech"):
            if not isinstance(record[key], bool):
                raise ValidationError(f"{key} must be a boolean, got {record[key]!r}")
        out.update(reason=record["reason"], device_speech=record["device_speech"],
                   nearby_speech=record["nearby_speech"])
    return out


class EventLog:
    """Append-only JSONL with fsync per record."""

    def __init__(self, path: str):
        self.path = path
        parent = os.path.dirname(os.path.abspath(path))
        os.makedirs(parent, exist_ok=True)

    def append(self, event: dict) -> None:
        line = json.dumps(event, separators=(",", ":"))
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def repair_tail(self) -> None:
        """Truncate a torn final line so later appends start on a fresh line.

        Only newline-terminated records count as acknowledged; a crash mid
        append leaves an unterminated tail that would otherwise merge with
        the next record.
        """
        if not os.path.exists(self.path):
            return
        with open(self.path, "rb+") as fh:
            blob = fh.read()
            if not blob or blob.endswith(b"\n"):
                return
            cut = blob.rfind(b"\n")
            fh.truncate(cut + 1 if cut >= 0 else 0)

    def events(self) -> list[dict]:
        if not os.path.exists(self.path):
            return []
        out = []
        with open(self.path, encoding="utf-8") as fh:
            lines = fh.readlines()
        for i, line in enumerate(lines):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as exc:
                if i == len(lines) - 1:
                    # a crash mid-append leaves a torn last line; drop it
                    break
                raise InvalidDataError(f"{self.path}:{i + 1}: corrupt event") from exc
        return out


class AnnotationStore:
    """In-memory view over the event log; every mutation is logged first."""

    def __init__(self, log: EventLog):
        self.log = log
        self.prompts: dict[str, dict] = {}
        self.suppressed: list[dict] = []
        self.responses: dict[str, list[dict]] = {}
        self.interactions: dict[str, dict] = {}
        self._seg_counter = 0
        self._user_counter = 0

    @classmethod
    def open(cls, path: str) -> "AnnotationStore":
        store = cls(EventLog(path))
        store.log.repair_tail()
        for event in store.log.events():
            store._apply(event)
        return store

    # -- event application ---------------------------------------------------

    def _apply(self, event: dict) -> None:
        etype = event.get("type")
        if etype == "prompt":
            self.prompts[event["prompt"]["id"]] = event["prompt"]
        elif etype == "suppressed":
            self.suppressed.append(event["record"])
        elif etype == "response":
            self.responses.setdefault(event["prompt_id"], []).append(event["record"])
        elif etype == "segment":
            self.interactions[event["id"]] = {
                "id": event["id"], "start_ms": event["start_ms"],
                "end_ms": event["end_ms"], "provenance": event["provenance"],
                "fs_fraction": event.get("fs_fraction"),
                "history": [],
            }
            num = int(event["id"].split("-")[1])
            self._seg_counter = max(self._seg_counter, num)
        elif etype == "interaction-add":
            self.interactions[event["id"]] = {
                "id": event["id"], "start_ms": event["start_ms"],
                "end_ms": event["end_ms"], "provenance": "user-add",
                "mode": event.get("mode"), "history": [],
            }
            num = int(event["id"].split("-")[1])
            self._user_counter = max(self._user_counter, num)
        elif etype == "interaction-edit":
            row = self.interactions[event["id"]]
            row["history"].append({
                "start_ms": row["start_ms"], "end_ms": row["end_ms"],
                "at": event["at"],
            })
            row["start_ms"] = event["start_ms"]
            row["end_ms"] = event["end_ms"]
            row["zero_delta"] = event["zero_delta"]
        else:
            raise InvalidDataError(f"unknown event type {etype!r}")

    def _record(self, event: dict) -> None:
        self.log.append(event)
        self._apply(event)

    # -- mutations -----------------------------------------------------------

    def record_prompt(self, prompt: PromptEvent) -> dict:
        # intervals become lists so live state matches a log replay exactly
        row = asdict(prompt)
        row["interval"] = list(row["interval"])
        self._record({"type": "prompt", "prompt": row})
        return row

    def record_suppressed(self, sup: SuppressedPrompt) -> None:
        row = asdict(sup)
        if row.get("interval") is not None:
            row["interval"] = list(row["interval"])
        self._record({"type": "suppressed", "record": row})

    def register_segment(self, start_ms: int, end_ms: int, provenance: str,
                         fs_fraction: float | None = None) -> str:
        self._seg_counter += 1
        sid = f"seg-{self._seg_counter:05d}"
        self._record({"type": "segment", "id": sid, "start_ms": int(start_ms),
                      "end_ms": int(end_ms), "provenance": provenance,
                      "fs_fraction": fs_fraction})
        return sid

    def ingest_response(self, prompt_id: str, record: dict, received_at: int) -> dict:
        if prompt_id not in self.prompts:
            raise NotFoundError(f"unknown prompt {prompt_id!r}")
        clean = validate_annotation(record)
        clean["received_at"] = int(received_at)
        clean["version"] = len(self.responses.get(prompt_id, [])) + 1
        self._record({"type": "response", "prompt_id": prompt_id, "record": clean})
        return clean

    def add_interaction(self, start_ms: int, end_ms: int, mode: str | None = None,
                        at: int = 0) -> str:
        if end_ms <= start_ms:
            raise ValidationError(
                f"added interval must have positive length, got [{start_ms}, {end_ms}]"
            )
        if mode is not None and mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {mode!r}")
        self._user_counter += 1
        iid = f"user-{self._user_counter:05d}"
        self._record({"type": "interaction-add", "id": iid, "start_ms": int(start_ms),
                      "end_ms": int(end_ms), "mode": mode, "at": int(at)})
        return iid

    def edit_interaction(self, iid: str, start_ms: int, end_ms: int, at: int = 0) -> dict:
        if iid not in self.interactions:
            raise NotFoundError(f"unknown interaction {iid!r}")
        if end_ms <= start_ms:
            raise ValidationError(
                f"edited interval must have positive length, got [{start_ms}, {end_ms}]"
            )
        row = self.interactions[iid]
        zero_delta = (int(start_ms) == row["start_ms"] and int(end_ms) == row["end_ms"])
        self._record({"type": "interaction-edit", "id": iid, "start_ms": int(start_ms),
                      "end_ms": int(end_ms), "zero_delta": zero_delta, "at": int(at)})
        return self.interactions[iid]

    # -- queries ---------------------------------------------------------

    def latest_response(self, prompt_id: str) -> dict | None:
        rows = self.responses.get(prompt_id)
        return rows[-1] if rows else None

    def prompts_since(self, since_ms: int) -> list[dict]:
        rows = [p for p in self.prompts.values() if p["issued_at"] > since_ms]
        return sorted(rows, key=lambda p: (p["issued_at"], p["id"]))

    def intervals(self, from_ms: int | None = None, to_ms: int | None = None) -> list[dict]:
        rows = []
        for row in self.interactions.values():
            if from_ms is not None and row["end_ms"] < from_ms:
                continue
            if to_ms is not None and row["start_ms"] > to_ms:
                continue
            rows.append(dict(row))
        return sorted(rows, key=lambda r: (r["start_ms"], r["id"]))

    def snapshot(self, path: str) -> None:
        """Write the compacted current state as one JSON document."""
        state = {
            "prompts": self.prompts,
            "suppressed": self.suppressed,
            "responses": self.responses,
            "interactions": self.interactions,
        }
        tmp = path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(state, fh, indent=1, sort_keys=True)
        os.replace(tmp, path)
