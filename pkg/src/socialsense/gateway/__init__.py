"""Annotation gateway: prompt policy, persistent stores, replay clock,
session orchestration, and the HTTP/SSE API."""

from .clock import ReplayClock
from .policy import NotificationPolicy, PromptEvent, PromptScheduler, SuppressedPrompt
from .store import AnnotationStore, EventLog, validate_annotation
from .session import ReplaySession

__all__ = [
    "AnnotationStore",
    "EventLog",
    "NotificationPolicy",
    "PromptEvent",
    "PromptScheduler",
    "ReplayClock",
    "ReplaySession",
    "SuppressedPrompt",
    "validate_annotation",
]
