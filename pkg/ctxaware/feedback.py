"""
Vibration feedback codes.

Three codes let a user tell notifications apart without taking the phone out:
a long pulse for a person nearby, a shorter pulse for an audio note, and a
short-pause-long pattern for a text note.
"""

import logging
from collections.abc import Callable
from dataclasses import dataclass
from enum import Enum
from typing import Protocol

from ctxaware.config import FeedbackConfig
from ctxaware.model import AlertKind, Notification, PrivacyState

logger = logging.getLogger(__name__)


class SegmentKind(Enum):
    VIBRATE = "vibrate"
    PAUSE = "pause"


@dataclass(frozen=True)
class Segment:
    kind: SegmentKind
    duration_ms: int


@dataclass(frozen=True)
class VibePattern:
    """Alternating vibrate/pause segments."""

    segments: tuple[Segment, ...]

    def __post_init__(self) -> None:
        if not self.segments:
            raise ValueError("Vibration pattern needs at least one segment")
        for seg in self.segments:
            if seg.duration_ms <= 0:
                raise ValueError(f"Segment duration must be > 0, got {seg.duration_ms}")
        for prev, cur in zip(self.segments, self.segments[1:]):
            if prev.kind is cur.kind:
                raise ValueError(f"Adjacent {cur.kind.value} segments in pattern")

    @classmethod
    def of(cls, *durations: int) -> "VibePattern":
        """Build from alternating durations, starting with a vibration."""
        kinds = (SegmentKind.VIBRATE, SegmentKind.PAUSE)
        return cls(tuple(Segment(kinds[i % 2], d) for i, d in enumerate(durations)))

    def as_timings(self) -> list[int]:
        """Handset vibrator timings: [initial delay, on, off, on, ...]."""
        timings = [0] if self.segments[0].kind is SegmentKind.VIBRATE else []
        return timings + [seg.duration_ms for seg in self.segments]

    def __str__(self) -> str:
        return " ".join(
            f"{'V' if s.kind is SegmentKind.VIBRATE else 'P'}{s.duration_ms}"
            for s in self.segments
        )


class PatternTable:
    """
    Alert kind -> pattern mapping.

    Construction fails unless every AlertKind has a pattern.
    """

    def __init__(self, patterns: dict[AlertKind, VibePattern]) -> None:
        missing = [kind.value for kind in AlertKind if kind not in patterns]
        if missing:
            raise ValueError(f"No vibration pattern for {', '.join(missing)}")
        self._patterns = dict(patterns)

    @classmethod
    def from_config(cls, config: FeedbackConfig | None = None) -> "PatternTable":
        cfg = config or FeedbackConfig()
        return cls(
            {
                AlertKind.PERSON_NEARBY: VibePattern.of(cfg.person_ms),
                AlertKind.AUDIO_NOTE: VibePattern.of(cfg.audio_ms),
                AlertKind.TEXT_NOTE: VibePattern.of(
                    cfg.text_lead_ms, cfg.text_pause_ms, cfg.text_tail_ms
                ),
            }
        )

    def __getitem__(self, kind: AlertKind) -> VibePattern:
        return self._patterns[kind]


DEFAULT_PATTERNS = PatternTable.from_config()


def pattern_for(kind: AlertKind, table: PatternTable | None = None) -> VibePattern:
    """Vibration pattern for a notification kind."""
    return (table or DEFAULT_PATTERNS)[kind]


class FeedbackSink(Protocol):
    """Anything that can play a pattern."""

    def play(self, at: int, pattern: VibePattern) -> None: ...


class RecordingSink:
    """Keeps (timestamp, pattern) pairs for assertions and traces."""

    def __init__(self) -> None:
        self.emissions: list[tuple[int, VibePattern]] = []

    def play(self, at: int, pattern: VibePattern) -> None:
        self.emissions.append((at, pattern))


def emit(
    notification: Notification,
    privacy: PrivacyState,
    sink: FeedbackSink,
    record: Callable[[Notification], Notification] | None = None,
    table: PatternTable | None = None,
) -> Notification:
    """
    Record a notification and play its pattern unless silent.

    Args:
        notification: Notification to deliver.
        privacy: Current privacy state; silent mode suppresses playback only.
        sink: Feedback channel.
        record: History append hook (normally ClientStore.append_notification).
        table: Pattern table (defaults to the standard codes).

    Returns:
        The notification as stored by `record` (or unchanged).
    """
    stored = record(notification) if record else notification
    if privacy.silent:
        logger.debug(f"Silent mode: {notification.kind.value} {notification.subject} not played")
        return stored
    sink.play(notification.at, pattern_for(notification.alert_kind, table))
    return stored
