from __future__ import annotations

import math
import struct

from standin.model import (
    AgendaItem,
    IterationRecord,
    Meeting,
    ParticipantProfile,
    ResponseGesture,
    ResponsePlan,
    GestureTag,
    StandInConfig,
)


def make_meeting(*, meeting_id: str = "weekend",
                 attendee_sets: list[list[str]] | None = None) -> Meeting:
    """Three collaborators planning a weekend; C misses iteration 1."""
    if attendee_sets is None:
        attendee_sets = [["A", "B"], ["C"]]
    return Meeting(
        meeting_id=meeting_id,
        title="Weekend planning",
        agenda=[
            AgendaItem("place", "Where to go", ["place", "beach", "park"], 0),
            AgendaItem("activity", "What to do",
                       ["activity", "swim", "swimming", "hike"], 1),
            AgendaItem("food", "What to eat",
                       ["food", "eat", "pizza", "noodles", "lunch"], 2),
        ],
        participants=[
            ParticipantProfile("A", "Ada"),
            ParticipantProfile("B", "Ben"),
            ParticipantProfile("C", "Lee"),
        ],
        iterations=[IterationRecord(i + 1, ids)
                    for i, ids in enumerate(attendee_sets)],
    )


def make_config(absentee_id: str = "C") -> StandInConfig:
    return StandInConfig(
        absentee_id=absentee_id,
        responses={
            "place": ResponsePlan.for_text(
                "I'm okay with any of them",
                ResponseGesture(GestureTag.SHRUG)),
            "activity": ResponsePlan.for_text(
                "I'm not good at swimming",
                ResponseGesture(GestureTag.WAVE)),
            "food": ResponsePlan.for_text(
                "I prefer beef noodles",
                ResponseGesture(GestureTag.POINT, target="beef noodles")),
        },
        fallback=ResponsePlan.for_text(
            "Let me think about it, and I will get back to you later",
            ResponseGesture(GestureTag.HEAD_POINT)),
        addressing_names=["Lee"],
    )


def make_tone_pcm(n_samples: int, *, amplitude: float = 0.3,
                  freq_hz: float = 440.0, sample_rate: int = 48000,
                  phase_offset: int = 0) -> bytes:
    peak = int(amplitude * 32767)
    out = bytearray()
    for i in range(n_samples):
        s = int(peak * math.sin(2 * math.pi * freq_hz * (i + phase_offset)
                                / sample_rate))
        out += struct.pack("<h", s)
    return bytes(out)
