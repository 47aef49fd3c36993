"""Core domain model: meetings, agendas, stand-in configs, and timed events.

Conventions used across the engine:

* All timestamps are integer ticks at TICK_RATE (72 ticks per second).
* Audio is 48 kHz mono 16-bit signed little-endian PCM; per-tick sample
  counts follow the accumulation rule in ``samples_for_tick`` so that any
  whole number of ticks maps to an exact sample count.
* Space is y-up; yaw is degrees in [0, 360), 0 facing +z, increasing
  clockwise when viewed from above.
"""

from __future__ import annotations

import array
import base64
import math
import re
from dataclasses import dataclass, field
from enum import Enum

TICK_RATE = 72
SAMPLE_RATE = 48000
WORDS_PER_MINUTE = 150
VOICE_SAMPLE_MIN_SECONDS = 10.0

Position = tuple[float, float, float]


# --------------------------------------------------------------------------
# time / audio arithmetic

def ticks_to_millis(ticks: int, tick_rate: int = TICK_RATE) -> int:
    if tick_rate <= 0:
        raise ValueError("tick_rate must be positive")
    if ticks < 0:
        raise ValueError("ticks must be non-negative")
    return ticks * 1000 // tick_rate


def millis_to_ticks(millis: int, tick_rate: int = TICK_RATE) -> int:
    if tick_rate <= 0:
        raise ValueError("tick_rate must be positive")
    if millis < 0:
        raise ValueError("millis must be non-negative")
    return millis * tick_rate // 1000


def cumulative_samples(ticks: int, sample_rate: int = SAMPLE_RATE,
                       tick_rate: int = TICK_RATE) -> int:
    """Total audio samples covering ``ticks`` whole ticks.

    Round-half-up of ticks*sample_rate/tick_rate, computed in integers so
    the per-tick splits from ``samples_for_tick`` sum to exactly this.
    """
    if ticks < 0:
        raise ValueError("ticks must be non-negative")
    return (2 * ticks * sample_rate + tick_rate) // (2 * tick_rate)


def samples_for_tick(tick: int, sample_rate: int = SAMPLE_RATE,
                     tick_rate: int = TICK_RATE) -> int:
    return (cumulative_samples(tick + 1, sample_rate, tick_rate)
            - cumulative_samples(tick, sample_rate, tick_rate))


_WORD_RE = re.compile(r"\S+")


def speech_duration_ticks(text: str, words_per_minute: int = WORDS_PER_MINUTE,
                          tick_rate: int = TICK_RATE) -> int:
    """Nominal speaking time for ``text``: ceil(words / wpm * 60 * tick_rate)."""
    words = len(_WORD_RE.findall(text))
    if words == 0:
        return 0
    num = words * 60 * tick_rate
    return -(-num // words_per_minute)  # ceil division


# --------------------------------------------------------------------------
# geometry

def norm_yaw(deg: float) -> float:
    y = math.fmod(deg, 360.0)
    return y + 360.0 if y < 0 else y


def bearing_deg(from_pos: Position, to_pos: Position) -> float:
    """Yaw an avatar at from_pos needs to face to_pos (ignores height)."""
    dx = to_pos[0] - from_pos[0]
    dz = to_pos[2] - from_pos[2]
    if dx == 0.0 and dz == 0.0:
        return 0.0
    return norm_yaw(math.degrees(math.atan2(dx, dz)))


def yaw_error_deg(yaw: float, from_pos: Position, to_pos: Position) -> float:
    """Absolute angular error between ``yaw`` and the bearing to ``to_pos``."""
    diff = math.fmod(yaw - bearing_deg(from_pos, to_pos), 360.0)
    if diff > 180.0:
        diff -= 360.0
    elif diff < -180.0:
        diff += 360.0
    return abs(diff)


# --------------------------------------------------------------------------
# enums

class Role(str, Enum):
    ATTENDEE = "attendee"
    ABSENTEE = "absentee"


class GestureTag(str, Enum):
    NONE = "none"
    NOD = "nod"
    SHRUG = "shrug"
    WAVE = "wave"
    POINT = "point"
    HEAD_POINT = "head_point"


# Gestures a response plan may carry; Nod is reserved for listening poses.
RESPONSE_GESTURES = frozenset(
    {GestureTag.NONE, GestureTag.SHRUG, GestureTag.WAVE, GestureTag.POINT,
     GestureTag.HEAD_POINT}
)


class TrackKind(str, Enum):
    MOTION = "motion"
    AUDIO = "audio"
    UTTERANCE = "utterance"


class UnknownParticipant(LookupError):
    pass


class UnknownIteration(LookupError):
    pass


# --------------------------------------------------------------------------
# entities

@dataclass(slots=True)
class AgendaItem:
    item_id: str
    label: str
    keywords: list[str]
    order: int

    def to_json_dict(self) -> dict:
        return {"item_id": self.item_id, "label": self.label,
                "keywords": list(self.keywords), "order": self.order}

    @classmethod
    def from_json_dict(cls, d: dict) -> AgendaItem:
        return cls(item_id=d["item_id"], label=d["label"],
                   keywords=list(d["keywords"]), order=int(d["order"]))


@dataclass(slots=True)
class ParticipantProfile:
    participant_id: str
    display_name: str
    background: str = ""
    personality: str = ""
    voice_sample_ref: str | None = None

    def to_json_dict(self) -> dict:
        return {"participant_id": self.participant_id,
                "display_name": self.display_name,
                "background": self.background,
                "personality": self.personality,
                "voice_sample_ref": self.voice_sample_ref}

    @classmethod
    def from_json_dict(cls, d: dict) -> ParticipantProfile:
        return cls(participant_id=d["participant_id"],
                   display_name=d["display_name"],
                   background=d.get("background", ""),
                   personality=d.get("personality", ""),
                   voice_sample_ref=d.get("voice_sample_ref"))


@dataclass(slots=True)
class IterationRecord:
    index: int
    attendee_ids: list[str]

    def to_json_dict(self) -> dict:
        return {"index": self.index, "attendee_ids": list(self.attendee_ids)}

    @classmethod
    def from_json_dict(cls, d: dict) -> IterationRecord:
        return cls(index=int(d["index"]), attendee_ids=list(d["attendee_ids"]))


@dataclass(slots=True)
class Meeting:
    meeting_id: str
    title: str
    agenda: list[AgendaItem]
    participants: list[ParticipantProfile]
    iterations: list[IterationRecord]

    def agenda_item(self, item_id: str) -> AgendaItem:
        for item in self.agenda:
            if item.item_id == item_id:
                return item
        raise KeyError(item_id)

    def participant(self, participant_id: str) -> ParticipantProfile:
        for p in self.participants:
            if p.participant_id == participant_id:
                return p
        raise UnknownParticipant(participant_id)

    def to_json_dict(self) -> dict:
        return {"meeting_id": self.meeting_id, "title": self.title,
                "agenda": [a.to_json_dict() for a in self.agenda],
                "participants": [p.to_json_dict() for p in self.participants],
                "iterations": [i.to_json_dict() for i in self.iterations]}

    @classmethod
    def from_json_dict(cls, d: dict) -> Meeting:
        return cls(
            meeting_id=d["meeting_id"], title=d.get("title", ""),
            agenda=[AgendaItem.from_json_dict(a) for a in d["agenda"]],
            participants=[ParticipantProfile.from_json_dict(p)
                          for p in d["participants"]],
            iterations=[IterationRecord.from_json_dict(i)
                        for i in d["iterations"]],
        )


@dataclass(slots=True)
class ResponseGesture:
    kind: GestureTag = GestureTag.NONE
    target: str | None = None  # only for point

    def to_json_dict(self) -> dict:
        d: dict = {"kind": self.kind.value}
        if self.target is not None:
            d["target"] = self.target
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> ResponseGesture:
        return cls(kind=GestureTag(d["kind"]), target=d.get("target"))


@dataclass(slots=True)
class ResponsePlan:
    text: str
    gesture: ResponseGesture = field(default_factory=ResponseGesture)
    nominal_duration_ticks: int = 0

    @classmethod
    def for_text(cls, text: str,
                 gesture: ResponseGesture | None = None) -> ResponsePlan:
        return cls(text=text, gesture=gesture or ResponseGesture(),
                   nominal_duration_ticks=speech_duration_ticks(text))

    def to_json_dict(self) -> dict:
        return {"text": self.text, "gesture": self.gesture.to_json_dict(),
                "nominal_duration_ticks": self.nominal_duration_ticks}

    @classmethod
    def from_json_dict(cls, d: dict) -> ResponsePlan:
        return cls(text=d["text"],
                   gesture=ResponseGesture.from_json_dict(d["gesture"]),
                   nominal_duration_ticks=int(d["nominal_duration_ticks"]))


@dataclass(slots=True)
class StandInConfig:
    absentee_id: str
    responses: dict[str, ResponsePlan]  # agenda item_id -> plan
    fallback: ResponsePlan
    addressing_names: list[str] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {"absentee_id": self.absentee_id,
                "responses": {k: v.to_json_dict()
                              for k, v in sorted(self.responses.items())},
                "fallback": self.fallback.to_json_dict(),
                "addressing_names": list(self.addressing_names)}

    @classmethod
    def from_json_dict(cls, d: dict) -> StandInConfig:
        return cls(
            absentee_id=d["absentee_id"],
            responses={k: ResponsePlan.from_json_dict(v)
                       for k, v in d["responses"].items()},
            fallback=ResponsePlan.from_json_dict(d["fallback"]),
            addressing_names=list(d.get("addressing_names", [])),
        )


# --------------------------------------------------------------------------
# timed events

@dataclass(slots=True)
class PoseFrame:
    tick: int
    participant_id: str
    position: Position
    yaw: float
    gesture_tag: GestureTag = GestureTag.NONE
    speaking_hint: bool = False

    def to_json_dict(self) -> dict:
        return {"tick": self.tick, "participant_id": self.participant_id,
                "position": list(self.position), "yaw": self.yaw,
                "gesture_tag": self.gesture_tag.value,
                "speaking_hint": self.speaking_hint}

    @classmethod
    def from_json_dict(cls, d: dict) -> PoseFrame:
        x, y, z = d["position"]
        return cls(tick=int(d["tick"]), participant_id=d["participant_id"],
                   position=(float(x), float(y), float(z)),
                   yaw=float(d["yaw"]),
                   gesture_tag=GestureTag(d.get("gesture_tag", "none")),
                   speaking_hint=bool(d.get("speaking_hint", False)))


@dataclass(slots=True)
class AudioChunk:
    tick: int
    participant_id: str
    rms: float
    pcm: bytes | None = None  # one tick of samples when present

    def to_json_dict(self) -> dict:
        d: dict = {"tick": self.tick, "participant_id": self.participant_id,
                   "rms": self.rms}
        if self.pcm is not None:
            d["pcm"] = base64.b64encode(self.pcm).decode("ascii")
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> AudioChunk:
        pcm = d.get("pcm")
        return cls(tick=int(d["tick"]), participant_id=d["participant_id"],
                   rms=float(d["rms"]),
                   pcm=base64.b64decode(pcm) if pcm is not None else None)


@dataclass(slots=True)
class UtteranceEvent:
    start_tick: int
    end_tick: int  # inclusive
    speaker_id: str
    text: str
    addressed_to: str | None = None

    def to_json_dict(self) -> dict:
        return {"start_tick": self.start_tick, "end_tick": self.end_tick,
                "speaker_id": self.speaker_id, "text": self.text,
                "addressed_to": self.addressed_to}

    @classmethod
    def from_json_dict(cls, d: dict) -> UtteranceEvent:
        return cls(start_tick=int(d["start_tick"]),
                   end_tick=int(d["end_tick"]),
                   speaker_id=d["speaker_id"], text=d["text"],
                   addressed_to=d.get("addressed_to"))


Event = PoseFrame | AudioChunk | UtteranceEvent

# within one (tick, participant) group: poses before audio before utterances
_KIND_RANK = {PoseFrame: 0, AudioChunk: 1, UtteranceEvent: 2}


def event_sort_key(event: Event) -> tuple[int, str, int]:
    if isinstance(event, UtteranceEvent):
        return (event.start_tick, event.speaker_id, 2)
    return (event.tick, event.participant_id, _KIND_RANK[type(event)])


def pcm_rms(pcm: bytes) -> float:
    """RMS of 16-bit little-endian PCM, normalised to [0, 1] full scale."""
    samples = array.array("h")
    samples.frombytes(pcm)
    if not samples:
        return 0.0
    acc = 0
    for s in samples:
        acc += s * s
    return math.sqrt(acc / len(samples)) / 32767.0


def validate_event(event: Event, tick_rate: int = TICK_RATE,
                   sample_rate: int = SAMPLE_RATE) -> str | None:
    """Return a violation code for a malformed event, else None."""
    if isinstance(event, PoseFrame):
        if event.tick < 0:
            return "pose:negative-tick"
        if not (0.0 <= event.yaw < 360.0):
            return "pose:yaw-out-of-range"
        return None
    if isinstance(event, AudioChunk):
        if event.tick < 0:
            return "audio:negative-tick"
        if not (0.0 <= event.rms <= 1.0):
            return "audio:rms-out-of-range"
        if event.pcm is not None:
            want = samples_for_tick(event.tick, sample_rate, tick_rate)
            if len(event.pcm) != want * 2:
                return "audio:pcm-size-mismatch"
            if abs(pcm_rms(event.pcm) - event.rms) > 1e-3:
                return "audio:rms-inconsistent"
        return None
    if isinstance(event, UtteranceEvent):
        if event.start_tick < 0:
            return "utterance:negative-tick"
        if event.end_tick < event.start_tick:
            return "utterance:end-before-start"
        if not event.text:
            return "utterance:empty-text"
        return None
    return "event:unknown-kind"


# --------------------------------------------------------------------------
# meeting-level operations

def role_of(meeting: Meeting, participant_id: str, iteration_index: int) -> Role:
    """A participant is an attendee of the iterations they joined live."""
    if all(p.participant_id != participant_id for p in meeting.participants):
        raise UnknownParticipant(participant_id)
    for it in meeting.iterations:
        if it.index == iteration_index:
            return (Role.ATTENDEE if participant_id in it.attendee_ids
                    else Role.ABSENTEE)
    raise UnknownIteration(str(iteration_index))


def validate_meeting(meeting: Meeting,
                     voice_seconds: "dict[str, float] | None" = None
                     ) -> list[str]:
    """Check every structural invariant; returns [] iff the meeting is valid.

    ``voice_seconds`` optionally maps voice_sample_ref -> duration in
    seconds, letting callers that can resolve audio files enforce the
    minimum sample length.
    """
    v: list[str] = []
    if not meeting.meeting_id:
        v.append("meeting:id-empty")
    if not meeting.agenda:
        v.append("agenda:empty")

    seen_items: set[str] = set()
    seen_orders: set[int] = set()
    for item in meeting.agenda:
        if item.item_id in seen_items:
            v.append(f"agenda:duplicate-item-id:{item.item_id}")
        seen_items.add(item.item_id)
        if item.order < 0:
            v.append(f"agenda:order-negative:{item.item_id}")
        if item.order in seen_orders:
            v.append(f"agenda:duplicate-order:{item.order}")
        seen_orders.add(item.order)
        seen_kw: set[str] = set()
        for kw in item.keywords:
            if kw != kw.lower():
                v.append(f"agenda:keyword-not-lowercase:{item.item_id}:{kw}")
            if kw in seen_kw:
                v.append(f"agenda:keyword-duplicate:{item.item_id}:{kw}")
            seen_kw.add(kw)

    seen_pids: set[str] = set()
    for p in meeting.participants:
        if p.participant_id in seen_pids:
            v.append(f"participants:duplicate-id:{p.participant_id}")
        seen_pids.add(p.participant_id)
        if p.voice_sample_ref is not None and voice_seconds is not None:
            dur = voice_seconds.get(p.voice_sample_ref)
            if dur is None or dur < VOICE_SAMPLE_MIN_SECONDS:
                v.append(f"profile:voice-sample-too-short:{p.participant_id}")

    indices = [it.index for it in meeting.iterations]
    if indices != list(range(1, len(indices) + 1)):
        v.append("iterations:not-contiguous")
    for it in meeting.iterations:
        for pid in it.attendee_ids:
            if pid not in seen_pids:
                v.append(f"iterations:unknown-participant:{it.index}:{pid}")
    return v


def validate_standin_config(config: StandInConfig, meeting: Meeting) -> list[str]:
    v: list[str] = []
    known_pids = {p.participant_id for p in meeting.participants}
    if config.absentee_id not in known_pids:
        v.append(f"standin:unknown-absentee:{config.absentee_id}")
    item_ids = {a.item_id for a in meeting.agenda}
    plans = [(item_id, plan) for item_id, plan in sorted(config.responses.items())]
    for item_id, _ in plans:
        if item_id not in item_ids:
            v.append(f"standin:unknown-agenda-item:{item_id}")
    for label, plan in plans + [("fallback", config.fallback)]:
        if not plan.text:
            v.append(f"standin:empty-text:{label}")
        if plan.gesture.kind not in RESPONSE_GESTURES:
            v.append(f"standin:bad-gesture:{label}")
        if plan.gesture.kind is GestureTag.POINT and not plan.gesture.target:
            v.append(f"standin:point-without-target:{label}")
        want = speech_duration_ticks(plan.text)
        if plan.text and plan.nominal_duration_ticks != want:
            v.append(f"standin:duration-mismatch:{label}")
    return v
