"""The embodied stand-in: who is speaking, was I addressed, what do I say.

The agent is a small deterministic state machine::

    looking_around --(someone speaks)--> looking_at_speaker
    looking_at_speaker --(silence)-----> looking_around
    looking_* --(addressed, topic)-----> responding_topic
    looking_* --(addressed, no topic)--> responding_generic
    responding_* --(speech finished)---> looking_around (or next queued)

All randomness comes from the seed handed in at spawn (idle gaze phase),
so identical inputs reproduce identical behaviour tick for tick.
"""

from __future__ import annotations

import logging
import math
import random
import re
import struct
import wave
from dataclasses import dataclass, field
from enum import Enum
from io import BytesIO

from .clients import ClientError
from .model import (
    AgendaItem,
    AudioChunk,
    Event,
    GestureTag,
    ParticipantProfile,
    PoseFrame,
    Position,
    ResponseGesture,
    ResponsePlan,
    SAMPLE_RATE,
    StandInConfig,
    TICK_RATE,
    UtteranceEvent,
    bearing_deg,
    cumulative_samples,
    pcm_rms,
    samples_for_tick,
    speech_duration_ticks,
    yaw_error_deg,
)

log = logging.getLogger(__name__)

# active-speaker detection
RMS_WINDOW_TICKS = 24
RMS_THRESHOLD = 0.05
SWITCH_HYSTERESIS_TICKS = 36
SILENCE_CLEAR_TICKS = 48

# embodiment
NOD_PERIOD_TICKS = 36
IDLE_SWEEP_PERIOD_TICKS = 432
IDLE_SWEEP_HALF_ANGLE = 60.0
FACING_TOLERANCE_DEG = 30.0

RESPONSE_QUEUE_DEPTH = 4
PROACTIVE_SILENCE_TICKS = 72
PROACTIVE_MIN_SCORE = 2

# offline voice placeholder: per word, a short tone then a gap
TONE_MS = 200
GAP_MS = 100
TONE_HZ = 440.0
TONE_DBFS = -20.0


# --------------------------------------------------------------------------
# active-speaker detection

@dataclass(slots=True)
class SpeakerEstimate:
    active_id: str | None
    since_tick: int | None
    window_mean: float
    silence_ticks: int


_RMS_QUANTUM = 1_000_000  # micro-units; far finer than the 1e-3 rms tolerance


class SpeakerDetector:
    """Windowed-RMS active speaker tracking with switch hysteresis.

    A participant becomes a candidate when their mean rms over the last
    ``window`` ticks reaches ``threshold``; the loudest candidate must hold
    the lead for ``hysteresis`` consecutive ticks before the active speaker
    changes, and ``silence_clear`` ticks with everyone below threshold
    clear it. Ties go to the lexicographically smallest participant id.

    Levels are quantised to integer micro-units internally so window sums
    are exact and comparisons can never flip on float rounding.
    """

    def __init__(self, window: int = RMS_WINDOW_TICKS,
                 threshold: float = RMS_THRESHOLD,
                 hysteresis: int = SWITCH_HYSTERESIS_TICKS,
                 silence_clear: int = SILENCE_CLEAR_TICKS):
        self.window = window
        self.threshold = threshold
        self.hysteresis = hysteresis
        self.silence_clear = silence_clear
        self._thr = round(threshold * _RMS_QUANTUM)
        self._rings: dict[str, list[int]] = {}
        self._sums: dict[str, int] = {}
        self._ticks_seen = 0
        self._leader: str | None = None
        self._streak = 0
        self._silence = 0
        self.active: str | None = None
        self.active_since: int | None = None

    def observe(self, tick: int, rms_by_id: dict[str, float]) -> SpeakerEstimate:
        for pid in rms_by_id:
            if pid not in self._rings:
                self._rings[pid] = [0] * self.window
                self._sums[pid] = 0
        slot = self._ticks_seen % self.window
        denom = min(self._ticks_seen + 1, self.window)
        self._ticks_seen += 1

        loudest = 0
        candidate: str | None = None
        best_sum = 0  # same denominator for everyone, so sums compare directly
        for pid in sorted(self._rings):
            level = round(rms_by_id.get(pid, 0.0) * _RMS_QUANTUM)
            ring = self._rings[pid]
            self._sums[pid] += level - ring[slot]
            ring[slot] = level
            loudest = max(loudest, level)
            total = self._sums[pid]
            if total >= self._thr * denom and total > best_sum:
                best_sum = total
                candidate = pid  # sorted iteration makes ties pick min id

        if candidate is None:
            self._leader, self._streak = None, 0
        elif candidate == self._leader:
            self._streak += 1
        else:
            self._leader, self._streak = candidate, 1

        if (self._leader is not None and self._leader != self.active
                and self._streak >= self.hysteresis):
            self.active = self._leader
            self.active_since = tick

        if loudest < self._thr:
            self._silence += 1
        else:
            self._silence = 0
        if self._silence >= self.silence_clear and self.active is not None:
            self.active = None
            self.active_since = None

        return SpeakerEstimate(self.active, self.active_since,
                               best_sum / denom / _RMS_QUANTUM, self._silence)

    @property
    def silence_ticks(self) -> int:
        return self._silence


# --------------------------------------------------------------------------
# topic classification

_TOKEN_RE = re.compile(r"[^0-9a-z]+")


def tokenize(text: str) -> list[str]:
    return [t for t in _TOKEN_RE.split(text.lower()) if t]


@dataclass(slots=True)
class Classification:
    item_id: str | None  # None = no agenda item matched
    score: int

    @property
    def is_topic(self) -> bool:
        return self.item_id is not None


OTHER = Classification(None, 0)


def classify(text: str, agenda: list[AgendaItem]) -> Classification:
    """Count keyword hits per agenda item; best score wins, ties go to the
    lowest agenda order, zero hits means no topic."""
    tokens = set(tokenize(text))
    best: Classification | None = None
    best_order = 0
    for item in agenda:
        score = sum(1 for kw in item.keywords if kw in tokens)
        if score < 1:
            continue
        if best is None or score > best.score or \
                (score == best.score and item.order < best_order):
            best = Classification(item.item_id, score)
            best_order = item.order
    return best if best is not None else OTHER


def name_mentioned(text: str, names: list[str]) -> bool:
    tokens = set(tokenize(text))
    for name in names:
        parts = tokenize(name)
        if not parts:
            continue
        if len(parts) == 1:
            if parts[0] in tokens:
                return True
        elif all(p in tokens for p in parts):
            return True
    return False


def is_addressed(utterance: UtteranceEvent, config: StandInConfig, *,
                 speaker_pose: PoseFrame | None = None,
                 standin_position: Position | None = None) -> bool:
    """Addressed if named explicitly, mentioned by name, or faced within
    FACING_TOLERANCE_DEG when the speaker's pose is known."""
    if utterance.addressed_to == config.absentee_id:
        return True
    if name_mentioned(utterance.text, config.addressing_names):
        return True
    if speaker_pose is not None and standin_position is not None:
        err = yaw_error_deg(speaker_pose.yaw, speaker_pose.position,
                            standin_position)
        if err <= FACING_TOLERANCE_DEG:
            return True
    return False


# --------------------------------------------------------------------------
# response planning

def plan_response(classification: Classification, config: StandInConfig,
                  *, llm_client=None, profile: ParticipantProfile | None = None,
                  agenda: list[AgendaItem] | None = None,
                  recent_utterances: list[UtteranceEvent] | None = None,
                  degradations: list[str] | None = None) -> ResponsePlan:
    """Rule-based by default: configured response for the matched item,
    fallback otherwise. With an LLM client, its text replaces the canned
    one (same gesture, recomputed duration); any failure falls back to the
    rule-based plan and logs a degradation."""
    if classification.is_topic and classification.item_id in config.responses:
        rule_plan = config.responses[classification.item_id]
    else:
        rule_plan = config.fallback

    if llm_client is None:
        return rule_plan

    try:
        system = _llm_system_prompt(profile, agenda)
        messages = [
            {"role": "user",
             "content": u.text} for u in (recent_utterances or [])[-10:]
        ]
        text = llm_client.complete(system, messages).strip()
        if not text:
            raise ClientError("llm: empty completion")
        return ResponsePlan(text=text, gesture=rule_plan.gesture,
                            nominal_duration_ticks=speech_duration_ticks(text))
    except ClientError as e:
        log.warning("llm degraded to rule-based response: %s", e)
        if degradations is not None:
            degradations.append(f"llm:{e}")
        return rule_plan


def _llm_system_prompt(profile: ParticipantProfile | None,
                       agenda: list[AgendaItem] | None) -> str:
    lines = ["You are attending a meeting on behalf of an absent colleague.",
             "Answer in first person, briefly."]
    if profile is not None:
        if profile.background:
            lines.append(f"Background: {profile.background}")
        if profile.personality:
            lines.append(f"Personality: {profile.personality}")
    for item in agenda or []:
        lines.append(f"Agenda item '{item.label}': "
                     f"keywords {', '.join(item.keywords)}")
    return "\n".join(lines)


# --------------------------------------------------------------------------
# speech synthesis

def _tone_burst_pcm(word_count: int, sample_rate: int) -> bytearray:
    tone_n = sample_rate * TONE_MS // 1000
    gap_n = sample_rate * GAP_MS // 1000
    peak = int(round(10 ** (TONE_DBFS / 20.0) * 32767))  # -20 dBFS
    out = bytearray()
    for _ in range(max(word_count, 0)):
        for i in range(tone_n):
            s = int(peak * math.sin(2.0 * math.pi * TONE_HZ * i / sample_rate))
            out += struct.pack("<h", s)
        out += b"\0\0" * gap_n
    return out


def _parse_wav(data: bytes) -> tuple[int, int, int, bytes]:
    with wave.open(BytesIO(data), "rb") as w:
        return (w.getnchannels(), w.getsampwidth(), w.getframerate(),
                w.readframes(w.getnframes()))


def synthesize_speech(plan: ResponsePlan, *, participant_id: str,
                      start_tick: int, voice_sample_ref: str | None = None,
                      tts_client=None, sample_rate: int = SAMPLE_RATE,
                      tick_rate: int = TICK_RATE,
                      degradations: list[str] | None = None
                      ) -> list[AudioChunk]:
    """Per-tick audio chunks covering [start_tick, start_tick + duration).

    Offline default is a tone burst per word; a TTS client may replace it
    but its WAV must already be mono 16-bit at the session sample rate.
    Output is trimmed or zero-padded to exactly the plan's nominal length.
    """
    if not plan.text.strip() or plan.nominal_duration_ticks <= 0:
        return []

    pcm: bytearray | None = None
    if tts_client is not None:
        try:
            data = tts_client.synthesize(plan.text, voice_sample_ref)
            channels, width, rate, frames = _parse_wav(data)
            if (channels, width, rate) != (1, 2, sample_rate):
                raise ClientError(
                    f"tts: sample-rate mismatch (got {rate} Hz, "
                    f"{channels} ch, {8 * width} bit)")
            pcm = bytearray(frames)
        except (ClientError, wave.Error, EOFError) as e:
            log.warning("tts degraded to tone placeholder: %s", e)
            if degradations is not None:
                degradations.append(f"tts:{e}")
            pcm = None

    if pcm is None:
        words = len(plan.text.split())
        pcm = _tone_burst_pcm(words, sample_rate)

    start_total = cumulative_samples(start_tick, sample_rate, tick_rate)
    end_total = cumulative_samples(start_tick + plan.nominal_duration_ticks,
                                   sample_rate, tick_rate)
    want = (end_total - start_total) * 2
    if len(pcm) > want:
        del pcm[want:]
    elif len(pcm) < want:
        pcm += b"\0" * (want - len(pcm))

    chunks: list[AudioChunk] = []
    off = 0
    for t in range(start_tick, start_tick + plan.nominal_duration_ticks):
        n = samples_for_tick(t, sample_rate, tick_rate) * 2
        block = bytes(pcm[off:off + n])
        off += n
        chunks.append(AudioChunk(t, participant_id, rms=pcm_rms(block),
                                 pcm=block))
    return chunks


# --------------------------------------------------------------------------
# transcription

@dataclass(slots=True)
class AudioWindow:
    participant_id: str
    start_tick: int
    pcm: bytes
    sample_rate: int = SAMPLE_RATE


def window_ticks(window: AudioWindow, tick_rate: int = TICK_RATE) -> int:
    n = len(window.pcm) // 2
    return max(1, (2 * n * tick_rate + window.sample_rate)
               // (2 * window.sample_rate))


def transcribe(window: AudioWindow, stt_client=None,
               tick_rate: int = TICK_RATE) -> list[UtteranceEvent] | None:
    """None when no client is wired (callers then rely on utterances sent
    over the wire); [] when the client fails."""
    if stt_client is None:
        return None
    try:
        wav = BytesIO()
        with wave.open(wav, "wb") as w:
            w.setnchannels(1)
            w.setsampwidth(2)
            w.setframerate(window.sample_rate)
            w.writeframes(window.pcm)
        out = stt_client.transcribe(wav.getvalue())
    except ClientError as e:
        log.warning("stt unavailable, dropping window: %s", e)
        return []
    text = (out.get("transcript") or "").strip()
    if not text:
        return []
    end_tick = window.start_tick + window_ticks(window, tick_rate) - 1
    return [UtteranceEvent(window.start_tick, end_tick,
                           window.participant_id, text)]


# --------------------------------------------------------------------------
# the state machine

class AgentState(str, Enum):
    LOOKING_AROUND = "looking_around"
    LOOKING_AT_SPEAKER = "looking_at_speaker"
    RESPONDING_TOPIC = "responding_topic"
    RESPONDING_GENERIC = "responding_generic"


@dataclass(slots=True)
class AgentAction:
    kind: str  # "none" | "idle_gaze" | "face_and_nod" | "speak_plan"
    target: str | None = None
    yaw: float | None = None
    plan: ResponsePlan | None = None
    item_id: str | None = None
    start_tick: int | None = None

    def to_json_dict(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.target is not None:
            d["target"] = self.target
        if self.yaw is not None:
            d["yaw"] = self.yaw
        if self.item_id is not None:
            d["item_id"] = self.item_id
        if self.start_tick is not None:
            d["start_tick"] = self.start_tick
        if self.plan is not None:
            d["text"] = self.plan.text
            d["duration_ticks"] = self.plan.nominal_duration_ticks
            d["gesture"] = self.plan.gesture.to_json_dict()
        return d


NO_ACTION = AgentAction("none")


@dataclass(slots=True)
class Transition:
    tick: int
    from_state: AgentState
    to_state: AgentState
    item_id: str | None = None
    text: str | None = None

    def to_json_dict(self) -> dict:
        return {"tick": self.tick, "from": self.from_state.value,
                "to": self.to_state.value, "item_id": self.item_id,
                "text": self.text}


@dataclass(slots=True)
class _QueuedResponse:
    classification: Classification
    utterance: UtteranceEvent


class StandInAgent:
    """One stand-in inside a session; stepped once per tick by the session
    loop with the events that arrived since the previous step."""

    def __init__(self, config: StandInConfig, meeting_agenda: list[AgendaItem],
                 *, profile: ParticipantProfile | None = None,
                 position: Position = (0.0, 0.0, 0.0), home_yaw: float = 0.0,
                 seed: int = 0, llm_client=None, tts_client=None,
                 proactive: bool = False):
        self.config = config
        self.agenda = meeting_agenda
        self.profile = profile
        self.participant_id = config.absentee_id
        self.position = position
        self.home_yaw = home_yaw
        self.llm_client = llm_client
        self.tts_client = tts_client
        self.proactive = proactive

        self.state = AgentState.LOOKING_AROUND
        self.detector = SpeakerDetector()
        self.transitions: list[Transition] = []
        self.degradations: list[str] = []
        self.dropped_responses = 0

        self._queue: list[_QueuedResponse] = []
        self._remaining = 0
        self._current_plan: ResponsePlan | None = None
        self._current_item: str | None = None
        self._state_entered = 0
        self._target: str | None = None
        self._yaw = home_yaw
        self._last_poses: dict[str, PoseFrame] = {}
        self._recent_utterances: list[UtteranceEvent] = []
        self._pending_interjection: Classification | None = None

        rng = random.Random(f"{seed}:{config.absentee_id}")
        self._gaze_phase = rng.randrange(IDLE_SWEEP_PERIOD_TICKS)

    # -- per-tick entry point ------------------------------------------------

    def step(self, tick: int, events: list[Event]) -> AgentAction:
        rms: dict[str, float] = {}
        addressed: list[_QueuedResponse] = []
        for ev in events:
            if isinstance(ev, PoseFrame):
                if ev.participant_id != self.participant_id:
                    self._last_poses[ev.participant_id] = ev
            elif isinstance(ev, AudioChunk):
                if ev.participant_id != self.participant_id:
                    prev = rms.get(ev.participant_id, 0.0)
                    rms[ev.participant_id] = max(prev, ev.rms)
            elif isinstance(ev, UtteranceEvent):
                if ev.speaker_id == self.participant_id:
                    continue
                self._recent_utterances.append(ev)
                del self._recent_utterances[:-10]
                cls = classify(ev.text, self.agenda)
                if is_addressed(ev, self.config,
                                speaker_pose=self._last_poses.get(ev.speaker_id),
                                standin_position=self.position):
                    addressed.append(_QueuedResponse(cls, ev))
                elif (self.proactive and cls.is_topic
                        and cls.score >= PROACTIVE_MIN_SCORE):
                    self._pending_interjection = cls

        estimate = self.detector.observe(tick, rms)

        for item in addressed:
            self._enqueue(item)

        if self.state in (AgentState.RESPONDING_TOPIC,
                          AgentState.RESPONDING_GENERIC):
            self._remaining -= 1
            if self._remaining > 0:
                return NO_ACTION
            return self._finish_response(tick, estimate)

        if self._queue:
            return self._begin_response(tick)

        if (self._pending_interjection is not None
                and self.detector.silence_ticks >= PROACTIVE_SILENCE_TICKS):
            cls = self._pending_interjection
            self._pending_interjection = None
            self._queue.append(_QueuedResponse(cls, UtteranceEvent(
                tick, tick, "", "(proactive)", None)))
            return self._begin_response(tick)

        return self._look(tick, estimate)

    # -- state helpers ---------------------------------------------------------

    def _look(self, tick: int, estimate: SpeakerEstimate) -> AgentAction:
        if estimate.active_id is not None:
            if (self.state is not AgentState.LOOKING_AT_SPEAKER
                    or self._target != estimate.active_id):
                self._change_state(tick, AgentState.LOOKING_AT_SPEAKER)
                self._target = estimate.active_id
            pose = self._last_poses.get(self._target)
            if pose is not None:
                self._yaw = bearing_deg(self.position, pose.position)
            return AgentAction("face_and_nod", target=self._target,
                               yaw=self._yaw)
        if self.state is not AgentState.LOOKING_AROUND:
            self._change_state(tick, AgentState.LOOKING_AROUND)
            self._target = None
        return AgentAction("idle_gaze", yaw=self.idle_yaw(tick))

    def _begin_response(self, tick: int) -> AgentAction:
        queued = self._queue.pop(0)
        cls = queued.classification
        plan = plan_response(
            cls, self.config, llm_client=self.llm_client,
            profile=self.profile, agenda=self.agenda,
            recent_utterances=self._recent_utterances,
            degradations=self.degradations)
        state = (AgentState.RESPONDING_TOPIC if cls.is_topic
                 else AgentState.RESPONDING_GENERIC)
        self._change_state(tick, state, item_id=cls.item_id, text=plan.text)
        self._current_plan = plan
        self._current_item = cls.item_id
        self._remaining = max(1, plan.nominal_duration_ticks)
        asker = self._last_poses.get(queued.utterance.speaker_id)
        if asker is not None:
            self._yaw = bearing_deg(self.position, asker.position)
        return AgentAction("speak_plan", plan=plan, item_id=cls.item_id,
                           start_tick=tick, yaw=self._yaw)

    def _finish_response(self, tick: int,
                         estimate: SpeakerEstimate) -> AgentAction:
        self._current_plan = None
        self._current_item = None
        if self._queue:
            return self._begin_response(tick)
        self._change_state(tick, AgentState.LOOKING_AROUND)
        self._target = None
        return self._look(tick, estimate)

    @property
    def queued(self) -> int:
        return len(self._queue)

    def _enqueue(self, item: _QueuedResponse) -> None:
        self._queue.append(item)
        while len(self._queue) > RESPONSE_QUEUE_DEPTH:
            self._queue.pop(0)
            self.dropped_responses += 1

    def _change_state(self, tick: int, to_state: AgentState, *,
                      item_id: str | None = None,
                      text: str | None = None) -> None:
        self.transitions.append(Transition(tick, self.state, to_state,
                                           item_id, text))
        self.state = to_state
        self._state_entered = tick

    # -- embodiment -------------------------------------------------------------

    def idle_yaw(self, tick: int) -> float:
        """Triangular sweep around home_yaw, one full cycle per
        IDLE_SWEEP_PERIOD_TICKS, phase fixed by the session seed."""
        pos = (tick + self._gaze_phase) % IDLE_SWEEP_PERIOD_TICKS
        half = IDLE_SWEEP_PERIOD_TICKS // 2
        tri = pos if pos <= half else IDLE_SWEEP_PERIOD_TICKS - pos
        offset = (tri / half) * 2.0 * IDLE_SWEEP_HALF_ANGLE \
            - IDLE_SWEEP_HALF_ANGLE
        return (self.home_yaw + offset) % 360.0

    def current_pose(self, tick: int) -> PoseFrame:
        """The stand-in's pose for this tick, derived from the state the
        last step() left behind."""
        if self.state is AgentState.LOOKING_AT_SPEAKER:
            gesture = GestureTag.NOD
            speaking = False
            yaw = self._yaw
        elif self.state in (AgentState.RESPONDING_TOPIC,
                            AgentState.RESPONDING_GENERIC):
            plan = self._current_plan
            gesture = plan.gesture.kind if plan is not None else GestureTag.NONE
            speaking = True
            yaw = self._yaw
        else:
            gesture = GestureTag.NONE
            speaking = False
            yaw = self.idle_yaw(tick)
        return PoseFrame(tick, self.participant_id, self.position, yaw,
                         gesture_tag=gesture, speaking_hint=speaking)

    def synthesize(self, plan: ResponsePlan, start_tick: int
                   ) -> list[AudioChunk]:
        ref = self.profile.voice_sample_ref if self.profile else None
        return synthesize_speech(
            plan, participant_id=self.participant_id, start_tick=start_tick,
            voice_sample_ref=ref, tts_client=self.tts_client,
            degradations=self.degradations)
