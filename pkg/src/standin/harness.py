"""Scripted rehearsals of whole meetings in virtual time.

A Script plays back deterministic attendee behaviour — movement, speech
spans, gestures — through the real wire codec with injected latency, so a
full session (relay, stand-ins, recording) can run end-to-end in
milliseconds with no humans attached. Given the same script and seed, two
runs produce byte-identical recordings.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from . import wire
from .model import (
    GestureTag,
    Meeting,
    StandInConfig,
    speech_duration_ticks,
)
from .server import ProtocolError, Session
from .store import RecordingManifest

DEFAULT_SAY_RMS = 0.3
RUNOUT_TICKS = 600  # room for the last stand-in response to finish


# --------------------------------------------------------------------------
# script model


@dataclass(slots=True)
class Say:
    text: str
    duration_ticks: int
    addressed_to: str | None = None


@dataclass(slots=True)
class Move:
    position: tuple[float, float, float]
    yaw: float


@dataclass(slots=True)
class Gesture:
    tag: GestureTag


@dataclass(slots=True)
class Silence:
    pass


Action = Say | Move | Gesture | Silence


@dataclass(slots=True)
class Step:
    at_tick: int
    action: Action


@dataclass(slots=True)
class ScriptParticipant:
    participant_id: str
    timeline: list[Step]


@dataclass(slots=True)
class Script:
    seed: int
    participants: list[ScriptParticipant]
    injected_latency_ms: dict[str, int] = field(default_factory=dict)

    def latency_ticks(self, direction: str, tick_rate: int) -> int:
        ms = self.injected_latency_ms.get(direction, 0)
        return -(-ms * tick_rate // 1000)

    def horizon(self) -> int:
        """First tick by which every scripted action has finished."""
        last = 0
        for p in self.participants:
            for step in p.timeline:
                end = step.at_tick + 1
                if isinstance(step.action, Say):
                    end = step.at_tick + step.action.duration_ticks + 1
                last = max(last, end)
        return last

    def validate(self, meeting: Meeting) -> list[str]:
        v = []
        known = {p.participant_id for p in meeting.participants}
        for p in self.participants:
            pid = p.participant_id
            if pid not in known:
                v.append(f"script:unknown-participant:{pid}")
            prev = 0
            say_until = 0
            for step in p.timeline:
                if step.at_tick < prev:
                    v.append(f"script:at-tick-decreasing:{pid}")
                prev = step.at_tick
                if isinstance(step.action, Say):
                    if step.action.duration_ticks <= 0:
                        v.append(f"script:say-duration:{pid}")
                    if step.at_tick < say_until:
                        v.append(f"script:say-overlap:{pid}")
                    say_until = step.at_tick + step.action.duration_ticks
        return v

    def to_json_dict(self) -> dict:
        return {
            "seed": self.seed,
            "injected_latency_ms": dict(self.injected_latency_ms),
            "participants": [
                {"participant_id": p.participant_id,
                 "timeline": [_step_to_json(s) for s in p.timeline]}
                for p in self.participants
            ],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> Script:
        return cls(
            seed=int(d["seed"]),
            participants=[
                ScriptParticipant(
                    p["participant_id"],
                    [_step_from_json(s) for s in p["timeline"]])
                for p in d["participants"]
            ],
            injected_latency_ms={k: int(v) for k, v in
                                 d.get("injected_latency_ms", {}).items()},
        )


def _step_to_json(step: Step) -> dict:
    a = step.action
    if isinstance(a, Say):
        body = {"kind": "say", "text": a.text,
                "duration_ticks": a.duration_ticks}
        if a.addressed_to is not None:
            body["addressed_to"] = a.addressed_to
    elif isinstance(a, Move):
        body = {"kind": "move", "position": list(a.position), "yaw": a.yaw}
    elif isinstance(a, Gesture):
        body = {"kind": "gesture", "tag": a.tag.value}
    else:
        body = {"kind": "silence"}
    return {"at_tick": step.at_tick, "action": body}


def _step_from_json(d: dict) -> Step:
    a = d["action"]
    kind = a["kind"]
    if kind == "say":
        duration = a.get("duration_ticks")
        if duration is None:
            duration = speech_duration_ticks(a["text"])
        action: Action = Say(a["text"], int(duration), a.get("addressed_to"))
    elif kind == "move":
        action = Move(tuple(float(x) for x in a["position"]),
                      float(a["yaw"]))
    elif kind == "gesture":
        action = Gesture(GestureTag(a["tag"]))
    elif kind == "silence":
        action = Silence()
    else:
        raise ValueError(f"unknown script action: {kind}")
    return Step(int(d["at_tick"]), action)


def load_script(path) -> Script:
    with open(path, encoding="utf-8") as f:
        return Script.from_json_dict(json.load(f))


def load_bundle(path) -> tuple[Meeting, list[StandInConfig], Script]:
    """A self-contained scenario file: meeting, stand-in configs, script."""
    with open(path, encoding="utf-8") as f:
        d = json.load(f)
    return (Meeting.from_json_dict(d["meeting"]),
            [StandInConfig.from_json_dict(c) for c in d["standin_configs"]],
            Script.from_json_dict(d["script"]))


# --------------------------------------------------------------------------
# scripted clients


class ScriptedClient:
    """Replays one participant's timeline as wire messages: a pose every
    tick, rms-bearing audio while a Say is running, and the transcript
    the tick after it finishes."""

    def __init__(self, part: ScriptParticipant):
        self.participant_id = part.participant_id
        self.timeline = list(part.timeline)
        self._next = 0
        self.position = (0.0, 0.0, 0.0)
        self.yaw = 0.0
        self.gesture = GestureTag.NONE
        self._say: tuple[int, Say] | None = None
        self.received: dict[str, int] = {}

    def step(self, tick: int) -> list[dict]:
        msgs = []
        # flush the transcript of a speech span that just finished, before
        # any new Say scheduled for this very tick takes its place
        if self._say is not None \
                and tick == self._say[0] + self._say[1].duration_ticks:
            start, say = self._say
            msgs.append(wire.make_message("utterance", {
                "start_tick": start, "end_tick": tick - 1,
                "speaker_id": self.participant_id, "text": say.text,
                "addressed_to": say.addressed_to}))
            self._say = None

        while self._next < len(self.timeline) \
                and self.timeline[self._next].at_tick == tick:
            action = self.timeline[self._next].action
            self._next += 1
            if isinstance(action, Move):
                self.position = action.position
                self.yaw = action.yaw
            elif isinstance(action, Gesture):
                self.gesture = action.tag
            elif isinstance(action, Silence):
                self.gesture = GestureTag.NONE
            elif isinstance(action, Say):
                self._say = (tick, action)

        say = self._say
        speaking = say is not None \
            and say[0] <= tick < say[0] + say[1].duration_ticks
        msgs.append(wire.make_message("pose", {
            "tick": tick, "participant_id": self.participant_id,
            "position": list(self.position), "yaw": self.yaw,
            "gesture_tag": self.gesture.value, "speaking_hint": speaking}))
        if speaking:
            msgs.append(wire.make_message("audio", {
                "tick": tick, "participant_id": self.participant_id,
                "rms": DEFAULT_SAY_RMS, "pcm": None}))
        return msgs

    def receive(self, data: bytes) -> None:
        msg_type, _ = wire.decode(data)
        self.received[msg_type] = self.received.get(msg_type, 0) + 1


# --------------------------------------------------------------------------
# the runner


@dataclass(slots=True)
class RunResult:
    manifest: RecordingManifest
    agent_trace: list[dict]
    drop_counters: dict[str, int]
    client_received: dict[str, dict[str, int]]
    recording_dir: Path


def run(script: Script, meeting: Meeting,
        standin_configs: list[StandInConfig], *, data_root,
        iteration_index: int = 1, runout_ticks: int = RUNOUT_TICKS,
        llm_client=None, tts_client=None,
        proactive_standins: bool = False) -> RunResult:
    """Drive a full session from a script in virtual time.

    Every client message is serialized, queued for the scripted uplink
    latency, then deserialized at the server — the same path a remote
    client takes, minus the socket.
    """
    problems = script.validate(meeting)
    if problems:
        raise ValueError("; ".join(problems))

    session = Session(meeting, iteration_index, standin_configs,
                      script.seed, data_root=data_root,
                      llm_client=llm_client, tts_client=tts_client,
                      proactive_standins=proactive_standins)
    up = script.latency_ticks("client_to_server", session.tick_rate)
    down = script.latency_ticks("server_to_client", session.tick_rate)

    clients = {p.participant_id: ScriptedClient(p)
               for p in script.participants}
    for pid in sorted(clients):
        session.join(pid)

    uplink: list[tuple[int, str, bytes]] = []
    downlink: list[tuple[int, str, bytes]] = []
    horizon = script.horizon() + max(runout_ticks, 0)

    for tick in range(horizon):
        for pid in sorted(clients):
            for msg in clients[pid].step(tick):
                uplink.append((tick + up, pid, wire.encode(msg)))

        remaining = []
        for due, pid, data in uplink:
            if due > tick:
                remaining.append((due, pid, data))
                continue
            msg_type, body = wire.decode(data)
            try:
                session.ingest(pid, wire.event_from_message(msg_type, body))
            except ProtocolError:
                raise
        uplink = remaining

        session.tick()

        for pid in sorted(clients):
            handle = session.clients.get(pid)
            if handle is not None:
                for data in handle.drain():
                    downlink.append((tick + down, pid, data))
        remaining = []
        for due, pid, data in downlink:
            if due > tick:
                remaining.append((due, pid, data))
            else:
                clients[pid].receive(data)
        downlink = remaining

    manifest = session.close()
    return RunResult(
        manifest=manifest,
        agent_trace=session.agent_trace(),
        drop_counters=dict(session.drop_counters),
        client_received={pid: dict(c.received)
                         for pid, c in clients.items()},
        recording_dir=session.recorder.directory,
    )


# --------------------------------------------------------------------------
# trace assertions


@dataclass(slots=True)
class Expectation:
    """One thing that must appear in the agent trace inside a tick range:
    a transition into ``to_state``, an exact response ``text``, or both."""

    from_tick: int
    to_tick: int
    to_state: str | None = None
    text: str | None = None

    def matches(self, entry: dict) -> bool:
        if not self.from_tick <= entry["tick"] <= self.to_tick:
            return False
        if self.to_state is not None and entry["to"] != self.to_state:
            return False
        if self.text is not None and entry.get("text") != self.text:
            return False
        return True

    def describe(self) -> str:
        wants = [w for w in (self.to_state, self.text) if w is not None]
        return (f"ticks {self.from_tick}..{self.to_tick}: "
                + " with ".join(wants or ["anything"]))

    @classmethod
    def from_json_dict(cls, d: dict) -> Expectation:
        return cls(int(d["from_tick"]), int(d["to_tick"]),
                   d.get("to_state"), d.get("text"))


@dataclass(slots=True)
class TraceReport:
    passed: bool
    matched: int
    first_divergence: dict | None = None


def assert_trace(trace: list[dict],
                 expectations: list[Expectation]) -> TraceReport:
    """Check expectations appear in the trace, in order. On failure the
    report carries the first divergence: what was expected where, and
    what the trace actually did there."""
    i = 0
    for n, exp in enumerate(expectations):
        while i < len(trace) and trace[i]["tick"] < exp.from_tick:
            i += 1
        j = i
        while j < len(trace) and trace[j]["tick"] <= exp.to_tick:
            if exp.matches(trace[j]):
                break
            j += 1
        else:
            j = len(trace)
        if j >= len(trace) or not exp.matches(trace[j]):
            nearby = [e for e in trace
                      if exp.from_tick <= e["tick"] <= exp.to_tick]
            return TraceReport(
                passed=False, matched=n,
                first_divergence={
                    "expected": exp.describe(),
                    "from_tick": exp.from_tick,
                    "to_tick": exp.to_tick,
                    "actual": nearby,
                })
        i = j + 1
    return TraceReport(passed=True, matched=len(expectations))
