"""Hostless shared meeting room.

One `Session` is a single-writer event loop: transports (TCP, WebSocket,
or the scripted harness) hand it decoded client messages and drain
per-client outboxes; nothing else touches its state. All relay, recording,
and stand-in behaviour happens synchronously inside `ingest` and `tick`,
which makes a whole meeting a pure function of (inputs, seed).

Stand-ins are first-class participants: their poses, speech audio, and
utterances go through the exact same recording and broadcast path as
human events.
"""

from __future__ import annotations

import logging
import math
import socket
import socketserver
import threading
import time
from dataclasses import dataclass, field

from . import wire
from .agent import AgentAction, StandInAgent
from .model import (
    AudioChunk,
    Event,
    Meeting,
    PoseFrame,
    Role,
    SAMPLE_RATE,
    StandInConfig,
    TICK_RATE,
    UtteranceEvent,
    role_of,
    validate_event,
    validate_meeting,
    validate_standin_config,
)
from .store import RecordingManifest, RecordingWriter, open_writer

log = logging.getLogger(__name__)

LATE_WINDOW_TICKS = 18
SEAT_RADIUS_M = 2.0


class SetupError(ValueError):
    pass


class JoinError(ValueError):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class ProtocolError(ValueError):
    pass


@dataclass(slots=True)
class ClientHandle:
    participant_id: str
    display_name: str
    outbox: list[bytes] = field(default_factory=list)

    def drain(self) -> list[bytes]:
        out, self.outbox = self.outbox, []
        return out


def seat_positions(participant_ids: list[str]
                   ) -> dict[str, tuple[tuple[float, float, float], float]]:
    """Deterministic circular seating: (position, yaw facing the centre)."""
    ordered = sorted(participant_ids)
    seats = {}
    n = max(len(ordered), 1)
    for i, pid in enumerate(ordered):
        theta = 2.0 * math.pi * i / n
        pos = (SEAT_RADIUS_M * math.sin(theta), 0.0,
               SEAT_RADIUS_M * math.cos(theta))
        yaw = (math.degrees(theta) + 180.0) % 360.0
        seats[pid] = (pos, yaw)
    return seats


class Session:
    """A live meeting iteration: relays events, hosts stand-ins, records."""

    def __init__(self, meeting: Meeting, iteration_index: int,
                 standin_configs: list[StandInConfig], seed: int, *,
                 data_root, tick_rate: int = TICK_RATE,
                 sample_rate: int = SAMPLE_RATE,
                 late_window: int = LATE_WINDOW_TICKS,
                 llm_client=None, tts_client=None, stt_client=None,
                 proactive_standins: bool = False):
        problems = validate_meeting(meeting)
        if problems:
            raise SetupError("; ".join(problems))
        for cfg in standin_configs:
            problems = validate_standin_config(cfg, meeting)
            if problems:
                raise SetupError("; ".join(problems))
            if role_of(meeting, cfg.absentee_id, iteration_index) \
                    is not Role.ABSENTEE:
                raise SetupError(
                    f"stand-in for {cfg.absentee_id} but they attend "
                    f"iteration {iteration_index} live")

        self.meeting = meeting
        self.iteration_index = iteration_index
        self.tick_rate = tick_rate
        self.late_window = late_window
        self.current_tick = 0
        self.seed = seed
        self.stt_client = stt_client
        self.clients: dict[str, ClientHandle] = {}
        self.drop_counters: dict[str, int] = {}
        self.closed = False
        self._manifest: RecordingManifest | None = None
        self._inbox: list[Event] = []
        self._pending_audio: dict[int, list[AudioChunk]] = {}

        iteration = next(i for i in meeting.iterations
                         if i.index == iteration_index)
        self._attendee_ids = list(iteration.attendee_ids)
        standin_ids = [c.absentee_id for c in standin_configs]
        roster_ids = sorted(set(self._attendee_ids) | set(standin_ids))
        seats = seat_positions(roster_ids)

        self.standins: dict[str, StandInAgent] = {}
        for cfg in sorted(standin_configs, key=lambda c: c.absentee_id):
            pos, yaw = seats[cfg.absentee_id]
            profile = meeting.participant(cfg.absentee_id)
            self.standins[cfg.absentee_id] = StandInAgent(
                cfg, meeting.agenda, profile=profile, position=pos,
                home_yaw=yaw, seed=seed, llm_client=llm_client,
                tts_client=tts_client, proactive=proactive_standins)

        self.recorder: RecordingWriter = open_writer(
            data_root, meeting.meeting_id, iteration_index, roster_ids,
            tick_rate=tick_rate, sample_rate=sample_rate,
            attendees=self._attendee_ids, standins=standin_ids)

    # -- membership ------------------------------------------------------------

    def roster_ids(self) -> list[str]:
        return sorted(set(self.clients) | set(self.standins))

    def join(self, participant_id: str, display_name: str = "") -> dict:
        """Returns the welcome message body; broadcasts a roster update."""
        if self.closed:
            raise JoinError("closed", "session is closed")
        if participant_id in self.clients:
            raise JoinError("already_joined",
                            f"{participant_id} already joined")
        if role_of(self.meeting, participant_id, self.iteration_index) \
                is not Role.ATTENDEE:
            raise JoinError(
                "role", f"{participant_id} is absent from iteration "
                f"{self.iteration_index}; only attendees join live")
        self.clients[participant_id] = ClientHandle(participant_id,
                                                    display_name)
        update = wire.encode(wire.make_message("roster_update", {
            "roster": self.roster_ids(),
            "standins": sorted(self.standins)}))
        self._broadcast(update, exclude=participant_id)
        return {
            "participant_id": participant_id,
            "meeting_id": self.meeting.meeting_id,
            "iteration_index": self.iteration_index,
            "tick_rate": self.tick_rate,
            "current_tick": self.current_tick,
            "roster": self.roster_ids(),
            "standins": sorted(self.standins),
        }

    def leave(self, participant_id: str) -> None:
        if participant_id in self.clients:
            del self.clients[participant_id]
            update = wire.encode(wire.make_message("roster_update", {
                "roster": self.roster_ids(),
                "standins": sorted(self.standins)}))
            self._broadcast(update)

    # -- event intake ------------------------------------------------------------

    def ingest(self, sender_id: str, event: Event) -> None:
        """Validate, relay to peers, record, and queue for the stand-ins."""
        if self.closed:
            return
        if sender_id not in self.clients:
            raise ProtocolError(f"unknown sender: {sender_id}")
        owner = (event.speaker_id if isinstance(event, UtteranceEvent)
                 else event.participant_id)
        if owner != sender_id:
            raise ProtocolError(
                f"{sender_id} may not send events for {owner}")

        # An utterance is only known once the speech finished, so its
        # lateness is measured from the end of the span, not the start.
        tick = (event.end_tick if isinstance(event, UtteranceEvent)
                else event.tick)
        lo = self.current_tick - self.late_window
        hi = self.current_tick + 1
        if not (lo <= tick <= hi):
            self._drop("out_of_window", sender_id,
                       f"event tick {tick} outside [{lo}, {hi}]")
            return
        problem = validate_event(event, self.tick_rate)
        if problem is not None:
            self._drop(problem, sender_id, problem)
            return

        self._record(event)
        self._broadcast(wire.encode(wire.event_message(event)),
                        exclude=sender_id)
        self._inbox.append(event)

    def _drop(self, reason: str, sender_id: str, detail: str) -> None:
        self.drop_counters[reason] = self.drop_counters.get(reason, 0) + 1
        log.warning("dropped event from %s: %s", sender_id, detail)
        client = self.clients.get(sender_id)
        if client is not None:
            client.outbox.append(wire.encode(wire.make_message(
                "error", {"code": reason, "message": detail})))

    # -- the loop body ------------------------------------------------------------

    def tick(self) -> list[bytes]:
        """Process one tick: step every stand-in on the events that arrived
        since the last tick, then advance the clock. Returns the messages
        broadcast this tick (already delivered to client outboxes)."""
        if self.closed:
            return []
        t = self.current_tick
        inbox, self._inbox = self._inbox, []
        sent: list[bytes] = []

        for pid in sorted(self.standins):
            agent = self.standins[pid]
            action = agent.step(t, inbox)

            pose = agent.current_pose(t)
            self._record(pose)
            sent.append(self._broadcast(wire.encode(wire.event_message(pose))))

            if action.kind == "speak_plan" and action.plan is not None:
                plan = action.plan
                utterance = UtteranceEvent(
                    t, t + max(plan.nominal_duration_ticks, 1) - 1, pid,
                    plan.text)
                self._record(utterance)
                self._inbox.append(utterance)  # peers hear it next tick
                sent.append(self._broadcast(
                    wire.encode(wire.event_message(utterance))))
                sent.append(self._broadcast(wire.encode(wire.make_message(
                    "standin_action",
                    {"tick": t, "participant_id": pid,
                     "state": agent.state.value,
                     "action": action.to_json_dict()}))))
                for chunk in agent.synthesize(plan, t):
                    self._pending_audio.setdefault(chunk.tick, []).append(chunk)

        for chunk in self._pending_audio.pop(t, []):
            self._record(chunk)
            sent.append(self._broadcast(wire.encode(wire.event_message(chunk))))
            self._inbox.append(chunk)

        self.current_tick = t + 1
        return sent

    # -- shutdown ------------------------------------------------------------------

    def close(self) -> RecordingManifest:
        if self._manifest is not None:
            return self._manifest
        self._broadcast(wire.encode(wire.make_message(
            "bye", {"participant_id": "", "reason": "session_closed"})))
        self._manifest = self.recorder.finalize()
        self.closed = True
        return self._manifest

    # -- internals -------------------------------------------------------------------

    def _record(self, event: Event) -> None:
        self.recorder.append(event)

    def _broadcast(self, data: bytes, exclude: str | None = None) -> bytes:
        for pid, client in self.clients.items():
            if pid != exclude:
                client.outbox.append(data)
        return data

    def agent_trace(self) -> list[dict]:
        out = []
        for pid in sorted(self.standins):
            agent = self.standins[pid]
            for tr in agent.transitions:
                out.append({"participant_id": pid, **tr.to_json_dict()})
        out.sort(key=lambda d: (d["tick"], d["participant_id"]))
        return out


# --------------------------------------------------------------------------
# TCP transport

class _SessionTCPHandler(socketserver.BaseRequestHandler):
    def handle(self) -> None:  # pragma: no cover - exercised via smoke test
        server: SessionTCPServer = self.server  # type: ignore[assignment]
        decoder = wire.StreamDecoder()
        pid: str | None = None
        sock: socket.socket = self.request
        try:
            while True:
                data = sock.recv(65536)
                if not data:
                    break
                for msg_type, body in decoder.feed(data):
                    with server.lock:
                        pid = server.handle_message(sock, pid, msg_type, body)
                        if pid is None:
                            return
                with server.lock:
                    server.flush(pid, sock)
        except (ConnectionError, wire.WireError) as e:
            log.info("connection ended: %s", e)
        finally:
            if pid is not None:
                with server.lock:
                    server.session.leave(pid)


class SessionTCPServer(socketserver.ThreadingTCPServer):
    """Serves one session over the framed-JSON protocol in real time.

    The mutex keeps the promise that a single logical loop owns the
    session: reader threads and the ticker all funnel through it.
    """

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, session: Session, host: str = "127.0.0.1",
                 port: int = 0):
        super().__init__((host, port), _SessionTCPHandler)
        self.session = session
        self.lock = threading.RLock()
        self._socks: dict[str, socket.socket] = {}
        self._ticker = threading.Thread(target=self._run_clock, daemon=True)
        self._stop = threading.Event()

    def start_clock(self) -> None:
        self._ticker.start()

    def _run_clock(self) -> None:  # pragma: no cover - timing loop
        period = 1.0 / self.session.tick_rate
        next_at = time.monotonic()
        while not self._stop.is_set():
            now = time.monotonic()
            while next_at <= now:
                with self.lock:
                    self.session.tick()
                next_at += period
            with self.lock:
                for pid, sock in list(self._socks.items()):
                    self.flush(pid, sock)
            time.sleep(max(0.0, next_at - time.monotonic()))

    def handle_message(self, sock: socket.socket, pid: str | None,
                       msg_type: str, body: dict) -> str | None:
        session = self.session
        if msg_type == "hello":
            try:
                welcome = session.join(body["participant_id"],
                                       body.get("display_name", ""))
            except (JoinError, KeyError, LookupError) as e:
                code = getattr(e, "code", "bad_hello")
                sock.sendall(wire.encode_framed(wire.make_message(
                    "error", {"code": code, "message": str(e)})))
                return None
            pid = welcome["participant_id"]
            self._socks[pid] = sock
            sock.sendall(wire.encode_framed(wire.make_message("welcome",
                                                              welcome)))
            return pid
        if pid is None:
            sock.sendall(wire.encode_framed(wire.make_message(
                "error", {"code": "hello_first",
                          "message": "say hello before anything else"})))
            return None
        if msg_type in ("pose", "audio", "utterance"):
            try:
                session.ingest(pid, wire.event_from_message(msg_type, body))
            except ProtocolError as e:
                sock.sendall(wire.encode_framed(wire.make_message(
                    "error", {"code": "protocol", "message": str(e)})))
        elif msg_type == "bye":
            session.leave(pid)
            self._socks.pop(pid, None)
            return None
        return pid

    def flush(self, pid: str | None, sock: socket.socket) -> None:
        if pid is None:
            return
        client = self.session.clients.get(pid)
        if client is None:
            return
        for payload in client.drain():
            try:
                sock.sendall(wire.frame(payload))
            except OSError:  # pragma: no cover
                break

    def shutdown(self) -> None:
        self._stop.set()
        super().shutdown()
