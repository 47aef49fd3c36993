"""HTTP and WebSocket facade over the engine, for browsers and tools.

Everything durable lives under one data root, so restarting the server
(or running several) changes nothing: requests are answered straight
from the entity store and the recording directories. The only in-memory
construct is the registry of live sessions, and those flush to the same
store when closed.

Routes are versioned under ``/v1``. Every error is a ``{"code",
"message"}`` JSON body with a matching HTTP status.
"""

from __future__ import annotations

import asyncio
import json
import logging
import re
import threading
import time
import wave
from dataclasses import dataclass, field
from io import BytesIO
from pathlib import Path

from fastapi import (FastAPI, File, Form, Query, Request, UploadFile,
                     WebSocket, WebSocketDisconnect)
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from . import wire
from .agent import synthesize_speech
from .model import (AudioChunk, Meeting, PoseFrame, ResponsePlan,
                    StandInConfig, UnknownParticipant, UtteranceEvent,
                    cumulative_samples, pcm_rms, speech_duration_ticks)
from .playback import (Contribution, abridge, contribution_from_events,
                       open_playback, splice, verify_chain)
from .server import JoinError, Session, SetupError
from .store import (EntityStore, NotFound, Recording, ValidationError,
                    find_recording, load, recording_dirs, recording_id)

log = logging.getLogger(__name__)

# One view page carries poses plus base64 audio for every tick requested,
# so the range is capped; clients page through longer spans.
MAX_VIEW_PAGE_TICKS = 720

_RECORDING_CACHE_SLOTS = 8


class ApiError(Exception):
    """Maps engine failures onto the wire error shape."""

    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code


def _not_found(what: str) -> ApiError:
    return ApiError(404, "not-found", what)


def _validation(message: str) -> ApiError:
    return ApiError(422, "validation", message)


# --------------------------------------------------------------------------
# recording access

class _RecordingCache:
    """Tiny mtime-checked cache so scrubbing does not reload WAV tracks
    on every request."""

    def __init__(self, data_root: Path):
        self.data_root = data_root
        self._lock = threading.Lock()
        self._slots: dict[str, tuple[int, Recording]] = {}

    def get(self, rec_id: str) -> Recording:
        try:
            directory = find_recording(self.data_root, rec_id)
        except NotFound:
            raise _not_found(f"recording {rec_id}")
        stamp = (directory / "manifest.json").stat().st_mtime_ns
        with self._lock:
            hit = self._slots.get(rec_id)
            if hit is not None and hit[0] == stamp:
                return hit[1]
        recording = load(directory)
        with self._lock:
            if len(self._slots) >= _RECORDING_CACHE_SLOTS:
                self._slots.pop(next(iter(self._slots)))
            self._slots[rec_id] = (stamp, recording)
        return recording


def _recording_summary(rec_id: str, man) -> dict:
    return {"recording_id": rec_id,
            "meeting_id": man.meeting_id,
            "iteration_index": man.iteration_index,
            "parent_iteration": man.parent_iteration,
            "duration_ticks": man.duration_ticks,
            "participants": [t.participant_id for t in man.tracks],
            "attendees": list(man.attendees),
            "standins": list(man.standins)}


# --------------------------------------------------------------------------
# pending comments
#
# Contributions posted against a recording wait under
# <recording>/pending/NNN_<id>.json until a splice consumes them; the
# numeric prefix preserves creation order, which is the tiebreak for
# same-anchor splicing. Consumed files move to pending/consumed/.

_PENDING_NAME = re.compile(r"^(\d{4})_(.+)\.json$")


def _pending_dir(directory: Path) -> Path:
    return directory / "pending"


def _pending_files(directory: Path) -> list[Path]:
    pdir = _pending_dir(directory)
    if not pdir.is_dir():
        return []
    return sorted(p for p in pdir.glob("*.json")
                  if _PENDING_NAME.match(p.name))


def _pending_seq(directory: Path) -> int:
    best = 0
    for p in _pending_files(directory):
        m = _PENDING_NAME.match(p.name)
        best = max(best, int(m.group(1)))
    consumed = _pending_dir(directory) / "consumed"
    if consumed.is_dir():
        for p in consumed.glob("*.json"):
            m = _PENDING_NAME.match(p.name)
            if m:
                best = max(best, int(m.group(1)))
    return best + 1


def _contribution_summary(c: Contribution) -> dict:
    return {"contribution_id": c.contribution_id,
            "author_id": c.author_id,
            "anchor_tick": c.anchor_tick,
            "duration_ticks": c.duration_ticks,
            "text": c.utterances[0].text if c.utterances else None}


def _build_contribution(recording: Recording, contribution_id: str,
                        author_id: str, anchor_tick: int, text: str | None,
                        wav_bytes: bytes | None) -> Contribution:
    """Comment capture server-side: turn an uploaded WAV and/or typed text
    into a contribution on a local tick grid starting at zero.

    Text without audio gets the same tone-burst placeholder a stand-in
    produces when no speech synthesis endpoint is configured, so a spliced
    text comment still occupies audible time.
    """
    man = recording.manifest
    sr, tr = man.audio_sample_rate, man.tick_rate
    events: list = []

    if wav_bytes is not None:
        try:
            with wave.open(BytesIO(wav_bytes), "rb") as w:
                shape = (w.getnchannels(), w.getsampwidth(), w.getframerate())
                frames = w.readframes(w.getnframes())
        except (wave.Error, EOFError) as e:
            raise _validation(f"unreadable WAV: {e}")
        if shape != (1, 2, sr):
            raise _validation(
                f"audio must be {sr} Hz mono 16-bit PCM, got "
                f"{shape[2]} Hz {shape[0]} ch {8 * shape[1]} bit")
        total = len(frames) // 2
        if total == 0:
            raise _validation("audio is empty")
        duration = -(-total * tr // sr)
        for t in range(duration):
            a = cumulative_samples(t, sr, tr)
            b = cumulative_samples(t + 1, sr, tr)
            pcm = frames[2 * a:2 * b]
            pcm += b"\0" * ((b - a) * 2 - len(pcm))
            events.append(AudioChunk(t, author_id, pcm_rms(pcm), pcm))
    elif text:
        plan = ResponsePlan.for_text(text)
        events.extend(synthesize_speech(plan, participant_id=author_id,
                                        start_tick=0, sample_rate=sr,
                                        tick_rate=tr))
        duration = plan.nominal_duration_ticks
    else:
        raise _validation("comment needs audio, text, or both")

    if text:
        events.append(UtteranceEvent(0, max(duration - 1, 0), author_id,
                                     text))

    # The commenter's avatar holds whatever pose they had at the anchor.
    held = recording.latest_pose(author_id, anchor_tick)
    position = held.position if held else (0.0, 0.0, 0.0)
    yaw = held.yaw if held else 0.0
    for t in range(duration):
        events.append(PoseFrame(t, author_id, position, yaw,
                                speaking_hint=True))

    return contribution_from_events(contribution_id, author_id, anchor_tick,
                                    events, sample_rate=sr, tick_rate=tr)


# --------------------------------------------------------------------------
# live sessions

@dataclass
class LiveSession:
    """A session plus the mutex every socket and the ticker go through."""
    session_id: str
    session: Session
    lock: threading.RLock = field(default_factory=threading.RLock)
    ticker: threading.Thread | None = None
    stop: threading.Event = field(default_factory=threading.Event)

    def start_clock(self, tick_hz: float) -> None:
        def run() -> None:  # pragma: no cover - timing loop
            period = 1.0 / tick_hz
            while not self.stop.is_set():
                with self.lock:
                    if self.session.closed:
                        return
                    self.session.tick()
                time.sleep(period)

        self.ticker = threading.Thread(target=run, daemon=True)
        self.ticker.start()


def resolve_chain(data_root: Path, final_dir: Path) -> list[Recording]:
    """Follow parent links from a recording back to the live root."""
    chain: list[Recording] = [load(final_dir)]
    seen = {final_dir}
    while chain[0].manifest.parent_iteration is not None:
        man = chain[0].manifest
        want = man.parent_iteration
        candidates = [d for d in recording_dirs(data_root)
                      if d.parent.name == man.meeting_id and d not in seen]
        exact = [d for d in candidates if d.name == str(want)]
        if not exact:
            exact = [d for d in candidates
                     if load(d).manifest.iteration_index == want]
        if not exact:
            raise _validation(
                f"parent iteration {want} of "
                f"{recording_id(chain[0].directory)} not found")
        parent = exact[0]
        seen.add(parent)
        chain.insert(0, load(parent))
    return chain


# --------------------------------------------------------------------------
# app factory

def create_app(data_root: str | Path) -> FastAPI:
    root = Path(data_root)
    app = FastAPI(title="standin", version="1")
    # The review UI is static files on another origin; the API is the
    # only thing that needs to opt in to cross-origin calls.
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])
    store = EntityStore(root)
    recordings = _RecordingCache(root)
    live: dict[str, LiveSession] = {}
    live_lock = threading.Lock()

    @app.exception_handler(ApiError)
    async def _api_error(_req: Request, exc: ApiError) -> JSONResponse:
        return JSONResponse({"code": exc.code, "message": str(exc)},
                            status_code=exc.status)

    @app.exception_handler(RequestValidationError)
    async def _bad_request(_req: Request,
                           exc: RequestValidationError) -> JSONResponse:
        return JSONResponse({"code": "bad-request", "message": str(exc)},
                            status_code=400)

    def _meeting(meeting_id: str) -> Meeting:
        try:
            return store.get_meeting(meeting_id)
        except NotFound:
            raise _not_found(f"meeting {meeting_id}")

    def _meeting_if_stored(meeting_id: str) -> Meeting | None:
        try:
            return store.get_meeting(meeting_id)
        except NotFound:
            return None

    # -- meetings and stand-in configs ----------------------------------------

    @app.get("/v1/meetings")
    def list_meetings() -> dict:
        out = []
        for mid in store.list_ids("meeting"):
            m = store.get_meeting(mid)
            out.append({"meeting_id": m.meeting_id, "title": m.title,
                        "participants": [p.participant_id
                                         for p in m.participants],
                        "agenda": [a.item_id for a in m.agenda],
                        "iterations": len(m.iterations)})
        return {"meetings": out}

    @app.post("/v1/meetings", status_code=201)
    async def create_meeting(request: Request) -> dict:
        body = await _json_body(request)
        try:
            meeting = Meeting.from_json_dict(body)
        except (KeyError, TypeError, ValueError) as e:
            raise _validation(f"malformed meeting: {e}")
        try:
            store.put_meeting(meeting)
        except ValidationError as e:
            raise _validation(str(e))
        return {"meeting_id": meeting.meeting_id}

    @app.get("/v1/meetings/{meeting_id}")
    def show_meeting(meeting_id: str) -> dict:
        return _meeting(meeting_id).to_json_dict()

    @app.get("/v1/meetings/{meeting_id}/standin/{participant_id}")
    def show_standin(meeting_id: str, participant_id: str) -> dict:
        _meeting(meeting_id)
        try:
            cfg = store.get_standin_config(meeting_id, participant_id)
        except NotFound:
            raise _not_found(f"stand-in config for {participant_id} "
                             f"in meeting {meeting_id}")
        return cfg.to_json_dict()

    @app.put("/v1/meetings/{meeting_id}/standin/{participant_id}")
    def put_standin(meeting_id: str, participant_id: str,
                    body: dict) -> dict:
        _meeting(meeting_id)
        # Clients may send bare {"text": ...} plans; the derived fields
        # (gesture, nominal duration) are filled in here so that timing
        # stays a server-side concern.
        plans = list(body.get("responses", {}).values())
        if isinstance(body.get("fallback"), dict):
            plans.append(body["fallback"])
        for plan in plans:
            if isinstance(plan, dict):
                plan.setdefault("gesture", {"kind": "none"})
                plan.setdefault("nominal_duration_ticks",
                                speech_duration_ticks(plan.get("text", "")))
        try:
            cfg = StandInConfig.from_json_dict(body)
        except (KeyError, TypeError, ValueError) as e:
            raise _validation(f"malformed stand-in config: {e}")
        if cfg.absentee_id != participant_id:
            raise _validation(
                f"config is for {cfg.absentee_id}, path says "
                f"{participant_id}")
        try:
            store.put_standin_config(meeting_id, cfg)
        except ValidationError as e:
            raise _validation(str(e))
        return cfg.to_json_dict()

    # -- recordings and playback ----------------------------------------------

    @app.get("/v1/recordings")
    def list_recordings() -> dict:
        out = []
        for d in recording_dirs(root):
            rid = recording_id(d)
            out.append(_recording_summary(rid, recordings.get(rid).manifest))
        return {"recordings": out}

    @app.get("/v1/recordings/{rec_id}/manifest")
    def show_manifest(rec_id: str) -> dict:
        rec = recordings.get(rec_id)
        body = rec.manifest.to_json_dict()
        body["recording_id"] = rec_id
        return body

    @app.get("/v1/recordings/{rec_id}/view")
    def view_page(rec_id: str,
                  viewpoint: str | None = Query(default=None),
                  from_tick: int = Query(default=0, alias="from", ge=0),
                  to_tick: int | None = Query(default=None, alias="to")
                  ) -> dict:
        rec = recordings.get(rec_id)
        duration = rec.manifest.duration_ticks
        try:
            playback = open_playback(rec, viewpoint)
        except UnknownParticipant:
            raise _validation(f"viewpoint {viewpoint} is not in this "
                              f"recording")
        if to_tick is None:
            to_tick = duration
        if to_tick < from_tick:
            raise _validation("to must be >= from")
        to_tick = min(to_tick, duration, from_tick + MAX_VIEW_PAGE_TICKS)
        views = [playback.view_at(t) for t in range(from_tick, to_tick)]
        return {"recording_id": rec_id, "viewpoint": viewpoint,
                "from": from_tick, "to": to_tick,
                "duration_ticks": duration, "views": views}

    # -- comments and splicing --------------------------------------------------

    @app.get("/v1/recordings/{rec_id}/comments")
    def list_comments(rec_id: str) -> dict:
        rec = recordings.get(rec_id)
        out = []
        for path in _pending_files(rec.directory):
            c = Contribution.from_json_dict(_read_json(path))
            out.append(_contribution_summary(c))
        return {"comments": out}

    @app.post("/v1/recordings/{rec_id}/comments", status_code=201)
    async def post_comment(rec_id: str, meta: str = Form(...),
                           audio: UploadFile | None = File(default=None)
                           ) -> dict:
        rec = recordings.get(rec_id)
        fields = _parse_meta(meta)
        author = fields.get("author_id")
        anchor = fields.get("anchor_tick")
        if not isinstance(author, str) or not author:
            raise _validation("meta.author_id is required")
        if not isinstance(anchor, int) or isinstance(anchor, bool):
            raise _validation("meta.anchor_tick must be an integer")
        if not 0 <= anchor <= rec.manifest.duration_ticks:
            raise _validation(
                f"anchor {anchor} outside recording of "
                f"{rec.manifest.duration_ticks} ticks")
        text = fields.get("text") or None
        wav_bytes = await audio.read() if audio is not None else None
        if wav_bytes == b"":
            wav_bytes = None

        seq = _pending_seq(rec.directory)
        cid = fields.get("contribution_id") or f"{author}-{anchor}-{seq}"
        contribution = _build_contribution(rec, cid, author, anchor, text,
                                           wav_bytes)
        pdir = _pending_dir(rec.directory)
        pdir.mkdir(exist_ok=True)
        path = pdir / f"{seq:04d}_{cid}.json"
        _write_json(path, contribution.to_json_dict())
        log.info("comment %s pending under %s", cid, path)
        return _contribution_summary(contribution)

    @app.post("/v1/recordings/{rec_id}/splice", status_code=201)
    async def splice_comments(rec_id: str, request: Request) -> dict:
        rec = recordings.get(rec_id)
        body = await _json_body(request, optional=True)
        wanted = body.get("comment_ids")
        listening = bool(body.get("listening", True))

        paths = _pending_files(rec.directory)
        if wanted is not None:
            by_id = {_PENDING_NAME.match(p.name).group(2): p for p in paths}
            missing = [c for c in wanted if c not in by_id]
            if missing:
                raise _not_found(f"pending comment(s) {', '.join(missing)}")
            paths = [by_id[c] for c in wanted]
        if not paths:
            raise _validation("no pending comments to splice")
        contributions = [Contribution.from_json_dict(_read_json(p))
                         for p in paths]

        meeting = _meeting_if_stored(rec.manifest.meeting_id)
        try:
            merged = splice(rec, contributions, data_root=root,
                            meeting=meeting, listening=listening)
        except (ValueError, ValidationError) as e:
            raise _validation(str(e))

        consumed = _pending_dir(rec.directory) / "consumed"
        consumed.mkdir(exist_ok=True)
        for p in paths:
            p.rename(consumed / p.name)

        new_id = recording_id(merged.directory)
        body = merged.manifest.to_json_dict()
        body["recording_id"] = new_id
        return {"recording_id": new_id, "manifest": body}

    @app.post("/v1/recordings/{rec_id}/abridge")
    def abridge_recording(rec_id: str, viewer: str = Query(...)) -> dict:
        try:
            final_dir = find_recording(root, rec_id)
        except NotFound:
            raise _not_found(f"recording {rec_id}")
        chain = resolve_chain(root, final_dir)
        try:
            verify_chain(chain)
        except ValueError as e:
            raise _validation(str(e))
        meeting = _meeting_if_stored(chain[0].manifest.meeting_id)
        if meeting is None:
            raise _validation(
                f"meeting {chain[0].manifest.meeting_id} is not in the "
                f"entity store; agenda needed to abridge")
        timeline = abridge(meeting, chain, viewer)
        saved = timeline.save(final_dir)
        out = timeline.to_json_dict()
        out["saved_to"] = str(saved)
        return out

    # -- live sessions ------------------------------------------------------------

    @app.get("/v1/sessions")
    def list_sessions() -> dict:
        with live_lock:
            items = list(live.values())
        return {"sessions": [{"session_id": s.session_id,
                              "meeting_id": s.session.meeting.meeting_id,
                              "iteration_index": s.session.iteration_index,
                              "current_tick": s.session.current_tick,
                              "closed": s.session.closed}
                             for s in items]}

    @app.post("/v1/sessions", status_code=201)
    async def create_session(request: Request) -> dict:
        body = await _json_body(request)
        meeting_id = body.get("meeting_id")
        iteration = body.get("iteration_index")
        if not isinstance(meeting_id, str) or not isinstance(iteration, int):
            raise _validation("meeting_id and iteration_index are required")
        meeting = _meeting(meeting_id)
        configs = []
        for pid in body.get("standins", _configured_absentees(
                store, meeting, iteration)):
            try:
                configs.append(store.get_standin_config(meeting_id, pid))
            except NotFound:
                raise _not_found(f"stand-in config for {pid} in meeting "
                                 f"{meeting_id}")
        session_id = body.get("session_id") or f"{meeting_id}-{iteration}"
        with live_lock:
            if session_id in live and not live[session_id].session.closed:
                raise ApiError(409, "exists",
                               f"session {session_id} is already live")
            try:
                session = Session(meeting, iteration, configs,
                                  int(body.get("seed", 0)), data_root=root)
            except (SetupError, ValidationError) as e:
                raise _validation(str(e))
            handle = LiveSession(session_id, session)
            live[session_id] = handle
        tick_hz = float(body.get("tick_hz", 0))
        if tick_hz > 0:
            handle.start_clock(tick_hz)
        return {"session_id": session_id, "meeting_id": meeting_id,
                "iteration_index": iteration,
                "standins": sorted(session.standins),
                "tick_rate": session.tick_rate}

    def _live(session_id: str) -> LiveSession:
        with live_lock:
            handle = live.get(session_id)
        if handle is None:
            raise _not_found(f"session {session_id}")
        return handle

    @app.post("/v1/sessions/{session_id}/tick")
    def tick_session(session_id: str,
                     count: int = Query(default=1, ge=1, le=72 * 60)) -> dict:
        handle = _live(session_id)
        with handle.lock:
            if handle.session.closed:
                raise ApiError(409, "closed",
                               f"session {session_id} is closed")
            for _ in range(count):
                handle.session.tick()
            return {"session_id": session_id,
                    "current_tick": handle.session.current_tick}

    @app.post("/v1/sessions/{session_id}/close")
    def close_session(session_id: str) -> dict:
        handle = _live(session_id)
        handle.stop.set()
        with handle.lock:
            manifest = handle.session.close()
        body = manifest.to_json_dict()
        body["recording_id"] = recording_id(
            Path(handle.session.recorder.directory))
        return body

    @app.websocket("/v1/sessions/{session_id}")
    async def session_socket(ws: WebSocket, session_id: str) -> None:
        await ws.accept()
        with live_lock:
            handle = live.get(session_id)
        if handle is None:
            await ws.send_text(wire.encode(wire.make_message(
                "error", {"code": "not-found",
                          "message": f"session {session_id}"})).decode())
            await ws.close()
            return
        bridge = _SocketBridge(handle, ws)
        try:
            await bridge.run()
        except WebSocketDisconnect:
            pass
        finally:
            bridge.detach()

    return app


def _configured_absentees(store: EntityStore, meeting: Meeting,
                          iteration_index: int) -> list[str]:
    """Absentees of the iteration that have a stored stand-in config."""
    out = []
    for it in meeting.iterations:
        if it.index == iteration_index:
            attending = set(it.attendee_ids)
            for p in meeting.participants:
                if p.participant_id in attending:
                    continue
                try:
                    store.get_standin_config(meeting.meeting_id,
                                             p.participant_id)
                except NotFound:
                    continue
                out.append(p.participant_id)
    return out


class _SocketBridge:
    """One WebSocket client on a live session.

    Inbound frames run through the same message handling as TCP clients;
    outbound traffic is pumped from the participant's outbox by a small
    poller so broadcasts triggered by other clients or the ticker reach
    the browser without it having to send anything.
    """

    def __init__(self, handle: LiveSession, ws: WebSocket):
        self.handle = handle
        self.ws = ws
        self.pid: str | None = None

    async def run(self) -> None:
        pump = asyncio.create_task(self._pump())
        try:
            while True:
                text = await self.ws.receive_text()
                try:
                    msg_type, body = wire.decode(text)
                except wire.WireError as e:
                    await self._send_error("protocol", str(e))
                    continue
                if not await self._dispatch(msg_type, body):
                    break
        finally:
            pump.cancel()

    async def _dispatch(self, msg_type: str, body: dict) -> bool:
        session = self.handle.session
        if msg_type == "hello":
            with self.handle.lock:
                try:
                    welcome = session.join(body.get("participant_id", ""),
                                           body.get("display_name", ""))
                except (JoinError, LookupError) as e:
                    await self._send_error(getattr(e, "code", "bad_hello"),
                                           str(e))
                    return True
            self.pid = welcome["participant_id"]
            await self.ws.send_text(wire.encode(
                wire.make_message("welcome", welcome)).decode())
            return True
        if self.pid is None:
            await self._send_error("hello_first",
                                   "say hello before anything else")
            return True
        if msg_type in ("pose", "audio", "utterance"):
            with self.handle.lock:
                try:
                    session.ingest(self.pid,
                                   wire.event_from_message(msg_type, body))
                except ValueError as e:
                    await self._send_error("protocol", str(e))
            return True
        if msg_type == "bye":
            self.detach()
            return False
        await self._send_error("protocol",
                               f"unexpected message type {msg_type}")
        return True

    async def _pump(self) -> None:
        while True:
            payloads: list[bytes] = []
            if self.pid is not None:
                with self.handle.lock:
                    client = self.handle.session.clients.get(self.pid)
                    if client is not None:
                        payloads = client.drain()
            for data in payloads:
                await self.ws.send_text(data.decode())
            await asyncio.sleep(0.005)

    async def _send_error(self, code: str, message: str) -> None:
        await self.ws.send_text(wire.encode(wire.make_message(
            "error", {"code": code, "message": message})).decode())

    def detach(self) -> None:
        if self.pid is not None:
            with self.handle.lock:
                self.handle.session.leave(self.pid)
            self.pid = None


# --------------------------------------------------------------------------
# small request helpers

async def _json_body(request: Request, optional: bool = False) -> dict:
    raw = await request.body()
    if not raw and optional:
        return {}
    try:
        body = json.loads(raw)
    except ValueError:
        raise ApiError(400, "bad-request", "body must be JSON")
    if not isinstance(body, dict):
        raise ApiError(400, "bad-request", "body must be a JSON object")
    return body


def _parse_meta(meta: str) -> dict:
    try:
        fields = json.loads(meta)
    except ValueError:
        raise _validation("meta must be JSON")
    if not isinstance(fields, dict):
        raise _validation("meta must be a JSON object")
    return fields


def _read_json(path: Path) -> dict:
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def _write_json(path: Path, payload: dict) -> None:
    tmp = path.with_suffix(".json.tmp")
    with open(tmp, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    tmp.replace(path)
