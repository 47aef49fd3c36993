"""File-backed recording codec and entity persistence.

Layout under a data root::

    <data_root>/recordings/<meeting>/<iteration>/
        manifest.json        # metadata, track list, SHA-256 per track
        motion.jsonl         # pose frames, one JSON object per line
        utterances.jsonl     # utterance events, one JSON object per line
        audio_<pid>.wav      # 48 kHz mono 16-bit PCM, silence-filled
        staging/             # arrival-order event log, removed on finalize
    <data_root>/entities/<kind>/<id>.json

Writers accept events in any arrival order and stably sort at finalize;
readers verify checksums before exposing anything.
"""

from __future__ import annotations

import hashlib
import json
import os
import shutil
import wave
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from pathlib import Path

from .model import (
    AudioChunk,
    Event,
    Meeting,
    ParticipantProfile,
    PoseFrame,
    SAMPLE_RATE,
    StandInConfig,
    TICK_RATE,
    TrackKind,
    UtteranceEvent,
    cumulative_samples,
    event_sort_key,
    validate_event,
    validate_meeting,
    validate_standin_config,
)

_JSONL_KW = {"separators": (",", ":"), "sort_keys": True}


class IntegrityError(ValueError):
    """A track's bytes do not match the checksum in its manifest."""

    def __init__(self, track: str):
        super().__init__(f"checksum mismatch for track {track}")
        self.track = track


class ValidationError(ValueError):
    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


class NotFound(KeyError):
    pass


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


# --------------------------------------------------------------------------
# manifest

@dataclass(slots=True)
class TrackEntry:
    participant_id: str
    kind: TrackKind
    path: str
    sha256: str

    def to_json_dict(self) -> dict:
        return {"participant_id": self.participant_id,
                "kind": self.kind.value, "path": self.path,
                "sha256": self.sha256}

    @classmethod
    def from_json_dict(cls, d: dict) -> TrackEntry:
        return cls(d["participant_id"], TrackKind(d["kind"]), d["path"],
                   d["sha256"])


@dataclass(slots=True)
class OriginSpan:
    """Provenance of a half-open tick range [from_tick, to_tick) of a
    recording: either live material from some iteration or an inserted
    contribution."""

    from_tick: int
    to_tick: int
    kind: str  # "live" | "contribution"
    iteration: int
    author_id: str | None = None
    contribution_id: str | None = None

    def to_json_dict(self) -> dict:
        return {"from_tick": self.from_tick, "to_tick": self.to_tick,
                "kind": self.kind, "iteration": self.iteration,
                "author_id": self.author_id,
                "contribution_id": self.contribution_id}

    @classmethod
    def from_json_dict(cls, d: dict) -> OriginSpan:
        return cls(int(d["from_tick"]), int(d["to_tick"]), d["kind"],
                   int(d["iteration"]), d.get("author_id"),
                   d.get("contribution_id"))


@dataclass(slots=True)
class RecordingManifest:
    meeting_id: str
    iteration_index: int
    tick_rate: int
    audio_sample_rate: int
    duration_ticks: int
    tracks: list[TrackEntry]
    parent_iteration: int | None = None
    attendees: list[str] = field(default_factory=list)
    standins: list[str] = field(default_factory=list)
    origin_spans: list[OriginSpan] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "meeting_id": self.meeting_id,
            "iteration_index": self.iteration_index,
            "tick_rate": self.tick_rate,
            "audio_sample_rate": self.audio_sample_rate,
            "duration_ticks": self.duration_ticks,
            "tracks": [t.to_json_dict() for t in self.tracks],
            "parent_iteration": self.parent_iteration,
            "attendees": list(self.attendees),
            "standins": list(self.standins),
            "origin_spans": [s.to_json_dict() for s in self.origin_spans],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> RecordingManifest:
        return cls(
            meeting_id=d["meeting_id"],
            iteration_index=int(d["iteration_index"]),
            tick_rate=int(d["tick_rate"]),
            audio_sample_rate=int(d["audio_sample_rate"]),
            duration_ticks=int(d["duration_ticks"]),
            tracks=[TrackEntry.from_json_dict(t) for t in d["tracks"]],
            parent_iteration=d.get("parent_iteration"),
            attendees=list(d.get("attendees", [])),
            standins=list(d.get("standins", [])),
            origin_spans=[OriginSpan.from_json_dict(s)
                          for s in d.get("origin_spans", [])],
        )


# --------------------------------------------------------------------------
# writer

class RecordingWriter:
    """Stages events in arrival order, sorts and flushes at finalize.

    The staging log survives a failed finalize so a retry can re-run it.
    """

    def __init__(self, directory: Path, meeting_id: str, iteration_index: int,
                 roster: list[str], tick_rate: int, sample_rate: int,
                 parent_iteration: int | None,
                 attendees: list[str], standins: list[str],
                 origin_spans: list[OriginSpan] | None,
                 min_duration_ticks: int = 0):
        self.directory = directory
        self.meeting_id = meeting_id
        self.iteration_index = iteration_index
        self.roster = sorted(set(roster))
        self.tick_rate = tick_rate
        self.sample_rate = sample_rate
        self.parent_iteration = parent_iteration
        self.attendees = sorted(set(attendees))
        self.standins = sorted(set(standins))
        self.origin_spans = origin_spans
        self.min_duration_ticks = min_duration_ticks
        self._staging = directory / "staging"
        self._staging.mkdir(parents=True, exist_ok=True)
        self._log = open(self._staging / "events.jsonl", "a", encoding="utf-8")
        self._events: list[Event] = []
        self._overlays: list[tuple[str, int, bytes]] = []
        self._closed = False

    def append(self, event: Event) -> None:
        if self._closed:
            raise ValueError("writer already finalized")
        problem = validate_event(event, self.tick_rate, self.sample_rate)
        if problem is not None:
            raise ValidationError([problem])
        kind = {PoseFrame: "pose", AudioChunk: "audio",
                UtteranceEvent: "utterance"}[type(event)]
        self._log.write(json.dumps({"kind": kind, **event.to_json_dict()},
                                   **_JSONL_KW) + "\n")
        self._events.append(event)

    def overlay_audio(self, participant_id: str, start_sample: int,
                      pcm: bytes) -> None:
        """Write raw samples straight into the participant's audio track,
        bypassing per-tick chunk framing. Used when material is copied
        between recordings, where the source tick grid may not line up
        with chunk boundaries here."""
        if self._closed:
            raise ValueError("writer already finalized")
        if start_sample < 0 or len(pcm) % 2:
            raise ValidationError(["audio:bad-overlay"])
        self._overlays.append((participant_id, start_sample, pcm))

    def finalize(self) -> RecordingManifest:
        if self._closed:
            raise ValueError("writer already finalized")
        self._log.flush()

        ordered = sorted(self._events, key=event_sort_key)
        # strict track ordering: identical keys collapse to the last arrival
        deduped: dict[tuple, Event] = {}
        for ev in ordered:
            deduped[event_sort_key(ev)] = ev
        events = [deduped[k] for k in sorted(deduped)]

        duration = self.min_duration_ticks
        for ev in events:
            if isinstance(ev, UtteranceEvent):
                duration = max(duration, ev.end_tick + 1)
            else:
                duration = max(duration, ev.tick + 1)

        poses = [e for e in events if isinstance(e, PoseFrame)]
        chunks = [e for e in events if isinstance(e, AudioChunk)]
        utterances = [e for e in events if isinstance(e, UtteranceEvent)]

        try:
            with open(self.directory / "motion.jsonl", "w",
                      encoding="utf-8") as f:
                for p in poses:
                    f.write(json.dumps(p.to_json_dict(), **_JSONL_KW) + "\n")
            with open(self.directory / "utterances.jsonl", "w",
                      encoding="utf-8") as f:
                for u in utterances:
                    f.write(json.dumps(u.to_json_dict(), **_JSONL_KW) + "\n")

            total_samples = cumulative_samples(duration, self.sample_rate,
                                               self.tick_rate)
            for pid in self.roster:
                buf = bytearray(total_samples * 2)  # silence
                for ch in chunks:
                    if ch.participant_id != pid or ch.pcm is None:
                        continue
                    off = cumulative_samples(ch.tick, self.sample_rate,
                                             self.tick_rate) * 2
                    buf[off:off + len(ch.pcm)] = ch.pcm
                for opid, start_sample, pcm in self._overlays:
                    if opid != pid:
                        continue
                    off = start_sample * 2
                    end = min(off + len(pcm), len(buf))
                    if off < len(buf):
                        buf[off:end] = pcm[:end - off]
                with wave.open(str(self.directory / f"audio_{pid}.wav"),
                               "wb") as w:
                    w.setnchannels(1)
                    w.setsampwidth(2)
                    w.setframerate(self.sample_rate)
                    w.writeframes(bytes(buf))

            tracks: list[TrackEntry] = []
            for pid in self.roster:
                for kind, name in ((TrackKind.MOTION, "motion.jsonl"),
                                   (TrackKind.AUDIO, f"audio_{pid}.wav"),
                                   (TrackKind.UTTERANCE, "utterances.jsonl")):
                    tracks.append(TrackEntry(
                        pid, kind, name,
                        _sha256_file(self.directory / name)))

            spans = self.origin_spans
            if spans is None:
                spans = [OriginSpan(0, duration, "live",
                                    self.iteration_index)] if duration else []
            manifest = RecordingManifest(
                meeting_id=self.meeting_id,
                iteration_index=self.iteration_index,
                tick_rate=self.tick_rate,
                audio_sample_rate=self.sample_rate,
                duration_ticks=duration,
                tracks=tracks,
                parent_iteration=self.parent_iteration,
                attendees=self.attendees,
                standins=self.standins,
                origin_spans=spans,
            )
            with open(self.directory / "manifest.json", "w",
                      encoding="utf-8") as f:
                json.dump(manifest.to_json_dict(), f, indent=2,
                          sort_keys=True)
                f.write("\n")
        except OSError:
            # leave staging in place for a retry
            raise

        self._log.close()
        self._closed = True
        shutil.rmtree(self._staging, ignore_errors=True)
        return manifest


def open_writer(data_root: str | os.PathLike, meeting_id: str,
                iteration_index: int, roster: list[str], *,
                tick_rate: int = TICK_RATE, sample_rate: int = SAMPLE_RATE,
                parent_iteration: int | None = None,
                attendees: list[str] | None = None,
                standins: list[str] | None = None,
                origin_spans: list[OriginSpan] | None = None,
                min_duration_ticks: int = 0
                ) -> RecordingWriter:
    if tick_rate <= 0 or sample_rate <= 0:
        raise ValueError("tick_rate and sample_rate must be positive")
    if iteration_index < 1:
        raise ValueError("iteration_index starts at 1")
    base = Path(data_root) / "recordings" / meeting_id
    directory = base / str(iteration_index)
    attempt = 1
    while directory.exists() and any(directory.iterdir()):
        attempt += 1
        directory = base / f"{iteration_index}__{attempt}"
    directory.mkdir(parents=True, exist_ok=True)
    return RecordingWriter(directory, meeting_id, iteration_index, roster,
                           tick_rate, sample_rate, parent_iteration,
                           attendees or [], standins or [], origin_spans,
                           min_duration_ticks)


# --------------------------------------------------------------------------
# reader

class Recording:
    """A finalized, checksum-verified recording with tick-range access."""

    def __init__(self, directory: Path, manifest: RecordingManifest,
                 poses: list[PoseFrame], utterances: list[UtteranceEvent],
                 audio: dict[str, bytes]):
        self.directory = directory
        self.manifest = manifest
        self.poses = poses
        self.utterances = utterances
        self._audio = audio
        self._pose_ticks: dict[str, list[int]] = {}
        self._pose_by_pid: dict[str, list[PoseFrame]] = {}
        for p in poses:
            self._pose_by_pid.setdefault(p.participant_id, []).append(p)
        for pid, frames in self._pose_by_pid.items():
            self._pose_ticks[pid] = [f.tick for f in frames]

    @property
    def duration_ticks(self) -> int:
        return self.manifest.duration_ticks

    @property
    def participant_ids(self) -> list[str]:
        return sorted({t.participant_id for t in self.manifest.tracks})

    def poses_between(self, lo: int, hi: int) -> list[PoseFrame]:
        """Pose frames with lo <= tick < hi, in track order."""
        return [p for p in self.poses if lo <= p.tick < hi]

    def latest_pose(self, participant_id: str, tick: int) -> PoseFrame | None:
        ticks = self._pose_ticks.get(participant_id)
        if not ticks:
            return None
        i = bisect_right(ticks, tick)
        if i == 0:
            return None
        return self._pose_by_pid[participant_id][i - 1]

    def utterances_between(self, lo: int, hi: int) -> list[UtteranceEvent]:
        """Utterances overlapping [lo, hi)."""
        return [u for u in self.utterances
                if u.start_tick < hi and u.end_tick >= lo]

    def audio_pcm(self, participant_id: str, lo: int, hi: int) -> bytes:
        """Raw samples covering ticks [lo, hi)."""
        data = self._audio.get(participant_id, b"")
        a = cumulative_samples(lo, self.manifest.audio_sample_rate,
                               self.manifest.tick_rate) * 2
        b = cumulative_samples(hi, self.manifest.audio_sample_rate,
                               self.manifest.tick_rate) * 2
        return data[a:b]

    def events(self) -> list[Event]:
        """Poses and utterances merged in track order (audio lives in WAVs)."""
        out: list[Event] = list(self.poses) + list(self.utterances)
        out.sort(key=event_sort_key)
        return out


def load(directory: str | os.PathLike) -> Recording:
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(str(manifest_path))
    with open(manifest_path, encoding="utf-8") as f:
        manifest = RecordingManifest.from_json_dict(json.load(f))

    for t in sorted(manifest.tracks,
                    key=lambda t: (t.kind.value, t.participant_id)):
        path = directory / t.path
        if not path.exists():
            raise FileNotFoundError(str(path))
        if _sha256_file(path) != t.sha256:
            raise IntegrityError(f"{t.kind.value}:{t.participant_id}")

    poses: list[PoseFrame] = []
    if (directory / "motion.jsonl").exists():
        with open(directory / "motion.jsonl", encoding="utf-8") as f:
            poses = [PoseFrame.from_json_dict(json.loads(line))
                     for line in f if line.strip()]
    utterances: list[UtteranceEvent] = []
    if (directory / "utterances.jsonl").exists():
        with open(directory / "utterances.jsonl", encoding="utf-8") as f:
            utterances = [UtteranceEvent.from_json_dict(json.loads(line))
                          for line in f if line.strip()]

    audio: dict[str, bytes] = {}
    for t in manifest.tracks:
        if t.kind is TrackKind.AUDIO:
            with wave.open(str(directory / t.path), "rb") as w:
                if (w.getnchannels(), w.getsampwidth(),
                        w.getframerate()) != (1, 2,
                                              manifest.audio_sample_rate):
                    raise IntegrityError(f"audio:{t.participant_id}")
                audio[t.participant_id] = w.readframes(w.getnframes())
    return Recording(directory, manifest, poses, utterances, audio)


# --------------------------------------------------------------------------
# entity store

ENTITY_KINDS = ("meeting", "profile", "standin_config")


class EntityStore:
    """JSON entities under <data_root>/entities/<kind>/<id>.json.

    Entities are validated before hitting disk; stand-in configs are
    checked against their meeting when it is present in the same store.
    """

    def __init__(self, data_root: str | os.PathLike):
        self.data_root = Path(data_root)

    def _path(self, kind: str, entity_id: str) -> Path:
        if kind not in ENTITY_KINDS:
            raise ValueError(f"unknown entity kind: {kind}")
        if not entity_id or "/" in entity_id or entity_id.startswith("."):
            raise ValueError(f"bad entity id: {entity_id!r}")
        return self.data_root / "entities" / kind / f"{entity_id}.json"

    def voice_seconds(self) -> dict[str, float]:
        """Durations of every WAV under the data root's voices directory."""
        out: dict[str, float] = {}
        vdir = self.data_root / "voices"
        if vdir.is_dir():
            for p in sorted(vdir.glob("*.wav")):
                try:
                    with wave.open(str(p), "rb") as w:
                        out[f"voices/{p.name}"] = (w.getnframes()
                                                   / w.getframerate())
                except (wave.Error, OSError):
                    out[f"voices/{p.name}"] = 0.0
        return out

    def put_meeting(self, meeting: Meeting) -> None:
        lookup = None
        if any(p.voice_sample_ref for p in meeting.participants):
            lookup = self.voice_seconds()
        violations = validate_meeting(meeting, lookup)
        if violations:
            raise ValidationError(violations)
        self._write("meeting", meeting.meeting_id, meeting.to_json_dict())

    def get_meeting(self, meeting_id: str) -> Meeting:
        return Meeting.from_json_dict(self._read("meeting", meeting_id))

    def put_profile(self, profile: ParticipantProfile) -> None:
        if profile.voice_sample_ref is not None:
            seconds = self.voice_seconds().get(profile.voice_sample_ref, 0.0)
            if seconds < 10.0:
                raise ValidationError(
                    [f"profile:voice-sample-too-short:{profile.participant_id}"])
        self._write("profile", profile.participant_id, profile.to_json_dict())

    def get_profile(self, participant_id: str) -> ParticipantProfile:
        return ParticipantProfile.from_json_dict(
            self._read("profile", participant_id))

    @staticmethod
    def standin_config_id(meeting_id: str, absentee_id: str) -> str:
        return f"{meeting_id}__{absentee_id}"

    def put_standin_config(self, meeting_id: str,
                           config: StandInConfig) -> None:
        try:
            meeting = self.get_meeting(meeting_id)
        except NotFound:
            raise ValidationError([f"standin:meeting-not-found:{meeting_id}"])
        violations = validate_standin_config(config, meeting)
        if violations:
            raise ValidationError(violations)
        self._write("standin_config",
                    self.standin_config_id(meeting_id, config.absentee_id),
                    config.to_json_dict())

    def get_standin_config(self, meeting_id: str,
                           absentee_id: str) -> StandInConfig:
        return StandInConfig.from_json_dict(
            self._read("standin_config",
                       self.standin_config_id(meeting_id, absentee_id)))

    def list_ids(self, kind: str) -> list[str]:
        d = self.data_root / "entities" / kind
        if not d.is_dir():
            return []
        return sorted(p.stem for p in d.glob("*.json"))

    def _write(self, kind: str, entity_id: str, payload: dict) -> None:
        path = self._path(kind, entity_id)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".json.tmp")
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write("\n")
        os.replace(tmp, path)

    def _read(self, kind: str, entity_id: str) -> dict:
        path = self._path(kind, entity_id)
        if not path.exists():
            raise NotFound(f"{kind}:{entity_id}")
        with open(path, encoding="utf-8") as f:
            return json.load(f)


# --------------------------------------------------------------------------

def recording_dirs(data_root: str | os.PathLike) -> list[Path]:
    """Every finalized recording directory under the data root, sorted."""
    root = Path(data_root) / "recordings"
    if not root.is_dir():
        return []
    return sorted(p.parent for p in root.glob("*/*/manifest.json"))


def recording_id(directory: Path) -> str:
    """Stable identifier '<meeting>__<iteration-dir>' used by CLI and API."""
    return f"{directory.parent.name}__{directory.name}"


def find_recording(data_root: str | os.PathLike, rec_id: str) -> Path:
    meeting, sep, iteration = rec_id.partition("__")
    if not sep:
        raise NotFound(rec_id)
    path = Path(data_root) / "recordings" / meeting / iteration
    if not (path / "manifest.json").exists():
        raise NotFound(rec_id)
    return path
