"""Reviewing a recorded iteration from inside it.

An absentee opens a finished recording from their stand-in's seat, scrubs
through it, and pauses to record timestamped comments. Each comment
becomes a `Contribution` that `splice` inserts into the timeline — the
rest of the meeting shifts right to make room, so the next iteration
contains the comment at exactly the moment it addressed. `abridge` then
builds a catch-up timeline for any viewer: material they already know is
compressed to short summaries, material they have never seen stays full
length, bit for bit.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

from .agent import classify
from .model import (
    AgendaItem,
    AudioChunk,
    Event,
    GestureTag,
    Meeting,
    PoseFrame,
    Role,
    UnknownParticipant,
    UtteranceEvent,
    bearing_deg,
    cumulative_samples,
    pcm_rms,
    role_of,
    speech_duration_ticks,
)
from .store import OriginSpan, Recording, open_writer
from .store import load as load_recording

MODE_PAUSED = "paused"
MODE_PLAYING = "playing"
MODE_COMMENTING = "commenting"


class StateError(RuntimeError):
    """An operation that the playback mode does not allow right now."""


def audio_frame_period(sample_rate: int, tick_rate: int) -> int:
    """Ticks after which the per-tick sample count pattern repeats.

    Tick boundaries fall on whole samples only every this many ticks
    (3 at 48 kHz / 72); inserted material is sized in whole periods so
    copies between recordings stay sample-exact.
    """
    return tick_rate // math.gcd(sample_rate, tick_rate)


# --------------------------------------------------------------------------
# contributions


@dataclass(slots=True)
class Contribution:
    """A captured comment, re-based to its own local clock.

    ``frames`` and ``utterances`` use local ticks starting at 0; ``audio``
    is a raw mono 16-bit waveform whose sample 0 is local tick 0. The
    anchor is the cursor position in the source recording where the
    comment was made.
    """

    contribution_id: str
    author_id: str
    anchor_tick: int
    frames: list[PoseFrame]
    audio: bytes
    utterances: list[UtteranceEvent]
    duration_ticks: int

    def to_json_dict(self) -> dict:
        return {
            "contribution_id": self.contribution_id,
            "author_id": self.author_id,
            "anchor_tick": self.anchor_tick,
            "frames": [f.to_json_dict() for f in self.frames],
            "audio": base64.b64encode(self.audio).decode("ascii"),
            "utterances": [u.to_json_dict() for u in self.utterances],
            "duration_ticks": self.duration_ticks,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> Contribution:
        return cls(
            contribution_id=d["contribution_id"],
            author_id=d["author_id"],
            anchor_tick=int(d["anchor_tick"]),
            frames=[PoseFrame.from_json_dict(f) for f in d["frames"]],
            audio=base64.b64decode(d["audio"]),
            utterances=[UtteranceEvent.from_json_dict(u)
                        for u in d["utterances"]],
            duration_ticks=int(d["duration_ticks"]),
        )


def contribution_from_events(contribution_id: str, author_id: str,
                             anchor_tick: int, events: Sequence[Event], *,
                             sample_rate: int = 48000,
                             tick_rate: int = 72) -> Contribution:
    """Re-base captured events to local tick 0 and flatten audio chunks
    into one waveform. Duration is rounded up to a whole audio framing
    period so later splices never have to cut a sample in half."""
    if not events:
        raise ValueError("empty contribution")
    frames = [e for e in events if isinstance(e, PoseFrame)]
    chunks = [e for e in events if isinstance(e, AudioChunk)]
    utterances = [e for e in events if isinstance(e, UtteranceEvent)]

    t0 = min(e.start_tick if isinstance(e, UtteranceEvent) else e.tick
             for e in events)
    last = max(e.end_tick if isinstance(e, UtteranceEvent) else e.tick
               for e in events)
    period = audio_frame_period(sample_rate, tick_rate)
    duration = -(-(last - t0 + 1) // period) * period

    total = (cumulative_samples(t0 + duration, sample_rate, tick_rate)
             - cumulative_samples(t0, sample_rate, tick_rate))
    buf = bytearray(total * 2)
    base = cumulative_samples(t0, sample_rate, tick_rate)
    for ch in sorted(chunks, key=lambda c: c.tick):
        if ch.pcm is None:
            continue
        off = (cumulative_samples(ch.tick, sample_rate, tick_rate) - base) * 2
        end = min(off + len(ch.pcm), len(buf))
        buf[off:end] = ch.pcm[:end - off]

    return Contribution(
        contribution_id=contribution_id,
        author_id=author_id,
        anchor_tick=anchor_tick,
        frames=[replace(f, tick=f.tick - t0)
                for f in sorted(frames, key=lambda f: f.tick)],
        audio=bytes(buf),
        utterances=[replace(u, start_tick=u.start_tick - t0,
                            end_tick=u.end_tick - t0)
                    for u in sorted(utterances, key=lambda u: u.start_tick)],
        duration_ticks=duration,
    )


# --------------------------------------------------------------------------
# playback sessions


class PlaybackSession:
    """Single-owner cursor over a finished recording.

    The view is first-person: the viewpoint participant's own avatar is
    left out of what they see (they are it), while everyone's audio and
    speech stay audible. A viewpoint of None spectates the whole scene.
    """

    def __init__(self, recording: Recording, viewpoint_id: str | None):
        self.recording = recording
        self.viewpoint_id = viewpoint_id
        self.cursor_tick = 0
        self.mode = MODE_PAUSED
        self.pending_contributions: list[Contribution] = []
        self._comment_anchor: int | None = None
        self._comment_seq = 0

    @property
    def duration_ticks(self) -> int:
        return self.recording.manifest.duration_ticks

    # -- viewing ------------------------------------------------------------

    def view_at(self, tick: int) -> dict:
        """Everything a renderer needs for one tick; pure in (self, tick)."""
        if not 0 <= tick <= self.duration_ticks:
            raise ValueError(f"tick {tick} outside recording")
        poses = {}
        audio = {}
        for pid in self.recording.participant_ids:
            if pid != self.viewpoint_id:
                pose = self.recording.latest_pose(pid, tick)
                poses[pid] = None if pose is None else pose.to_json_dict()
            pcm = self.recording.audio_pcm(pid, tick, tick + 1)
            if any(pcm):
                audio[pid] = {
                    "pcm": base64.b64encode(pcm).decode("ascii"),
                    "rms": round(pcm_rms(pcm), 6),
                }
        utterances = [
            {**u.to_json_dict(),
             "in_progress": u.start_tick <= tick <= u.end_tick}
            for u in self.recording.utterances_between(tick, tick + 1)
        ]
        return {"tick": tick, "viewpoint": self.viewpoint_id,
                "poses": poses, "audio": audio, "utterances": utterances}

    def view(self) -> dict:
        return self.view_at(self.cursor_tick)

    # -- transport ------------------------------------------------------------

    def seek(self, tick: int) -> tuple[int, bool]:
        """Move the cursor; out-of-range targets clamp and report it."""
        if self.mode == MODE_COMMENTING:
            raise StateError("cannot seek while commenting")
        clamped = not 0 <= tick <= self.duration_ticks
        self.cursor_tick = min(max(tick, 0), self.duration_ticks)
        return self.cursor_tick, clamped

    def play(self) -> None:
        if self.mode == MODE_COMMENTING:
            raise StateError("cannot play while commenting")
        self.mode = MODE_PLAYING

    def pause(self) -> None:
        if self.mode == MODE_COMMENTING:
            raise StateError("cannot pause while commenting")
        self.mode = MODE_PAUSED

    def advance(self, ticks: int = 1) -> int:
        """Drive playback forward (the caller owns the wall clock)."""
        if self.mode == MODE_PLAYING:
            self.cursor_tick = min(self.cursor_tick + max(ticks, 0),
                                   self.duration_ticks)
        return self.cursor_tick

    # -- commenting ------------------------------------------------------------

    def begin_comment(self) -> int:
        if self.mode == MODE_COMMENTING:
            raise StateError("comment already in progress")
        if self.viewpoint_id is None:
            raise StateError("spectator playback cannot comment")
        self._comment_anchor = self.cursor_tick
        self.mode = MODE_COMMENTING
        return self._comment_anchor

    def cancel_comment(self) -> None:
        if self.mode != MODE_COMMENTING:
            raise StateError("no comment in progress")
        self._comment_anchor = None
        self.mode = MODE_PAUSED

    def end_comment(self, events: Sequence[Event]) -> Contribution:
        """Close the capture and queue it for the next iteration. The
        session returns to Paused at the same cursor."""
        if self.mode != MODE_COMMENTING:
            raise StateError("no comment in progress")
        anchor = self._comment_anchor
        assert anchor is not None
        self._comment_seq += 1
        contribution = contribution_from_events(
            f"{self.viewpoint_id}-{anchor}-{self._comment_seq}",
            self.viewpoint_id, anchor, events,
            sample_rate=self.recording.manifest.audio_sample_rate,
            tick_rate=self.recording.manifest.tick_rate)
        self.pending_contributions.append(contribution)
        self._comment_anchor = None
        self.mode = MODE_PAUSED
        return contribution


def open_playback(recording: Recording,
                  viewpoint_id: str | None) -> PlaybackSession:
    if viewpoint_id is not None \
            and viewpoint_id not in recording.participant_ids:
        raise UnknownParticipant(viewpoint_id)
    return PlaybackSession(recording, viewpoint_id)


# --------------------------------------------------------------------------
# listening behaviour during spliced pauses


def synthesize_listening(listener_positions: dict[str,
                                                  tuple[float, float, float]],
                         contribution: Contribution,
                         commenter_position: tuple[float, float, float]
                         ) -> list[PoseFrame]:
    """Frames (local ticks) that turn every recorded avatar toward the
    commenter and nod for the length of the comment, instead of freezing
    on their last recorded frame. The nod tag matches what live stand-ins
    emit while listening, so spliced output is indistinguishable from
    live behaviour."""
    frames = []
    for pid in sorted(listener_positions):
        pos = listener_positions[pid]
        yaw = bearing_deg(pos, commenter_position)
        for tick in range(contribution.duration_ticks):
            frames.append(PoseFrame(tick, pid, pos, yaw,
                                    gesture_tag=GestureTag.NOD,
                                    speaking_hint=False))
    return frames


# --------------------------------------------------------------------------
# splicing contributions into the next iteration


def _placements(contributions: Sequence[Contribution]
                ) -> list[tuple[Contribution, int]]:
    """(contribution, output offset) in splice order: by anchor, then by
    creation order, each shifted by everything inserted before it."""
    ordered = sorted(contributions, key=lambda c: c.anchor_tick)
    placed = []
    grown = 0
    for c in ordered:
        placed.append((c, c.anchor_tick + grown))
        grown += c.duration_ticks
    return placed


def splice(recording: Recording, contributions: Sequence[Contribution], *,
           data_root, meeting: Meeting | None = None,
           listening: bool = True) -> Recording:
    """Insert contributions into a recording, producing iteration k+1.

    Insertion shifts: every source event at tick >= an anchor moves right
    by the durations inserted up to there, so nothing is ever overdubbed
    and the output duration is exactly source + sum of contributions.
    The source recording is not touched.
    """
    man = recording.manifest
    period = audio_frame_period(man.audio_sample_rate, man.tick_rate)
    for c in contributions:
        if c.duration_ticks <= 0 or c.duration_ticks % period:
            raise ValueError(
                f"contribution {c.contribution_id}: duration "
                f"{c.duration_ticks} not a positive multiple of {period}")
        if not 0 <= c.anchor_tick <= man.duration_ticks:
            raise ValueError(
                f"contribution {c.contribution_id}: anchor "
                f"{c.anchor_tick} outside recording")
        if meeting is not None and role_of(meeting, c.author_id,
                                           man.iteration_index) \
                is not Role.ABSENTEE:
            raise ValueError(
                f"contribution author {c.author_id} attended iteration "
                f"{man.iteration_index} live")

    placed = _placements(contributions)
    ordered = [c for c, _ in placed]
    total = sum(c.duration_ticks for c in ordered)

    def shift(tick: int) -> int:
        return sum(c.duration_ticks for c in ordered
                   if c.anchor_tick <= tick)

    roster = sorted(set(recording.participant_ids)
                    | {c.author_id for c in ordered})
    writer = open_writer(
        data_root, man.meeting_id, man.iteration_index + 1, roster,
        tick_rate=man.tick_rate, sample_rate=man.audio_sample_rate,
        parent_iteration=man.iteration_index,
        attendees=man.attendees, standins=man.standins,
        origin_spans=_mapped_spans(man, ordered, placed, shift),
        min_duration_ticks=man.duration_ticks + total)

    for p in recording.poses:
        writer.append(replace(p, tick=p.tick + shift(p.tick)))
    for u in recording.utterances:
        s = shift(u.start_tick)
        writer.append(replace(u, start_tick=u.start_tick + s,
                              end_tick=u.end_tick + s))

    # Source audio moves in anchor-bounded pieces; shifts are whole
    # framing periods, so each piece lands on the same sample pattern.
    bounds = sorted({0, man.duration_ticks,
                     *(c.anchor_tick for c in ordered)})
    for lo, hi in zip(bounds, bounds[1:]):
        for pid in recording.participant_ids:
            pcm = recording.audio_pcm(pid, lo, hi)
            if any(pcm):
                start = cumulative_samples(lo + shift(lo),
                                           man.audio_sample_rate,
                                           man.tick_rate)
                writer.overlay_audio(pid, start, pcm)

    for c, offset in placed:
        for f in c.frames:
            writer.append(replace(f, tick=f.tick + offset))
        for u in c.utterances:
            writer.append(replace(u, start_tick=u.start_tick + offset,
                                  end_tick=u.end_tick + offset))
        if any(c.audio):
            start = cumulative_samples(offset, man.audio_sample_rate,
                                       man.tick_rate)
            writer.overlay_audio(c.author_id, start, c.audio)
        if listening:
            positions = {}
            for pid in recording.participant_ids:
                if pid == c.author_id:
                    continue
                pose = recording.latest_pose(pid, c.anchor_tick)
                positions[pid] = (pose.position if pose is not None
                                  else (0.0, 0.0, 0.0))
            commenter_pos = (c.frames[0].position if c.frames
                             else (0.0, 0.0, 0.0))
            for f in synthesize_listening(positions, c, commenter_pos):
                writer.append(replace(f, tick=f.tick + offset))

    writer.finalize()
    return load_recording(writer.directory)


def _mapped_spans(man, ordered: list[Contribution],
                  placed: list[tuple[Contribution, int]],
                  shift: Callable[[int], int]) -> list[OriginSpan]:
    """Provenance for the spliced output: source spans cut at each anchor
    and shifted, contribution windows labelled with their authors."""
    src = man.origin_spans
    if not src and man.duration_ticks:
        src = [OriginSpan(0, man.duration_ticks, "live", man.iteration_index)]
    out = []
    anchors = sorted({c.anchor_tick for c in ordered})
    for span in src:
        cuts = [a for a in anchors if span.from_tick < a < span.to_tick]
        edges = [span.from_tick, *cuts, span.to_tick]
        for lo, hi in zip(edges, edges[1:]):
            s = shift(lo)
            out.append(replace(span, from_tick=lo + s, to_tick=hi + s))
    for c, offset in placed:
        out.append(OriginSpan(offset, offset + c.duration_ticks,
                              "contribution", man.iteration_index + 1,
                              c.author_id, c.contribution_id))
    out.sort(key=lambda s: (s.from_tick, s.to_tick))
    return out


# --------------------------------------------------------------------------
# abridged review timelines


@dataclass(slots=True)
class FullSegment:
    """A range of the merged timeline replayed untouched."""

    source_iteration: int
    from_tick: int
    to_tick: int

    @property
    def duration_ticks(self) -> int:
        return self.to_tick - self.from_tick

    def to_json_dict(self) -> dict:
        return {"kind": "full", "source_iteration": self.source_iteration,
                "from_tick": self.from_tick, "to_tick": self.to_tick}


@dataclass(slots=True)
class SummarySegment:
    """A stretch the viewer already knows, compressed to spoken-summary
    length. ``contribution_id`` names the comment a summary stands for,
    so a viewer's own contributions are never silently folded away."""

    source_iteration: int
    agenda_item_id: str | None
    text: str
    synthetic_duration_ticks: int
    contribution_id: str | None = None

    @property
    def duration_ticks(self) -> int:
        return self.synthetic_duration_ticks

    def to_json_dict(self) -> dict:
        return {"kind": "summary",
                "source_iteration": self.source_iteration,
                "agenda_item_id": self.agenda_item_id,
                "text": self.text,
                "synthetic_duration_ticks": self.synthetic_duration_ticks,
                "contribution_id": self.contribution_id}


Segment = FullSegment | SummarySegment


def _segment_from_json(d: dict) -> Segment:
    if d["kind"] == "full":
        return FullSegment(int(d["source_iteration"]), int(d["from_tick"]),
                           int(d["to_tick"]))
    return SummarySegment(int(d["source_iteration"]), d.get("agenda_item_id"),
                          d["text"], int(d["synthetic_duration_ticks"]),
                          d.get("contribution_id"))


@dataclass(slots=True)
class AbridgedTimeline:
    viewer_id: str
    segments: list[Segment] = field(default_factory=list)

    @property
    def duration_ticks(self) -> int:
        return sum(s.duration_ticks for s in self.segments)

    def to_json_dict(self) -> dict:
        return {"viewer_id": self.viewer_id,
                "segments": [s.to_json_dict() for s in self.segments]}

    @classmethod
    def from_json_dict(cls, d: dict) -> AbridgedTimeline:
        return cls(d["viewer_id"],
                   [_segment_from_json(s) for s in d["segments"]])

    def save(self, directory) -> Path:
        path = Path(directory) / f"abridged_{self.viewer_id}.json"
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_json_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
        return path


Summarizer = Callable[[Sequence[UtteranceEvent], frozenset], str]


def extractive_summary(utterances: Sequence[UtteranceEvent],
                       standin_ids: frozenset) -> str:
    """Deterministic default: first and last utterance plus any stand-in
    responses in between, joined by " … "."""
    if not utterances:
        return ""
    picks = [utterances[0]]
    picks += [u for u in utterances[1:-1] if u.speaker_id in standin_ids]
    if len(utterances) > 1:
        picks.append(utterances[-1])
    return " … ".join(u.text for u in picks)


def verify_chain(chain: Sequence[Recording]) -> None:
    if not chain:
        raise ValueError("broken parent chain: empty")
    for prev, cur in zip(chain, chain[1:]):
        if cur.manifest.meeting_id != prev.manifest.meeting_id:
            raise ValueError("broken parent chain: meetings differ")
        if cur.manifest.parent_iteration != prev.manifest.iteration_index:
            raise ValueError(
                f"broken parent chain: iteration {cur.manifest.iteration_index}"
                f" does not continue {prev.manifest.iteration_index}")


def abridge(agenda: list[AgendaItem] | Meeting, chain: Sequence[Recording],
            viewer_id: str, summarizer: Summarizer | None = None
            ) -> AbridgedTimeline:
    """Build the viewer's catch-up timeline over a parent-linked chain.

    Walks the final (fully merged) recording's provenance spans in order.
    Spans the viewer attended live or authored themselves — plus
    contributions merged in no later than their last live attendance —
    become Summary segments, one per agenda item actually discussed.
    Everything else stays a Full segment: an untouched, bit-identical
    range of the merged timeline.
    """
    if isinstance(agenda, Meeting):
        agenda = agenda.agenda
    verify_chain(chain)
    summarize = summarizer or extractive_summary

    final = chain[-1]
    live_attendees = {r.manifest.iteration_index: set(r.manifest.attendees)
                      for r in chain if r.manifest.parent_iteration is None}
    last_live = max((i for i, who in live_attendees.items()
                     if viewer_id in who), default=None)
    standins = frozenset(final.manifest.standins)

    spans = sorted(final.manifest.origin_spans, key=lambda s: s.from_tick)
    segments: list[Segment] = []
    for span in spans:
        if span.kind == "live":
            seen = viewer_id in live_attendees.get(span.iteration, ())
        else:
            seen = span.author_id == viewer_id or (
                last_live is not None and span.iteration <= last_live)
        if not seen:
            segments.append(FullSegment(span.iteration, span.from_tick,
                                        span.to_tick))
            continue

        inside = [u for u in final.utterances
                  if span.from_tick <= u.start_tick < span.to_tick]
        span_len = span.to_tick - span.from_tick
        if span.kind == "contribution":
            text = summarize(inside, standins) \
                or f"contribution {span.contribution_id}"
            item = classify(" ".join(u.text for u in inside), agenda)
            segments.append(SummarySegment(
                span.iteration, item.item_id, text,
                min(max(speech_duration_ticks(text), 1), span_len),
                contribution_id=span.contribution_id))
            continue

        for item_id, cluster, extent in _clusters(inside, agenda, span):
            text = summarize(cluster, standins)
            segments.append(SummarySegment(
                span.iteration, item_id, text,
                min(max(speech_duration_ticks(text), 1), extent)))
    return AbridgedTimeline(viewer_id, segments)


def _clusters(utterances: list[UtteranceEvent], agenda: list[AgendaItem],
              span: OriginSpan) -> list[tuple[str | None,
                                              list[UtteranceEvent], int]]:
    """Group a span's utterances into runs per agenda item. Talk that
    matches no item merges into the nearest preceding run. Extents
    partition the span, so capped summary durations can never exceed it."""
    runs: list[tuple[str | None, list[UtteranceEvent]]] = []
    for u in utterances:
        item = classify(u.text, agenda).item_id
        if runs and (item is None or runs[-1][0] == item):
            runs[-1][1].append(u)
        else:
            runs.append((item, [u]))

    out = []
    for i, (item_id, members) in enumerate(runs):
        start = span.from_tick if i == 0 else members[0].start_tick
        end = (runs[i + 1][1][0].start_tick if i + 1 < len(runs)
               else span.to_tick)
        out.append((item_id, members, max(end - start, 1)))
    return out
