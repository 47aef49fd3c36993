"""Independent reference for splice semantics.

Rebuilds the spliced timeline the slow way: materialize an output-tick ->
origin map one tick at a time, and build audio by literal concatenation of
source sample ranges and contribution waveforms. No shift arithmetic, so
it cross-checks the production implementation rather than mirroring it.
"""

from dataclasses import replace

from standin.model import cumulative_samples, event_sort_key


def timeline_map(src_duration, contributions):
    """List of ("src", src_tick) / (contribution_id, local_tick) entries,
    one per output tick, in output order."""
    ordered = sorted(contributions, key=lambda c: c.anchor_tick)
    timeline = []
    src_tick = 0
    for c in ordered:
        while src_tick < c.anchor_tick:
            timeline.append(("src", src_tick))
            src_tick += 1
        for local in range(c.duration_ticks):
            timeline.append((c.contribution_id, local))
    while src_tick < src_duration:
        timeline.append(("src", src_tick))
        src_tick += 1
    return timeline


def expected_events(recording, contributions):
    """Every pose and utterance the spliced output must contain (ignoring
    synthesized listening frames), in track order."""
    timeline = timeline_map(recording.manifest.duration_ticks, contributions)
    src_at = {entry[1]: i for i, entry in enumerate(timeline)
              if entry[0] == "src"}
    contrib_at = {entry: i for i, entry in enumerate(timeline)
                  if entry[0] != "src"}

    events = []
    for p in recording.poses:
        events.append(replace(p, tick=src_at[p.tick]))
    for u in recording.utterances:
        start = src_at[u.start_tick]
        events.append(replace(u, start_tick=start,
                              end_tick=start + (u.end_tick - u.start_tick)))
    for c in contributions:
        for f in c.frames:
            events.append(replace(f, tick=contrib_at[(c.contribution_id,
                                                      f.tick)]))
        for u in c.utterances:
            start = contrib_at[(c.contribution_id, u.start_tick)]
            events.append(replace(
                u, start_tick=start,
                end_tick=start + (u.end_tick - u.start_tick)))
    events.sort(key=event_sort_key)
    return events


def expected_audio(recording, contributions, participant_id):
    """The participant's output waveform, built by concatenating pieces
    in timeline order."""
    man = recording.manifest
    ordered = sorted(contributions, key=lambda c: c.anchor_tick)

    def src_bytes(lo, hi):
        return recording.audio_pcm(participant_id, lo, hi)

    out = bytearray()
    src_tick = 0
    for c in ordered:
        out += src_bytes(src_tick, c.anchor_tick)
        if c.author_id == participant_id:
            out += c.audio
        else:
            out += bytes(len(c.audio))
        src_tick = c.anchor_tick
    out += src_bytes(src_tick, man.duration_ticks)
    return bytes(out)
