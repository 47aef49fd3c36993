"""Session behaviour: membership, relay, the tick loop, and recording."""

import pytest

from standin import wire
from standin.model import (
    PoseFrame,
    StandInConfig,
    ResponsePlan,
    UtteranceEvent,
)
from standin.server import (
    JoinError,
    ProtocolError,
    Session,
    SetupError,
    seat_positions,
)
from standin import store

from conftest import make_meeting, make_config


def make_session(tmp_path, *, configs=None, seed=7, **kw):
    meeting = make_meeting()
    if configs is None:
        configs = [make_config()]
    # Iteration 1 is attended by A and B; C is the absentee.
    return Session(meeting, 1, configs, seed, data_root=tmp_path, **kw)


def drained(session, pid):
    return [wire.decode(b) for b in session.clients[pid].drain()]


# -- setup -------------------------------------------------------------------


def test_create_spawns_standin_idle(tmp_path):
    session = make_session(tmp_path)
    assert sorted(session.standins) == ["C"]
    assert session.current_tick == 0
    agent = session.standins["C"]
    assert agent.state.value == "looking_around"


def test_create_with_no_standins(tmp_path):
    session = make_session(tmp_path, configs=[])
    assert session.tick() == []
    manifest = session.close()
    assert manifest.duration_ticks == 0


def test_create_rejects_config_for_live_attendee(tmp_path):
    cfg = StandInConfig(
        absentee_id="A",
        responses={},
        fallback=ResponsePlan.for_text("Noted, thanks."),
    )
    with pytest.raises(SetupError, match="attend"):
        make_session(tmp_path, configs=[cfg])


def test_seating_is_deterministic_and_faces_centre():
    seats = seat_positions(["B", "A", "C"])
    assert seats == seat_positions(["A", "B", "C"])
    pos, yaw = seats["A"]
    assert pos == (0.0, 0.0, 2.0)
    assert yaw == 180.0
    for pid, (p, _) in seats.items():
        assert (p[0] ** 2 + p[2] ** 2) ** 0.5 == pytest.approx(2.0)


# -- membership ----------------------------------------------------------------


def test_join_welcome_and_roster_update(tmp_path):
    session = make_session(tmp_path)
    welcome_a = session.join("A", "Ada")
    assert welcome_a["tick_rate"] == 72
    assert welcome_a["current_tick"] == 0
    assert welcome_a["roster"] == ["A", "C"]
    assert welcome_a["standins"] == ["C"]

    session.join("B", "Ben")
    messages = drained(session, "A")
    assert ("roster_update", {"roster": ["A", "B", "C"],
                              "standins": ["C"]}) in messages


def test_join_twice_rejected(tmp_path):
    session = make_session(tmp_path)
    session.join("A")
    with pytest.raises(JoinError) as exc:
        session.join("A")
    assert exc.value.code == "already_joined"


def test_absentee_cannot_join_live(tmp_path):
    session = make_session(tmp_path)
    with pytest.raises(JoinError) as exc:
        session.join("C")
    assert exc.value.code == "role"
    assert "iteration 1" in str(exc.value)


def test_leave_broadcasts_new_roster(tmp_path):
    session = make_session(tmp_path)
    session.join("A")
    session.join("B")
    drained(session, "B")
    session.leave("A")
    assert ("roster_update", {"roster": ["B", "C"], "standins": ["C"]}) \
        in drained(session, "B")


# -- ingest ---------------------------------------------------------------------


def test_unknown_sender_is_protocol_error(tmp_path):
    session = make_session(tmp_path)
    with pytest.raises(ProtocolError, match="unknown sender"):
        session.ingest("A", PoseFrame(0, "A", (0, 0, 0), 0.0))


def test_sending_for_someone_else_is_protocol_error(tmp_path):
    session = make_session(tmp_path)
    session.join("A")
    with pytest.raises(ProtocolError, match="may not send"):
        session.ingest("A", PoseFrame(0, "B", (0, 0, 0), 0.0))


def test_relay_reaches_every_other_client_exactly_once(tmp_path):
    session = make_session(tmp_path, configs=[])
    session.join("A")
    session.join("B")
    drained(session, "A"), drained(session, "B")

    frame = PoseFrame(0, "A", (1.0, 0.0, 2.0), 90.0)
    session.ingest("A", frame)

    got = drained(session, "B")
    assert got == [("pose", frame.to_json_dict())]
    assert drained(session, "A") == []


def test_ingest_window_bounds(tmp_path):
    session = make_session(tmp_path, configs=[])
    session.join("A")
    for _ in range(100):
        session.tick()
    assert session.current_tick == 100
    drained(session, "A")

    session.ingest("A", PoseFrame(82, "A", (0, 0, 0), 0.0))   # oldest ok
    session.ingest("A", PoseFrame(101, "A", (0, 0, 0), 0.0))  # newest ok
    assert session.drop_counters == {}

    session.ingest("A", PoseFrame(81, "A", (0, 0, 0), 0.0))   # too late
    session.ingest("A", PoseFrame(102, "A", (0, 0, 0), 0.0))  # too early
    assert session.drop_counters == {"out_of_window": 2}
    errors = [m for m in drained(session, "A") if m[0] == "error"]
    assert len(errors) == 2
    assert all(m[1]["code"] == "out_of_window" for m in errors)

    manifest = session.close()
    recording = store.load(session.recorder.directory)
    ticks = [p.tick for p in recording.poses_between(0, 200)
             if p.participant_id == "A"]
    assert ticks == [82, 101]
    assert manifest.duration_ticks == 102


def test_late_utterance_judged_by_end_tick(tmp_path):
    session = make_session(tmp_path, configs=[])
    session.join("A")
    for _ in range(240):
        session.tick()

    # Speech that ran 0..230 and arrived just after it finished: fine,
    # even though tick 0 itself is far outside the window by now.
    session.ingest("A", UtteranceEvent(0, 230, "A", "a long recap"))
    assert session.drop_counters == {}

    session.ingest("A", UtteranceEvent(0, 200, "A", "too stale"))
    assert session.drop_counters == {"out_of_window": 1}


def test_invalid_event_dropped_and_counted(tmp_path):
    session = make_session(tmp_path, configs=[])
    session.join("A")
    session.ingest("A", PoseFrame(0, "A", (0, 0, 0), 400.0))
    assert session.drop_counters == {"pose:yaw-out-of-range": 1}
    session.close()
    recording = store.load(session.recorder.directory)
    assert recording.poses_between(0, 10) == []


# -- the tick loop ----------------------------------------------------------------


def test_72_ticks_yield_72_standin_pose_frames(tmp_path):
    session = make_session(tmp_path)
    for _ in range(72):
        session.tick()
    assert session.current_tick == 72
    session.close()
    recording = store.load(session.recorder.directory)
    poses = [p for p in recording.poses_between(0, 72)
             if p.participant_id == "C"]
    assert len(poses) == 72
    assert [p.tick for p in poses] == list(range(72))


def test_standin_answers_food_question_end_to_end(tmp_path):
    session = make_session(tmp_path)
    session.join("A", "Ada")
    session.join("B", "Ben")
    for _ in range(173):
        session.tick()

    # 6 words -> 173 ticks, so the span 0..172 has just finished.
    question = UtteranceEvent(0, 172, "A", "Hey Lee, should we eat pizza?")
    session.ingest("A", question)
    drained(session, "B")

    for _ in range(130):
        session.tick()
    manifest = session.close()

    recording = store.load(session.recorder.directory)
    answers = recording.utterances_between(0, manifest.duration_ticks)
    answers = [u for u in answers if u.speaker_id == "C"]
    assert len(answers) == 1
    reply = answers[0]
    assert reply.text == "I prefer beef noodles"
    assert reply.start_tick == 173
    assert reply.end_tick == 173 + 116 - 1

    # The reply's audio covers exactly the nominal span, tick by tick.
    pcm = recording.audio_pcm("C", reply.start_tick, reply.end_tick + 1)
    assert len(pcm) // 2 == 77334  # cumulative samples over 116 ticks
    assert any(b != 0 for b in pcm)

    # Speech carries the configured pointing gesture while it lasts.
    during = [p for p in recording.poses_between(reply.start_tick,
                                                  reply.end_tick + 1)
              if p.participant_id == "C"]
    assert all(p.gesture_tag.value == "point" for p in during)
    assert all(p.speaking_hint for p in during)

    # Ben heard the reply over the wire as well.
    got = [m for m in drained(session, "B")]
    texts = [b["text"] for t, b in got if t == "utterance"]
    assert texts == ["I prefer beef noodles"]
    assert any(t == "standin_action" for t, _ in got)
    audio_ticks = [b["tick"] for t, b in got
                   if t == "audio" and b["participant_id"] == "C"]
    assert audio_ticks == list(range(173, 173 + 116))


def test_sessions_are_deterministic(tmp_path):
    manifests = []
    for run in ("one", "two"):
        session = make_session(tmp_path / run, seed=99)
        session.join("A")
        for _ in range(173):
            session.tick()
        session.ingest(
            "A", UtteranceEvent(0, 172, "A", "Hey Lee, should we eat pizza?"))
        for _ in range(130):
            session.tick()
        manifests.append(session.close())

    first, second = manifests
    assert first.duration_ticks == second.duration_ticks
    checks = lambda m: {(t.kind.value, t.participant_id): t.sha256
                        for t in m.tracks}
    assert checks(first) == checks(second)


def test_close_is_idempotent_and_says_bye(tmp_path):
    session = make_session(tmp_path)
    session.join("A")
    session.tick()
    drained(session, "A")

    first = session.close()
    byes = [m for m in drained(session, "A") if m[0] == "bye"]
    assert byes == [("bye", {"participant_id": "",
                             "reason": "session_closed"})]

    assert session.close() is first
    assert session.tick() == []
    session.ingest("A", PoseFrame(1, "A", (0, 0, 0), 0.0))  # silently ignored
    assert session.drop_counters == {}
