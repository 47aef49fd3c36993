"""HTTP facade: entities, playback pages, comments, splicing, abridging,
and live sessions over WebSockets."""

import json
import random
import wave
from array import array
from io import BytesIO

import pytest
from fastapi.testclient import TestClient

from standin import store, wire
from standin.api import create_app
from standin.model import (
    AudioChunk,
    PoseFrame,
    UtteranceEvent,
    pcm_rms,
    samples_for_tick,
)

from conftest import make_config, make_meeting, make_tone_pcm

SEATS = {"A": (0.0, 0.0, 2.0), "B": (2.0, 0.0, 0.0), "C": (-2.0, 0.0, 0.0)}


def wav_bytes(n_samples: int, rate: int = 48000) -> bytes:
    buf = BytesIO()
    with wave.open(buf, "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(rate)
        w.writeframes(make_tone_pcm(n_samples, sample_rate=rate))
    return buf.getvalue()


def seed_recording(data_root, *, duration=400):
    """A finished iteration 1 (A and B live, C stood in) plus the meeting
    and stand-in config on file, the way a real deployment would have
    them."""
    entities = store.EntityStore(data_root)
    entities.put_meeting(make_meeting())
    entities.put_standin_config("weekend", make_config())

    writer = store.open_writer(data_root, "weekend", 1, ["A", "B", "C"],
                               attendees=["A", "B"], standins=["C"],
                               min_duration_ticks=duration)
    writer.append(PoseFrame(0, "A", SEATS["A"], 180.0))
    writer.append(PoseFrame(0, "B", SEATS["B"], 270.0))
    writer.append(PoseFrame(0, "C", SEATS["C"], 90.0))
    rng = random.Random(4)
    for t in range(10, 16):
        n = samples_for_tick(t)
        pcm = array("h", (rng.randrange(-3000, 3000)
                          for _ in range(n))).tobytes()
        writer.append(AudioChunk(t, "A", pcm_rms(pcm), pcm))
    writer.append(UtteranceEvent(10, 150, "A",
                                 "should we go to the beach or the park"))
    writer.finalize()
    return store.load(writer.directory)


@pytest.fixture()
def client(tmp_path):
    with TestClient(create_app(tmp_path)) as c:
        c.data_root = tmp_path
        yield c


def post_comment(client, rec_id, meta, wav=None):
    files = {"audio": ("comment.wav", wav, "audio/wav")} if wav else None
    return client.post(f"/v1/recordings/{rec_id}/comments",
                       data={"meta": json.dumps(meta)}, files=files)


# -- meetings and configs ------------------------------------------------------


def test_meeting_roundtrip_and_listing(client):
    body = make_meeting().to_json_dict()
    r = client.post("/v1/meetings", json=body)
    assert r.status_code == 201 and r.json() == {"meeting_id": "weekend"}

    listing = client.get("/v1/meetings").json()["meetings"]
    assert [m["meeting_id"] for m in listing] == ["weekend"]
    assert listing[0]["title"] == "Weekend planning"
    assert listing[0]["agenda"] == ["place", "activity", "food"]

    assert client.get("/v1/meetings/weekend").json() == body

    missing = client.get("/v1/meetings/nope")
    assert missing.status_code == 404
    assert set(missing.json()) == {"code", "message"}
    assert missing.json()["code"] == "not-found"


def test_meeting_validation_failures(client):
    bad = make_meeting(attendee_sets=[["A", "Z"]]).to_json_dict()
    r = client.post("/v1/meetings", json=bad)
    assert r.status_code == 422 and r.json()["code"] == "validation"

    r = client.post("/v1/meetings", json={"nope": 1})
    assert r.status_code == 422
    assert "malformed meeting" in r.json()["message"]

    r = client.post("/v1/meetings", content=b"not json",
                    headers={"content-type": "application/json"})
    assert r.status_code == 400 and r.json()["code"] == "bad-request"


def test_standin_config_endpoints(client):
    client.post("/v1/meetings", json=make_meeting().to_json_dict())
    cfg = make_config().to_json_dict()

    r = client.put("/v1/meetings/weekend/standin/C", json=cfg)
    assert r.status_code == 200 and r.json() == cfg
    assert client.get("/v1/meetings/weekend/standin/C").json() == cfg

    r = client.put("/v1/meetings/weekend/standin/B", json=cfg)
    assert r.status_code == 422
    assert "path says B" in r.json()["message"]

    assert client.get("/v1/meetings/weekend/standin/A").status_code == 404
    assert client.put("/v1/meetings/ghost/standin/C",
                      json=cfg).status_code == 404


# -- recordings and views ------------------------------------------------------


def test_recording_listing_manifest_and_restart(client):
    seed_recording(client.data_root)
    recs = client.get("/v1/recordings").json()["recordings"]
    assert [r["recording_id"] for r in recs] == ["weekend__1"]
    assert recs[0]["duration_ticks"] == 400
    assert recs[0]["standins"] == ["C"]

    man = client.get("/v1/recordings/weekend__1/manifest").json()
    assert man["recording_id"] == "weekend__1"
    assert man["iteration_index"] == 1 and man["parent_iteration"] is None

    assert client.get("/v1/recordings/nope__1/manifest").status_code == 404

    # Same data root, fresh process: identical answers.
    with TestClient(create_app(client.data_root)) as second:
        assert second.get("/v1/recordings").json()["recordings"] == recs


def test_view_paging(client):
    seed_recording(client.data_root)
    page = client.get("/v1/recordings/weekend__1/view",
                      params={"from": 0, "to": 5}).json()
    assert page["from"] == 0 and page["to"] == 5
    assert page["duration_ticks"] == 400
    assert [v["tick"] for v in page["views"]] == [0, 1, 2, 3, 4]
    assert set(page["views"][0]["poses"]) == {"A", "B", "C"}

    # Stand-in viewpoint: own avatar hidden, page clamped to duration.
    page = client.get("/v1/recordings/weekend__1/view",
                      params={"viewpoint": "C", "from": 398,
                              "to": 999}).json()
    assert page["to"] == 400 and len(page["views"]) == 2
    assert set(page["views"][0]["poses"]) == {"A", "B"}

    r = client.get("/v1/recordings/weekend__1/view",
                   params={"viewpoint": "nobody"})
    assert r.status_code == 422

    r = client.get("/v1/recordings/weekend__1/view",
                   params={"from": 10, "to": 3})
    assert r.status_code == 422


# -- comments -------------------------------------------------------------------


def test_audio_comment_echoes_duration(client):
    seed_recording(client.data_root)
    r = post_comment(client, "weekend__1",
                     {"author_id": "C", "anchor_tick": 300},
                     wav=wav_bytes(3 * 48000))
    assert r.status_code == 201
    body = r.json()
    assert body["duration_ticks"] == 216  # three seconds of audio
    assert body["author_id"] == "C" and body["anchor_tick"] == 300
    assert body["contribution_id"] == "C-300-1"

    pending = client.get("/v1/recordings/weekend__1/comments").json()
    assert [c["contribution_id"] for c in pending["comments"]] == ["C-300-1"]


def test_text_comment_gets_placeholder_speech(client):
    seed_recording(client.data_root)
    r = post_comment(client, "weekend__1",
                     {"author_id": "C", "anchor_tick": 120,
                      "text": "how about pizza for lunch"})
    assert r.status_code == 201
    # 5 words at the engine speaking rate -> 144 ticks.
    assert r.json()["duration_ticks"] == 144
    assert r.json()["text"] == "how about pizza for lunch"


def test_comment_rejections(client):
    seed_recording(client.data_root)
    meta = {"author_id": "C", "anchor_tick": 10}

    r = post_comment(client, "weekend__1", meta,
                     wav=wav_bytes(4410, rate=44100))
    assert r.status_code == 422 and "44100" in r.json()["message"]

    r = post_comment(client, "weekend__1", meta)
    assert r.status_code == 422
    assert "audio, text" in r.json()["message"]

    r = post_comment(client, "weekend__1",
                     {"author_id": "C", "anchor_tick": 999},
                     wav=wav_bytes(48000))
    assert r.status_code == 422 and "outside" in r.json()["message"]

    r = post_comment(client, "weekend__1", {"anchor_tick": 10},
                     wav=wav_bytes(48000))
    assert r.status_code == 422

    r = post_comment(client, "nope__1", meta, wav=wav_bytes(48000))
    assert r.status_code == 404


# -- splicing -------------------------------------------------------------------


def test_splice_consumes_pending_comments(client):
    seed_recording(client.data_root)
    post_comment(client, "weekend__1",
                 {"author_id": "C", "anchor_tick": 100},
                 wav=wav_bytes(3 * 48000))
    post_comment(client, "weekend__1",
                 {"author_id": "C", "anchor_tick": 50,
                  "text": "how about pizza for lunch"})

    r = client.post("/v1/recordings/weekend__1/splice")
    assert r.status_code == 201
    body = r.json()
    assert body["recording_id"] == "weekend__2"
    man = body["manifest"]
    assert man["duration_ticks"] == 400 + 216 + 144
    assert man["parent_iteration"] == 1
    authors = {s["author_id"] for s in man["origin_spans"]
               if s["kind"] == "contribution"}
    assert authors == {"C"}

    recs = client.get("/v1/recordings").json()["recordings"]
    assert [r["recording_id"] for r in recs] == ["weekend__1", "weekend__2"]
    pending = client.get("/v1/recordings/weekend__1/comments").json()
    assert pending["comments"] == []

    again = client.post("/v1/recordings/weekend__1/splice")
    assert again.status_code == 422
    assert "no pending comments" in again.json()["message"]


def test_splice_subset_and_unknown_ids(client):
    seed_recording(client.data_root)
    first = post_comment(client, "weekend__1",
                         {"author_id": "C", "anchor_tick": 30,
                          "text": "one"}).json()
    post_comment(client, "weekend__1",
                 {"author_id": "C", "anchor_tick": 60, "text": "two"})

    r = client.post("/v1/recordings/weekend__1/splice",
                    json={"comment_ids": [first["contribution_id"]]})
    assert r.status_code == 201
    left = client.get("/v1/recordings/weekend__1/comments").json()
    assert [c["text"] for c in left["comments"]] == ["two"]

    r = client.post("/v1/recordings/weekend__1/splice",
                    json={"comment_ids": ["ghost"]})
    assert r.status_code == 404


def test_splice_rejects_live_attendee_author(client):
    seed_recording(client.data_root)
    post_comment(client, "weekend__1",
                 {"author_id": "A", "anchor_tick": 10, "text": "me again"})
    r = client.post("/v1/recordings/weekend__1/splice")
    assert r.status_code == 422
    assert "attended iteration 1 live" in r.json()["message"]


# -- abridging ------------------------------------------------------------------


def test_abridge_over_parent_chain(client):
    seed_recording(client.data_root)
    post_comment(client, "weekend__1",
                 {"author_id": "C", "anchor_tick": 200,
                  "text": "how about pizza for lunch"})
    client.post("/v1/recordings/weekend__1/splice")

    r = client.post("/v1/recordings/weekend__2/abridge",
                    params={"viewer": "B"})
    assert r.status_code == 200
    body = r.json()
    assert body["viewer_id"] == "B"
    kinds = [s["kind"] for s in body["segments"]]
    # B saw iteration 1 live (summarized) but not C's later comment.
    assert "summary" in kinds and "full" in kinds
    total = sum(s["to_tick"] - s["from_tick"] for s in body["segments"]
                if s["kind"] == "full")
    assert total < 544
    assert (client.data_root / "recordings" / "weekend" / "2"
            / "abridged_B.json").exists()

    # The commenter already knows their own contribution.
    r = client.post("/v1/recordings/weekend__2/abridge",
                    params={"viewer": "C"})
    summaries = [s for s in r.json()["segments"] if s["kind"] == "summary"]
    assert any(s.get("contribution_id") for s in summaries)


def test_abridge_requires_stored_meeting(client):
    writer = store.open_writer(client.data_root, "ghost", 1, ["A"],
                               attendees=["A"], min_duration_ticks=60)
    writer.append(PoseFrame(0, "A", SEATS["A"], 0.0))
    writer.finalize()
    r = client.post("/v1/recordings/ghost__1/abridge",
                    params={"viewer": "A"})
    assert r.status_code == 422
    assert "entity store" in r.json()["message"]


# -- live sessions ----------------------------------------------------------------


def session_body(**over):
    body = {"meeting_id": "weekend", "iteration_index": 1, "seed": 5}
    body.update(over)
    return body


def test_session_lifecycle_over_http(client):
    seed_store = store.EntityStore(client.data_root)
    seed_store.put_meeting(make_meeting())
    seed_store.put_standin_config("weekend", make_config())

    r = client.post("/v1/sessions", json=session_body())
    assert r.status_code == 201
    sid = r.json()["session_id"]
    assert sid == "weekend-1" and r.json()["standins"] == ["C"]

    assert client.post("/v1/sessions",
                       json=session_body()).status_code == 409

    r = client.post(f"/v1/sessions/{sid}/tick", params={"count": 10})
    assert r.json()["current_tick"] == 10

    listing = client.get("/v1/sessions").json()["sessions"]
    assert listing[0]["current_tick"] == 10 and not listing[0]["closed"]

    r = client.post(f"/v1/sessions/{sid}/close")
    assert r.status_code == 200
    assert r.json()["duration_ticks"] == 10
    assert r.json()["recording_id"].startswith("weekend__")

    assert client.post(f"/v1/sessions/{sid}/tick").status_code == 409
    # A closed session's id may be reused.
    assert client.post("/v1/sessions",
                       json=session_body()).status_code == 201


def test_session_websocket_relay(client):
    seed_store = store.EntityStore(client.data_root)
    seed_store.put_meeting(make_meeting())
    seed_store.put_standin_config("weekend", make_config())
    client.post("/v1/sessions", json=session_body())

    def send(ws, msg_type, body):
        ws.send_text(wire.encode(wire.make_message(msg_type, body)).decode())

    def recv(ws):
        return wire.decode(ws.receive_text())

    with client.websocket_connect("/v1/sessions/weekend-1") as ws_a:
        send(ws_a, "hello", {"participant_id": "A"})
        kind, welcome = recv(ws_a)
        assert kind == "welcome" and welcome["participant_id"] == "A"
        assert welcome["standins"] == ["C"]

        # Absentees and strangers are told why they cannot join.
        with client.websocket_connect("/v1/sessions/weekend-1") as ws_c:
            send(ws_c, "hello", {"participant_id": "C"})
            kind, err = recv(ws_c)
            assert kind == "error" and err["code"] == "role"
            send(ws_c, "hello", {"participant_id": "Z"})
            kind, err = recv(ws_c)
            assert kind == "error" and err["code"] == "bad_hello"

        with client.websocket_connect("/v1/sessions/weekend-1") as ws_b:
            send(ws_b, "hello", {"participant_id": "B"})
            kind, _ = recv(ws_b)
            assert kind == "welcome"
            kind, update = recv(ws_a)
            assert kind == "roster_update"
            assert update["roster"] == ["A", "B", "C"]

            send(ws_a, "pose", PoseFrame(0, "A", SEATS["A"],
                                         180.0).to_json_dict())
            kind, pose = recv(ws_b)
            assert (kind, pose["participant_id"]) == ("pose", "A")

            client.post("/v1/sessions/weekend-1/tick")
            kind, pose = recv(ws_b)
            assert (kind, pose["participant_id"]) == ("pose", "C")
            kind, pose = recv(ws_a)
            assert (kind, pose["participant_id"]) == ("pose", "C")

            send(ws_b, "bye", {})

    with client.websocket_connect("/v1/sessions/ghost") as ws:
        kind, err = recv(ws)
        assert kind == "error" and err["code"] == "not-found"
