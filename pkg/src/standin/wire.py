"""Length-delimited JSON wire protocol shared by session clients and servers.

Every message is a JSON object ``{"v": 1, "type": <str>, "body": {...}}``
encoded as UTF-8. Over byte streams (TCP) each message is preceded by a
4-byte big-endian length; over WebSockets the JSON text travels unframed
since the socket already delimits messages. PCM payloads ride inside audio
bodies as base64.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .model import AudioChunk, Event, PoseFrame, UtteranceEvent

PROTOCOL_VERSION = 1
MAX_FRAME_BYTES = 4 * 1024 * 1024

MESSAGE_TYPES = frozenset({
    "hello", "welcome", "roster_update", "pose", "audio", "utterance",
    "standin_action", "error", "bye",
})

_EVENT_TYPES = {PoseFrame: "pose", AudioChunk: "audio",
                UtteranceEvent: "utterance"}


class WireError(ValueError):
    pass


def make_message(msg_type: str, body: dict) -> dict:
    if msg_type not in MESSAGE_TYPES:
        raise WireError(f"unknown message type: {msg_type}")
    return {"v": PROTOCOL_VERSION, "type": msg_type, "body": body}


def event_message(event: Event) -> dict:
    return make_message(_EVENT_TYPES[type(event)], event.to_json_dict())


def event_from_message(msg_type: str, body: dict) -> Event:
    if msg_type == "pose":
        return PoseFrame.from_json_dict(body)
    if msg_type == "audio":
        return AudioChunk.from_json_dict(body)
    if msg_type == "utterance":
        return UtteranceEvent.from_json_dict(body)
    raise WireError(f"not an event message: {msg_type}")


def encode(msg: dict) -> bytes:
    """Message dict -> UTF-8 JSON (no frame header)."""
    return json.dumps(msg, separators=(",", ":"), sort_keys=True).encode()


def decode(data: bytes | str) -> tuple[str, dict]:
    """UTF-8 JSON -> (type, body); validates envelope shape."""
    try:
        obj = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise WireError(f"malformed JSON: {e}") from e
    if not isinstance(obj, dict):
        raise WireError("message is not an object")
    if obj.get("v") != PROTOCOL_VERSION:
        raise WireError(f"unsupported protocol version: {obj.get('v')!r}")
    msg_type = obj.get("type")
    if msg_type not in MESSAGE_TYPES:
        raise WireError(f"unknown message type: {msg_type!r}")
    body = obj.get("body")
    if not isinstance(body, dict):
        raise WireError("body is not an object")
    return msg_type, body


def frame(payload: bytes) -> bytes:
    if len(payload) > MAX_FRAME_BYTES:
        raise WireError("frame too large")
    return len(payload).to_bytes(4, "big") + payload


def encode_framed(msg: dict) -> bytes:
    return frame(encode(msg))


@dataclass
class StreamDecoder:
    """Incremental decoder for the length-prefixed stream framing."""

    _buf: bytearray = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[tuple[str, dict]]:
        self._buf.extend(data)
        out: list[tuple[str, dict]] = []
        while True:
            if len(self._buf) < 4:
                return out
            n = int.from_bytes(self._buf[:4], "big")
            if n > MAX_FRAME_BYTES:
                raise WireError("frame too large")
            if len(self._buf) < 4 + n:
                return out
            payload = bytes(self._buf[4:4 + n])
            del self._buf[:4 + n]
            out.append(decode(payload))
