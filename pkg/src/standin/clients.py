"""Optional HTTP clients for speech-to-text, language-model, and
text-to-speech services.

Every deployment concern stays here: endpoints, auth, deadlines. The agent
only sees three duck-typed methods (``transcribe``, ``complete``,
``synthesize``) and treats any ``ClientError`` as a cue to degrade to its
offline behaviour, so the rest of the engine runs with no network at all.
"""

from __future__ import annotations

from dataclasses import dataclass

import httpx

DEFAULT_DEADLINE_MS = 2000


class ClientError(RuntimeError):
    pass


@dataclass(slots=True)
class ClientConfig:
    endpoint: str
    api_key: str | None = None
    deadline_ms: int = DEFAULT_DEADLINE_MS

    def headers(self) -> dict[str, str]:
        return {"authorization": f"Bearer {self.api_key}"} if self.api_key else {}

    @property
    def timeout_s(self) -> float:
        return self.deadline_ms / 1000.0


class SttClient:
    """POST a WAV body, get {"transcript": str, "words": [{w, start_ms, end_ms}]}."""

    def __init__(self, config: ClientConfig):
        self.config = config

    def transcribe(self, wav_bytes: bytes) -> dict:
        try:
            r = httpx.post(self.config.endpoint, content=wav_bytes,
                           headers={"content-type": "audio/wav",
                                    **self.config.headers()},
                           timeout=self.config.timeout_s)
            r.raise_for_status()
            out = r.json()
        except Exception as e:  # timeouts, transport, bad JSON, HTTP errors
            raise ClientError(f"stt: {e}") from e
        if "transcript" not in out:
            raise ClientError("stt: response missing transcript")
        return out


class LlmClient:
    """POST {"system": str, "messages": [...]}, get {"text": str}."""

    def __init__(self, config: ClientConfig):
        self.config = config

    def complete(self, system: str, messages: list[dict]) -> str:
        try:
            r = httpx.post(self.config.endpoint,
                           json={"system": system, "messages": messages},
                           headers=self.config.headers(),
                           timeout=self.config.timeout_s)
            r.raise_for_status()
            out = r.json()
        except Exception as e:
            raise ClientError(f"llm: {e}") from e
        text = out.get("text")
        if not isinstance(text, str) or not text.strip():
            raise ClientError("llm: response missing text")
        return text


class TtsClient:
    """POST {"text": str, "voice_ref": str|null}, get WAV bytes back."""

    def __init__(self, config: ClientConfig):
        self.config = config

    def synthesize(self, text: str, voice_ref: str | None) -> bytes:
        try:
            r = httpx.post(self.config.endpoint,
                           json={"text": text, "voice_ref": voice_ref},
                           headers=self.config.headers(),
                           timeout=self.config.timeout_s)
            r.raise_for_status()
        except Exception as e:
            raise ClientError(f"tts: {e}") from e
        return r.content
