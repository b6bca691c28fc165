"""LLM and translation clients with record/replay fixtures.

Fixtures are JSONL rows {digest, prompt, completion, endpoint} where
``digest`` is the hex SHA-256 of the UTF-8 prompt. Replay clients resolve
requests purely from fixtures, which keeps every downstream pipeline
offline-deterministic; recording clients wrap a live client and append
fixture rows as they go.

Live endpoints are configured through environment variables:

    CPPF_LLM_ENDPOINT / CPPF_LLM_API_KEY / CPPF_LLM_MODEL
    CPPF_MT_ENDPOINT  / CPPF_MT_API_KEY

See the CLI reference in the README for the expected request shapes.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Protocol

import requests


class ClientError(RuntimeError):
    """Endpoint failure after bounded retries, or bad configuration."""


class ReplayMissError(KeyError):
    """A prompt digest was not found in the replay fixtures."""


class EmptyCompletionError(ClientError):
    """The endpoint returned an empty or whitespace-only completion."""


def prompt_digest(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def translation_request_key(text: str, source: str, target: str) -> str:
    """Canonical request string digested for translation replay lookups."""
    return f"{source}->{target}\n{text}"


@dataclass(frozen=True)
class AugmentationRecord:
    """Provenance of one augmented text."""

    original_id: str
    original_text: str
    augmented_text: str
    method: str
    meta: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.augmented_text:
            raise ValueError(
                f"augmented text for {self.original_id!r} must be nonempty"
            )
        object.__setattr__(self, "meta", dict(self.meta))

    def to_dict(self) -> dict:
        return {
            "original_id": self.original_id,
            "original_text": self.original_text,
            "augmented_text": self.augmented_text,
            "method": self.method,
            "meta": dict(self.meta),
        }


def save_records(records: Iterable[AugmentationRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")


def load_records(path: str | Path) -> list[AugmentationRecord]:
    records = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                raw = json.loads(line)
                records.append(AugmentationRecord(**raw))
    return records


class LLMClient(Protocol):
    endpoint: str

    def complete(self, prompt: str) -> str: ...


class TranslationClient(Protocol):
    endpoint: str

    def translate(self, text: str, source: str, target: str) -> str: ...


def load_fixtures(path: str | Path) -> dict[str, dict]:
    """Read fixture rows keyed by digest. Later rows win on collision."""
    rows: dict[str, dict] = {}
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            row = json.loads(line)
            if "digest" not in row or "completion" not in row:
                raise ClientError(f"{path}:{lineno}: fixture row needs digest and completion")
            rows[row["digest"]] = row
    return rows


def append_fixture(path: str | Path, prompt: str, completion: str, endpoint: str) -> None:
    row = {
        "digest": prompt_digest(prompt),
        "prompt": prompt,
        "completion": completion,
        "endpoint": endpoint,
    }
    with Path(path).open("a", encoding="utf-8") as fh:
        fh.write(json.dumps(row, ensure_ascii=False) + "\n")


class ReplayLLMClient:
    """Serves completions from a fixture file; no network.

    Strict mode raises on unknown prompts; lax mode echoes the prompt's
    last line (useful only for smoke tests).
    """

    def __init__(self, fixtures: str | Path | Mapping[str, dict], strict: bool = True):
        if isinstance(fixtures, (str, Path)):
            self._rows = load_fixtures(fixtures)
        else:
            self._rows = dict(fixtures)
        self.strict = strict
        self.endpoint = "replay"
        self._lock = threading.Lock()

    def complete(self, prompt: str) -> str:
        digest = prompt_digest(prompt)
        with self._lock:
            row = self._rows.get(digest)
        if row is None:
            if self.strict:
                raise ReplayMissError(
                    f"no fixture for prompt digest {digest} (strict replay)"
                )
            return prompt.splitlines()[-1] if prompt else ""
        return row["completion"]


class RecordingLLMClient:
    """Pass-through client that appends every exchange to a fixture file."""

    def __init__(self, inner: LLMClient, fixture_path: str | Path):
        self._inner = inner
        self._path = Path(fixture_path)
        self.endpoint = getattr(inner, "endpoint", "unknown")
        self._lock = threading.Lock()

    def complete(self, prompt: str) -> str:
        completion = self._inner.complete(prompt)
        with self._lock:
            append_fixture(self._path, prompt, completion, self.endpoint)
        return completion


class HttpLLMClient:
    """Minimal JSON-over-HTTP completion client with bounded retries.

    POSTs {"model", "prompt", "max_tokens", "temperature"} and accepts
    either {"completion": ...} or an OpenAI-style
    {"choices": [{"text": ...}]} response body.

    Decoding parameters are plain client configuration; nothing upstream
    pins them, so treat the defaults as unvalidated.
    """

    def __init__(
        self,
        endpoint: str | None = None,
        api_key: str | None = None,
        model: str | None = None,
        max_tokens: int = 64,
        temperature: float = 0.7,
        max_retries: int = 3,
        backoff_seconds: float = 1.0,
        timeout: float = 30.0,
    ):
        self.endpoint = endpoint or os.environ.get("CPPF_LLM_ENDPOINT", "")
        self.api_key = api_key or os.environ.get("CPPF_LLM_API_KEY", "")
        self.model = model or os.environ.get("CPPF_LLM_MODEL", "")
        if not self.endpoint:
            raise ClientError("no LLM endpoint configured (set CPPF_LLM_ENDPOINT)")
        self.max_tokens = max_tokens
        self.temperature = temperature
        self.max_retries = max_retries
        self.backoff_seconds = backoff_seconds
        self.timeout = timeout

    def complete(self, prompt: str) -> str:
        payload = {
            "model": self.model,
            "prompt": prompt,
            "max_tokens": self.max_tokens,
            "temperature": self.temperature,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error: Exception | None = None
        for attempt in range(self.max_retries):
            try:
                response = requests.post(
                    self.endpoint, json=payload, headers=headers, timeout=self.timeout
                )
                if response.status_code >= 500:
                    raise ClientError(f"server error {response.status_code}")
                response.raise_for_status()
                body = response.json()
                if "completion" in body:
                    return body["completion"]
                choices = body.get("choices")
                if choices:
                    return choices[0].get("text", "")
                raise ClientError(f"unrecognized response body keys: {sorted(body)}")
            except (requests.RequestException, ClientError) as exc:
                last_error = exc
                if attempt + 1 < self.max_retries:
                    time.sleep(self.backoff_seconds * (2**attempt))
        raise ClientError(
            f"completion failed after {self.max_retries} attempts: {last_error}"
        )


class ReplayTranslationClient:
    """Replays translations from fixtures keyed by the request digest."""

    def __init__(self, fixtures: str | Path | Mapping[str, dict], strict: bool = True):
        if isinstance(fixtures, (str, Path)):
            self._rows = load_fixtures(fixtures)
        else:
            self._rows = dict(fixtures)
        self.strict = strict
        self.endpoint = "replay"
        self._lock = threading.Lock()

    def translate(self, text: str, source: str, target: str) -> str:
        key = translation_request_key(text, source, target)
        digest = prompt_digest(key)
        with self._lock:
            row = self._rows.get(digest)
        if row is None:
            if self.strict:
                raise ReplayMissError(
                    f"no fixture for {source}->{target} request digest {digest}"
                )
            return text
        return row["completion"]


class RecordingTranslationClient:
    def __init__(self, inner: TranslationClient, fixture_path: str | Path):
        self._inner = inner
        self._path = Path(fixture_path)
        self.endpoint = getattr(inner, "endpoint", "unknown")
        self._lock = threading.Lock()

    def translate(self, text: str, source: str, target: str) -> str:
        completion = self._inner.translate(text, source, target)
        with self._lock:
            append_fixture(
                self._path,
                translation_request_key(text, source, target),
                completion,
                self.endpoint,
            )
        return completion
