"""Caption and chat backends: an OpenAI-compatible HTTP client, a fixture
replay store, a recording wrapper, and a content-addressed response cache.

Every request is identified by a digest of (model tag, normalized messages,
temperature). Image parts are digested by their pixel hash, not their encoded
bytes, so a change of image encoder never invalidates fixtures or cache.
"""
from __future__ import annotations

import base64
import hashlib
import io
import json
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data_io import write_atomic
from .errors import (
    BackendError,
    FixtureMissError,
    InvariantError,
    SchemaError,
    TransientBackendError,
)

LENIENT_REPLY = "Stub response. SCORE: 50"


@dataclass(frozen=True)
class BackendConfig:
    """Connection and sampling settings for one backend role."""

    kind: str
    base_url: str = ""
    model: str = "fixture-model"
    api_key_env: str = "VIDSKIM_API_KEY"
    timeout_s: float = 60.0
    max_retries: int = 3
    temperature: float = 0.5

    def __post_init__(self):
        if self.kind not in ("http", "fixture"):
            raise InvariantError(f"backend kind must be http or fixture, got {self.kind!r}")
        if self.kind == "http" and (not self.base_url or not self.model):
            raise InvariantError("http backend requires base_url and model")
        if self.max_retries < 0:
            raise InvariantError("max_retries must be nonnegative")


def image_part(pixels: np.ndarray, frame_index: int) -> dict:
    """Message part for one grayscale frame; digested by pixel content.

    The raw array rides along under a private key that is stripped from the
    digest and only consumed by the HTTP wire encoding.
    """
    pixels = np.ascontiguousarray(np.asarray(pixels, dtype=np.uint8))
    return {
        "type": "image",
        "frame_index": int(frame_index),
        "sha256": hashlib.sha256(pixels.tobytes()).hexdigest(),
        "_pixels": pixels,
    }


def _strip_private(obj):
    if isinstance(obj, dict):
        return {k: _strip_private(v) for k, v in sorted(obj.items()) if not k.startswith("_")}
    if isinstance(obj, (list, tuple)):
        return [_strip_private(v) for v in obj]
    return obj


def request_digest(model: str, temperature: float, messages) -> str:
    """Hex digest of the canonical request serialization."""
    canonical = json.dumps(
        {"messages": _strip_private(messages), "model": model, "temperature": temperature},
        sort_keys=True, separators=(",", ":"),
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _encode_png(pixels: np.ndarray) -> str:
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(pixels, mode="L").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def wire_payload(model: str, temperature: float, messages) -> dict:
    """Expand image placeholder parts into base64 data-URL parts."""
    out_messages = []
    for msg in messages:
        content = msg.get("content")
        if isinstance(content, list):
            parts = []
            for part in content:
                if part.get("type") == "image":
                    if "_pixels" not in part:
                        raise BackendError(
                            f"image part for frame {part.get('frame_index')} carries no pixel data"
                        )
                    parts.append({
                        "type": "image_url",
                        "image_url": {"url": "data:image/png;base64," + _encode_png(part["_pixels"])},
                    })
                else:
                    parts.append({k: v for k, v in part.items() if not k.startswith("_")})
            out_messages.append({"role": msg["role"], "content": parts})
        else:
            out_messages.append({"role": msg["role"], "content": content})
    return {"model": model, "temperature": temperature, "messages": out_messages}


class HttpTransport:
    """POST /v1/chat/completions with bearer auth; raises transient errors for
    retryable statuses (429 and 5xx) and hard errors otherwise."""

    def __init__(self, base_url: str, api_key_env: str, timeout_s: float):
        self.base_url = base_url.rstrip("/")
        self.api_key_env = api_key_env
        self.timeout_s = timeout_s

    def __call__(self, payload: dict) -> dict:
        import os

        import requests

        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        try:
            resp = requests.post(f"{self.base_url}/v1/chat/completions",
                                 json=payload, headers=headers, timeout=self.timeout_s)
        except requests.RequestException as exc:
            raise TransientBackendError(f"request failed: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientBackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        if resp.status_code >= 400:
            raise BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()
        except ValueError as exc:
            raise BackendError(f"non-JSON response: {resp.text[:200]}") from exc


class HttpBackend:
    """Live chat client with exponential-backoff retries on transient errors."""

    def __init__(self, config: BackendConfig, transport=None, sleeper=time.sleep):
        if config.kind != "http":
            raise InvariantError("HttpBackend requires an http BackendConfig")
        self.config = config
        self.transport = transport or HttpTransport(
            config.base_url, config.api_key_env, config.timeout_s)
        self.sleeper = sleeper

    def digest_for(self, messages, temperature: float | None = None) -> str:
        temp = self.config.temperature if temperature is None else temperature
        return request_digest(self.config.model, temp, messages)

    def chat(self, messages, temperature: float | None = None) -> str:
        temp = self.config.temperature if temperature is None else temperature
        payload = wire_payload(self.config.model, temp, messages)
        last: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            try:
                resp = self.transport(payload)
                break
            except TransientBackendError as exc:
                last = exc
                if attempt == self.config.max_retries:
                    raise BackendError(
                        f"giving up after {attempt + 1} attempts: {exc}") from exc
                self.sleeper(0.5 * 2 ** attempt)
        else:  # pragma: no cover - loop always breaks or raises
            raise BackendError(str(last))
        try:
            text = resp["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed completion payload: {resp!r:.200}") from exc
        if not isinstance(text, str) or not text.strip():
            raise BackendError("backend returned an empty completion")
        return text


class FixtureStore:
    """JSON-lines store of {digest, response} pairs, append-only."""

    def __init__(self, path: str | Path | None = None, strict: bool = True):
        self.path = Path(path) if path is not None else None
        self.strict = strict
        self.entries: dict[str, str] = {}
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self) -> None:
        with open(self.path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                    digest, response = obj["digest"], obj["response"]
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise SchemaError(
                        f"{self.path}:{lineno}: corrupted fixture line: {exc}") from exc
                if digest in self.entries and self.entries[digest] != response:
                    raise SchemaError(
                        f"{self.path}:{lineno}: digest {digest} recorded twice with"
                        " different responses")
                self.entries[digest] = response

    def get(self, digest: str) -> str | None:
        return self.entries.get(digest)

    def add(self, digest: str, response: str) -> None:
        if self.entries.get(digest) == response:
            return
        if digest in self.entries:
            raise InvariantError(f"digest {digest} already recorded with a different response")
        self.entries[digest] = response
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps({"digest": digest, "response": response},
                                    sort_keys=True, separators=(",", ":")) + "\n")


class FixtureBackend:
    """Replays recorded responses; never touches the network."""

    def __init__(self, store: FixtureStore, config: BackendConfig | None = None):
        self.store = store
        self.config = config or BackendConfig(kind="fixture")

    def digest_for(self, messages, temperature: float | None = None) -> str:
        temp = self.config.temperature if temperature is None else temperature
        return request_digest(self.config.model, temp, messages)

    def chat(self, messages, temperature: float | None = None) -> str:
        digest = self.digest_for(messages, temperature)
        hit = self.store.get(digest)
        if hit is not None:
            return hit
        if self.store.strict:
            raise FixtureMissError(digest)
        return LENIENT_REPLY


class RecordingBackend:
    """Forwards misses to a live backend and appends its replies to the store."""

    def __init__(self, live, store: FixtureStore):
        self.live = live
        self.store = store
        self.config = live.config

    def digest_for(self, messages, temperature: float | None = None) -> str:
        return self.live.digest_for(messages, temperature)

    def chat(self, messages, temperature: float | None = None) -> str:
        digest = self.digest_for(messages, temperature)
        hit = self.store.get(digest)
        if hit is not None:
            return hit
        response = self.live.chat(messages, temperature)
        self.store.add(digest, response)
        return response


def record_mode(live, fixture_path: str | Path) -> RecordingBackend:
    return RecordingBackend(live, FixtureStore(fixture_path, strict=True))


class ResponseCache:
    """Digest-named JSON files under one directory; eviction is manual."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)

    def _path(self, digest: str) -> Path:
        return self.directory / f"{digest}.json"

    def get(self, digest: str) -> str | None:
        path = self._path(digest)
        if not path.exists():
            return None
        with open(path, "r", encoding="utf-8") as fh:
            try:
                obj = json.load(fh)
                return obj["response"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise SchemaError(f"{path}: corrupted cache entry: {exc}") from exc

    def put(self, digest: str, response: str) -> None:
        write_atomic(self._path(digest), json.dumps(
            {"digest": digest, "response": response},
            sort_keys=True, separators=(",", ":")).encode("utf-8"))


class CachedBackend:
    """Read-through cache wrapper with in-flight de-duplication."""

    def __init__(self, inner, cache: ResponseCache):
        self.inner = inner
        self.cache = cache
        self.config = inner.config
        self._lock = threading.Lock()
        self._inflight: dict[str, threading.Event] = {}

    def digest_for(self, messages, temperature: float | None = None) -> str:
        return self.inner.digest_for(messages, temperature)

    def chat(self, messages, temperature: float | None = None) -> str:
        digest = self.digest_for(messages, temperature)
        while True:
            hit = self.cache.get(digest)
            if hit is not None:
                return hit
            with self._lock:
                event = self._inflight.get(digest)
                if event is None:
                    event = threading.Event()
                    self._inflight[digest] = event
                    break
            event.wait()
        try:
            hit = self.cache.get(digest)
            if hit is None:
                hit = self.inner.chat(messages, temperature)
                self.cache.put(digest, hit)
            return hit
        finally:
            with self._lock:
                del self._inflight[digest]
            event.set()


def caption(frame_indices, frames, prompt: str, backend,
            temperature: float | None = None) -> str:
    """Describe a batch of frames: one user message of prompt text plus images."""
    indices = list(frame_indices)
    if not indices:
        raise InvariantError("caption requires at least one frame index")
    if frames.pixels is None:
        raise InvariantError("caption requires pixel data")
    content = [{"type": "text", "text": prompt}]
    for i in indices:
        if not 0 <= i < frames.count:
            raise InvariantError(f"frame index {i} outside [0, {frames.count})")
        content.append(image_part(frames.pixels[i], i))
    return backend.chat([{"role": "user", "content": content}], temperature)


def make_backend(config: BackendConfig, fixtures: str | Path | None = None,
                 strict_fixtures: bool = True, cache_dir: str | Path | None = None,
                 record: bool = False):
    """Assemble the backend stack a config asks for.

    fixture kind replays from `fixtures`; http kind goes live, optionally
    recording into `fixtures`; a cache directory wraps either kind.
    """
    if config.kind == "fixture":
        backend = FixtureBackend(FixtureStore(fixtures, strict=strict_fixtures), config)
    else:
        backend = HttpBackend(config)
        if record:
            if fixtures is None:
                raise InvariantError("recording requires a fixture path")
            backend = record_mode(backend, fixtures)
    if cache_dir is not None:
        backend = CachedBackend(backend, ResponseCache(cache_dir))
    return backend
