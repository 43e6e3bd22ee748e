"""Chat-completion backends: live HTTP, record, replay and scripted."""

from __future__ import annotations

import difflib
import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Protocol, Sequence, Tuple, Union

import httpx

log = logging.getLogger(__name__)

ENV_ENDPOINT = "MSGPIPE_LLM_ENDPOINT"
ENV_API_KEY = "MSGPIPE_LLM_API_KEY"
ENV_MODEL = "MSGPIPE_LLM_MODEL"
DEFAULT_ENDPOINT = "https://api.openai.com/v1/chat/completions"
ROLES = ("system", "user", "assistant")


class BackendError(Exception):
    def __init__(self, status: Optional[int], body: str):
        super().__init__(f"backend error (status {status}): {body[:200]}")
        self.status = status
        self.body = body


class MissingCredentials(BackendError):
    def __init__(self, what: str):
        super().__init__(None, what)


class ReplayMiss(Exception):
    """No stored response for a request; the fixtures have drifted."""

    def __init__(self, digest: str, hint: str = ""):
        msg = f"no replay record for request {digest}"
        if hint:
            msg += f"; nearest recorded prompt: {hint}"
        super().__init__(msg)
        self.digest = digest
        self.hint = hint


@dataclass(frozen=True)
class Message:
    role: str
    content: str


@dataclass(frozen=True)
class ChatRequest:
    model: str
    messages: Tuple[Message, ...]
    temperature: float = 0.0
    max_tokens: int = 2048

    def __post_init__(self):
        if not self.messages or self.messages[0].role != "system":
            raise ValueError("first message must have role 'system'")
        for m in self.messages:
            if m.role not in ROLES:
                raise ValueError(f"unknown role {m.role!r}")
            if not m.content:
                raise ValueError("message content must be nonempty")

    @classmethod
    def make(cls, model: str, system: str, *turns: Union[str, Tuple[str, str]],
             temperature: float = 0.0, max_tokens: int = 2048) -> "ChatRequest":
        """Build a request; bare strings in ``turns`` are user messages."""
        msgs = [Message("system", system)]
        for t in turns:
            msgs.append(Message("user", t) if isinstance(t, str) else Message(*t))
        return cls(model, tuple(msgs), temperature, max_tokens)

    def to_json(self) -> dict:
        return {
            "model": self.model,
            "messages": [{"role": m.role, "content": m.content} for m in self.messages],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }

    @classmethod
    def from_json(cls, d: dict) -> "ChatRequest":
        return cls(d["model"], tuple(Message(m["role"], m["content"]) for m in d["messages"]),
                   float(d.get("temperature", 0.0)), int(d.get("max_tokens", 2048)))


def canonicalize(req: ChatRequest) -> bytes:
    """UTF-8 JSON with sorted keys, no insignificant whitespace, and the
    temperature written as a float."""
    d = req.to_json()
    d["temperature"] = float(d["temperature"])
    return json.dumps(d, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def digest(req: ChatRequest) -> str:
    return hashlib.sha256(canonicalize(req)).hexdigest()


class ChatBackend(Protocol):
    def complete(self, req: ChatRequest) -> str: ...


# ---------------------------------------------------------------- live


class LiveBackend:
    """POSTs to an OpenAI-compatible chat endpoint, retrying 429 and 5xx."""

    RETRYABLE = {408, 409, 425, 429, 500, 502, 503, 504}

    def __init__(self, endpoint: str, api_key: str, *, attempts: int = 3, backoff: float = 1.0,
                 timeout: float = 120.0, max_concurrency: int = 2,
                 transport: Optional[httpx.BaseTransport] = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.endpoint = endpoint
        self.api_key = api_key
        self.attempts = attempts
        self.backoff = backoff
        self.sleep = sleep
        self.retries = 0
        self._gate = threading.BoundedSemaphore(max_concurrency)
        self._client = httpx.Client(timeout=timeout, transport=transport)

    @classmethod
    def from_env(cls, env: Optional[Dict[str, str]] = None, **kw) -> "LiveBackend":
        env = os.environ if env is None else env
        key = env.get(ENV_API_KEY)
        if not key:
            raise MissingCredentials(f"{ENV_API_KEY} is not set")
        return cls(env.get(ENV_ENDPOINT) or DEFAULT_ENDPOINT, key, **kw)

    def complete(self, req: ChatRequest) -> str:
        headers = {"Authorization": f"Bearer {self.api_key}", "Content-Type": "application/json"}
        last: Optional[BackendError] = None
        with self._gate:
            for attempt in range(self.attempts):
                if attempt:
                    delay = self.backoff * (2 ** (attempt - 1))
                    self.retries += 1
                    log.warning("retrying chat request (attempt %d) after %.1fs: %s", attempt + 1, delay, last)
                    self.sleep(delay)
                try:
                    resp = self._client.post(self.endpoint, json=req.to_json(), headers=headers)
                except httpx.HTTPError as e:
                    last = BackendError(None, str(e))
                    continue
                if resp.status_code == 200:
                    return _content(resp)
                last = BackendError(resp.status_code, resp.text)
                if resp.status_code not in self.RETRYABLE:
                    raise last
        assert last is not None
        raise last

    def close(self) -> None:
        self._client.close()


def _content(resp: httpx.Response) -> str:
    try:
        data = resp.json()
        return data["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as e:
        raise BackendError(resp.status_code, f"malformed response: {e}: {resp.text[:200]}")


# --------------------------------------------------------- record/replay


@dataclass(frozen=True)
class ReplayRecord:
    request_digest: str
    response: str
    recorded_at: str
    model: str
    request: Optional[dict] = field(default=None, compare=False)

    def to_line(self) -> str:
        d = {"request_digest": self.request_digest, "response": self.response,
             "metadata": {"recorded_at": self.recorded_at, "model": self.model}}
        if self.request is not None:
            d["request"] = self.request
        return json.dumps(d, sort_keys=True, ensure_ascii=False)

    @classmethod
    def from_line(cls, line: str) -> "ReplayRecord":
        d = json.loads(line)
        meta = d.get("metadata", {})
        return cls(d["request_digest"], d["response"], meta.get("recorded_at", ""),
                   meta.get("model", ""), d.get("request"))


def load_records(paths: Union[str, Path, Iterable[Union[str, Path]]]) -> List[ReplayRecord]:
    if isinstance(paths, (str, Path)):
        paths = [paths]
    out = []
    for p in paths:
        p = Path(p)
        files = sorted(p.glob("*.jsonl")) if p.is_dir() else [p]
        for f in files:
            for line in f.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    out.append(ReplayRecord.from_line(line))
    return out


def _prompt_text(request: Optional[dict]) -> str:
    if not request:
        return ""
    return "\n".join(m["content"] for m in request.get("messages", []))


class ReplayBackend:
    """Answers from stored records keyed by request digest."""

    def __init__(self, records: Union[str, Path, Sequence[ReplayRecord], Iterable[Union[str, Path]]]):
        if isinstance(records, (str, Path)):
            records = load_records(records)
        else:
            records = list(records)
            if not all(isinstance(r, ReplayRecord) for r in records):
                records = load_records(records)
        self.records: Dict[str, ReplayRecord] = {}
        for r in records:
            self.records.setdefault(r.request_digest, r)
        self.hits: List[str] = []

    def complete(self, req: ChatRequest) -> str:
        d = digest(req)
        rec = self.records.get(d)
        if rec is None:
            raise ReplayMiss(d, self.nearest(req))
        self.hits.append(d)
        return rec.response

    def nearest(self, req: ChatRequest) -> str:
        """Digest and first differing line of the closest recorded prompt."""
        want = _prompt_text(req.to_json())
        best, best_ratio = None, -1.0
        for r in self.records.values():
            if r.request is None:
                continue
            ratio = difflib.SequenceMatcher(None, want, _prompt_text(r.request), autojunk=False).quick_ratio()
            if ratio > best_ratio:
                best, best_ratio = r, ratio
        if best is None:
            return ""
        mine = want.splitlines()
        theirs = _prompt_text(best.request).splitlines()
        for i, (a, b) in enumerate(zip(mine, theirs)):
            if a != b:
                return f"{best.request_digest[:12]} (first difference at prompt line {i + 1}: {b[:80]!r})"
        return f"{best.request_digest[:12]} (prompts differ in length)"


def _now() -> str:
    return datetime.now(timezone.utc).replace(microsecond=0).isoformat()


class RecordBackend:
    """Forwards to ``inner`` and appends each new exchange to a JSONL store."""

    def __init__(self, inner: ChatBackend, path: Union[str, Path], clock: Callable[[], str] = _now):
        self.inner = inner
        self.path = Path(path)
        self.clock = clock
        self._lock = threading.Lock()
        self._seen = {r.request_digest for r in load_records(self.path)} if self.path.exists() else set()

    def complete(self, req: ChatRequest) -> str:
        text = self.inner.complete(req)
        d = digest(req)
        with self._lock:
            if d not in self._seen:
                self._seen.add(d)
                rec = ReplayRecord(d, text, self.clock(), req.model, req.to_json())
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", encoding="utf-8") as f:
                    f.write(rec.to_line() + "\n")
        return text


class ScriptedBackend:
    """Calls ``responder(request)``; used for tests and fixture recording."""

    def __init__(self, responder: Callable[[ChatRequest], str]):
        self.responder = responder
        self.requests: List[ChatRequest] = []
        self._lock = threading.Lock()

    def complete(self, req: ChatRequest) -> str:
        with self._lock:
            self.requests.append(req)
        return self.responder(req)


class FailingBackend:
    """Always raises; models an outage."""

    def __init__(self, status: Optional[int] = 503, body: str = "service unavailable"):
        self.status = status
        self.body = body

    def complete(self, req: ChatRequest) -> str:
        raise BackendError(self.status, self.body)
