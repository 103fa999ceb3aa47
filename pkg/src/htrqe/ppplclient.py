"""Client for external pseudo-perplexity scorers (pppl/1 protocol).

Masked-LM scoring needs an ML runtime, so it lives behind a tiny wire
protocol instead of being imported: newline-delimited JSON records over
a spawned subprocess's stdin/stdout, or an HTTP POST carrying the same
records.  A scorer announces itself with a handshake line

    {"protocol": "pppl/1", "models": [...]}

and then answers each request {"id", "text", "model_hint"} with either
{"id", "pppl", "token_count", "log_prob_sum"} or {"id", "error"}.
Responses may arrive in any order (matching is by id) and may carry
extra diagnostic fields, which are ignored.  log_prob_sum is a natural
logarithm; pppl = exp(-log_prob_sum / token_count), where token_count
is the scorer's word count for the text.

Document-level PPPL aggregates lines by token-count-weighted mean:
exp(-sum(log_prob_sum) / sum(token_count)).
"""

from __future__ import annotations

import json
import math
import subprocess
import urllib.error
import urllib.request
from dataclasses import dataclass

from .errors import DataError, TransportError

PROTOCOL = "pppl/1"

#: |pppl - exp(-log_prob_sum/token_count)| tolerance before a response
#: is rejected as malformed.
IDENTITY_TOLERANCE = 1e-6


@dataclass(frozen=True)
class PpplRequest:
    id: str
    text: str
    model_hint: str | None = None


@dataclass(frozen=True)
class PpplResponse:
    id: str
    pppl: float | None = None
    token_count: int = 0
    log_prob_sum: float = 0.0
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def encode_request(request: PpplRequest) -> str:
    record = {"id": request.id, "text": request.text, "model_hint": request.model_hint}
    return json.dumps(record, ensure_ascii=False, sort_keys=True)


def decode_response(line: str) -> PpplResponse:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise TransportError(f"unparsable scorer record: {line!r}") from exc
    if not isinstance(record, dict) or "id" not in record:
        raise TransportError(f"scorer record without id: {line!r}")
    rid = str(record["id"])
    if "error" in record:
        return PpplResponse(id=rid, error=str(record["error"]))
    try:
        return PpplResponse(
            id=rid,
            pppl=float(record["pppl"]),
            token_count=int(record["token_count"]),
            log_prob_sum=float(record["log_prob_sum"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise TransportError(f"malformed scorer record: {line!r}") from exc


def decode_handshake(line: str) -> list[str]:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise TransportError(f"unparsable handshake: {line!r}") from exc
    if not isinstance(record, dict) or record.get("protocol") != PROTOCOL:
        raise TransportError(f"scorer does not speak {PROTOCOL}: {line!r}")
    models = record.get("models", [])
    return [str(m) for m in models]


class SubprocessEndpoint:
    """Spawn a scorer and pipeline requests over its stdin/stdout.

    In-flight requests are bounded so neither side can fill a pipe
    buffer and deadlock.  Use as a context manager.
    """

    def __init__(self, argv: list[str], max_inflight: int = 32):
        if max_inflight < 1:
            raise DataError("max_inflight must be >= 1")
        self.argv = list(argv)
        self.max_inflight = max_inflight
        self._proc: subprocess.Popen | None = None
        self.models: list[str] = []

    def __enter__(self) -> "SubprocessEndpoint":
        self.start()
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    def start(self) -> None:
        if self._proc is not None:
            return
        try:
            self._proc = subprocess.Popen(
                self.argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True,
                encoding="utf-8",
            )
        except OSError as exc:
            raise TransportError(f"cannot spawn scorer {self.argv}: {exc}") from exc
        self.models = decode_handshake(self._read_line())

    def close(self) -> None:
        if self._proc is None:
            return
        proc, self._proc = self._proc, None
        try:
            proc.stdin.close()
            proc.wait(timeout=10)
        except (OSError, subprocess.TimeoutExpired):
            proc.kill()
            proc.wait()

    def _read_line(self) -> str:
        line = self._proc.stdout.readline()
        if not line:
            code = self._proc.poll()
            stderr = self._proc.stderr.read() if self._proc.stderr else ""
            raise TransportError(
                f"scorer closed the stream (exit {code}): {stderr.strip()[-500:]}"
            )
        return line

    def score_batch(self, requests: list[PpplRequest]) -> list[PpplResponse]:
        self.start()
        responses: list[PpplResponse] = []
        try:
            inflight = 0
            for request in requests:
                if inflight >= self.max_inflight:
                    responses.append(decode_response(self._read_line()))
                    inflight -= 1
                self._proc.stdin.write(encode_request(request) + "\n")
                self._proc.stdin.flush()
                inflight += 1
            for _ in range(inflight):
                responses.append(decode_response(self._read_line()))
        except BrokenPipeError as exc:
            raise TransportError(f"scorer pipe broke: {exc}") from exc
        return responses


class HttpEndpoint:
    """POST request records as NDJSON; the response body is the same
    stream a stdio scorer would emit (optionally handshake-first)."""

    def __init__(self, url: str, timeout: float = 120.0):
        self.url = url
        self.timeout = timeout
        self.models: list[str] = []

    def score_batch(self, requests: list[PpplRequest]) -> list[PpplResponse]:
        body = "".join(encode_request(r) + "\n" for r in requests).encode("utf-8")
        http_request = urllib.request.Request(
            self.url, data=body, headers={"Content-Type": "application/x-ndjson"}
        )
        try:
            with urllib.request.urlopen(http_request, timeout=self.timeout) as reply:
                payload = reply.read().decode("utf-8")
        except (urllib.error.URLError, OSError) as exc:
            raise TransportError(f"scorer endpoint {self.url} unreachable: {exc}") from exc
        lines = [line for line in payload.splitlines() if line.strip()]
        if lines and '"protocol"' in lines[0]:
            self.models = decode_handshake(lines[0])
            lines = lines[1:]
        return [decode_response(line) for line in lines]


def score_batch(requests: list[PpplRequest], endpoint) -> list[PpplResponse]:
    """Score a batch and return responses in request order.

    Transport and protocol violations raise TransportError; scorer-side
    per-item failures come back as responses with .error set and do not
    abort the rest of the batch.
    """
    if not requests:
        raise DataError("empty scoring batch")
    ids = [r.id for r in requests]
    if len(set(ids)) != len(ids):
        raise DataError("duplicate request ids in batch")
    for r in requests:
        if not r.id:
            raise DataError("request with empty id")
        if not r.text:
            raise DataError(f"request {r.id!r} has empty text")
    raw = endpoint.score_batch(requests)
    by_id: dict[str, PpplResponse] = {}
    for response in raw:
        if response.id in by_id:
            raise TransportError(f"duplicate response for id {response.id!r}")
        by_id[response.id] = response
    missing = [i for i in ids if i not in by_id]
    if missing:
        raise TransportError(f"scorer returned no response for ids {missing}")
    for response in by_id.values():
        if response.ok:
            if response.token_count <= 0:
                raise TransportError(f"response {response.id!r} has token_count <= 0")
            expected = math.exp(-response.log_prob_sum / response.token_count)
            if abs(response.pppl - expected) > IDENTITY_TOLERANCE * max(1.0, expected):
                raise TransportError(
                    f"response {response.id!r} violates the pppl identity: "
                    f"{response.pppl} vs {expected}"
                )
    return [by_id[i] for i in ids]


def document_pppl(responses: list[PpplResponse], skip_errors: bool = False) -> float:
    """exp of the token-count-weighted mean negative log probability."""
    failed = [r.id for r in responses if not r.ok]
    if failed and not skip_errors:
        raise DataError(f"scorer errors for {failed}")
    scored = [r for r in responses if r.ok]
    total_tokens = sum(r.token_count for r in scored)
    if total_tokens == 0:
        raise DataError("no successfully scored tokens")
    return math.exp(-sum(r.log_prob_sum for r in scored) / total_tokens)
