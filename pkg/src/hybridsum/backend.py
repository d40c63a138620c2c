"""Client side of the backend wire protocol.

Backends are external processes that generate comments and/or classify
code pairs. Messages are JSON objects, one per line, UTF-8:

    handshake (first line from the backend):
        {"protocol": "hybridsum/1", "capabilities": ["generate", "classify"]}
    generate request:   {"id": str, "type": "generate", "code": [...], "ast": [...] | null}
    generate response:  {"id": str, "comment": [...]}
    classify request:   {"id": str, "type": "classify", "input_code": [...], "retrieved_code": [...]}
    classify response:  {"id": str, "score": number}
    error response:     {"id": str, "error": str}

Responses may arrive in any order; the `id` field correlates them. Every
request must be answered. Two transports are provided: a long-running
subprocess on stdio, and a batch file exchange for backends that run
elsewhere (the response file starts with the same handshake line).
"""

from __future__ import annotations

import json
import logging
import subprocess
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .errors import BackendError, ProtocolError

logger = logging.getLogger(__name__)

PROTOCOL = "hybridsum/1"
CAP_GENERATE = "generate"
CAP_CLASSIFY = "classify"

Tokens = Sequence[str]
GenerateRequest = tuple[str, list, list | None]       # (id, code, ast)
ClassifyRequest = tuple[str, list, list]              # (id, input_code, retrieved_code)


@dataclass(frozen=True)
class Handshake:
    protocol: str
    capabilities: frozenset[str]


@dataclass(frozen=True)
class GeneratorHandle:
    """How to reach a backend: transport, location, and limits."""

    transport: str = "subprocess"  # "subprocess" | "file"
    command: tuple[str, ...] | None = None
    requests_path: str | None = None
    responses_path: str | None = None
    timeout: float = 30.0
    max_in_flight: int = 4

    def __post_init__(self):
        if self.transport not in ("subprocess", "file"):
            raise ProtocolError(f"unknown transport: {self.transport!r}")
        if self.timeout <= 0:
            raise ProtocolError("timeout must be positive")
        if self.transport == "subprocess" and not self.command:
            raise ProtocolError("subprocess transport needs a command")
        if self.transport == "file" and not (self.requests_path and self.responses_path):
            raise ProtocolError("file transport needs requests_path and responses_path")


def open_backend(handle: "GeneratorHandle") -> "Backend":
    """Instantiate the transport described by a handle."""
    if handle.transport == "subprocess":
        return SubprocessBackend(
            handle.command, timeout=handle.timeout, max_in_flight=handle.max_in_flight
        )
    return FileBatchBackend(
        handle.requests_path,
        handle.responses_path,
        command=handle.command,
        timeout=handle.timeout,
    )


def parse_handshake(line: str) -> Handshake:
    try:
        payload = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"handshake is not valid JSON: {line!r}") from exc
    if not isinstance(payload, dict) or "protocol" not in payload:
        raise ProtocolError(f"handshake missing 'protocol': {line!r}")
    if payload["protocol"] != PROTOCOL:
        raise ProtocolError(f"unsupported protocol: {payload['protocol']!r}")
    caps = payload.get("capabilities", [])
    if not isinstance(caps, list) or not caps:
        raise ProtocolError("handshake must advertise at least one capability")
    return Handshake(payload["protocol"], frozenset(caps))


def generate_message(request_id: str, code: Tokens, ast: Tokens | None) -> str:
    return json.dumps(
        {"id": request_id, "type": "generate", "code": list(code),
         "ast": list(ast) if ast is not None else None},
        ensure_ascii=False,
    )


def classify_message(request_id: str, input_code: Tokens, retrieved_code: Tokens) -> str:
    return json.dumps(
        {"id": request_id, "type": "classify", "input_code": list(input_code),
         "retrieved_code": list(retrieved_code)},
        ensure_ascii=False,
    )


def _extract_comment(request_id: str, response: dict) -> tuple[str, ...]:
    if "error" in response:
        raise BackendError(request_id, str(response["error"]))
    comment = response.get("comment")
    if not isinstance(comment, list) or not all(isinstance(t, str) for t in comment):
        raise BackendError(request_id, f"malformed generate response: {response!r}")
    return tuple(comment)


def _extract_score(request_id: str, response: dict) -> float:
    if "error" in response:
        raise BackendError(request_id, str(response["error"]))
    score = response.get("score")
    if not isinstance(score, (int, float)) or isinstance(score, bool):
        raise BackendError(request_id, f"malformed classify response: {response!r}")
    return float(score)


class Backend:
    """Interface shared by all transports (and by test doubles)."""

    capabilities: frozenset[str] = frozenset()

    def generate_batch(self, requests: Sequence[GenerateRequest]) -> dict[str, tuple[str, ...]]:
        raise NotImplementedError

    def classify_batch(self, requests: Sequence[ClassifyRequest]) -> dict[str, float]:
        raise NotImplementedError

    def generate(self, request_id: str, code: Tokens, ast: Tokens | None = None) -> tuple[str, ...]:
        return self.generate_batch([(request_id, list(code), list(ast) if ast else None)])[request_id]

    def classify(self, request_id: str, input_code: Tokens, retrieved_code: Tokens) -> float:
        return self.classify_batch([(request_id, list(input_code), list(retrieved_code))])[request_id]

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()


class SubprocessBackend(Backend):
    """Long-running backend subprocess on stdio with pipelined requests.

    Up to `max_in_flight` requests are outstanding at a time; a reader
    thread files responses by id so out-of-order replies are fine.
    """

    def __init__(self, command: Sequence[str], timeout: float = 30.0, max_in_flight: int = 4):
        if timeout <= 0:
            raise ProtocolError("timeout must be positive")
        if max_in_flight < 1:
            raise ProtocolError("max_in_flight must be at least 1")
        self.command = list(command)
        self.timeout = timeout
        self.max_in_flight = max_in_flight
        self._proc: subprocess.Popen | None = None
        self._responses: dict[str, dict] = {}
        self._lock = threading.Condition()
        self._dead: str | None = None
        self._handshake: Handshake | None = None

    @property
    def capabilities(self) -> frozenset[str]:  # type: ignore[override]
        self._ensure_started()
        assert self._handshake is not None
        return self._handshake.capabilities

    def _ensure_started(self) -> None:
        if self._proc is not None:
            return
        logger.debug("starting backend: %s", self.command)
        self._proc = subprocess.Popen(
            self.command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            encoding="utf-8",
            bufsize=1,
        )
        reader = threading.Thread(target=self._read_loop, daemon=True)
        reader.start()
        deadline = time.monotonic() + self.timeout
        with self._lock:
            while self._handshake is None and self._dead is None:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    break
                self._lock.wait(timeout=remaining)
            if self._handshake is None:
                reason = self._dead or "no handshake before timeout"
                raise ProtocolError(f"backend {self.command[0]!r}: {reason}")

    def _read_loop(self) -> None:
        assert self._proc is not None and self._proc.stdout is not None
        first = True
        for line in self._proc.stdout:
            line = line.strip()
            if not line:
                continue
            if first:
                first = False
                try:
                    handshake = parse_handshake(line)
                except ProtocolError as exc:
                    with self._lock:
                        self._dead = str(exc)
                        self._lock.notify_all()
                    return
                with self._lock:
                    self._handshake = handshake
                    self._lock.notify_all()
                continue
            try:
                response = json.loads(line)
                if not isinstance(response, dict) or "id" not in response:
                    raise ValueError("missing id")
            except (json.JSONDecodeError, ValueError):
                with self._lock:
                    self._dead = f"unparseable response line: {line!r}"
                    self._lock.notify_all()
                return
            with self._lock:
                self._responses[str(response["id"])] = response
                self._lock.notify_all()
        with self._lock:
            if self._dead is None:
                self._dead = "backend closed its output"
            self._lock.notify_all()

    def _submit(self, message: str) -> None:
        assert self._proc is not None and self._proc.stdin is not None
        try:
            self._proc.stdin.write(message + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ProtocolError(f"backend pipe closed: {exc}") from exc

    def _await(self, request_id: str) -> dict:
        deadline = time.monotonic() + self.timeout
        with self._lock:
            while request_id not in self._responses:
                if self._dead is not None:
                    raise BackendError(request_id, f"backend failed: {self._dead}")
                remaining = deadline - time.monotonic()
                if remaining <= 0 or not self._lock.wait(timeout=remaining):
                    if request_id in self._responses:
                        break
                    raise BackendError(request_id, f"timeout after {self.timeout}s")
            return self._responses.pop(request_id)

    def _require_capability(self, capability: str) -> None:
        if capability not in self.capabilities:
            raise ProtocolError(
                f"backend {self.command[0]!r} does not advertise {capability!r}"
            )

    def _run_batch(self, messages: list[tuple[str, str]]) -> dict[str, dict]:
        """Send (id, message) pairs with a sliding window, collect responses."""
        self._ensure_started()
        results: dict[str, dict] = {}
        in_flight: list[str] = []
        pending = list(messages)
        while pending or in_flight:
            while pending and len(in_flight) < self.max_in_flight:
                request_id, message = pending.pop(0)
                self._submit(message)
                in_flight.append(request_id)
            request_id = in_flight.pop(0)
            results[request_id] = self._await(request_id)
        return results

    def generate_batch(self, requests: Sequence[GenerateRequest]) -> dict[str, tuple[str, ...]]:
        self._ensure_started()
        self._require_capability(CAP_GENERATE)
        raw = self._run_batch(
            [(rid, generate_message(rid, code, ast)) for rid, code, ast in requests]
        )
        return {rid: _extract_comment(rid, response) for rid, response in raw.items()}

    def classify_batch(self, requests: Sequence[ClassifyRequest]) -> dict[str, float]:
        self._ensure_started()
        self._require_capability(CAP_CLASSIFY)
        raw = self._run_batch(
            [(rid, classify_message(rid, a, b)) for rid, a, b in requests]
        )
        return {rid: _extract_score(rid, response) for rid, response in raw.items()}

    def close(self) -> None:
        if self._proc is None:
            return
        try:
            if self._proc.stdin is not None:
                self._proc.stdin.close()
            self._proc.wait(timeout=5)
        except (OSError, subprocess.TimeoutExpired):
            self._proc.kill()
            self._proc.wait()
        finally:
            self._proc = None


class FileBatchBackend(Backend):
    """Batch transport: write a request file, collect a response file.

    When `command` is given it runs once per batch and is expected to read
    the request file and write the response file (handshake line first).
    Without a command the response file must already exist, which supports
    backends executed out of band.
    """

    def __init__(
        self,
        requests_path: str | Path,
        responses_path: str | Path,
        command: Sequence[str] | None = None,
        timeout: float = 300.0,
    ):
        if timeout <= 0:
            raise ProtocolError("timeout must be positive")
        self.requests_path = Path(requests_path)
        self.responses_path = Path(responses_path)
        self.command = list(command) if command else None
        self.timeout = timeout
        self._capabilities: frozenset[str] | None = None

    @property
    def capabilities(self) -> frozenset[str]:  # type: ignore[override]
        if self._capabilities is None:
            # capabilities are known only after a response file is read;
            # assume both until the handshake says otherwise
            return frozenset({CAP_GENERATE, CAP_CLASSIFY})
        return self._capabilities

    def _exchange(self, messages: list[tuple[str, str]]) -> dict[str, dict]:
        with self.requests_path.open("w", encoding="utf-8", newline="") as handle:
            for _, message in messages:
                handle.write(message + "\n")
        if self.command is not None:
            try:
                completed = subprocess.run(self.command, timeout=self.timeout)
            except subprocess.TimeoutExpired as exc:
                raise ProtocolError(f"batch backend timed out after {self.timeout}s") from exc
            if completed.returncode != 0:
                raise ProtocolError(
                    f"batch backend exited with status {completed.returncode}"
                )
        if not self.responses_path.exists():
            raise ProtocolError(f"response file not found: {self.responses_path}")
        responses: dict[str, dict] = {}
        with self.responses_path.open("r", encoding="utf-8") as handle:
            first = True
            for line in handle:
                line = line.strip()
                if not line:
                    continue
                if first:
                    first = False
                    self._capabilities = parse_handshake(line).capabilities
                    continue
                try:
                    response = json.loads(line)
                    if not isinstance(response, dict) or "id" not in response:
                        raise ValueError
                except (json.JSONDecodeError, ValueError):
                    raise ProtocolError(f"unparseable response line: {line!r}") from None
                responses[str(response["id"])] = response
        for request_id, _ in messages:
            if request_id not in responses:
                raise BackendError(request_id, "no response in batch file")
        return responses

    def generate_batch(self, requests: Sequence[GenerateRequest]) -> dict[str, tuple[str, ...]]:
        raw = self._exchange(
            [(rid, generate_message(rid, code, ast)) for rid, code, ast in requests]
        )
        return {rid: _extract_comment(rid, raw[rid]) for rid, _, _ in requests}

    def classify_batch(self, requests: Sequence[ClassifyRequest]) -> dict[str, float]:
        raw = self._exchange(
            [(rid, classify_message(rid, a, b)) for rid, a, b in requests]
        )
        return {rid: _extract_score(rid, raw[rid]) for rid, _, _ in requests}
