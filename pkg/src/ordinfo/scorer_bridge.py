"""Wire protocol and client for external probability/prediction providers.

A scorer is any process speaking line-delimited JSON over stdio (canonical)
or TCP: one request object per line, one response per line, explicit ids,
pipelining allowed, responses in any order. Log probabilities on the wire
are base 2 and must be finite and <= 0.

Handshake:   {"op":"hello","version":1}
             -> {"ok":true,"version":1,"capabilities":[...]}
Requests:    {"id":N,"op":"logp_sentence","tokens":[...]}   -> {"id":N,"logp2":f}
             {"id":N,"op":"logp_cond","target":[...],"condition":[...]}
                                                             -> {"id":N,"logp2":f}
             {"id":N,"op":"classify","tokens":[...],"labels":[...]}
                                                             -> {"id":N,"label":s}
Errors:      any response may instead be {"id":N,"error":"..."}.

This lets a neural sentence scorer, a neural reorderer, and a task
classifier replace the internal n-gram models without touching the
pipeline; fallback_resolve() picks internal providers per capability when
no scorer (or a partial one) is configured.
"""

from __future__ import annotations

import json
import math
import queue
import socket
import subprocess
import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .errors import ScorerError

PROTOCOL_VERSION = 1
CAPABILITIES = ("logp_sentence", "logp_cond", "classify")


class HandshakeError(ScorerError):
    pass


class VersionMismatchError(ScorerError):
    pass


class CapabilityError(ScorerError):
    pass


class ScorerTimeoutError(ScorerError):
    pass


class ScorerProtocolError(ScorerError):
    """Malformed response; the batch fails loudly with the offending line."""


@dataclass(frozen=True)
class ScorerConfig:
    transport: str = "subprocess"      # "subprocess" | "tcp"
    argv: tuple[str, ...] = ()
    host: str = "127.0.0.1"
    port: int = 0
    timeout: float = 30.0
    use_for: tuple[str, ...] = CAPABILITIES  # ops to route externally if declared


class _StdioTransport:
    """Line transport over a child process; a reader thread feeds a queue so
    receives can time out without blocking on the pipe."""

    def __init__(self, argv: Sequence[str]):
        if not argv:
            raise ScorerError("no scorer command configured")
        try:
            self.proc = subprocess.Popen(
                list(argv),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as e:
            raise ScorerError(f"cannot spawn scorer {argv!r}: {e}") from e
        self._lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self):
        assert self.proc.stdout is not None
        for line in self.proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def send_line(self, line: str) -> None:
        if self.proc.stdin is None or self.proc.poll() is not None:
            raise ScorerError("scorer process is gone")
        try:
            self.proc.stdin.write(line + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, ValueError) as e:
            raise ScorerError(f"scorer transport closed: {e}") from e

    def recv_line(self, timeout: float) -> str:
        try:
            line = self._lines.get(timeout=timeout)
        except queue.Empty:
            raise ScorerTimeoutError(f"no response within {timeout}s") from None
        if line is None:
            raise ScorerError("scorer closed its output stream")
        return line

    def close(self):
        try:
            if self.proc.stdin:
                self.proc.stdin.close()
            self.proc.wait(timeout=5)
        except Exception:
            self.proc.kill()


class _TcpTransport:
    def __init__(self, host: str, port: int, timeout: float):
        try:
            self.sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as e:
            raise ScorerError(f"cannot connect to scorer at {host}:{port}: {e}") from e
        self.file = self.sock.makefile("rw", encoding="utf-8", newline="\n")

    def send_line(self, line: str) -> None:
        try:
            self.file.write(line + "\n")
            self.file.flush()
        except OSError as e:
            raise ScorerError(f"scorer transport closed: {e}") from e

    def recv_line(self, timeout: float) -> str:
        self.sock.settimeout(timeout)
        try:
            line = self.file.readline()
        except socket.timeout:
            raise ScorerTimeoutError(f"no response within {timeout}s") from None
        if not line:
            raise ScorerError("scorer closed the connection")
        return line

    def close(self):
        try:
            self.file.close()
            self.sock.close()
        except OSError:
            pass


class ScorerHandle:
    """One in-flight pipeline per handle; not safe to share across workers."""

    def __init__(self, transport, timeout: float):
        self._transport = transport
        self.timeout = timeout
        self._next_id = 0
        self._pending: dict[int, dict] = {}   # received, not yet claimed
        self._inflight: set[int] = set()      # sent, not yet resolved
        self.capabilities: frozenset[str] = frozenset()

    def handshake(self) -> None:
        self._transport.send_line(
            json.dumps({"op": "hello", "version": PROTOCOL_VERSION})
        )
        line = self._transport.recv_line(self.timeout)
        try:
            resp = json.loads(line)
        except json.JSONDecodeError as e:
            raise HandshakeError(f"bad handshake response {line!r}: {e}") from e
        if not isinstance(resp, dict) or resp.get("ok") is not True:
            raise HandshakeError(f"scorer refused handshake: {line.strip()!r}")
        if resp.get("version") != PROTOCOL_VERSION:
            raise VersionMismatchError(
                f"scorer speaks version {resp.get('version')}, need {PROTOCOL_VERSION}"
            )
        caps = resp.get("capabilities")
        if not isinstance(caps, list) or not set(caps) <= set(CAPABILITIES):
            raise HandshakeError(f"bad capability list: {caps!r}")
        self.capabilities = frozenset(caps)

    # -- raw request plumbing ------------------------------------------------

    def _fresh_id(self) -> int:
        self._next_id += 1
        return self._next_id

    def _read_response(self) -> dict:
        line = self._transport.recv_line(self.timeout)
        try:
            resp = json.loads(line)
        except json.JSONDecodeError as e:
            raise ScorerProtocolError(f"unparseable response line {line!r}") from e
        if not isinstance(resp, dict) or "id" not in resp:
            raise ScorerProtocolError(f"response without id: {line!r}")
        if resp["id"] not in self._inflight:
            raise ScorerProtocolError(f"response for unknown request id: {line!r}")
        return resp

    def _await_id(self, rid: int) -> dict:
        if rid in self._pending:
            self._inflight.discard(rid)
            return self._pending.pop(rid)
        while True:
            resp = self._read_response()
            if resp["id"] == rid:
                self._inflight.discard(rid)
                return resp
            self._pending[resp["id"]] = resp

    def score(self, op: str, **payload) -> dict:
        """Send one request; block for its response; retry once on timeout."""
        if op not in self.capabilities:
            raise CapabilityError(f"scorer did not declare capability {op!r}")
        request = {"id": self._fresh_id(), "op": op, **payload}
        self._inflight.add(request["id"])
        line = json.dumps(request, ensure_ascii=False)
        self._transport.send_line(line)
        try:
            resp = self._await_id(request["id"])
        except ScorerTimeoutError:
            self._transport.send_line(line)  # retriable exactly once
            resp = self._await_id(request["id"])
        return self._validate(request, resp)

    def score_batch(self, requests: list[dict]) -> list[dict]:
        """Pipelined: send all, then collect all, matching ids in any order."""
        for op in {r["op"] for r in requests}:
            if op not in self.capabilities:
                raise CapabilityError(f"scorer did not declare capability {op!r}")
        sent = []
        for req in requests:
            req = {"id": self._fresh_id(), **req}
            self._inflight.add(req["id"])
            self._transport.send_line(json.dumps(req, ensure_ascii=False))
            sent.append(req)
        return [self._validate(req, self._await_id(req["id"])) for req in sent]

    @staticmethod
    def _validate(request: dict, resp: dict) -> dict:
        if "error" in resp:
            raise ScorerError(f"scorer error for id {resp['id']}: {resp['error']}")
        if request["op"] in ("logp_sentence", "logp_cond"):
            value = resp.get("logp2")
            if (
                not isinstance(value, (int, float))
                or isinstance(value, bool)
                or not math.isfinite(value)
                or value > 0.0
            ):
                raise ScorerProtocolError(
                    f"bad logp2 in response {json.dumps(resp)!r}"
                )
        elif request["op"] == "classify":
            if resp.get("label") not in request["labels"]:
                raise ScorerProtocolError(
                    f"label not in request label set: {json.dumps(resp)!r}"
                )
        return resp

    def close(self):
        self._transport.close()


def open_scorer(config: ScorerConfig) -> ScorerHandle:
    """Spawn/connect and handshake; capabilities are verified before use."""
    if config.transport == "subprocess":
        transport = _StdioTransport(config.argv)
    elif config.transport == "tcp":
        transport = _TcpTransport(config.host, config.port, config.timeout)
    else:
        raise ScorerError(f"unknown transport {config.transport!r}")
    handle = ScorerHandle(transport, config.timeout)
    try:
        handle.handshake()
    except ScorerError:
        transport.close()
        raise
    return handle


# ---------------------------------------------------------------------------
# providers


@dataclass
class Providers:
    """Uniform scoring interface: internal models and external scorers are
    interchangeable behind these three callables."""

    logp_sentence: Callable[[Sequence[str]], float] | None = None
    q_logp: Callable[[Sequence[str], Sequence[str]], float] | None = None
    classify: Callable[[Sequence[str], Sequence[str]], str] | None = None
    sources: dict[str, str] = field(default_factory=dict)


def fallback_resolve(
    scorer: ScorerHandle | None = None,
    lm=None,
    reorder_model=None,
    use_for: Sequence[str] = CAPABILITIES,
) -> Providers:
    """External scorer per declared capability, internal models otherwise."""
    providers = Providers()
    external = scorer.capabilities if scorer is not None else frozenset()
    route = set(use_for) & set(external)

    if "logp_sentence" in route:
        providers.logp_sentence = lambda tokens: float(
            scorer.score("logp_sentence", tokens=list(tokens))["logp2"]
        )
        providers.sources["logp_sentence"] = "external"
    elif lm is not None:
        providers.logp_sentence = lm.logp_sentence
        providers.sources["logp_sentence"] = "internal"

    if "logp_cond" in route:
        providers.q_logp = lambda s, t: float(
            scorer.score("logp_cond", target=list(s), condition=list(t))["logp2"]
        )
        providers.sources["q_logp"] = "external"
    elif reorder_model is not None:
        from .reorder import q_logp as _q_logp

        providers.q_logp = lambda s, t: _q_logp(reorder_model, s, t)
        providers.sources["q_logp"] = "internal"

    if "classify" in route:
        providers.classify = lambda tokens, labels: str(
            scorer.score("classify", tokens=list(tokens), labels=list(labels))["label"]
        )
        providers.sources["classify"] = "external"

    return providers


# ---------------------------------------------------------------------------
# conformance suite


@dataclass(frozen=True)
class ConformanceReport:
    passed: bool
    checks: tuple[tuple[str, bool, str], ...]

    def failures(self) -> list[str]:
        return [f"{name}: {detail}" for name, ok, detail in self.checks if not ok]


def run_conformance(
    config: ScorerConfig, n_requests: int = 1000, seed: int = 0
) -> ConformanceReport:
    """Exercise a scorer at the raw line level: pipelining, id matching,
    base-2 value contracts, and survival of a malformed request line."""
    from .rng import SplitMix64

    gen = SplitMix64(seed)
    checks: list[tuple[str, bool, str]] = []

    if config.transport == "subprocess":
        transport = _StdioTransport(config.argv)
    else:
        transport = _TcpTransport(config.host, config.port, config.timeout)
    try:
        transport.send_line(json.dumps({"op": "hello", "version": PROTOCOL_VERSION}))
        hello = json.loads(transport.recv_line(config.timeout))
        caps = hello.get("capabilities", [])
        ok = (
            hello.get("ok") is True
            and hello.get("version") == PROTOCOL_VERSION
            and isinstance(caps, list)
            and len(caps) > 0
        )
        checks.append(("handshake", ok, json.dumps(hello)))
        if not ok:
            return ConformanceReport(False, tuple(checks))

        words = ["alpha", "beta", "gamma", "delta", "epsilon"]
        requests = []
        for i in range(1, n_requests + 1):
            op = caps[gen.randbelow(len(caps))]
            n_tok = 1 + gen.randbelow(6)
            tokens = [words[gen.randbelow(len(words))] for _ in range(n_tok)]
            if op == "logp_sentence":
                requests.append({"id": i, "op": op, "tokens": tokens})
            elif op == "logp_cond":
                requests.append(
                    {"id": i, "op": op, "target": tokens, "condition": tokens[::-1]}
                )
            else:
                requests.append(
                    {"id": i, "op": op, "tokens": tokens, "labels": ["yes", "no"]}
                )
        for req in requests:
            transport.send_line(json.dumps(req))
        responses = {}
        problems = []
        for _ in range(n_requests):
            resp = json.loads(transport.recv_line(config.timeout))
            rid = resp.get("id")
            if rid in responses:
                problems.append(f"duplicate id {rid}")
            responses[rid] = resp
        expected_ids = {r["id"] for r in requests}
        if set(responses) != expected_ids:
            problems.append(
                f"id mismatch: missing {sorted(expected_ids - set(responses))[:5]}"
            )
        by_id = {r["id"]: r for r in requests}
        for rid, resp in responses.items():
            req = by_id.get(rid)
            if req is None:
                continue
            if "error" in resp:
                problems.append(f"unexpected error for id {rid}: {resp['error']}")
            elif req["op"] in ("logp_sentence", "logp_cond"):
                v = resp.get("logp2")
                if (
                    not isinstance(v, (int, float))
                    or isinstance(v, bool)
                    or not math.isfinite(v)
                    or v > 0
                ):
                    problems.append(f"bad logp2 for id {rid}: {v!r}")
            elif resp.get("label") not in req["labels"]:
                problems.append(f"label outside set for id {rid}")
        checks.append(
            (
                "pipelined_requests",
                not problems,
                "; ".join(problems[:5]) if problems else f"{n_requests} ok",
            )
        )

        # error-line resilience: garbage line, then a valid request
        transport.send_line("this is not json {")
        err_resp = json.loads(transport.recv_line(config.timeout))
        got_error = "error" in err_resp
        probe_id = n_requests + 10
        op = caps[0]
        if op == "logp_sentence":
            probe = {"id": probe_id, "op": op, "tokens": ["alpha"]}
        elif op == "logp_cond":
            probe = {"id": probe_id, "op": op, "target": ["alpha"], "condition": ["alpha"]}
        else:
            probe = {"id": probe_id, "op": op, "tokens": ["alpha"], "labels": ["yes", "no"]}
        transport.send_line(json.dumps(probe))
        after = json.loads(transport.recv_line(config.timeout))
        survived = after.get("id") == probe_id and "error" not in after
        checks.append(
            (
                "error_line_resilience",
                got_error and survived,
                f"error_response={got_error}, loop_survived={survived}",
            )
        )
    finally:
        transport.close()

    return ConformanceReport(all(ok for _, ok, _ in checks), tuple(checks))
