"""Line-delimited JSON scoring adapter.

Speaks the external-scorer wire protocol on stdin/stdout: a hello
handshake followed by one JSON request per line, one JSON response per
line, ids echoed, pipelining allowed. Log probabilities on the wire are
base 2, finite, and <= 0.

Two backends:

* conformance - deterministic values for protocol testing:
  logp_sentence = -(token count), logp_cond = -(target token count)/2,
  classify = first label.
* user-hook - the caller supplies scoring callables (any log base; the
  adapter converts to base 2), e.g. wrapping a pretrained sequence model
  and a task classifier:

      logp_sentence hook:  f(tokens) -> log probability
      logp_cond hook:      f(target_tokens, condition_tokens) -> log probability
      classify hook:       f(tokens, labels) -> label (must be in labels)

A malformed request line gets an error response with the request's id
when one can be recovered (null otherwise); the serve loop never dies on
a single bad line.
"""

from __future__ import annotations

import argparse
import importlib
import json
import math
import sys
from dataclasses import dataclass
from typing import Callable, Sequence

PROTOCOL_VERSION = 1
ALL_OPS = ("logp_sentence", "logp_cond", "classify")


@dataclass
class AdapterConfig:
    backend: str = "conformance"
    capabilities: tuple[str, ...] = ALL_OPS
    log_base: float = 2.0
    sequence_scorer: Callable[[Sequence[str]], float] | None = None
    cond_scorer: Callable[[Sequence[str], Sequence[str]], float] | None = None
    classifier: Callable[[Sequence[str], Sequence[str]], str] | None = None

    def __post_init__(self):
        unknown = set(self.capabilities) - set(ALL_OPS)
        if unknown:
            raise ValueError(f"unknown capabilities: {sorted(unknown)}")
        if not self.capabilities:
            raise ValueError("at least one capability required")
        if self.log_base <= 1.0:
            raise ValueError("log base must exceed 1")


def conformance_logp_sentence(tokens):
    return -float(len(tokens))


def conformance_logp_cond(target, condition):
    return -float(len(target)) / 2.0


def conformance_classify(tokens, labels):
    return labels[0]


def _to_bits(value: float, base: float) -> float:
    return float(value) * math.log2(base)


class _Handlers:
    def __init__(self, config: AdapterConfig):
        if config.backend == "conformance":
            seq, cond, cls = (
                conformance_logp_sentence,
                conformance_logp_cond,
                conformance_classify,
            )
            base = 2.0
        elif config.backend == "user-hook":
            seq, cond, cls = (
                config.sequence_scorer,
                config.cond_scorer,
                config.classifier,
            )
            base = config.log_base
        else:
            raise ValueError(f"unknown backend {config.backend!r}")
        self.base = base
        self.seq = seq
        self.cond = cond
        self.cls = cls
        self.capabilities = tuple(
            op
            for op in config.capabilities
            if {"logp_sentence": seq, "logp_cond": cond, "classify": cls}[op]
            is not None
        )
        if not self.capabilities:
            raise ValueError("no capability has a usable handler")

    def handle(self, req: dict) -> dict:
        rid = req.get("id")
        op = req.get("op")
        if not isinstance(rid, int):
            return {"id": None, "error": "request id must be an integer"}
        if op not in self.capabilities:
            return {"id": rid, "error": f"capability {op!r} not available"}
        try:
            if op == "logp_sentence":
                tokens = _token_list(req, "tokens")
                value = _to_bits(self.seq(tokens), self.base)
            elif op == "logp_cond":
                target = _token_list(req, "target")
                condition = _token_list(req, "condition")
                value = _to_bits(self.cond(target, condition), self.base)
            else:
                tokens = _token_list(req, "tokens")
                labels = _token_list(req, "labels")
                label = self.cls(tokens, labels)
                if label not in labels:
                    return {"id": rid, "error": "classifier returned label outside set"}
                return {"id": rid, "label": label}
        except (KeyError, TypeError, ValueError) as e:
            return {"id": rid, "error": str(e)}
        if not math.isfinite(value) or value > 0.0:
            return {"id": rid, "error": f"hook produced invalid log probability {value}"}
        return {"id": rid, "logp2": value}


def _token_list(req: dict, key: str) -> list[str]:
    value = req.get(key)
    if not isinstance(value, list) or not all(isinstance(t, str) for t in value):
        raise ValueError(f"field {key!r} must be a list of strings")
    if key == "labels" and not value:
        raise ValueError("label set must be nonempty")
    return value


def serve(config: AdapterConfig, stdin=None, stdout=None) -> None:
    """Run the handshake + request loop until EOF on stdin."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    handlers = _Handlers(config)

    def emit(obj):
        stdout.write(json.dumps(obj, ensure_ascii=False) + "\n")
        stdout.flush()

    for line in stdin:
        if not line.strip():
            continue
        try:
            req = json.loads(line)
            if not isinstance(req, dict):
                raise ValueError("request must be a JSON object")
        except (json.JSONDecodeError, ValueError) as e:
            emit({"id": None, "error": f"unparseable request: {e}"})
            continue
        if req.get("op") == "hello":
            if req.get("version") != PROTOCOL_VERSION:
                emit(
                    {
                        "ok": False,
                        "error": f"unsupported protocol version {req.get('version')}",
                    }
                )
                continue
            emit(
                {
                    "ok": True,
                    "version": PROTOCOL_VERSION,
                    "capabilities": list(handlers.capabilities),
                }
            )
            continue
        emit(handlers.handle(req))


def _import_hook(spec: str):
    module_name, _, attr = spec.partition(":")
    if not module_name or not attr:
        raise ValueError(f"hook must look like 'package.module:callable', got {spec!r}")
    module = importlib.import_module(module_name)
    return getattr(module, attr)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pyscorer", description="line-delimited JSON scoring adapter"
    )
    parser.add_argument(
        "--backend", choices=("conformance", "user-hook"), default="conformance"
    )
    parser.add_argument(
        "--capabilities",
        default=",".join(ALL_OPS),
        help="comma-separated subset of: " + ", ".join(ALL_OPS),
    )
    parser.add_argument(
        "--log-base",
        type=float,
        default=2.0,
        help="log base of user-hook outputs (converted to base 2 on the wire)",
    )
    parser.add_argument("--sequence-scorer", help="user hook 'module:callable'")
    parser.add_argument("--cond-scorer", help="user hook 'module:callable'")
    parser.add_argument("--classifier", help="user hook 'module:callable'")
    args = parser.parse_args(argv)

    caps = tuple(c.strip() for c in args.capabilities.split(",") if c.strip())
    try:
        config = AdapterConfig(
            backend=args.backend,
            capabilities=caps,
            log_base=args.log_base,
            sequence_scorer=_import_hook(args.sequence_scorer)
            if args.sequence_scorer
            else None,
            cond_scorer=_import_hook(args.cond_scorer) if args.cond_scorer else None,
            classifier=_import_hook(args.classifier) if args.classifier else None,
        )
        serve(config)
    except (ValueError, ImportError, AttributeError) as e:
        print(f"pyscorer: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
