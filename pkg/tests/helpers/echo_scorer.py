#!/usr/bin/env python3
"""Minimal scorer used by the transport/protocol tests.

Fixed deterministic values (logp_sentence -10, logp_cond -5, classify =
last label) plus flags that make it misbehave in specific ways so the
client's failure handling can be exercised.
"""

import argparse
import json
import sys


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--version", type=int, default=1)
    parser.add_argument("--capabilities", default="logp_sentence,logp_cond,classify")
    parser.add_argument("--corrupt", action="store_true",
                        help="emit a positive logp2 (protocol violation)")
    parser.add_argument("--bad-label", action="store_true",
                        help="classify with a label outside the request set")
    parser.add_argument("--drop-first", action="store_true",
                        help="never answer the first scoring request")
    args = parser.parse_args()
    caps = [c for c in args.capabilities.split(",") if c]

    dropped = False

    def emit(obj):
        sys.stdout.write(json.dumps(obj) + "\n")
        sys.stdout.flush()

    for line in sys.stdin:
        if not line.strip():
            continue
        try:
            req = json.loads(line)
        except json.JSONDecodeError as e:
            emit({"id": None, "error": f"bad json: {e}"})
            continue
        op = req.get("op")
        if op == "hello":
            emit({"ok": True, "version": args.version, "capabilities": caps})
            continue
        rid = req.get("id")
        if op not in caps:
            emit({"id": rid, "error": f"no capability {op}"})
            continue
        if args.drop_first and not dropped:
            dropped = True
            continue
        if op == "logp_sentence":
            emit({"id": rid, "logp2": 5.0 if args.corrupt else -10.0})
        elif op == "logp_cond":
            emit({"id": rid, "logp2": -5.0})
        elif op == "classify":
            label = "unlisted" if args.bad_label else req["labels"][-1]
            emit({"id": rid, "label": label})


if __name__ == "__main__":
    main()
