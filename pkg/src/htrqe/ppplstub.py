"""Deterministic stand-in scorer speaking the pppl/1 protocol.

Lets the whole pipeline run (and be tested) without any ML runtime.
Two modes:

* ``constant``  — log_prob_sum = -token_count, so pppl == e for every
  text; handy for wiring tests.
* ``charclass`` — each token scores by how much of it is made of common
  English letter bigrams, so garbled text gets a higher pseudo-
  perplexity.  Purely a fixed function of the bytes: no model, no
  randomness.

Runs as a stdio loop (``python -m htrqe.ppplstub``) or a tiny HTTP
server (``--http PORT``); both speak the same NDJSON records.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

PROTOCOL = "pppl/1"

MODES = ("constant", "charclass")

#: Frequent English letter bigrams; coverage by these drives the
#: charclass score.
COMMON_BIGRAMS = frozenset(
    """th he in er an re on at en nd ti es or te of ed is it al ar st to
    nt ng se ha as ou io le ve co me de hi ri ro ic ne ea ra ce li ch ll
    be ma si om ur ta la ns di fo ho pe ec us wa na lo""".split()
)


def token_log_prob(token: str) -> float:
    """Natural-log probability in [-4, -1]: richer in common bigrams
    means closer to -1."""
    if len(token) < 2:
        coverage = 0.5
    else:
        pairs = [token[i : i + 2] for i in range(len(token) - 1)]
        coverage = sum(p in COMMON_BIGRAMS for p in pairs) / len(pairs)
    return -1.0 - 3.0 * (1.0 - coverage)


def score_record(record: dict, mode: str, fail_on: str | None = None) -> dict:
    rid = str(record.get("id", ""))
    text = record.get("text")
    if not isinstance(text, str) or not text.strip():
        return {"id": rid, "error": "empty"}
    if fail_on and fail_on in text:
        return {"id": rid, "error": f"forced failure on {fail_on!r}"}
    tokens = text.split()
    if mode == "constant":
        log_prob_sum = -float(len(tokens))
    else:
        log_prob_sum = sum(token_log_prob(t) for t in tokens)
    return {
        "id": rid,
        "pppl": math.exp(-log_prob_sum / len(tokens)),
        "token_count": len(tokens),
        "log_prob_sum": log_prob_sum,
        "subtoken_count": sum(len(t) for t in tokens),
    }


def handshake(mode: str) -> dict:
    return {"protocol": PROTOCOL, "models": [f"stub-{mode}"]}


def handle_line(line: str, mode: str, fail_on: str | None) -> dict:
    try:
        record = json.loads(line)
        if not isinstance(record, dict):
            raise ValueError("not an object")
    except ValueError:
        return {"id": "", "error": "unparsable request"}
    return score_record(record, mode, fail_on)


def stdio_loop(mode: str, fail_on: str | None, stdin=None, stdout=None) -> int:
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    print(json.dumps(handshake(mode), sort_keys=True), file=stdout, flush=True)
    for line in stdin:
        if not line.strip():
            continue
        reply = handle_line(line, mode, fail_on)
        print(json.dumps(reply, sort_keys=True), file=stdout, flush=True)
    return 0


def serve_http(mode: str, fail_on: str | None = None, host: str = "127.0.0.1", port: int = 0):
    """Build (not run) an HTTP server answering POSTed request batches."""

    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):  # noqa: N802 (http.server API)
            length = int(self.headers.get("Content-Length", 0))
            body = self.rfile.read(length).decode("utf-8")
            out = [json.dumps(handshake(mode), sort_keys=True)]
            for line in body.splitlines():
                if line.strip():
                    out.append(json.dumps(handle_line(line, mode, fail_on), sort_keys=True))
            payload = ("\n".join(out) + "\n").encode("utf-8")
            self.send_response(200)
            self.send_header("Content-Type", "application/x-ndjson")
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

        def log_message(self, *args):  # keep test output quiet
            pass

    return ThreadingHTTPServer((host, port), Handler)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="deterministic pppl/1 stub scorer")
    parser.add_argument("--mode", choices=MODES, default="charclass")
    parser.add_argument("--fail-on", default=None, help="force per-item errors on texts containing this substring")
    parser.add_argument("--http", type=int, default=None, metavar="PORT", help="serve HTTP instead of stdio (0 = ephemeral port)")
    args = parser.parse_args(argv)
    if args.http is None:
        return stdio_loop(args.mode, args.fail_on)
    server = serve_http(args.mode, args.fail_on, port=args.http)
    print(f"listening on http://127.0.0.1:{server.server_port}/score", file=sys.stderr, flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    sys.exit(main())
