"""The pppl/1 service loop: newline-delimited JSON on stdin/stdout.

On start the service prints a handshake line
``{"protocol": "pppl/1", "models": [...]}`` and then answers one
request per line until EOF.  Request: ``{"id", "text", "model_hint"}``.
Response: ``{"id", "pppl", "token_count", "log_prob_sum"}`` (plus
``subtoken_count`` for diagnostics) or ``{"id", "error"}``.  A broken
request line gets an error response rather than killing the loop; only
a model that cannot be loaded aborts the process (nonzero exit).
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import ConfigError, ScorerConfig
from .scoring import MlmScorer, ScoreError

PROTOCOL = "pppl/1"


def handle_line(scorer: MlmScorer, line: str) -> dict:
    try:
        record = json.loads(line)
        request_id = record["id"]
    except (json.JSONDecodeError, TypeError, KeyError):
        return {"id": "", "error": "unparsable request"}
    if not isinstance(request_id, str):
        return {"id": "", "error": "unparsable request"}
    try:
        result = scorer.score_text(record.get("text"))
    except ScoreError as exc:
        return {"id": request_id, "error": exc.code}
    return {"id": request_id, **result}


def stdio_loop(scorer: MlmScorer, stdin=None, stdout=None) -> int:
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout

    def emit(record: dict) -> None:
        stdout.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")
        stdout.flush()

    emit({"protocol": PROTOCOL, "models": scorer.models})
    for line in stdin:
        if not line.strip():
            continue
        emit(handle_line(scorer, line))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mlmscorer", description="pppl/1 masked-LM scoring service"
    )
    parser.add_argument("--model", help="model name or path (or MLMSCORER_MODEL)")
    parser.add_argument("--device", help="torch device hint (or MLMSCORER_DEVICE)")
    parser.add_argument("--max-seq", type=int, help="max subtoken length (or MLMSCORER_MAX_SEQ)")
    parser.add_argument("--batch-size", type=int, help="masked copies per forward (or MLMSCORER_BATCH)")
    args = parser.parse_args(argv)
    try:
        config = ScorerConfig.resolve(
            model=args.model,
            device=args.device,
            max_sequence_length=args.max_seq,
            batch_size=args.batch_size,
        )
        scorer = MlmScorer(config)
    except (ConfigError, OSError, ValueError, RuntimeError) as exc:
        print(f"mlmscorer: cannot start: {exc}", file=sys.stderr)
        return 2
    return stdio_loop(scorer)


if __name__ == "__main__":
    sys.exit(main())
