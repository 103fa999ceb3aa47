"""Command-line front end for the quality-estimation pipeline.

One executable, ``htrqe``, exposes corpus preparation, resource
building (lexicon, character n-gram sets, n-gram LM), metric scoring,
CER computation, controlled corruption, full ranking studies, and
report rendering.

Exit codes: 0 success, 1 usage error, 2 data error (bad or missing
input), 3 partial metric failure (an enabled metric produced no value
for any model output; the report is still written).

A study is described by a JSON or TOML config file::

    test_set_id = "demo"
    seed = 7
    metrics = ["token_ratio", "3gram", "7gram", "ppl", "pppl"]
    gt = "gt.txt"                      # optional ground truth

    [prep]
    lowercase = true
    keep_duplicates = false
    boilerplate = []

    [resources]
    reference = "reference.txt"        # build resources from this text
    lm_order = 3
    # ... or point at prebuilt files instead of `reference`:
    # lexicon = "ref.lexicon"
    # ngrams = ["grams/3gram.ngrams", "grams/7gram.ngrams"]
    # lm = "ref.arpa"

    [scorer]                           # optional; enables `pppl`
    argv = ["python3", "-m", "htrqe.ppplstub"]
    # ... or: url = "http://127.0.0.1:8080/score"

    [[outputs]]                        # one block per recognition model
    model_id = "model-a"
    path = "outputs/model-a.txt"

    # ... or synthesize pseudo-models by corrupting a clean text:
    # [synthetic]
    # levels = [0.0, 0.05, 0.1, 0.2]
    # source = "reference.txt"

All randomness flows from the seed (the ``--seed`` flag overrides the
config value); equal seeds give byte-identical reports.  The
``HTRQE_SCORER`` environment variable overrides the configured scorer
endpoint: a URL, a command line, or ``none`` to disable it.
"""

from __future__ import annotations

import argparse
import contextlib
import dataclasses
import json
import os
import shlex
import string
import sys
from dataclasses import dataclass

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .cer import corpus_cer
from .errors import DataError, TransportError
from .harness import (
    DEFAULT_METRICS,
    CorruptionSpec,
    ModelOutput,
    StudyResources,
    build_resources,
    corrupt,
    corrupt_series,
    render_report,
    report_json,
    run_study,
    study_report,
)
from .lexmetrics import (
    build_lexicon,
    build_ngram_set,
    load_lexicon,
    load_ngram_set,
    ngram_ratio,
    save_lexicon,
    save_ngram_set,
    token_ratio,
)
from .ngramlm import perplexity, read_arpa, train, write_arpa
from .ppplclient import HttpEndpoint, PpplRequest, SubprocessEndpoint, document_pppl, score_batch
from .textprep import PrepConfig, RawCorpus, clean, clean_with_report, read_corpus, tokenize, write_corpus

SCORER_ENV = "HTRQE_SCORER"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_PARTIAL = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; this tool reserves 2 for data
    errors, so usage problems are remapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_prep_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--no-lowercase", action="store_true", help="keep letter case")
    p.add_argument(
        "--keep-duplicates", action="store_true", help="do not drop repeated lines"
    )
    p.add_argument(
        "--boilerplate",
        action="append",
        default=[],
        metavar="SUBSTRING",
        help="drop lines containing SUBSTRING (repeatable)",
    )


def _prep_from_args(args) -> PrepConfig:
    return PrepConfig.latin(
        lowercase=not args.no_lowercase,
        dedup_scope="document" if args.keep_duplicates else "line",
        boilerplate_patterns=tuple(args.boilerplate),
    )


def _prep_from_dict(d: dict) -> PrepConfig:
    allowed = {"lowercase", "keep_duplicates", "boilerplate"}
    unknown = set(d) - allowed
    if unknown:
        raise DataError(f"unknown prep config keys: {sorted(unknown)}")
    return PrepConfig.latin(
        lowercase=bool(d.get("lowercase", True)),
        dedup_scope="document" if d.get("keep_duplicates") else "line",
        boilerplate_patterns=tuple(d.get("boilerplate", ())),
    )


def _load_text(path: str, cfg: PrepConfig):
    return tokenize(clean(read_corpus(path), cfg), cfg)


def _print_json(payload: dict) -> None:
    print(json.dumps(payload, sort_keys=True, indent=2))


# ---------------------------------------------------------------------------
# plain subcommands


def cmd_prep(args) -> int:
    cfg = _prep_from_args(args)
    cleaned, report = clean_with_report(read_corpus(args.input), cfg)
    write_corpus(cleaned, args.output)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(report, fh, sort_keys=True, indent=2)
            fh.write("\n")
    _print_json(report)
    return EXIT_OK


def cmd_lexicon_build(args) -> int:
    cfg = _prep_from_args(args)
    lex = build_lexicon(_load_text(args.input, cfg))
    save_lexicon(lex, args.output)
    _print_json({"types": len(lex)})
    return EXIT_OK


def cmd_ngrams_build(args) -> int:
    cfg = _prep_from_args(args)
    orders = _parse_orders(args.orders)
    text = _load_text(args.input, cfg)
    os.makedirs(args.output, exist_ok=True)
    counts = {}
    for n in orders:
        gs = build_ngram_set(text, n)
        save_ngram_set(gs, os.path.join(args.output, f"{n}gram.ngrams"))
        counts[f"{n}gram"] = len(gs)
    _print_json(counts)
    return EXIT_OK


def _parse_orders(spec: str) -> tuple[int, ...]:
    try:
        orders = tuple(int(part) for part in spec.split(",") if part.strip())
    except ValueError:
        raise DataError(f"bad n-gram order list: {spec!r}") from None
    if not orders or len(set(orders)) != len(orders):
        raise DataError(f"bad n-gram order list: {spec!r}")
    return orders


def cmd_lm_train(args) -> int:
    cfg = _prep_from_args(args)
    model = train(_load_text(args.input, cfg), args.order)
    with open(args.output, "w", encoding="utf-8") as fh:
        fh.write(write_arpa(model))
    _print_json({"order": model.order, "vocab": len(model.vocab)})
    return EXIT_OK


def cmd_lm_ppl(args) -> int:
    cfg = _prep_from_args(args)
    with open(args.model, encoding="utf-8") as fh:
        model = read_arpa(fh.read())
    text = _load_text(args.input, cfg)
    _check_digest(args.model, model.metadata.get("prep_digest", ""), text.prep_digest)
    result = perplexity(model, text, oov_mode=args.oov_mode)
    _print_json(
        {
            "ppl": result.ppl,
            "cross_entropy": result.cross_entropy,
            "token_count": result.token_count,
            "oov_count": result.oov_count,
        }
    )
    return EXIT_OK


def cmd_cer(args) -> int:
    ref = read_corpus(args.reference).lines
    hyp = read_corpus(args.hypothesis).lines
    if len(ref) != len(hyp):
        raise DataError(
            f"line count mismatch: {args.reference} has {len(ref)}, "
            f"{args.hypothesis} has {len(hyp)}"
        )
    result = corpus_cer(zip(ref, hyp), fold_case=args.fold_case)
    _print_json(
        {"cer": result.cer, "distance": result.distance, "ref_len": result.ref_len}
    )
    return EXIT_OK


def cmd_corrupt(args) -> int:
    lines = read_corpus(args.input).lines
    spec = CorruptionSpec(
        target_cer=args.target_cer,
        seed=args.seed,
        charset=args.charset,
    )
    corrupted, realized = corrupt(lines, spec)
    write_corpus(RawCorpus(lines=corrupted, source_id=args.output), args.output)
    _print_json(
        {"cer": realized.cer, "distance": realized.distance, "ref_len": realized.ref_len}
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# scoring


def _check_digest(path: str, resource_digest: str, text_digest: str) -> None:
    if resource_digest and resource_digest != text_digest:
        raise DataError(
            f"{path}: built under a different preprocessing config than this text"
        )


def _make_endpoint(spec):
    """An endpoint from a URL string, a command string, or an argv list."""
    if isinstance(spec, str):
        if spec.startswith(("http://", "https://")):
            return HttpEndpoint(spec)
        return SubprocessEndpoint(shlex.split(spec))
    return SubprocessEndpoint(list(spec))


def _resolve_scorer(configured):
    """Apply the environment override on top of the configured endpoint
    spec; None means the pseudo-perplexity metric stays unavailable."""
    env = os.environ.get(SCORER_ENV)
    if env is not None:
        env = env.strip()
        if env in ("", "none"):
            return None
        return _make_endpoint(env)
    if configured is None:
        return None
    return _make_endpoint(configured)


@contextlib.contextmanager
def _scorer_session(endpoint):
    if isinstance(endpoint, SubprocessEndpoint):
        with endpoint:
            yield endpoint
    else:
        yield endpoint


def cmd_score(args) -> int:
    cfg = _prep_from_args(args)
    text = _load_text(args.input, cfg)
    values: dict[str, float] = {}
    errors: dict[str, str] = {}

    def attempt(metric_id, fn):
        try:
            values[metric_id] = fn()
        except (DataError, TransportError) as exc:
            errors[metric_id] = str(exc)

    if args.lexicon:
        lex = load_lexicon(args.lexicon)
        _check_digest(args.lexicon, lex.prep_digest, text.prep_digest)
        attempt("token_ratio", lambda: token_ratio(text, lex).value)
    for path in args.ngrams or ():
        gs = load_ngram_set(path)
        _check_digest(path, gs.prep_digest, text.prep_digest)
        attempt(f"{gs.order}gram", lambda gs=gs: ngram_ratio(text, gs).value)
    if args.lm:
        with open(args.lm, encoding="utf-8") as fh:
            model = read_arpa(fh.read())
        _check_digest(args.lm, model.metadata.get("prep_digest", ""), text.prep_digest)
        attempt("ppl", lambda: perplexity(model, text).ppl)
    endpoint = _resolve_scorer(args.scorer)
    if endpoint is not None:
        requests = [
            PpplRequest(id=f"s{i}", text=" ".join(sent))
            for i, sent in enumerate(text.sentence_tokens())
        ]
        attempt(
            "pppl",
            lambda: _pppl_of(requests, endpoint),
        )

    if not values and not errors:
        raise DataError("no metric resources given (see --lexicon/--ngrams/--lm/--scorer)")
    _print_json({"metrics": values, "errors": errors})
    return EXIT_PARTIAL if errors else EXIT_OK


def _pppl_of(requests, endpoint) -> float:
    with _scorer_session(endpoint) as ep:
        responses = score_batch(requests, ep)
    return document_pppl(responses)


# ---------------------------------------------------------------------------
# studies


@dataclass(frozen=True)
class StudyConfig:
    """A ranking study, fully described: preprocessing, resources (built
    from a reference text or loaded from files), model outputs (given as
    files or synthesized by corruption), metrics, seed."""

    test_set_id: str
    prep: PrepConfig
    seed: int
    metrics: tuple[str, ...]
    reference: str | None
    lexicon: str | None
    ngrams: tuple[str, ...]
    lm: str | None
    lm_order: int
    scorer: object
    outputs: tuple[tuple[str, str], ...]
    gt: str | None
    synthetic_levels: tuple[float, ...]
    synthetic_source: str | None

    _TOP_KEYS = {
        "test_set_id",
        "seed",
        "metrics",
        "prep",
        "resources",
        "scorer",
        "outputs",
        "gt",
        "synthetic",
    }

    @classmethod
    def load(cls, path: str) -> "StudyConfig":
        with open(path, "rb") as fh:
            raw = fh.read()
        try:
            if path.endswith(".toml"):
                data = tomllib.loads(raw.decode("utf-8"))
            else:
                data = json.loads(raw.decode("utf-8"))
        except (tomllib.TOMLDecodeError, json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise DataError(f"{path}: unreadable study config: {exc}") from exc
        return cls.from_dict(data, base_dir=os.path.dirname(os.path.abspath(path)))

    @classmethod
    def from_dict(cls, data: dict, base_dir: str = ".") -> "StudyConfig":
        if not isinstance(data, dict):
            raise DataError("study config must be a table/object at top level")
        unknown = set(data) - cls._TOP_KEYS
        if unknown:
            raise DataError(f"unknown study config keys: {sorted(unknown)}")

        def _path(p):
            return p if os.path.isabs(p) else os.path.join(base_dir, p)

        resources = data.get("resources", {})
        unknown = set(resources) - {"reference", "lexicon", "ngrams", "lm", "lm_order"}
        if unknown:
            raise DataError(f"unknown resources config keys: {sorted(unknown)}")
        reference = resources.get("reference")
        lexicon = resources.get("lexicon")
        ngrams = tuple(resources.get("ngrams", ()))
        lm = resources.get("lm")
        if reference is not None and (lexicon or ngrams or lm):
            raise DataError(
                "give either resources.reference or prebuilt resource paths, not both"
            )
        scorer = data.get("scorer")
        if isinstance(scorer, dict):
            if "url" in scorer:
                scorer = scorer["url"]
            elif "argv" in scorer:
                scorer = tuple(scorer["argv"])
            else:
                raise DataError("scorer config needs `argv` or `url`")
        outputs = []
        for o in data.get("outputs", ()):
            if not isinstance(o, dict) or "model_id" not in o or "path" not in o:
                raise DataError("each outputs entry needs model_id and path")
            outputs.append((o["model_id"], _path(o["path"])))
        outputs = tuple(outputs)
        synthetic = data.get("synthetic", {})
        levels = tuple(float(x) for x in synthetic.get("levels", ()))
        source = synthetic.get("source", reference)
        if outputs and levels:
            raise DataError("give either explicit outputs or a synthetic block, not both")
        if not outputs and not levels:
            raise DataError("study config lists no outputs and no synthetic levels")
        if levels and source is None:
            raise DataError("synthetic mode needs a source text (or resources.reference)")
        metrics = data.get("metrics", DEFAULT_METRICS)
        if isinstance(metrics, str) or not all(isinstance(m, str) for m in metrics):
            raise DataError("metrics must be a list of metric ids")
        metrics = tuple(metrics)
        return cls(
            test_set_id=str(data.get("test_set_id", "study")),
            prep=_prep_from_dict(data.get("prep", {})),
            seed=int(data.get("seed", 0)),
            metrics=metrics,
            reference=_path(reference) if reference else None,
            lexicon=_path(lexicon) if lexicon else None,
            ngrams=tuple(_path(p) for p in ngrams),
            lm=_path(lm) if lm else None,
            lm_order=int(resources.get("lm_order", 3)),
            scorer=scorer,
            outputs=outputs,
            gt=_path(data["gt"]) if data.get("gt") else None,
            synthetic_levels=levels,
            synthetic_source=_path(source) if levels and source else None,
        )

    def referenced_files(self) -> list[str]:
        paths = [self.reference, self.lexicon, self.lm, self.gt, self.synthetic_source]
        paths.extend(self.ngrams)
        paths.extend(p for _, p in self.outputs)
        return [p for p in paths if p]

    def check_files_exist(self) -> None:
        for p in self.referenced_files():
            if not os.path.isfile(p):
                raise DataError(f"missing resource file: {p}")

    def gram_orders(self) -> tuple[int, ...]:
        try:
            return tuple(
                sorted(int(m[:-4]) for m in self.metrics if m.endswith("gram"))
            )
        except ValueError as exc:
            raise DataError(f"unknown metric in config: {exc}") from None


def _resources_from_config(cfg: StudyConfig, scorer) -> StudyResources:
    if cfg.reference:
        return build_resources(
            _load_text(cfg.reference, cfg.prep),
            cfg.prep,
            lm_order=cfg.lm_order,
            ngram_orders=cfg.gram_orders(),
            scorer=scorer,
        )
    prep_digest = cfg.prep.digest()
    lexicon = None
    if cfg.lexicon:
        lexicon = load_lexicon(cfg.lexicon)
        _check_digest(cfg.lexicon, lexicon.prep_digest, prep_digest)
    ngram_sets = {}
    for path in cfg.ngrams:
        gs = load_ngram_set(path)
        _check_digest(path, gs.prep_digest, prep_digest)
        ngram_sets[gs.order] = gs
    lm = None
    if cfg.lm:
        with open(cfg.lm, encoding="utf-8") as fh:
            lm = read_arpa(fh.read())
        _check_digest(cfg.lm, lm.metadata.get("prep_digest", ""), prep_digest)
    for metric in cfg.metrics:
        if metric == "token_ratio" and lexicon is None:
            raise DataError("metric token_ratio enabled but no lexicon configured")
        if metric.endswith("gram") and int(metric[:-4]) not in ngram_sets:
            raise DataError(f"metric {metric} enabled but no matching n-gram set configured")
        if metric == "ppl" and lm is None:
            raise DataError("metric ppl enabled but no language model configured")
    return StudyResources(
        lexicon=lexicon, ngram_sets=ngram_sets, lm=lm, prep=cfg.prep, scorer=scorer
    )


def _outputs_from_config(cfg: StudyConfig):
    """Returns (outputs, gt_lines); gt_lines is None without ground truth."""
    if cfg.synthetic_levels:
        source = clean(read_corpus(cfg.synthetic_source), cfg.prep)
        outputs, _ = corrupt_series(
            source.lines,
            cfg.synthetic_levels,
            seed=cfg.seed,
            prep=cfg.prep,
            test_set_id=cfg.test_set_id,
        )
        return outputs, source.lines
    outputs = []
    for model_id, path in cfg.outputs:
        raw = read_corpus(path)
        outputs.append(
            ModelOutput(
                model_id=model_id,
                test_set_id=cfg.test_set_id,
                text=tokenize(clean(raw, cfg.prep), cfg.prep),
                raw_text=raw.lines,
            )
        )
    gt_lines = read_corpus(cfg.gt).lines if cfg.gt else None
    return outputs, gt_lines


def cmd_study_run(args) -> int:
    if args.tables and not args.output:
        print("error: --tables needs -o (the JSON report owns stdout)", file=sys.stderr)
        return EXIT_USAGE
    if args.jobs is not None and args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    cfg = StudyConfig.load(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    cfg.check_files_exist()
    endpoint = _resolve_scorer(cfg.scorer)
    with _scorer_session(endpoint):
        resources = _resources_from_config(cfg, endpoint)
        outputs, gt_lines = _outputs_from_config(cfg)
        study = run_study(
            resources,
            outputs,
            gt=gt_lines,
            metrics=cfg.metrics,
            jobs=args.jobs or os.cpu_count() or 1,
        )
    report = study_report(study)
    payload = report_json(report)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(payload)
    else:
        sys.stdout.write(payload)
    if args.tables:
        sys.stdout.write(render_report(report))
    return EXIT_PARTIAL if study.all_failed() else EXIT_OK


def cmd_report_render(args) -> int:
    with open(args.report, encoding="utf-8") as fh:
        try:
            report = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{args.report}: not a JSON report: {exc}") from exc
    sys.stdout.write(render_report(report))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _build_parser() -> _Parser:
    parser = _Parser(prog="htrqe", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("prep", help="clean a raw text file")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--report", help="also write the drop-count report to this JSON file")
    _add_prep_flags(p)
    p.set_defaults(func=cmd_prep)

    lex = sub.add_parser("lexicon", help="reference lexicon commands").add_subparsers(
        dest="subcommand", required=True, metavar="SUBCOMMAND"
    )
    p = lex.add_parser("build", help="build a lexicon from a reference text")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    _add_prep_flags(p)
    p.set_defaults(func=cmd_lexicon_build)

    ng = sub.add_parser("ngrams", help="character n-gram set commands").add_subparsers(
        dest="subcommand", required=True, metavar="SUBCOMMAND"
    )
    p = ng.add_parser("build", help="build n-gram sets from a reference text")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.add_argument("--orders", default="2,3,4,5,6,7", help="comma-separated orders")
    _add_prep_flags(p)
    p.set_defaults(func=cmd_ngrams_build)

    lm = sub.add_parser("lm", help="n-gram language model commands").add_subparsers(
        dest="subcommand", required=True, metavar="SUBCOMMAND"
    )
    p = lm.add_parser("train", help="train a Kneser-Ney model, write ARPA")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--order", type=int, default=3)
    _add_prep_flags(p)
    p.set_defaults(func=cmd_lm_train)
    p = lm.add_parser("ppl", help="perplexity of a text under an ARPA model")
    p.add_argument("model")
    p.add_argument("input")
    p.add_argument("--oov-mode", choices=("include", "exclude"), default="include")
    _add_prep_flags(p)
    p.set_defaults(func=cmd_lm_ppl)

    p = sub.add_parser("cer", help="character error rate between two aligned files")
    p.add_argument("reference")
    p.add_argument("hypothesis")
    p.add_argument("--fold-case", action="store_true")
    p.set_defaults(func=cmd_cer)

    p = sub.add_parser("score", help="score one text with the enabled metrics")
    p.add_argument("input")
    p.add_argument("--lexicon")
    p.add_argument("--ngrams", action="append", metavar="FILE", help="n-gram set file (repeatable)")
    p.add_argument("--lm", help="ARPA model file")
    p.add_argument("--scorer", help="pseudo-perplexity endpoint: URL or command line")
    _add_prep_flags(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("corrupt", help="inject character noise at a target CER")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--target-cer", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--charset", default=string.ascii_lowercase)
    p.set_defaults(func=cmd_corrupt)

    st = sub.add_parser("study", help="ranking study commands").add_subparsers(
        dest="subcommand", required=True, metavar="SUBCOMMAND"
    )
    p = st.add_parser("run", help="run the study described by a JSON/TOML config")
    p.add_argument("config")
    p.add_argument("-o", "--output", help="write the JSON report here instead of stdout")
    p.add_argument("--tables", action="store_true", help="also print aligned tables")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--jobs", type=int, help="parallel workers (default: all cores)")
    p.set_defaults(func=cmd_study_run)

    rp = sub.add_parser("report", help="report commands").add_subparsers(
        dest="subcommand", required=True, metavar="SUBCOMMAND"
    )
    p = rp.add_parser("render", help="render a JSON report as aligned tables")
    p.add_argument("report")
    p.set_defaults(func=cmd_report_render)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage/help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TransportError as exc:
        print(f"error: scorer transport: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"error: missing resource file: {exc.filename}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
