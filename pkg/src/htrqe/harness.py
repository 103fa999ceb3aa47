"""Ranking-study pipeline: score model outputs, rank, compare to CER.

Given K transcriptions of one test set, compute every enabled quality
metric per output, rank the outputs per metric, and — when ground truth
is available — correlate each metric ranking against the reference CER
ranking, fit CER-vs-score regressions, and run the Top-N hit analysis.
Without ground truth only the metric scores and metric rankings are
produced (the tool's actual field mode).

Also provides the synthetic-degradation generator: controlled character
corruption of a clean text produces pseudo-models with known reference
CERs, which makes the whole methodology testable at desk scale.

Failure isolation: each (model, metric) cell computes independently; a
failing cell or an unreachable scorer marks that cell/metric failed and
the study carries on with whatever remains.
"""

from __future__ import annotations

import json
import random
import string
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from . import cer as cer_mod
from .errors import DataError, TransportError
from .lexmetrics import Lexicon, NGramSet, build_lexicon, build_ngram_set, ngram_ratio, token_ratio
from .ngramlm import NGramModel, perplexity, train
from .ppplclient import PpplRequest, document_pppl, score_batch
from .stats import (
    HIGHER_IS_BETTER,
    LOWER_IS_BETTER,
    RankCorrelation,
    Ranking,
    RegressionFit,
    polyfit_adjusted,
    rank,
    spearman,
    top_n_hit,
)
from .textprep import PrepConfig, TokenizedText, prepare_lines

TOKEN_RATIO = "token_ratio"
PPL = "ppl"
PPPL = "pppl"
NGRAM_ORDERS = (2, 3, 4, 5, 6, 7)

#: metric id -> ranking direction
METRIC_DIRECTIONS = {
    TOKEN_RATIO: HIGHER_IS_BETTER,
    **{f"{n}gram": HIGHER_IS_BETTER for n in NGRAM_ORDERS},
    PPL: LOWER_IS_BETTER,
    PPPL: LOWER_IS_BETTER,
}

DEFAULT_METRICS = (TOKEN_RATIO, *(f"{n}gram" for n in NGRAM_ORDERS), PPL, PPPL)

#: PPPL requests carry one preprocessed sentence each (the alternative,
#: per raw line, is noted in the report as pppl_granularity).
PPPL_GRANULARITY = "sentence"


@dataclass(frozen=True)
class ModelOutput:
    model_id: str
    test_set_id: str
    text: TokenizedText
    raw_text: tuple[str, ...]


@dataclass(frozen=True)
class CorruptionSpec:
    """Controlled character noise: which fraction of characters to hit
    and how to split the damage between edit types."""

    target_cer: float
    substitution_weight: float = 0.8
    insertion_weight: float = 0.1
    deletion_weight: float = 0.1
    seed: int = 0
    charset: str = string.ascii_lowercase

    def __post_init__(self) -> None:
        if not 0.0 <= self.target_cer < 1.0:
            raise DataError(f"target_cer must be in [0, 1), got {self.target_cer}")
        weights = (self.substitution_weight, self.insertion_weight, self.deletion_weight)
        if any(w < 0 for w in weights) or sum(weights) <= 0:
            raise DataError(f"bad edit weights {weights}")
        if not self.charset:
            raise DataError("empty corruption charset")

    def normalized_weights(self) -> tuple[float, float, float]:
        total = self.substitution_weight + self.insertion_weight + self.deletion_weight
        return (
            self.substitution_weight / total,
            self.insertion_weight / total,
            self.deletion_weight / total,
        )


@dataclass
class StudyResources:
    """Everything a study scores against, all built from one reference
    corpus under one preprocessing config.  scorer is any object with
    score_batch(requests) (a pppl/1 endpoint), or None."""

    lexicon: Lexicon
    ngram_sets: dict[int, NGramSet]
    lm: NGramModel
    prep: PrepConfig
    scorer: object | None = None


def build_resources(
    reference: TokenizedText,
    prep: PrepConfig,
    lm_order: int = 3,
    ngram_orders=NGRAM_ORDERS,
    scorer=None,
) -> StudyResources:
    """Lexicon + n-gram sets + KN language model from one reference."""
    if reference.prep_digest != prep.digest():
        raise DataError("reference text was not prepared with the given config")
    return StudyResources(
        lexicon=build_lexicon(reference),
        ngram_sets={n: build_ngram_set(reference, n) for n in ngram_orders},
        lm=train(reference, lm_order),
        prep=prep,
        scorer=scorer,
    )


@dataclass(frozen=True)
class MetricCell:
    model_id: str
    metric_id: str
    value: float | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class RankingStudy:
    test_set_id: str
    model_ids: tuple[str, ...]
    metrics: tuple[str, ...]
    cells: dict[tuple[str, str], MetricCell]  # (model_id, metric_id) -> cell
    rankings: dict[str, Ranking] = field(default_factory=dict)
    reference_cers: dict[str, cer_mod.CerResult] | None = None
    reference_ranking: Ranking | None = None
    correlations: dict[str, RankCorrelation] = field(default_factory=dict)
    fits: dict[str, RegressionFit] = field(default_factory=dict)
    top_n: dict[str, int | None] = field(default_factory=dict)
    analysis_errors: dict[str, str] = field(default_factory=dict)

    def score(self, model_id: str, metric_id: str) -> float | None:
        return self.cells[(model_id, metric_id)].value

    def valid_models(self, metric_id: str) -> list[str]:
        return [m for m in self.model_ids if self.cells[(m, metric_id)].ok]

    def all_failed(self) -> list[str]:
        return [m for m in self.metrics if not self.valid_models(m)]


def _score_cell(output: ModelOutput, metric_id: str, resources: StudyResources) -> MetricCell:
    try:
        if metric_id == TOKEN_RATIO:
            value = token_ratio(output.text, resources.lexicon).value
        elif metric_id.endswith("gram"):
            order = int(metric_id[:-4])
            gram_set = resources.ngram_sets.get(order)
            if gram_set is None:
                raise DataError(f"no {order}-gram set in study resources")
            value = ngram_ratio(output.text, gram_set).value
        elif metric_id == PPL:
            value = perplexity(resources.lm, output.text).ppl
        else:
            raise DataError(f"unknown metric {metric_id!r}")
        return MetricCell(output.model_id, metric_id, value=value)
    except DataError as exc:
        return MetricCell(output.model_id, metric_id, error=str(exc))


def _score_pppl(outputs, resources) -> dict[str, MetricCell]:
    """One protocol batch for all models' sentences; per-model aggregation."""
    cells: dict[str, MetricCell] = {}
    if resources.scorer is None:
        return {
            o.model_id: MetricCell(o.model_id, PPPL, error="no scorer endpoint configured")
            for o in outputs
        }
    requests = []
    spans: dict[str, list[str]] = {}
    for output in outputs:
        ids = []
        for i, sent in enumerate(output.text.sentence_tokens()):
            rid = f"{output.model_id}::{i}"
            ids.append(rid)
            requests.append(PpplRequest(id=rid, text=" ".join(sent)))
        spans[output.model_id] = ids
    try:
        responses = {r.id: r for r in score_batch(requests, resources.scorer)}
    except (TransportError, DataError) as exc:
        return {
            o.model_id: MetricCell(o.model_id, PPPL, error=f"scorer failed: {exc}")
            for o in outputs
        }
    for output in outputs:
        lines = [responses[rid] for rid in spans[output.model_id]]
        try:
            value = document_pppl(lines)
            cells[output.model_id] = MetricCell(output.model_id, PPPL, value=value)
        except DataError as exc:
            cells[output.model_id] = MetricCell(output.model_id, PPPL, error=str(exc))
    return cells


def run_study(
    resources: StudyResources,
    outputs: list[ModelOutput],
    gt: tuple[str, ...] | None = None,
    metrics=DEFAULT_METRICS,
    jobs: int = 1,
    fit_degrees=(1, 2, 3),
) -> RankingStudy:
    """Score every output with every enabled metric; with ground truth,
    add reference CERs, correlations, regressions, and Top-N hits."""
    if not outputs:
        raise DataError("no model outputs to study")
    ids = [o.model_id for o in outputs]
    if len(set(ids)) != len(ids):
        raise DataError("duplicate model_id in study outputs")
    test_sets = {o.test_set_id for o in outputs}
    if len(test_sets) != 1:
        raise DataError(f"outputs span multiple test sets: {sorted(test_sets)}")
    expected_digest = resources.prep.digest()
    for output in outputs:
        if output.text.prep_digest != expected_digest:
            raise DataError(
                f"output {output.model_id!r} was preprocessed with a different config"
            )
    metrics = tuple(metrics)
    unknown = [m for m in metrics if m not in METRIC_DIRECTIONS]
    if unknown:
        raise DataError(f"unknown metrics: {unknown}")

    plain = [m for m in metrics if m != PPPL]
    cells: dict[tuple[str, str], MetricCell] = {}
    tasks = [(output, metric) for output in outputs for metric in plain]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda t: _score_cell(t[0], t[1], resources), tasks))
    else:
        results = [_score_cell(o, m, resources) for o, m in tasks]
    for cell in results:
        cells[(cell.model_id, cell.metric_id)] = cell
    if PPPL in metrics:
        for model_id, cell in _score_pppl(outputs, resources).items():
            cells[(model_id, PPPL)] = cell

    study = RankingStudy(
        test_set_id=outputs[0].test_set_id,
        model_ids=tuple(ids),
        metrics=metrics,
        cells=cells,
    )

    for metric in metrics:
        valid = study.valid_models(metric)
        if len(valid) >= 1:
            try:
                study.rankings[metric] = rank(
                    [(m, cells[(m, metric)].value) for m in valid],
                    METRIC_DIRECTIONS[metric],
                )
            except DataError as exc:
                study.analysis_errors[f"{metric}/ranking"] = str(exc)

    if gt is not None:
        gt = tuple(gt)
        study.reference_cers = {}
        for output in outputs:
            if len(output.raw_text) != len(gt):
                raise DataError(
                    f"output {output.model_id!r} has {len(output.raw_text)} lines, "
                    f"ground truth has {len(gt)}"
                )
            study.reference_cers[output.model_id] = cer_mod.corpus_cer(
                list(zip(gt, output.raw_text))
            )
        study.reference_ranking = rank(
            [(m, study.reference_cers[m].cer) for m in ids], LOWER_IS_BETTER
        )
        for metric in metrics:
            valid = study.valid_models(metric)
            if len(valid) < 3:
                study.analysis_errors[f"{metric}/correlation"] = (
                    f"only {len(valid)} valid cells; need 3"
                )
                continue
            metric_ranking = rank(
                [(m, cells[(m, metric)].value) for m in valid],
                METRIC_DIRECTIONS[metric],
            )
            reference_ranking = rank(
                [(m, study.reference_cers[m].cer) for m in valid], LOWER_IS_BETTER
            )
            try:
                study.correlations[metric] = spearman(metric_ranking, reference_ranking)
            except DataError as exc:
                study.analysis_errors[f"{metric}/correlation"] = str(exc)
            try:
                study.fits[metric] = polyfit_adjusted(
                    [cells[(m, metric)].value for m in valid],
                    [study.reference_cers[m].cer for m in valid],
                    degrees=fit_degrees,
                ).best
            except DataError as exc:
                study.analysis_errors[f"{metric}/fit"] = str(exc)
            try:
                study.top_n[metric] = top_n_hit(metric_ranking, reference_ranking)
            except DataError as exc:
                study.analysis_errors[f"{metric}/top_n"] = str(exc)
    return study


# ------------------------------------------------------------- corruption


def corrupt(lines, spec: CorruptionSpec):
    """Apply character noise at the target rate; returns the corrupted
    lines and the realized CER measured against the input."""
    lines = tuple(lines)
    if not lines or all(not line for line in lines):
        raise DataError("cannot corrupt empty text")
    total_chars = sum(len(line) for line in lines)
    n_edits = round(spec.target_cer * total_chars)
    rng = random.Random(spec.seed)
    chosen = rng.sample(range(total_chars), n_edits) if n_edits else []
    weights = spec.normalized_weights()
    ops = {
        pos: rng.choices(("sub", "ins", "del"), weights=weights)[0]
        for pos in sorted(chosen)
    }
    out_lines = []
    offset = 0
    for line in lines:
        chars = []
        for i, ch in enumerate(line):
            op = ops.get(offset + i)
            if op is None:
                chars.append(ch)
            elif op == "sub":
                pool = spec.charset.replace(ch, "") or spec.charset
                chars.append(rng.choice(pool))
            elif op == "ins":
                chars.append(rng.choice(spec.charset))
                chars.append(ch)
            # deletions simply drop the character
        out_lines.append("".join(chars))
        offset += len(line)
    corrupted = tuple(out_lines)
    realized = cer_mod.corpus_cer(
        [(ref, hyp) for ref, hyp in zip(lines, corrupted) if ref.strip()]
    )
    return corrupted, realized


def corrupt_series(
    lines,
    cer_levels,
    seed: int,
    prep: PrepConfig,
    test_set_id: str = "synthetic",
):
    """One pseudo-model per corruption level, with the clean text as GT.

    Returns (outputs, realized_cers) where realized_cers maps model_id
    to the measured CER of its raw text against the clean lines.
    """
    levels = tuple(float(lvl) for lvl in cer_levels)
    if len(set(levels)) != len(levels):
        raise DataError(f"duplicate corruption levels: {levels}")
    lines = tuple(lines)
    outputs = []
    realized = {}
    for index, level in enumerate(levels):
        spec = CorruptionSpec(target_cer=level, seed=seed * 10007 + index)
        noisy, measured = corrupt(lines, spec)
        model_id = f"pseudo-{level:g}"
        outputs.append(
            ModelOutput(
                model_id=model_id,
                test_set_id=test_set_id,
                text=prepare_lines(noisy, prep),
                raw_text=noisy,
            )
        )
        realized[model_id] = measured
    return outputs, realized


# ---------------------------------------------------------------- reports


def study_report(study: RankingStudy) -> dict:
    """JSON-ready, deterministically ordered report of a study."""
    report: dict = {
        "test_set_id": study.test_set_id,
        "models": list(study.model_ids),
        "metrics": list(study.metrics),
        "pppl_granularity": PPPL_GRANULARITY,
        "scores": {
            metric: {m: study.cells[(m, metric)].value for m in study.model_ids}
            for metric in study.metrics
        },
        "cell_errors": {
            metric: {
                m: study.cells[(m, metric)].error
                for m in study.model_ids
                if not study.cells[(m, metric)].ok
            }
            for metric in study.metrics
            if any(not study.cells[(m, metric)].ok for m in study.model_ids)
        },
        "rankings": {
            metric: dict(sorted(ranking.ranks.items()))
            for metric, ranking in study.rankings.items()
        },
        "analysis_errors": dict(sorted(study.analysis_errors.items())),
    }
    if study.reference_cers is not None:
        report["reference_cers"] = {
            m: {"distance": r.distance, "ref_len": r.ref_len, "cer": r.cer}
            for m, r in sorted(study.reference_cers.items())
        }
        report["reference_ranking"] = dict(sorted(study.reference_ranking.ranks.items()))
        report["correlations"] = {
            metric: {
                "rho": c.rho,
                "n": c.n,
                "d_squared_sum": c.d_squared_sum,
                "p_value": c.p_value,
                "significance_level": c.significance_level,
                "tie_corrected": c.tie_corrected,
            }
            for metric, c in sorted(study.correlations.items())
        }
        report["fits"] = {
            metric: {
                "degree": f.degree,
                "coefficients": list(f.coefficients),
                "r2": f.r2,
                "adjusted_r2": f.adjusted_r2,
                "n": f.n,
            }
            for metric, f in sorted(study.fits.items())
        }
        report["top_n"] = dict(sorted(study.top_n.items()))
    return report


def report_json(study: RankingStudy | dict) -> str:
    report = study if isinstance(study, dict) else study_report(study)
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def _format_table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [
        max(len(headers[i]), *(len(r[i]) for r in rows)) if rows else len(headers[i])
        for i in range(len(headers))
    ]
    def fmt(row):
        return "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()
    lines = [fmt(headers), fmt(["-" * w for w in widths])]
    lines.extend(fmt(r) for r in rows)
    return "\n".join(lines)


def render_report(report: dict) -> str:
    """Aligned plain-text summary of a study report dict: the scores
    table, and the analysis table when reference CERs were present."""
    metrics = report["metrics"]
    models = report["models"]
    reference = report.get("reference_cers")
    sections = []
    score_rows = []
    for m in models:
        row = [m]
        if reference is not None:
            row.append(f"{reference[m]['cer']:.4f}")
        for metric in metrics:
            value = report["scores"][metric][m]
            row.append(f"{value:.4f}" if value is not None else "failed")
        score_rows.append(row)
    headers = ["model"] + (["cer"] if reference is not None else []) + list(metrics)
    sections.append("scores\n" + _format_table(headers, score_rows))
    if reference is not None:
        rows = []
        for metric in metrics:
            c = report["correlations"].get(metric)
            f = report["fits"].get(metric)
            hit = report["top_n"].get(metric)
            sig = c["significance_level"] if c else None
            rows.append(
                [
                    metric,
                    f"{c['rho']:.3f}" if c else "-",
                    f"{c['p_value']:.4g}" if c else "-",
                    str(sig) if sig is not None else "-",
                    f"{f['adjusted_r2']:.3f} (deg {f['degree']})" if f else "-",
                    str(hit) if hit is not None else "-",
                ]
            )
        sections.append(
            "analysis\n"
            + _format_table(["metric", "rho", "p", "sig", "adj_r2", "top_n"], rows)
        )
    if report.get("analysis_errors"):
        errs = [f"{k}: {v}" for k, v in sorted(report["analysis_errors"].items())]
        sections.append("analysis errors\n" + "\n".join(errs))
    return "\n\n".join(sections) + "\n"


def render_tables(study: RankingStudy) -> str:
    return render_report(study_report(study))
