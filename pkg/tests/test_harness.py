"""Tests for corruption, study execution, and report assembly."""

import json

import pytest

from htrqe.errors import DataError
from htrqe.fixtures import generate_corpus
from htrqe.harness import (
    DEFAULT_METRICS,
    CorruptionSpec,
    ModelOutput,
    StudyResources,
    build_resources,
    corrupt,
    corrupt_series,
    render_tables,
    report_json,
    run_study,
    study_report,
)
from htrqe.ppplclient import decode_response
from htrqe.ppplstub import score_record
from htrqe.textprep import PrepConfig, prepare_lines, tokenize

PREP = PrepConfig.latin()


class LocalStub:
    """In-process pppl/1 endpoint reusing the stub scorer's function."""

    def __init__(self, mode="charclass", fail_on=None):
        self.mode = mode
        self.fail_on = fail_on

    def score_batch(self, requests):
        return [
            decode_response(
                json.dumps(score_record({"id": r.id, "text": r.text}, self.mode, self.fail_on))
            )
            for r in requests
        ]


@pytest.fixture(scope="module")
def resources():
    reference = tokenize(generate_corpus(4000, seed=101), PREP)
    return build_resources(reference, PREP, lm_order=3, scorer=LocalStub())


@pytest.fixture(scope="module")
def eval_lines():
    return generate_corpus(1200, seed=202).lines


# ------------------------------------------------------------- corruption


def test_corruption_spec_validation():
    with pytest.raises(DataError):
        CorruptionSpec(target_cer=1.0)
    with pytest.raises(DataError):
        CorruptionSpec(target_cer=0.1, substitution_weight=-1.0)
    with pytest.raises(DataError):
        CorruptionSpec(target_cer=0.1, charset="")
    spec = CorruptionSpec(target_cer=0.1, substitution_weight=2.0, insertion_weight=1.0, deletion_weight=1.0)
    assert sum(spec.normalized_weights()) == pytest.approx(1.0)


def test_corrupt_target_zero_is_identity(eval_lines):
    noisy, realized = corrupt(eval_lines, CorruptionSpec(target_cer=0.0, seed=1))
    assert noisy == tuple(eval_lines)
    assert realized.cer == 0.0


def test_corrupt_is_deterministic(eval_lines):
    spec = CorruptionSpec(target_cer=0.15, seed=99)
    assert corrupt(eval_lines, spec)[0] == corrupt(eval_lines, spec)[0]


def test_corrupt_hits_target_rate():
    lines = generate_corpus(2300, seed=7).lines  # ~11k characters
    assert sum(len(l) for l in lines) >= 10000
    _, realized = corrupt(lines, CorruptionSpec(target_cer=0.1, seed=7))
    assert 0.09 <= realized.cer <= 0.11


def test_substitution_only_preserves_length(eval_lines):
    spec = CorruptionSpec(
        target_cer=0.2, substitution_weight=1.0, insertion_weight=0.0, deletion_weight=0.0, seed=3
    )
    noisy, _ = corrupt(eval_lines, spec)
    assert [len(l) for l in noisy] == [len(l) for l in eval_lines]


def test_corrupt_rejects_empty():
    with pytest.raises(DataError):
        corrupt([], CorruptionSpec(target_cer=0.1))
    with pytest.raises(DataError):
        corrupt([""], CorruptionSpec(target_cer=0.1))


def test_corrupt_series_orders_by_level(eval_lines):
    outputs, realized = corrupt_series(eval_lines, [0.0, 0.05, 0.15], seed=5, prep=PREP)
    assert [o.model_id for o in outputs] == ["pseudo-0", "pseudo-0.05", "pseudo-0.15"]
    cers = [realized[o.model_id].cer for o in outputs]
    assert cers == sorted(cers)
    assert cers[0] == 0.0


def test_corrupt_series_rejects_duplicate_levels(eval_lines):
    with pytest.raises(DataError):
        corrupt_series(eval_lines, [0.1, 0.1], seed=1, prep=PREP)


# ------------------------------------------------------------------ study


@pytest.fixture(scope="module")
def study_inputs(eval_lines):
    outputs, _ = corrupt_series(
        eval_lines, [0.0, 0.05, 0.1, 0.2, 0.3, 0.4], seed=11, prep=PREP
    )
    return outputs


def test_run_study_full_analysis(resources, study_inputs, eval_lines):
    study = run_study(resources, study_inputs, gt=eval_lines)
    assert study.all_failed() == []
    for metric in DEFAULT_METRICS:
        assert metric in study.correlations, study.analysis_errors
        assert metric in study.fits
        assert metric in study.top_n
    # clean copy must win the reference ranking
    assert study.reference_ranking.top() == "pseudo-0"
    # ratio metrics degrade with corruption: strong positive rank agreement
    assert study.correlations["token_ratio"].rho > 0.8
    assert study.correlations["7gram"].rho > 0.8
    assert study.top_n["token_ratio"] == 1


def test_run_study_gt_free_mode(resources, study_inputs):
    study = run_study(resources, study_inputs)
    assert study.reference_cers is None
    assert study.reference_ranking is None
    assert study.correlations == {}
    assert study.fits == {}
    for metric in DEFAULT_METRICS:
        assert metric in study.rankings
        for model in study.model_ids:
            assert study.score(model, metric) is not None


def test_run_study_without_scorer_isolates_pppl(resources, study_inputs, eval_lines):
    bare = StudyResources(
        lexicon=resources.lexicon,
        ngram_sets=resources.ngram_sets,
        lm=resources.lm,
        prep=resources.prep,
        scorer=None,
    )
    study = run_study(bare, study_inputs, gt=eval_lines)
    assert study.all_failed() == ["pppl"]
    assert "pppl/correlation" in study.analysis_errors
    assert "token_ratio" in study.correlations  # others unaffected
    for model in study.model_ids:
        assert "no scorer" in study.cells[(model, "pppl")].error


def test_run_study_per_item_scorer_errors_fail_only_that_model(resources, study_inputs, eval_lines):
    # force scorer errors for every sentence of one model by marking its text
    marked = []
    for output in study_inputs:
        if output.model_id == "pseudo-0.1":
            lines = tuple(line + " qqfailqq" for line in output.raw_text)
            marked.append(
                ModelOutput(
                    model_id=output.model_id,
                    test_set_id=output.test_set_id,
                    text=prepare_lines(lines, PREP),
                    raw_text=lines,
                )
            )
        else:
            marked.append(output)
    poisoned = StudyResources(
        lexicon=resources.lexicon,
        ngram_sets=resources.ngram_sets,
        lm=resources.lm,
        prep=resources.prep,
        scorer=LocalStub(fail_on="qqfailqq"),
    )
    study = run_study(poisoned, marked, gt=eval_lines)
    assert not study.cells[("pseudo-0.1", "pppl")].ok
    assert study.cells[("pseudo-0", "pppl")].ok
    # correlation still computed from the 5 remaining valid cells
    assert study.correlations["pppl"].n == 5


def test_run_study_validates_inputs(resources, study_inputs):
    with pytest.raises(DataError, match="no model outputs"):
        run_study(resources, [])
    with pytest.raises(DataError, match="duplicate model_id"):
        run_study(resources, [study_inputs[0], study_inputs[0]])
    other_prep = PrepConfig.latin(lowercase=False)
    alien = ModelOutput(
        model_id="alien",
        test_set_id=study_inputs[0].test_set_id,
        text=prepare_lines(("Some Text.",), other_prep),
        raw_text=("Some Text.",),
    )
    with pytest.raises(DataError, match="different config"):
        run_study(resources, list(study_inputs) + [alien])
    with pytest.raises(DataError, match="unknown metrics"):
        run_study(resources, study_inputs, metrics=("token_ratio", "8gram"))


def test_run_study_gt_line_count_mismatch(resources, study_inputs):
    with pytest.raises(DataError, match="lines"):
        run_study(resources, study_inputs, gt=("only", "three", "lines"))


def test_correlations_need_three_models(resources, eval_lines):
    outputs, _ = corrupt_series(eval_lines, [0.0, 0.2], seed=4, prep=PREP)
    study = run_study(resources, outputs, gt=eval_lines, metrics=("token_ratio",))
    assert study.correlations == {}
    assert "token_ratio/correlation" in study.analysis_errors
    for model in study.model_ids:
        assert study.score(model, "token_ratio") is not None


def test_study_is_deterministic_and_parallel_invariant(resources, study_inputs, eval_lines):
    sequential = run_study(resources, study_inputs, gt=eval_lines, jobs=1)
    parallel = run_study(resources, study_inputs, gt=eval_lines, jobs=4)
    assert report_json(sequential) == report_json(parallel)


# ----------------------------------------------------------------- report


def test_report_structure(resources, study_inputs, eval_lines):
    study = run_study(resources, study_inputs, gt=eval_lines)
    report = study_report(study)
    assert report["pppl_granularity"] == "sentence"
    assert set(report["scores"]) == set(DEFAULT_METRICS)
    assert set(report["reference_cers"]) == set(study.model_ids)
    parsed = json.loads(report_json(study))
    assert parsed["correlations"]["token_ratio"]["n"] == 6
    assert "coefficients" in parsed["fits"]["ppl"]


def test_render_tables_mentions_every_metric(resources, study_inputs, eval_lines):
    study = run_study(resources, study_inputs, gt=eval_lines)
    text = render_tables(study)
    for metric in DEFAULT_METRICS:
        assert metric in text
    for model in study.model_ids:
        assert model in text
    assert "rho" in text


def test_render_tables_gt_free(resources, study_inputs):
    text = render_tables(run_study(resources, study_inputs))
    assert "scores" in text
    assert "analysis\n" not in text
