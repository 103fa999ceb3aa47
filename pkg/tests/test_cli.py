"""End-to-end tests of the command-line tool.

Everything goes through ``cli.main`` with real files in tmp dirs; exit
codes and stdout JSON are the asserted surface.
"""

import json
import subprocess
import sys

import pytest

from htrqe import cli
from htrqe.fixtures import generate_corpus
from htrqe.ngramlm import perplexity, read_arpa
from htrqe.textprep import PrepConfig, clean, read_corpus, tokenize, write_corpus

STUB_ARGV = [sys.executable, "-m", "htrqe.ppplstub"]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    write_corpus(generate_corpus(6000, seed=71), str(d / "ref.txt"))
    write_corpus(generate_corpus(1200, seed=72), str(d / "eval.txt"))
    return d


@pytest.fixture(scope="module")
def built(workdir):
    """Resource files produced through the CLI itself."""
    assert cli.main(["lexicon", "build", str(workdir / "ref.txt"), "-o", str(workdir / "ref.lexicon")]) == 0
    assert (
        cli.main(
            ["ngrams", "build", str(workdir / "ref.txt"), "-o", str(workdir / "grams"), "--orders", "2,3,7"]
        )
        == 0
    )
    assert cli.main(["lm", "train", str(workdir / "ref.txt"), "-o", str(workdir / "ref.arpa")]) == 0
    return workdir


def run_cli(capsys, argv):
    code = cli.main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


# ---------------------------------------------------------------------------
# exit codes and usage


def test_help_exits_zero(capsys):
    assert cli.main(["--help"]) == 0
    assert "COMMAND" in capsys.readouterr().out


def test_no_arguments_is_usage_error(capsys):
    code, _, err = run_cli(capsys, [])
    assert code == 1
    assert "usage" in err


def test_unknown_flag_is_usage_error(capsys):
    code, _, err = run_cli(capsys, ["cer", "--frobnicate", "a", "b"])
    assert code == 1
    assert "error" in err


def test_unknown_command_is_usage_error(capsys):
    assert cli.main(["transmogrify"]) == 1


def test_missing_input_file_is_data_error(capsys):
    code, _, err = run_cli(capsys, ["lexicon", "build", "no-such-file.txt", "-o", "x"])
    assert code == 2
    assert "no-such-file.txt" in err


def test_console_script_is_wired():
    proc = subprocess.run(["htrqe", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0


# ---------------------------------------------------------------------------
# prep / resource building / ppl / cer / corrupt


def test_prep_writes_cleaned_file_and_report(workdir, capsys, tmp_path):
    out = tmp_path / "clean.txt"
    rep = tmp_path / "prep-report.json"
    code, stdout, _ = run_cli(
        capsys,
        ["prep", str(workdir / "ref.txt"), "-o", str(out), "--report", str(rep)],
    )
    assert code == 0
    report = json.loads(stdout)
    assert report["kept_lines"] > 0
    assert json.loads(rep.read_text()) == report
    assert len(out.read_text().splitlines()) == report["kept_lines"]


def test_lm_ppl_matches_library(built, capsys):
    code, stdout, _ = run_cli(
        capsys, ["lm", "ppl", str(built / "ref.arpa"), str(built / "eval.txt")]
    )
    assert code == 0
    got = json.loads(stdout)

    prep = PrepConfig.latin()
    model = read_arpa((built / "ref.arpa").read_text())
    text = tokenize(clean(read_corpus(str(built / "eval.txt")), prep), prep)
    want = perplexity(model, text)
    assert got["ppl"] == pytest.approx(want.ppl, rel=1e-12)
    assert got["token_count"] == want.token_count
    assert got["oov_count"] == want.oov_count


def test_cer_command(workdir, capsys, tmp_path):
    bad = tmp_path / "eval.bad.txt"
    code, stdout, _ = run_cli(
        capsys,
        ["corrupt", str(workdir / "eval.txt"), "-o", str(bad), "--target-cer", "0.1", "--seed", "3"],
    )
    assert code == 0
    realized = json.loads(stdout)
    assert 0.08 <= realized["cer"] <= 0.12

    code, stdout, _ = run_cli(capsys, ["cer", str(workdir / "eval.txt"), str(bad)])
    assert code == 0
    assert json.loads(stdout) == realized


def test_cer_line_count_mismatch(workdir, capsys, tmp_path):
    short = tmp_path / "short.txt"
    short.write_text("one line\n")
    code, _, err = run_cli(capsys, ["cer", str(workdir / "eval.txt"), str(short)])
    assert code == 2
    assert "line count mismatch" in err


def test_corrupt_is_deterministic_per_seed(workdir, capsys, tmp_path):
    outs = []
    for name, seed in (("a", "5"), ("b", "5"), ("c", "6")):
        path = tmp_path / f"{name}.txt"
        code, _, _ = run_cli(
            capsys,
            ["corrupt", str(workdir / "eval.txt"), "-o", str(path), "--target-cer", "0.2", "--seed", seed],
        )
        assert code == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]
    assert outs[0] != outs[2]


# ---------------------------------------------------------------------------
# score


def test_score_reports_all_configured_metrics(built, capsys):
    code, stdout, _ = run_cli(
        capsys,
        [
            "score",
            str(built / "eval.txt"),
            "--lexicon", str(built / "ref.lexicon"),
            "--ngrams", str(built / "grams" / "3gram.ngrams"),
            "--ngrams", str(built / "grams" / "7gram.ngrams"),
            "--lm", str(built / "ref.arpa"),
        ],
    )
    assert code == 0
    payload = json.loads(stdout)
    assert payload["errors"] == {}
    assert set(payload["metrics"]) == {"token_ratio", "3gram", "7gram", "ppl"}
    assert 0 <= payload["metrics"]["token_ratio"] <= 1
    assert 0 <= payload["metrics"]["7gram"] <= 1


def test_score_with_subprocess_scorer(built, capsys):
    code, stdout, _ = run_cli(
        capsys,
        [
            "score",
            str(built / "eval.txt"),
            "--lexicon", str(built / "ref.lexicon"),
            "--scorer", " ".join(STUB_ARGV) + " --mode constant",
        ],
    )
    assert code == 0
    payload = json.loads(stdout)
    # constant mode pins every token log prob at -1, so PPPL = e
    assert payload["metrics"]["pppl"] == pytest.approx(2.718281828459045, rel=1e-6)


def test_score_env_var_overrides_scorer(built, capsys, monkeypatch):
    monkeypatch.setenv(cli.SCORER_ENV, "none")
    code, stdout, _ = run_cli(
        capsys,
        [
            "score",
            str(built / "eval.txt"),
            "--lexicon", str(built / "ref.lexicon"),
            "--scorer", " ".join(STUB_ARGV),
        ],
    )
    assert code == 0
    assert "pppl" not in json.loads(stdout)["metrics"]


def test_score_rejects_resource_with_other_prep(built, capsys, tmp_path):
    other = tmp_path / "other.lexicon"
    assert (
        cli.main(
            ["lexicon", "build", str(built / "ref.txt"), "-o", str(other), "--no-lowercase"]
        )
        == 0
    )
    capsys.readouterr()
    code, _, err = run_cli(
        capsys, ["score", str(built / "eval.txt"), "--lexicon", str(other)]
    )
    assert code == 2
    assert "different preprocessing" in err


def test_score_without_any_resource_is_data_error(built, capsys):
    code, _, err = run_cli(capsys, ["score", str(built / "eval.txt")])
    assert code == 2
    assert "--lexicon" in err


# ---------------------------------------------------------------------------
# study run


def write_synthetic_config(path, workdir, seed=9, scorer=STUB_ARGV):
    config = {
        "test_set_id": "cli-test",
        "seed": seed,
        "metrics": ["token_ratio", "3gram", "7gram", "ppl", "pppl"],
        "prep": {"lowercase": True},
        "resources": {"reference": str(workdir / "ref.txt"), "lm_order": 3},
        "synthetic": {"levels": [0.0, 0.1, 0.2, 0.3], "source": str(workdir / "eval.txt")},
    }
    if scorer is not None:
        config["scorer"] = {"argv": list(scorer)}
    path.write_text(json.dumps(config))


def test_study_run_synthetic_full_pipeline(workdir, capsys, tmp_path):
    cfg = tmp_path / "study.json"
    write_synthetic_config(cfg, workdir)
    report_path = tmp_path / "report.json"
    code, stdout, _ = run_cli(
        capsys, ["study", "run", str(cfg), "-o", str(report_path), "--tables", "--jobs", "2"]
    )
    assert code == 0
    report = json.loads(report_path.read_text())
    assert report["models"] == ["pseudo-0", "pseudo-0.1", "pseudo-0.2", "pseudo-0.3"]
    assert set(report["correlations"]) == {"token_ratio", "3gram", "7gram", "ppl", "pppl"}
    assert report["correlations"]["token_ratio"]["rho"] == pytest.approx(1.0)
    assert report["cell_errors"] == {}
    # --tables prints the rendered summary alongside the report file
    assert "scores" in stdout and "pseudo-0.3" in stdout


def test_study_run_byte_identical_for_equal_seeds(workdir, capsys, tmp_path):
    cfg = tmp_path / "study.json"
    write_synthetic_config(cfg, workdir, scorer=None)
    paths = [tmp_path / f"r{i}.json" for i in range(3)]
    assert cli.main(["study", "run", str(cfg), "-o", str(paths[0]), "--seed", "4"]) == 3
    assert cli.main(["study", "run", str(cfg), "-o", str(paths[1]), "--seed", "4"]) == 3
    assert cli.main(["study", "run", str(cfg), "-o", str(paths[2]), "--seed", "5"]) == 3
    capsys.readouterr()
    assert paths[0].read_bytes() == paths[1].read_bytes()
    assert paths[0].read_bytes() != paths[2].read_bytes()


def test_study_run_partial_metric_failure_exits_3(workdir, capsys, tmp_path):
    # pppl enabled but no scorer configured: that column fails for every
    # model, the rest of the report survives, exit code flags it.
    cfg = tmp_path / "study.json"
    write_synthetic_config(cfg, workdir, scorer=None)
    report_path = tmp_path / "report.json"
    code, _, _ = run_cli(capsys, ["study", "run", str(cfg), "-o", str(report_path)])
    assert code == 3
    report = json.loads(report_path.read_text())
    assert set(report["cell_errors"]) == {"pppl"}
    assert report["correlations"]["token_ratio"]["rho"] == pytest.approx(1.0)


def test_study_run_env_var_overrides_config_scorer(workdir, capsys, tmp_path, monkeypatch):
    cfg = tmp_path / "study.json"
    write_synthetic_config(cfg, workdir, scorer=["/no/such/scorer"])
    monkeypatch.setenv(cli.SCORER_ENV, " ".join(STUB_ARGV))
    report_path = tmp_path / "report.json"
    code, _, _ = run_cli(capsys, ["study", "run", str(cfg), "-o", str(report_path)])
    assert code == 0
    assert json.loads(report_path.read_text())["cell_errors"] == {}


def test_study_run_missing_resource_file_exits_2_with_path(workdir, capsys, tmp_path):
    cfg = tmp_path / "study.json"
    config = {
        "resources": {"reference": str(workdir / "ref.txt")},
        "synthetic": {"levels": [0.0, 0.1], "source": str(workdir / "gone.txt")},
    }
    cfg.write_text(json.dumps(config))
    code, _, err = run_cli(capsys, ["study", "run", str(cfg)])
    assert code == 2
    assert "gone.txt" in err


def test_study_run_rejects_unknown_config_key(workdir, capsys, tmp_path):
    cfg = tmp_path / "study.json"
    cfg.write_text(json.dumps({"outputz": []}))
    code, _, err = run_cli(capsys, ["study", "run", str(cfg)])
    assert code == 2
    assert "outputz" in err


def test_study_run_malformed_toml_exits_2(capsys, tmp_path):
    cfg = tmp_path / "study.toml"
    cfg.write_text("not == toml")
    code, _, err = run_cli(capsys, ["study", "run", str(cfg)])
    assert code == 2
    assert "study.toml" in err


def test_study_run_tables_need_output_file(workdir, capsys, tmp_path):
    cfg = tmp_path / "study.json"
    write_synthetic_config(cfg, workdir, scorer=None)
    code, _, _ = run_cli(capsys, ["study", "run", str(cfg), "--tables"])
    assert code == 1


def test_study_run_explicit_outputs_with_gt(built, capsys, tmp_path):
    # Outputs-as-files mode against prebuilt resources, TOML config.
    lines = read_corpus(str(built / "eval.txt")).lines
    for i, cer in enumerate((0.05, 0.15, 0.25)):
        assert (
            cli.main(
                [
                    "corrupt", str(built / "eval.txt"),
                    "-o", str(tmp_path / f"model{i}.txt"),
                    "--target-cer", str(cer), "--seed", str(20 + i),
                ]
            )
            == 0
        )
    capsys.readouterr()
    cfg = tmp_path / "study.toml"
    cfg.write_text(
        "\n".join(
            [
                'test_set_id = "files"',
                'metrics = ["token_ratio", "7gram", "ppl"]',
                f'gt = "{built / "eval.txt"}"',
                "[resources]",
                f'lexicon = "{built / "ref.lexicon"}"',
                f'ngrams = ["{built / "grams" / "7gram.ngrams"}"]',
                f'lm = "{built / "ref.arpa"}"',
                '[[outputs]]',
                'model_id = "m0"',
                f'path = "{tmp_path / "model0.txt"}"',
                '[[outputs]]',
                'model_id = "m1"',
                f'path = "{tmp_path / "model1.txt"}"',
                '[[outputs]]',
                'model_id = "m2"',
                f'path = "{tmp_path / "model2.txt"}"',
            ]
        )
        + "\n"
    )
    report_path = tmp_path / "report.json"
    code, _, err = run_cli(capsys, ["study", "run", str(cfg), "-o", str(report_path)])
    assert code == 0, err
    report = json.loads(report_path.read_text())
    assert report["models"] == ["m0", "m1", "m2"]
    assert report["correlations"]["token_ratio"]["rho"] == pytest.approx(1.0)
    assert report["reference_ranking"]["m0"] == 1.0
    assert len(lines) == len(read_corpus(str(tmp_path / "model0.txt")).lines)


def test_study_config_rejects_metric_without_resource(built, capsys, tmp_path):
    cfg = tmp_path / "study.toml"
    cfg.write_text(
        "\n".join(
            [
                'metrics = ["token_ratio", "ppl"]',
                "[resources]",
                f'lexicon = "{built / "ref.lexicon"}"',
                "[synthetic]",
                "levels = [0.0, 0.1, 0.2]",
                f'source = "{built / "eval.txt"}"',
            ]
        )
        + "\n"
    )
    code, _, err = run_cli(capsys, ["study", "run", str(cfg)])
    assert code == 2
    assert "ppl" in err


# ---------------------------------------------------------------------------
# report render


def test_report_render_from_file(workdir, capsys, tmp_path):
    cfg = tmp_path / "study.json"
    write_synthetic_config(cfg, workdir, scorer=None)
    report_path = tmp_path / "report.json"
    cli.main(["study", "run", str(cfg), "-o", str(report_path)])
    capsys.readouterr()
    code, stdout, _ = run_cli(capsys, ["report", "render", str(report_path)])
    assert code == 0
    assert "scores" in stdout
    assert "analysis" in stdout
    assert "pseudo-0.3" in stdout


def test_report_render_rejects_non_json(capsys, tmp_path):
    path = tmp_path / "report.json"
    path.write_text("][")
    code, _, err = run_cli(capsys, ["report", "render", str(path)])
    assert code == 2
    assert "report.json" in err
