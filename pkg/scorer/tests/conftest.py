from pathlib import Path

import pytest

from mlmscorer import MlmScorer, ScorerConfig

DATA = Path(__file__).parent / "data"
MODEL = DATA / "tiny-mlm"


@pytest.fixture(scope="session")
def scorer():
    return MlmScorer(ScorerConfig(model_name=str(MODEL), batch_size=8))


def fixture_lines(name: str) -> list[str]:
    path = DATA / f"{name}.txt"
    return [ln.strip() for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
