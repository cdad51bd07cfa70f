from pathlib import Path

import pytest

from lm_router.modeling import build_model, save_artifact
from lm_router.tokenizer import CharTokenizer

# The completion pipeline's fixture datasets (shared repo checkout); the
# files are consumed through the documented JSONL schema only.
PIPELINE_FIXTURES = Path(__file__).resolve().parents[2] / "tests" / "fixtures"

# Canonical offline base checkpoint, committed alongside the package.
BASE_ARTIFACT = Path(__file__).resolve().parents[1] / "artifacts" / "base"


@pytest.fixture(scope="session")
def untrained_artifact(tmp_path_factory):
    """A random-init artifact: wire-protocol tests don't need a trained model."""
    out = tmp_path_factory.mktemp("artifact") / "untrained"
    tokenizer = CharTokenizer()
    model = build_model(tokenizer, d_model=32, num_layers=1, num_heads=2, d_ff=64)
    save_artifact(model, tokenizer, out, meta={"kind": "untrained-test-artifact", "seed": 0})
    return out
