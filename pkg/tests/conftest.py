"""
Shared test fixtures for the generator, reranker and experiment tests.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.append(str(Path(__file__).parent.parent))

from core.config import TrainConfig
from core.data_model import Vocabulary
from core.surface_realizer import load_rules
from tools.experiment.config_loader import load_slot_patterns
from tools.experiment.synthesize import load_grammar

REPO_ROOT = Path(__file__).parent.parent
CONFIG_DIR = REPO_ROOT / "config"


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow acceptance tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def rules():
    return load_rules(CONFIG_DIR / "realization_rules.yaml")


@pytest.fixture(scope="session")
def slot_lexicon():
    return load_slot_patterns(CONFIG_DIR / "slot_patterns.yaml")


@pytest.fixture(scope="session")
def grammar():
    return load_grammar(CONFIG_DIR / "synthetic_grammar.yaml")


@pytest.fixture
def tiny_config():
    """Small, fast generator settings."""
    return TrainConfig(embedding_size=8, cell_size=12, batch_size=4, max_passes=3, patience_passes=2,
                       restarts=1, seed=7, max_decode_length=10)


@pytest.fixture
def input_vocab():
    return Vocabulary(["act:inform", "slot:name", "val:X-name", "slot:food", "val:French", "val:Italian"])


@pytest.fixture
def output_vocab():
    return Vocabulary(["x", "is", "a", "restaurant", "french", "italian", "serving", "food", "."])


@pytest.fixture
def toy_corpus_records():
    return [
        {"id": "da-1", "da": "inform(name=X-name, food=French)",
         "refs": ["X is a French restaurant.", "X serves French food."],
         "lex": {"X-name": "Loch Fyne"}},
        {"id": "da-2", "da": "inform(name=X-name, food=Italian)",
         "refs": ["X is an Italian restaurant.", "X serves Italian food."]},
    ]
