import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from respsound import synth  # noqa: E402
from respsound.dataset import FeatureDataset  # noqa: E402
from respsound.features import extract  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_corpus():
    spec = synth.CorpusSpec(counts={c: 12 for c in synth.GENERATORS}, seed=11)
    return synth.generate(spec)


@pytest.fixture(scope="session")
def small_dataset(small_corpus):
    return FeatureDataset.from_vectors([v for r in small_corpus for v in extract(r)])
