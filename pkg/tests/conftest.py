from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dnm_ie.experiments import annotated_corpus  # noqa: E402
from dnm_ie.market_sim.generator import CorpusConfig, generate_corpus  # noqa: E402
from dnm_ie.market_sim.templates import DEFAULT_MARKETS  # noqa: E402


@pytest.fixture(scope="session")
def small_pages():
    pages, _ = generate_corpus(CorpusConfig({m: 4 for m in DEFAULT_MARKETS}, seed=7, noise_rate=0.2))
    return pages


@pytest.fixture(scope="session")
def small_listings():
    return annotated_corpus(pages_per_market=4, seed=7, noise_rate=0.0)
