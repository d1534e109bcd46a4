import numpy as np
import pytest

from advmut import corpus, pe_codec


@pytest.fixture(scope="session")
def small_corpus():
    """60-file labeled corpus shared across test modules."""
    cfg = corpus.CorpusConfig(n_benign=30, n_malware=30, seed=1234)
    return corpus.generate_corpus(cfg)


@pytest.fixture(scope="session")
def parsed_corpus(small_corpus):
    return [(pe_codec.parse_pe(raw), raw) for raw, _ in small_corpus]


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
