import numpy as np
import pytest

from vpkit.corpus import gen_corpus


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    """Shared 8-speaker, 4-utterance synthetic corpus with a pool."""
    root = tmp_path_factory.mktemp("corpus")
    return gen_corpus(root, speakers=8, utterances=4, seed=0, pool_speakers=24)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
