import numpy as np
import pytest

from hashmixer.hashing import HashFamily
from hashmixer.vocab import Vocabulary


@pytest.fixture(scope="session")
def family64() -> HashFamily:
    return HashFamily(64)


@pytest.fixture(scope="session")
def tiny_vocab() -> Vocabulary:
    units = ["[UNK]", "Bring", "##ing", "the", "it", "at", "a", "##t", "b", "##ring"]
    return Vocabulary.from_units(units)


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
