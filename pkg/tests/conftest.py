import pytest
import torch

from latentdrag import GeneratorConfig, ToyGenerator
from latentdrag.common import new_rng


@pytest.fixture(scope="session")
def gen() -> ToyGenerator:
    return ToyGenerator(GeneratorConfig())


@pytest.fixture()
def rng() -> torch.Generator:
    return new_rng(20240901)
