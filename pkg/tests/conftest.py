import numpy as np
import pytest

from balflow.manifold import ModelConfig, build_section_basis, grid_for


def make_model(degrees, k, extra=16):
    cfg = ModelConfig(tuple(degrees), k)
    grid = grid_for(cfg, extra)
    return grid, build_section_basis(cfg, grid)


@pytest.fixture
def split_model():
    return make_model((1, -1), 4)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
