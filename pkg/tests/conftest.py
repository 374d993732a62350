import random

import pytest

from evonas import arch as A
from evonas.corpus import BlockLibrary, instantiate_block, sample_architecture


@pytest.fixture(scope="session")
def default_lib():
    return BlockLibrary.default()


@pytest.fixture
def small_arch(default_lib):
    """Four mixed blocks; enough structure for codec tests, fast to build."""
    blocks = []
    cur = (3, 32, 32)
    for kind, width in [
        (A.BlockKind.STEM, 16),
        (A.BlockKind.BASICBLOCK, 16),
        (A.BlockKind.MAXPOOL, 16),
        (A.BlockKind.RELU, 16),
    ]:
        block = instantiate_block(default_lib, kind, cur, width)
        blocks.append(block)
        cur = block.out_size
    return A.assemble(tuple(blocks), (3, 32, 32), 10)


@pytest.fixture
def toy_arch(default_lib):
    """Three blocks whose layer tokens repeat across blocks 1 and 2."""
    blocks = []
    cur = (3, 32, 32)
    for kind, width in [
        (A.BlockKind.CONV_NORM_ACT, 8),
        (A.BlockKind.CONV_NORM_ACT, 8),
        (A.BlockKind.MAXPOOL, 8),
    ]:
        block = instantiate_block(default_lib, kind, cur, width)
        blocks.append(block)
        cur = block.out_size
    return A.assemble(tuple(blocks), (3, 32, 32), 10)


@pytest.fixture
def arch_sampler(default_lib):
    def sample(seed: int) -> A.Architecture:
        return sample_architecture(random.Random(seed), default_lib,
                                   width_palette=(8, 32))

    return sample
