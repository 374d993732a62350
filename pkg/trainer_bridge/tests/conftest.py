import pytest

from archspecs import five_block


@pytest.fixture
def five_block_arch():
    return five_block()
