import pytest

from src.deadline import DeadlineChannel
from src.dist import FirstPassageModel


@pytest.fixture
def exp_passage():
    return FirstPassageModel.exponential(1.0)


@pytest.fixture
def uniform_passage():
    return FirstPassageModel.uniform(1.0)


@pytest.fixture
def unit_channel():
    return DeadlineChannel(1.0, 1.0)
