import numpy as np
import pytest

from demoqual import data_path
from demoqual.kinematics import load_chain


@pytest.fixture(scope="session")
def chain():
    return load_chain(data_path("pr2_right_arm.json"))


def random_configs(chain, n, rng, margin=0.0):
    """n joint configs uniform within limits (optionally shrunk by margin)."""
    lo = chain.limits[:, 0] + margin
    hi = chain.limits[:, 1] - margin
    return lo + (hi - lo) * rng.random((n, 7))
