import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from bellman_lab.mdp_core import Mdp  # noqa: E402


def absorbing_mdp(reward=1.0, gamma=0.9, n_actions=1):
    """Single state that loops to itself under every action."""
    p = np.ones((1, n_actions, 1))
    r = np.full((1, n_actions, 1), reward, dtype=float)
    return Mdp(p, r, gamma)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
