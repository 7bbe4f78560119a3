import functools

import pytest

from ascsynth import bundled
from ascsynth.pgcl import build_mdp
from ascsynth.translate import compile_model


@functools.lru_cache(maxsize=None)
def increment_mdp(k: int):
    """MDP of the bundled model restricted to its first ``k`` factors (cached)."""
    return build_mdp(compile_model(bundled.increment(k)))


@pytest.fixture(scope="session")
def cell_model():
    return bundled.load()


@pytest.fixture(scope="session")
def cell_mdp():
    return increment_mdp(len(bundled.INCREMENT_ORDER))
