import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from nashsplit import (
    BilinearParams,
    CournotParams,
    build_bilinear_game,
    build_cournot_game,
    build_cycle_plus,
    DualGraph,
)


@pytest.fixture(scope="session")
def bilinear_game():
    """Stochastic two-player rotation game, unconstrained, solution at the origin."""
    return build_bilinear_game(BilinearParams(variant="unconstrained-monotone"))


@pytest.fixture(scope="session")
def bilinear_graph():
    return DualGraph.from_edges(2, [(1, 2)])


@pytest.fixture(scope="session")
def monotone_fixture():
    """Box-constrained monotone fixture with solution set {x2 = 0}."""
    return build_bilinear_game(BilinearParams(variant="monotone"))


@pytest.fixture(scope="session")
def pseudomonotone_fixture():
    return build_bilinear_game(BilinearParams(variant="pseudomonotone"))


@pytest.fixture(scope="session")
def cournot_game():
    """Market game at the reference experiment scale (20 companies, 7 markets)."""
    return build_cournot_game(CournotParams())


@pytest.fixture(scope="session")
def cournot_graph():
    return build_cycle_plus(20, [(2, 15), (6, 13)])


@pytest.fixture(scope="session")
def small_cournot():
    """Desk-size market game for the slower metric and solver tests."""
    game = build_cournot_game(CournotParams(n_agents=6, n_markets=3, seed=7))
    graph = build_cycle_plus(6)
    return game, graph
