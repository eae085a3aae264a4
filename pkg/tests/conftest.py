import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cpmetric.cpnet import CPNet, CPTable, Variable


def make_fig1_net() -> CPNet:
    """Four binary variables: A and B unconditional, C depends on both
    (prefers c when they agree), D follows C."""
    variables = (
        Variable(0, "A", ("a", "-a")),
        Variable(1, "B", ("b", "-b")),
        Variable(2, "C", ("c", "-c")),
        Variable(3, "D", ("d", "-d")),
    )
    tables = (
        CPTable(0, (), (0,)),
        CPTable(1, (), (0,)),
        CPTable(2, (0, 1), (0, 1, 1, 0)),
        CPTable(3, (2,), (0, 1)),
    )
    return CPNet(variables, tables)


def make_single_net(pref: int = 0) -> CPNet:
    return CPNet(
        (Variable(0, "X", ("x", "-x")),),
        (CPTable(0, (), (pref,)),),
    )


def make_independent_pair_net() -> CPNet:
    """Two unconditional variables; no dependency edges."""
    return CPNet(
        (Variable(0, "A", ("a", "-a")), Variable(1, "B", ("b", "-b"))),
        (CPTable(0, (), (0,)), CPTable(1, (), (0,))),
    )


@pytest.fixture
def fig1_net() -> CPNet:
    return make_fig1_net()


@pytest.fixture
def single_net() -> CPNet:
    return make_single_net()
