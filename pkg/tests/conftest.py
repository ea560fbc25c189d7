"""Shared fixtures: the two worked example nets and the four-node network.

GOAL: seven places, three two-member cells; the aim is to mark p5 or p6 at
some point without ever marking p7, encoded through an inclusion-exclusion
reward table.  Controllables are t1, t5, t6; the unique best constant set
is {t6} with value 3/4.

TWOGOAL: mark both p4 and p5 at some point.  Controllables t1, t2.  The
marking graph is acyclic although the net is not.  Constant sets reach at
most 1/2; a positional policy that remembers the first-visited goal place
achieves 1.
"""

from fractions import Fraction
from pathlib import Path

import pytest

from sdpn.bayes import BayesNet, BnNode
from sdpn.net import Marking, RewardTable, Sdpn, Transition

DATA_DIR = Path(__file__).parent / "data"

F = Fraction


def make_goal() -> Sdpn:
    transitions = [
        Transition("t1", {"p1": 1}, {"p5": 1}, F(1)),
        Transition("t2", {"p1": 1}, {"p3": 1}, F(1)),
        Transition("t3", {"p2": 1}, {"p4": 1}, F(1)),
        Transition("t4", {"p2": 1}, {}, F(1)),
        Transition("t5", {"p3": 1, "p4": 1}, {"p5": 1, "p6": 1}, F(1)),
        Transition("t6", {"p3": 1, "p4": 1}, {"p6": 1, "p7": 1}, F(1)),
    ]
    rewards = RewardTable(
        [
            ({"p5"}, F(1)),
            ({"p6"}, F(1)),
            ({"p5", "p6"}, F(-1)),
            ({"p5", "p7"}, F(-1)),
            ({"p6", "p7"}, F(-1)),
            ({"p5", "p6", "p7"}, F(1)),
        ]
    )
    return Sdpn(
        places=["p1", "p2", "p3", "p4", "p5", "p6", "p7"],
        transitions=transitions,
        m0=Marking({"p1": 1, "p2": 1}),
        controllable=["t1", "t5", "t6"],
        rewards=rewards,
    )


def make_twogoal() -> Sdpn:
    transitions = [
        Transition("t1", {"p1": 1, "p2": 1}, {"p4": 1}, F(1)),
        Transition("t2", {"p1": 1, "p2": 1}, {"p5": 1}, F(1)),
        Transition("t3", {"p4": 1}, {"p2": 1}, F(1)),
        Transition("t4", {"p5": 1}, {"p2": 1}, F(1)),
        Transition("t5", {"p2": 1, "p3": 1}, {"p4": 1}, F(1)),
        Transition("t6", {"p2": 1, "p3": 1}, {"p5": 1}, F(1)),
    ]
    return Sdpn(
        places=["p1", "p2", "p3", "p4", "p5"],
        transitions=transitions,
        m0=Marking({"p1": 1, "p2": 1, "p3": 1}),
        controllable=["t1", "t2"],
        rewards=RewardTable([({"p4", "p5"}, F(1))]),
    )


def make_abcd_bn() -> BayesNet:
    return BayesNet(
        [
            BnNode("a", ("0", "1"), (), {(): {"0": F(1, 3), "1": F(2, 3)}}),
            BnNode("b", ("0", "1"), (), {(): {"0": F(1, 2), "1": F(1, 2)}}),
            BnNode(
                "c",
                ("0", "1"),
                ("a",),
                {
                    ("0",): {"0": F(2, 3), "1": F(1, 3)},
                    ("1",): {"0": F(3, 4), "1": F(1, 4)},
                },
            ),
            BnNode(
                "d",
                ("0", "1"),
                ("a", "b"),
                {
                    ("0", "0"): {"0": F(3, 4), "1": F(1, 4)},
                    ("0", "1"): {"0": F(1, 6), "1": F(5, 6)},
                    ("1", "0"): {"0": F(1, 4), "1": F(3, 4)},
                    ("1", "1"): {"0": F(2, 3), "1": F(1, 3)},
                },
            ),
        ]
    )


@pytest.fixture
def goal() -> Sdpn:
    return make_goal()


@pytest.fixture
def twogoal() -> Sdpn:
    return make_twogoal()


@pytest.fixture
def abcd() -> BayesNet:
    return make_abcd_bn()
