import json
from pathlib import Path
from typing import Callable, Dict, Tuple

import pytest

from envs import build_chain, build_maze, build_random_mdp
from models import MazeConfig, MazeLayout, TabularMdp


@pytest.fixture
def make_chain() -> Callable[..., TabularMdp]:
    def _make_chain(n: int = 5, gamma: float = 0.9) -> TabularMdp:
        return build_chain(n, gamma)
    return _make_chain


@pytest.fixture
def make_random_mdp() -> Callable[..., TabularMdp]:
    def _make_random_mdp(
        num_states: int = 6,
        num_actions: int = 3,
        seed: int = 0,
        gamma: float = 0.9,
        branching: int | None = None,
    ) -> TabularMdp:
        return build_random_mdp(num_states, num_actions, seed, gamma=gamma, branching=branching)
    return _make_random_mdp


@pytest.fixture
def make_maze() -> Callable[..., Tuple[TabularMdp, MazeLayout]]:
    def _make_maze(
        width: int = 9,
        height: int = 9,
        seed: int = 0,
        num_goals: int = 2,
        num_traps: int = 1,
        gamma: float = 0.9,
    ) -> Tuple[TabularMdp, MazeLayout]:
        # small four-room maze: 81 cells, 41 walls, 40 states
        config = MazeConfig(
            width=width,
            height=height,
            seed=seed,
            num_goals=num_goals,
            num_traps=num_traps,
            gamma=gamma,
        )
        return build_maze(config)
    return _make_maze


@pytest.fixture
def make_config(tmp_path) -> Callable[..., Path]:
    def _make_config(document: Dict, name: str = "experiment.json") -> Path:
        document = dict(document)
        document.setdefault("out", str(tmp_path / "results"))
        path = tmp_path / name
        path.write_text(json.dumps(document))
        return path
    return _make_config


# Fixtures
@pytest.fixture
def single_state_mdp() -> TabularMdp:
    return TabularMdp(
        num_states=1,
        num_actions=1,
        transitions=[[[(0, 1.0)]]],
        rewards=[[0.5]],
        discount=0.5,
    )


@pytest.fixture
def two_state_mdp() -> TabularMdp:
    # action 1 in state 0 moves to the rewarding state 1
    return TabularMdp(
        num_states=2,
        num_actions=2,
        transitions=[
            [[(0, 1.0)], [(1, 1.0)]],
            [[(1, 1.0)], [(0, 1.0)]],
        ],
        rewards=[[0.0, 0.0], [1.0, 0.0]],
        discount=0.9,
    )


@pytest.fixture
def chain_document() -> Dict:
    return {
        "environment": {"kind": "chain", "n": 5, "gamma": 0.9},
        "planner": {"kind": "pi"},
        "seeds": [0],
    }
