"""
Four-room grid maze.

The grid has border walls, one vertical wall at column width // 2 and one
horizontal wall at row height // 2. Each dividing wall has one door in each of
its two segments, at seeded positions. Goals and traps are placed on seeded
free cells; the spawn cell is the top-left free corner.

Dynamics:
    - states are free cells in row-major order; actions are up, down, right, left
    - moving into a wall or off the grid keeps the agent in place
    - a goal pays +1 and every action respawns the agent uniformly on a free
      cell that is neither a goal nor a trap
    - a trap pays -1 and is absorbing

Usage:
    mdp, layout = build_maze(MazeConfig(seed=7))
    print(render_layout(layout))
"""

from typing import Dict, List, Set, Tuple

import numpy as np
from loguru import logger
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from envs.seeding import seeded_generator
from errors import MazeGenerationError
from models import Cell, MazeConfig, MazeLayout, TabularMdp


MAZE_STREAM = 2
MAX_PLACEMENT_ATTEMPTS = 100

# (row, col) offsets in action-index order
MOVES: Tuple[Tuple[int, int], ...] = ((-1, 0), (1, 0), (0, 1), (0, -1))
ACTION_NAMES = ("up", "down", "right", "left")

GOAL_REWARD = 1.0
TRAP_REWARD = -1.0


def _wall_cells(config: MazeConfig, rng: np.random.Generator) -> Set[Cell]:
    W, H = config.width, config.height
    mid_col, mid_row = W // 2, H // 2
    walls: Set[Cell] = set()
    for c in range(W):
        walls.update({(0, c), (H - 1, c), (mid_row, c)})
    for r in range(H):
        walls.update({(r, 0), (r, W - 1), (r, mid_col)})

    # one door per wall segment
    doors = [
        (int(rng.integers(1, mid_row)), mid_col),
        (int(rng.integers(mid_row + 1, H - 1)), mid_col),
        (mid_row, int(rng.integers(1, mid_col))),
        (mid_row, int(rng.integers(mid_col + 1, W - 1))),
    ]
    walls.difference_update(doors)
    return walls


def _is_connected(cells: List[Cell]) -> bool:
    index = {cell: i for i, cell in enumerate(cells)}
    rows, cols = [], []
    for (r, c), i in index.items():
        for dr, dc in MOVES:
            j = index.get((r + dr, c + dc))
            if j is not None:
                rows.append(i)
                cols.append(j)
    graph = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(cells), len(cells)))
    n_components, _ = connected_components(graph, directed=False)
    return n_components == 1


def _try_layout(config: MazeConfig, attempt: int) -> MazeLayout | None:
    rng = seeded_generator(config.seed, MAZE_STREAM, attempt)
    walls = _wall_cells(config, rng)
    cells = tuple(
        (r, c) for r in range(config.height) for c in range(config.width) if (r, c) not in walls
    )
    spawn = cells[0]
    candidates = cells[1:]
    needed = config.num_goals + config.num_traps
    # at least one respawn cell must remain besides the spawn
    if needed >= len(candidates):
        return None

    picks = rng.choice(len(candidates), size=needed, replace=False)
    placed = [candidates[i] for i in picks]
    goals = tuple(sorted(placed[: config.num_goals]))
    traps = tuple(sorted(placed[config.num_goals:]))

    # traps are absorbing, so the remaining cells must stay mutually reachable
    trap_set = set(traps)
    if not _is_connected([cell for cell in cells if cell not in trap_set]):
        return None
    return MazeLayout(
        config=config,
        walls=frozenset(walls),
        goals=goals,
        traps=traps,
        spawn=spawn,
        cells=cells,
    )


def generate_layout(config: MazeConfig) -> MazeLayout:
    """
    Generate the grid for a config, retrying placement on fresh substreams.

    Raises:
        MazeGenerationError: If no valid placement is found in 100 attempts.
    """
    for attempt in range(MAX_PLACEMENT_ATTEMPTS):
        layout = _try_layout(config, attempt)
        if layout is not None:
            return layout
        logger.debug(f"Maze seed={config.seed} attempt={attempt} rejected")
    raise MazeGenerationError(
        f"No valid {config.width}x{config.height} maze with {config.num_goals} goals and "
        f"{config.num_traps} traps after {MAX_PLACEMENT_ATTEMPTS} attempts (seed={config.seed})"
    )


def build_maze(config: MazeConfig) -> Tuple[TabularMdp, MazeLayout]:
    """
    Build the maze MDP.

    Args:
        config: Maze size, seed, goal/trap counts and discount.

    Returns:
        (mdp, layout); layout.cells maps state index to (row, col).

    Raises:
        MazeGenerationError: If placement keeps violating the layout invariants.
    """
    layout = generate_layout(config)
    state_of: Dict[Cell, int] = layout.state_of_cell
    goals, traps = set(layout.goals), set(layout.traps)
    respawn = [state_of[cell] for cell in layout.cells if cell not in goals and cell not in traps]
    respawn_row = [(s, 1.0 / len(respawn)) for s in respawn]
    A = len(MOVES)

    transitions, rewards = [], []
    for s, (r, c) in enumerate(layout.cells):
        if (r, c) in goals:
            transitions.append([respawn_row] * A)
            rewards.append([GOAL_REWARD] * A)
        elif (r, c) in traps:
            transitions.append([[(s, 1.0)]] * A)
            rewards.append([TRAP_REWARD] * A)
        else:
            row = []
            for dr, dc in MOVES:
                target = state_of.get((r + dr, c + dc), s)
                row.append([(target, 1.0)])
            transitions.append(row)
            rewards.append([0.0] * A)

    mdp = TabularMdp(
        num_states=len(layout.cells),
        num_actions=A,
        transitions=transitions,
        rewards=rewards,
        discount=config.gamma,
        reset=respawn_row,
    )
    logger.info(
        f"Built {config.width}x{config.height} maze seed={config.seed}: "
        f"S={mdp.num_states}, goals={len(goals)}, traps={len(traps)}"
    )
    return mdp, layout


def render_layout(layout: MazeLayout) -> str:
    """Plain-text grid: '#' wall, '.' free, 'G' goal, 'T' trap, 'S' spawn."""
    marks = {layout.spawn: "S"}
    marks.update({cell: "G" for cell in layout.goals})
    marks.update({cell: "T" for cell in layout.traps})
    lines = []
    for r in range(layout.config.height):
        line = []
        for c in range(layout.config.width):
            if (r, c) in layout.walls:
                line.append("#")
            else:
                line.append(marks.get((r, c), "."))
        lines.append("".join(line))
    return "\n".join(lines) + "\n"
