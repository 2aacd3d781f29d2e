"""Gridworld MDPs, tabular policies and the Markov chains they induce.

Cells are ``(row, col)`` pairs with row 0 at the top. Blocked cells are
excluded from the state index, so every array in this module is indexed by
the compact, row-major ordering of the open cells.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

Cell = tuple[int, int]

ACTIONS: tuple[str, ...] = ("up", "down", "left", "right", "stay")
UP, DOWN, LEFT, RIGHT, STAY = range(5)
N_ACTIONS = len(ACTIONS)
ACTION_DELTAS: tuple[Cell, ...] = ((-1, 0), (1, 0), (0, -1), (0, 1), (0, 0))

BUILTIN_GRIDS = ("empty25", "four_walls25", "sixteen_walls25")


class GridError(ValueError):
    """Raised when a grid layout violates one of its invariants."""


class EnvError(RuntimeError):
    """Raised on misuse of the stepping environment."""


@dataclass(frozen=True)
class GridSpec:
    width: int
    height: int
    blocked: frozenset = frozenset()
    start: Optional[Cell] = None  # default: first open cell in row-major order
    goal: Optional[Cell] = None  # default: last open cell
    name: str = "grid"
    cells: tuple = field(init=False, repr=False, compare=False)
    index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.width) < 1 or int(self.height) < 1:
            raise GridError(f"{self.name}: width and height must be positive")
        blocked = frozenset((int(r), int(c)) for r, c in self.blocked)
        object.__setattr__(self, "blocked", blocked)
        cells = tuple(
            (r, c)
            for r in range(self.height)
            for c in range(self.width)
            if (r, c) not in blocked
        )
        if not cells:
            raise GridError(f"{self.name}: every cell is blocked")
        start = cells[0] if self.start is None else (int(self.start[0]), int(self.start[1]))
        goal = cells[-1] if self.goal is None else (int(self.goal[0]), int(self.goal[1]))
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "goal", goal)

        for label, cell in (("start", start), ("goal", goal)):
            if not self.in_bounds(cell):
                raise GridError(f"{self.name}: {label} {cell} lies outside the grid")
            if cell in blocked:
                raise GridError(f"{self.name}: {label} {cell} is a blocked cell")

        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "index", {cell: i for i, cell in enumerate(cells)})

        unreachable = set(cells) - _reachable(self, start)
        if unreachable:
            sample = sorted(unreachable)[:3]
            raise GridError(
                f"{self.name}: {len(unreachable)} open cells unreachable from "
                f"start {start} (e.g. {sample})"
            )

    @property
    def n_states(self) -> int:
        return len(self.cells)

    @property
    def start_state(self) -> int:
        return self.index[self.start]

    @property
    def goal_state(self) -> int:
        return self.index[self.goal]

    def in_bounds(self, cell: Cell) -> bool:
        r, c = cell
        return 0 <= r < self.height and 0 <= c < self.width

    def is_open(self, cell: Cell) -> bool:
        return self.in_bounds(cell) and cell not in self.blocked

    def state_of(self, cell: Cell) -> int:
        return self.index[tuple(cell)]

    def cell_of(self, state: int) -> Cell:
        return self.cells[state]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "width": self.width,
            "height": self.height,
            "blocked": sorted([r, c] for r, c in self.blocked),
            "start": list(self.start),
            "goal": list(self.goal),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GridSpec":
        try:
            return cls(
                width=data["width"],
                height=data["height"],
                blocked=frozenset(tuple(c) for c in data.get("blocked", ())),
                start=tuple(data["start"]) if "start" in data else None,
                goal=tuple(data["goal"]) if "goal" in data else None,
                name=data.get("name", "custom"),
            )
        except KeyError as exc:
            raise GridError(f"inline grid is missing key {exc}") from None


def _reachable(spec: GridSpec, origin: Cell) -> set:
    seen = {origin}
    queue = deque([origin])
    while queue:
        r, c = queue.popleft()
        for dr, dc in ACTION_DELTAS[:4]:
            nxt = (r + dr, c + dc)
            if nxt not in seen and spec.is_open(nxt):
                seen.add(nxt)
                queue.append(nxt)
    return seen


def _corner_grid(name: str, size: int, blocked: Iterable[Cell]) -> GridSpec:
    blocked = frozenset(blocked)
    open_cells = [(r, c) for r in range(size) for c in range(size) if (r, c) not in blocked]
    return GridSpec(size, size, blocked, open_cells[0], open_cells[-1], name)


def builtin_grid(name: str) -> GridSpec:
    """Return one of the built-in 25x25 layouts by name.

    ``four_walls25`` blocks row 12 and column 12 except for one doorway at the
    middle of each half-wall (4 rooms). ``sixteen_walls25`` blocks rows and
    columns 6, 12 and 18 with a doorway in the middle of every wall segment
    (a 4x4 arrangement of rooms).
    """
    size = 25
    if name == "empty25":
        return _corner_grid(name, size, ())
    if name == "four_walls25":
        blocked = {(12, c) for c in range(size) if c not in (6, 18)}
        blocked |= {(r, 12) for r in range(size) if r not in (6, 18)}
        return _corner_grid(name, size, blocked)
    if name == "sixteen_walls25":
        lines = (6, 12, 18)
        doors = (3, 9, 15, 21)
        blocked = {(k, c) for k in lines for c in range(size) if c not in doors}
        blocked |= {(r, k) for k in lines for r in range(size) if r not in doors}
        return _corner_grid(name, size, blocked)
    raise GridError(f"unknown grid {name!r}; valid names: {', '.join(BUILTIN_GRIDS)}")


def resolve_grid(grid) -> GridSpec:
    """Accept a GridSpec, a built-in name or an inline dict layout."""
    if isinstance(grid, GridSpec):
        return grid
    if isinstance(grid, str):
        return builtin_grid(grid)
    if isinstance(grid, dict):
        return GridSpec.from_dict(grid)
    raise GridError(f"cannot interpret grid {grid!r}")


@dataclass(frozen=True)
class TransitionKernel:
    """Next-state distributions, ``probs[s, a, s']``.

    ``next_state`` is filled for deterministic kernels (one successor per
    ``(s, a)``) and is what the stepping environment uses.
    """

    probs: np.ndarray
    next_state: Optional[np.ndarray] = None

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 3 or probs.shape[0] != probs.shape[2]:
            raise ValueError(f"kernel must have shape (S, A, S), got {probs.shape}")
        if np.any(probs < 0) or not np.allclose(probs.sum(axis=2), 1.0, rtol=0, atol=1e-12):
            raise ValueError("every (state, action) row of the kernel must be a distribution")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        if self.next_state is None and np.all(np.count_nonzero(probs, axis=2) == 1):
            object.__setattr__(self, "next_state", probs.argmax(axis=2))
        if self.next_state is not None:
            nxt = np.asarray(self.next_state, dtype=np.int64)
            nxt.setflags(write=False)
            object.__setattr__(self, "next_state", nxt)

    @property
    def n_states(self) -> int:
        return self.probs.shape[0]

    @property
    def n_actions(self) -> int:
        return self.probs.shape[1]

    @property
    def deterministic(self) -> bool:
        return self.next_state is not None

    @classmethod
    def from_next_state(cls, next_state) -> "TransitionKernel":
        nxt = np.asarray(next_state, dtype=np.int64)
        n_states, n_actions = nxt.shape
        probs = np.zeros((n_states, n_actions, n_states))
        s_idx, a_idx = np.indices(nxt.shape)
        probs[s_idx, a_idx, nxt] = 1.0
        return cls(probs, nxt)


def build_gridworld_kernel(spec: GridSpec) -> TransitionKernel:
    """Deterministic kernel; edge and wall collisions leave the agent in place."""
    nxt = np.empty((spec.n_states, N_ACTIONS), dtype=np.int64)
    for s, (r, c) in enumerate(spec.cells):
        for a, (dr, dc) in enumerate(ACTION_DELTAS):
            target = (r + dr, c + dc)
            nxt[s, a] = spec.index[target] if spec.is_open(target) else s
    return TransitionKernel.from_next_state(nxt)


def validate_policy(policy, n_states: Optional[int] = None, atol: float = 1e-12) -> np.ndarray:
    policy = np.asarray(policy, dtype=float)
    if policy.ndim != 2:
        raise ValueError(f"policy table must be 2-D, got shape {policy.shape}")
    if n_states is not None and policy.shape[0] != n_states:
        raise ValueError(f"policy covers {policy.shape[0]} states, expected {n_states}")
    if np.any(policy < 0) or not np.allclose(policy.sum(axis=1), 1.0, rtol=0, atol=atol):
        raise ValueError("policy rows must be nonnegative and sum to 1")
    return policy


def mixture_policy(beta: float, n_states: int) -> np.ndarray:
    """Blend of the always-Up policy (beta=0) and the uniform policy (beta=1)."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    row = np.full(N_ACTIONS, beta / N_ACTIONS)
    row[UP] += 1.0 - beta
    return np.tile(row, (n_states, 1))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class SoftmaxPolicy:
    logits: np.ndarray

    @classmethod
    def uniform(cls, n_states: int, n_actions: int = N_ACTIONS) -> "SoftmaxPolicy":
        return cls(np.zeros((n_states, n_actions)))

    def table(self) -> np.ndarray:
        return softmax(self.logits)


def induced_chain(kernel: TransitionKernel, policy) -> np.ndarray:
    """State-to-state matrix ``P_pi[s, s'] = sum_a P(s'|s,a) pi(a|s)``."""
    policy = np.asarray(policy, dtype=float)
    if policy.shape != kernel.probs.shape[:2]:
        raise ValueError(
            f"policy shape {policy.shape} does not match kernel (S, A) = {kernel.probs.shape[:2]}"
        )
    return np.einsum("sat,sa->st", kernel.probs, policy)


@dataclass(frozen=True)
class EnvState:
    cell: int
    steps_taken: int = 0
    done: bool = False


def env_reset(spec: GridSpec) -> EnvState:
    start = spec.start_state
    return EnvState(start, 0, start == spec.goal_state)


def env_step(state: EnvState, action: int, kernel: TransitionKernel, spec: GridSpec, rng=None):
    """Advance one transition; returns ``(next_state, reward)``."""
    if state.done:
        raise EnvError("cannot step an episode that already reached the goal")
    if kernel.next_state is not None:
        nxt = int(kernel.next_state[state.cell, action])
    else:
        if rng is None:
            raise EnvError("a stochastic kernel needs an rng to sample the next state")
        nxt = int(rng.choice(kernel.n_states, p=kernel.probs[state.cell, action]))
    reached = nxt == spec.goal_state
    return EnvState(nxt, state.steps_taken + 1, reached), (1.0 if reached else 0.0)


class GridWorld:
    """Stateful wrapper around :func:`env_reset` / :func:`env_step`."""

    def __init__(self, spec: GridSpec, kernel: Optional[TransitionKernel] = None):
        self.spec = spec
        self.kernel = kernel if kernel is not None else build_gridworld_kernel(spec)
        self.state = env_reset(spec)

    @property
    def n_states(self) -> int:
        return self.spec.n_states

    def reset(self) -> EnvState:
        self.state = env_reset(self.spec)
        return self.state

    def step(self, action: int, rng=None):
        self.state, reward = env_step(self.state, action, self.kernel, self.spec, rng)
        return self.state, reward
