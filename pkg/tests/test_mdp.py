import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from adanav.mdp import (
    ACTION_DELTAS,
    BUILTIN_GRIDS,
    DOWN,
    LEFT,
    N_ACTIONS,
    RIGHT,
    STAY,
    UP,
    EnvError,
    GridError,
    GridSpec,
    GridWorld,
    SoftmaxPolicy,
    TransitionKernel,
    build_gridworld_kernel,
    builtin_grid,
    env_reset,
    env_step,
    induced_chain,
    mixture_policy,
    resolve_grid,
)


def coordinate_oracle(spec, cell, action):
    r, c = cell
    dr, dc = ACTION_DELTAS[action]
    nr, nc = r + dr, c + dc
    if 0 <= nr < spec.height and 0 <= nc < spec.width and (nr, nc) not in spec.blocked:
        return (nr, nc)
    return cell


def naive_contraction(probs, policy):
    n, a, _ = probs.shape
    out = np.zeros((n, n))
    for s in range(n):
        for t in range(n):
            for b in range(a):
                out[s, t] += probs[s, b, t] * policy[s, b]
    return out


def test_single_cell_grid_self_loops():
    spec = GridSpec(1, 1, start=(0, 0), goal=(0, 0))
    kernel = build_gridworld_kernel(spec)
    assert kernel.next_state.tolist() == [[0] * N_ACTIONS]


def test_empty25_kernel_matches_coordinate_arithmetic():
    spec = builtin_grid("empty25")
    kernel = build_gridworld_kernel(spec)
    assert kernel.next_state[spec.state_of((0, 0)), UP] == spec.state_of((0, 0))
    assert kernel.next_state[spec.state_of((3, 4)), RIGHT] == spec.state_of((3, 5))
    assert np.count_nonzero(kernel.probs) == 3125
    for s, cell in enumerate(spec.cells):
        for a in range(N_ACTIONS):
            assert spec.cell_of(kernel.next_state[s, a]) == coordinate_oracle(spec, cell, a)


@pytest.mark.parametrize("name", BUILTIN_GRIDS)
def test_kernel_rows_and_collisions(name):
    spec = builtin_grid(name)
    kernel = build_gridworld_kernel(spec)
    np.testing.assert_allclose(kernel.probs.sum(axis=2), 1.0, rtol=0, atol=1e-12)
    assert np.all(np.count_nonzero(kernel.probs, axis=2) == 1)
    for s, cell in enumerate(spec.cells):
        for a in range(N_ACTIONS):
            expected = coordinate_oracle(spec, cell, a)
            assert kernel.probs[s, a, spec.state_of(expected)] == 1.0


def test_builtin_layouts():
    empty = builtin_grid("empty25")
    assert empty.blocked == frozenset()
    assert (empty.start, empty.goal) == ((0, 0), (24, 24))

    four = builtin_grid("four_walls25")
    expected = {(12, c) for c in range(25) if c not in (6, 18)}
    expected |= {(r, 12) for r in range(25) if r not in (6, 18)}
    assert four.blocked == expected
    assert four.n_states == 625 - (23 + 23 - 1)

    sixteen = builtin_grid("sixteen_walls25")
    for k in (6, 12, 18):
        assert [c for c in range(25) if (k, c) not in sixteen.blocked] == [3, 9, 15, 21]
        assert [r for r in range(25) if (r, k) not in sixteen.blocked] == [3, 9, 15, 21]
    # 16 rooms
    grid = np.ones((25, 25), dtype=int)
    for cell in sixteen.blocked:
        grid[cell] = 0
    rooms = np.ones_like(grid)
    for k in (6, 12, 18):
        rooms[k, :] = 0
        rooms[:, k] = 0
    assert ndimage.label(rooms)[1] == 16


@pytest.mark.parametrize("name", BUILTIN_GRIDS)
def test_builtin_connectivity_flood_fill(name):
    spec = builtin_grid(name)
    grid = np.ones((spec.height, spec.width), dtype=int)
    for cell in spec.blocked:
        grid[cell] = 0
    labels, count = ndimage.label(grid)  # 4-connectivity by default
    assert count == 1
    assert labels[spec.start] == labels[spec.goal] == 1


def test_invalid_grids():
    with pytest.raises(GridError, match="blocked"):
        GridSpec(3, 3, frozenset({(0, 0)}), (0, 0), (2, 2))
    with pytest.raises(GridError, match="outside"):
        GridSpec(3, 3, frozenset(), (0, 0), (3, 3))
    with pytest.raises(GridError, match="unreachable"):
        GridSpec(3, 3, frozenset({(1, 0), (1, 1), (1, 2)}), (0, 0), (0, 2))
    with pytest.raises(GridError, match="empty25, four_walls25, sixteen_walls25"):
        builtin_grid("maze")


def test_grid_dict_roundtrip():
    spec = builtin_grid("four_walls25")
    again = resolve_grid(spec.to_dict())
    assert again == spec


def test_mixture_policy():
    np.testing.assert_array_equal(mixture_policy(0.0, 3)[:, UP], 1.0)
    np.testing.assert_allclose(mixture_policy(1.0, 3), 0.2)
    np.testing.assert_allclose(mixture_policy(0.5, 2)[0], [0.6, 0.1, 0.1, 0.1, 0.1], atol=1e-15)
    with pytest.raises(ValueError):
        mixture_policy(1.5, 2)


def test_stay_kernel_induces_identity():
    kernel = TransitionKernel.from_next_state(np.repeat(np.arange(4)[:, None], N_ACTIONS, axis=1))
    rng = np.random.default_rng(0)
    policy = rng.dirichlet(np.ones(N_ACTIONS), size=4)
    np.testing.assert_array_equal(induced_chain(kernel, policy), np.eye(4))


def test_two_cell_grid_uniform_policy():
    spec = GridSpec(2, 1, start=(0, 0), goal=(0, 1))
    chain = induced_chain(build_gridworld_kernel(spec), mixture_policy(1.0, 2))
    # hand contraction: Up, Down, Stay and the off-edge horizontal move all self-loop
    np.testing.assert_allclose(chain, [[0.8, 0.2], [0.2, 0.8]], atol=1e-15)


def test_empty25_mixture_chain_rows():
    spec = builtin_grid("empty25")
    kernel = build_gridworld_kernel(spec)
    policy = mixture_policy(0.5, spec.n_states)
    chain = induced_chain(kernel, policy)
    np.testing.assert_allclose(chain.sum(axis=1), 1.0, rtol=0, atol=1e-12)
    s = spec.state_of((10, 10))
    expected = {(9, 10): 0.6, (11, 10): 0.1, (10, 9): 0.1, (10, 11): 0.1, (10, 10): 0.1}
    for cell, p in expected.items():
        assert chain[s, spec.state_of(cell)] == pytest.approx(p, abs=1e-15)
    assert np.count_nonzero(chain[s]) == 5
    # corner (0, 0): up and left collide
    s0 = spec.state_of((0, 0))
    assert chain[s0, s0] == pytest.approx(0.6 + 0.1 + 0.1, abs=1e-15)


def test_induced_chain_shape_mismatch():
    kernel = build_gridworld_kernel(GridSpec(2, 1, start=(0, 0), goal=(0, 1)))
    with pytest.raises(ValueError):
        induced_chain(kernel, mixture_policy(1.0, 3))


@st.composite
def small_kernels(draw):
    n = draw(st.integers(1, 10))
    a = draw(st.integers(1, 5))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    probs = rng.dirichlet(np.ones(n), size=(n, a))
    probs /= probs.sum(axis=2, keepdims=True)
    policy = rng.dirichlet(np.ones(a), size=n)
    return TransitionKernel(probs), policy


@settings(max_examples=60, deadline=None)
@given(small_kernels())
def test_induced_chain_matches_triple_loop(case):
    kernel, policy = case
    chain = induced_chain(kernel, policy)
    np.testing.assert_allclose(chain, naive_contraction(kernel.probs, policy), rtol=0, atol=1e-12)
    np.testing.assert_allclose(chain.sum(axis=1), 1.0, rtol=0, atol=1e-12)
    assert chain.min() >= 0.0 and chain.max() <= 1.0 + 1e-12


def test_softmax_policy_uniform_table():
    table = SoftmaxPolicy.uniform(4).table()
    np.testing.assert_allclose(table, 0.2)
    big = SoftmaxPolicy(np.array([[1000.0, 0.0, -1000.0, 0.0, 0.0]])).table()
    assert np.all(np.isfinite(big)) and big[0, 0] == pytest.approx(1.0)


def test_env_goal_transition():
    spec = builtin_grid("empty25")
    kernel = build_gridworld_kernel(spec)
    state = env_reset(spec)
    state = type(state)(spec.state_of((24, 23)), 5, False)
    nxt, reward = env_step(state, RIGHT, kernel, spec)
    assert (reward, nxt.done, nxt.steps_taken) == (1.0, True, 6)
    with pytest.raises(EnvError):
        env_step(nxt, LEFT, kernel, spec)


def test_env_stay_at_start():
    spec = builtin_grid("empty25")
    env = GridWorld(spec)
    state, reward = env.step(STAY)
    assert reward == 0.0 and state.cell == spec.start_state and not state.done


def test_optimal_episode_takes_manhattan_distance():
    spec = builtin_grid("empty25")
    env = GridWorld(spec)
    total, steps = 0.0, 0
    while not env.state.done:
        r, c = spec.cell_of(env.state.cell)
        _, reward = env.step(DOWN if r < 24 else RIGHT)
        total += reward
        steps += 1
    assert steps == 48 == abs(24 - 0) + abs(24 - 0)
    assert total == 1.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_random_episode_reward_is_binary(seed):
    spec = GridSpec(4, 4, frozenset({(1, 1), (2, 2)}), (0, 0), (3, 3))
    env = GridWorld(spec)
    rng = np.random.default_rng(seed)
    total = 0.0
    for _ in range(200):
        if env.state.done:
            break
        total += env.step(int(rng.integers(N_ACTIONS)))[1]
    assert total in (0.0, 1.0)


def test_stochastic_kernel_env_needs_rng():
    probs = np.full((2, N_ACTIONS, 2), 0.5)
    kernel = TransitionKernel(probs)
    spec = GridSpec(2, 1, start=(0, 0), goal=(0, 1))
    assert not kernel.deterministic
    with pytest.raises(EnvError):
        env_step(env_reset(spec), UP, kernel, spec)
    seen = {env_step(env_reset(spec), UP, kernel, spec, np.random.default_rng(s))[0].cell for s in range(20)}
    assert seen == {0, 1}


def test_kernel_rejects_bad_rows():
    with pytest.raises(ValueError):
        TransitionKernel(np.full((2, 1, 2), 0.4))


def test_default_start_and_goal_are_corner_open_cells():
    spec = GridSpec(4, 3, frozenset({(0, 0), (2, 3)}))
    assert spec.start == (0, 1) and spec.goal == (2, 2)
    assert GridSpec.from_dict({"width": 2, "height": 2}).goal == (1, 1)
    with pytest.raises(GridError):
        GridSpec(1, 1, frozenset({(0, 0)}))
