"""Tabular softmax learners and the episode/trajectory training loop.

Each episode starts by measuring the policy entropy and asking the schedule
for a trajectory length ``t_c``. The episode then alternates between
collecting ``t_c`` transitions and applying one learner update, until the
goal is reached or ``K`` interactions have been spent. The last trajectory
is cut short so that no episode ever exceeds ``K`` samples.
"""
from __future__ import annotations

import bisect
import logging
from dataclasses import dataclass, field, fields, replace
from typing import Callable, NamedTuple, Optional

import numpy as np

from .mdp import N_ACTIONS, GridSpec, GridWorld, resolve_grid, softmax
from .scheduler import ScheduleSpec, capture_reference_entropy, fixed, next_length
from .spectral import discrete_policy_entropy

log = logging.getLogger(__name__)

ALGORITHMS = ("reinforce", "actor_critic", "actor_critic_maxent", "ppo")
DEFAULT_MAXENT_COEFF = 0.01


class NumericalError(ArithmeticError):
    def __init__(self, message: str, episode: Optional[int] = None):
        super().__init__(message if episode is None else f"episode {episode}: {message}")
        self.episode = episode


class Transition(NamedTuple):
    state: int
    action: int
    reward: float
    next_state: int
    done: bool


Trajectory = list  # list[Transition]


@dataclass
class LearnerParams:
    actor_logits: np.ndarray
    critic_values: Optional[np.ndarray] = None

    @classmethod
    def zeros(cls, n_states: int, n_actions: int = N_ACTIONS, critic: bool = True) -> "LearnerParams":
        return cls(np.zeros((n_states, n_actions)), np.zeros(n_states) if critic else None)

    def copy(self) -> "LearnerParams":
        critic = None if self.critic_values is None else self.critic_values.copy()
        return LearnerParams(self.actor_logits.copy(), critic)

    def check_finite(self, episode: Optional[int] = None) -> None:
        if not np.all(np.isfinite(self.actor_logits)):
            raise NumericalError("non-finite actor logits", episode)
        if self.critic_values is not None and not np.all(np.isfinite(self.critic_values)):
            raise NumericalError("non-finite critic values", episode)


def score(logits_row: np.ndarray, action: int) -> np.ndarray:
    """Gradient of ``log softmax(z)[action]`` with respect to ``z``."""
    g = -softmax(logits_row)
    g[action] += 1.0
    return g


def entropy_gradient(logits_row: np.ndarray) -> np.ndarray:
    """Gradient of the row entropy ``H(softmax(z))`` with respect to ``z``."""
    p = softmax(logits_row)
    logp = np.log(np.where(p > 0, p, 1.0))
    H = -(p * logp).sum()
    return -p * (logp + H)


def rewards_to_go(rewards, gamma: float) -> np.ndarray:
    out = np.empty(len(rewards))
    acc = 0.0
    for k in range(len(rewards) - 1, -1, -1):
        acc = rewards[k] + gamma * acc
        out[k] = acc
    return out


def validate_trajectory(traj: Trajectory) -> None:
    if len(traj) == 0:
        raise ValueError("trajectory must contain at least one transition")
    if any(t.done for t in traj[:-1]):
        raise ValueError("only the final transition may be terminal")


def sample_trajectory(env: GridWorld, logits: np.ndarray, t_c: int, rng) -> Trajectory:
    """Roll the softmax policy forward for up to ``t_c`` steps.

    Stops early when the goal is reached. The policy is frozen for the whole
    trajectory, so the action CDF table is built once up front.
    """
    if t_c < 1:
        raise ValueError("t_c must be at least 1")
    cdf = np.cumsum(softmax(logits), axis=1).tolist()
    draws = rng.random(t_c).tolist()
    last = logits.shape[1] - 1
    traj = []
    for u in draws:
        s = env.state.cell
        a = min(bisect.bisect_right(cdf[s], u), last)
        nxt, reward = env.step(a, rng)
        traj.append(Transition(s, a, reward, nxt.cell, nxt.done))
        if nxt.done:
            break
    return traj


def reinforce_gradient(traj: Trajectory, logits: np.ndarray, gamma: float) -> np.ndarray:
    """Reward-to-go estimator ``sum_k gamma^k G_k grad log pi(a_k|s_k)``."""
    grad = np.zeros_like(logits, dtype=float)
    G = rewards_to_go([t.reward for t in traj], gamma)
    discount = 1.0
    for k, t in enumerate(traj):
        if G[k] != 0.0:
            grad[t.state] += discount * G[k] * score(logits[t.state], t.action)
        discount *= gamma
    return grad


def reinforce_update(traj: Trajectory, params: LearnerParams, gamma: float, lr: float) -> LearnerParams:
    validate_trajectory(traj)
    grad = reinforce_gradient(traj, params.actor_logits, gamma)
    if not np.all(np.isfinite(grad)):
        raise NumericalError("non-finite REINFORCE gradient")
    out = params.copy()
    out.actor_logits += lr * grad
    return out


def actor_critic_update(
    traj: Trajectory,
    params: LearnerParams,
    gamma: float,
    lr_actor: float,
    lr_critic: float,
    entropy_coeff: float = 0.0,
) -> LearnerParams:
    """One-step TD actor-critic, applied transition by transition."""
    validate_trajectory(traj)
    out = params.copy()
    logits, V = out.actor_logits, out.critic_values
    for s, a, r, s_next, done in traj:
        delta = r - V[s] if done else r + gamma * V[s_next] - V[s]
        V[s] += lr_critic * delta
        if delta != 0.0:
            logits[s] += lr_actor * delta * score(logits[s], a)
        if entropy_coeff > 0.0:
            logits[s] += lr_actor * entropy_coeff * entropy_gradient(logits[s])
    if not np.isfinite(delta):
        raise NumericalError("non-finite TD error")
    return out


def ppo_surrogate_gradient(logits, states, actions, advantages, old_probs, clip):
    """Gradient of ``sum_k min(rho_k A_k, clip(rho_k) A_k)`` with respect to the logits.

    Samples whose ratio has left the trust band in the direction favoured by
    their advantage contribute nothing.
    """
    p = softmax(logits[states])
    idx = np.arange(len(states))
    ratio = p[idx, actions] / old_probs
    clipped = ((advantages > 0) & (ratio > 1 + clip)) | ((advantages < 0) & (ratio < 1 - clip))
    weight = np.where(clipped, 0.0, ratio * advantages)
    onehot = np.zeros_like(p)
    onehot[idx, actions] = 1.0
    grad = np.zeros_like(logits)
    np.add.at(grad, states, weight[:, None] * (onehot - p))
    return grad


def ppo_update(
    batch: Trajectory,
    params: LearnerParams,
    gamma: float,
    lr: float,
    clip: float = 0.2,
    epochs: int = 4,
    lr_critic: Optional[float] = None,
) -> LearnerParams:
    """Clipped-surrogate ascent on the logits, ``epochs`` full passes over the batch.

    Advantages are ``G_k - V(s_k)`` with the critic as it was before the
    update; the surrogate gradient is summed over the batch.
    """
    validate_trajectory(batch)
    if clip <= 0:
        raise ValueError("clip must be positive")
    out = params.copy()
    if epochs == 0:
        return out
    lr_critic = lr if lr_critic is None else lr_critic
    states = np.fromiter((t.state for t in batch), dtype=np.int64, count=len(batch))
    actions = np.fromiter((t.action for t in batch), dtype=np.int64, count=len(batch))
    G = rewards_to_go([t.reward for t in batch], gamma)
    adv = G - out.critic_values[states]
    old_p = softmax(out.actor_logits[states])[np.arange(len(batch)), actions]
    for _ in range(epochs):
        out.actor_logits += lr * ppo_surrogate_gradient(out.actor_logits, states, actions, adv, old_p, clip)
        resid = np.zeros_like(out.critic_values)
        np.add.at(resid, states, G - out.critic_values[states])
        out.critic_values += lr_critic * resid
    return out


@dataclass(frozen=True)
class TrainConfig:
    algorithm: str = "actor_critic"
    grid: object = "four_walls25"
    schedule: ScheduleSpec = field(default_factory=lambda: fixed(16))
    gamma: float = 0.99
    lr_actor: float = 0.01
    lr_critic: float = 0.01
    entropy_coeff: float = 0.0
    ppo_clip: float = 0.2
    ppo_epochs: int = 4
    episodes: int = 2500
    max_steps_per_episode: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.lr_actor <= 0 or self.lr_critic <= 0:
            raise ValueError("learning rates must be positive")
        if self.entropy_coeff < 0:
            raise ValueError("entropy_coeff must be nonnegative")
        if self.entropy_coeff > 0 and self.algorithm != "actor_critic_maxent":
            raise ValueError("entropy_coeff > 0 is only meaningful for actor_critic_maxent")
        if self.ppo_clip <= 0 or self.ppo_epochs < 0:
            raise ValueError("ppo_clip must be positive and ppo_epochs nonnegative")
        if self.episodes < 1 or self.max_steps_per_episode < 1:
            raise ValueError("episodes and max_steps_per_episode must be positive")

    def with_seed(self, seed: int) -> "TrainConfig":
        return replace(self, seed=seed)

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["schedule"] = self.schedule.to_dict()
        if isinstance(self.grid, GridSpec):
            out["grid"] = self.grid.to_dict()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown training keys: {sorted(extra)}")
        data = dict(data)
        if isinstance(data.get("schedule"), dict):
            data["schedule"] = ScheduleSpec.from_dict(data["schedule"])
        if data.get("algorithm") == "actor_critic_maxent" and "entropy_coeff" not in data:
            data["entropy_coeff"] = DEFAULT_MAXENT_COEFF
        return cls(**data)


@dataclass(frozen=True)
class EpisodeRecord:
    episode: int
    t_c: int
    entropy: float
    episode_return: float
    cumulative_samples: int
    goal_reached: bool


def _updater(config: TrainConfig) -> Callable[[Trajectory, LearnerParams], LearnerParams]:
    c = config
    if c.algorithm == "reinforce":
        return lambda traj, p: reinforce_update(traj, p, c.gamma, c.lr_actor)
    if c.algorithm == "ppo":
        return lambda traj, p: ppo_update(
            traj, p, c.gamma, c.lr_actor, c.ppo_clip, c.ppo_epochs, lr_critic=c.lr_critic
        )
    return lambda traj, p: actor_critic_update(
        traj, p, c.gamma, c.lr_actor, c.lr_critic, c.entropy_coeff
    )


def train(
    config: TrainConfig,
    on_episode: Optional[Callable[[EpisodeRecord], None]] = None,
) -> list[EpisodeRecord]:
    spec: GridSpec = resolve_grid(config.grid)
    env = GridWorld(spec)
    env_rng, schedule_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(config.seed).spawn(2)
    )
    params = LearnerParams.zeros(spec.n_states, critic=config.algorithm != "reinforce")
    update = _updater(config)

    schedule = config.schedule
    if schedule.adaptive:
        schedule = schedule.with_reference(capture_reference_entropy(softmax(params.actor_logits)))

    K = config.max_steps_per_episode
    records: list[EpisodeRecord] = []
    cumulative = 0
    for episode in range(config.episodes):
        H_c = discrete_policy_entropy(softmax(params.actor_logits))
        t_c = next_length(schedule, H_c, schedule_rng)
        env.reset()
        k, ret = 0, 0.0
        while k < K and not env.state.done:
            traj = sample_trajectory(env, params.actor_logits, min(t_c, K - k), env_rng)
            try:
                params = update(traj, params)
            except NumericalError as exc:
                raise NumericalError(str(exc), episode) from exc
            params.check_finite(episode)
            k += len(traj)
            ret += sum(t.reward for t in traj)
        cumulative += k
        rec = EpisodeRecord(episode, t_c, H_c, ret, cumulative, env.state.done)
        records.append(rec)
        if on_episode is not None:
            on_episode(rec)
    return records
