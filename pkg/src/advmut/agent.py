"""Deep Q-learning over the mutation action space.

Reward: 0 while the target still says malware, otherwise
20^(-(turn-1)/maxturn) * 100, so an immediate evasion earns 100 and later
ones decay toward the floor. Learning minimizes the squared TD error
against a periodically synced target network, with epsilon-greedy
exploration and a bounded replay buffer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import nn

LABEL_MALWARE = 1
LABEL_BENIGN = 0


class TurnOutOfRange(ValueError):
    pass


class EmptyMask(ValueError):
    pass


@dataclass(frozen=True)
class AgentConfig:
    gamma: float = 0.99
    episodes: int = 600
    maxturn: int = 80
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_fraction: float = 0.8  # linear decay over this share of episodes
    replay_capacity: int = 10_000
    batch_size: int = 32
    target_sync: int = 250  # env steps between target-network syncs
    train_every: int = 4  # env steps between gradient updates
    lr: float = 1e-3
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma outside [0, 1]")
        if self.maxturn < 1:
            raise ValueError("maxturn must be >= 1")


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool
    turn: int


class ReplayBuffer:
    """Bounded FIFO with uniform sampling."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self._items: list[Transition] = []
        self._cursor = 0

    def __len__(self) -> int:
        return len(self._items)

    def push(self, item: Transition) -> None:
        if len(self._items) < self.capacity:
            self._items.append(item)
        else:
            self._items[self._cursor] = item  # oldest-first eviction
        self._cursor = (self._cursor + 1) % self.capacity

    def sample(self, n: int, rng: np.random.Generator) -> list[Transition]:
        picks = rng.integers(0, len(self._items), size=n)
        return [self._items[i] for i in picks]


def build_qnet(state_width: int, n_actions: int, seed: int) -> nn.DenseNet:
    """state (plus the turn input) -> 256 ReLU -> 64 ReLU -> one linear
    value per action."""
    return nn.init_dense(
        [state_width + 1, 256, 64, n_actions],
        [nn.ACT_RELU, nn.ACT_RELU, nn.ACT_IDENTITY],
        seed=seed,
    )


def compute_reward(label: int, turn: int, maxturn: int) -> float:
    """0 for a malware label; the decayed evasion bonus for benign."""
    if not 1 <= turn <= maxturn:
        raise TurnOutOfRange(f"turn {turn} outside [1, {maxturn}]")
    if label == LABEL_MALWARE:
        return 0.0
    return 20.0 ** (-(turn - 1) / maxturn) * 100.0


def discounted_return(rewards: list[float], gamma: float) -> float:
    """Sum of gamma^(t-1) * r_t."""
    return float(sum(r * gamma ** t for t, r in enumerate(rewards)))


def select_action(
    qnet: nn.DenseNet,
    state: np.ndarray,
    epsilon: float,
    mask: list[int],
    rng: np.random.Generator,
) -> int:
    """Epsilon-greedy over the masked action positions; greedy ties go to
    the lowest position."""
    if not mask:
        raise EmptyMask("no available actions")
    if rng.random() < epsilon:
        return int(mask[int(rng.integers(0, len(mask)))])
    q = nn.forward(qnet, state)
    masked = np.full_like(q, -np.inf)
    masked[mask] = q[mask]
    return int(np.argmax(masked))


def train_step_dqn(
    qnet: nn.DenseNet,
    target_net: nn.DenseNet,
    batch: list[Transition],
    gamma: float,
    opt,
    mask: list[int] | None = None,
) -> float:
    """One squared-TD-error step on qnet only.

    target = r for terminal transitions, else r + gamma * max over the
    masked actions of the frozen target network at the next state.
    """
    if not batch:
        raise ValueError("empty batch")
    states = np.stack([t.state for t in batch])
    next_states = np.stack([t.next_state for t in batch])
    rewards = np.array([t.reward for t in batch])
    terminal = np.array([t.terminal for t in batch])
    actions = np.array([t.action for t in batch])

    q_next = nn.forward(target_net, next_states)
    if mask is not None:
        keep = np.full(q_next.shape[1], -np.inf)
        keep[mask] = 0.0
        q_next = q_next + keep
    targets = rewards + gamma * np.max(q_next, axis=1) * (~terminal)

    outputs, zs, acts = nn.forward_cached(qnet, states)
    chosen = outputs[np.arange(len(batch)), actions]
    td = chosen - targets
    loss = float(np.mean(td * td))
    if not math.isfinite(loss):
        raise nn.NonFiniteLoss(f"TD loss is {loss}")

    dl_dy = np.zeros_like(outputs)
    dl_dy[np.arange(len(batch)), actions] = 2.0 * td / len(batch)
    grads, _ = nn.backward(qnet, zs, acts, dl_dy)
    opt.step(qnet.parameters(), nn.flatten_grads(grads))
    return loss


def epsilon_for_episode(config: AgentConfig, episode: int) -> float:
    """Linear decay from start to end over the first epsilon_fraction of
    training, flat afterwards."""
    horizon = max(1, int(config.episodes * config.epsilon_fraction))
    frac = min(episode / horizon, 1.0)
    return config.epsilon_start + (config.epsilon_end - config.epsilon_start) * frac


@dataclass
class EpisodeStats:
    episode: int
    turns: int
    success: bool
    return_: float
    epsilon: float


@dataclass
class Policy:
    """Q-network plus the input transform it was trained with.

    Two departures from feeding raw state vectors, both required for the
    value function to be learnable at all:
    - whitening: raw features span several orders of magnitude (normalized
      histograms next to log sizes and hash-bin counts); unwhitened inputs
      make every Q output drift in common mode and the action gaps drown.
    - the turn index: the reward decays with the turn, so the value of a
      file state depends on how many turns are already spent. Without the
      turn the process is non-Markov for the approximator, self-looping
      no-op actions bootstrap on their own inflated estimates, and greedy
      policies collapse onto them.
    """

    qnet: nn.DenseNet
    mean: np.ndarray
    std: np.ndarray
    maxturn: int

    def q_input(self, state: np.ndarray, turn: int) -> np.ndarray:
        whitened = (state - self.mean) / self.std
        return np.append(whitened, turn / self.maxturn)

    def save(self, net_path, norm_path) -> None:
        nn.save_net(self.qnet, net_path)
        np.savez(norm_path, mean=self.mean, std=self.std, maxturn=self.maxturn)

    @classmethod
    def load(cls, net_path, norm_path) -> "Policy":
        data = np.load(norm_path)
        return cls(
            qnet=nn.load_net(net_path),
            mean=data["mean"],
            std=data["std"],
            maxturn=int(data["maxturn"]),
        )


def _env_whitening(env) -> tuple[np.ndarray, np.ndarray]:
    stats = getattr(env, "state_stats", None)
    if stats is None:
        width = env.state_width
        return np.zeros(width), np.ones(width)
    mean, std = stats()
    return mean, std


def train_agent(env, config: AgentConfig) -> tuple[Policy, list[EpisodeStats]]:
    """Run the full training loop against one environment.

    Per step: select action, apply it, push the (whitened) transition,
    and every train_every steps fit one batch; the target network syncs
    every target_sync steps. Returns the trained policy plus per-episode
    stats.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    mean, std = _env_whitening(env)
    qnet = build_qnet(env.state_width, env.n_actions, seed=int(rng.integers(0, 2**31)))
    policy = Policy(qnet=qnet, mean=mean, std=std, maxturn=config.maxturn)
    target_net = qnet.copy()
    opt = nn.Adam(lr=config.lr)
    replay = ReplayBuffer(config.replay_capacity)
    mask = list(range(env.n_actions))

    stats: list[EpisodeStats] = []
    global_step = 0
    for episode in range(config.episodes):
        epsilon = epsilon_for_episode(config, episode)
        state = policy.q_input(env.reset(), 0)
        rewards: list[float] = []
        done = False
        while not done:
            action = select_action(qnet, state, epsilon, mask, rng)
            result = env.step(action)
            next_state = policy.q_input(result.state, result.info["turn"])
            replay.push(
                Transition(
                    state=state,
                    action=action,
                    reward=result.reward,
                    next_state=next_state,
                    terminal=result.done,
                    turn=result.info["turn"],
                )
            )
            state = next_state
            rewards.append(result.reward)
            done = result.done
            global_step += 1
            if len(replay) >= config.batch_size and global_step % config.train_every == 0:
                train_step_dqn(
                    qnet,
                    target_net,
                    replay.sample(config.batch_size, rng),
                    config.gamma,
                    opt,
                    mask=mask,
                )
            if global_step % config.target_sync == 0:
                target_net = qnet.copy()
        stats.append(
            EpisodeStats(
                episode=episode,
                turns=len(rewards),
                success=bool(env.trace and env.trace[-1]["label"] == LABEL_BENIGN),
                return_=discounted_return(rewards, config.gamma),
                epsilon=epsilon,
            )
        )
    return policy, stats


EVAL_EPSILON = 0.05  # trained policies keep their exploration floor so a
# no-op action (state unchanged -> same argmax) cannot pin a whole episode


def run_policy(env, policy: Policy, sample_index: int, greedy: bool = True, rng=None) -> dict:
    """Play one episode with a frozen policy or the uniform-random baseline."""
    rng = rng if rng is not None else np.random.default_rng(0)
    mask = list(range(env.n_actions))
    state = policy.q_input(env.reset(sample_index=sample_index), 0)
    rewards: list[float] = []
    done = False
    while not done:
        if greedy:
            action = select_action(policy.qnet, state, EVAL_EPSILON, mask, rng)
        else:
            action = int(mask[int(rng.integers(0, len(mask)))])
        result = env.step(action)
        state = policy.q_input(result.state, result.info["turn"])
        rewards.append(result.reward)
        done = result.done
    final_label = env.trace[-1]["label"] if env.trace else LABEL_MALWARE
    return {
        "sample_index": sample_index,
        "turns": len(rewards),
        "success": final_label == LABEL_BENIGN,
        "final_label": final_label,
        "mutant": env.current,
        "trace": list(env.trace),
    }
