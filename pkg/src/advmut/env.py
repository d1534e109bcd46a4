"""Mutation environment for the agent.

Holds the working PE bytes, applies actions through the mutation engine
with a per-episode feature supplier derived from the GAN's adversarial
vector, re-extracts the state features after each step, and queries the
black-box target for a label. The target is only ever asked for labels;
probabilities, parameters and gradients stay out of reach.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import detectors, features, gan, mutations, nn, pe_codec
from .agent import compute_reward


class EmptyPool(ValueError):
    pass


class EpisodeFinished(RuntimeError):
    pass


class InvalidAction(ValueError):
    pass


@dataclass(frozen=True)
class StepResult:
    state: np.ndarray
    reward: float
    done: bool
    info: dict


class MutationEnv:
    """One worker's environment; reset() starts an episode on one sample."""

    def __init__(
        self,
        target: detectors.TrainedDetector,
        generator: nn.DenseNet | None,
        vocab: features.Vocabulary,
        pool: list[bytes],
        maxturn: int = 80,
        seed: int = 0,
        upx_path: str | None = None,
        noise_width: int = 10,
    ):
        if not pool:
            raise EmptyPool("sample pool is empty")
        self.target = target
        self.generator = generator
        self.vocab = vocab
        self.pool = list(pool)
        self.maxturn = maxturn
        self.noise_width = noise_width
        self.mutation_config = mutations.MutationConfig(upx_path=upx_path)
        self.actions = mutations.available_actions(self.mutation_config)
        self._seed = seed
        self._episode = 0
        self._rng = np.random.default_rng(seed)
        self.current: bytes | None = None
        self.turn = 0
        self._done = True
        self.trace: list[dict] = []

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def state_width(self) -> int:
        return features.STATE_WIDTH

    def state_stats(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-feature mean and spread of the pool's state vectors; the
        agent whitens its network inputs with these."""
        states = np.stack([features.extract_state_features(b) for b in self.pool])
        return states.mean(axis=0), states.std(axis=0) + 1e-3

    def reset(self, sample_index: int | None = None) -> np.ndarray:
        """Load a sample, compute its adversarial diff once, return s0."""
        self._episode += 1
        # per-episode stream keyed on (seed, episode) for reproducibility
        self._rng = np.random.default_rng(
            np.random.SeedSequence(entropy=self._seed, spawn_key=(self._episode,))
        )
        if sample_index is None:
            sample_index = int(self._rng.integers(0, len(self.pool)))
        self.sample_index = sample_index
        self.current = self.pool[sample_index]
        self.turn = 0
        self._done = False
        self.trace = []

        pe = pe_codec.parse_pe(self.current)
        original = features.extract_gan_features(pe, self.current, self.vocab)
        if self.generator is not None:
            z = self._rng.random(self.noise_width)
            _, adversarial = gan.generate_adversarial(self.generator, original.astype(np.float64), z)
            diff = features.feature_diff(original, adversarial, self.vocab)
        else:
            diff = set()
        self.supplier = mutations.FeatureSupplier(
            vocab=self.vocab, diff=frozenset(diff), rng_seed=self._seed
        )
        self._cached_state = features.extract_state_features(self.current)
        self._cached_label: int | None = None
        return self._cached_state

    def step(self, action_position: int) -> StepResult:
        """Apply the action at `action_position` in this env's action list."""
        if self._done or self.current is None:
            raise EpisodeFinished("call reset() before step()")
        if not 0 <= action_position < len(self.actions):
            raise InvalidAction(f"action position {action_position} out of range")
        action = self.actions[action_position]

        outcome = mutations.apply_action(
            self.current, action, self.supplier, self._rng, self.mutation_config
        )
        self.turn += 1

        if outcome.applied:
            self.current = outcome.new_bytes
            self._cached_state = features.extract_state_features(self.current)
            self._cached_label = None
        # skipped actions leave the bytes untouched: reuse the cached state
        state = self._cached_state
        if self._cached_label is None:
            self._cached_label = int(
                detectors.predict_label(self.target, state)
            )
        label = self._cached_label
        if outcome.applied:
            reward = compute_reward(label, self.turn, self.maxturn)
        else:
            reward = 0.0  # skipped actions burn the turn without reward
        done = label == 0 or self.turn >= self.maxturn
        self._done = done
        info = {
            "action": action.label,
            "action_index": int(action),
            "applied": outcome.applied,
            "skip_reason": outcome.skip_reason.value if outcome.skip_reason else None,
            "label": label,
            "turn": self.turn,
        }
        self.trace.append(info)
        return StepResult(state=state, reward=reward, done=done, info=info)
