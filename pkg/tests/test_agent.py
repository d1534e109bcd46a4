import numpy as np
import pytest

from advmut import agent as A, nn


def test_reward_turn_one_is_hundred():
    assert A.compute_reward(A.LABEL_BENIGN, 1, 80) == pytest.approx(100.0)


def test_reward_malware_always_zero():
    for turn in (1, 5, 40, 80):
        assert A.compute_reward(A.LABEL_MALWARE, turn, 80) == 0.0


def test_reward_midpoint_closed_form():
    # 100 * 20**(-(41-1)/80) = 100 / sqrt(20)
    assert A.compute_reward(A.LABEL_BENIGN, 41, 80) == pytest.approx(22.3606798, abs=1e-6)


def test_reward_floor_and_range():
    floor = A.compute_reward(A.LABEL_BENIGN, 80, 80)
    assert floor == pytest.approx(100.0 * 20.0 ** (-79 / 80))
    assert floor > 5.0
    for turn in range(1, 81):
        r = A.compute_reward(A.LABEL_BENIGN, turn, 80)
        assert floor <= r <= 100.0


def test_reward_strictly_decreasing_in_turn():
    values = [A.compute_reward(A.LABEL_BENIGN, t, 80) for t in range(1, 81)]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_reward_turn_out_of_range():
    with pytest.raises(A.TurnOutOfRange):
        A.compute_reward(A.LABEL_BENIGN, 0, 80)
    with pytest.raises(A.TurnOutOfRange):
        A.compute_reward(A.LABEL_BENIGN, 81, 80)


def test_discounted_return_examples():
    assert A.discounted_return([100.0], 0.99) == pytest.approx(100.0)
    assert A.discounted_return([0.0, 0.0, 100.0], 0.99) == pytest.approx(98.01, abs=1e-9)
    assert A.discounted_return([], 0.99) == 0.0


def test_select_action_greedy_argmax():
    qnet = nn.DenseNet(
        layers=[nn.Layer(np.zeros((3, 4)), np.array([1.0, 5.0, 3.0, 2.0]), nn.ACT_IDENTITY)],
        input_width=3,
    )
    choice = A.select_action(qnet, np.zeros(3), 0.0, [0, 1, 2, 3], np.random.default_rng(0))
    assert choice == 1


def test_select_action_tie_prefers_lowest_index():
    qnet = nn.DenseNet(
        layers=[nn.Layer(np.zeros((2, 3)), np.array([7.0, 7.0, 7.0]), nn.ACT_IDENTITY)],
        input_width=2,
    )
    assert A.select_action(qnet, np.zeros(2), 0.0, [0, 1, 2], np.random.default_rng(0)) == 0


def test_select_action_respects_mask():
    qnet = nn.DenseNet(
        layers=[nn.Layer(np.zeros((2, 4)), np.array([0.0, 9.0, 0.0, 0.0]), nn.ACT_IDENTITY)],
        input_width=2,
    )
    rng = np.random.default_rng(1)
    for epsilon in (0.0, 0.5, 1.0):
        for _ in range(200):
            choice = A.select_action(qnet, np.zeros(2), epsilon, [0, 2, 3], rng)
            assert choice != 1


def test_select_action_uniform_at_full_epsilon():
    qnet = A.build_qnet(4, 8, seed=0)
    rng = np.random.default_rng(2)
    counts = np.zeros(8)
    draws = 80_000
    for _ in range(draws):
        counts[A.select_action(qnet, np.zeros(5), 1.0, list(range(8)), rng)] += 1
    freqs = counts / draws
    assert np.abs(freqs - 0.125).max() < 0.01


def test_select_action_empty_mask():
    qnet = A.build_qnet(4, 2, seed=0)
    with pytest.raises(A.EmptyMask):
        A.select_action(qnet, np.zeros(5), 0.5, [], np.random.default_rng(0))


def test_qnet_architecture():
    # the hidden trunk is 256 -> 64; the input carries the 2,350 state
    # features plus the turn signal the reward decays over
    qnet = A.build_qnet(2350, 8, seed=1)
    assert [l.weights.shape for l in qnet.layers] == [(2351, 256), (256, 64), (64, 8)]
    assert [l.activation for l in qnet.layers] == [
        nn.ACT_RELU, nn.ACT_RELU, nn.ACT_IDENTITY,
    ]


def test_replay_buffer_capacity_and_eviction():
    buf = A.ReplayBuffer(capacity=3)
    mk = lambda r: A.Transition(np.zeros(2), 0, r, np.zeros(2), False, 1)
    for r in range(5):
        buf.push(mk(float(r)))
    assert len(buf) == 3
    rewards = sorted(t.reward for t in buf._items)
    assert rewards == [2.0, 3.0, 4.0]  # oldest evicted first


def test_td_zero_loss_at_fixpoint():
    qnet = A.build_qnet(3, 3, seed=2)
    state = np.full(4, 0.2)
    q = nn.forward(qnet, state)
    t = A.Transition(state, 1, float(q[1]), np.zeros(4), True, 1)
    loss = A.train_step_dqn(qnet, qnet.copy(), [t], 0.99, nn.Adam(lr=0.0))
    assert loss == pytest.approx(0.0, abs=1e-18)


def test_td_converges_to_terminal_reward():
    qnet = A.build_qnet(5, 4, seed=3)
    state = np.full(6, 0.5)
    target = qnet.copy()
    opt = nn.Adam(lr=1e-2)
    t = A.Transition(state, 2, 100.0, np.zeros(6), True, 1)
    for _ in range(2000):
        A.train_step_dqn(qnet, target, [t], 0.99, opt)
    assert nn.forward(qnet, state)[2] == pytest.approx(100.0, abs=1e-2)


def test_target_net_frozen_between_syncs():
    qnet = A.build_qnet(3, 3, seed=4)
    target = qnet.copy()
    before = [p.copy() for p in target.parameters()]
    t = A.Transition(np.ones(4), 0, 10.0, np.ones(4), False, 1)
    for _ in range(20):
        A.train_step_dqn(qnet, target, [t], 0.99, nn.Adam(lr=1e-3))
    for p, q in zip(target.parameters(), before):
        assert np.array_equal(p, q)
    # and qnet did move
    assert any(
        not np.array_equal(p, q) for p, q in zip(qnet.parameters(), before)
    )


def test_masked_actions_never_in_td_targets():
    qnet = A.build_qnet(2, 4, seed=5)
    target = nn.DenseNet(
        layers=[nn.Layer(np.zeros((3, 4)), np.array([0.0, 99.0, 0.0, 1.0]), nn.ACT_IDENTITY)],
        input_width=3,
    )
    t = A.Transition(np.zeros(3), 0, 0.0, np.zeros(3), False, 1)
    # max over mask [0, 2, 3] is 1.0, not the 99 sitting at masked index 1
    before = nn.forward(qnet, np.zeros(3))[0]
    opt = nn.Adam(lr=0.0)  # loss only
    loss = A.train_step_dqn(qnet, target, [t], 1.0, opt, mask=[0, 2, 3])
    assert loss == pytest.approx((before - 1.0) ** 2)


def test_epsilon_schedule_linear_then_flat():
    cfg = A.AgentConfig(episodes=100, epsilon_start=1.0, epsilon_end=0.05, epsilon_fraction=0.8)
    assert A.epsilon_for_episode(cfg, 0) == pytest.approx(1.0)
    assert A.epsilon_for_episode(cfg, 40) == pytest.approx(0.525)
    assert A.epsilon_for_episode(cfg, 80) == pytest.approx(0.05)
    assert A.epsilon_for_episode(cfg, 99) == pytest.approx(0.05)


def test_config_validation():
    with pytest.raises(ValueError):
        A.AgentConfig(gamma=1.5).validate()
    with pytest.raises(ValueError):
        A.AgentConfig(maxturn=0).validate()


class RiggedEnv:
    """Tiny synthetic environment: action 1 makes progress, three
    consecutive progress steps end the episode with a benign label."""

    def __init__(self, seed=0, n_actions=4, needed=3, maxturn=12):
        self.n_actions = n_actions
        self.state_width = 6
        self.maxturn = maxturn
        self.needed = needed
        self.trace = []
        self._rng = np.random.default_rng(seed)

    def _state(self):
        s = np.zeros(self.state_width)
        s[0] = self.progress / self.needed
        s[1] = 1.0
        return s

    def reset(self, sample_index=None):
        self.progress = 0
        self.turn = 0
        self.trace = []
        return self._state()

    def step(self, action):
        from advmut.env import StepResult

        self.turn += 1
        if action == 1:
            self.progress += 1
        evaded = self.progress >= self.needed
        label = A.LABEL_BENIGN if evaded else A.LABEL_MALWARE
        reward = A.compute_reward(label, self.turn, self.maxturn)
        done = evaded or self.turn >= self.maxturn
        info = {"action": str(action), "applied": True, "label": label, "turn": self.turn}
        self.trace.append(info)
        return StepResult(state=self._state(), reward=reward, done=done, info=info)


def test_train_agent_learns_rigged_env():
    env = RiggedEnv()
    cfg = A.AgentConfig(episodes=60, maxturn=12, seed=6, target_sync=50)
    policy, stats = A.train_agent(env, cfg)
    assert len(stats) == cfg.episodes
    assert all(s.turns <= cfg.maxturn for s in stats)

    # trained policy beats the uniform-random baseline by a wide margin
    rng = np.random.default_rng(7)
    def rollout(greedy):
        wins = 0
        for _ in range(60):
            state = policy.q_input(env.reset(), 0)
            done = False
            while not done:
                if greedy:
                    action = A.select_action(policy.qnet, state, 0.0, list(range(4)), rng)
                else:
                    action = int(rng.integers(0, 4))
                result = env.step(action)
                state = policy.q_input(result.state, result.info["turn"])
                done = result.done
            wins += env.trace[-1]["label"] == A.LABEL_BENIGN
        return wins / 60

    assert rollout(True) >= rollout(False) + 0.2


def test_train_agent_deterministic_stats():
    cfg = A.AgentConfig(episodes=20, maxturn=10, seed=8, target_sync=40)
    _, s1 = A.train_agent(RiggedEnv(), cfg)
    _, s2 = A.train_agent(RiggedEnv(), cfg)
    assert [(s.turns, s.success, s.return_) for s in s1] == [
        (s.turns, s.success, s.return_) for s in s2
    ]
