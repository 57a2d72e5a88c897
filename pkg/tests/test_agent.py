import numpy as np
import pytest

from casande_lab.agent.basd import basd_simulate_state
from casande_lab.agent.losses import Batch, classifier_loss, q_loss, q_targets
from casande_lab.agent.network import (
    Adam,
    Layer,
    NetworkParams,
    ShapeMismatch,
    backward,
    forward,
    forward_batch,
    init_params,
    soft_update,
)
from casande_lab.agent.policy import EmptyMask, epsilon_greedy, linear_epsilon, rollout
from casande_lab.agent.replay import ReplayBuffer
from casande_lab.agent.train import TrainConfig, load_checkpoint, new_network, save_checkpoint, train
from casande_lab.environment import EnvConfig, build_layout
from casande_lab.knowledge import make_patient
from casande_lab.shaping import ShapingConfig

from conftest import binary_kb, gradcheck, random_batch

LN2 = 0.6931471805599453094172


def test_zero_weights_uniform_belief():
    params = init_params(6, 4, 5, zero=True)
    q, bel = forward(params, np.ones(6))
    np.testing.assert_allclose(bel, 0.2, atol=1e-15)
    assert q.shape == (4,)


def test_belief_normalized_and_scaling_keeps_argmax():
    rng = np.random.default_rng(0)
    params = init_params(7, 3, 6, rng)
    for _ in range(20):
        x = rng.normal(size=7)
        _, bel = forward(params, x)
        assert abs(bel.sum() - 1) < 1e-9
        scaled = params.copy()
        scaled.clf_head[-1].W *= 2
        scaled.clf_head[-1].b *= 2
        _, bel2 = forward(scaled, x)
        assert np.argmax(bel2) == np.argmax(bel)


def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        forward(init_params(4, 3, 2), np.zeros(5))
    with pytest.raises(ShapeMismatch):
        soft_update(init_params(4, 3, 2), init_params(5, 3, 2), 0.5)


def test_constant_loss_zero_gradient():
    rng = np.random.default_rng(1)
    params = init_params(4, 3, 2, rng)
    _, _, cache = forward_batch(params, rng.normal(size=(5, 4)))
    grads = backward(params, cache, np.zeros((5, 3)), np.zeros((5, 2)))
    assert all(np.all(g == 0) for g in grads.arrays())


def test_linear_regression_gradient():
    # encoder and classifier are empty-effect; the Q head is a single linear layer on identity features
    rng = np.random.default_rng(2)
    X = np.abs(rng.normal(size=(8, 3))) + 0.1
    W = rng.normal(size=(3, 2))
    Y = rng.normal(size=(8, 2))
    ident = Layer(np.eye(3), np.zeros(3))
    params = NetworkParams([ident], [Layer(W.copy(), np.zeros(2))], [Layer(np.zeros((3, 2)), np.zeros(2))])
    q, _, cache = forward_batch(params, X)
    grads = backward(params, cache, q - Y, None)
    np.testing.assert_allclose(grads.q_head[0].W, X.T @ (X @ W - Y), atol=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_finite_differences(seed):
    assert gradcheck(seed) < 1e-4


def one_batch(q_sa_target, terminal):
    return Batch(np.zeros((1, 2)), np.array([0]), np.array([q_sa_target]), np.zeros((1, 2)),
                 np.array([terminal]), np.ones((1, 3), dtype=bool), np.array([[1.0, 0.0]]))


def test_q_loss_examples():
    params = init_params(2, 3, 2, zero=True)
    batch = one_batch(2.0, False)
    loss, _ = q_loss(params, batch, np.array([2.0]), np.array([1.0]))
    assert loss == 2.5
    loss, _ = q_loss(params, batch, np.array([0.0]), np.array([0.0]))
    assert loss == 0.0
    # terminal: target is the reward and the exit residual is dropped
    term = one_batch(3.0, True)
    t = q_targets(init_params(2, 3, 2, np.random.default_rng(0)), term, 0.99)
    assert t[0] == 3.0
    loss, _ = q_loss(params, term, t, np.array([100.0]))
    assert loss == 4.5


def test_q_targets_masked_max():
    rng = np.random.default_rng(3)
    target = init_params(2, 3, 2, rng)
    batch = random_batch(rng, 6, 2, 3, 2, terminal_p=0.0)
    q_next, _, _ = forward_batch(target, batch.next_states)
    t = q_targets(target, batch, 0.9)
    for i in range(6):
        best = q_next[i][batch.next_masks[i]].max()
        assert t[i] == pytest.approx(batch.rewards[i] + 0.9 * best, abs=1e-12)


def test_classifier_loss_examples():
    params = init_params(2, 3, 2, zero=True)
    loss, grads = classifier_loss(params, one_batch(0.0, False))
    assert loss == 0.0 and all(np.all(g == 0) for g in grads.arrays())
    loss, _ = classifier_loss(params, one_batch(0.0, True))
    assert loss == pytest.approx(0.5 * LN2, abs=1e-15)
    sharp = init_params(2, 3, 2, zero=True)
    sharp.clf_head[-1].b[:] = [800.0, 0.0]
    loss, _ = classifier_loss(sharp, one_batch(0.0, True))
    assert loss == 0.0


def test_soft_update():
    rng = np.random.default_rng(4)
    theta, phi = init_params(3, 2, 2, rng), init_params(3, 2, 2, rng)
    assert soft_update(theta, phi, 1.0).checksum() == theta.checksum()
    assert soft_update(theta, phi, 0.0).checksum() == phi.checksum()
    rho = 0.1

    def dist(a, b):
        return np.sqrt(sum(np.sum((x - y) ** 2) for x, y in zip(a.arrays(), b.arrays())))

    d = dist(phi, theta)
    for _ in range(5):
        phi = soft_update(theta, phi, rho)
        nd = dist(phi, theta)
        assert nd == pytest.approx((1 - rho) * d, rel=1e-9)
        d = nd


def test_epsilon_greedy():
    q = np.array([1.0, 5.0, np.inf, 2.0])
    mask = np.array([True, True, False, True])
    assert all(epsilon_greedy(q, mask, 0.0, None) == 1 for _ in range(3))
    assert epsilon_greedy([1.0, 1.0, 0.0], [True, True, True], 0.0, None) == 0
    with pytest.raises(EmptyMask):
        epsilon_greedy(q, np.zeros(4, dtype=bool), 0.5, np.random.default_rng(0))
    rng = np.random.default_rng(5)
    n = 100_000
    draws = np.array([epsilon_greedy(q, mask, 1.0, rng) for _ in range(n)])
    assert not np.any(draws == 2)
    counts = np.bincount(draws, minlength=4)[[0, 1, 3]]
    p = 1 / 3
    assert np.all(np.abs(counts - n * p) <= 3 * np.sqrt(n * p * (1 - p)))


def test_linear_epsilon():
    assert linear_epsilon(0, 1.0, 0.05, 100) == 1.0
    assert linear_epsilon(50, 1.0, 0.05, 100) == pytest.approx(0.525)
    assert linear_epsilon(100, 1.0, 0.05, 100) == 0.05
    assert linear_epsilon(5, 1.0, 0.05, 0) == 0.05


def test_replay_ring_and_sampling():
    buf = ReplayBuffer(5, 2, 3, 2)
    for i in range(8):
        buf.add(np.full(2, i), i % 3, float(i), 0.0, np.zeros(2), False, np.ones(3, dtype=bool), [1, 0])
    assert len(buf) == 5
    assert sorted(buf.rewards.tolist()) == [3.0, 4.0, 5.0, 6.0, 7.0]
    rng = np.random.default_rng(6)
    counts = np.zeros(5)
    for _ in range(4000):
        idx = buf.sample_indices(3, rng)
        assert len(set(idx.tolist())) == 3
        counts[idx] += 1
    assert np.all(np.abs(counts - 2400) < 3 * np.sqrt(4000 * 0.6 * 0.4))
    with pytest.raises(ValueError):
        buf.sample_indices(6, rng)


def basd_kb_patient(n_pos):
    E = 8
    kb = binary_kb(p_yes=((0.5,) * E, (0.5,) * E))
    values = {e: True for e in range(n_pos)}
    p = make_patient(kb, age=40, sex="M", chief_complaint=0, values=values, gt_pathology=1,
                     gt_differential=[0.5, 0.5])
    return kb, p


def test_basd_stop_target():
    kb, p = basd_kb_patient(1)
    state, target, y = basd_simulate_state(p, 5, np.random.default_rng(0), build_layout(kb), kb, p=1)
    assert target == kb.num_evidences and y == 1


def test_basd_properties():
    kb, p = basd_kb_patient(4)
    lay = build_layout(kb)
    rng = np.random.default_rng(1)
    T = 6
    for _ in range(300):
        state, target, _ = basd_simulate_state(p, T, rng, lay, kb)
        pos = state.inquired & p.experienced
        neg = state.inquired - p.experienced
        assert 0 in pos
        assert len(neg) < T - len(pos) or len(neg) == 0
        if len(pos) < 4:
            assert target in p.experienced and target not in state.inquired
        else:
            assert target == kb.num_evidences


def tiny_training(steps, shaping=None, seed=0):
    kb = binary_kb(p_yes=((0.9, 0.2, 0.7), (0.1, 0.8, 0.3)))
    from casande_lab.datagen import sample_patients

    pats = sample_patients(kb, 30, seed=1)
    cfg = TrainConfig(steps=steps, env_count=4, batch_size=8, warmup=8, capacity=200, seed=seed,
                      encoder=(8,), head=(4,), log_every=10)
    return kb, pats, train(kb, pats, EnvConfig(T=3), shaping or ShapingConfig(), cfg, record_rewards=True)


def test_zero_steps_returns_initialization():
    kb, _, res = tiny_training(0)
    cfg = TrainConfig(steps=0, env_count=4, batch_size=8, warmup=8, capacity=200, seed=0, encoder=(8,), head=(4,))
    assert res.params.checksum() == new_network(kb, cfg).checksum()


def test_training_deterministic_and_logs():
    _, _, a = tiny_training(40)
    _, _, b = tiny_training(40)
    assert a.params.checksum() == b.params.checksum()
    assert a.shaped_rewards == b.shaped_rewards
    assert [r["step"] for r in a.log] == [10, 20, 30, 40]
    _, _, c = tiny_training(40, seed=1)
    assert c.params.checksum() != a.params.checksum()


def test_disabled_shaping_leaves_base_rewards():
    _, _, res = tiny_training(30, ShapingConfig.disabled())
    assert res.shaped_rewards == res.base_rewards and len(res.base_rewards) == 120


def test_checkpoint_round_trip(tmp_path):
    _, _, res = tiny_training(20)
    path = tmp_path / "ck.json"
    save_checkpoint(path, res.params, {"train": {"seed": 0}}, res.rng_state, res.target, res.optimizer_state)
    params, meta = load_checkpoint(path)
    assert params.checksum() == res.params.checksum()


def test_rollout_policies():
    kb, pats, res = tiny_training(20)
    lay = build_layout(kb)
    for policy in ("greedy", "random"):
        t = rollout(res.params, kb, pats[0], EnvConfig(T=3), lay, policy, np.random.default_rng(0))
        assert t.turns[-1].terminal
        assert len(t.inquired) <= 3
        assert len(set(t.inquired)) == len(t.inquired) and pats[0].chief_complaint not in t.inquired


def test_adam_moves_against_gradient():
    params = init_params(2, 2, 2, zero=True)
    grads = params.zeros_like()
    grads.q_head[-1].b[:] = [1.0, -1.0]
    Adam(0.1).step(params, grads)
    np.testing.assert_allclose(params.q_head[-1].b, [-0.1, 0.1], atol=1e-6)


def test_heads_share_encoder():
    rng = np.random.default_rng(7)
    params = init_params(5, 4, 3, rng)
    x = np.abs(rng.normal(size=5))
    q0, b0 = forward(params, x)
    params.encoder[0].W += 0.1 * rng.normal(size=params.encoder[0].W.shape)
    q1, b1 = forward(params, x)
    assert not np.allclose(q0, q1) and not np.allclose(b0, b1)


def test_q_loss_gradient_descent_converges():
    rng = np.random.default_rng(8)
    params = init_params(4, 3, 2, rng, encoder=(8,), head=(6,))
    batch = random_batch(rng, 1, 4, 3, 2, terminal_p=0.0)
    targets, exits = np.array([2.0]), np.array([-1.0])
    first, _ = q_loss(params, batch, targets, exits)
    from casande_lab.agent.network import SGD
    opt = SGD(0.05)
    for _ in range(100):
        loss, grads = q_loss(params, batch, targets, exits)
        opt.step(params, grads)
    assert loss < 0.01 * first


def test_full_buffer_uniform_sampling():
    buf = ReplayBuffer(20, 1, 2, 2)
    for i in range(20):
        buf.add([i], 0, 0.0, 0.0, [0], False, [True, True], [1, 0])
    rng = np.random.default_rng(9)
    draws = np.concatenate([buf.sample_indices(10, rng) for _ in range(10_000)])
    counts = np.bincount(draws, minlength=20)
    n, p = draws.size, 1 / 20
    assert np.all(np.abs(counts - n * p) <= 3 * np.sqrt(n * p * (1 - p)))


def test_rollouts_never_repeat(toy_kb, toy_patients):
    params = new_network(toy_kb, TrainConfig(encoder=(8,), head=(4,)))
    lay = build_layout(toy_kb)
    rng = np.random.default_rng(0)
    for p in toy_patients:
        for policy in ("greedy", "random"):
            t = rollout(params, toy_kb, p, EnvConfig(T=8), lay, policy, rng)
            asked = [p.chief_complaint, *t.inquired]
            assert len(asked) == len(set(asked)) and len(t.inquired) <= 8
