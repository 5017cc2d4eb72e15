"""Base-learner tests.

Unbiasedness is the load-bearing property: for each learner we enumerate
the full (sampled action x update coin) outcome space exactly and check
that the expected estimate reproduces the true losses componentwise
(for the linear learner, the losses induced by the hidden parameter).
Learning-rate formulas are checked against hand-evaluated values.
"""

import math

import numpy as np
import pytest

from bobw.graphs import FeedbackGraph
from bobw.learners import (
    BaseLearnerMeta,
    Exp2,
    Exp4,
    LogBarrierMab,
    TsallisInfGraph,
    WeakExp3,
)

RNG = np.random.default_rng


def expected_estimate(estimate, p, loss_fn, q, num_out):
    """Exact E over (action ~ p, upd ~ Bernoulli(q)) of an estimator."""
    total = np.zeros(num_out)
    for a, pa in enumerate(p):
        if pa == 0.0:
            continue
        for upd, w in ((True, q), (False, 1.0 - q)):
            total += pa * w * estimate(a, upd)
    return total


# --------------------------------------------------------------- Exp2


def test_exp2_learning_rate_first_round():
    # 8 spanning actions in R^2, q=1: rate = min{sqrt(ln8/2), 1/4} = 1/4
    angles = np.linspace(0, np.pi * 0.9, 8)
    actions = 0.9 * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    learner = Exp2(actions)
    learner.propose(1.0, RNG(0))
    assert learner._eta() == pytest.approx(0.25, rel=1e-12)
    assert math.sqrt(math.log(8) / 2) > 0.25  # the min picked the truncation


def test_exp2_scalar_case():
    learner = Exp2(np.array([[1.0]]))
    learner.propose(0.5, RNG(0))
    est = learner.estimate(np.array([1.0]), 0, 0.7, 0.5, True)
    assert est[0] == pytest.approx(0.7 / 0.5, abs=1e-10)
    assert np.all(learner.estimate(np.array([1.0]), 0, 0.7, 0.5, False) == 0)


def test_exp2_unbiased_by_enumeration():
    actions = np.array([[1.0, 0.0], [0.0, 1.0], [0.6, 0.6]])
    theta = np.array([0.4, 0.5])
    losses = actions @ theta
    learner = Exp2(actions)
    for q in (1.0, 0.5, 0.3):
        for p in (np.array([0.2, 0.3, 0.5]), np.array([0.6, 0.3, 0.1])):
            mean = expected_estimate(
                lambda a, upd: learner.estimate(p, a, float(losses[a]), q, upd),
                p, None, q, 3,
            )
            assert np.max(np.abs(mean - losses)) < 1e-10


def test_exp2_mixture_cap_and_monotone_rate():
    actions = np.vstack([np.eye(2), [[0.5, 0.5]], [[0.3, -0.3]]])
    learner = Exp2(actions)
    rng = RNG(1)
    prev = math.inf
    for q in (1.0, 0.4, 0.8, 0.1, 1.0):
        learner.propose(q, rng)
        eta = learner._eta()
        assert learner.d * eta / q <= 0.5 + 1e-12
        assert eta <= prev + 1e-15
        prev = eta
        learner.update(np.full(4, 0.3), upd=True)


def test_exp2_update_moves_weight_away_from_losses():
    actions = np.eye(2)
    learner = Exp2(actions)
    rng = RNG(2)
    for _ in range(60):
        a = learner.propose(1.0, rng)
        loss = np.array([1.0, 0.0])
        learner.update(loss, upd=True)
    p, _, _ = learner._pending if learner._pending else (None,) * 3
    assert learner.cum[0] > learner.cum[1]  # arm 0 accumulated loss


# --------------------------------------------------------------- Exp4


def test_exp4_learning_rate_first_round():
    policies = np.array([[0], [1], [0], [1]])
    learner = Exp4(policies, num_actions=2)
    learner.propose(1.0, RNG(0), context=0)
    # eta_1 = sqrt(ln4 / (K * 1)) with K=2
    assert math.sqrt(math.log(4) / 2) == pytest.approx(
        math.sqrt(learner.log_m / (2 * learner.sum_inv_q))
    )


def test_exp4_single_policy_point_mass():
    learner = Exp4(np.array([[1]]), num_actions=3)
    arm = learner.propose(1.0, RNG(0), context=0)
    assert arm == 1
    assert learner.pending_decision == 0  # the only policy
    P = learner.pending_distribution
    assert np.array_equal(learner.arm_probs(P, 0), [0.0, 1.0, 0.0])


def test_exp4_unbiased_by_enumeration():
    policies = np.array([[0, 1], [1, 0]])
    learner = Exp4(policies, num_actions=2)
    losses = np.array([0.3, 0.8])
    for q in (1.0, 0.5):
        for P in (np.array([0.5, 0.5]), np.array([0.9, 0.1])):
            probs = learner.arm_probs(P, 0)
            mean = expected_estimate(
                lambda a, upd: learner.estimate(probs, a, float(losses[a]), q, upd),
                probs, None, q, 2,
            )
            assert np.max(np.abs(mean - losses)) < 1e-10


def test_exp4_context_validation():
    learner = Exp4(np.array([[0, 1]]), num_actions=2)
    with pytest.raises(ValueError):
        learner.propose(1.0, RNG(0), context=5)
    with pytest.raises(ValueError):
        learner.propose(1.0, RNG(0))
    with pytest.raises(ValueError):
        Exp4(np.array([[3]]), num_actions=2)


def test_exp4_drives_weight_to_better_policy():
    policies = np.array([[0, 0], [1, 1]])
    learner = Exp4(policies, num_actions=2)
    rng = RNG(3)
    for t in range(200):
        learner.propose(1.0, rng, context=t % 2)
        learner.update(np.array([0.9, 0.1]), upd=True)
    assert learner.cum[0] > learner.cum[1]


# ------------------------------------------------------ TsallisInfGraph


def bandit_graph(k):
    return FeedbackGraph.self_loops_only(k)


def loopless_hub_graph():
    # node 0 loopless but observed by everyone else; 1..2 have self-loops
    return FeedbackGraph.from_edges(3, [(1, 1), (2, 2), (1, 0), (2, 0)])


def test_tsallis_beta_values():
    assert TsallisInfGraph(FeedbackGraph.complete_with_self_loops(16)).beta == (
        pytest.approx(1 - 1 / math.log(16))
    )
    assert TsallisInfGraph(bandit_graph(2)).beta == 0.5


def test_tsallis_bandit_reduction():
    learner = TsallisInfGraph(bandit_graph(2))
    p = np.array([0.7, 0.3])
    est = learner.estimate(p, 0, np.array([0.4, 0.9]), 0.5, True)
    assert est[0] == pytest.approx(0.4 / (0.5 * 0.7))
    assert est[1] == 0.0  # arm 1 unobserved when arm 0 is played


def test_tsallis_rate_uses_graph_term():
    g = FeedbackGraph.complete_with_self_loops(3)
    learner = TsallisInfGraph(g)
    assert learner.graph_term == pytest.approx(1.0)  # clique: both numbers 1
    learner.propose(0.5, RNG(0))
    assert learner.sum_term == pytest.approx((1 + 1) / 0.5)


def test_tsallis_rejects_weak_graph():
    # node 1 has no self-loop and only node 0 observes it: weakly observable
    g = FeedbackGraph.from_edges(3, [(0, 0), (0, 1), (0, 2)])
    with pytest.raises(ValueError):
        TsallisInfGraph(g)


def test_tsallis_unbiased_with_shifted_arm():
    learner = TsallisInfGraph(loopless_hub_graph())
    losses = np.array([0.2, 0.7, 0.5])
    p = np.array([0.8, 0.1, 0.1])  # loopless arm 0 above 1/2
    for q in (1.0, 0.5, 0.25):
        mean = expected_estimate(
            lambda a, upd: learner.estimate(p, a, losses, q, upd),
            p, None, q, 3,
        )
        assert np.max(np.abs(mean - losses)) < 1e-10


def test_tsallis_unbiased_random_graphs():
    rng = RNG(12)
    for _ in range(25):
        k = int(rng.integers(2, 5))
        edges = {(i, i) for i in range(k)}
        for i in range(k):
            for j in range(k):
                if i != j and rng.random() < 0.5:
                    edges.add((i, j))
        g = FeedbackGraph.from_edges(k, edges)
        learner = TsallisInfGraph(g)
        p = rng.dirichlet(np.ones(k))
        losses = rng.random(k)
        q = float(rng.uniform(0.2, 1.0))
        mean = expected_estimate(
            lambda a, upd: learner.estimate(p, a, losses, q, upd), p, None, q, k
        )
        assert np.max(np.abs(mean - losses)) < 1e-10


def test_tsallis_positivity_shift_under_hostile_round():
    learner = TsallisInfGraph(loopless_hub_graph())
    rng = RNG(4)
    # drive many rounds with tiny q and adversarial losses; asserts inside
    # update() check the shifted-positivity bound every round
    for _ in range(100):
        learner.propose(0.05, rng)
        learner.update(np.array([0.0, 1.0, 1.0]), upd=bool(rng.random() < 0.05))


def test_tsallis_loss_range_shift():
    learner = TsallisInfGraph(bandit_graph(2), loss_range=(-1.0, 1.0))
    est = learner.estimate(np.array([0.5, 0.5]), 0, np.array([-1.0, 0.0]), 1.0, True)
    assert est[0] == pytest.approx(0.0)  # -1 maps to 0
    with pytest.raises(ValueError):
        learner.estimate(np.array([0.5, 0.5]), 0, np.array([-2.0, 0.0]), 1.0, True)


# ------------------------------------------------------------ WeakExp3


def weak_graph_3():
    # 0 observes everyone (and itself); 1, 2 see nothing: weakly observable
    return FeedbackGraph.from_edges(3, [(0, 0), (0, 1), (0, 2)])


def two_cover_graph():
    # dominating set {0, 1}: 0 covers {0,2}, 1 covers {1,3}
    return FeedbackGraph.from_edges(4, [(0, 0), (0, 2), (1, 1), (1, 3)])


def test_weak_exp3_rate_hand_value():
    learner = WeakExp3(two_cover_graph())
    assert learner.dominating == [0, 1] and learner.delta == 2
    rng = RNG(0)
    for _ in range(8):
        learner.propose(1.0, rng)
        learner.update(np.zeros(4), upd=True)
    # eta_8 = 1 / ((sqrt(2)*8/ln4)^(2/3) + 8), hand-evaluated
    hand = 1.0 / ((math.sqrt(2) * 8 / math.log(4)) ** (2 / 3) + 8.0)
    assert learner._eta() == pytest.approx(hand, rel=1e-12)
    assert hand == pytest.approx(0.0829633, abs=1e-6)


def test_weak_exp3_mixture_structure():
    learner = WeakExp3(weak_graph_3())
    learner.propose(0.8, RNG(1))
    p, _, _ = learner._pending
    # first round: exp-weights part is uniform, so the two non-dominating
    # coordinates match and the dominating one carries the whole bonus
    assert p[1] == pytest.approx(p[2])
    gamma = 1.0 - 3.0 * p[1]
    eta = learner._eta()
    assert gamma == pytest.approx(min(1.0, math.sqrt(eta * 1 / 0.8)), rel=1e-12)
    assert p[0] == pytest.approx((1 - gamma) / 3 + gamma)


def test_weak_exp3_gamma_stays_below_half():
    # the 4*delta/min_q term keeps eta*delta/q <= 1/4, so gamma <= 1/2
    learner = WeakExp3(two_cover_graph())
    rng = RNG(2)
    for q in (1e-6, 0.3, 1.0, 1e-4, 0.9):
        learner.propose(q, rng)
        p, _, _ = learner._pending
        eta = learner._eta()
        assert math.sqrt(eta * learner.delta / q) <= 0.5 + 1e-12
        learner.update(np.zeros(4), upd=False)
    assert learner.clamp_events == 0


def test_weak_exp3_gamma_clamp_is_defensive(monkeypatch):
    learner = WeakExp3(weak_graph_3())
    monkeypatch.setattr(learner, "_eta", lambda: 100.0)
    learner.propose(0.5, RNG(2))
    p, _, _ = learner._pending
    assert learner.clamp_events == 1
    assert np.array_equal(p, [1.0, 0.0, 0.0])  # pure dominating-set play


def test_weak_exp3_unbiased_by_enumeration():
    learner = WeakExp3(weak_graph_3())
    losses = np.array([0.3, 0.9, 0.1])
    for q in (1.0, 0.5):
        for p in (np.array([0.5, 0.25, 0.25]), np.array([0.9, 0.05, 0.05])):
            mean = expected_estimate(
                lambda a, upd: learner.estimate(p, a, losses, q, upd), p, None, q, 3
            )
            assert np.max(np.abs(mean - losses)) < 1e-10


def test_weak_exp3_validation():
    with pytest.raises(ValueError):
        WeakExp3(weak_graph_3(), dominating=[2])  # 2 covers nothing
    g = FeedbackGraph.from_edges(2, [(0, 0)])  # node 1 never observed
    with pytest.raises(ValueError):
        WeakExp3(g)


def test_weak_exp3_accepts_strongly_observable_graph():
    # candidate removal can leave a strongly observable remainder; the
    # dominating-set learner must still run on it
    learner = WeakExp3(FeedbackGraph.complete_with_self_loops(3))
    assert learner.delta == 1


# -------------------------------------------------------- LogBarrierMab


def test_logbarrier_uniform_start_and_rate_cap():
    learner = LogBarrierMab(2, horizon=1000)
    learner.propose(RNG(0))
    p, _ = learner._pending
    assert np.allclose(p, [0.5, 0.5])
    assert learner._eta() == 0.125  # capped while nothing observed


def test_logbarrier_rate_stays_capped_under_full_observation():
    learner = LogBarrierMab(3, horizon=10_000)
    rng = RNG(1)
    for _ in range(50):
        learner.propose(rng)
        learner.update(np.array([0.1, 0.9, 0.5]), q=1.0, upd=True)
    assert learner._eta() == 0.125
    assert learner.excess == 0.0


def test_logbarrier_rate_monotone_under_arbitrary_q():
    learner = LogBarrierMab(2, horizon=500)
    rng = RNG(2)
    prev = math.inf
    for q in (1.0, 0.3, 0.9, 0.05, 1.0, 0.5):
        learner.propose(rng)
        learner.update(np.array([0.2, 0.8]), q=q, upd=bool(rng.random() < q))
        eta = learner._eta()
        assert eta <= prev + 1e-15
        prev = eta


def test_logbarrier_unbiased_by_enumeration():
    learner = LogBarrierMab(3, horizon=100)
    losses = np.array([0.2, 0.5, 0.9])
    for q in (1.0, 0.5, 0.25):
        for p in (np.full(3, 1 / 3), np.array([0.6, 0.3, 0.1])):
            mean = expected_estimate(
                lambda a, upd: learner.estimate(p, a, float(losses[a]), q, upd),
                p, None, q, 3,
            )
            assert np.max(np.abs(mean - losses)) < 1e-10


def test_logbarrier_floor_respected():
    learner = LogBarrierMab(2, horizon=50)
    rng = RNG(3)
    for _ in range(200):
        a = learner.propose(rng)
        loss = np.array([1.0, 0.0])
        learner.update(loss, q=1.0, upd=True)
    p, _ = learner._pending if learner._pending else (None, None)
    learner.propose(rng)
    p, _ = learner._pending
    assert p.min() >= learner.floor - 1e-15
    assert p[1] > 0.9  # weight concentrated on the good arm


def test_logbarrier_meta_kinds():
    learner = LogBarrierMab(4, horizon=256)
    assert learner.meta.kind == "strong-iw-1/2"
    assert learner.meta_dd.kind == "dd-iw-1/2"
    assert learner.meta.c1 == pytest.approx(4 * math.log(256))
    assert learner.meta.c2 == 4.0


# ----------------------------------------------------------- protocol


def test_pending_protocol_enforced():
    learner = LogBarrierMab(2, horizon=10)
    with pytest.raises(RuntimeError):
        learner.update(np.zeros(2), q=1.0, upd=True)
    learner.propose(RNG(0))
    with pytest.raises(RuntimeError):
        learner.propose(RNG(0))


def test_meta_validation():
    with pytest.raises(ValueError):
        BaseLearnerMeta(c0=0.0, c1=0.0, c2=0.0, kind="iw-1/2")
    with pytest.raises(ValueError):
        BaseLearnerMeta(c0=0.0, c1=1.0, c2=0.0, kind="magic")
    with pytest.raises(ValueError):
        Exp4(np.array([[0]]), num_actions=2).propose(1.5, RNG(0), context=0)
