"""Base learners that stay stable under externally supplied update
probabilities.

Each learner follows a two-phase protocol driven by a wrapper:

- ``propose(q, rng) -> action``: the wrapper announces the probability
  ``q`` with which this round's feedback will reach the learner, the
  learner refreshes its learning rate (running sums include the current
  round), forms its playing distribution and samples a proposal.
- ``update(loss_row, upd)``: the wrapper hands back the realised loss
  row in the learner's own coordinates together with the flag
  ``upd`` (true with probability exactly q).  The learner reads only
  the entries its feedback model exposes (its own action for bandit
  learners, observed in-neighbors for graph learners) and applies an
  importance-weighted estimate divided by q.

``LogBarrierMab`` differs: its update probability depends on the action
it proposes, so ``propose(rng)`` takes no q and the wrapper reports q
at update time (its learning rate therefore lags one round).

Every learner exposes a ``meta`` describing its regret-bound constants
(c0, c1, c2) and stability class; wrappers size their bonus terms from
these numbers.  Estimators are exposed as pure ``estimate`` methods so
tests can enumerate the (action, upd) outcome space exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .design import john_exploration
from .graphs import (
    FeedbackGraph,
    classify,
    dominating_set,
    independence_number,
    weak_independence_number,
)
from .simplex import LogBarrier, Tsallis, ftrl_argmin, sample

__all__ = [
    "BaseLearnerMeta",
    "Exp2",
    "Exp4",
    "TsallisInfGraph",
    "WeakExp3",
    "LogBarrierMab",
]

IW_HALF = "iw-1/2"
IW_TWO_THIRDS = "iw-2/3"
DD_IW = "dd-iw-1/2"
STRONG_IW = "strong-iw-1/2"


@dataclass(frozen=True)
class BaseLearnerMeta:
    """Regret-bound constants consumed by the wrapper's bonus term."""

    c0: float
    c1: float
    c2: float
    kind: str

    def __post_init__(self):
        if self.c0 < 0 or self.c1 <= 0 or self.c2 < 0:
            raise ValueError("constants must be positive (c0, c2 may be zero)")
        if self.kind not in (IW_HALF, IW_TWO_THIRDS, DD_IW, STRONG_IW):
            raise ValueError(f"unknown stability class {self.kind!r}")


def _check_q(q):
    if not (0.0 < q <= 1.0):
        raise ValueError(f"update probability must lie in (0, 1], got {q}")


def _softmax_weights(cum, eta):
    """exp(-eta * cum) normalised; stable under large cum."""
    z = -eta * (np.asarray(cum) - np.min(cum))
    w = np.exp(z)
    return w / w.sum()


class _PendingMixin:
    """propose/update must strictly alternate."""

    _pending = None

    def _set_pending(self, value):
        if self._pending is not None:
            raise RuntimeError("propose called twice without an update")
        self._pending = value

    def _take_pending(self):
        if self._pending is None:
            raise RuntimeError("update called without a pending proposal")
        out = self._pending
        self._pending = None
        return out

    @property
    def pending_distribution(self):
        """Distribution the pending proposal was drawn from."""
        if self._pending is None:
            raise RuntimeError("no pending proposal")
        return self._pending[0]

    @property
    def pending_decision(self):
        """Decision index of the pending proposal (policy index for the
        contextual learner, the proposed action otherwise)."""
        if self._pending is None:
            raise RuntimeError("no pending proposal")
        return self._pending[1]


class Exp2(_PendingMixin):
    """Exponential weights over a finite action set in R^d with a
    leverage-capped exploration mixture and least-squares loss estimates."""

    def __init__(self, actions, design_eps=0.1):
        self.actions = np.asarray(actions, dtype=float)
        if self.actions.ndim != 2 or self.actions.shape[0] < 1:
            raise ValueError("need a nonempty (num_actions, d) matrix")
        self.n, self.d = self.actions.shape
        self.design = john_exploration(self.actions, eps=design_eps)
        self.log_n = math.log(max(self.n, 2))
        self.cum = np.zeros(self.n)
        self.sum_inv_q = 0.0
        self.min_q = math.inf
        c = self.d * self.log_n
        self.meta = BaseLearnerMeta(c0=0.0, c1=49.0 * c, c2=2.0 * c, kind=IW_HALF)

    def _eta(self):
        return min(
            math.sqrt(self.log_n / (self.d * self.sum_inv_q)),
            self.min_q / (2.0 * self.d),
        )

    def propose(self, q, rng):
        _check_q(q)
        self.sum_inv_q += 1.0 / q
        self.min_q = min(self.min_q, q)
        eta = self._eta()
        P = _softmax_weights(self.cum, eta)
        mix = self.d * eta / q
        assert mix <= 0.5 + 1e-12, "exploration mixture exceeded 1/2"
        p = (1.0 - mix) * P + mix * self.design.weights
        a = sample(p, rng)
        self._set_pending((p, a, q))
        return a

    def estimate(self, p, action, loss_value, q, upd):
        """(upd/q) * a^T M(p)^{-1} a_t * loss, per action, as a vector."""
        if not upd:
            return np.zeros(self.n)
        A = self.actions
        M = A.T @ (np.asarray(p)[:, None] * A)
        ridge = 1e-12 * np.trace(M) / self.d
        z = np.linalg.solve(M + ridge * np.eye(self.d), A[action])
        return (A @ z) * (loss_value / q)

    def update(self, loss_row, upd):
        p, a, q = self._take_pending()
        if upd:
            self.cum += self.estimate(p, a, float(loss_row[a]), q, True)


class Exp4(_PendingMixin):
    """Exponential weights over an explicit policy table (context -> arm)."""

    def __init__(self, policies, num_actions):
        self.policies = np.asarray(policies, dtype=int)
        if self.policies.ndim != 2 or self.policies.shape[0] < 1:
            raise ValueError("need a (num_policies, num_contexts) table")
        if np.any(self.policies < 0) or np.any(self.policies >= num_actions):
            raise ValueError("policy table entries must be valid arm indices")
        self.num_actions = int(num_actions)
        self.m, self.num_contexts = self.policies.shape
        self.log_m = math.log(max(self.m, 2))
        self.cum = np.zeros(self.m)
        self.sum_inv_q = 0.0
        self.meta = BaseLearnerMeta(
            c0=0.0, c1=4.0 * num_actions * self.log_m, c2=0.0, kind=IW_HALF
        )

    def arm_probs(self, P, context):
        p = np.zeros(self.num_actions)
        np.add.at(p, self.policies[:, context], P)
        return p

    def propose(self, q, rng, context=None):
        if context is None:
            raise ValueError("contextual learner needs a context")
        context = int(context)
        if not (0 <= context < self.num_contexts):
            raise ValueError(f"context {context} outside the policy table")
        _check_q(q)
        self.sum_inv_q += 1.0 / q
        eta = math.sqrt(self.log_m / (self.num_actions * self.sum_inv_q))
        P = _softmax_weights(self.cum, eta)
        pi = sample(P, rng)
        arm = int(self.policies[pi, context])
        self._set_pending((P, pi, arm, q, context))
        return arm

    def estimate(self, arm_probs, action, loss_value, q, upd):
        """Per-arm estimate upd * I[a=a_t] * loss / (q * p_t(a_t))."""
        est = np.zeros(self.num_actions)
        if upd:
            est[action] = loss_value / (q * arm_probs[action])
        return est

    def update(self, loss_row, upd):
        P, pi, arm, q, context = self._take_pending()
        if upd:
            probs = self.arm_probs(P, context)
            est = self.estimate(probs, arm, float(loss_row[arm]), q, True)
            self.cum += est[self.policies[:, context]]


def _loss_shift(loss_row, loss_range):
    lo, hi = loss_range
    row = np.asarray(loss_row, dtype=float)
    if np.any(row < lo - 1e-9) or np.any(row > hi + 1e-9):
        raise ValueError(f"losses outside the declared range [{lo}, {hi}]")
    if (lo, hi) == (0.0, 1.0):
        return row
    return (row - lo) / (hi - lo)


class TsallisInfGraph(_PendingMixin):
    """Tsallis-entropy FTRL for strongly observable feedback graphs.

    Losses of all in-neighborhoods containing the played arm are
    observed.  Loopless arms with probability above 1/2 are handled by
    estimating the complement loss (keeps estimates one-sided so the
    stability argument applies; the additive indicator sits outside the
    update flag, which keeps the estimate unbiased for every q).
    """

    def __init__(self, graph: FeedbackGraph, loss_range=(0.0, 1.0)):
        label, _ = classify(graph)
        if label != "strong":
            raise ValueError(f"graph must be strongly observable, got {label}")
        self.graph = graph
        self.k = graph.n
        self.loss_range = (float(loss_range[0]), float(loss_range[1]))
        self.log_k = math.log(max(self.k, 2))
        alpha = independence_number(graph)
        alpha_weak = weak_independence_number(graph)
        self.graph_term = min(alpha_weak, alpha * self.log_k)
        self.beta = 1.0 - 1.0 / self.log_k if self.k >= 3 else 0.5
        self.reg = Tsallis(self.beta)
        self.neighbors = [np.array(graph.in_neighbors(i)) for i in range(self.k)]
        self.loopless = np.array([not graph.self_loop(i) for i in range(self.k)])
        self.cum = np.zeros(self.k)
        self.sum_term = 0.0
        self._dual = None
        self.meta = BaseLearnerMeta(
            c0=0.0, c1=(1.0 + self.graph_term) * self.log_k, c2=0.0, kind=IW_HALF
        )

    def propose(self, q, rng):
        _check_q(q)
        self.sum_term += (1.0 + self.graph_term) / q
        eta = math.sqrt(self.log_k / self.sum_term)
        p, self._dual = ftrl_argmin(
            self.cum, self.reg, scale=eta, warm=self._dual, return_dual=True
        )
        shifted = self.loopless & (p > 0.5)
        assert shifted.sum() <= 1, "more than one arm above 1/2 cannot happen"
        a = sample(p, rng)
        self._set_pending((p, a, q, shifted))
        return a

    def estimate(self, p, action, loss_row, q, upd, shifted=None):
        if shifted is None:
            shifted = self.loopless & (np.asarray(p) > 0.5)
        row = _loss_shift(loss_row, self.loss_range)
        est = np.zeros(self.k)
        for i in range(self.k):
            nbrs = self.neighbors[i]
            base = 1.0 if shifted[i] else 0.0
            if upd and action in nbrs:
                obs_prob = float(np.sum(np.asarray(p)[nbrs]))
                est[i] = (row[i] - base) / (q * obs_prob) + base
            else:
                est[i] = base
        return est

    def update(self, loss_row, upd):
        p, a, q, shifted = self._take_pending()
        est = self.estimate(p, a, loss_row, q, upd, shifted)
        # positivity needed by the stability argument: est + c_t >= 0 with
        # c_t cancelling the (possibly negative) shifted coordinate
        c_t = 0.0
        idx = np.nonzero(shifted)[0]
        if idx.size == 1:
            c_t = max(0.0, 1.0 - float(est[idx[0]]))
        assert np.all(est + c_t >= -1e-9), "estimate broke the positivity bound"
        self.cum += est


class WeakExp3(_PendingMixin):
    """Exponential weights plus forced exploration of a dominating set,
    for feedback graphs that are merely observable."""

    def __init__(self, graph: FeedbackGraph, dominating=None, loss_range=(0.0, 1.0)):
        label, _ = classify(graph)
        if label == "unobservable":
            raise ValueError("graph must be observable")
        self.graph = graph
        self.k = graph.n
        self.loss_range = (float(loss_range[0]), float(loss_range[1]))
        self.log_k = math.log(max(self.k, 2))
        self.dominating = list(dominating) if dominating is not None else dominating_set(graph)
        covered = set()
        for d in self.dominating:
            covered |= set(graph.out_neighbors(d))
        if covered != set(range(self.k)):
            raise ValueError("supplied set does not dominate the graph")
        self.delta = len(self.dominating)
        self.neighbors = [np.array(graph.in_neighbors(i)) for i in range(self.k)]
        self.cum = np.zeros(self.k)
        self.sum_inv_sqrt_q = 0.0
        self.min_q = math.inf
        self.clamp_events = 0
        c = self.delta * self.log_k
        self.meta = BaseLearnerMeta(c0=0.0, c1=216.0 * c, c2=4.0 * c, kind=IW_TWO_THIRDS)

    def _eta(self):
        lead = (math.sqrt(self.delta) * self.sum_inv_sqrt_q / self.log_k) ** (2.0 / 3.0)
        return 1.0 / (lead + 4.0 * self.delta / self.min_q)

    def propose(self, q, rng):
        _check_q(q)
        self.sum_inv_sqrt_q += 1.0 / math.sqrt(q)
        self.min_q = min(self.min_q, q)
        eta = self._eta()
        P = _softmax_weights(self.cum, eta)
        gamma = math.sqrt(eta * self.delta / q)
        if gamma > 1.0:
            gamma = 1.0
            self.clamp_events += 1
        p = (1.0 - gamma) * P
        p[self.dominating] += gamma / self.delta
        a = sample(p, rng)
        self._set_pending((p, a, q))
        return a

    def estimate(self, p, action, loss_row, q, upd):
        row = _loss_shift(loss_row, self.loss_range)
        est = np.zeros(self.k)
        if upd:
            for i in range(self.k):
                nbrs = self.neighbors[i]
                if action in nbrs:
                    est[i] = row[i] / (q * float(np.sum(np.asarray(p)[nbrs])))
        return est

    def update(self, loss_row, upd):
        p, a, q = self._take_pending()
        self.cum += self.estimate(p, a, loss_row, q, upd)


class LogBarrierMab(_PendingMixin):
    """Log-barrier FTRL bandit learner for the candidate-aware pathways.

    The wrapper only knows the update probability after seeing the
    proposal (it depends on whether the proposal equals the candidate),
    so q arrives at update time and the learning rate uses the history
    up to the previous round.  The rate stays at its 1/8 cap while the
    observed q's are 1 (the sum tracks the excess 1/q - 1, not 1/q), so
    fully observed stretches behave like a plain log-barrier bandit.
    """

    def __init__(self, num_actions, horizon):
        if num_actions < 2:
            raise ValueError("need at least two actions")
        if horizon < 1:
            raise ValueError("horizon must be positive")
        self.k = int(num_actions)
        self.horizon = int(horizon)
        self.log_t = math.log(max(self.horizon, 2))
        self.floor = 1.0 / (self.k * float(self.horizon) ** 3)
        self.reg = LogBarrier()
        self.cum = np.zeros(self.k)
        self.excess = 0.0          # sum of (1/q - 1) over updated rounds
        self._dual = None
        self.meta = BaseLearnerMeta(
            c0=0.0, c1=self.k * self.log_t, c2=float(self.k), kind=STRONG_IW
        )
        self.meta_dd = BaseLearnerMeta(
            c0=0.0, c1=self.k * self.log_t, c2=float(self.k), kind=DD_IW
        )

    def _eta(self):
        return min(0.125, math.sqrt(self.k * self.log_t / max(self.k, self.excess)))

    def propose(self, rng):
        eta = self._eta()
        p, self._dual = ftrl_argmin(
            self.cum, self.reg, scale=eta, floor=self.floor,
            warm=self._dual, return_dual=True,
        )
        a = sample(p, rng)
        self._set_pending((p, a))
        return a

    def estimate(self, p, action, loss_value, q, upd):
        est = np.zeros(self.k)
        if upd:
            est[action] = loss_value / (q * p[action])
        return est

    def update(self, loss_row, q, upd):
        _check_q(q)
        p, a = self._take_pending()
        self.excess += 1.0 / q - 1.0
        if upd:
            self.cum += self.estimate(p, a, float(loss_row[a]), q, True)
