"""Loss models for the simulator.

Every model realises a full loss path up front (``realize(horizon, seed)``),
which keeps runs deterministic per seed, makes replay trivially exact, and
keeps per-round cost at an array lookup.  A ``LossPath`` carries both the
realised losses and the exact per-round expected losses (used for
pseudo-regret), plus contexts for the contextual model.

Regimes:

- ``Adversarial``            scripted array, callable, or CSV text.
- ``StochasticBernoulli``    fixed means, Bernoulli draws.
- ``Corrupted``              Bernoulli base plus an additive corruption
                             schedule with total budget C (sum over rounds
                             of the max per-arm magnitude), clipped to [0,1].
- ``LinearStochastic``       fixed parameter vector; realised loss of an
                             action is its inner product plus bounded
                             uniform noise (no clipping, so means are exact).
- ``ContextualStochastic``   i.i.d. uniform contexts, per-context arm means.

Corruption schedules: ``front_loaded`` (corrupt from round one until the
budget runs out), ``periodic`` (every k-th round), ``targeted`` (same as
front_loaded but aimed at an explicit arm).  The default target is the
best arm, pushed upward, which is the adversarial direction.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "LossPath",
    "Adversarial",
    "StochasticBernoulli",
    "Corrupted",
    "CorruptionSchedule",
    "LinearStochastic",
    "ContextualStochastic",
    "adversarial_from_csv",
    "gap",
]


@dataclass
class LossPath:
    """A fully realised sequence: losses[t-1] is round t's loss vector."""

    losses: np.ndarray           # (T, K) realised losses
    means: np.ndarray            # (T, K) exact expected losses per round
    contexts: Optional[np.ndarray] = None  # (T,) ints for contextual models

    @property
    def horizon(self):
        return self.losses.shape[0]

    @property
    def num_actions(self):
        return self.losses.shape[1]

    def loss(self, t):
        """Loss vector of round t (1-indexed)."""
        return self.losses[t - 1]

    def mean(self, t):
        return self.means[t - 1]

    def best_fixed_action(self):
        """Arm minimising cumulative expected loss; ties break low."""
        return int(np.argmin(self.means.sum(axis=0)))


def _check_unit_range(arr, what):
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError(f"{what} must lie in [0, 1]")


@dataclass
class StochasticBernoulli:
    means: np.ndarray

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=float)
        if self.means.ndim != 1 or self.means.size < 2:
            raise ValueError("need a 1-D vector of >= 2 arm means")
        _check_unit_range(self.means, "Bernoulli means")

    @property
    def num_actions(self):
        return self.means.size

    def realize(self, horizon, seed):
        rng = np.random.default_rng(seed)
        draws = (rng.random((horizon, self.means.size)) < self.means).astype(float)
        means = np.broadcast_to(self.means, draws.shape).copy()
        return LossPath(draws, means)


@dataclass
class Adversarial:
    """Scripted losses: a (T0, K) array cycled/truncated to the horizon,
    or a callable t -> loss vector (t is 1-indexed)."""

    script: Optional[np.ndarray] = None
    fn: Optional[Callable[[int], np.ndarray]] = None
    num_actions: int = 0

    def __post_init__(self):
        if (self.script is None) == (self.fn is None):
            raise ValueError("provide exactly one of script or fn")
        if self.script is not None:
            self.script = np.asarray(self.script, dtype=float)
            if self.script.ndim != 2:
                raise ValueError("script must be a (rounds, arms) array")
            _check_unit_range(self.script, "scripted losses")
            self.num_actions = self.script.shape[1]
        elif self.num_actions < 2:
            raise ValueError("fn-based adversarial model needs num_actions >= 2")

    def realize(self, horizon, seed):
        if self.script is not None:
            reps = -(-horizon // self.script.shape[0])
            losses = np.tile(self.script, (reps, 1))[:horizon]
        else:
            losses = np.empty((horizon, self.num_actions))
            for t in range(1, horizon + 1):
                row = np.asarray(self.fn(t), dtype=float)
                if row.shape != (self.num_actions,):
                    raise ValueError(f"fn returned wrong shape at t={t}")
                losses[t - 1] = row
            _check_unit_range(losses, "scripted losses")
        return LossPath(losses, losses.copy())


@dataclass
class CorruptionSchedule:
    kind: str = "front_loaded"       # front_loaded | periodic | targeted
    budget: float = 0.0              # total C
    magnitude: float = 1.0           # per-round corruption size
    period: int = 1                  # for the periodic kind
    arm: Optional[int] = None        # for targeted; default = best arm

    def rounds_used(self, horizon):
        if self.budget <= 0 or self.magnitude <= 0:
            return []
        count = int(self.budget // self.magnitude)
        if self.kind in ("front_loaded", "targeted"):
            ts = range(1, min(count, horizon) + 1)
        elif self.kind == "periodic":
            if self.period < 1:
                raise ValueError("periodic schedule needs period >= 1")
            ts = list(range(self.period, horizon + 1, self.period))[:count]
        else:
            raise ValueError(f"unknown corruption kind {self.kind!r}")
        return list(ts)


@dataclass
class Corrupted:
    means: np.ndarray
    schedule: CorruptionSchedule = field(default_factory=CorruptionSchedule)

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=float)
        _check_unit_range(self.means, "Bernoulli means")
        if self.means.ndim != 1 or self.means.size < 2:
            raise ValueError("need a 1-D vector of >= 2 arm means")

    @property
    def num_actions(self):
        return self.means.size

    def corruption_matrix(self, horizon):
        """(T, K) additive corruption c_t; budget sum_t max_a |c_ta| <= C."""
        c = np.zeros((horizon, self.means.size))
        arm = self.schedule.arm
        if arm is None:
            arm = int(np.argmin(self.means))
        for t in self.schedule.rounds_used(horizon):
            c[t - 1, arm] = self.schedule.magnitude
        spent = np.abs(c).max(axis=1).sum()
        if spent > self.schedule.budget + 1e-9:
            raise AssertionError("corruption schedule exceeded its budget")
        return c

    def corruption_spent(self, horizon, up_to=None):
        c = self.corruption_matrix(horizon)
        upto = horizon if up_to is None else min(up_to, horizon)
        return float(np.abs(c[:upto]).max(axis=1).sum())

    def realize(self, horizon, seed):
        rng = np.random.default_rng(seed)
        bern = (rng.random((horizon, self.means.size)) < self.means).astype(float)
        c = self.corruption_matrix(horizon)
        losses = np.clip(bern + c, 0.0, 1.0)
        # exact mean of clip(Bernoulli(mu) + c): the draw is 0 w.p. (1-mu)
        mu = self.means
        means = (1.0 - mu) * np.clip(c, 0.0, 1.0) + mu * np.clip(1.0 + c, 0.0, 1.0)
        return LossPath(losses, means)


@dataclass
class LinearStochastic:
    """Realised loss of action a is <a, theta> + uniform(-noise, noise)."""

    actions: np.ndarray
    theta: np.ndarray
    noise: float = 0.1

    def __post_init__(self):
        self.actions = np.asarray(self.actions, dtype=float)
        self.theta = np.asarray(self.theta, dtype=float)
        if self.actions.ndim != 2 or self.actions.shape[0] < 2:
            raise ValueError("need a (num_actions, d) matrix with >= 2 actions")
        if self.theta.shape != (self.actions.shape[1],):
            raise ValueError("theta dimension mismatch")
        mu = self.actions @ self.theta
        if np.any(mu - self.noise < 0.0) or np.any(mu + self.noise > 1.0):
            raise ValueError(
                "mean losses +/- noise must stay inside [0,1]; shrink noise"
            )

    @property
    def num_actions(self):
        return self.actions.shape[0]

    def realize(self, horizon, seed):
        rng = np.random.default_rng(seed)
        mu = self.actions @ self.theta
        noise = rng.uniform(-self.noise, self.noise, size=(horizon, mu.size))
        losses = mu + noise
        means = np.broadcast_to(mu, losses.shape).copy()
        return LossPath(losses, means)


@dataclass
class ContextualStochastic:
    """Per-context Bernoulli arm means; contexts i.i.d. uniform."""

    ctx_means: np.ndarray

    def __post_init__(self):
        self.ctx_means = np.asarray(self.ctx_means, dtype=float)
        if self.ctx_means.ndim != 2:
            raise ValueError("ctx_means must be (num_contexts, num_arms)")
        _check_unit_range(self.ctx_means, "contextual means")

    @property
    def num_actions(self):
        return self.ctx_means.shape[1]

    @property
    def num_contexts(self):
        return self.ctx_means.shape[0]

    def realize(self, horizon, seed):
        rng = np.random.default_rng(seed)
        ctx = rng.integers(0, self.num_contexts, size=horizon)
        means = self.ctx_means[ctx]
        losses = (rng.random(means.shape) < means).astype(float)
        return LossPath(losses, means.copy(), contexts=ctx)


def gap(model):
    """(Delta, best_arm) from the uncorrupted means; unique best required."""
    if isinstance(model, (StochasticBernoulli, Corrupted)):
        mu = model.means
    elif isinstance(model, LinearStochastic):
        mu = model.actions @ model.theta
    else:
        raise TypeError(f"gap undefined for {type(model).__name__}")
    order = np.sort(mu)
    delta = float(order[1] - order[0])
    if delta <= 0.0:
        raise ValueError("tied best arms: the mean gap must be positive")
    return delta, int(np.argmin(mu))


def adversarial_from_csv(source):
    """Load a scripted adversarial sequence from CSV (rows = rounds).

    ``source`` is a path or raw CSV text.  A non-numeric first row is
    treated as a header and skipped.
    """
    text = source
    if "\n" not in str(source) and "," not in str(source):
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    lines = [ln.strip() for ln in str(text).splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty adversarial CSV")
    try:
        [float(x) for x in lines[0].split(",")]
    except ValueError:
        lines = lines[1:]
        if not lines:
            raise ValueError("adversarial CSV has a header but no rows")
    script = np.loadtxt(io.StringIO("\n".join(lines)), delimiter=",", ndmin=2)
    return Adversarial(script=script)
