"""Doubling-epoch candidate reduction and the self-bounding envelope.

``EpochRunner`` drives a two-arm wrapper stack in epochs.  Each epoch k
tracks a candidate action and a fresh wrapper built by a user-supplied
factory; after any round, if the epoch has lasted at least twice as
long as the previous one and some non-candidate action accounts for at
least half of the epoch's decisions, the epoch closes and that action
becomes the next candidate.  A virtual epoch boundary at
-max(c2, 1)*ln(T) keeps the first epoch from switching on a handful of
samples.

Epoch k draws all of its randomness from the child stream
SeedSequence([seed, 1, k]), so any epoch's segment can be replayed
standalone from (candidate, seed, k) alone; the initial candidate uses
the separate stream SeedSequence([seed, 2]).

``gsb_envelope`` evaluates the self-bounding regret envelope
min{c0^(1-a) t^a, (c1 ln t)^(1-a) counts^a} + c2 ln t used by the
harness as a diagnostic ceiling for empirical pseudo-regret.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["EpochRunner", "SwitchRecord", "candidate_init", "gsb_envelope"]


def candidate_init(num_actions, rng):
    """Uniform initial candidate, reproducible from the generator state."""
    if num_actions < 1:
        raise ValueError("need at least one action")
    return int(rng.integers(num_actions))


def gsb_envelope(counts, c0, c1, c2, alpha, t):
    """Self-bounding envelope at time t for per-comparator play counts.

    ``counts`` is sum_t (1 - p_t(u)) for a comparator u (scalar or
    array); returns min{c0^(1-alpha) t^alpha, (c1 ln t)^(1-alpha)
    counts^alpha} + c2 ln t with matching shape.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    if t < 1:
        raise ValueError("t must be >= 1")
    counts = np.asarray(counts, dtype=float)
    if np.any(counts < 0):
        raise ValueError("counts must be nonnegative")
    log_t = math.log(t)
    adversarial = c0 ** (1.0 - alpha) * t**alpha
    self_bounding = (c1 * log_t) ** (1.0 - alpha) * counts**alpha
    out = np.minimum(adversarial, self_bounding) + c2 * log_t
    return float(out) if out.ndim == 0 else out


@dataclass
class SwitchRecord:
    """One completed epoch: its index, closing round, and the handoff."""

    epoch: int
    boundary: int
    candidate: int
    trigger: int
    counts: np.ndarray = field(repr=False)


class EpochRunner:
    """Two-phase driver (choose/observe) over doubling candidate epochs.

    ``factory(candidate)`` must return a fresh wrapper exposing
    ``choose(rng, ...)``, ``observe(loss_row)``, ``last_decision`` and
    ``c2``; decisions index into range(num_actions) (actions, or
    policies in the contextual case).
    """

    def __init__(self, num_actions, factory, horizon, seed=0):
        if num_actions < 1:
            raise ValueError("need at least one action")
        self.num_actions = int(num_actions)
        self.factory = factory
        self.horizon = int(horizon)
        self.seed = int(seed)
        self.t = 0
        self.k = 0
        self.switches = []
        first = candidate_init(
            self.num_actions,
            np.random.default_rng(np.random.SeedSequence([self.seed, 2])),
        )
        self._begin_epoch(first)
        self.start = 0
        # virtual boundary T_0 < 0: the first epoch must last at least
        # 2*max(c2,1)*ln(T) rounds before it may switch
        self.start_prev = -max(self.inner.c2, 1.0) * math.log(max(self.horizon, 2))

    def _begin_epoch(self, candidate):
        self.k += 1
        self.candidate = int(candidate)
        self.inner = self.factory(self.candidate)
        self._rng = np.random.default_rng(
            np.random.SeedSequence([self.seed, 1, self.k])
        )
        self.counts = np.zeros(self.num_actions, dtype=np.int64)

    def choose(self, context=None, predictions=None):
        if predictions is not None:
            return self.inner.choose(self._rng, context=context, predictions=predictions)
        return self.inner.choose(self._rng, context=context)

    def action_distribution(self):
        return self.inner.action_distribution()

    @property
    def last_decision(self):
        return self.inner.last_decision

    def _switch_trigger(self):
        length = self.t - self.start
        if length < 2.0 * (self.start - self.start_prev):
            return None
        for x in range(self.num_actions):  # ties: lowest index wins
            if x != self.candidate and self.counts[x] >= length / 2.0:
                return x
        return None

    def observe(self, loss_row):
        """Feed the round's losses through; returns True on an epoch switch."""
        self.inner.observe(loss_row)
        self.t += 1
        self.counts[self.inner.last_decision] += 1
        trigger = self._switch_trigger()
        if trigger is None:
            return False
        self.switches.append(
            SwitchRecord(self.k, self.t, self.candidate, trigger, self.counts.copy())
        )
        self.start_prev, self.start = self.start, self.t
        self._begin_epoch(trigger)
        return True
