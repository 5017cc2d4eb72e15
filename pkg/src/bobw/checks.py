"""Runtime invariant audits behind the ``check`` CLI/service command.

Four audit families, each returning a ``CheckResult`` whose failure
carries a concrete counterexample dictionary:

- ``unbiasedness``: exact enumeration of every sampling outcome
  (action draw x update coin) for each loss estimator; the expected
  estimate must equal the target losses componentwise.
- ``stability``: randomized certification of the closed-form per-step
  FTRL stability inequalities for the negentropy (signed and
  nonnegative losses), Tsallis, and log-barrier regularizers.
- ``feasibility``: live runs of all four two-arm wrapper variants,
  confirming the bonus cap conditions hold every round (a violation
  raises inside the wrapper and is reported here).
- ``graphs``: exhaustive small-graph plus randomized comparison of the
  exact independence numbers against an independent brute force,
  dominating-set coverage, and surrogate-loss identities.

The audits are intentionally re-runnable in production builds: they use
only public package APIs plus a seeded generator, so a failure report
is reproducible from its seed.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .corral import (
    CorralDd,
    CorralFeasibilityError,
    CorralHalf,
    CorralStrong,
    CorralTwoThirds,
)
from .graphs import (
    FeedbackGraph,
    classify,
    dominating_set,
    independence_number,
    surrogate_loss,
    weak_independence_number,
)
from .learners import Exp2, Exp4, LogBarrierMab, TsallisInfGraph, WeakExp3
from .simplex import LogBarrier, NegEntropy, Tsallis, stability_bound

__all__ = ["CheckResult", "check_invariants", "CHECKS",
           "check_unbiasedness", "check_stability", "check_feasibility",
           "check_graphs", "expected_estimate"]


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    counterexample: Optional[dict] = None

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        out = f"[{status}] {self.name}: {self.detail}"
        if self.counterexample:
            out += f"\n       counterexample: {self.counterexample}"
        return out


# ------------------------------------------------------------ unbiasedness


def expected_estimate(estimate, p, q, dim):
    """Exact E[estimate] over action ~ p and an update coin of bias q.

    ``estimate(action, upd)`` must return a length-``dim`` vector; the
    expectation enumerates every (action, coin) outcome.
    """
    out = np.zeros(dim)
    for a, pa in enumerate(np.asarray(p, dtype=float)):
        if pa == 0.0:
            continue
        out += pa * (q * np.asarray(estimate(a, True), dtype=float)
                     + (1.0 - q) * np.asarray(estimate(a, False), dtype=float))
    return out


def _unbiasedness_cases(rng):
    """(label, p, q, estimate-closure, target, dim) tuples for every learner."""
    cases = []

    # linear exponential weights: unbiased for losses linear in the action
    actions = np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]])
    exp2 = Exp2(actions)
    for theta, p, q in [
        (np.array([0.6, 0.3]), np.array([0.5, 0.3, 0.2]), 0.4),
        (np.array([0.2, 0.9]), np.array([0.25, 0.25, 0.5]), 1.0),
        (rng.uniform(0.1, 0.9, 2), rng.dirichlet(np.ones(3)), 0.7),
    ]:
        losses = actions @ theta

        def est2(a, upd, _p=p, _q=q, _l=losses):
            return exp2.estimate(_p, a, float(_l[a]), _q, upd)

        cases.append(("exp2", p, q, est2, losses, 3))

    # policy exponential weights: two arms, four policies, two contexts
    policies = np.array([[0, 1], [1, 0], [1, 1], [0, 0]])
    exp4 = Exp4(policies, 2)
    for ctx, P, q, row in [
        (0, np.array([0.4, 0.3, 0.2, 0.1]), 0.5, np.array([0.8, 0.1])),
        (1, np.array([0.1, 0.2, 0.3, 0.4]), 1.0, np.array([0.35, 0.62])),
        (1, rng.dirichlet(np.ones(4)), 0.3, rng.uniform(0, 1, 2)),
    ]:
        probs = exp4.arm_probs(P, ctx)
        arm_of = policies[:, ctx]

        def est4(pi, upd, _probs=probs, _arms=arm_of, _q=q, _row=row):
            a = int(_arms[pi])
            return exp4.estimate(_probs, a, float(_row[a]), _q, upd)

        cases.append(("exp4", P, q, est4, row, 2))

    # graph learner with a loopless high-probability arm (complement path)
    g3 = FeedbackGraph.from_edges(3, [(0, 0), (1, 1), (0, 1), (1, 0),
                                      (0, 2), (1, 2), (2, 0), (2, 1)])
    ts3 = TsallisInfGraph(g3)
    g4 = FeedbackGraph.complete_with_self_loops(4)
    ts4 = TsallisInfGraph(g4)
    ts_cases = [
        (ts3, np.array([0.2, 0.15, 0.65]), 0.5, np.array([0.9, 0.2, 0.4])),
        (ts3, np.array([0.4, 0.35, 0.25]), 0.8, np.array([0.1, 0.6, 0.5])),
        (ts4, rng.dirichlet(np.ones(4)), 0.35, rng.uniform(0, 1, 4)),
    ]
    for learner, p, q, row in ts_cases:
        shifted = learner.loopless & (p > 0.5)

        def estt(a, upd, _l=learner, _p=p, _q=q, _row=row, _s=shifted):
            return _l.estimate(_p, a, _row, _q, upd, _s)

        cases.append(("tsallis", p, q, estt, row, learner.k))

    # weakly observable graph learner
    gw = FeedbackGraph.from_edges(4, [(0, 0), (1, 1), (0, 1), (1, 0),
                                      (0, 2), (1, 2), (0, 3), (1, 3)])
    weak = WeakExp3(gw)
    for p, q, row in [
        (np.array([0.4, 0.3, 0.2, 0.1]), 0.6, np.array([0.3, 0.9, 0.5, 0.1])),
        (rng.dirichlet(np.ones(4)), 1.0, rng.uniform(0, 1, 4)),
    ]:
        def estw(a, upd, _p=p, _q=q, _row=row):
            return weak.estimate(_p, a, _row, _q, upd)

        cases.append(("weakexp3", p, q, estw, row, 4))

    # plain importance-weighted bandit estimator
    lb = LogBarrierMab(3, horizon=64)
    for p, q, row in [
        (np.array([0.5, 0.25, 0.25]), 0.45, np.array([0.2, 0.8, 0.5])),
        (rng.dirichlet(np.ones(3)), 0.9, rng.uniform(0, 1, 3)),
    ]:
        def estl(a, upd, _p=p, _q=q, _row=row):
            return lb.estimate(_p, a, float(_row[a]), _q, upd)

        cases.append(("logbarrier", p, q, estl, row, 3))

    return cases


def check_unbiasedness(tol=1e-10, tweak: Optional[Callable] = None, seed=0):
    """E[estimate] == target under exact enumeration, per estimator.

    ``tweak`` post-processes every estimate vector; it exists so the
    negative control (e.g. a sign flip) demonstrably fails the audit.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for label, p, q, est, target, dim in _unbiasedness_cases(rng):
        wrapped = est if tweak is None else (lambda a, u, _e=est: tweak(_e(a, u)))
        got = expected_estimate(wrapped, p, q, dim)
        err = float(np.max(np.abs(got - np.asarray(target, dtype=float))))
        worst = max(worst, err)
        if err > tol:
            return CheckResult(
                "unbiasedness", False,
                f"{label}: max deviation {err:.3e} exceeds {tol:g}",
                {"learner": label, "p": np.asarray(p).tolist(), "q": q,
                 "expected": got.tolist(),
                 "target": np.asarray(target, dtype=float).tolist()})
    return CheckResult("unbiasedness", True,
                       f"all estimators exact under enumeration "
                       f"(worst deviation {worst:.2e})")


# --------------------------------------------------------------- stability


def _stability_instance(family, rng):
    k = int(rng.integers(2, 7))
    p = rng.dirichlet(np.ones(k) * rng.uniform(0.5, 3.0))
    p = np.maximum(p, 1e-9)
    p /= p.sum()
    scale = math.exp(rng.uniform(-3.0, 1.0))
    if family == "negentropy-nonneg":
        reg = NegEntropy()
        loss = rng.uniform(0.0, 4.0, k)
    elif family == "negentropy-signed":
        reg = NegEntropy()
        loss = rng.uniform(-0.99, 3.0, k) / scale
    elif family == "tsallis":
        reg = Tsallis(rng.uniform(0.3, 0.8))
        loss = rng.uniform(0.0, 4.0, k)
        if rng.random() < 0.3:  # importance-weighted style spikes
            loss[rng.integers(k)] = 1.0 / rng.uniform(0.05, 1.0)
    elif family == "logbarrier":
        reg = LogBarrier()
        loss = rng.uniform(-0.49, 3.0, k) / (scale * p)
    else:
        raise ValueError(f"unknown stability family {family!r}")
    return reg, p, loss, scale


STABILITY_FAMILIES = ("negentropy-nonneg", "negentropy-signed",
                      "tsallis", "logbarrier")


def check_stability(trials=2000, seed=0, tol=1e-9):
    """lhs <= rhs + tol on random precondition-satisfying instances."""
    rng = np.random.default_rng(seed)
    worst = -math.inf
    for family in STABILITY_FAMILIES:
        for _ in range(trials):
            reg, p, loss, scale = _stability_instance(family, rng)
            lhs, rhs = stability_bound(reg, p, loss, scale)
            worst = max(worst, lhs - rhs)
            if lhs > rhs + tol:
                return CheckResult(
                    "stability", False,
                    f"{family}: lhs - rhs = {lhs - rhs:.3e} exceeds {tol:g}",
                    {"family": family, "regularizer": repr(reg),
                     "p": p.tolist(), "loss": loss.tolist(), "scale": scale,
                     "lhs": lhs, "rhs": rhs})
    return CheckResult(
        "stability", True,
        f"{len(STABILITY_FAMILIES)}x{trials} instances certified "
        f"(worst lhs-rhs {worst:.2e})")


# ------------------------------------------------------------- feasibility


def _feasibility_stacks(horizon):
    """One live stack per wrapper variant, on small instances."""
    g_strong = FeedbackGraph.complete_with_self_loops(4)
    sub_s, _ = g_strong.without(0)
    g_weak = FeedbackGraph.from_edges(4, [(0, 0), (1, 1), (0, 1), (1, 0),
                                          (0, 2), (1, 2), (0, 3), (1, 3)])
    sub_w, _ = g_weak.without(2)
    return [
        ("half", 4, CorralHalf(0, TsallisInfGraph(sub_s),
                               np.array([1, 2, 3]), graph=g_strong)),
        ("two-thirds", 4, CorralTwoThirds(2, WeakExp3(sub_w),
                                          np.array([0, 1, 3]), g_weak)),
        ("dd", 3, CorralDd(0, LogBarrierMab(2, horizon),
                           np.array([1, 2]), horizon=horizon)),
        ("strong", 3, CorralStrong(0, LogBarrierMab(3, horizon))),
    ]


def check_feasibility(rounds=300, seed=0):
    """All four wrappers keep their bonus caps for every live round."""
    rng = np.random.default_rng(seed)
    details = []
    for name, k, wrapper in _feasibility_stacks(rounds):
        means = rng.uniform(0.2, 0.8, k)
        for t in range(1, rounds + 1):
            losses = (rng.random(k) < means).astype(float)
            try:
                wrapper.choose(rng)
                wrapper.observe(losses)
            except CorralFeasibilityError as exc:
                return CheckResult(
                    "feasibility", False,
                    f"{name}: bonus cap violated at round {t}",
                    {"variant": name, "round": t, "error": str(exc)})
        details.append(f"{name}: {wrapper.cap_checks} checks, "
                       f"max cap ratio {wrapper.max_cap:.3f}")
    return CheckResult("feasibility", True, "; ".join(details))


# ------------------------------------------------------------------ graphs


def _brute_independence(g: FeedbackGraph, require_both: bool):
    """Independent reference: direct subset enumeration."""
    best = 0
    edges = g.edges
    for mask in range(1 << g.n):
        nodes = [i for i in range(g.n) if (mask >> i) & 1]
        ok = True
        for a, b in itertools.combinations(nodes, 2):
            fwd, bwd = (a, b) in edges, (b, a) in edges
            if (fwd and bwd) if require_both else (fwd or bwd):
                ok = False
                break
        if ok:
            best = max(best, len(nodes))
    return best


def _all_digraphs(n):
    pairs = [(i, j) for i in range(n) for j in range(n)]
    for mask in range(1 << len(pairs)):
        yield FeedbackGraph.from_edges(
            n, [pairs[b] for b in range(len(pairs)) if (mask >> b) & 1])


def _symmetric_digraphs(n):
    """All graphs with symmetric off-diagonal edges and free self-loops."""
    off = [(i, j) for i in range(n) for j in range(i + 1, n)]
    for mask in range(1 << len(off)):
        sym = []
        for b, (i, j) in enumerate(off):
            if (mask >> b) & 1:
                sym += [(i, j), (j, i)]
        for loops in range(1 << n):
            yield FeedbackGraph.from_edges(
                n, sym + [(i, i) for i in range(n) if (loops >> i) & 1])


def _audit_graph(g: FeedbackGraph, rng):
    """Raises AssertionError with a payload dict on any oracle mismatch."""
    alpha = independence_number(g)
    alpha_weak = weak_independence_number(g)
    brute = _brute_independence(g, require_both=False)
    brute_weak = _brute_independence(g, require_both=True)
    payload = {"n": g.n, "edges": sorted(g.edges)}
    if alpha != brute:
        raise AssertionError(("independence mismatch",
                              {**payload, "module": alpha, "brute": brute}))
    if alpha_weak != brute_weak:
        raise AssertionError(("weak independence mismatch",
                              {**payload, "module": alpha_weak,
                               "brute": brute_weak}))
    if alpha_weak < alpha:
        raise AssertionError(("weak independence below independence",
                              {**payload, "alpha": alpha,
                               "alpha_weak": alpha_weak}))
    label, _ = classify(g)
    if label != "unobservable":
        dom = dominating_set(g)
        in_masks = g.in_masks()
        dom_mask = 0
        for d in dom:
            dom_mask |= 1 << d
        for j in range(g.n):
            if not in_masks[j] & dom_mask:
                raise AssertionError(("dominating set misses a node",
                                      {**payload, "set": dom, "node": j}))
    if label != "unobservable" and g.n >= 2:
        cand = int(rng.integers(g.n))
        others = [j for j in range(g.n) if j != cand]
        p = np.zeros(g.n)  # base distribution lives on the non-candidates
        p[others] = rng.dirichlet(np.ones(len(others)))
        losses = rng.uniform(0.0, 1.0, g.n)
        tilde = surrogate_loss(g, cand, p, losses)
        lhs = sum(p[j] * tilde[j] for j in others) - tilde[cand]
        rhs = sum(p[j] * losses[j] for j in others) - losses[cand]
        if abs(lhs - rhs) > 1e-12:
            raise AssertionError(("surrogate mixture identity broken",
                                  {**payload, "candidate": cand,
                                   "lhs": lhs, "rhs": rhs}))
        loops = [j for j in others if g.self_loop(j)]
        for a, b in itertools.combinations(loops, 2):
            if abs((tilde[a] - tilde[b]) - (losses[a] - losses[b])) > 1e-12:
                raise AssertionError(("surrogate pairwise difference broken",
                                      {**payload, "pair": (a, b)}))
        if all(g.self_loop(j) for j in range(g.n)):
            if float(np.max(np.abs(tilde - losses))) > 1e-12:
                raise AssertionError(("surrogate not identity on self-loop graph",
                                      payload))


def check_graphs(exhaustive_n=3, symmetric_n=None, random_trials=40,
                 random_max_n=10, seed=0):
    """Compare graph oracles against brute force over graph families."""
    rng = np.random.default_rng(seed)
    count = 0
    try:
        for n in range(1, exhaustive_n + 1):
            for g in _all_digraphs(n):
                _audit_graph(g, rng)
                count += 1
        if symmetric_n:
            for g in _symmetric_digraphs(symmetric_n):
                _audit_graph(g, rng)
                count += 1
        for _ in range(random_trials):
            n = int(rng.integers(2, random_max_n + 1))
            density = rng.uniform(0.15, 0.9)
            edges = [(i, j) for i in range(n) for j in range(n)
                     if rng.random() < density]
            _audit_graph(FeedbackGraph.from_edges(n, edges), rng)
            count += 1
    except AssertionError as exc:
        what, payload = exc.args[0]
        return CheckResult("graphs", False, what, payload)
    return CheckResult("graphs", True,
                       f"{count} graphs audited against brute force")


# ---------------------------------------------------------------- registry


CHECKS = {
    "unbiasedness": check_unbiasedness,
    "stability": check_stability,
    "feasibility": check_feasibility,
    "graphs": check_graphs,
}


def check_invariants(scope=None, **kwargs):
    """Run one named audit or all of them; returns a list of CheckResult."""
    if scope is None:
        names = list(CHECKS)
    elif scope in CHECKS:
        names = [scope]
    else:
        raise ValueError(f"unknown check scope {scope!r}; "
                         f"available: {sorted(CHECKS)}")
    results = []
    for name in names:
        start = time.perf_counter()
        res = CHECKS[name](**kwargs) if kwargs else CHECKS[name]()
        res.detail += f" [{time.perf_counter() - start:.2f}s]"
        results.append(res)
    return results
