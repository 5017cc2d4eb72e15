"""Experiment harness: configs, stack wiring, regret accounting, fits.

An ``ExperimentConfig`` names a setting (which environment family and
action structure), a regime (stochastic / adversarial / corrupted), a
base learner, a wrapper variant, and a stack depth (base-only,
base+corral with a fixed candidate, or the full epoch reduction).
``run_experiment`` realises one loss path per seed, drives the stack,
and records cumulative pseudo-regret against the best fixed decision at
log-spaced checkpoints, writing one CSV row per (seed, checkpoint).

Pseudo-regret always uses the model's exact per-round means, never the
realised noise; the comparator is the decision minimising total
expected loss over the whole horizon.  Decisions are actions except in
the contextual setting, where they are policy indices.

Seed layout: the loss path draws from SeedSequence([seed, 0]); epoch k
of the reduction draws from SeedSequence([seed, 1, k]) (the fixed
candidate stacks use k=1); the initial candidate from
SeedSequence([seed, 2]).  Re-running a config therefore reproduces its
CSV byte for byte.  BOBW_THREADS > 1 dispatches seeds to a thread pool
(each run owns all of its state); unset or 1 runs serially.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .corral import CorralDd, CorralHalf, CorralStrong, CorralTwoThirds
from .environments import (
    Adversarial,
    ContextualStochastic,
    Corrupted,
    CorruptionSchedule,
    LinearStochastic,
    StochasticBernoulli,
    adversarial_from_csv,
    gap,
)
from .epochs import EpochRunner, candidate_init
from .graphs import FeedbackGraph, load_edge_list, parse_edge_list
from .learners import Exp2, Exp4, LogBarrierMab, TsallisInfGraph, WeakExp3

__all__ = [
    "ExperimentConfig",
    "RegretRecord",
    "RunResult",
    "SlopeFit",
    "Verdict",
    "CSV_HEADER",
    "config_from_json",
    "config_to_json",
    "checkpoints",
    "pseudo_regret",
    "decision_mean_matrix",
    "slope_fit",
    "stochastic_verdict",
    "run_experiment",
    "run_sweep",
    "fit_csv",
]

SETTINGS = ("mab", "linear", "contextual", "graph-strong", "graph-weak")
STACKS = ("base-only", "base+corral", "full")
REGIMES = ("stochastic", "adversarial", "corrupted")

_DEFAULT_BASE = {
    "mab": "logbarrier",
    "linear": "exp2",
    "contextual": "exp4",
    "graph-strong": "tsallis",
    "graph-weak": "weakexp3",
}
_DEFAULT_CORRAL = {
    "mab": "strong",
    "linear": "half",
    "contextual": "half",
    "graph-strong": "half",
    "graph-weak": "two-thirds",
}
_ALLOWED_CORRAL = {
    "mab": ("strong", "dd"),
    "linear": ("half",),
    "contextual": ("half",),
    "graph-strong": ("half",),
    "graph-weak": ("two-thirds",),
}

CSV_HEADER = ("seed", "t", "pseudo_regret", "one_minus_p_best", "candidate",
              "setting", "stack")


@dataclass
class ExperimentConfig:
    """Field-for-field mirror of the JSON config documents."""

    setting: str = "mab"
    stack: str = "full"
    regime: str = "stochastic"
    base: Optional[str] = None
    corral: Optional[str] = None
    horizon: int = 1024
    seeds: Sequence[int] = (0,)
    means: Optional[Sequence[float]] = None
    delta: Optional[float] = None
    num_actions: Optional[int] = None
    script: Optional[Sequence[Sequence[float]]] = None
    script_file: Optional[str] = None
    corruption: Optional[dict] = None
    graph_edges: Optional[Sequence[Sequence[int]]] = None
    graph_file: Optional[str] = None
    actions: Optional[Sequence[Sequence[float]]] = None
    theta: Optional[Sequence[float]] = None
    noise: float = 0.1
    ctx_means: Optional[Sequence[Sequence[float]]] = None
    policies: Optional[Sequence[Sequence[int]]] = None
    candidate: Optional[int] = None
    output: Optional[str] = None

    def __post_init__(self):
        if self.setting not in SETTINGS:
            raise ValueError(f"setting must be one of {SETTINGS}")
        if self.stack not in STACKS:
            raise ValueError(f"stack must be one of {STACKS}")
        if self.regime not in REGIMES:
            raise ValueError(f"regime must be one of {REGIMES}")
        if self.base is None:
            self.base = _DEFAULT_BASE[self.setting]
        if self.corral is None:
            self.corral = _DEFAULT_CORRAL[self.setting]
        if self.base != _DEFAULT_BASE[self.setting]:
            raise ValueError(
                f"base {self.base!r} is not compatible with setting {self.setting!r}"
            )
        if self.stack != "base-only" and self.corral not in _ALLOWED_CORRAL[self.setting]:
            raise ValueError(
                f"corral {self.corral!r} is not compatible with setting {self.setting!r}"
            )
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        self.seeds = tuple(int(s) for s in self.seeds)
        if not self.seeds:
            raise ValueError("seeds must be nonempty")
        if self.means is not None:
            self.means = tuple(float(m) for m in self.means)
        if self.means is None and self.delta is not None:
            if not self.num_actions or self.num_actions < 2:
                raise ValueError("delta shorthand needs num_actions >= 2")
            if not 0.0 < self.delta <= 0.5:
                raise ValueError("delta must lie in (0, 0.5]")
            self.means = (0.5 - self.delta,) + (0.5,) * (self.num_actions - 1)
        if self.regime == "adversarial" and self.script is None and self.script_file is None:
            raise ValueError("adversarial regime needs a script or script_file")
        if self.regime == "corrupted" and self.corruption is None:
            raise ValueError("corrupted regime needs a corruption schedule")
        if self.setting in ("graph-strong", "graph-weak"):
            if self.graph_edges is None and self.graph_file is None:
                raise ValueError("graph settings need graph_edges or graph_file")
        if self.setting == "linear" and self.regime == "stochastic":
            if self.actions is None or self.theta is None:
                raise ValueError("linear setting needs actions and theta")
        if self.setting == "contextual":
            if self.regime != "stochastic":
                raise ValueError("contextual setting supports only the stochastic regime")
            if self.ctx_means is None or self.policies is None:
                raise ValueError("contextual setting needs ctx_means and policies")


def config_to_json(config: ExperimentConfig) -> str:
    return json.dumps(asdict(config), indent=2, default=_jsonable)


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer, np.floating)):
        return obj.item()
    raise TypeError(f"not JSON-serializable: {type(obj)}")


def config_from_json(source: str) -> ExperimentConfig:
    """Parse a config from a JSON string or a path to a JSON file."""
    text = source
    if not source.lstrip().startswith("{"):
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    data = json.loads(text)
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config fields: {sorted(unknown)}")
    return ExperimentConfig(**data)


# ------------------------------------------------------------ environment


def build_graph(config: ExperimentConfig) -> FeedbackGraph:
    if config.graph_file is not None:
        return load_edge_list(config.graph_file)
    edges = [tuple(int(v) for v in e) for e in config.graph_edges]
    n = max(max(e) for e in edges) + 1
    if config.num_actions:
        n = max(n, config.num_actions)
    return FeedbackGraph.from_edges(n, edges)


def build_model(config: ExperimentConfig):
    """Instantiate the loss model named by (setting, regime)."""
    if config.setting == "contextual":
        return ContextualStochastic(np.asarray(config.ctx_means, dtype=float))
    if config.setting == "linear" and config.regime == "stochastic":
        return LinearStochastic(np.asarray(config.actions, dtype=float),
                                np.asarray(config.theta, dtype=float),
                                noise=config.noise)
    if config.regime == "adversarial":
        if config.script_file is not None:
            return adversarial_from_csv(config.script_file)
        return Adversarial(script=np.asarray(config.script, dtype=float))
    means = np.asarray(config.means, dtype=float)
    if config.regime == "corrupted":
        return Corrupted(means, CorruptionSchedule(**config.corruption))
    return StochasticBernoulli(means)


def realize_path(model, horizon, seed):
    return model.realize(horizon, np.random.SeedSequence([int(seed), 0]))


# --------------------------------------------------------------- accounting


def decision_mean_matrix(path, policies=None):
    """(T, n_decisions) exact expected loss of each decision per round."""
    if policies is None:
        return path.means
    policies = np.asarray(policies, dtype=int)
    ctx = path.contexts
    # decision pi plays arm policies[pi, ctx_t] in round t
    return path.means[np.arange(path.horizon)[:, None], policies[:, ctx].T]


def pseudo_regret(decisions, decision_means):
    """Cumulative expected-loss regret against the best fixed decision."""
    decisions = np.asarray(decisions, dtype=int)
    horizon = decision_means.shape[0]
    if decisions.shape != (horizon,):
        raise ValueError("need one decision per round")
    played = decision_means[np.arange(horizon), decisions]
    best = int(np.argmin(decision_means.sum(axis=0)))
    return np.cumsum(played - decision_means[:, best]), best


def checkpoints(horizon):
    """Log-spaced grid {2^4, 2^5, ...} capped and terminated at T."""
    pts = []
    p = 16
    while p < horizon:
        pts.append(p)
        p *= 2
    pts.append(horizon)
    return pts


class RegretRecord(NamedTuple):
    seed: int
    t: int
    pseudo_regret: float
    one_minus_p_best: float
    candidate: int


# ------------------------------------------------------------------- fits


@dataclass
class SlopeFit:
    log_coef: float
    log_r2: float
    sqrt_coef: float
    sqrt_r2: float


def _least_squares(x, y):
    A = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_res = float(resid @ resid)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot <= 1e-300:
        r2 = 1.0 if ss_res <= 1e-12 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return float(coef[0]), r2


def slope_fit(ts, values):
    """Fit the tail half of the curve against ln t and against sqrt t."""
    ts = np.asarray(ts, dtype=float)
    values = np.asarray(values, dtype=float)
    if ts.size < 8:
        raise ValueError("need at least 8 checkpoints")
    if np.any(np.diff(ts) <= 0):
        raise ValueError("checkpoints must be strictly increasing")
    if ts[-1] / ts[0] < 100.0:
        raise ValueError("checkpoints must span at least two decades")
    tail = slice(ts.size // 2, None)
    log_coef, log_r2 = _least_squares(np.log(ts[tail]), values[tail])
    sqrt_coef, sqrt_r2 = _least_squares(np.sqrt(ts[tail]), values[tail])
    return SlopeFit(log_coef, log_r2, sqrt_coef, sqrt_r2)


@dataclass
class Verdict:
    passed: bool
    fit: SlopeFit
    ratio_end: float
    ratio_earlier: float


def stochastic_verdict(ts, values):
    """Log-like growth test: better log fit AND regret/sqrt(t) halving.

    The second clause compares T against the T/16 checkpoint (grid
    point closest to it).
    """
    fit = slope_fit(ts, values)
    ts = np.asarray(ts, dtype=float)
    values = np.asarray(values, dtype=float)
    i = int(np.argmin(np.abs(ts - ts[-1] / 16.0)))
    ratio_end = float(values[-1] / math.sqrt(ts[-1]))
    ratio_earlier = float(values[i] / math.sqrt(ts[i]))
    passed = bool(fit.log_r2 > fit.sqrt_r2 and ratio_end < 0.5 * ratio_earlier)
    return Verdict(passed, fit, ratio_end, ratio_earlier)


# ---------------------------------------------------------------- drivers


class _BaseOnlyDriver:
    """Runs a bare learner with observation probability one each round."""

    def __init__(self, learner, rng, late_q, contextual=False):
        self.learner = learner
        self.rng = rng
        self.late_q = late_q
        self.contextual = contextual
        self.last_decision = None
        self.candidate = -1

    def choose(self, context=None, predictions=None):
        if self.late_q:
            arm = self.learner.propose(self.rng)
        elif self.contextual:
            arm = self.learner.propose(1.0, self.rng, context=context)
        else:
            arm = self.learner.propose(1.0, self.rng)
        self.last_decision = int(self.learner.pending_decision)
        return arm

    def action_distribution(self):
        # for the contextual learner this is the policy distribution
        return np.asarray(self.learner.pending_distribution)

    def observe(self, loss_row):
        if self.late_q:
            self.learner.update(loss_row, q=1.0, upd=True)
        else:
            self.learner.update(loss_row, upd=True)


class _FixedCandidateDriver:
    """A single wrapper with an immutable candidate (no epoch reduction)."""

    def __init__(self, wrapper, rng, candidate):
        self.wrapper = wrapper
        self.rng = rng
        self.candidate = candidate

    def choose(self, context=None, predictions=None):
        if predictions is not None:
            return self.wrapper.choose(self.rng, context=context,
                                       predictions=predictions)
        return self.wrapper.choose(self.rng, context=context)

    @property
    def last_decision(self):
        return self.wrapper.last_decision

    def action_distribution(self):
        return self.wrapper.action_distribution()

    def observe(self, loss_row):
        self.wrapper.observe(loss_row)


def _base_learner(config: ExperimentConfig, graph, n, candidate=None):
    """Fresh base learner; with a candidate, over the reduced decision set."""
    setting = config.setting
    if setting == "mab":
        k = n if candidate is None else n - 1
        return LogBarrierMab(k, horizon=config.horizon)
    if setting in ("graph-strong", "graph-weak"):
        g = graph if candidate is None else graph.without(candidate)[0]
        return TsallisInfGraph(g) if setting == "graph-strong" else WeakExp3(g)
    if setting == "linear":
        acts = np.asarray(config.actions, dtype=float)
        if candidate is not None:
            acts = np.delete(acts, candidate, axis=0)
        return Exp2(acts)
    pols = np.asarray(config.policies, dtype=int)
    k = np.asarray(config.ctx_means, dtype=float).shape[1]
    if candidate is not None:
        pols = np.delete(pols, candidate, axis=0)
    return Exp4(pols, k)


def _num_decisions(config: ExperimentConfig, graph, model):
    if config.setting == "contextual":
        return len(config.policies)
    if config.setting in ("graph-strong", "graph-weak"):
        if model.num_actions != graph.n:
            raise ValueError(
                f"loss model has {model.num_actions} arms but the graph has {graph.n} nodes"
            )
        return graph.n
    return model.num_actions


def _wrapper_factory(config: ExperimentConfig, graph, n):
    def factory(candidate):
        others = np.array([x for x in range(n) if x != candidate], dtype=int)
        if config.corral == "strong":
            return CorralStrong(candidate, _base_learner(config, graph, n))
        if config.corral == "dd":
            return CorralDd(candidate, _base_learner(config, graph, n, candidate),
                            others, horizon=config.horizon)
        base = _base_learner(config, graph, n, candidate)
        if config.corral == "two-thirds":
            return CorralTwoThirds(candidate, base, others, graph)
        if config.setting == "contextual":
            return CorralHalf(candidate, base, others,
                              policies=np.asarray(config.policies, dtype=int))
        return CorralHalf(candidate, base, others,
                          graph=graph if config.setting == "graph-strong" else None)

    return factory


def _build_driver(config: ExperimentConfig, graph, n, seed):
    if config.stack == "base-only":
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 1, 1]))
        learner = _base_learner(config, graph, n)
        return _BaseOnlyDriver(learner, rng, late_q=config.setting == "mab",
                               contextual=config.setting == "contextual")
    factory = _wrapper_factory(config, graph, n)
    if config.stack == "base+corral":
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 1, 1]))
        cand = config.candidate if config.candidate is not None else 0
        if not 0 <= cand < n:
            raise ValueError(f"candidate {cand} outside the {n} decisions")
        return _FixedCandidateDriver(factory(cand), rng, cand)
    return EpochRunner(n, factory, config.horizon, seed=seed)


# ---------------------------------------------------------------- run loop


@dataclass
class RunResult:
    config: ExperimentConfig
    ts: np.ndarray
    regret: np.ndarray            # (n_seeds, n_checkpoints)
    one_minus_p: np.ndarray       # (n_seeds, n_checkpoints)
    candidates: np.ndarray        # (n_seeds, n_checkpoints) int, -1 if none
    final_candidates: np.ndarray  # (n_seeds,)
    best_decision: int

    @property
    def seeds(self):
        return list(self.config.seeds)

    def mean_curve(self):
        return self.regret.mean(axis=0)

    def band(self):
        """(q25, q75, min, max) regret envelopes across seeds."""
        return (np.quantile(self.regret, 0.25, axis=0),
                np.quantile(self.regret, 0.75, axis=0),
                self.regret.min(axis=0), self.regret.max(axis=0))

    def records(self):
        for i, seed in enumerate(self.config.seeds):
            for j, t in enumerate(self.ts):
                yield RegretRecord(seed, int(t), float(self.regret[i, j]),
                                   float(self.one_minus_p[i, j]),
                                   int(self.candidates[i, j]))


def _run_seed(config: ExperimentConfig, model, graph, n, seed):
    path = realize_path(model, config.horizon, seed)
    policies = (np.asarray(config.policies, dtype=int)
                if config.setting == "contextual" else None)
    mean_matrix = decision_mean_matrix(path, policies)
    best = int(np.argmin(mean_matrix.sum(axis=0)))
    driver = _build_driver(config, graph, n, seed)
    grid = checkpoints(config.horizon)
    decisions = np.empty(config.horizon, dtype=int)
    acc_miss = 0.0
    marks_regret = np.empty(len(grid))
    marks_miss = np.empty(len(grid))
    marks_cand = np.empty(len(grid), dtype=int)
    next_mark = 0
    for t in range(1, config.horizon + 1):
        ctx = int(path.contexts[t - 1]) if path.contexts is not None else None
        driver.choose(context=ctx)
        dist = driver.action_distribution()
        acc_miss += 1.0 - float(dist[best])
        decisions[t - 1] = driver.last_decision
        driver.observe(path.loss(t))
        if t == grid[next_mark]:
            marks_miss[next_mark] = acc_miss
            marks_cand[next_mark] = getattr(driver, "candidate", -1)
            next_mark += 1
    curve, _ = pseudo_regret(decisions, mean_matrix)
    marks_regret[:] = curve[np.asarray(grid) - 1]
    return marks_regret, marks_miss, marks_cand


def run_experiment(config: ExperimentConfig) -> RunResult:
    model = build_model(config)
    graph = (build_graph(config)
             if config.setting in ("graph-strong", "graph-weak") else None)
    n = _num_decisions(config, graph, model)
    _build_driver(config, graph, n, 0)  # fail fast on incompatible wiring
    if config.regime in ("stochastic", "corrupted") and config.setting != "contextual":
        gap(model)  # rejects zero-gap degenerate instances

    def one(seed):
        return _run_seed(config, model, graph, n, seed)

    workers = int(os.environ.get("BOBW_THREADS", "1") or "1")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outs = list(pool.map(one, config.seeds))
    else:
        outs = [one(seed) for seed in config.seeds]
    grid = np.array(checkpoints(config.horizon))
    regret = np.stack([o[0] for o in outs])
    miss = np.stack([o[1] for o in outs])
    cands = np.stack([o[2] for o in outs])
    policies = (np.asarray(config.policies, dtype=int)
                if config.setting == "contextual" else None)
    path0 = realize_path(model, config.horizon, config.seeds[0])
    best = int(np.argmin(decision_mean_matrix(path0, policies).sum(axis=0)))
    result = RunResult(config, grid, regret, miss, cands, cands[:, -1].copy(), best)
    if config.output:
        write_csv(config.output, result)
    return result


def _fmt(x):
    return format(float(x), ".12g")


def write_csv(path_or_buf, result: RunResult):
    own = isinstance(path_or_buf, (str, os.PathLike))
    fh = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for rec in result.records():
            w.writerow([rec.seed, rec.t, _fmt(rec.pseudo_regret),
                        _fmt(rec.one_minus_p_best), rec.candidate,
                        result.config.setting, result.config.stack])
    finally:
        if own:
            fh.close()


def csv_text(result: RunResult) -> str:
    buf = io.StringIO()
    write_csv(buf, result)
    return buf.getvalue()


def fit_csv(source) -> dict:
    """Mean curve across seeds from a results CSV, with fits and verdict."""
    if isinstance(source, str) and "\n" in source:
        fh = io.StringIO(source)
        rows = list(csv.DictReader(fh))
    else:
        with open(source, "r", newline="") as fh:
            rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError("empty results file")
    by_t = {}
    for row in rows:
        by_t.setdefault(int(row["t"]), []).append(float(row["pseudo_regret"]))
    ts = np.array(sorted(by_t))
    mean = np.array([float(np.mean(by_t[t])) for t in ts])
    verdict = stochastic_verdict(ts, mean)
    return {
        "ts": ts.tolist(),
        "mean_regret": mean.tolist(),
        "log_coef": verdict.fit.log_coef,
        "log_r2": verdict.fit.log_r2,
        "sqrt_coef": verdict.fit.sqrt_coef,
        "sqrt_r2": verdict.fit.sqrt_r2,
        "ratio_end": verdict.ratio_end,
        "ratio_earlier": verdict.ratio_earlier,
        "stochastic_verdict": verdict.passed,
    }


def run_sweep(base: ExperimentConfig, deltas=None, budgets=None, horizons=None):
    """Grid sweep over gap, corruption budget, and horizon.

    Returns [(label, RunResult)]; each combo writes its own CSV when the
    base config names an output (suffix _d{delta}_C{budget}_T{horizon}).
    """
    deltas = list(deltas) if deltas else [base.delta]
    budgets = list(budgets) if budgets else [None]
    horizons = list(horizons) if horizons else [base.horizon]
    out = []
    for d in deltas:
        for c in budgets:
            for h in horizons:
                cfg = replace(base, horizon=int(h))
                if d is not None:
                    k = cfg.num_actions or (len(cfg.means) if cfg.means else None)
                    cfg = replace(cfg, delta=float(d), means=None, num_actions=k)
                if c is not None:
                    corr = dict(cfg.corruption or {"kind": "front_loaded",
                                                   "magnitude": 1.0, "arm": 0})
                    corr["budget"] = float(c)
                    cfg = replace(cfg, regime="corrupted", corruption=corr)
                label = f"d{d}_C{c}_T{h}"
                if base.output:
                    stem, ext = os.path.splitext(base.output)
                    cfg = replace(cfg, output=f"{stem}_{label}{ext or '.csv'}")
                out.append((label, run_experiment(cfg)))
    return out
