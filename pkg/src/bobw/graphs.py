"""Directed feedback graphs over arms.

Playing arm i reveals the loss of every arm j with edge (i, j); self-loops
mean "observes its own loss".  The module provides:

- observability classification (strong / weak / unobservable),
- exact independence number over the OR-symmetrised conflict relation,
- exact weak independence number over the AND-symmetrised relation (only
  mutually-observing pairs conflict),
- dominating sets (greedy with set-cover guarantee, plus exact minimum
  for small graphs),
- induced subgraphs with index maps,
- the candidate-centred surrogate loss that makes a loss observable for
  every played arm on strongly observable graphs with missing self-loops,
- edge-list text I/O.

Node indices are 0-based.  Exact independence computations are limited to
n <= 24 (branch-and-bound over bitmasks).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "FeedbackGraph",
    "classify",
    "independence_number",
    "weak_independence_number",
    "dominating_set",
    "min_dominating_set",
    "surrogate_loss",
    "load_edge_list",
    "save_edge_list",
    "parse_edge_list",
]

_EXACT_LIMIT = 24


@dataclass(frozen=True)
class FeedbackGraph:
    n: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.n <= 0:
            raise ValueError("graph needs at least one node")
        for i, j in self.edges:
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge ({i},{j}) out of range for n={self.n}")
        object.__setattr__(self, "edges", frozenset((int(i), int(j)) for i, j in self.edges))

    @classmethod
    def from_edges(cls, n, edges):
        return cls(n, frozenset((int(i), int(j)) for i, j in edges))

    @classmethod
    def complete_with_self_loops(cls, n):
        return cls(n, frozenset((i, j) for i in range(n) for j in range(n)))

    @classmethod
    def self_loops_only(cls, n):
        """The plain bandit feedback graph."""
        return cls(n, frozenset((i, i) for i in range(n)))

    def has_edge(self, i, j):
        return (i, j) in self.edges

    def in_neighbors(self, j):
        """Arms whose play reveals the loss of arm j (may include j)."""
        return sorted(i for i in range(self.n) if (i, j) in self.edges)

    def out_neighbors(self, i):
        return sorted(j for j in range(self.n) if (i, j) in self.edges)

    def in_masks(self):
        masks = [0] * self.n
        for i, j in self.edges:
            masks[j] |= 1 << i
        return masks

    def out_masks(self):
        masks = [0] * self.n
        for i, j in self.edges:
            masks[i] |= 1 << j
        return masks

    def self_loop(self, i):
        return (i, i) in self.edges

    def induced(self, keep):
        """Induced subgraph on sorted(keep); returns (graph, old->new map)."""
        keep = sorted(set(keep))
        if not keep:
            raise ValueError("cannot induce on an empty node set")
        index = {old: new for new, old in enumerate(keep)}
        edges = frozenset(
            (index[i], index[j]) for i, j in self.edges if i in index and j in index
        )
        return FeedbackGraph(len(keep), edges), index

    def without(self, node):
        """Subgraph with one node removed, plus the old->new index map."""
        return self.induced([i for i in range(self.n) if i != node])


def classify(g: FeedbackGraph):
    """'strong' | 'weak' | 'unobservable' (plus witnesses for failures).

    Strong: every arm either has a self-loop or is observed by all other
    arms.  Observable: every arm has at least one in-neighbor.
    Returns (label, witnesses) where witnesses lists offending nodes.
    """
    masks = g.in_masks()
    full = (1 << g.n) - 1
    unobserved = [j for j in range(g.n) if masks[j] == 0]
    if unobserved:
        return "unobservable", unobserved
    weakly = []
    for j in range(g.n):
        if masks[j] & (1 << j):
            continue
        if masks[j] != full & ~(1 << j):
            weakly.append(j)
    if weakly:
        return "weak", weakly
    return "strong", []


def _mis_size(adj, mask, memo):
    """Max independent set size inside bitmask ``mask`` (branch and bound)."""
    if mask == 0:
        return 0
    cached = memo.get(mask)
    if cached is not None:
        return cached
    # pick the vertex in mask with the most conflicts inside mask
    best_v, best_deg = -1, -1
    m = mask
    while m:
        v = (m & -m).bit_length() - 1
        deg = bin(adj[v] & mask).count("1")
        if deg > best_deg:
            best_v, best_deg = v, deg
        m &= m - 1
    if best_deg == 0:
        out = bin(mask).count("1")
        memo[mask] = out
        return out
    v = best_v
    # either exclude v ...
    out = _mis_size(adj, mask & ~(1 << v), memo)
    # ... or include v and drop its neighborhood
    out = max(out, 1 + _mis_size(adj, mask & ~(1 << v) & ~adj[v], memo))
    memo[mask] = out
    return out


def _conflict_masks(g: FeedbackGraph, require_both: bool):
    adj = [0] * g.n
    for i in range(g.n):
        for j in range(i + 1, g.n):
            fwd = (i, j) in g.edges
            bwd = (j, i) in g.edges
            conflict = (fwd and bwd) if require_both else (fwd or bwd)
            if conflict:
                adj[i] |= 1 << j
                adj[j] |= 1 << i
    return adj


def independence_number(g: FeedbackGraph):
    """Largest set of arms with no edge in either direction between any two."""
    if g.n > _EXACT_LIMIT:
        raise ValueError(f"exact independence number limited to n<={_EXACT_LIMIT}")
    adj = _conflict_masks(g, require_both=False)
    return _mis_size(adj, (1 << g.n) - 1, {})


def weak_independence_number(g: FeedbackGraph):
    """Largest set of arms no two of which observe each other (both ways)."""
    if g.n > _EXACT_LIMIT:
        raise ValueError(f"exact weak independence number limited to n<={_EXACT_LIMIT}")
    adj = _conflict_masks(g, require_both=True)
    return _mis_size(adj, (1 << g.n) - 1, {})


def dominating_set(g: FeedbackGraph, cover=None):
    """Greedy dominating set: every node in ``cover`` (default: all) gets an
    in-neighbor in the returned list.  Ties break toward the lowest index.
    Greedy set cover keeps the size within (1 + ln n) of optimal."""
    out_masks = g.out_masks()
    in_masks = g.in_masks()
    want = 0
    for j in (range(g.n) if cover is None else cover):
        want |= 1 << j
    for j in range(g.n):
        if (want >> j) & 1 and in_masks[j] == 0:
            raise ValueError(f"node {j} has no in-neighbor; graph not observable")
    chosen = []
    covered = 0
    while covered & want != want:
        best, best_gain = -1, -1
        for i in range(g.n):
            gain = bin(out_masks[i] & want & ~covered).count("1")
            if gain > best_gain:
                best, best_gain = i, gain
        if best_gain <= 0:
            raise ValueError("cover stalled; graph not observable on target set")
        chosen.append(best)
        covered |= out_masks[best]
    return chosen


def min_dominating_set(g: FeedbackGraph, cover=None, limit=20):
    """Exact minimum dominating set by size-ordered search (small n only)."""
    if g.n > limit:
        return dominating_set(g, cover)
    out_masks = g.out_masks()
    want = 0
    for j in (range(g.n) if cover is None else cover):
        want |= 1 << j
    greedy = dominating_set(g, cover)
    for k in range(1, len(greedy)):
        for combo in itertools.combinations(range(g.n), k):
            got = 0
            for i in combo:
                got |= out_masks[i]
            if got & want == want:
                return list(combo)
    return greedy


def surrogate_loss(g: FeedbackGraph, candidate, p_base, losses):
    """Candidate-centred surrogate loss vector.

    ``p_base`` is a length-n vector carrying the base learner's current
    distribution over non-candidate arms (the candidate entry is ignored).
    On graphs where every node has a self-loop this is the identity.  The
    surrogate of an arm is observable whenever that arm is played, and
    candidate-relative (and distribution-relative) differences keep their
    expectations.
    """
    losses = np.asarray(losses, dtype=float)
    if losses.shape != (g.n,):
        raise ValueError("losses must have one entry per node")
    p = np.asarray(p_base, dtype=float)
    if p.shape != (g.n,):
        raise ValueError("p_base must have one entry per node")
    out = np.empty(g.n)
    cand_loop = g.self_loop(candidate)
    for j in range(g.n):
        if j == candidate:
            continue
        out[j] = (losses[j] if g.self_loop(j) else 0.0) - (
            0.0 if cand_loop else losses[candidate]
        )
    mix = sum(
        p[j] * losses[j]
        for j in range(g.n)
        if j != candidate and not g.self_loop(j)
    )
    out[candidate] = (losses[candidate] if cand_loop else 0.0) - mix
    return out


def parse_edge_list(text):
    """Parse the edge-list text format.

    First non-comment line: the node count.  Every following non-comment
    line: ``i j`` for an edge (i observes j when playing i).  ``#`` starts
    a comment.
    """
    n = None
    edges = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if n is None:
            if len(parts) != 1:
                raise ValueError(f"line {lineno}: expected node count, got {raw!r}")
            n = int(parts[0])
            continue
        if len(parts) != 2:
            raise ValueError(f"line {lineno}: expected 'i j', got {raw!r}")
        edges.add((int(parts[0]), int(parts[1])))
    if n is None:
        raise ValueError("empty edge-list input")
    return FeedbackGraph.from_edges(n, edges)


def load_edge_list(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_edge_list(fh.read())


def save_edge_list(g: FeedbackGraph, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{g.n}\n")
        for i, j in sorted(g.edges):
            fh.write(f"{i} {j}\n")
