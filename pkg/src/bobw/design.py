"""Exploration design over a finite action set in R^d.

``john_exploration`` returns a distribution nu over actions whose
information matrix M = sum_a nu_a a a^T caps the leverage
a^T M^{-1} a at d(1+eps) for every action (Kiefer-Wolfowitz
certificate).  That leverage cap is the only property the linear
bandit learner consumes, and a G-optimal design delivers it
constructively via Frank-Wolfe on the log-det objective.

Linear solves use a small ridge (1e-12 * trace(M)/d) for conditioning;
the returned certificate is recomputed post-hoc with the same rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["ExplorationDesign", "john_exploration", "leverages"]

_PRUNE_TOL = 1e-12


@dataclass(frozen=True)
class ExplorationDesign:
    weights: np.ndarray       # distribution over the action rows
    matrix: np.ndarray        # M = sum_a nu_a a a^T
    max_leverage: float       # max_a a^T M^{-1} a (ridged solve)
    support_size: int
    iterations: int


def leverages(actions, weights):
    """a^T M(nu)^{-1} a for every action row, via a ridged solve."""
    A = np.asarray(actions, dtype=float)
    w = np.asarray(weights, dtype=float)
    d = A.shape[1]
    M = A.T @ (w[:, None] * A)
    ridge = 1e-12 * np.trace(M) / d
    sol = np.linalg.solve(M + ridge * np.eye(d), A.T)
    return np.einsum("ij,ji->i", A, sol), M


def john_exploration(actions, eps=0.1, max_iter=200_000):
    """Frank-Wolfe G-optimal design with certificate max-leverage <= d(1+eps)."""
    A = np.asarray(actions, dtype=float)
    if A.ndim != 2 or A.shape[0] < 1:
        raise ValueError("actions must be a nonempty (num_actions, d) matrix")
    if not (0.0 < eps <= 0.5):
        raise ValueError("eps must lie in (0, 0.5]")
    n, d = A.shape
    rank = int(np.linalg.matrix_rank(A))
    if rank < d:
        raise ValueError(
            f"action set spans only a {rank}-dimensional subspace of R^{d} "
            f"(deficiency {d - rank}); re-parameterize before building a design"
        )

    w = np.full(n, 1.0 / n)
    cap = d * (1.0 + eps)
    iters = 0
    while True:
        lev, _ = leverages(A, w)
        worst = float(lev.max())
        if worst <= cap:
            break
        iters += 1
        if iters > max_iter:
            raise RuntimeError(
                f"Frank-Wolfe did not certify after {max_iter} iterations "
                f"(max leverage {worst:.6g} > {cap:.6g})"
            )
        k = int(np.argmax(lev))
        gamma = (worst / d - 1.0) / (worst - 1.0)
        w *= 1.0 - gamma
        w[k] += gamma

    pruned = np.where(w > _PRUNE_TOL, w, 0.0)
    pruned /= pruned.sum()
    lev, M = leverages(A, pruned)
    if float(lev.max()) > cap:       # pruning should never cost the certificate
        pruned = w
        lev, M = leverages(A, pruned)
    return ExplorationDesign(
        weights=pruned,
        matrix=M,
        max_leverage=float(lev.max()),
        support_size=int(np.count_nonzero(pruned)),
        iterations=iters,
    )
