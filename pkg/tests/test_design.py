"""Exploration-design tests.

The certificate is always re-verified post hoc with a plain (unridged)
inverse, independent of the solver's internals.  Known-answer cases:
orthonormal bases give uniform weights with leverage exactly d.
"""

import numpy as np
import pytest

from bobw.design import john_exploration, leverages


def posthoc_max_leverage(actions, weights):
    A = np.asarray(actions, float)
    M = A.T @ (weights[:, None] * A)
    return float(np.max(np.einsum("ij,jk,ik->i", A, np.linalg.inv(M), A)))


def test_standard_basis_uniform():
    for d in (2, 3, 5):
        des = john_exploration(np.eye(d), eps=0.1)
        assert np.allclose(des.weights, np.full(d, 1.0 / d))
        assert des.max_leverage == pytest.approx(d, rel=1e-9)
        assert des.support_size == d


def test_one_dimensional_signs():
    des = john_exploration(np.array([[1.0], [-1.0]]), eps=0.1)
    assert des.max_leverage == pytest.approx(1.0, rel=1e-9)
    assert des.matrix == pytest.approx(np.array([[1.0]]))


def test_random_unit_vectors_certificate():
    rng = np.random.default_rng(42)
    A = rng.normal(size=(20, 3))
    A /= np.linalg.norm(A, axis=1, keepdims=True)
    des = john_exploration(A, eps=0.05)
    # re-verify from scratch, no ridge
    fresh = posthoc_max_leverage(A, des.weights)
    assert fresh <= 3.15 + 1e-9
    assert abs(fresh - des.max_leverage) < 1e-8
    assert des.weights.sum() == pytest.approx(1.0)
    assert np.all(des.weights >= 0)


def test_average_leverage_is_dimension():
    # E_{a~nu}[leverage(a)] = trace(M^{-1} M) = d for any design
    rng = np.random.default_rng(0)
    A = rng.normal(size=(12, 4))
    des = john_exploration(A, eps=0.2)
    lev, _ = leverages(A, des.weights)
    assert float(des.weights @ lev) == pytest.approx(4.0, abs=1e-6)
    assert des.max_leverage >= 4.0 - 1e-9  # max >= mean


def test_scaling_invariance():
    rng = np.random.default_rng(7)
    A = rng.normal(size=(15, 3))
    a = john_exploration(A, eps=0.1)
    b = john_exploration(5.0 * A, eps=0.1)
    assert a.max_leverage == pytest.approx(b.max_leverage, abs=1e-9)
    assert np.allclose(a.weights, b.weights)


def test_duplicates_keep_certificate():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(10, 3))
    doubled = np.vstack([A, A])
    des = john_exploration(doubled, eps=0.1)
    assert posthoc_max_leverage(doubled, des.weights) <= 3 * 1.1 + 1e-9


def test_rank_deficient_rejected():
    A = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]])
    with pytest.raises(ValueError, match="2-dimensional.*deficiency 1"):
        john_exploration(A, eps=0.1)


def test_eps_validation():
    with pytest.raises(ValueError):
        john_exploration(np.eye(2), eps=0.0)
    with pytest.raises(ValueError):
        john_exploration(np.eye(2), eps=0.7)
    with pytest.raises(ValueError):
        john_exploration(np.zeros((0, 2)))


def test_needle_set_converges():
    # one long direction plus many near-collinear vectors: forces real FW work
    rng = np.random.default_rng(9)
    base = np.array([1.0, 0.0])
    A = np.vstack([base + 0.01 * rng.normal(size=2) for _ in range(30)] + [[0.0, 0.3]])
    des = john_exploration(A, eps=0.1)
    assert posthoc_max_leverage(A, des.weights) <= 2 * 1.1 + 1e-9
    assert des.iterations > 0
