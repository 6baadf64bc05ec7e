import warnings

import numpy as np
import pytest

from gsn.dictionary import (Dictionary, assemble_dictionary, encode_image, fixpoint_residual,
                            lasso_objective, learn_dictionary, objective, sparse_code)
from gsn.errors import ConfigError, DomainError, ShapeError
from gsn.numerics import soft_threshold

from oracles import lasso_grid_argmin


def _random_unit_dict(rng, n, k):
    d = rng.normal(size=(n, k))
    return d / np.linalg.norm(d, axis=0)


def test_assemble_examples():
    np.testing.assert_array_equal(assemble_dictionary([[2, 0], [0, 3]]).atoms, np.eye(2))
    np.testing.assert_allclose(assemble_dictionary([[1, 1]]).atoms[:, 0], [0.70710678, 0.70710678], atol=1e-8)
    with pytest.warns(RuntimeWarning):
        d = assemble_dictionary([[0.0, 0.0], [0.0, 5.0]])
    np.testing.assert_array_equal(d.atoms[:, 0], [1, 0])
    assert d.replaced == (0,)
    with pytest.raises(ConfigError):
        assemble_dictionary([])
    with pytest.raises(ShapeError):
        assemble_dictionary([[1, 0], [1, 0, 0]])


def test_objective_examples():
    assert objective(np.eye(2), [[1], [0]], [[1], [0]], 0.5) == 0.5
    y = np.array([[1.0, 2.0], [3.0, -1.0]])
    assert objective(np.eye(2), np.zeros((2, 2)), y, 0.7) == pytest.approx(np.sum(y ** 2))
    d = np.array([[2.0, 1.0], [0.0, 1.0]])
    x = np.linalg.solve(d, y)
    assert objective(d, x, y, 0.0) == pytest.approx(0.0, abs=1e-24)
    with pytest.raises(ShapeError):
        objective(np.eye(2), np.zeros((3, 1)), np.zeros((2, 1)), 0.1)


def test_sparse_code_orthonormal_closed_form():
    code = sparse_code(np.eye(2), [3.0, 0.0], 2.0)
    np.testing.assert_allclose(code.alpha, [1.0, 0.0], atol=1e-12)


def test_sparse_code_orthonormal_random(rng):
    for _ in range(30):
        n = int(rng.integers(1, 7))
        q, _ = np.linalg.qr(rng.normal(size=(n, n)))
        y, lam = rng.normal(size=n) * 2, rng.uniform(0, 1)
        code = sparse_code(q, y, lam)
        np.testing.assert_allclose(code.alpha, soft_threshold(q.T @ y, lam), atol=1e-6)


def test_sparse_code_unregularized_solves(rng):
    for _ in range(10):
        n = int(rng.integers(1, 5))
        d = np.eye(n) + 0.3 * rng.normal(size=(n, n)) / np.sqrt(n)
        y = rng.normal(size=n)
        code = sparse_code(d, y, 0.0, max_iters=20000, tol=1e-13)
        np.testing.assert_allclose(d @ code.alpha, y, atol=1e-6)
        np.testing.assert_allclose(code.alpha, np.linalg.solve(d, y), atol=1e-6)


def test_sparse_code_zero_threshold_against_grid(rng):
    for _ in range(20):
        d = _random_unit_dict(rng, 2, 2)
        y = rng.normal(size=2)
        lam = np.max(np.abs(d.T @ y)) * rng.uniform(1.0, 1.5)
        code = sparse_code(d, y, lam)
        np.testing.assert_array_equal(code.alpha, 0.0)
        np.testing.assert_allclose(lasso_grid_argmin(d, y, lam), 0.0, atol=1e-9)


def test_sparse_code_matches_grid_search(rng):
    for _ in range(10):
        d = _random_unit_dict(rng, 3, 2)
        y, lam = rng.normal(size=3), rng.uniform(0.05, 0.5)
        x = sparse_code(d, y, lam, max_iters=5000, tol=1e-12).alpha
        grid = lasso_grid_argmin(d, y, lam, step=0.005)
        assert lasso_objective(d, x, y, lam) <= lasso_objective(d, grid, y, lam) + 1e-12
        np.testing.assert_allclose(x, grid, atol=0.02)


def test_ista_monotone_and_fixpoint(rng):
    for _ in range(50):
        n, k = int(rng.integers(2, 8)), int(rng.integers(1, 10))
        d, y, lam = _random_unit_dict(rng, n, k), rng.normal(size=n), rng.uniform(0, 1)
        code = sparse_code(d, y, lam, track=True)
        hist = np.array(code.history)
        assert np.all(np.diff(hist) <= 1e-12 * max(1.0, hist[0]))
        assert fixpoint_residual(d, code, y) < 10 * 1e-8 or code.iterations == 500


def test_sparse_code_errors():
    with pytest.raises(DomainError):
        sparse_code(np.eye(2), [1, 0], -0.1)
    with pytest.raises(ShapeError):
        sparse_code(np.eye(2), [1, 0, 0], 0.1)


def test_learn_rank_one():
    u = np.array([0.6, 0.8])
    fit = learn_dictionary(np.tile(u[:, None], (1, 5)), 1, 0.0, rounds=10)
    np.testing.assert_allclose(np.abs(fit.dictionary.atoms[:, 0]), u, atol=1e-12)
    assert fit.history[-1] < 1e-12


def test_learn_exact_basis():
    fit = learn_dictionary(np.eye(2), 2, 0.0, rounds=20)
    assert fit.history[-1] < 1e-6


def test_learn_zero_rounds_is_initialization(rng):
    y = rng.normal(size=(4, 9))
    d, x = learn_dictionary(y, 3, 0.1, rounds=0, seed=5)
    fit = learn_dictionary(y, 3, 0.1, rounds=0, seed=5)
    assert len(fit.history) == 1
    assert fit.history[0] == pytest.approx(objective(d, x, y, 0.1))


def test_learn_monotone_and_unit_norm(rng):
    for _ in range(10):
        n, count, k = int(rng.integers(2, 6)), int(rng.integers(3, 25)), int(rng.integers(1, 8))
        y = rng.normal(size=(n, count))
        fit = learn_dictionary(y, k, rng.uniform(0, 0.5), rounds=15, seed=int(rng.integers(1000)))
        assert np.all(np.diff(fit.history) <= 1e-9)
        np.testing.assert_allclose(np.linalg.norm(fit.dictionary.atoms, axis=0), 1.0, atol=1e-8)


def test_learn_warns_when_underdetermined(rng):
    with pytest.warns(RuntimeWarning):
        learn_dictionary(rng.normal(size=(3, 2)), 4, 0.0, rounds=1)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        learn_dictionary(rng.normal(size=(3, 2)), 4, 0.1, rounds=1)


def test_encode_image():
    d = Dictionary(np.eye(2))
    np.testing.assert_allclose(encode_image(d, [[1.0, 0.0]], 0.0), [1.0, 0.0], atol=1e-12)
    np.testing.assert_array_equal(encode_image(d, [[0.3, -0.2], [0.1, 0.1]], 5.0), np.zeros(4))
    out = encode_image(d, [[2.0, 0.0], [0.0, 3.0]], 1.0)
    np.testing.assert_allclose(out, [1.0, 0.0, 0.0, 2.0], atol=1e-12)
    with pytest.raises(ShapeError):
        encode_image(d, [[1.0, 0.0, 0.0]], 0.1)
