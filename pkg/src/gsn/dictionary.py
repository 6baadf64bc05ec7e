"""Dictionary assembly, l1 sparse coding (ISTA) and alternating dictionary learning.

Two objectives appear here and are kept apart on purpose:

* the lasso form ``0.5 * ||y - D x||^2 + lam * ||x||_1`` is what
  :func:`sparse_code` minimizes, one signal at a time;
* the dictionary-learning form ``||Y - D X||_F^2 + lam * ||X||_1`` is what
  :func:`objective` reports and what :func:`learn_dictionary` descends.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, ShapeError
from .numerics import SeededRng, as_matrix, soft_threshold

POWER_ITERATIONS = 50
_POWER_SEED = 0x5EED


@dataclass(frozen=True)
class Dictionary:
    atoms: np.ndarray  # (n, k_atoms), unit-norm columns
    replaced: tuple = ()  # indices of zero atoms swapped for e1

    @property
    def n(self) -> int:
        return self.atoms.shape[0]

    @property
    def k_atoms(self) -> int:
        return self.atoms.shape[1]


@dataclass(frozen=True)
class SparseCode:
    alpha: np.ndarray
    lam: float
    step: float
    iterations: int
    history: tuple = ()  # lasso objective at start and after every iteration


def _normalize_columns(d):
    norms = np.linalg.norm(d, axis=0)
    zero = norms == 0
    out = d / np.where(zero, 1.0, norms)
    return out, zero


def assemble_dictionary(atoms) -> Dictionary:
    """Stack atoms as unit-norm columns; all-zero atoms become ``e1``."""
    atoms = [np.asarray(a, dtype=np.float64).ravel() for a in atoms]
    if not atoms:
        raise ConfigError("cannot assemble a dictionary from zero atoms")
    n = atoms[0].size
    if any(a.size != n for a in atoms):
        raise ShapeError(f"atoms have mixed lengths {sorted({a.size for a in atoms})}")
    d, zero = _normalize_columns(np.column_stack(atoms))
    replaced = tuple(int(i) for i in np.flatnonzero(zero))
    if replaced:
        d[:, replaced] = 0.0
        d[0, replaced] = 1.0
        warnings.warn(f"zero atoms {list(replaced)} replaced by e1", RuntimeWarning, stacklevel=2)
    return Dictionary(d, replaced)


def _atoms_of(d) -> np.ndarray:
    return d.atoms if isinstance(d, Dictionary) else as_matrix(d)


def objective(d, x, y, lam: float) -> float:
    """``||Y - D X||_F^2 + lam * sum|X|`` with ``X`` of shape (k_atoms, N)."""
    dm = _atoms_of(d)
    x, y = as_matrix(x), as_matrix(y)
    if dm.shape[1] != x.shape[0] or dm.shape[0] != y.shape[0] or x.shape[1] != y.shape[1]:
        raise ShapeError(f"shapes do not conform: D {dm.shape}, X {x.shape}, Y {y.shape}")
    r = y - dm @ x
    return float(np.sum(r * r) + lam * np.sum(np.abs(x)))


def lasso_objective(d, x, y, lam: float) -> float:
    dm = _atoms_of(d)
    r = np.asarray(y, dtype=np.float64) - dm @ np.asarray(x, dtype=np.float64)
    return float(0.5 * np.sum(r * r) + lam * np.sum(np.abs(x)))


def spectral_norm_sq(d) -> float:
    """Largest eigenvalue of ``D^T D`` by power iteration (fixed start vector)."""
    dm = _atoms_of(d)
    gram = dm.T @ dm
    v = SeededRng(_POWER_SEED).normal(size=gram.shape[0])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(POWER_ITERATIONS):
        w = gram @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        est = float(v @ gram @ v)
    return est


def _ista(dm, y, lam, x0, max_iters, tol, track):
    """ISTA on every column of ``y`` at once; returns (X, step, iterations, history)."""
    big_l = spectral_norm_sq(dm)
    if big_l == 0.0:
        x = np.zeros((dm.shape[1], y.shape[1]))
        return x, 0.0, 0, ()
    eta = 1.0 / big_l
    x = np.zeros((dm.shape[1], y.shape[1])) if x0 is None else np.array(x0, dtype=np.float64)
    history = [lasso_objective(dm, x, y, lam)] if track else []
    it = 0
    for it in range(1, max_iters + 1):
        x_new = soft_threshold(x + eta * (dm.T @ (y - dm @ x)), eta * lam)
        delta = np.max(np.abs(x_new - x)) if x.size else 0.0
        x = x_new
        if track:
            history.append(lasso_objective(dm, x, y, lam))
        if delta < tol:
            break
    return x, eta, it, tuple(history)


def sparse_code(d, y, lam: float, max_iters: int = 500, tol: float = 1e-8, x0=None,
                track: bool = False) -> SparseCode:
    """ISTA for ``min_x 0.5 ||y - D x||^2 + lam ||x||_1``.

    Step size is ``1 / sigma_max(D^T D)`` from power iteration. Iteration
    stops once the largest coordinate change falls under ``tol``.
    """
    if lam < 0:
        raise DomainError(f"lambda must be nonnegative, got {lam}")
    dm = _atoms_of(d)
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.size != dm.shape[0]:
        raise ShapeError(f"signal length {y.size} != dictionary rows {dm.shape[0]}")
    start = None if x0 is None else np.asarray(x0, dtype=np.float64).reshape(-1, 1)
    x, eta, it, hist = _ista(dm, y[:, None], lam, start, max_iters, tol, track)
    return SparseCode(x[:, 0], float(lam), eta, it, hist)


def fixpoint_residual(d, code: SparseCode, y) -> float:
    dm = _atoms_of(d)
    x = code.alpha
    step = code.step if code.step > 0 else 1.0 / max(spectral_norm_sq(dm), 1e-300)
    nxt = soft_threshold(x + step * (dm.T @ (np.asarray(y, dtype=np.float64) - dm @ x)), step * code.lam)
    return float(np.max(np.abs(nxt - x))) if x.size else 0.0


@dataclass(frozen=True)
class DictionaryFit:
    dictionary: Dictionary
    codes: np.ndarray
    history: tuple  # objective() after initialisation and after every round

    def __iter__(self):
        return iter((self.dictionary, self.codes))


def _dictionary_step(dm, x, y, lam):
    """Projected gradient step on the reconstruction term, backtracking until no increase."""
    before = objective(dm, x, y, lam)
    gram = x @ x.T
    lip = float(np.linalg.eigvalsh(gram)[-1]) if gram.size else 0.0
    if lip <= 0.0:
        return dm
    grad = (dm @ x - y) @ x.T
    step = 1.0 / lip
    for _ in range(30):
        cand, zero = _normalize_columns(dm - step * grad)
        cand[:, zero] = dm[:, zero]
        if objective(cand, x, y, lam) <= before:
            return cand
        step *= 0.5
    return dm


def learn_dictionary(y, k_atoms: int, lam: float, rounds: int = 20, seed: int = 0,
                     max_iters: int = 500, tol: float = 1e-8) -> DictionaryFit:
    """Alternating minimization of ``||Y - D X||_F^2 + lam ||X||_1`` with unit-norm atoms.

    Starts from ``k_atoms`` randomly chosen (normalized) columns of ``Y``.
    Each round takes one projected gradient step on ``D`` and then re-codes
    ``Y`` with ISTA warm-started from the previous codes; both halves are
    monotone, so the objective never increases across rounds. Coding uses
    ``lam / 2`` in the lasso form, which is the same problem as ``lam`` in
    the Frobenius form.
    """
    y = as_matrix(y)
    n, count = y.shape
    if k_atoms < 1 or count < 1:
        raise ConfigError(f"need k_atoms >= 1 and at least one signal, got {k_atoms}, {count}")
    if lam < 0:
        raise DomainError(f"lambda must be nonnegative, got {lam}")
    if k_atoms > count and lam == 0:
        warnings.warn("more atoms than signals with lambda = 0: underdetermined", RuntimeWarning, stacklevel=2)
    rng = SeededRng(seed)
    cols = rng.choice(count, size=k_atoms, replace=k_atoms > count)
    init = y[:, cols].copy()
    dm, zero = _normalize_columns(init)
    if zero.any():
        # all-zero signal columns give no direction; fall back to random unit vectors
        fill = rng.normal(size=(n, int(zero.sum())))
        dm[:, zero] = fill / np.linalg.norm(fill, axis=0)
    x, _, _, _ = _ista(dm, y, lam / 2, None, max_iters, tol, False)
    history = [objective(dm, x, y, lam)]
    for _ in range(rounds):
        dm = _dictionary_step(dm, x, y, lam)
        x, _, _, _ = _ista(dm, y, lam / 2, x, max_iters, tol, False)
        history.append(objective(dm, x, y, lam))
    return DictionaryFit(Dictionary(dm), x, tuple(history))


def encode_image(d: Dictionary, atoms, lam: float, max_iters: int = 500, tol: float = 1e-8) -> np.ndarray:
    """Concatenated sparse codes of an image's atoms, in the given (canonical) order."""
    parts = []
    for a in atoms:
        a = np.asarray(a, dtype=np.float64).ravel()
        if a.size != d.n:
            raise ShapeError(f"atom length {a.size} != dictionary rows {d.n}")
        parts.append(sparse_code(d, a, lam, max_iters, tol).alpha)
    return np.concatenate(parts) if parts else np.zeros(0)
