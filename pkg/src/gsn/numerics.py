"""Dense linear algebra helpers, the seeded RNG and the GSNT tensor format.

Matrices are plain ``numpy.ndarray`` objects (float64, 2-D). The functions
here add the shape checks and conventions the rest of the package relies on.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .errors import DomainError, FormatError, ShapeError

JACOBI_TOL = 1e-10
JACOBI_MAX_SWEEPS = 100

GSNT_MAGIC = b"GSNT"
GSNT_VERSION = 1
_MAX_ELEMENTS = 1 << 40


def as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def matmul(a, b) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}")
    return a @ b


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenpairs of a symmetric matrix, eigenvalues ascending.

    Column ``i`` of ``eigenvectors`` belongs to ``eigenvalues[i]``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    sweeps: int = 0

    def reconstruct(self) -> np.ndarray:
        u = self.eigenvectors
        return (u * self.eigenvalues) @ u.T


def eig_symmetric(m, tol: float = JACOBI_TOL, max_sweeps: int = JACOBI_MAX_SWEEPS) -> SpectralDecomposition:
    """Cyclic Jacobi eigendecomposition of ``(m + m.T) / 2``."""
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise ShapeError(f"eigendecomposition needs a square matrix, got {m.shape[0]}x{m.shape[1]}")
    sym = np.ascontiguousarray(0.5 * (m + m.T))
    if sym.shape[0] == 0:
        return SpectralDecomposition(np.zeros(0), np.zeros((0, 0)))
    w, v, sweeps = kernels.jacobi_eigh(sym, tol, max_sweeps)
    order = np.argsort(w, kind="stable")
    return SpectralDecomposition(w[order], np.ascontiguousarray(v[:, order]), sweeps)


def soft_threshold(x, t: float) -> np.ndarray:
    if t < 0:
        raise DomainError(f"threshold must be nonnegative, got {t}")
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def cosine_similarity(u, v) -> float:
    """Cosine of the angle between ``u`` and ``v``; 0 if either is all zeros."""
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise ShapeError(f"vector lengths differ: {u.size} vs {v.size}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def cosine_matrix(features) -> np.ndarray:
    """Pairwise cosine similarities of the rows of ``features``."""
    f = as_matrix(features)
    norms = np.linalg.norm(f, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    unit = f / safe[:, None]
    unit[norms == 0] = 0.0
    return np.clip(unit @ unit.T, -1.0, 1.0)


def l2_normalize_rows(features) -> np.ndarray:
    f = as_matrix(features)
    norms = np.linalg.norm(f, axis=1, keepdims=True)
    return f / np.where(norms > 0, norms, 1.0)


class SeededRng:
    """Deterministic generator built on numpy's Philox counter-based bit generator.

    Philox output depends only on (seed, counter), so streams are identical
    across platforms and numpy releases. Not safe to share between threads;
    use :meth:`spawn` to derive independent generators.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._gen = np.random.Generator(np.random.Philox(self.seed))

    def spawn(self, stream: int) -> "SeededRng":
        mixed = (self.seed * 0x9E3779B97F4A7C15 + int(stream) + 1) & 0xFFFFFFFFFFFFFFFF
        return SeededRng(mixed)

    def random(self, size=None):
        return self._gen.random(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def permutation(self, n):
        return self._gen.permutation(n)

    def choice(self, n, size=None, replace=True, p=None):
        return self._gen.choice(n, size=size, replace=replace, p=p)


# -- GSNT v1 tensor files ---------------------------------------------------

def encode_tensor(dims, data) -> bytes:
    dims = [int(d) for d in dims]
    if any(d < 0 for d in dims):
        raise ShapeError(f"negative dimension in {dims}")
    flat = np.asarray(data, dtype=np.float64).ravel()
    count = int(np.prod(dims, dtype=np.int64)) if dims else 1
    if flat.size != count:
        raise ShapeError(f"data has {flat.size} values but dims {dims} need {count}")
    head = GSNT_MAGIC + struct.pack("<II", GSNT_VERSION, len(dims))
    head += struct.pack(f"<{len(dims)}Q", *dims)
    return head + flat.astype("<f4").tobytes()


def decode_tensor(buf: bytes, offset: int = 0, exact: bool = True):
    """Parse one GSNT block starting at ``offset``.

    Returns ``(dims, data, end_offset)`` with data as a float64 array shaped
    ``dims``. With ``exact`` the block must end at the end of ``buf``.
    """
    view = memoryview(buf)
    if len(view) - offset < 12:
        raise FormatError(f"truncated header at byte {offset}")
    if bytes(view[offset:offset + 4]) != GSNT_MAGIC:
        raise FormatError(f"bad magic {bytes(view[offset:offset + 4])!r} at byte {offset}")
    version, ndim = struct.unpack_from("<II", view, offset + 4)
    if version != GSNT_VERSION:
        raise FormatError(f"unsupported version {version} at byte {offset + 4}")
    pos = offset + 12
    if len(view) - pos < 8 * ndim:
        raise FormatError(f"truncated dimension list at byte {pos}")
    dims = list(struct.unpack_from(f"<{ndim}Q", view, pos))
    count = 1
    for i, d in enumerate(dims):
        count *= d
        if count > _MAX_ELEMENTS:
            raise FormatError(f"dimension overflow at byte {pos + 8 * i}")
    pos += 8 * ndim
    end = pos + 4 * count
    if end > len(view):
        raise FormatError(f"truncated payload at byte {len(view)}: need {end - pos} bytes from byte {pos}")
    if exact and end != len(view):
        raise FormatError(f"{len(view) - end} trailing bytes at byte {end}")
    data = np.frombuffer(view[pos:end], dtype="<f4").astype(np.float64).reshape(dims)
    return dims, data, end


def tensor_write(path, dims, data) -> None:
    Path(path).write_bytes(encode_tensor(dims, data))


def tensor_read(path):
    """Read a GSNT file; returns ``(dims, data)`` with data shaped ``dims``."""
    dims, data, _ = decode_tensor(Path(path).read_bytes())
    return dims, data


def to_float32_precision(a) -> np.ndarray:
    """Round values to what a GSNT round trip would give back."""
    return np.asarray(a, dtype=np.float64).astype(np.float32).astype(np.float64)
