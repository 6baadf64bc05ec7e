"""Image -> superpixel graph.

Pipeline: :func:`load_image` -> :func:`slic_superpixels` ->
:func:`extract_features` -> :func:`build_graph` -> :func:`graph_operators`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from . import kernels
from .errors import ConfigError, FormatError, ShapeError
from .numerics import SpectralDecomposition, as_matrix, cosine_matrix, eig_symmetric, tensor_read

SLIC_ITERATIONS = 10
DEFAULT_COMPACTNESS = 10.0
REPAIR_MIN_WEIGHT = 1e-3
HANDCRAFTED_DIM = 37


@dataclass(frozen=True)
class ImageBuffer:
    pixels: np.ndarray  # (height, width, 3), values in [0, 1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class SuperpixelMap:
    labels: np.ndarray  # (height, width) int64, ids 0..count-1
    count: int
    sizes: np.ndarray  # pixels per superpixel
    centroids: np.ndarray  # (count, 2) mean (row, col)


@dataclass(frozen=True)
class Graph:
    node_features: np.ndarray
    edges: tuple  # sorted ((i, j, weight), ...) with i < j
    node_positions: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.node_features.shape[0]

    def adjacency(self) -> np.ndarray:
        n = self.num_nodes
        a = np.zeros((n, n))
        for i, j, w in self.edges:
            a[i, j] = a[j, i] = w
        return a


@dataclass(frozen=True)
class GraphOperators:
    adjacency: np.ndarray
    degree: np.ndarray
    laplacian: np.ndarray
    propagation: np.ndarray
    decomposition: SpectralDecomposition | None = field(default=None, compare=False)

    def with_spectrum(self) -> "GraphOperators":
        if self.decomposition is not None:
            return self
        return replace(self, decomposition=eig_symmetric(self.laplacian))


# -- images -----------------------------------------------------------------

def load_image(path) -> ImageBuffer:
    """Read a PNG or binary PPM file into an RGB buffer scaled to [0, 1]."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            if im.format not in ("PNG", "PPM"):
                raise FormatError(f"{path}: unsupported image format {im.format}")
            im.load()
            if im.mode in ("I;16", "I;16B", "I"):
                arr = np.asarray(im, dtype=np.float64) / 65535.0
                arr = np.repeat(arr[..., None], 3, axis=2)
            else:
                arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    except FileNotFoundError:
        raise
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise FormatError(f"{path}: cannot decode image ({exc})") from exc
    return ImageBuffer(np.ascontiguousarray(np.clip(arr, 0.0, 1.0)))


def rgb_to_lab(rgb: np.ndarray) -> np.ndarray:
    """sRGB in [0, 1] to CIELAB (D65 white)."""
    lin = np.where(rgb <= 0.04045, rgb / 12.92, ((rgb + 0.055) / 1.055) ** 2.4)
    m = np.array([[0.4124564, 0.3575761, 0.1804375],
                  [0.2126729, 0.7151522, 0.0721750],
                  [0.0193339, 0.1191920, 0.9503041]])
    xyz = lin @ m.T / np.array([0.95047, 1.0, 1.08883])
    eps, kappa = 216 / 24389, 24389 / 27
    f = np.where(xyz > eps, np.cbrt(xyz), (kappa * xyz + 16) / 116)
    lab = np.empty_like(f)
    lab[..., 0] = 116 * f[..., 1] - 16
    lab[..., 1] = 500 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200 * (f[..., 1] - f[..., 2])
    return lab


# -- superpixels ------------------------------------------------------------

def _grid_centers(h, w, target):
    ny = min(h, max(1, round(math.sqrt(target * h / w))))
    nx = min(w, max(1, round(target / ny)))
    ys = (np.arange(ny) + 0.5) * h / ny
    xs = (np.arange(nx) + 0.5) * w / nx
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return np.column_stack([yy.ravel(), xx.ravel()]), math.sqrt(h * w / (ny * nx))


def _perturb_to_low_gradient(lab, positions):
    """Move each seed to the lowest-gradient pixel of its 3x3 neighbourhood."""
    h, w = lab.shape[:2]
    grad = np.zeros((h, w))
    grad[1:-1, :] += np.sum((lab[2:, :] - lab[:-2, :]) ** 2, axis=-1)
    grad[:, 1:-1] += np.sum((lab[:, 2:] - lab[:, :-2]) ** 2, axis=-1)
    out = positions.copy()
    for n, (cy, cx) in enumerate(positions):
        y, x = int(cy), int(cx)
        best = grad[y, x]
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                yy, xx = y + dy, x + dx
                if 0 <= yy < h and 0 <= xx < w and grad[yy, xx] < best:
                    best = grad[yy, xx]
                    out[n] = (yy + cy - y, xx + cx - x)
    return out


def _pair_edges(labels):
    """Unique unordered label pairs of 4-adjacent pixels with different labels."""
    pairs = [np.stack([labels[:, :-1].ravel(), labels[:, 1:].ravel()], axis=1),
             np.stack([labels[:-1, :].ravel(), labels[1:, :].ravel()], axis=1)]
    p = np.concatenate(pairs)
    p = p[p[:, 0] != p[:, 1]]
    p.sort(axis=1)
    return np.unique(p, axis=0)


def _enforce_connectivity(labels, lab):
    """Merge stray fragments so every label is one 4-connected region."""
    comp, ncomp = kernels.label_components(np.ascontiguousarray(labels, dtype=np.int64))
    flat = comp.ravel()
    sizes = np.bincount(flat, minlength=ncomp)
    color_sums = np.stack([np.bincount(flat, lab[..., c].ravel(), ncomp) for c in range(3)], axis=1)
    owner = np.zeros(ncomp, dtype=np.int64)
    owner[flat] = labels.ravel()
    # largest fragment of each original label keeps it; ties -> lowest fragment id
    order = np.lexsort((np.arange(ncomp), -sizes, owner))
    is_main = np.zeros(ncomp, dtype=bool)
    is_main[order[np.r_[True, owner[order][1:] != owner[order][:-1]]]] = True
    if is_main.all():
        return comp

    neighbours = [[] for _ in range(ncomp)]
    for a, b in _pair_edges(comp):
        neighbours[a].append(b)
        neighbours[b].append(a)
    parent = np.arange(ncomp)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    has_main = is_main.copy()
    set_size = sizes.astype(np.float64)
    set_color = color_sums.copy()
    for o in sorted(np.flatnonzero(~is_main), key=lambda i: (sizes[i], i)):
        root = find(o)
        if has_main[root]:
            continue
        mine = set_color[root] / set_size[root]
        best, best_d = None, math.inf
        for nb in neighbours[o]:
            r = find(nb)
            if r == root:
                continue
            d = float(np.sum((set_color[r] / set_size[r] - mine) ** 2))
            if d < best_d or (d == best_d and r < best):
                best, best_d = r, d
        if best is None:
            continue
        parent[root] = best
        set_size[best] += set_size[root]
        set_color[best] += set_color[root]
        has_main[best] |= has_main[root]
    roots = np.array([find(i) for i in range(ncomp)])
    return roots[comp]


def _relabel(labels):
    """Contiguous ids in order of first appearance in scanline order."""
    flat = labels.ravel()
    _, first = np.unique(flat, return_index=True)
    ids_in_order = flat[np.sort(first)]
    lut = {int(v): i for i, v in enumerate(ids_in_order)}
    mapping = np.vectorize(lut.__getitem__, otypes=[np.int64])
    return mapping(labels), len(ids_in_order)


def make_superpixel_map(labels) -> SuperpixelMap:
    labels = np.asarray(labels, dtype=np.int64)
    count = int(labels.max()) + 1
    flat = labels.ravel()
    sizes = np.bincount(flat, minlength=count)
    if np.any(sizes == 0):
        raise ShapeError("superpixel ids must be contiguous and non-empty")
    rows, cols = np.indices(labels.shape)
    centroids = np.column_stack([np.bincount(flat, rows.ravel(), count),
                                 np.bincount(flat, cols.ravel(), count)]) / sizes[:, None]
    return SuperpixelMap(labels, count, sizes, centroids)


def slic_superpixels(img: ImageBuffer, target_count: int, compactness: float = DEFAULT_COMPACTNESS,
                     seed: int = 0, iterations: int = SLIC_ITERATIONS) -> SuperpixelMap:
    """SLIC over-segmentation in CIELAB with a 4-connectivity post-pass.

    Seeding is a regular grid, so the result is deterministic; ``seed`` is
    accepted so callers can pass one uniformly across pipeline stages.
    """
    h, w = img.height, img.width
    if not 1 <= target_count <= (w * h) // 4:
        raise ConfigError(f"target_count {target_count} outside [1, {(w * h) // 4}] for a {w}x{h} image")
    lab = np.ascontiguousarray(rgb_to_lab(img.pixels))
    positions, step = _grid_centers(h, w, target_count)
    positions = _perturb_to_low_gradient(lab, positions)
    idx = positions.astype(np.int64)
    centers = np.column_stack([lab[idx[:, 0], idx[:, 1]], positions])
    rows, cols = np.indices((h, w))
    feat = np.concatenate([lab, rows[..., None], cols[..., None]], axis=-1).reshape(-1, 5)
    labels = None
    for _ in range(max(1, iterations)):
        labels, _ = kernels.slic_assign(lab, np.ascontiguousarray(centers), float(step), float(compactness))
        missing = labels < 0
        if missing.any():
            pts = feat[missing.ravel()]
            weight = (compactness / step) ** 2
            d = (np.sum((pts[:, None, :3] - centers[None, :, :3]) ** 2, axis=-1)
                 + np.sum((pts[:, None, 3:] - centers[None, :, 3:]) ** 2, axis=-1) * weight)
            labels[missing] = np.argmin(d, axis=1)
        flat = labels.ravel()
        counts = np.bincount(flat, minlength=len(centers))
        sums = np.stack([np.bincount(flat, feat[:, c], len(centers)) for c in range(5)], axis=1)
        live = counts > 0
        centers[live] = sums[live] / counts[live, None]
    labels = _enforce_connectivity(labels, lab)
    labels, _ = _relabel(labels)
    return make_superpixel_map(labels)


# -- node features ----------------------------------------------------------

def _handcrafted(img: ImageBuffer, sp: SuperpixelMap) -> np.ndarray:
    px = img.pixels
    flat = sp.labels.ravel()
    s = sp.count
    n = sp.sizes.astype(np.float64)
    out = np.zeros((s, HANDCRAFTED_DIM))
    for c in range(3):
        chan = px[..., c].ravel()
        out[:, c] = np.bincount(flat, chan, s) / n
        bins = np.minimum((chan * 8).astype(np.int64), 7)
        out[:, 3 + 8 * c:11 + 8 * c] = np.bincount(flat * 8 + bins, minlength=8 * s).reshape(s, 8) / n[:, None]
    gray = px @ np.array([0.299, 0.587, 0.114])
    gy, gx = np.gradient(gray) if min(gray.shape) > 1 else (np.zeros_like(gray), np.zeros_like(gray))
    mag = np.hypot(gx, gy).ravel()
    theta = np.mod(np.arctan2(gy, gx), np.pi).ravel()
    obins = np.minimum((theta / np.pi * 8).astype(np.int64), 7)
    out[:, 27:35] = np.bincount(flat * 8 + obins, mag, 8 * s).reshape(s, 8) / n[:, None]
    out[:, 35] = (sp.centroids[:, 0] + 0.5) / img.height
    out[:, 36] = (sp.centroids[:, 1] + 0.5) / img.width
    return out


def extract_features(img: ImageBuffer, sp: SuperpixelMap, extractor: str = "handcrafted") -> np.ndarray:
    """Per-superpixel descriptors, one row per superpixel id.

    ``"handcrafted"`` gives 37 columns: mean RGB, an 8-bin histogram per
    channel, a magnitude-weighted 8-bin gradient orientation histogram and
    the centroid as fractions of image height/width. ``"import:<file>"``
    loads a GSNT tensor of shape ``[S, F]`` instead.
    """
    if extractor == "handcrafted":
        return _handcrafted(img, sp)
    if extractor.startswith("import:"):
        dims, data = tensor_read(extractor[len("import:"):])
        if len(dims) != 2:
            raise ShapeError(f"imported features must be 2-D, got dims {dims}")
        if dims[0] != sp.count:
            raise ShapeError(f"imported features have {dims[0]} rows but the image has {sp.count} superpixels")
        return np.array(data, dtype=np.float64)
    raise ConfigError(f"unknown feature extractor {extractor!r}")


# -- graphs -----------------------------------------------------------------

def region_adjacency(sp: SuperpixelMap) -> list[tuple[int, int]]:
    return [(int(a), int(b)) for a, b in _pair_edges(sp.labels)]


def _components(n, edges):
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j, w in edges:
        if w > 0:
            parent[find(i)] = find(j)
    return [find(i) for i in range(n)]


def build_graph_from(features, adjacency_pairs, positions, k: int) -> Graph:
    """Region-adjacency edges (weight 1) united with cosine KNN edges."""
    f = as_matrix(features)
    n = f.shape[0]
    if n < 2:
        raise ConfigError(f"graph construction needs at least 2 nodes, got {n}")
    if not 1 <= k < n:
        raise ConfigError(f"knn k must satisfy 1 <= k < {n}, got {k}")
    cos = cosine_matrix(f)
    weights: dict[tuple[int, int], float] = {}
    for i in range(n):
        others = [j for j in range(n) if j != i]
        # most similar first, ties by lower node id
        ranked = sorted(others, key=lambda j: (-cos[i, j], j))[:k]
        for j in ranked:
            key = (min(i, j), max(i, j))
            weights[key] = max(float(cos[i, j]), 0.0)
    for a, b in adjacency_pairs:
        if a != b:
            weights[(min(a, b), max(a, b))] = 1.0
    while True:
        edges = [(i, j, w) for (i, j), w in weights.items()]
        comp = np.array(_components(n, edges))
        if np.all(comp == comp[0]):
            break
        cross = comp[:, None] != comp[None, :]
        masked = np.where(cross, cos, -np.inf)
        flat = int(np.argmax(masked))  # first maximum -> lowest (i, j)
        i, j = divmod(flat, n)
        weights[(min(i, j), max(i, j))] = max(float(cos[i, j]), REPAIR_MIN_WEIGHT)
    edges = tuple(sorted((i, j, w) for (i, j), w in weights.items()))
    pos = np.zeros((n, 2)) if positions is None else np.asarray(positions, dtype=np.float64)
    return Graph(f.copy(), edges, pos)


def build_graph(features, sp: SuperpixelMap | None, k: int) -> Graph:
    f = as_matrix(features)
    if sp is None:
        return build_graph_from(f, [], None, k)
    if f.shape[0] != sp.count:
        raise ShapeError(f"{f.shape[0]} feature rows for {sp.count} superpixels")
    return build_graph_from(f, region_adjacency(sp), sp.centroids, k)


def operators_from_adjacency(a) -> GraphOperators:
    a = as_matrix(a)
    deg = a.sum(axis=1)
    lap = np.diag(deg) - a
    a_hat = a + np.eye(a.shape[0])
    d_tilde = a_hat.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(d_tilde)
    prop = inv_sqrt[:, None] * a_hat * inv_sqrt[None, :]
    return GraphOperators(a, np.diag(deg), lap, prop)


def graph_operators(g: Graph) -> GraphOperators:
    """Adjacency, degree, Laplacian ``L = D - A`` and the renormalized propagation matrix."""
    return operators_from_adjacency(g.adjacency())
