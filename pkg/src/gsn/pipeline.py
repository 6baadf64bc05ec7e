"""Per-image preprocessing shared by training, evaluation and prediction.

An image becomes a :class:`PreparedImage`: its cluster subgraphs stacked into
one block-diagonal batch (canonical cluster order) plus the mean-pooled node
features used by the linear baseline.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .clustering import canonicalize, extract_subgraphs, kmeans
from .config import PipelineConfig
from .errors import ConfigError
from .gcn import SubgraphBatch, stack_subgraphs
from .imagegraph import (ImageBuffer, build_graph, extract_features, load_image,
                         slic_superpixels)
from .numerics import l2_normalize_rows


@dataclass(frozen=True)
class PreparedImage:
    batch: SubgraphBatch
    global_feature: np.ndarray
    superpixels: int


def feature_source(config: PipelineConfig, image_path) -> str:
    """Resolve ``import:<dir>`` to the per-image ``<dir>/<stem>.gsnt`` file."""
    fe = config.feature_extractor
    if fe == "handcrafted" or image_path is None:
        return fe
    root = Path(fe[len("import:"):])
    return f"import:{root / (Path(image_path).stem + '.gsnt')}"


def prepare_image(img: ImageBuffer, config: PipelineConfig, extractor: str = "handcrafted") -> PreparedImage:
    sp = slic_superpixels(img, config.superpixels, config.compactness, config.seed, config.slic_iterations)
    if sp.count < max(config.clusters, 2):
        raise ConfigError(f"image produced {sp.count} superpixels, fewer than {config.clusters} clusters")
    feats = l2_normalize_rows(extract_features(img, sp, extractor))
    k = min(config.knn_k, sp.count - 1)
    graph = build_graph(feats, sp, k)
    part = canonicalize(kmeans(feats, config.clusters, config.seed), graph.node_positions)
    batch = stack_subgraphs(extract_subgraphs(graph, part), config.mode)
    return PreparedImage(batch, feats.mean(axis=0), sp.count)


def _prepare_path(args):
    path, config = args
    return prepare_image(load_image(path), config, feature_source(config, path))


def worker_count() -> int:
    raw = os.environ.get("GSN_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"GSN_THREADS must be an integer, got {raw!r}") from None
    return n if n > 0 else (os.cpu_count() or 1)


def prepare_paths(paths, config: PipelineConfig) -> list[PreparedImage]:
    """Prepare many images; results come back in input order."""
    jobs = [(p, config) for p in paths]
    workers = min(worker_count(), len(jobs))
    if workers <= 1:
        return [_prepare_path(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_prepare_path, jobs, chunksize=4))
