"""Builders for small random graphs, subgraph batches and models."""
import numpy as np

from gsn.classify import GsnModel, init_classifier
from gsn.clustering import ClusterPartition, canonicalize, extract_subgraphs
from gsn.config import PipelineConfig
from gsn.dictionary import Dictionary
from gsn.gcn import init_encoder, stack_subgraphs
from gsn.imagegraph import Graph
from gsn.numerics import SeededRng
from gsn.pipeline import PreparedImage

from conftest import random_connected_adjacency


def random_graph(rng, n, f):
    a = random_connected_adjacency(rng, n) if n > 1 else np.zeros((1, 1))
    edges = tuple((i, j, float(a[i, j])) for i in range(n) for j in range(i + 1, n) if a[i, j] > 0)
    return Graph(rng.normal(size=(n, f)), edges, rng.uniform(0, 10, (n, 2)))


def random_prepared(rng, n_nodes, f, clusters, mode="renormalized"):
    g = random_graph(rng, n_nodes, f)
    assign = np.concatenate([np.arange(clusters), rng.integers(0, clusters, n_nodes - clusters)])
    part = canonicalize(ClusterPartition(assign, np.zeros((clusters, f))), g.node_positions)
    batch = stack_subgraphs(extract_subgraphs(g, part), mode)
    return PreparedImage(batch, g.node_features.mean(axis=0), n_nodes)


def random_model(rng, f, widths, clusters, classes, mode="renormalized", readout="mean",
                 use_codes=False, atoms=3, lam=0.05):
    config = PipelineConfig(clusters=clusters, gcn_widths=widths, mode=mode, readout=readout,
                            use_sparse_codes=use_codes, atoms=atoms, lam=lam)
    seed = int(rng.integers(1 << 31))
    enc = init_encoder(f, widths, SeededRng(seed), mode, readout)
    for layer in enc.layers:
        layer.bias[:] = rng.normal(scale=0.3, size=layer.bias.shape)
    d = rng.normal(size=(widths[-1], atoms))
    d /= np.linalg.norm(d, axis=0)
    clf = init_classifier(config.feature_length(), classes, SeededRng(seed + 1))
    clf.bias[:] = rng.normal(scale=0.3, size=classes)
    return GsnModel(config, enc, Dictionary(d), clf, [f"c{i}" for i in range(classes)])
