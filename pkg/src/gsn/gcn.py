"""Graph convolution layers, atom readout and reverse-mode gradients.

Row convention throughout: node features are rows, so a layer computes
``act(P @ H @ W + b)`` where ``P`` is the propagation matrix of the chosen
mode (``U diag(lam) U^T`` for ``"spectral"``, the renormalized adjacency for
``"renormalized"``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clustering import Subgraph
from .errors import ConfigError, ShapeError, StateError
from .imagegraph import GraphOperators
from .numerics import SeededRng, as_matrix

MODES = ("spectral", "renormalized")
READOUTS = ("mean", "sum", "max")
ACTIVATIONS = ("relu", "identity")


@dataclass
class GcnLayer:
    weight: np.ndarray
    bias: np.ndarray
    activation: str = "relu"
    mode: str = "renormalized"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown GCN mode {self.mode!r}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        self.weight = as_matrix(self.weight)
        self.bias = np.asarray(self.bias, dtype=np.float64).ravel()
        if self.bias.shape[0] != self.weight.shape[1]:
            raise ShapeError(f"bias length {self.bias.shape[0]} != layer width {self.weight.shape[1]}")

    @property
    def shape(self):
        return self.weight.shape


@dataclass
class AtomEncoder:
    layers: list
    readout: str = "mean"

    def __post_init__(self):
        if self.readout not in READOUTS:
            raise ConfigError(f"unknown readout {self.readout!r}")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.weight.shape[1] != b.weight.shape[0]:
                raise ShapeError(f"layer widths {a.weight.shape} and {b.weight.shape} do not chain")

    @property
    def in_dim(self) -> int:
        return self.layers[0].weight.shape[0]

    @property
    def atom_dim(self) -> int:
        return self.layers[-1].weight.shape[1]

    @property
    def mode(self) -> str:
        return self.layers[0].mode

    def parameters(self) -> dict:
        out = {}
        for i, layer in enumerate(self.layers):
            out[f"gcn.layer{i}.W"] = layer.weight
            out[f"gcn.layer{i}.b"] = layer.bias
        return out


def init_encoder(in_dim: int, widths, rng: SeededRng, mode: str = "renormalized",
                 readout: str = "mean") -> AtomEncoder:
    """Glorot-uniform weights, zero biases, relu between layers, identity last."""
    dims = [in_dim, *widths]
    layers = []
    for i, (fin, fout) in enumerate(zip(dims, dims[1:])):
        bound = np.sqrt(6.0 / (fin + fout))
        act = "identity" if i == len(widths) - 1 else "relu"
        layers.append(GcnLayer(rng.uniform(-bound, bound, (fin, fout)), np.zeros(fout), act, mode))
    return AtomEncoder(layers, readout)


def _activate(z, activation):
    return np.maximum(z, 0.0) if activation == "relu" else z


def propagation_matrix(operators: GraphOperators, mode: str) -> np.ndarray:
    if mode == "renormalized":
        return operators.propagation
    if mode == "spectral":
        dec = operators.decomposition
        if dec is None:
            raise StateError("spectral mode needs operators with a stored eigendecomposition")
        return dec.reconstruct()
    raise ConfigError(f"unknown GCN mode {mode!r}")


def gcn_forward(layer: GcnLayer, operators: GraphOperators, h) -> np.ndarray:
    h = as_matrix(h)
    if h.shape[1] != layer.weight.shape[0]:
        raise ShapeError(f"features have {h.shape[1]} columns, layer expects {layer.weight.shape[0]}")
    p = propagation_matrix(operators, layer.mode)
    if p.shape[0] != h.shape[0]:
        raise ShapeError(f"{h.shape[0]} feature rows for a {p.shape[0]}-node graph")
    return _activate(p @ h @ layer.weight + layer.bias, layer.activation)


def message_passing_step(operators: GraphOperators, h, weight, bias, aggregate: str = "sum",
                         activation: str = "relu") -> np.ndarray:
    """Generic neighbourhood update ``act([h_v, m_v] @ W + b)``.

    ``m_v`` aggregates ``A[u, v] * h_u`` over neighbours ``u`` (nonzero
    adjacency) by sum, mean or elementwise max; isolated nodes get zeros.
    ``weight`` has ``2 * F_in`` rows.
    """
    h = as_matrix(h)
    a = operators.adjacency
    if h.shape[0] != a.shape[0]:
        raise ShapeError(f"{h.shape[0]} feature rows for a {a.shape[0]}-node graph")
    weight = as_matrix(weight)
    if weight.shape[0] != 2 * h.shape[1]:
        raise ShapeError(f"weight has {weight.shape[0]} rows, expected {2 * h.shape[1]}")
    nbr = a != 0
    deg = nbr.sum(axis=1)
    if aggregate == "sum":
        m = a @ h
    elif aggregate == "mean":
        m = (a @ h) / np.maximum(deg, 1)[:, None]
    elif aggregate == "max":
        m = np.zeros_like(h)
        for v in range(h.shape[0]):
            us = np.flatnonzero(nbr[v])
            if us.size:
                m[v] = np.max(a[v, us, None] * h[us], axis=0)
    else:
        raise ConfigError(f"unknown aggregation {aggregate!r}")
    return _activate(np.hstack([h, m]) @ weight + np.asarray(bias, dtype=np.float64), activation)


# -- batched atom encoding with a gradient tape -------------------------------

@dataclass(frozen=True)
class SubgraphBatch:
    """Several subgraphs stacked into one block-diagonal propagation matrix.

    ``segments[i]`` is the position (within the batch) of the subgraph that
    node ``i`` belongs to.
    """

    propagation: np.ndarray
    features: np.ndarray
    segments: np.ndarray
    count: int

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.segments, minlength=self.count)


def stack_subgraphs(subgraphs, mode: str = "renormalized") -> SubgraphBatch:
    if not subgraphs:
        raise ShapeError("cannot stack an empty list of subgraphs")
    n = sum(sg.num_nodes for sg in subgraphs)
    p = np.zeros((n, n))
    segs = np.empty(n, dtype=np.int64)
    start = 0
    for k, sg in enumerate(subgraphs):
        ops = sg.operators.with_spectrum() if mode == "spectral" else sg.operators
        m = sg.num_nodes
        p[start:start + m, start:start + m] = propagation_matrix(ops, mode)
        segs[start:start + m] = k
        start += m
    feats = np.vstack([sg.node_features for sg in subgraphs])
    return SubgraphBatch(p, feats, segs, len(subgraphs))


class Tape:
    """Records backward closures during a forward pass.

    Each closure maps the gradient of its output to the gradient of its
    input and adds parameter gradients into the dict it is given.
    """

    def __init__(self):
        self._ops = []

    def record(self, fn):
        self._ops.append(fn)

    def __len__(self):
        return len(self._ops)


class GradientBundle(dict):
    """Parameter name -> gradient array."""

    def add(self, name, g):
        if name in self:
            self[name] = self[name] + g
        else:
            self[name] = np.array(g, dtype=np.float64)

    def scaled(self, factor: float) -> "GradientBundle":
        return GradientBundle({k: v * factor for k, v in self.items()})

    def merged(self, other: "GradientBundle") -> "GradientBundle":
        out = GradientBundle(self)
        for k, v in other.items():
            out.add(k, v)
        return out


def backward(tape: Tape, grad_output=1.0) -> GradientBundle:
    """Run the recorded closures in reverse and collect parameter gradients."""
    if tape is None or len(tape) == 0:
        raise StateError("backward called before any forward pass was recorded")
    grads = GradientBundle()
    g = grad_output
    for fn in reversed(tape._ops):
        g = fn(g, grads)
    return grads


def layer_forward(layer: GcnLayer, p, h, name: str, tape: Tape | None = None) -> np.ndarray:
    ph = p @ h
    z = ph @ layer.weight + layer.bias
    out = _activate(z, layer.activation)
    if tape is not None:
        w = layer.weight

        def back(g, grads):
            gz = g * (z > 0) if layer.activation == "relu" else g
            grads.add(f"{name}.W", ph.T @ gz)
            grads.add(f"{name}.b", gz.sum(axis=0))
            return p.T @ (gz @ w.T)

        tape.record(back)
    return out


def readout_forward(h, segments, count, readout: str, tape: Tape | None = None) -> np.ndarray:
    sizes = np.bincount(segments, minlength=count).astype(np.float64)
    if readout in ("sum", "mean"):
        pool = np.zeros((count, h.shape[0]))
        pool[segments, np.arange(h.shape[0])] = 1.0
        if readout == "mean":
            pool /= sizes[:, None]
        out = pool @ h
        if tape is not None:
            tape.record(lambda g, grads: pool.T @ g)
        return out
    out = np.full((count, h.shape[1]), -np.inf)
    arg = np.zeros((count, h.shape[1]), dtype=np.int64)
    for k in range(count):
        idx = np.flatnonzero(segments == k)
        block = h[idx]
        pick = np.argmax(block, axis=0)
        arg[k] = idx[pick]
        out[k] = block[pick, np.arange(h.shape[1])]
    if tape is not None:
        def back(g, grads):
            gh = np.zeros_like(h)
            cols = np.arange(h.shape[1])
            for k in range(count):
                np.add.at(gh, (arg[k], cols), g[k])
            return gh

        tape.record(back)
    return out


def encode_batch(enc: AtomEncoder, batch: SubgraphBatch, tape: Tape | None = None) -> np.ndarray:
    """Atoms for every subgraph in ``batch``, shape ``(count, atom_dim)``."""
    if batch.features.shape[1] != enc.in_dim:
        raise ShapeError(f"subgraph features have {batch.features.shape[1]} columns, encoder expects {enc.in_dim}")
    h = batch.features
    for i, layer in enumerate(enc.layers):
        h = layer_forward(layer, batch.propagation, h, f"gcn.layer{i}", tape)
    return readout_forward(h, batch.segments, batch.count, enc.readout, tape)


def encode_atom(enc: AtomEncoder, sg: Subgraph) -> np.ndarray:
    """One atom embedding for a subgraph: stacked layers, then the readout."""
    if sg.node_features.shape[1] != enc.in_dim:
        raise ShapeError(f"subgraph features have {sg.node_features.shape[1]} columns, encoder expects {enc.in_dim}")
    return encode_batch(enc, stack_subgraphs([sg], enc.mode))[0]
