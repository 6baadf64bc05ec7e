"""Graph sub-graph network (GSN) image classification.

Superpixel graphs, per-image k-means subgraphs, GCN atom embeddings, an
l1 sparse-coding dictionary and a softmax classifier over concatenated atoms.
"""
from .errors import (ConfigError, DomainError, EvalError, FormatError, GsnError, IngestionError,
                     ShapeError, StateError)
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "ConfigError", "DomainError", "EvalError", "FormatError", "GsnError",
           "IngestionError", "ShapeError", "StateError", "__version__"]
