"""Pipeline configuration: one flat JSON object, every key validated."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .errors import ConfigError


@dataclass(frozen=True)
class PipelineConfig:
    superpixels: int = 64
    compactness: float = 10.0
    slic_iterations: int = 10
    knn_k: int = 8
    clusters: int = 4
    gcn_widths: tuple = (64, 32)
    mode: str = "renormalized"
    readout: str = "mean"
    atoms: int = 16
    lam: float = 0.1
    dict_rounds: int = 20
    use_sparse_codes: bool = False
    optimizer: str = "adam"
    lr: float = 0.001
    max_epochs: int = 100
    batch_size: int = 1
    patience: int = 5
    lr_factor: float = 0.5
    min_delta: float = 1e-4
    min_lr: float = 1e-6
    val_fraction: float = 0.2
    seed: int = 0
    feature_extractor: str = "handcrafted"

    def __post_init__(self):
        object.__setattr__(self, "gcn_widths", tuple(int(w) for w in self.gcn_widths))
        counts = ("superpixels", "slic_iterations", "knn_k", "clusters", "atoms", "batch_size", "patience")
        for name in counts:
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {value!r}")
        for name in ("max_epochs", "dict_rounds", "seed"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 0:
                raise ConfigError(f"{name} must be an integer >= 0, got {value!r}")
        if not self.gcn_widths or min(self.gcn_widths) < 1:
            raise ConfigError(f"gcn_widths must be a non-empty list of positive widths, got {list(self.gcn_widths)}")
        if not self.lr > 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if not self.lam >= 0:
            raise ConfigError(f"lam must be >= 0, got {self.lam}")
        if self.compactness <= 0:
            raise ConfigError(f"compactness must be > 0, got {self.compactness}")
        if not 0 < self.lr_factor < 1:
            raise ConfigError(f"lr_factor must be in (0, 1), got {self.lr_factor}")
        if not 0 <= self.val_fraction < 1:
            raise ConfigError(f"val_fraction must be in [0, 1), got {self.val_fraction}")
        if self.mode not in ("spectral", "renormalized"):
            raise ConfigError(f"mode must be 'spectral' or 'renormalized', got {self.mode!r}")
        if self.readout not in ("mean", "sum", "max"):
            raise ConfigError(f"readout must be mean, sum or max, got {self.readout!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        fe = self.feature_extractor
        if fe != "handcrafted" and not fe.startswith("import:"):
            raise ConfigError(f"feature_extractor must be 'handcrafted' or 'import:<dir>', got {fe!r}")

    @property
    def atom_dim(self) -> int:
        return self.gcn_widths[-1]

    def feature_length(self) -> int:
        z = self.clusters * self.atom_dim
        if self.use_sparse_codes:
            z += self.clusters * self.atoms
        return z

    def to_dict(self) -> dict:
        d = asdict(self)
        d["gcn_widths"] = list(self.gcn_widths)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        kwargs = dict(data)
        for f in fields(cls):
            if f.name in kwargs and f.type == "float" and isinstance(kwargs[f.name], int) \
                    and not isinstance(kwargs[f.name], bool):
                kwargs[f.name] = float(kwargs[f.name])
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(data)
