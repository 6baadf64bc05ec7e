"""Exception hierarchy shared by every gsn module.

Each class carries a ``category`` string; the CLI prints errors as
``error:<category>: <message>``.
"""


class GsnError(Exception):
    category = "gsn"


class ShapeError(GsnError, ValueError):
    category = "shape"


class DomainError(GsnError, ValueError):
    category = "domain"


class ConfigError(GsnError, ValueError):
    category = "config"


class FormatError(GsnError, ValueError):
    category = "format"


class StateError(GsnError, RuntimeError):
    category = "state"


class IngestionError(GsnError, ValueError):
    category = "ingestion"


class EvalError(GsnError, ValueError):
    category = "eval"
