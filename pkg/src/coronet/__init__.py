"""Zero-shot video moment localization with commonsense concept graphs.

Pipeline: dynamic moment proposals -> object pseudo-queries -> a localizer
whose video/query features are enhanced by GCN-encoded ConceptNet concepts.
Everything runs on a small float64 autodiff engine (:mod:`coronet.engine`).
"""
__version__ = "0.1.0"

from .errors import (ConfigError, ContractError, CoronetError, DegenerateInputError,
                     EmptyQueryError, NumericError, ParseError, ShapeError, TrainingError,
                     ValidationError)

__all__ = ["__version__", "ConfigError", "ContractError", "CoronetError",
           "DegenerateInputError", "EmptyQueryError", "NumericError", "ParseError", "ShapeError",
           "TrainingError", "ValidationError"]
