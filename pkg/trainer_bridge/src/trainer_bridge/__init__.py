"""Reference external-trainer worker for the architecture-search engine.

Speaks the engine's line-delimited JSON protocol on stdin/stdout or a
socket, turns each received architecture into a real torch model, trains
it under the requested trainable scope, and reports validation accuracy.
"""

from .errors import (BridgeError, DatasetUnavailable, MaterializeError,
                     ProtocolViolation)
from .model import MaterializedModel, materialize, param_count
from .protocol import PROTOCOL_VERSION
from .scopes import apply_scope, resolve_scope
from .training import run_evaluation, warmup_schedule

__version__ = "0.1.0"

__all__ = [
    "BridgeError", "DatasetUnavailable", "MaterializeError",
    "ProtocolViolation", "MaterializedModel", "materialize", "param_count",
    "PROTOCOL_VERSION", "apply_scope", "resolve_scope", "run_evaluation",
    "warmup_schedule", "__version__",
]
