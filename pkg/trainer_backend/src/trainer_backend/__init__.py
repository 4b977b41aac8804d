"""Reference trainer backend speaking the line-JSON protocol over stdio.

Fine-tunes a text-to-text model per train request, serves greedy-decoded
predictions from the resulting checkpoints, and keeps one best-validation
checkpoint per job. The model is configurable; the reserved name
"tiny-random" builds a small randomly initialised byte-level model that
needs no downloads, which is what the tests run against.
"""

from .config import BackendConfig, load_config
from .server import TrainerBackend, serve

__all__ = ["BackendConfig", "TrainerBackend", "load_config", "serve"]
__version__ = "0.1.0"
