"""Reference adapter for the line-delimited JSON scoring protocol."""

from .adapter import (
    ALL_OPS,
    PROTOCOL_VERSION,
    AdapterConfig,
    conformance_classify,
    conformance_logp_cond,
    conformance_logp_sentence,
    serve,
)

__version__ = "0.1.0"
