from .contracts import (
    BackendReply,
    Kind,
    OracleBackendError,
    OracleError,
    OracleGateway,
    OracleRequest,
    OracleSchemaError,
    UsageRecord,
    validate_response,
)
from .http import HttpBackend
from .mock import EMBED_DIM, Fixtures, MockBackend

__all__ = [
    "BackendReply",
    "EMBED_DIM",
    "Fixtures",
    "HttpBackend",
    "Kind",
    "MockBackend",
    "OracleBackendError",
    "OracleError",
    "OracleGateway",
    "OracleRequest",
    "OracleSchemaError",
    "UsageRecord",
    "validate_response",
]
