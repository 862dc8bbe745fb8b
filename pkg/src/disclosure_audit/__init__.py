"""Batch audit of corporate filings: materiality shocks, filing-cadence friction and welfare gaps."""

from .config import PipelineConfig, load_config
from .errors import AuditError, StorageError, ValidationError
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["AuditError", "BACKEND", "PipelineConfig", "StorageError", "ValidationError", "load_config"]
