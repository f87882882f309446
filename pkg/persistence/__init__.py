# Persistence module - SQLite result storage
from .sqlite import ResultStore

__all__ = ["ResultStore"]
