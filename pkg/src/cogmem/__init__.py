"""Dual-context memory engine for conversational agents.

Short-term session memory, a scored promotion pipeline into a journaled
long-term store, layered static/dynamic knowledge and a logical/creative
request router, with a baseline mode that keeps nothing across sessions.
"""

from .config import Config
from .engine import Engine, EngineMode, MemoryDump
from .errors import CogMemError

__version__ = "0.1.0"

__all__ = ["CogMemError", "Config", "Engine", "EngineMode", "MemoryDump", "__version__"]
