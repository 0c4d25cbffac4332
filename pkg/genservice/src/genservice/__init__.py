"""Standalone generation and embedding service.

Speaks JSON over HTTP so clients in any language can drive it; the
answer-recommendation CLI points its service backend at this process.
"""

from .app import create_app

__all__ = ["create_app"]
__version__ = "0.1.0"
