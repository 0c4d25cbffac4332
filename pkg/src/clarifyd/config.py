"""Settings for the command-line pipeline.

Values merge in precedence order: built-in defaults, then the TOML config
file, then command-line flags. The API token only ever comes from the
environment so it cannot leak into config files or shell history.
"""

from __future__ import annotations

import fcntl
import logging
import os
import sys
import time
from contextlib import contextmanager
from dataclasses import dataclass, fields, replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .retrieval import AGGREGATES, ALLOWED_LIST_SIZES

logger = logging.getLogger(__name__)

TOKEN_ENV = "CLARIFYD_TOKEN"
BACKENDS = ("fallback", "service")

_CONFIG_KEYS = {
    "corpus": "corpus_path",
    "embeddings": "embeddings_path",
    "n": "n",
    "k": "k",
    "context_mode": "context_mode",
    "backend": "backend",
    "service_url": "service_url",
    "sim_tolerance": "sim_tolerance",
    "aggregate": "aggregate",
    "allow_any_n": "allow_any_n",
    "max_context_chars": "max_context_chars",
}


class SettingsError(ValueError):
    pass


@dataclass(slots=True)
class Settings:
    corpus_path: Path | None = None
    embeddings_path: Path | None = None
    n: int = 10
    k: int = 5
    context_mode: int = 1
    backend: str = "fallback"
    service_url: str = "http://127.0.0.1:8701"
    sim_tolerance: float = 1e-6
    aggregate: str = "algorithm1"
    allow_any_n: bool = False
    max_context_chars: int | None = None
    token: str | None = None


def load_settings(config_path: str | Path | None = None) -> Settings:
    settings = Settings()
    if config_path is not None:
        path = Path(config_path)
        if not path.exists():
            raise SettingsError(f"config file not found: {path}")
        with path.open("rb") as handle:
            try:
                data = tomllib.load(handle)
            except tomllib.TOMLDecodeError as exc:
                raise SettingsError(f"bad config {path}: {exc}") from exc
        unknown = sorted(set(data) - set(_CONFIG_KEYS))
        if unknown:
            raise SettingsError(
                f"unknown config keys: {', '.join(unknown)}"
            )
        updates = {}
        for key, attr in _CONFIG_KEYS.items():
            if key not in data:
                continue
            value = data[key]
            if attr.endswith("_path"):
                value = Path(value)
            updates[attr] = value
        settings = replace(settings, **updates)
    settings.token = os.environ.get(TOKEN_ENV) or None
    return settings


def apply_overrides(settings: Settings, **overrides) -> Settings:
    """Overlay non-None flag values onto settings."""
    names = {f.name for f in fields(Settings)}
    updates = {}
    for key, value in overrides.items():
        if key not in names:
            raise SettingsError(f"unknown setting: {key}")
        if value is not None:
            if key.endswith("_path"):
                value = Path(value)
            updates[key] = value
    return replace(settings, **updates)


def validate_settings(
    settings: Settings, *, need_corpus: bool = False, need_embeddings: bool = False
) -> None:
    if settings.n < 1:
        raise SettingsError(f"n must be positive, got {settings.n}")
    if settings.n not in ALLOWED_LIST_SIZES and not settings.allow_any_n:
        raise SettingsError(
            f"n={settings.n} not in {ALLOWED_LIST_SIZES}; "
            "set allow_any_n to override"
        )
    if settings.k < 1:
        raise SettingsError(f"k must be positive, got {settings.k}")
    if settings.k > settings.n:
        raise SettingsError(
            f"k={settings.k} cannot exceed n={settings.n}"
        )
    if settings.context_mode not in (1, 2):
        raise SettingsError(
            f"context_mode must be 1 or 2, got {settings.context_mode}"
        )
    if settings.backend not in BACKENDS:
        raise SettingsError(
            f"backend must be one of {BACKENDS}, got {settings.backend!r}"
        )
    if settings.aggregate not in AGGREGATES:
        raise SettingsError(
            f"aggregate must be one of {AGGREGATES}, got {settings.aggregate!r}"
        )
    if settings.max_context_chars is not None and settings.max_context_chars < 0:
        raise SettingsError("max_context_chars must be non-negative")
    if need_corpus:
        if settings.corpus_path is None:
            raise SettingsError("a corpus path is required (--corpus or config)")
        if not settings.corpus_path.exists():
            raise SettingsError(f"corpus not found: {settings.corpus_path}")
    if need_embeddings:
        if settings.embeddings_path is None:
            raise SettingsError(
                "an embeddings path is required (--embeddings or config)"
            )
        if not settings.embeddings_path.exists():
            raise SettingsError(
                f"embeddings not found: {settings.embeddings_path}"
            )


@contextmanager
def artifact_lock(path: str | Path):
    """Exclusive advisory lock guarding writes to one artifact path."""
    lock_path = Path(str(path) + ".lock")
    with lock_path.open("w") as handle:
        fcntl.flock(handle.fileno(), fcntl.LOCK_EX)
        try:
            yield
        finally:
            fcntl.flock(handle.fileno(), fcntl.LOCK_UN)


@contextmanager
def stage(name: str):
    """Log a stage's wall time to stderr; artifacts stay timestamp-free."""
    start = time.perf_counter()
    try:
        yield
    finally:
        elapsed = time.perf_counter() - start
        print(f"[clarifyd] {name}: {elapsed:.3f}s", file=sys.stderr)
