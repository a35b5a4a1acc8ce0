from __future__ import annotations

import threading
from typing import Generic, TypeVar

T = TypeVar("T")


class LatestValue(Generic[T]):
    """Single-slot mailbox: writers overwrite, readers get the newest value and never block on a producer."""

    def __init__(self, value: T | None = None):
        self._lock = threading.Lock()
        self._value = value
        self._version = 0 if value is None else 1

    def put(self, value: T) -> None:
        with self._lock:
            self._value = value
            self._version += 1

    def get(self) -> tuple[T | None, int]:
        """Newest value and its version; the version grows by one per `put`."""
        with self._lock:
            return self._value, self._version
