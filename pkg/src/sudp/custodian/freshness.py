"""Bounded pool of single-use freshness tokens."""

from __future__ import annotations

import threading

from sudp import crypto_profile as cp
from sudp.errors import PoolExhausted

DEFAULT_TTL = 300.0
DEFAULT_CAPACITY = 1024
TOKEN_LEN = 32


class FreshnessPool:
    def __init__(self, capacity: int = DEFAULT_CAPACITY, ttl: float = DEFAULT_TTL):
        if capacity < 1 or ttl <= 0:
            raise ValueError("capacity and ttl must be positive")
        self.capacity = capacity
        self.ttl = ttl
        self._issued: dict[bytes, float] = {}
        self._lock = threading.Lock()

    def _purge(self, now: float) -> None:
        dead = [r for r, t in self._issued.items() if now - t >= self.ttl]
        for r in dead:
            del self._issued[r]

    def issue(self, now: float) -> bytes:
        with self._lock:
            self._purge(now)
            if len(self._issued) >= self.capacity:
                raise PoolExhausted()
            r = cp.csprng(TOKEN_LEN)
            self._issued[r] = now
            return r

    def consume(self, r: bytes, now: float) -> bool:
        """Remove ``r``. True only if it was outstanding and unexpired."""
        with self._lock:
            issued = self._issued.pop(bytes(r), None)
            return issued is not None and now - issued < self.ttl

    def is_outstanding(self, r: bytes, now: float) -> bool:
        with self._lock:
            issued = self._issued.get(bytes(r))
            return issued is not None and now - issued < self.ttl

    def __len__(self) -> int:
        return len(self._issued)
