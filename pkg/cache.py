import threading
from collections import OrderedDict
from typing import Any, Callable, Hashable, Optional


class BoundedCache:
    """Thread-safe LRU map for immutable numeric artifacts (sampled banks, filter norms)."""

    def __init__(self, maxsize: int):
        self._maxsize = maxsize
        self._store: OrderedDict[Hashable, Any] = OrderedDict()
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    @property
    def maxsize(self) -> int:
        return self._maxsize

    def resize(self, maxsize: int) -> None:
        """Apply a configured capacity, evicting the least recently used entries."""
        if maxsize < 1:
            raise ValueError(f"cache size must be positive, got {maxsize}")
        with self._lock:
            self._maxsize = maxsize
            while len(self._store) > self._maxsize:
                self._store.popitem(last=False)

    def get(self, key: Hashable) -> Optional[Any]:
        with self._lock:
            if key not in self._store:
                self.misses += 1
                return None
            self.hits += 1
            self._store.move_to_end(key)
            return self._store[key]

    def set(self, key: Hashable, value: Any) -> Any:
        with self._lock:
            if key in self._store:
                self._store.move_to_end(key)
            self._store[key] = value
            while len(self._store) > self._maxsize:
                self._store.popitem(last=False)
        return value

    def get_or_create(self, key: Hashable, factory: Callable[[], Any]) -> Any:
        cached = self.get(key)
        if cached is not None:
            return cached
        # Two threads may both build the value; both results are identical.
        return self.set(key, factory())

    def __contains__(self, key: Hashable) -> bool:
        with self._lock:
            return key in self._store

    def __len__(self) -> int:
        with self._lock:
            return len(self._store)

    def clear(self) -> None:
        with self._lock:
            self._store.clear()
            self.hits = 0
            self.misses = 0


def clear_all() -> None:
    BANK_CACHE.clear()
    NORM_CACHE.clear()


# resized from BANK_CACHE_SIZE by create_app
BANK_CACHE = BoundedCache(maxsize=64)
NORM_CACHE = BoundedCache(maxsize=4096)
