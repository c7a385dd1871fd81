"""Revisioned key-value store with prefix watches.

Every write takes the store lock, gets the next revision and is appended to
the history log; watchers receive events through their own bounded buffer,
filled while the lock is held, so each watcher sees events in commit order
and a slow watcher can never block a writer (it overflows instead).
"""
from __future__ import annotations

import json
import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Iterator, NamedTuple, Optional, Protocol

from satnet.errors import StaleWatchError, ValidationError, WatchOverflowError
from satnet.serialization import canonical_json

NAMESPACES = ("machines/", "nodes/", "links/", "apps/")
DEFAULT_WATCH_BUFFER = 65536


def check_key(key: str) -> str:
    if not isinstance(key, str) or not key:
        raise ValidationError("key must be a non-empty string", field="key")
    for ns in NAMESPACES:
        if key.startswith(ns) and len(key) > len(ns):
            return key
    raise ValidationError(f"key {key!r} is not under one of {', '.join(NAMESPACES)}",
                          field="key")


@dataclass(frozen=True)
class KeyedRecord:
    key: str
    value: str  # canonical JSON
    revision: int


@dataclass(frozen=True)
class WatchEvent:
    key: str
    kind: str  # "put" | "delete"
    value: Optional[str]
    revision: int

    def decoded(self) -> Any:
        return None if self.value is None else json.loads(self.value)


class GetResult(NamedTuple):
    value: Any
    revision: int


class Watcher:
    """Ordered stream of events for one prefix. Iterate, or call get/drain."""

    def __init__(self, store: "StateStore", prefix: str, capacity: int):
        self.prefix = prefix
        self.capacity = capacity
        self._store = store
        self._buf: deque[WatchEvent] = deque()
        self._cond = threading.Condition()
        self._overflowed = False
        self._closed = False

    def _offer(self, event: WatchEvent) -> None:
        # called with the store lock held; never blocks
        with self._cond:
            if self._closed or self._overflowed:
                return
            if len(self._buf) >= self.capacity:
                self._overflowed = True
                self._buf.clear()
            else:
                self._buf.append(event)
            self._cond.notify_all()

    def _backfill(self, events) -> None:
        with self._cond:
            self._buf.extend(events)

    def get(self, timeout: Optional[float] = None) -> Optional[WatchEvent]:
        """Next event, waiting up to ``timeout`` seconds; None on timeout/close."""
        with self._cond:
            if not self._cond.wait_for(
                    lambda: self._buf or self._overflowed or self._closed, timeout):
                return None
            if self._overflowed:
                raise WatchOverflowError(
                    f"watch on {self.prefix!r} overflowed its {self.capacity}-event buffer")
            if self._buf:
                return self._buf.popleft()
            return None

    def drain(self) -> list[WatchEvent]:
        """Every buffered event, without waiting."""
        with self._cond:
            if self._overflowed:
                raise WatchOverflowError(
                    f"watch on {self.prefix!r} overflowed its {self.capacity}-event buffer")
            out = list(self._buf)
            self._buf.clear()
            return out

    def close(self) -> None:
        self._store._unsubscribe(self)
        with self._cond:
            self._closed = True
            self._cond.notify_all()

    def __iter__(self) -> Iterator[WatchEvent]:
        while True:
            ev = self.get()
            if ev is None:
                return
            yield ev

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class StateStoreProtocol(Protocol):
    """Contract shared by the in-process store and any external adapter."""

    def put(self, key: str, value: Any) -> int: ...
    def get(self, key: str) -> Optional[GetResult]: ...
    def get_prefix(self, prefix: str) -> list[tuple[str, Any, int]]: ...
    def delete(self, key: str) -> int: ...
    def watch(self, prefix: str, from_revision: Optional[int] = None) -> Watcher: ...
    @property
    def revision(self) -> int: ...


class StateStore:
    """In-process implementation of :class:`StateStoreProtocol`."""

    def __init__(self, watch_buffer: int = DEFAULT_WATCH_BUFFER):
        self._lock = threading.RLock()
        self._data: dict[str, KeyedRecord] = {}
        self._log: list[WatchEvent] = []
        self._compacted = 0  # revisions <= this are gone from the log
        self._revision = 0
        self._watchers: list[Watcher] = []
        self.watch_buffer = watch_buffer

    @property
    def revision(self) -> int:
        return self._revision

    def _commit(self, key, kind, value) -> int:
        self._revision += 1
        ev = WatchEvent(key, kind, value, self._revision)
        self._log.append(ev)
        for w in self._watchers:
            if key.startswith(w.prefix):
                w._offer(ev)
        return self._revision

    def put(self, key: str, value: Any) -> int:
        check_key(key)
        encoded = canonical_json(value)
        with self._lock:
            rev = self._commit(key, "put", encoded)
            self._data[key] = KeyedRecord(key, encoded, rev)
            return rev

    def delete(self, key: str) -> int:
        check_key(key)
        with self._lock:
            if key not in self._data:
                return self._revision
            del self._data[key]
            return self._commit(key, "delete", None)

    def get(self, key: str) -> Optional[GetResult]:
        with self._lock:
            rec = self._data.get(key)
        return None if rec is None else GetResult(json.loads(rec.value), rec.revision)

    def get_prefix(self, prefix: str) -> list[tuple[str, Any, int]]:
        with self._lock:
            recs = [r for k, r in self._data.items() if k.startswith(prefix)]
        return [(r.key, json.loads(r.value), r.revision) for r in sorted(recs, key=lambda r: r.key)]

    def snapshot(self, prefix: str = "") -> tuple[int, list[tuple[str, Any, int]]]:
        """Atomic (revision, live records under prefix), for resyncs."""
        with self._lock:
            return self._revision, self.get_prefix(prefix)

    def history(self, prefix: str = "", from_revision: int = 1) -> list[WatchEvent]:
        with self._lock:
            return [e for e in self._log if e.revision >= from_revision and e.key.startswith(prefix)]

    def watch(self, prefix: str, from_revision: Optional[int] = None,
              capacity: Optional[int] = None) -> Watcher:
        """Stream events under ``prefix`` with revision >= ``from_revision``.

        Without ``from_revision`` only events committed after the call are seen.
        """
        with self._lock:
            start = self._revision + 1 if from_revision is None else from_revision
            if start < 1 or start > self._revision + 1:
                raise ValidationError(
                    f"from_revision {start} outside [1, {self._revision + 1}]",
                    field="from_revision")
            if start <= self._compacted:
                raise StaleWatchError(
                    f"revision {start} was compacted (compacted through {self._compacted})")
            w = Watcher(self, prefix, capacity or self.watch_buffer)
            w._backfill(e for e in self._log[start - self._compacted - 1:]
                        if e.key.startswith(prefix))
            self._watchers.append(w)
            return w

    def _unsubscribe(self, watcher: Watcher) -> None:
        with self._lock:
            if watcher in self._watchers:
                self._watchers.remove(watcher)

    def compact(self, revision: int) -> None:
        """Drop history at or below ``revision``; later watches from there go stale."""
        with self._lock:
            revision = min(revision, self._revision)
            if revision <= self._compacted:
                return
            self._log = self._log[revision - self._compacted:]
            self._compacted = revision


@dataclass(frozen=True)
class ApplicationRecord:
    app_id: str
    node_id: str
    launch_timestamp: float
    as_index: Optional[int] = None
    user_defined: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.launch_timestamp >= 0:
            raise ValidationError(
                f"launch_timestamp must be >= 0, got {self.launch_timestamp}",
                field="launch_timestamp")

    def to_dict(self) -> dict:
        return {"app_id": self.app_id, "node_id": self.node_id,
                "launch_timestamp": self.launch_timestamp, "as_index": self.as_index,
                "user_defined": dict(self.user_defined)}
