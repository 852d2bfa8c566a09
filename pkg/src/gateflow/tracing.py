"""Event tracing: lock-light in-memory buffers flushed to a run log file.

Gates, credit links, and stage runners emit events through a shared
Tracer.  Recording appends to a per-component buffer under a tiny lock
(gate-emitted events are already serialized by the gate's own lock), so
tracing never blocks pipeline progress beyond the append itself.

Run log format: one event per line, tab separated, ``-`` for absent
fields::

    timestamp_ns  kind  component  batch  partition  count

``count`` carries the byte count for IoBytes events and the batch arity /
delivered count for BatchOpen / BatchClose events.  Lines appear in a
total order consistent with each component's emission order.
"""
from __future__ import annotations

import itertools
import threading
import time
from typing import NamedTuple, Optional

# Event kinds.
ENQUEUE = "Enqueue"
DEQUEUE = "Dequeue"
BATCH_OPEN = "BatchOpen"
BATCH_CLOSE = "BatchClose"
CREDIT_ACQUIRE = "CreditAcquire"
CREDIT_RELEASE = "CreditRelease"
STAGE_START = "StageStart"
STAGE_END = "StageEnd"
IO_BYTES = "IoBytes"

KINDS = frozenset({
    ENQUEUE, DEQUEUE, BATCH_OPEN, BATCH_CLOSE, CREDIT_ACQUIRE,
    CREDIT_RELEASE, STAGE_START, STAGE_END, IO_BYTES,
})

_HEADER = "# gateflow-trace v1: timestamp_ns kind component batch partition count"


class TraceEvent(NamedTuple):
    timestamp: int
    kind: str
    component: str
    batch_id: Optional[int]
    partition_id: Optional[int]
    count: Optional[int]


class Tracer:
    """Collects events in memory; ``flush`` writes/append them to a file.

    Thread safe.  A single global sequence counter breaks timestamp ties so
    the flushed order is consistent with per-component emission order.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._events: list[tuple[int, int, TraceEvent]] = []
        self._seq = itertools.count()

    def record(self, kind: str, component: str, batch_id: int | None = None,
               partition_id: int | None = None, count: int | None = None) -> None:
        ev = TraceEvent(time.monotonic_ns(), kind, component, batch_id, partition_id, count)
        seq = next(self._seq)
        with self._lock:
            self._events.append((ev.timestamp, seq, ev))

    def events(self) -> list[TraceEvent]:
        """Snapshot of recorded events in stable (timestamp, emission) order."""
        with self._lock:
            items = sorted(self._events)
        return [ev for _, _, ev in items]

    def flush(self, path) -> int:
        """Write all recorded events to ``path``.  Returns the event count."""
        events = self.events()
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(_HEADER + "\n")
            for ev in events:
                fh.write(format_event(ev) + "\n")
        return len(events)

    def clear(self) -> None:
        with self._lock:
            self._events.clear()


def format_event(ev: TraceEvent) -> str:
    def opt(v):
        return "-" if v is None else str(v)

    return "\t".join((str(ev.timestamp), ev.kind, ev.component,
                      opt(ev.batch_id), opt(ev.partition_id), opt(ev.count)))


def parse_event(line: str, lineno: int = 0) -> TraceEvent:
    parts = line.rstrip("\n").split("\t")
    if len(parts) != 6:
        raise ValueError(f"line {lineno}: expected 6 tab-separated fields, got {len(parts)}")
    ts, kind, component, batch, partition, count = parts
    if kind not in KINDS:
        raise ValueError(f"line {lineno}: unknown event kind {kind!r}")

    def opt(v):
        return None if v == "-" else int(v)

    return TraceEvent(int(ts), kind, component, opt(batch), opt(partition), opt(count))


def parse_log(path) -> list[TraceEvent]:
    """Read a run log written by :meth:`Tracer.flush`."""
    events = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip() or line.startswith("#"):
                continue
            events.append(parse_event(line, lineno))
    return events
