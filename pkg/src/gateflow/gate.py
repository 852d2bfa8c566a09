"""The gate state machine: batch-aware buffering between stages.

A gate buffers feeds per batch, decides when each batch opens (possibly
bounded by a credit link) and closes (when the expected number of
emissions has been delivered), and serves enqueue/dequeue operations from
a single operation queue.

Serving policy: operations that can proceed are served in arrival order.
An operation that cannot proceed (an enqueue against a full buffer, a
dequeue with no open batch holding a ready emission) parks without
blocking later servable operations; that is what lets an enqueue be
served ahead of an earlier dequeue when nothing is buffered.  Emissions
prefer the open batch with the smallest open order and are FIFO within a
batch.

All state mutation is serialized by one lock per gate.  Blocked callers
park on an event; wakeups, credit notifications, and user callbacks fire
only after the lock is released.
"""
from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import tracing
from .core import AggregateFeed, Feed, FeedMetadata, MetadataFrame, pop_partition_frame
from .errors import (
    DuplicateFeed,
    GateClosed,
    InvalidArity,
    InvalidMetadata,
    SignatureError,
    TopologyError,
)


@dataclass(frozen=True)
class Plain:
    """Dequeue one feed at a time."""


@dataclass(frozen=True)
class Aggregate:
    """Dequeue groups of ``size`` feeds (the final group may be short),
    rewriting the innermost arity to ceil(arity / size)."""

    size: int


@dataclass(frozen=True)
class Partition:
    """Aggregate dequeue that also stamps each group as a fresh sub-batch.

    ``egress_arity`` maps a partition's feed count to the number of feeds
    the consuming local pipeline will eventually emit for it; the gate uses
    it to rewrite the outer batch arity to the batch's total egress count.
    """

    size: int
    egress_arity: Optional[Callable[[int], int]] = None


Mode = Plain | Aggregate | Partition


@dataclass
class GateConfig:
    name: str
    mode: Mode = field(default_factory=Plain)
    capacity: Optional[int] = None

    def validate(self) -> None:
        if isinstance(self.mode, (Aggregate, Partition)):
            if self.mode.size < 1:
                raise InvalidArity(f"gate {self.name}: aggregate size must be >= 1")
            if self.capacity is not None:
                raise TopologyError(
                    f"gate {self.name}: capacity may only be set on a plain-dequeue gate")
        if self.capacity is not None and self.capacity < 1:
            raise TopologyError(f"gate {self.name}: capacity must be >= 1")


class IdAllocator:
    """Monotone id counter shared by batch and partition stamping."""

    def __init__(self, start: int = 1):
        self._next = start
        self._lock = threading.Lock()

    def allocate(self) -> int:
        with self._lock:
            value = self._next
            self._next += 1
            return value


class _Batch:
    __slots__ = ("key", "frame", "frames", "outer_id", "partition_id", "buf", "head",
                 "delivered", "enq_count", "opened", "open_order", "effective",
                 "egress_total")

    def __init__(self, frames: tuple, effective: int, egress_total: int):
        frame = frames[-1]
        self.key = frame.id
        self.frame = frame
        self.frames = frames
        self.outer_id = frames[0].id
        self.partition_id = frame.id if len(frames) > 1 else None
        self.buf: list[Feed] = []
        self.head = 0
        self.delivered = 0
        self.enq_count = 0
        self.opened = False
        self.open_order = -1
        self.effective = effective
        self.egress_total = egress_total

    def buffered(self) -> int:
        return len(self.buf) - self.head


_ENQ = 0
_DEQ = 1


class _Waiter:
    __slots__ = ("kind", "feed", "callback")

    def __init__(self, kind: int, feed, callback):
        self.kind = kind
        self.feed = feed
        self.callback = callback


class Gate:
    """A batch-aware synchronization point between two stages.

    Safe for any number of concurrent enqueuers and dequeuers.  Blocking
    variants (`enqueue`, `dequeue`, ...) park the calling thread; the
    ``*_async`` variants take a ``callback(result, error)`` and never
    block, which is how remote operation serving hooks in.
    """

    def __init__(self, config: GateConfig, *, id_source: IdAllocator | None = None,
                 tracer: tracing.Tracer | None = None, scope_tag: str = ""):
        config.validate()
        self.config = config
        self.name = config.name
        self.scope_tag = scope_tag
        mode = config.mode
        self._plain = isinstance(mode, Plain)
        self._partition = isinstance(mode, Partition)
        self._size = 1 if self._plain else mode.size
        self._egress_arity = None
        if self._partition:
            self._egress_arity = mode.egress_arity or (lambda n: n)
            if id_source is None:
                id_source = IdAllocator(start=1 << 32)
        self._id_source = id_source
        self._capacity = config.capacity
        self._tracer = tracer
        self._lock = threading.Lock()
        self._batches: dict[int, _Batch] = {}
        self._unopened: deque[int] = deque()
        self._open: list[int] = []
        self._pending: deque[_Waiter] = deque()
        self._buffered_total = 0
        self._signature: tuple[str, ...] | None = None
        self._open_seq = 0
        self._closed = False
        self._poisoned: set[int] = set()
        self._credit_link = None
        self._issuers: list = []

    # --- wiring -----------------------------------------------------------

    def bind_credit_link(self, link) -> None:
        if self._credit_link is not None:
            raise TopologyError(f"gate {self.name} is already bounded by a credit link")
        self._credit_link = link

    def add_credit_issuer(self, issuer) -> None:
        self._issuers.append(issuer)

    @property
    def credit_link(self):
        return self._credit_link

    # --- public operations --------------------------------------------------

    def enqueue(self, feed: Feed, timeout: float | None = None) -> None:
        """Insert one feed, atomically with respect to all other gate
        operations.  Blocks while a configured capacity is exhausted."""
        actions: list = []
        with self._lock:
            if not self._pending:
                if self._apply_enqueue(feed, actions):
                    self._fire_later(actions)
                    return
                parked = self._park(_ENQ, feed)
            else:
                parked = self._park(_ENQ, feed)
                self._drain_pending(actions)
        self._fire_later(actions)
        self._await(parked, timeout)

    def dequeue(self, timeout: float | None = None) -> Feed:
        """Remove and return the FIFO head of the preferred open batch."""
        if not self._plain:
            raise ValueError(f"gate {self.name} is not a plain-dequeue gate")
        return self._blocking_dequeue(timeout)

    def aggregate_dequeue(self, timeout: float | None = None) -> AggregateFeed:
        """Remove and return the next group from the preferred open batch."""
        if self._plain or self._partition:
            raise ValueError(f"gate {self.name} is not an aggregate-dequeue gate")
        return self._blocking_dequeue(timeout)

    def partition_dequeue(self, timeout: float | None = None) -> AggregateFeed:
        """Remove the next group and stamp it as a fresh sub-batch."""
        if not self._partition:
            raise ValueError(f"gate {self.name} is not a partition gate")
        return self._blocking_dequeue(timeout)

    def reassembly_enqueue(self, feed: Feed, timeout: float | None = None) -> None:
        """Strip the partition frame and enqueue under the batch frame."""
        meta, _ = pop_partition_frame(feed.metadata)
        self.enqueue(Feed(meta, feed.payload), timeout)

    def enqueue_async(self, feed: Feed, callback) -> None:
        actions: list = []
        with self._lock:
            if not self._pending and self._try_apply(_ENQ, feed, callback, actions):
                pass
            else:
                self._pending.append(_Waiter(_ENQ, feed, callback))
            self._drain_pending(actions)
        self._fire_later(actions)

    def dequeue_async(self, callback) -> None:
        """Mode-appropriate dequeue with a completion callback."""
        actions: list = []
        with self._lock:
            if not self._pending and self._try_apply(_DEQ, None, callback, actions):
                pass
            else:
                self._pending.append(_Waiter(_DEQ, None, callback))
            self._drain_pending(actions)
        self._fire_later(actions)

    def credit_arrived(self) -> None:
        """A credit became available; open a waiting batch if possible."""
        actions: list = []
        with self._lock:
            self._maybe_open(actions)
            self._drain_pending(actions)
        self._fire_later(actions)

    def poison(self, outer_id: int, cause: str = "") -> None:
        """Drop all state for a failed batch and swallow its future feeds.

        Refunds the credit this gate acquired for the batch, if any, since
        the downstream release will never happen.
        """
        actions: list = []
        with self._lock:
            if outer_id in self._poisoned:
                return
            self._poisoned.add(outer_id)
            for key in [k for k, b in self._batches.items() if b.outer_id == outer_id]:
                batch = self._batches.pop(key)
                self._buffered_total -= batch.buffered()
                if batch.opened:
                    self._open.remove(key)
                    if self._credit_link is not None:
                        actions.append(self._credit_link.receive_credit)
                else:
                    self._unopened.remove(key)
            self._maybe_open(actions)
            self._drain_pending(actions)
        self._fire_later(actions)

    def shutdown(self) -> None:
        """Stop accepting work.  Ready emissions are still served; parked
        and future operations fail with GateClosed."""
        actions: list = []
        with self._lock:
            self._closed = True
            self._drain_pending(actions)
            while self._pending:
                w = self._pending.popleft()
                actions.append(lambda w=w: w.callback(None, GateClosed(self.name)))
        self._fire_later(actions)

    # --- introspection ------------------------------------------------------

    def stats(self) -> dict:
        with self._lock:
            return {
                "buffered": self._buffered_total,
                "batches": len(self._batches),
                "open": len(self._open),
                "pending_ops": len(self._pending),
            }

    @property
    def signature(self) -> tuple[str, ...] | None:
        return self._signature

    # --- operation serving ----------------------------------------------------

    def _park(self, kind: int, feed) -> tuple[threading.Event, list]:
        done = threading.Event()
        box: list = []

        def callback(result, error):
            box.append((result, error))
            done.set()

        waiter = _Waiter(kind, feed, callback)
        self._pending.append(waiter)
        return done, box, waiter

    def _await(self, parked, timeout):
        done, box, waiter = parked
        if not done.wait(timeout):
            removed = False
            with self._lock:
                try:
                    self._pending.remove(waiter)
                    removed = True
                except ValueError:
                    pass  # served while we were timing out
            if removed:
                raise TimeoutError(f"gate {self.name}: operation timed out")
            done.wait()
        result, error = box[0]
        if error is not None:
            raise error
        return result

    def _blocking_dequeue(self, timeout):
        actions: list = []
        with self._lock:
            if not self._pending:
                try:
                    result = self._apply_dequeue(actions)
                except Exception:
                    self._fire_later(actions)
                    raise
                if result is not None:
                    self._fire_later(actions)
                    return result
                parked = self._park(_DEQ, None)
            else:
                parked = self._park(_DEQ, None)
                self._drain_pending(actions)
        self._fire_later(actions)
        return self._await(parked, timeout)

    def _try_apply(self, kind: int, feed, callback, actions) -> bool:
        """Attempt an operation immediately; on success or error schedule the
        callback and return True.  Returns False if the op must wait."""
        try:
            if kind == _ENQ:
                if not self._apply_enqueue(feed, actions):
                    return False
                result = None
            else:
                result = self._apply_dequeue(actions)
                if result is None:
                    return False
        except Exception as exc:  # noqa: BLE001 - delivered to the caller
            actions.append(lambda: callback(None, exc))
            return True
        actions.append(lambda: callback(result, None))
        return True

    def _drain_pending(self, actions) -> None:
        progressed = True
        while progressed and self._pending:
            progressed = False
            for idx, waiter in enumerate(self._pending):
                try:
                    if waiter.kind == _ENQ:
                        if not self._apply_enqueue(waiter.feed, actions):
                            continue
                        result = None
                    else:
                        result = self._apply_dequeue(actions)
                        if result is None:
                            continue
                except Exception as exc:  # noqa: BLE001
                    del self._pending[idx]
                    cb = waiter.callback
                    actions.append(lambda cb=cb, exc=exc: cb(None, exc))
                    progressed = True
                    break
                del self._pending[idx]
                cb = waiter.callback
                actions.append(lambda cb=cb, result=result: cb(result, None))
                progressed = True
                break

    @staticmethod
    def _fire_later(actions) -> None:
        for action in actions:
            action()

    # --- state transitions (lock held) -------------------------------------

    def _apply_enqueue(self, feed: Feed, actions) -> bool:
        if self._closed:
            raise GateClosed(self.name)
        meta = feed.metadata
        frames = meta.frames
        if not frames:
            raise InvalidMetadata("feed without metadata frames")
        if self._partition and len(frames) != 1:
            raise InvalidMetadata(
                f"gate {self.name}: partition gates take unpartitioned feeds")
        if frames[0].id in self._poisoned:
            return True  # swallowed: the batch already failed
        signature = feed.signature()
        if self._signature is None:
            self._signature = signature
        elif signature != self._signature:
            raise SignatureError(
                f"gate {self.name}: payload names {signature!r} do not match "
                f"the gate signature {self._signature!r}")
        frame = frames[-1]
        batch = self._batches.get(frame.id)
        if batch is None:
            if frame.arity < 1:
                raise InvalidArity(f"gate {self.name}: batch arity must be >= 1")
            if self._capacity is not None and self._buffered_total >= self._capacity:
                return False
            effective = frame.arity if self._plain else -(-frame.arity // self._size)
            egress_total = 0
            if self._partition:
                f = self._egress_arity
                full, rest = divmod(frame.arity, self._size)
                egress_total = full * f(self._size) + (f(rest) if rest else 0)
            batch = _Batch(frames, effective, egress_total)
            self._batches[frame.id] = batch
            self._unopened.append(frame.id)
        else:
            if batch.frames != frames:
                raise InvalidMetadata(
                    f"gate {self.name}: feed frames {frames} do not match "
                    f"batch frames {batch.frames}")
            if batch.enq_count >= frame.arity:
                raise DuplicateFeed(
                    f"gate {self.name}: batch {frame.id} already received "
                    f"all {frame.arity} feeds")
            if self._capacity is not None and self._buffered_total >= self._capacity:
                return False
        batch.buf.append(feed)
        batch.enq_count += 1
        self._buffered_total += 1
        if self._tracer is not None:
            self._tracer.record(tracing.ENQUEUE, self.name, batch.outer_id,
                                batch.partition_id)
        self._maybe_open(actions)
        return True

    def _maybe_open(self, actions) -> None:
        while self._unopened:
            key = self._unopened[0]
            batch = self._batches[key]
            if self._credit_link is not None:
                if not self._credit_link.acquire():
                    return
                if self._tracer is not None:
                    self._tracer.record(tracing.CREDIT_ACQUIRE, self.name,
                                        batch.outer_id, batch.partition_id)
            self._unopened.popleft()
            batch.opened = True
            batch.open_order = self._open_seq
            self._open_seq += 1
            self._open.append(key)
            if self._tracer is not None:
                self._tracer.record(tracing.BATCH_OPEN, self.name, batch.outer_id,
                                    batch.partition_id, batch.frame.arity)

    def _ready_batch(self):
        for key in self._open:
            batch = self._batches[key]
            available = len(batch.buf) - batch.head
            if available == 0:
                continue
            if self._plain:
                return batch, 1
            remaining = batch.frame.arity - batch.delivered * self._size
            take = remaining if remaining < self._size else self._size
            if available >= take:
                return batch, take
        return None

    def _apply_dequeue(self, actions):
        ready = self._ready_batch()
        if ready is None:
            if self._closed:
                raise GateClosed(self.name)
            return None
        batch, take = ready
        if self._plain:
            feed = batch.buf[batch.head]
            batch.head += 1
            result = feed
            partition_id = batch.partition_id
        else:
            members = tuple(f.payload for f in batch.buf[batch.head:batch.head + take])
            batch.head += take
            if self._partition:
                pid = self._id_source.allocate()
                frames = (MetadataFrame(batch.frame.id, batch.egress_total),
                          MetadataFrame(pid, len(members)))
                partition_id = pid
            else:
                frames = batch.frames[:-1] + (
                    MetadataFrame(batch.frame.id, batch.effective),)
                partition_id = batch.partition_id
            result = AggregateFeed(FeedMetadata(frames, batch.delivered), members)
        if batch.head >= 4096 and batch.head * 2 >= len(batch.buf):
            del batch.buf[:batch.head]
            batch.head = 0
        batch.delivered += 1
        self._buffered_total -= take
        if self._tracer is not None:
            self._tracer.record(tracing.DEQUEUE, self.name, batch.outer_id,
                                partition_id, None if self._plain else take)
        if batch.delivered >= batch.effective:
            self._close_batch(batch, actions)
        return result

    def _close_batch(self, batch: _Batch, actions) -> None:
        assert batch.buffered() == 0, \
            f"gate {self.name}: closing batch {batch.key} with feeds still buffered"
        del self._batches[batch.key]
        self._open.remove(batch.key)
        if self._tracer is not None:
            self._tracer.record(tracing.BATCH_CLOSE, self.name, batch.outer_id,
                                batch.partition_id, batch.delivered)
        for issuer in self._issuers:
            if self._tracer is not None:
                self._tracer.record(tracing.CREDIT_RELEASE, self.name,
                                    batch.outer_id, batch.partition_id)
            actions.append(issuer.release)
