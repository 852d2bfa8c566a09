"""Feeds, metadata frames, and the arity arithmetic shared by all modules.

A feed is one unit of pipelined data: an ordered payload of named byte
values plus a metadata header.  The header is a stack of (id, arity)
frames: the outermost frame names the original batch, an optional second
frame names the partition currently being processed.  All types here are
immutable and safe to hand between threads.
"""
from __future__ import annotations

from typing import NamedTuple, Optional

from .errors import InvalidArity, NestingLimit, NoPartitionFrame

U64_MAX = (1 << 64) - 1

#: Grouping size that exceeds any realistic batch arity.  A gate configured
#: with this size aggregates a whole (sub)batch into one emission, acting
#: as a barrier.
WHOLE_BATCH = 1 << 62

Payload = tuple  # tuple[tuple[str, bytes], ...]


class MetadataFrame(NamedTuple):
    """One nesting level of batch identity: a unique id and the number of
    feeds remaining in the (sub)batch at this point in the pipeline."""

    id: int
    arity: int


class FeedMetadata(NamedTuple):
    """Frame stack plus a per-feed sequence number.

    Depth is 1 for a feed in an unpartitioned pipeline and 2 while a local
    pipeline processes a partition.  ``feed_seq`` is unique within the
    innermost frame at ingress time; gates ignore it.
    """

    frames: tuple[MetadataFrame, ...]
    feed_seq: Optional[int] = None

    @property
    def innermost(self) -> MetadataFrame:
        return self.frames[-1]

    @property
    def outer_id(self) -> int:
        return self.frames[0].id

    @property
    def depth(self) -> int:
        return len(self.frames)

    def with_seq(self, seq: int) -> "FeedMetadata":
        return FeedMetadata(self.frames, seq)


class Feed(NamedTuple):
    """Metadata plus an ordered payload of (name, value) pairs."""

    metadata: FeedMetadata
    payload: Payload

    def signature(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.payload)


class AggregateFeed(NamedTuple):
    """A group of feeds from one (sub)batch emitted as a single unit.

    ``metadata`` carries the post-aggregation frames (innermost arity
    rewritten to the aggregate count); ``members`` holds the grouped
    payloads in their original FIFO order.
    """

    metadata: FeedMetadata
    members: tuple  # tuple[Payload, ...]


def _check_id(value: int, what: str) -> None:
    if not 0 <= value <= U64_MAX:
        raise InvalidArity(f"{what} {value!r} outside unsigned 64-bit range")


def make_metadata(batch_id: int, arity: int) -> FeedMetadata:
    """Build single-frame metadata for a new batch.

    The sequence number is left unset; it is assigned per feed at ingress.
    """
    _check_id(batch_id, "batch id")
    if not 1 <= arity <= U64_MAX:
        raise InvalidArity(f"batch arity must be >= 1, got {arity!r}")
    return FeedMetadata((MetadataFrame(batch_id, arity),))


def push_partition_frame(meta: FeedMetadata, pid: int, parity: int) -> FeedMetadata:
    """Nest a partition frame under the batch frame.

    Only two nesting levels exist, so pushing onto already-partitioned
    metadata is an error.
    """
    if meta.depth >= 2:
        raise NestingLimit("metadata already carries a partition frame")
    _check_id(pid, "partition id")
    if not 1 <= parity <= U64_MAX:
        raise InvalidArity(f"partition arity must be >= 1, got {parity!r}")
    return FeedMetadata(meta.frames + (MetadataFrame(pid, parity),), meta.feed_seq)


def pop_partition_frame(meta: FeedMetadata) -> tuple[FeedMetadata, MetadataFrame]:
    """Strip the partition frame, returning batch-only metadata and the
    removed frame.  Inverse of :func:`push_partition_frame`."""
    if meta.depth < 2:
        raise NoPartitionFrame("metadata has no partition frame to pop")
    return FeedMetadata(meta.frames[:-1], meta.feed_seq), meta.frames[-1]


def aggregate_arity(arity: int, size: int) -> int:
    """Number of aggregates produced when ``arity`` feeds are grouped into
    runs of ``size`` (the last run may be short): ceil(arity / size)."""
    if arity < 1:
        raise InvalidArity(f"arity must be >= 1, got {arity!r}")
    if size < 1:
        raise InvalidArity(f"aggregate size must be >= 1, got {size!r}")
    return -(-arity // size)


def make_payload(pairs) -> Payload:
    """Normalize and validate a payload: names are non-empty str, values bytes."""
    out = []
    for name, value in pairs:
        if not isinstance(name, str) or not name:
            raise ValueError(f"payload name must be a non-empty string, got {name!r}")
        if not isinstance(value, (bytes, bytearray, memoryview)):
            raise ValueError(f"payload value for {name!r} must be bytes")
        out.append((name, bytes(value)))
    return tuple(out)


def payload_value(payload: Payload, name: str) -> bytes:
    """First value with the given name.  KeyError if absent."""
    for n, v in payload:
        if n == name:
            return v
    raise KeyError(name)
