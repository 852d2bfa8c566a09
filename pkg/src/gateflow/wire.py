"""Length-prefixed binary frames carrying feeds, credits, and control
messages between processes.

Layout (all integers little-endian)::

    length   u32   byte count of everything after this field
    kind     u8    1=ENQUEUE 2=DEQ_REQ 3=DEQ_RESP 4=CREDIT 5=SHUTDOWN
                   6=ERROR 7=HELLO
    gate_id  u32   target gate (CREDIT frames carry the link id here)
    depth    u8    metadata frame count (0 for control frames)
    frames   depth * (id u64, arity u64)
    feed_seq u64   2^64-1 encodes "unset"
    npairs   u16   payload pair count
    pairs    npairs * (name_len u16, name bytes, value_len u32, value bytes)

Encode/decode round-trips bit-exactly; any truncated or oversized buffer
decodes to a ProtocolError naming the failing offset.

DEQ_RESP frames answer a dequeue of any mode: the first pair is a
reserved marker ("", u32 member count) followed by the members' pairs
back to back.  Member payloads at one gate share a signature, so the
per-member pair count is the remaining pair count divided by the member
count.  User payload names are non-empty, so the marker cannot collide.
"""
from __future__ import annotations

import struct
from typing import NamedTuple, Union

from .core import AggregateFeed, Feed, FeedMetadata, MetadataFrame
from .errors import ProtocolError

KIND_ENQUEUE = 1
KIND_DEQ_REQ = 2
KIND_DEQ_RESP = 3
KIND_CREDIT = 4
KIND_SHUTDOWN = 5
KIND_ERROR = 6
KIND_HELLO = 7

KIND_NAMES = {
    KIND_ENQUEUE: "ENQUEUE",
    KIND_DEQ_REQ: "DEQ_REQ",
    KIND_DEQ_RESP: "DEQ_RESP",
    KIND_CREDIT: "CREDIT",
    KIND_SHUTDOWN: "SHUTDOWN",
    KIND_ERROR: "ERROR",
    KIND_HELLO: "HELLO",
}

PROTOCOL_VERSION = 1

_SEQ_UNSET = (1 << 64) - 1
_U16_MAX = (1 << 16) - 1
_U32_MAX = (1 << 32) - 1

_HEAD = struct.Struct("<BIB")      # kind, gate_id, depth
_FRAME = struct.Struct("<QQ")      # id, arity
_SEQ = struct.Struct("<Q")
_NPAIRS = struct.Struct("<H")
_NAMELEN = struct.Struct("<H")
_VALLEN = struct.Struct("<I")
_LEN = struct.Struct("<I")


class WireFrame(NamedTuple):
    kind: int
    gate_id: int
    frames: tuple  # tuple[MetadataFrame, ...]
    feed_seq: Union[int, None]
    pairs: tuple   # tuple[tuple[str, bytes], ...]


def encode_frame(frame: WireFrame) -> bytes:
    if frame.kind not in KIND_NAMES:
        raise ProtocolError(f"unknown frame kind {frame.kind}")
    if not 0 <= frame.gate_id <= _U32_MAX:
        raise ProtocolError(f"gate id {frame.gate_id} out of range")
    if len(frame.frames) > 2:
        raise ProtocolError(f"metadata depth {len(frame.frames)} exceeds 2")
    if len(frame.pairs) > _U16_MAX:
        raise ProtocolError(f"too many payload pairs: {len(frame.pairs)}")
    seq = _SEQ_UNSET if frame.feed_seq is None else frame.feed_seq
    parts = [_HEAD.pack(frame.kind, frame.gate_id, len(frame.frames))]
    for fid, arity in frame.frames:
        parts.append(_FRAME.pack(fid, arity))
    parts.append(_SEQ.pack(seq))
    parts.append(_NPAIRS.pack(len(frame.pairs)))
    for name, value in frame.pairs:
        encoded = name.encode("utf-8")
        if len(encoded) > _U16_MAX:
            raise ProtocolError(f"payload name too long: {len(encoded)} bytes")
        if len(value) > _U32_MAX:
            raise ProtocolError(f"payload value too long: {len(value)} bytes")
        parts.append(_NAMELEN.pack(len(encoded)))
        parts.append(encoded)
        parts.append(_VALLEN.pack(len(value)))
        parts.append(value)
    body = b"".join(parts)
    if len(body) > _U32_MAX:
        raise ProtocolError(f"frame body too large: {len(body)} bytes")
    return _LEN.pack(len(body)) + body


class _Reader:
    __slots__ = ("data", "offset")

    def __init__(self, data: bytes, offset: int = 0):
        self.data = data
        self.offset = offset

    def take(self, spec: struct.Struct):
        end = self.offset + spec.size
        if end > len(self.data):
            raise ProtocolError("frame truncated", offset=self.offset)
        values = spec.unpack_from(self.data, self.offset)
        self.offset = end
        return values

    def take_bytes(self, count: int) -> bytes:
        end = self.offset + count
        if end > len(self.data):
            raise ProtocolError("frame truncated", offset=self.offset)
        chunk = self.data[self.offset:end]
        self.offset = end
        return chunk


def decode_body(data: bytes) -> WireFrame:
    """Decode a frame body (everything after the length prefix)."""
    reader = _Reader(data)
    kind, gate_id, depth = reader.take(_HEAD)
    if kind not in KIND_NAMES:
        raise ProtocolError(f"unknown frame kind {kind}", offset=0)
    if depth > 2:
        raise ProtocolError(f"metadata depth {depth} exceeds 2", offset=5)
    frames = []
    for _ in range(depth):
        fid, arity = reader.take(_FRAME)
        frames.append(MetadataFrame(fid, arity))
    (seq,) = reader.take(_SEQ)
    (npairs,) = reader.take(_NPAIRS)
    pairs = []
    for _ in range(npairs):
        (name_len,) = reader.take(_NAMELEN)
        raw_name = reader.take_bytes(name_len)
        try:
            name = raw_name.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ProtocolError("payload name is not valid UTF-8",
                                offset=reader.offset - name_len) from exc
        (value_len,) = reader.take(_VALLEN)
        value = reader.take_bytes(value_len)
        pairs.append((name, value))
    if reader.offset != len(data):
        raise ProtocolError(
            f"{len(data) - reader.offset} trailing bytes after frame",
            offset=reader.offset)
    return WireFrame(kind, gate_id, tuple(frames),
                     None if seq == _SEQ_UNSET else seq, tuple(pairs))


def decode_frame(data: bytes) -> WireFrame:
    """Decode one complete frame including its length prefix."""
    if len(data) < _LEN.size:
        raise ProtocolError("buffer shorter than the length prefix", offset=len(data))
    (length,) = _LEN.unpack_from(data, 0)
    if length != len(data) - _LEN.size:
        raise ProtocolError(
            f"length field says {length} bytes but {len(data) - _LEN.size} follow",
            offset=0)
    return decode_body(data[_LEN.size:])


# --- frame constructors -------------------------------------------------------

def feed_frame(kind: int, gate_id: int, feed: Feed) -> WireFrame:
    return WireFrame(kind, gate_id, feed.metadata.frames, feed.metadata.feed_seq,
                     feed.payload)


def feed_from_frame(frame: WireFrame) -> Feed:
    if not frame.frames:
        raise ProtocolError("feed frame without metadata")
    return Feed(FeedMetadata(frame.frames, frame.feed_seq), frame.pairs)


def deq_resp_frame(gate_id: int, result) -> WireFrame:
    """Encode a Feed or AggregateFeed dequeue result."""
    if isinstance(result, Feed):
        members = (result.payload,)
    else:
        members = tuple(result.members)
    pairs = [("", _VALLEN.pack(len(members)))]
    for member in members:
        pairs.extend(member)
    meta = result.metadata
    return WireFrame(KIND_DEQ_RESP, gate_id, meta.frames, meta.feed_seq, tuple(pairs))


def decode_deq_resp(frame: WireFrame, aggregate: bool):
    """Decode a DEQ_RESP into a Feed (plain gates) or AggregateFeed."""
    if not frame.pairs or frame.pairs[0][0] != "":
        raise ProtocolError("dequeue response without member-count marker")
    (count,) = _VALLEN.unpack(frame.pairs[0][1])
    rest = frame.pairs[1:]
    if count < 1:
        raise ProtocolError(f"dequeue response with member count {count}")
    if len(rest) % count:
        raise ProtocolError(
            f"{len(rest)} payload pairs do not divide into {count} members")
    meta = FeedMetadata(frame.frames, frame.feed_seq)
    if not aggregate:
        if count != 1:
            raise ProtocolError(f"plain dequeue response with {count} members")
        return Feed(meta, rest)
    width = len(rest) // count
    members = tuple(rest[i * width:(i + 1) * width] for i in range(count))
    return AggregateFeed(meta, members)


def hello_frame(device: str, role: str) -> WireFrame:
    pairs = (
        ("protocol_version", struct.pack("<H", PROTOCOL_VERSION)),
        ("device", device.encode("utf-8")),
        ("role", role.encode("utf-8")),
    )
    return WireFrame(KIND_HELLO, 0, (), None, pairs)


def parse_hello(frame: WireFrame) -> tuple[int, str, str]:
    fields = dict(frame.pairs)
    try:
        (version,) = struct.unpack("<H", fields["protocol_version"])
        return version, fields["device"].decode("utf-8"), fields["role"].decode("utf-8")
    except (KeyError, struct.error) as exc:
        raise ProtocolError(f"malformed HELLO: {exc}") from exc


def error_frame(gate_id: int, code: str, message: str,
                frames: tuple = (), batch_id: int | None = None) -> WireFrame:
    meta = frames
    if batch_id is not None and not frames:
        meta = (MetadataFrame(batch_id, 1),)
    pairs = (("code", code.encode("utf-8")), ("message", message.encode("utf-8")))
    return WireFrame(KIND_ERROR, gate_id, meta, None, pairs)


def parse_error(frame: WireFrame) -> tuple[str, str]:
    fields = dict(frame.pairs)
    code = fields.get("code", b"internal").decode("utf-8", "replace")
    message = fields.get("message", b"").decode("utf-8", "replace")
    return code, message
