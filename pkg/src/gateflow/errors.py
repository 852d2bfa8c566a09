"""Exception types raised by the runtime.

Errors are split roughly by layer: metadata arithmetic, gate lifecycle,
flow control, transport, topology/service, and the sort-merge app's chunk
format.  Everything derives from GateflowError so callers can catch the
whole family at once.
"""


class GateflowError(Exception):
    pass


# --- metadata / arity arithmetic ---

class InvalidArity(GateflowError):
    """Batch or aggregate size outside the valid range (arity must be >= 1)."""


class NestingLimit(GateflowError):
    """Attempt to push a partition frame onto metadata that already has one."""


class NoPartitionFrame(GateflowError):
    """Attempt to pop a partition frame from unpartitioned metadata."""


class InvalidMetadata(GateflowError):
    """Feed metadata inconsistent with the batch it claims to belong to."""


# --- gate lifecycle ---

class GateClosed(GateflowError):
    """The gate was shut down; no further operations will be served."""


class DuplicateFeed(GateflowError):
    """More feeds arrived for a batch than its arity allows."""


class SignatureError(GateflowError):
    """Feed payload names do not match the signature fixed at this gate."""


# --- flow control ---

class ScopeError(GateflowError):
    """Credit link endpoints are not in the same pipeline scope."""


class DeadlockRisk(GateflowError):
    """Configuration that could never make progress (e.g. zero credits)."""


class AccountingError(GateflowError):
    """Credit conservation violated (release beyond the initial grant)."""


# --- transport ---

class ProtocolError(GateflowError):
    """Malformed wire frame.  ``offset`` points at the failing byte."""

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message if offset is None else f"{message} (offset {offset})")
        self.offset = offset


class ConnectionLost(GateflowError):
    """Peer connection dropped; affected batches are failed, not retried."""


class BootstrapError(GateflowError):
    """Cluster startup failed (version mismatch, unreachable peer, bad spec)."""


# --- topology / service ---

class TopologyError(GateflowError):
    """Invalid topology description.  Carries the offending line when parsed."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class NotFound(GateflowError):
    """Unknown ticket or component name."""


class BatchFailed(GateflowError):
    """A request failed; carries the failing stage and cause."""

    def __init__(self, batch_id: int, stage: str, cause: str):
        super().__init__(f"batch {batch_id} failed at stage {stage}: {cause}")
        self.batch_id = batch_id
        self.stage = stage
        self.cause = cause


# --- observability ---

class InvalidWindow(GateflowError):
    """Throughput window must be a positive number of seconds."""


# --- sort-merge app ---

class ChunkFormatError(GateflowError):
    """Chunk file failed validation (bad magic, version, or truncation)."""
