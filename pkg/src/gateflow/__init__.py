"""gateflow: a pipelined dataflow runtime with per-request isolation.

Requests enter as batches of feeds and move through stateless stages
separated by gates.  Gates track each batch's lifecycle from its metadata
alone, so any number of requests share one pipeline while each observes
the result it would get running alone.  Credit links bound how many
batches are open at once; a two-level local/global hierarchy scales a
pipeline across processes.
"""

from .core import (
    AggregateFeed,
    Feed,
    FeedMetadata,
    MetadataFrame,
    WHOLE_BATCH,
    aggregate_arity,
    make_metadata,
    make_payload,
    payload_value,
    pop_partition_frame,
    push_partition_frame,
)
from .errors import (
    AccountingError,
    BatchFailed,
    BootstrapError,
    ChunkFormatError,
    ConnectionLost,
    DeadlockRisk,
    DuplicateFeed,
    GateClosed,
    GateflowError,
    InvalidArity,
    InvalidMetadata,
    InvalidWindow,
    NestingLimit,
    NoPartitionFrame,
    NotFound,
    ProtocolError,
    ScopeError,
    SignatureError,
    TopologyError,
)
from .flow import GLOBAL, LOCAL, CreditLink, create_link
from .gate import Aggregate, Gate, GateConfig, IdAllocator, Partition, Plain
from .stage import AGGREGATE, PLAIN, StageDef, StageRunner, TransformRegistry, replicate
from .tracing import Tracer

__all__ = [
    "AggregateFeed", "Feed", "FeedMetadata", "MetadataFrame", "WHOLE_BATCH",
    "aggregate_arity", "make_metadata", "make_payload", "payload_value",
    "pop_partition_frame", "push_partition_frame",
    "AccountingError", "BatchFailed", "BootstrapError", "ChunkFormatError",
    "ConnectionLost", "DeadlockRisk", "DuplicateFeed", "GateClosed",
    "GateflowError", "InvalidArity", "InvalidMetadata", "InvalidWindow",
    "NestingLimit", "NoPartitionFrame", "NotFound", "ProtocolError",
    "ScopeError", "SignatureError", "TopologyError",
    "GLOBAL", "LOCAL", "CreditLink", "create_link",
    "Aggregate", "Gate", "GateConfig", "IdAllocator", "Partition", "Plain",
    "AGGREGATE", "PLAIN", "StageDef", "StageRunner", "TransformRegistry",
    "replicate", "Tracer",
]

__version__ = "0.1.0"
