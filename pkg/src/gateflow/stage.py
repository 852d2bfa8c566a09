"""Stage definitions and the runner loops that drive them.

A stage is a stateless transform between two gates.  Runners carry no
application logic: each one repeatedly dequeues from the upstream gate,
invokes the transform on the payload(s), reattaches the metadata
untouched, and enqueues the result downstream.  Replicating a stage just
starts more runners against the same pair of gates.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Optional

from . import tracing
from .core import Feed, make_payload
from .errors import GateClosed, InvalidArity

PLAIN = "plain"
AGGREGATE = "aggregate"


@dataclass(frozen=True)
class StageDef:
    """A named transform plus how it consumes its upstream gate.

    Plain transforms map one payload to one payload; aggregate transforms
    map the member payload list of one aggregate to one payload.  Either
    way exactly one feed leaves the stage per input, so batch arity stays
    statically known downstream.  Transforms must be safe to call from
    several runners at once.
    """

    name: str
    transform: Callable
    input_mode: str = PLAIN
    replicas: int = 1

    def __post_init__(self):
        if self.input_mode not in (PLAIN, AGGREGATE):
            raise ValueError(f"stage {self.name}: unknown input mode {self.input_mode!r}")
        if self.replicas < 1:
            raise InvalidArity(f"stage {self.name}: replicas must be >= 1")


class StageRunner:
    """One execution loop for a stage replica.

    Processes at most one feed at a time.  A transform exception fails the
    feed's whole batch through ``failure_sink(outer_id, stage, exc)``;
    the runner keeps serving other batches.
    """

    def __init__(self, stage: StageDef, upstream, downstream, replica_index: int = 0,
                 *, failure_sink=None, tracer: tracing.Tracer | None = None,
                 name: str | None = None):
        self.stage = stage
        self.upstream = upstream
        self.downstream = downstream
        self.replica_index = replica_index
        self.name = name or stage.name
        self._failure_sink = failure_sink
        self._tracer = tracer
        self._thread: Optional[threading.Thread] = None
        self.processed = 0

    def run_once(self) -> bool:
        """Process one feed.  False when the upstream gate is shut down and
        drained or the downstream gate has closed."""
        aggregate = self.stage.input_mode == AGGREGATE
        try:
            if aggregate:
                item = self.upstream.aggregate_dequeue()
            else:
                item = self.upstream.dequeue()
        except GateClosed:
            return False
        meta = item.metadata
        if self._tracer is not None:
            outer = meta.frames[0].id
            inner = meta.frames[-1].id if len(meta.frames) > 1 else None
            self._tracer.record(tracing.STAGE_START, self.name, outer, inner)
        try:
            if aggregate:
                payload = self.stage.transform(list(item.members))
            else:
                payload = self.stage.transform(item.payload)
            payload = make_payload(payload)
        except Exception as exc:  # noqa: BLE001 - user transform failed
            if self._failure_sink is not None:
                self._failure_sink(meta.frames[0].id, self.name, exc)
                return True
            raise
        finally:
            if self._tracer is not None:
                self._tracer.record(tracing.STAGE_END, self.name, meta.frames[0].id,
                                    meta.frames[-1].id if len(meta.frames) > 1 else None)
        try:
            self.downstream.enqueue(Feed(meta, payload))
        except GateClosed:
            return False
        self.processed += 1
        return True

    def run_loop(self) -> None:
        while self.run_once():
            pass

    def start(self) -> threading.Thread:
        thread = threading.Thread(
            target=self.run_loop,
            name=f"stage-{self.name}#{self.replica_index}",
            daemon=True,
        )
        self._thread = thread
        thread.start()
        return thread

    def join(self, timeout: float | None = None) -> None:
        if self._thread is not None:
            self._thread.join(timeout)


def replicate(stage: StageDef, upstream, downstream, n: int | None = None,
              *, failure_sink=None, tracer=None, name: str | None = None,
              ) -> list[StageRunner]:
    """Create ``n`` independent runners sharing the same pair of gates."""
    count = stage.replicas if n is None else n
    if count < 1:
        raise InvalidArity(f"stage {stage.name}: replica count must be >= 1")
    return [
        StageRunner(stage, upstream, downstream, i, failure_sink=failure_sink,
                    tracer=tracer, name=name)
        for i in range(count)
    ]


class TransformRegistry:
    """Named transforms referenced by topology files."""

    def __init__(self):
        self._transforms: dict[str, Callable] = {}

    def register(self, name: str, transform: Callable) -> None:
        if name in self._transforms:
            raise ValueError(f"transform {name!r} is already registered")
        self._transforms[name] = transform

    def get(self, name: str) -> Callable:
        try:
            return self._transforms[name]
        except KeyError:
            raise KeyError(f"no transform registered under {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._transforms
