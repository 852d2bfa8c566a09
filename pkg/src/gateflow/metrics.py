"""Offline analysis of run logs: throughput, latency, occupancy, and the
exactly-once accounting checker.

Everything operates on lists of TraceEvents (see tracing.parse_log), in
the order they were flushed, which is consistent with each component's
emission order.
"""
from __future__ import annotations

import math
from collections import defaultdict
from typing import Iterable, Optional, Sequence

from .errors import InvalidWindow, NotFound
from .tracing import (
    BATCH_CLOSE,
    BATCH_OPEN,
    DEQUEUE,
    ENQUEUE,
    IO_BYTES,
    TraceEvent,
)

NS = 1_000_000_000


def throughput(events: Sequence[TraceEvent], window: float,
               component: str | None = None) -> list[tuple[float, float]]:
    """Completed emissions per second over fixed windows.

    Counts Dequeue events (optionally only at ``component``), bucketed into
    ``window``-second intervals from the first such event.  Returns
    (window_start_seconds, rate) pairs; empty input gives an empty series.
    """
    if window <= 0:
        raise InvalidWindow(f"window must be positive, got {window!r}")
    stamps = [ev.timestamp for ev in events
              if ev.kind == DEQUEUE and (component is None or ev.component == component)]
    if not stamps:
        return []
    t0 = min(stamps)
    span_ns = int(window * NS)
    counts: dict[int, int] = defaultdict(int)
    for ts in stamps:
        counts[(ts - t0) // span_ns] += 1
    return [(idx * window, counts[idx] / window) for idx in sorted(counts)]


def _percentile(sorted_values: list[float], q: float) -> float:
    """Nearest-rank percentile on pre-sorted data."""
    if not sorted_values:
        raise ValueError("no samples")
    rank = max(1, math.ceil(q * len(sorted_values)))
    return sorted_values[rank - 1]


def _summarize(samples: list[float]) -> dict:
    values = sorted(samples)
    n = len(values)
    ccdf = [(v, (n - i - 1) / n) for i, v in enumerate(values)]
    return {
        "count": n,
        "mean": sum(values) / n,
        "min": values[0],
        "max": values[-1],
        "p50": _percentile(values, 0.50),
        "p99": _percentile(values, 0.99),
        "ccdf": ccdf,
    }


def batch_latencies(events: Sequence[TraceEvent], component: str) -> list[float]:
    """Open-to-close latency in seconds for every (batch, partition) that
    both opened and closed at ``component``."""
    opened: dict[tuple, int] = {}
    spans: list[float] = []
    for ev in events:
        if ev.component != component:
            continue
        key = (ev.batch_id, ev.partition_id)
        if ev.kind == BATCH_OPEN:
            opened[key] = ev.timestamp
        elif ev.kind == BATCH_CLOSE and key in opened:
            spans.append((ev.timestamp - opened.pop(key)) / NS)
    return spans


def request_latencies(events: Sequence[TraceEvent], ingress: str,
                      egress: str) -> list[float]:
    """Submit-to-complete latency per batch: first Enqueue at the ingress
    gate to BatchClose at the egress gate."""
    submitted: dict[int, int] = {}
    spans: list[float] = []
    for ev in events:
        if ev.kind == ENQUEUE and ev.component == ingress:
            submitted.setdefault(ev.batch_id, ev.timestamp)
        elif ev.kind == BATCH_CLOSE and ev.component == egress:
            if ev.batch_id in submitted:
                spans.append((ev.timestamp - submitted[ev.batch_id]) / NS)
    return spans


def latency_report(events: Sequence[TraceEvent], component: str,
                   *, ingress: str | None = None, egress: str | None = None) -> dict:
    """Latency summary for one component, or for whole requests.

    ``component="request"`` measures submit-to-complete and needs the
    ingress and egress gate names; any other name measures per-(sub)batch
    open-to-close at that component.  Keys: count, mean, min, max, p50,
    p99, and ``ccdf`` as (latency_seconds, fraction_exceeding) points.
    """
    if component == "request":
        if ingress is None or egress is None:
            raise NotFound("request latency needs ingress and egress gate names")
        samples = request_latencies(events, ingress, egress)
    else:
        known = {ev.component for ev in events}
        if component not in known:
            raise NotFound(f"component {component!r} not present in the log")
        samples = batch_latencies(events, component)
    if not samples:
        raise NotFound(f"no completed spans for {component!r}")
    return _summarize(samples)


def occupancy_series(events: Sequence[TraceEvent], component: str) -> list[int]:
    """Buffered-feed count at ``component`` after every event there.

    Dequeue events at aggregate gates remove ``count`` feeds at once; the
    event's count field carries that group size.
    """
    level = 0
    series = []
    for ev in events:
        if ev.component != component:
            continue
        if ev.kind == ENQUEUE:
            level += 1
        elif ev.kind == DEQUEUE:
            level -= ev.count if ev.count is not None else 1
        else:
            continue
        series.append(level)
    return series


def max_open_between(events: Sequence[TraceEvent], upstream: str,
                     downstream: str) -> int:
    """Largest number of batches simultaneously open anywhere between two
    gates: from BatchOpen at the upstream gate to BatchClose downstream."""
    deltas = []
    for ev in events:
        if ev.kind == BATCH_OPEN and ev.component == upstream:
            deltas.append((ev.timestamp, 1))
        elif ev.kind == BATCH_CLOSE and ev.component == downstream:
            deltas.append((ev.timestamp, -1))
    level = peak = 0
    for _, step in deltas:  # flush order already respects causality
        level += step
        peak = max(peak, level)
    return peak


def io_bytes(events: Sequence[TraceEvent], component: str | None = None) -> int:
    """Total bytes recorded by IoBytes events, optionally for one component."""
    return sum(ev.count or 0
               for ev in events
               if ev.kind == IO_BYTES and (component is None or ev.component == component))


def verify_exactly_once(events: Sequence[TraceEvent],
                        aggregate_sizes: dict[str, Optional[int]] | None = None,
                        ) -> list[str]:
    """Accounting closure check over a run log.

    For every batch that closed at a gate, the enqueue count must equal
    the arity recorded at open, and the dequeue count must equal the
    effective arity: the arity itself at plain gates, ceil(arity / S) at
    a gate whose aggregate size S is given in ``aggregate_sizes``.
    Returns a list of human-readable violations (empty means clean).
    """
    sizes = aggregate_sizes or {}
    enq: dict[tuple, int] = defaultdict(int)
    deq: dict[tuple, int] = defaultdict(int)
    opened_arity: dict[tuple, int] = {}
    closed: dict[tuple, int] = {}
    for ev in events:
        key = (ev.component, ev.batch_id, ev.partition_id)
        if ev.kind == ENQUEUE:
            enq[key] += 1
        elif ev.kind == DEQUEUE:
            deq[key] += 1
        elif ev.kind == BATCH_OPEN:
            opened_arity[key] = ev.count
        elif ev.kind == BATCH_CLOSE:
            closed[key] = ev.count
    problems = []
    for key, delivered in closed.items():
        component, batch_id, partition_id = key
        arity = opened_arity.get(key)
        if arity is None:
            problems.append(f"{component}: batch {batch_id} closed without opening")
            continue
        size = sizes.get(component)
        effective = arity if not size else -(-arity // size)
        label = f"{component}: batch {batch_id}" + (
            f" partition {partition_id}" if partition_id is not None else "")
        if enq[key] != arity:
            problems.append(f"{label}: {enq[key]} enqueues for arity {arity}")
        if deq[key] != effective:
            problems.append(f"{label}: {deq[key]} dequeues, expected {effective}")
        if delivered != effective:
            problems.append(f"{label}: closed after {delivered} deliveries, "
                            f"expected {effective}")
    return problems


def throughput_csv(series: Iterable[tuple[float, float]]) -> str:
    lines = ["window_start,throughput"]
    lines += [f"{start:.6f},{rate:.6f}" for start, rate in series]
    return "\n".join(lines) + "\n"


def latency_csv(report: dict) -> str:
    lines = ["percentile,latency"]
    lines += [f"{1.0 - frac:.6f},{value:.9f}" for value, frac in report["ccdf"]]
    return "\n".join(lines) + "\n"
