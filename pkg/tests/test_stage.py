import threading

import pytest

from gateflow import (
    AGGREGATE,
    Aggregate,
    Gate,
    GateConfig,
    InvalidArity,
    Plain,
    StageDef,
    StageRunner,
    TransformRegistry,
    replicate,
)

from conftest import make_feeds


def run_pipeline(stage, feeds, upstream=None, downstream=None):
    """Drive feeds through one stage and return the downstream gate."""
    upstream = upstream or Gate(GateConfig("up", Plain()))
    downstream = downstream or Gate(GateConfig("down", Plain()))
    runners = replicate(stage, upstream, downstream)
    threads = [r.start() for r in runners]
    for f in feeds:
        upstream.enqueue(f)
    upstream.shutdown()
    for t in threads:
        t.join(10)
        assert not t.is_alive()
    return downstream, runners


def test_identity_transform_passes_payload_and_metadata():
    stage = StageDef("ident", lambda payload: payload)
    feeds = make_feeds(1, 3)
    downstream, _ = run_pipeline(stage, feeds)
    for f in feeds:
        out = downstream.dequeue()
        assert out.payload == f.payload
        assert out.metadata == f.metadata


def test_aggregate_stage_runs_once_per_group():
    upstream = Gate(GateConfig("up", Aggregate(10)))
    stage = StageDef("gather", lambda members: (("n", str(len(members)).encode()),),
                     input_mode=AGGREGATE)
    feeds = make_feeds(1, 2236)
    downstream, runners = run_pipeline(stage, feeds, upstream=upstream)
    assert sum(r.processed for r in runners) == 224
    sizes = [int(downstream.dequeue().payload[0][1]) for _ in range(224)]
    assert sizes == [10] * 223 + [6]


def test_replica_counts_sum_to_feed_count():
    stage = StageDef("ident", lambda payload: payload, replicas=2)
    feeds = make_feeds(1, 4)
    _, runners = run_pipeline(stage, feeds)
    assert len(runners) == 2
    assert sum(r.processed for r in runners) == 4


def test_replicas_share_no_state_output_multiset_stable():
    def double(payload):
        (name, value), = payload
        return ((name, value * 2),)

    expected = None
    for replicas in (1, 4):
        stage = StageDef("double", double, replicas=replicas)
        feeds = make_feeds(1, 12, payload_fn=lambda seq: (("v", bytes([seq])),))
        downstream, _ = run_pipeline(stage, feeds)
        outputs = sorted(downstream.dequeue().payload for _ in range(12))
        if expected is None:
            expected = outputs
        else:
            assert outputs == expected


def test_replication_allows_concurrent_feeds_in_flight():
    gate_in = Gate(GateConfig("up", Plain()))
    gate_out = Gate(GateConfig("down", Plain()))
    barrier = threading.Barrier(4, timeout=5)

    def rendezvous(payload):
        barrier.wait()  # only passes if 4 transforms run at once
        return payload

    stage = StageDef("rendezvous", rendezvous, replicas=4)
    runners = replicate(stage, gate_in, gate_out)
    threads = [r.start() for r in runners]
    for f in make_feeds(1, 4):
        gate_in.enqueue(f)
    for _ in range(4):
        gate_out.dequeue(timeout=5)
    gate_in.shutdown()
    for t in threads:
        t.join(5)


def test_zero_replicas_rejected():
    with pytest.raises(InvalidArity):
        StageDef("s", lambda p: p, replicas=0)
    with pytest.raises(InvalidArity):
        replicate(StageDef("s", lambda p: p), Gate(GateConfig("a", Plain())),
                  Gate(GateConfig("b", Plain())), n=0)


def test_transform_failure_fails_batch_via_sink():
    failures = []
    upstream = Gate(GateConfig("up", Plain()))
    downstream = Gate(GateConfig("down", Plain()))

    def sink(batch_id, stage_name, exc):
        failures.append((batch_id, stage_name, str(exc)))
        upstream.poison(batch_id, str(exc))
        downstream.poison(batch_id, str(exc))

    def explode_on_two(payload):
        if payload[0][1] == b"1":
            raise RuntimeError("bad feed")
        return payload

    stage = StageDef("explode", explode_on_two)
    runner = StageRunner(stage, upstream, downstream, failure_sink=sink)
    thread = runner.start()
    bad = make_feeds(1, 3)
    good = make_feeds(2, 1)
    for f in bad:
        upstream.enqueue(f)
    for f in good:
        upstream.enqueue(f)
    out = downstream.dequeue(timeout=5)
    assert out.metadata.outer_id in (1, 2)
    # The poisoned batch never completes downstream; the good batch does.
    survivors = {out.metadata.outer_id}
    while downstream.stats()["buffered"]:
        survivors.add(downstream.dequeue().metadata.outer_id)
    assert failures and failures[0][0] == 1 and failures[0][1] == "explode"
    assert 2 in survivors or out.metadata.outer_id == 2
    upstream.shutdown()
    thread.join(5)


def test_run_once_returns_false_after_shutdown():
    upstream = Gate(GateConfig("up", Plain()))
    downstream = Gate(GateConfig("down", Plain()))
    runner = StageRunner(StageDef("ident", lambda p: p), upstream, downstream)
    upstream.shutdown()
    assert runner.run_once() is False


def test_registry_round_trip():
    registry = TransformRegistry()
    registry.register("ident", lambda p: p)
    assert "ident" in registry
    assert registry.get("ident")((("a", b"1"),)) == (("a", b"1"),)
    with pytest.raises(ValueError):
        registry.register("ident", lambda p: p)
    with pytest.raises(KeyError):
        registry.get("missing")
