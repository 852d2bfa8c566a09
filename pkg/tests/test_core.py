import pytest
from hypothesis import given, strategies as st

from gateflow import (
    InvalidArity,
    MetadataFrame,
    NestingLimit,
    NoPartitionFrame,
    aggregate_arity,
    make_metadata,
    make_payload,
    payload_value,
    pop_partition_frame,
    push_partition_frame,
)

from conftest import group_brute_force


def test_make_metadata_single_frame():
    meta = make_metadata(1, 3)
    assert meta.frames == (MetadataFrame(1, 3),)
    assert meta.feed_seq is None


def test_make_metadata_large_batch():
    # One request's worth of per-chunk work in the reference workload.
    meta = make_metadata(9, 2236)
    assert meta.frames == (MetadataFrame(9, 2236),)


def test_make_metadata_rejects_zero_arity():
    with pytest.raises(InvalidArity):
        make_metadata(1, 0)


def test_push_partition_frame():
    meta = make_metadata(9, 4)
    nested = push_partition_frame(meta, 100, 25)
    assert nested.frames == (MetadataFrame(9, 4), MetadataFrame(100, 25))


def test_push_partition_frame_nesting_limit():
    nested = push_partition_frame(make_metadata(9, 4), 100, 25)
    with pytest.raises(NestingLimit):
        push_partition_frame(nested, 101, 5)


def test_push_partition_frame_singleton():
    nested = push_partition_frame(make_metadata(2, 1), 7, 1)
    assert nested.frames == (MetadataFrame(2, 1), MetadataFrame(7, 1))


def test_pop_partition_frame():
    nested = push_partition_frame(make_metadata(9, 4), 100, 25)
    outer, removed = pop_partition_frame(nested)
    assert outer.frames == (MetadataFrame(9, 4),)
    assert removed == MetadataFrame(100, 25)


def test_pop_partition_frame_requires_depth_two():
    with pytest.raises(NoPartitionFrame):
        pop_partition_frame(make_metadata(9, 4))


@given(st.integers(0, 2**32), st.integers(1, 2**32),
       st.integers(0, 2**32), st.integers(1, 2**32),
       st.integers(0, 2**20))
def test_push_pop_roundtrip(batch_id, arity, pid, parity, seq):
    meta = make_metadata(batch_id, arity).with_seq(seq)
    popped, frame = pop_partition_frame(push_partition_frame(meta, pid, parity))
    assert popped == meta
    assert frame == MetadataFrame(pid, parity)


def test_aggregate_arity_paper_grouping():
    # 2236 operations grouped by 10 leave 224 grouped operations.
    assert aggregate_arity(2236, 10) == 224


def test_aggregate_arity_identity():
    for arity in (1, 7, 1000):
        assert aggregate_arity(arity, 1) == arity


def test_aggregate_arity_barrier_case():
    assert aggregate_arity(4, 10) == 1


def test_aggregate_arity_rejects_bad_inputs():
    with pytest.raises(InvalidArity):
        aggregate_arity(0, 5)
    with pytest.raises(InvalidArity):
        aggregate_arity(5, 0)


@given(st.integers(1, 10_000), st.integers(1, 1_000))
def test_aggregate_arity_matches_grouping_oracle(arity, size):
    runs = group_brute_force(list(range(arity)), size)
    assert aggregate_arity(arity, size) == len(runs)
    last = arity % size
    assert len(runs[-1]) == (last if last else min(size, arity))


def test_make_payload_validates():
    payload = make_payload([("a", b"1"), ("b", bytearray(b"2"))])
    assert payload == (("a", b"1"), ("b", b"2"))
    assert payload_value(payload, "b") == b"2"
    with pytest.raises(ValueError):
        make_payload([("", b"1")])
    with pytest.raises(ValueError):
        make_payload([("a", "not-bytes")])
    with pytest.raises(KeyError):
        payload_value(payload, "missing")
