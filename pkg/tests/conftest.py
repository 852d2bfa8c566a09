import pytest

from gateflow import Feed, Tracer, make_metadata


def group_brute_force(items, size):
    """Independent grouping oracle: greedily slice a list into runs of
    ``size``; the final run holds whatever remains."""
    runs = []
    for start in range(0, len(items), size):
        runs.append(items[start:start + size])
    return runs


def make_feeds(batch_id, arity, payload_fn=None):
    """Build the ``arity`` feeds of one batch, sequenced 0..arity-1."""
    meta = make_metadata(batch_id, arity)
    feeds = []
    for seq in range(arity):
        payload = payload_fn(seq) if payload_fn else (("v", str(seq).encode()),)
        feeds.append(Feed(meta.with_seq(seq), payload))
    return feeds


@pytest.fixture
def tracer():
    return Tracer()
