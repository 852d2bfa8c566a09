import random
import threading

import pytest

from gateflow import (
    AccountingError,
    CreditLink,
    DeadlockRisk,
    Gate,
    GateConfig,
    Plain,
    ScopeError,
    create_link,
)

from conftest import make_feeds


def gate(name, scope_tag="p0"):
    return Gate(GateConfig(name, Plain()), scope_tag=scope_tag)


def test_create_link_grants_initial_credits():
    up, down = gate("in"), gate("out")
    link = create_link(up, down, 3, "local")
    assert link.credits == 3
    assert link.initial == 3


def test_zero_initial_rejected():
    with pytest.raises(DeadlockRisk):
        CreditLink(gate("a"), gate("b"), 0, "local")


def test_scope_validation():
    with pytest.raises(ScopeError):
        create_link(gate("a", "p0"), gate("b", "p1"), 1, "local")
    with pytest.raises(ScopeError):
        create_link(gate("a", "p0"), gate("b", "p0"), 1, "global")
    g = gate("a")
    with pytest.raises(ScopeError):
        create_link(g, g, 1, "local")
    link = create_link(gate("a", "global"), gate("b", "global"), 2, "global")
    assert link.scope == "global"


def test_acquire_decrements_until_exhausted():
    link = create_link(gate("a"), gate("b"), 2, "local")
    assert link.acquire() and link.credits == 1
    assert link.acquire() and link.credits == 0
    assert not link.acquire()


def test_at_most_initial_acquisitions_before_release():
    up, down = gate("in"), gate("out")
    link = create_link(up, down, 3, "local")
    granted = sum(1 for _ in range(10) if link.acquire())
    assert granted == 3
    assert link.credits == 0


def test_release_notifies_upstream():
    up, down = gate("in"), gate("out")
    link = create_link(up, down, 1, "local")
    first = make_feeds(1, 1)[0]
    second = make_feeds(2, 1)[0]
    up.enqueue(first)
    up.enqueue(second)
    assert up.stats()["open"] == 1  # second batch blocked on credits
    up.dequeue()
    down.enqueue(first)
    down.dequeue()  # close at downstream releases the credit
    assert link.credits == 0  # immediately consumed opening batch 2
    assert up.stats()["open"] == 1
    assert up.dequeue() is second


def test_double_release_is_accounting_error():
    link = create_link(gate("a"), gate("b"), 2, "local")
    assert link.acquire()
    link.release()
    with pytest.raises(AccountingError):
        link.release()


def test_interleaved_schedules_conserve_credits():
    rng = random.Random(7)
    for _ in range(50):
        initial = rng.randint(1, 5)
        link = CreditLink(gate("a"), gate("b"), initial, "local")
        outstanding = 0
        for _ in range(200):
            if rng.random() < 0.5:
                if link.acquire():
                    outstanding += 1
                    assert outstanding <= initial
            elif outstanding:
                outstanding -= 1
                link.release()
            assert link.credits == initial - outstanding
        while outstanding:
            link.release()
            outstanding -= 1
        assert link.credits == initial


def test_concurrent_acquire_release_never_exceeds_bound():
    link = CreditLink(gate("a"), gate("b"), 3, "local")
    peak = []
    lock = threading.Lock()
    level = [0]

    def worker():
        rng = random.Random(threading.get_ident())
        held = 0
        for _ in range(300):
            if rng.random() < 0.5:
                if link.acquire():
                    held += 1
                    with lock:
                        level[0] += 1
                        peak.append(level[0])
            elif held:
                held -= 1
                with lock:
                    level[0] -= 1
                link.release()
        while held:
            held -= 1
            with lock:
                level[0] -= 1
            link.release()

    threads = [threading.Thread(target=worker, daemon=True) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join(10)
        assert not t.is_alive()
    assert max(peak) <= 3
    assert link.credits == 3
