"""Credit links: a downstream gate bounds how many batches an upstream
gate may hold open.

The credit counter lives with the upstream gate (credits are spent by
opening a batch there).  The downstream gate holds an issuer handle whose
``release`` delivers one credit back; in-process that is a direct call,
across processes it is a CREDIT frame dispatched to the link by id.
"""
from __future__ import annotations

import threading

from .errors import AccountingError, DeadlockRisk, ScopeError

LOCAL = "local"
GLOBAL = "global"

#: Scope tag carried by gates of the global pipeline.
GLOBAL_SCOPE_TAG = "global"


class CreditLink:
    """Counter coupling a downstream gate to the upstream gate it bounds.

    ``acquire`` is called by the upstream gate when it wants to open a
    batch; ``release`` (or a CREDIT frame routed to ``receive_credit``)
    returns the credit when the downstream gate closes that batch.
    """

    def __init__(self, upstream, downstream, initial: int, scope: str,
                 link_id: int = 0):
        if initial < 1:
            raise DeadlockRisk("a credit link with zero initial credits can never open a batch")
        if scope not in (LOCAL, GLOBAL):
            raise ScopeError(f"unknown credit scope {scope!r}")
        if upstream is downstream:
            raise ScopeError("a credit link cannot couple a gate to itself")
        up_tag = getattr(upstream, "scope_tag", None)
        down_tag = getattr(downstream, "scope_tag", None)
        if scope == GLOBAL:
            if up_tag != GLOBAL_SCOPE_TAG or down_tag != GLOBAL_SCOPE_TAG:
                raise ScopeError("global credit links may only join global gates")
        else:
            if up_tag != down_tag or up_tag == GLOBAL_SCOPE_TAG:
                raise ScopeError(
                    f"local credit link endpoints must share one local pipeline, "
                    f"got {up_tag!r} and {down_tag!r}")
        self.upstream = upstream
        self.downstream = downstream
        self.initial = initial
        self.scope = scope
        self.link_id = link_id
        self._credits = initial
        self._lock = threading.Lock()

    @property
    def credits(self) -> int:
        with self._lock:
            return self._credits

    def acquire(self) -> bool:
        """Take one credit if available.  Called by the upstream gate."""
        with self._lock:
            if self._credits > 0:
                self._credits -= 1
                return True
            return False

    def receive_credit(self) -> None:
        """Return one credit and let the upstream gate open a waiting batch."""
        with self._lock:
            if self._credits >= self.initial:
                raise AccountingError(
                    f"credit release beyond initial grant of {self.initial}")
            self._credits += 1
        # Outside the link lock: the gate takes its own lock and may call
        # acquire() again.
        self.upstream.credit_arrived()

    # The in-process issuer handle is the link itself.
    def release(self) -> None:
        self.receive_credit()


def create_link(upstream, downstream, initial: int, scope: str,
                link_id: int = 0) -> CreditLink:
    """Create a credit link and wire it into both gates.

    The upstream gate immediately holds ``initial`` credits.
    """
    link = CreditLink(upstream, downstream, initial, scope, link_id)
    upstream.bind_credit_link(link)
    downstream.add_credit_issuer(link)
    return link
